//! Truncated product basis |n; n₋⟩, operators, atom Hamiltonian, parity and exact levels.
//!
//! Two solvers share one set of conventions:
//!
//! * the generic path assembles the complex Hermitian Hamiltonian in the
//!   original basis and classifies eigenvectors by their parity expectation;
//! * the sector path works in the real gauge |n₋⟩′ = cₙ₋|n₋⟩ with
//!   cₙ₋ = (−i)^n₋ e^{i n₋ Δ/2}, where the Hamiltonian is real symmetric and
//!   parity is the reflection n₋ → −n₋, so even and odd blocks are solved apart.
//!
//! Vectors handed out in [`AtomLevels`] are always in the original basis with
//! the phase fixed by [`canonical_phase`].

use faer::{Mat, MatRef, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{FluxtuneError, Result};
use crate::params::DerivedScales;
use crate::perturb::CouplingSet;
use crate::schedule::FluxPoint;

pub type C64 = Complex64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Truncated basis: Fock states n = 0..n_fock−1, charge states n₋ = −n_charge..n_charge.
///
/// Flat index is row-major in (n, n₋) with n₋ ascending.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    n_fock: usize,
    n_charge: usize,
}

impl BasisSpec {
    pub fn new(n_fock: usize, n_charge: usize) -> Result<Self> {
        if n_fock < 2 {
            return Err(FluxtuneError::Basis(format!("n_fock must be >= 2, got {n_fock}")));
        }
        if n_charge < 1 {
            return Err(FluxtuneError::Basis(format!("n_charge must be >= 1, got {n_charge}")));
        }
        Ok(Self { n_fock, n_charge })
    }

    pub fn n_fock(&self) -> usize {
        self.n_fock
    }

    pub fn n_charge(&self) -> usize {
        self.n_charge
    }

    /// Number of charge states 2M+1.
    pub fn charge_dim(&self) -> usize {
        2 * self.n_charge + 1
    }

    pub fn dim(&self) -> usize {
        self.n_fock * self.charge_dim()
    }

    pub fn index(&self, n: usize, n_minus: i64) -> Option<usize> {
        let m = self.n_charge as i64;
        if n >= self.n_fock || n_minus.abs() > m {
            return None;
        }
        Some(n * self.charge_dim() + (n_minus + m) as usize)
    }

    pub fn state(&self, index: usize) -> (usize, i64) {
        let k = self.charge_dim();
        (index / k, (index % k) as i64 - self.n_charge as i64)
    }
}

/// Builds a basis, rejecting cutoffs below (2, 1).
pub fn build_basis(n_fock: usize, n_charge: usize) -> Result<BasisSpec> {
    BasisSpec::new(n_fock, n_charge)
}

/// Dense complex Hermitian matrix on a [`BasisSpec`].
#[derive(Debug, Clone)]
pub struct HermitianOperator {
    basis: BasisSpec,
    mat: Mat<C64>,
}

impl HermitianOperator {
    /// Wraps `mat`, requiring max |H − H†| ≤ 1e-12·max|H|.
    pub fn new(basis: BasisSpec, mat: Mat<C64>) -> Result<Self> {
        let d = basis.dim();
        if mat.nrows() != d || mat.ncols() != d {
            return Err(FluxtuneError::Dimension {
                expected: d,
                got: mat.nrows().max(mat.ncols()),
            });
        }
        let defect = hermiticity_defect(mat.as_ref());
        let tolerance = 1e-12 * max_abs(mat.as_ref());
        if defect > tolerance {
            return Err(FluxtuneError::NotHermitian { defect, tolerance });
        }
        Ok(Self { basis, mat })
    }

    pub fn basis(&self) -> BasisSpec {
        self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn mat(&self) -> MatRef<'_, C64> {
        self.mat.as_ref()
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(self.mat.as_ref())
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        matvec(self.mat.as_ref(), v)
    }

    /// ‖[A, B]‖_F.
    pub fn commutator_norm(&self, other: &HermitianOperator) -> f64 {
        let ab = &self.mat * &other.mat;
        let ba = &other.mat * &self.mat;
        frobenius((ab - ba).as_ref())
    }
}

/// max |A[i][j] − conj(A[j][i])|.
pub fn hermiticity_defect(a: MatRef<'_, C64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

fn max_abs(a: MatRef<'_, C64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

/// Frobenius norm of a complex matrix.
pub fn frobenius(a: MatRef<'_, C64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

fn matvec(a: MatRef<'_, C64>, v: &[C64]) -> Vec<C64> {
    let mut out = vec![ZERO; a.nrows()];
    for (j, &vj) in v.iter().enumerate() {
        if vj == ZERO {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += a[(i, j)] * vj;
        }
    }
    out
}

fn dot(bra: &[C64], ket: &[C64]) -> C64 {
    bra.iter().zip(ket).map(|(b, k)| b.conj() * k).sum()
}

/// ⟨bra|op|ket⟩.
pub fn transition_element(op: MatRef<'_, C64>, bra: &[C64], ket: &[C64]) -> Result<C64> {
    let d = op.nrows();
    for len in [op.ncols(), bra.len(), ket.len()] {
        if len != d {
            return Err(FluxtuneError::Dimension { expected: d, got: len });
        }
    }
    Ok(dot(bra, &matvec(op, ket)))
}

/// Oscillator-space φ₊ matrix, its eigendecomposition and derived trig operators.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    basis: BasisSpec,
    lambda: f64,
    x: Mat<f64>,
    x_vals: Vec<f64>,
    x_vecs: Mat<f64>,
}

impl OperatorSet {
    pub fn basis(&self) -> BasisSpec {
        self.basis
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// φ₊ = λ(b + b†) on the Fock factor.
    pub fn phi_plus_osc(&self) -> MatRef<'_, f64> {
        self.x.as_ref()
    }

    fn spectral(&self, f: impl Fn(f64) -> f64) -> Mat<f64> {
        let nb = self.basis.n_fock;
        let g: Vec<f64> = self.x_vals.iter().map(|&w| f(w)).collect();
        Mat::from_fn(nb, nb, |i, j| {
            (0..nb).map(|k| self.x_vecs[(i, k)] * g[k] * self.x_vecs[(j, k)]).sum()
        })
    }

    /// cos(φ₊ + θ) on the Fock factor.
    pub fn cos_phi_plus(&self, theta: f64) -> Mat<f64> {
        self.spectral(|w| (w + theta).cos())
    }

    /// sin(φ₊ + θ) on the Fock factor.
    pub fn sin_phi_plus(&self, theta: f64) -> Mat<f64> {
        self.spectral(|w| (w + theta).sin())
    }

    /// Charge raising operator S|n₋⟩ = |n₋+1⟩, truncated at ±M.
    pub fn shift(&self) -> Mat<C64> {
        let k = self.basis.charge_dim();
        Mat::from_fn(k, k, |i, j| if i == j + 1 { C64::new(1.0, 0.0) } else { ZERO })
    }

    /// cos(φ₋ + β) = (e^{iβ}S + e^{−iβ}S†)/2 on the charge factor.
    pub fn cos_phi_minus(&self, beta: f64) -> Mat<C64> {
        let k = self.basis.charge_dim();
        let up = C64::from_polar(0.5, beta);
        Mat::from_fn(k, k, |i, j| {
            if i == j + 1 {
                up
            } else if j == i + 1 {
                up.conj()
            } else {
                ZERO
            }
        })
    }

    /// sin(φ₋ + α) = (e^{iα}S − e^{−iα}S†)/(2i) on the charge factor.
    pub fn sin_phi_minus(&self, alpha: f64) -> Mat<C64> {
        let k = self.basis.charge_dim();
        let up = C64::from_polar(0.5, alpha) * C64::new(0.0, -1.0);
        Mat::from_fn(k, k, |i, j| {
            if i == j + 1 {
                up
            } else if j == i + 1 {
                up.conj()
            } else {
                ZERO
            }
        })
    }

    /// φ₊ ⊗ I on the full basis.
    pub fn phi_plus(&self) -> HermitianOperator {
        let mat = kron_real_identity(self.x.as_ref(), self.basis.charge_dim());
        HermitianOperator { basis: self.basis, mat }
    }

    /// I ⊗ n₋ on the full basis.
    pub fn n_minus(&self) -> HermitianOperator {
        let d = self.basis.dim();
        let mat = Mat::from_fn(d, d, |i, j| {
            if i == j {
                C64::new(self.basis.state(i).1 as f64, 0.0)
            } else {
                ZERO
            }
        });
        HermitianOperator { basis: self.basis, mat }
    }

    /// Applies A ⊗ I to a full-basis vector without forming the Kronecker product.
    pub fn apply_osc(&self, a: MatRef<'_, f64>, v: &[C64]) -> Vec<C64> {
        let (nb, k) = (self.basis.n_fock, self.basis.charge_dim());
        let mut out = vec![ZERO; v.len()];
        for n in 0..nb {
            for m in 0..nb {
                let a_nm = a[(n, m)];
                if a_nm == 0.0 {
                    continue;
                }
                for c in 0..k {
                    out[n * k + c] += v[m * k + c] * a_nm;
                }
            }
        }
        out
    }
}

/// Builds φ₊, its spectral decomposition and the charge operators.
pub fn build_operators(basis: BasisSpec, scales: &DerivedScales) -> Result<OperatorSet> {
    let nb = basis.n_fock;
    let lambda = scales.lambda;
    let x = Mat::from_fn(nb, nb, |i, j| {
        if j == i + 1 {
            lambda * (j as f64).sqrt()
        } else if i == j + 1 {
            lambda * (i as f64).sqrt()
        } else {
            0.0
        }
    });
    let evd = x
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| FluxtuneError::Eigensolver(format!("{e:?}")))?;
    let x_vals = (0..nb).map(|i| evd.S()[i]).collect();
    let x_vecs = evd.U().to_owned();
    Ok(OperatorSet {
        basis,
        lambda,
        x,
        x_vals,
        x_vecs,
    })
}

fn kron_real_identity(a: MatRef<'_, f64>, k: usize) -> Mat<C64> {
    let nb = a.nrows();
    Mat::from_fn(nb * k, nb * k, |i, j| {
        if i % k == j % k {
            C64::new(a[(i / k, j / k)], 0.0)
        } else {
            ZERO
        }
    })
}

fn kron_add(target: &mut Mat<C64>, scale: f64, a: MatRef<'_, f64>, b: MatRef<'_, C64>) {
    let (nb, k) = (a.nrows(), b.nrows());
    for n in 0..nb {
        for m in 0..nb {
            let a_nm = scale * a[(n, m)];
            if a_nm == 0.0 {
                continue;
            }
            for c in 0..k {
                for d in 0..k {
                    let b_cd = b[(c, d)];
                    if b_cd != ZERO {
                        target[(n * k + c, m * k + d)] += b_cd * a_nm;
                    }
                }
            }
        }
    }
}

/// Exact sin(Δ/2) prefactor or its first-order expansion Δ/2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianForm {
    #[default]
    Exact,
    Linearized,
}

impl HamiltonianForm {
    /// Amplitude A of the coupling term −A cos(φ₊ + f′/2) sin(φ₋ + Δ/2).
    pub fn amplitude(self, ej: f64, delta: f64) -> f64 {
        match self {
            Self::Exact => 4.0 * ej * (delta / 2.0).sin(),
            Self::Linearized => 2.0 * delta * ej,
        }
    }
}

/// Independent bias of the two SQUID loops, the third loop and the offset charge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bias {
    pub f1: f64,
    pub f2: f64,
    pub f_prime: f64,
    pub ng: f64,
}

impl Bias {
    pub fn symmetric(flux: FluxPoint) -> Self {
        Self {
            f1: flux.f,
            f2: flux.f,
            f_prime: flux.f_prime,
            ng: 0.0,
        }
    }
}

fn check_flux(delta: f64) -> Result<()> {
    if !delta.is_finite() || delta.abs() >= PI / 2.0 {
        return Err(FluxtuneError::FluxDomain(format!(
            "|delta| = {} must be < pi/2",
            delta.abs()
        )));
    }
    Ok(())
}

fn diagonal_part(basis: BasisSpec, scales: &DerivedScales, ng: f64) -> Mat<C64> {
    let d = basis.dim();
    let mut h = Mat::<C64>::zeros(d, d);
    for i in 0..d {
        let (n, q) = basis.state(i);
        let qn = q as f64 + ng;
        h[(i, i)] = C64::new(
            scales.eb * (n as f64 + 0.5) + scales.ec * qn * qn + 4.0 * scales.ej,
            0.0,
        );
    }
    h
}

/// H = E_b(n+½) + E_c n₋² + 4E_J − A cos(φ₊ + f′/2) sin(φ₋ + Δ/2), original basis.
pub fn assemble_atom_hamiltonian(
    ops: &OperatorSet,
    scales: &DerivedScales,
    flux: FluxPoint,
    form: HamiltonianForm,
) -> Result<HermitianOperator> {
    check_flux(flux.delta)?;
    let mut h = diagonal_part(ops.basis, scales, 0.0);
    let amp = form.amplitude(scales.ej, flux.delta);
    let c = ops.cos_phi_plus(flux.f_prime / 2.0);
    let s = ops.sin_phi_minus(flux.delta / 2.0);
    kron_add(&mut h, -amp, c.as_ref(), s.as_ref());
    HermitianOperator::new(ops.basis, h)
}

/// Exact-form Hamiltonian with loop fluxes f₁ ≠ f₂ allowed and offset charge n_g:
/// U = −2E_J[cos(f₁/2) cos(φ₊ + φ₋ + (f′ − f₁)/2) + cos(f₂/2) cos(φ₊ − φ₋ + (f′ + f₂)/2)].
///
/// Reduces to [`assemble_atom_hamiltonian`] (exact form) for f₁ = f₂, n_g = 0.
pub fn assemble_biased(
    ops: &OperatorSet,
    scales: &DerivedScales,
    bias: Bias,
) -> Result<HermitianOperator> {
    check_flux(PI - bias.f1)?;
    check_flux(PI - bias.f2)?;
    let mut h = diagonal_part(ops.basis, scales, bias.ng);
    let c = ops.cos_phi_plus(bias.f_prime / 2.0);
    let s = ops.sin_phi_plus(bias.f_prime / 2.0);
    let a1 = -2.0 * scales.ej * (bias.f1 / 2.0).cos();
    let a2 = -2.0 * scales.ej * (bias.f2 / 2.0).cos();
    kron_add(&mut h, a1, c.as_ref(), ops.cos_phi_minus(-bias.f1 / 2.0).as_ref());
    kron_add(&mut h, -a1, s.as_ref(), ops.sin_phi_minus(-bias.f1 / 2.0).as_ref());
    kron_add(&mut h, a2, c.as_ref(), ops.cos_phi_minus(-bias.f2 / 2.0).as_ref());
    kron_add(&mut h, a2, s.as_ref(), ops.sin_phi_minus(-bias.f2 / 2.0).as_ref());
    HermitianOperator::new(ops.basis, h)
}

/// ∂H/∂f′ = (A/2) sin(φ₊ + f′/2) sin(φ₋ + Δ/2) in the original basis.
pub fn dh_dfprime(
    ops: &OperatorSet,
    scales: &DerivedScales,
    flux: FluxPoint,
    form: HamiltonianForm,
) -> Result<HermitianOperator> {
    check_flux(flux.delta)?;
    let d = ops.basis.dim();
    let mut h = Mat::<C64>::zeros(d, d);
    let amp = form.amplitude(scales.ej, flux.delta);
    let s = ops.sin_phi_plus(flux.f_prime / 2.0);
    let t = ops.sin_phi_minus(flux.delta / 2.0);
    kron_add(&mut h, amp / 2.0, s.as_ref(), t.as_ref());
    HermitianOperator::new(ops.basis, h)
}

/// Which loop flux a derivative is taken against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluxChannel {
    F1,
    F2,
    FPrime,
}

/// ∂H/∂fᵢ of [`assemble_biased`] by a central difference of the analytic matrix.
pub fn dh_dchannel(
    ops: &OperatorSet,
    scales: &DerivedScales,
    bias: Bias,
    channel: FluxChannel,
) -> Result<HermitianOperator> {
    const STEP: f64 = 1e-5;
    let shifted = |s: f64| {
        let mut b = bias;
        match channel {
            FluxChannel::F1 => b.f1 += s,
            FluxChannel::F2 => b.f2 += s,
            FluxChannel::FPrime => b.f_prime += s,
        }
        assemble_biased(ops, scales, b)
    };
    let hp = shifted(STEP)?;
    let hm = shifted(-STEP)?;
    // hp, hm are Hermitian; the 1/STEP gain amplifies only rounding, so symmetrize.
    let diff = &hp.mat - &hm.mat;
    let mat = (&diff + diff.adjoint()) * faer::Scale(C64::new(0.25 / STEP, 0.0));
    HermitianOperator::new(ops.basis, mat)
}

/// P|n₋⟩ = e^{i n₋(π−Δ)}|−n₋⟩, identity on the oscillator factor.
pub fn parity_operator(basis: BasisSpec, delta: f64) -> HermitianOperator {
    let d = basis.dim();
    let mut p = Mat::<C64>::zeros(d, d);
    for j in 0..d {
        let (n, q) = basis.state(j);
        let i = basis.index(n, -q).expect("reflection stays in basis");
        p[(i, j)] = C64::from_polar(1.0, q as f64 * (PI - delta));
    }
    HermitianOperator { basis, mat: p }
}

/// Gauge factor cₙ₋ = (−i)^n₋ e^{i n₋ Δ/2}.
pub fn gauge_phase(n_minus: i64, delta: f64) -> C64 {
    let quarter = match n_minus.rem_euclid(4) {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, -1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, 1.0),
    };
    quarter * C64::from_polar(1.0, n_minus as f64 * delta / 2.0)
}

/// Fixes the phase of a real-gauge vector and maps it to the original basis.
///
/// The largest-magnitude gauge component is made real positive (ties prefer
/// larger n₋), the result is multiplied by i^|n₋| of that component, then
/// component (n, n₋) is multiplied by cₙ₋.
pub fn canonical_phase(basis: BasisSpec, gauge: &[C64], delta: f64) -> Vec<C64> {
    let max = gauge.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let threshold = (1.0 - 1e-9) * max;
    let best = (0..gauge.len())
        .filter(|&i| gauge[i].norm() >= threshold)
        .max_by_key(|&i| basis.state(i).1)
        .unwrap_or(0);
    let k_dom = basis.state(best).1.unsigned_abs();
    let unit = if gauge[best].norm() > 0.0 {
        gauge[best].conj() / gauge[best].norm()
    } else {
        C64::new(1.0, 0.0)
    };
    let global = unit * C64::new(0.0, 1.0).powu(k_dom as u32);
    gauge
        .iter()
        .enumerate()
        .map(|(i, z)| z * global * gauge_phase(basis.state(i).1, delta))
        .collect()
}

/// Inverse of the gauge map: original-basis components divided by cₙ₋.
pub fn to_gauge(basis: BasisSpec, v: &[C64], delta: f64) -> Vec<C64> {
    v.iter()
        .enumerate()
        .map(|(i, z)| z * gauge_phase(basis.state(i).1, delta).conj())
        .collect()
}

/// Eigenvalues ascending with orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Mat<C64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn vector(&self, k: usize) -> Vec<C64> {
        let v = self.eigenvectors.as_ref();
        (0..v.nrows()).map(|i| v[(i, k)]).collect()
    }
}

/// The k lowest eigenpairs of a Hermitian operator.
pub fn eigensolve(h: &HermitianOperator, k: usize) -> Result<Spectrum> {
    eigensolve_matrix(h.mat(), k)
}

/// [`eigensolve`] on a bare matrix, checking hermiticity first.
pub fn eigensolve_matrix(h: MatRef<'_, C64>, k: usize) -> Result<Spectrum> {
    let d = h.nrows();
    if h.ncols() != d {
        return Err(FluxtuneError::Dimension { expected: d, got: h.ncols() });
    }
    if k == 0 || k > d {
        return Err(FluxtuneError::Eigensolver(format!("requested {k} pairs of a {d}x{d} matrix")));
    }
    let defect = hermiticity_defect(h);
    let tolerance = 1e-12 * max_abs(h).max(f64::MIN_POSITIVE);
    if defect > tolerance {
        return Err(FluxtuneError::NotHermitian { defect, tolerance });
    }
    let evd = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| FluxtuneError::Eigensolver(format!("{e:?}")))?;
    let eigenvalues = (0..k).map(|i| evd.S()[i].re).collect();
    let u = evd.U();
    let eigenvectors = Mat::from_fn(d, k, |i, j| u[(i, j)]);
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
    })
}

/// One classified eigenstate in the original basis.
#[derive(Debug, Clone)]
pub struct Level {
    pub energy: f64,
    pub parity: f64,
    pub vector: Vec<C64>,
}

/// |g⟩, |e⟩ = |ψ₊⟩ and |ψ₋⟩ with energies in GHz.
#[derive(Debug, Clone)]
pub struct AtomLevels {
    pub basis: BasisSpec,
    pub ground: Level,
    pub excited: Level,
    pub odd: Level,
}

impl AtomLevels {
    pub fn e_g(&self) -> f64 {
        self.ground.energy
    }

    pub fn e_e(&self) -> f64 {
        self.excited.energy
    }

    pub fn e_2(&self) -> f64 {
        self.odd.energy
    }

    pub fn splitting(&self) -> f64 {
        self.excited.energy - self.ground.energy
    }
}

/// Classifies eigenpairs by parity expectation; degenerate clusters are
/// rotated to diagonalize P first.
pub fn classify_levels(spectrum: &Spectrum, parity: &HermitianOperator, delta: f64) -> Result<AtomLevels> {
    let n = spectrum.len();
    if n < 3 {
        return Err(FluxtuneError::Classification(format!("need >= 3 eigenpairs, got {n}")));
    }
    let basis = parity.basis();
    let scale = (spectrum.eigenvalues.iter().map(|e| e * e).sum::<f64>() / n as f64).sqrt();
    let cluster_tol = 1e-6 * scale.max(1.0);

    let mut states: Vec<(f64, f64, Vec<C64>)> = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && spectrum.eigenvalues[end] - spectrum.eigenvalues[end - 1] < cluster_tol {
            end += 1;
        }
        let vecs: Vec<Vec<C64>> = (start..end).map(|k| spectrum.vector(k)).collect();
        if end - start == 1 {
            let p = dot(&vecs[0], &parity.apply(&vecs[0])).re;
            states.push((spectrum.eigenvalues[start], p, vecs[0].clone()));
        } else {
            let pv: Vec<Vec<C64>> = vecs.iter().map(|v| parity.apply(v)).collect();
            let m = end - start;
            let sub = Mat::from_fn(m, m, |i, j| dot(&vecs[i], &pv[j]));
            let sub = Mat::from_fn(m, m, |i, j| (sub[(i, j)] + sub[(j, i)].conj()) * 0.5);
            let evd = sub
                .self_adjoint_eigen(Side::Lower)
                .map_err(|e| FluxtuneError::Eigensolver(format!("{e:?}")))?;
            let w = evd.U();
            for c in 0..m {
                let mut v = vec![ZERO; basis.dim()];
                let mut energy = 0.0;
                for (r, vr) in vecs.iter().enumerate() {
                    energy += w[(r, c)].norm_sqr() * spectrum.eigenvalues[start + r];
                    for (o, x) in v.iter_mut().zip(vr) {
                        *o += x * w[(r, c)];
                    }
                }
                states.push((energy, evd.S()[c].re, v));
            }
        }
        start = end;
    }
    states.sort_by(|a, b| a.0.total_cmp(&b.0));

    let (e0, p0, v0) = &states[0];
    if *p0 < 0.5 {
        return Err(FluxtuneError::Classification(format!(
            "ground state parity {p0:.3e} is not even"
        )));
    }
    let mut excited = None;
    let mut odd = None;
    for (energy, p, v) in states.iter().skip(1) {
        if p.abs() < 0.5 {
            return Err(FluxtuneError::Classification(format!(
                "ambiguous parity {p:.3e} at E = {energy} GHz"
            )));
        }
        if *p > 0.5 && excited.is_none() {
            excited = Some((*energy, *p, v.clone()));
        }
        if *p < -0.5 && odd.is_none() {
            odd = Some((*energy, *p, v.clone()));
        }
        if excited.is_some() && odd.is_some() {
            break;
        }
    }
    let level = |(energy, parity, v): (f64, f64, Vec<C64>)| Level {
        energy,
        parity,
        vector: canonical_phase(basis, &to_gauge(basis, &v, delta), delta),
    };
    let missing = |what: &str| FluxtuneError::Classification(format!("no {what} level among {n} pairs"));
    Ok(AtomLevels {
        basis,
        ground: level((*e0, *p0, v0.clone())),
        excited: level(excited.ok_or_else(|| missing("even excited"))?),
        odd: level(odd.ok_or_else(|| missing("odd"))?),
    })
}

/// Generic path: full complex diagonalization and parity classification.
pub fn solve_levels_generic(
    ops: &OperatorSet,
    scales: &DerivedScales,
    flux: FluxPoint,
    form: HamiltonianForm,
) -> Result<AtomLevels> {
    let h = assemble_atom_hamiltonian(ops, scales, flux, form)?;
    let k = h.dim().min(12);
    let spectrum = eigensolve(&h, k)?;
    classify_levels(&spectrum, &parity_operator(ops.basis, flux.delta), flux.delta)
}

/// Parity block of the real-gauge Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sector {
    /// |0⟩′ and (|k⟩′ + |−k⟩′)/√2, k = 1..M.
    Even,
    /// (|k⟩′ − |−k⟩′)/√2, k = 1..M.
    Odd,
}

impl Sector {
    fn charges(self, m: usize) -> Vec<i64> {
        match self {
            Self::Even => (0..=m as i64).collect(),
            Self::Odd => (1..=m as i64).collect(),
        }
    }
}

/// Real symmetric block of H in the real gauge.
pub fn sector_hamiltonian(
    ops: &OperatorSet,
    scales: &DerivedScales,
    flux: FluxPoint,
    form: HamiltonianForm,
    sector: Sector,
) -> Result<Mat<f64>> {
    check_flux(flux.delta)?;
    let basis = ops.basis;
    let (nb, charges) = (basis.n_fock, sector.charges(basis.n_charge));
    let k = charges.len();
    let t = Mat::from_fn(k, k, |i, j| {
        if i.abs_diff(j) != 1 {
            0.0
        } else if sector == Sector::Even && i.min(j) == 0 {
            FRAC_1_SQRT_2
        } else {
            0.5
        }
    });
    let amp = form.amplitude(scales.ej, flux.delta);
    let c = ops.cos_phi_plus(flux.f_prime / 2.0);
    let d = nb * k;
    Ok(Mat::from_fn(d, d, |i, j| {
        let (n, a) = (i / k, i % k);
        let (m, b) = (j / k, j % k);
        let mut v = -amp * c[(n, m)] * t[(a, b)];
        if i == j {
            let q = charges[a] as f64;
            v += scales.eb * (n as f64 + 0.5) + scales.ec * q * q + 4.0 * scales.ej;
        }
        v
    }))
}

/// Eigenvalues of one parity block, ascending.
pub fn sector_eigenvalues(
    ops: &OperatorSet,
    scales: &DerivedScales,
    flux: FluxPoint,
    form: HamiltonianForm,
    sector: Sector,
) -> Result<Vec<f64>> {
    sector_hamiltonian(ops, scales, flux, form, sector)?
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| FluxtuneError::Eigensolver(format!("{e:?}")))
}

/// E_e − E_g from the even block alone.
pub fn exact_splitting(
    ops: &OperatorSet,
    scales: &DerivedScales,
    flux: FluxPoint,
    form: HamiltonianForm,
) -> Result<f64> {
    let ev = sector_eigenvalues(ops, scales, flux, form, Sector::Even)?;
    Ok(ev[1] - ev[0])
}

/// The `count` lowest levels of both blocks merged, ascending.
pub fn lowest_levels(
    ops: &OperatorSet,
    scales: &DerivedScales,
    flux: FluxPoint,
    form: HamiltonianForm,
    count: usize,
) -> Result<Vec<f64>> {
    let mut all = sector_eigenvalues(ops, scales, flux, form, Sector::Even)?;
    all.extend(sector_eigenvalues(ops, scales, flux, form, Sector::Odd)?);
    all.sort_by(f64::total_cmp);
    all.truncate(count);
    Ok(all)
}

fn sector_to_gauge(basis: BasisSpec, sector: Sector, v: MatRef<'_, f64>, col: usize) -> Vec<C64> {
    let charges = sector.charges(basis.n_charge);
    let k = charges.len();
    let mut out = vec![ZERO; basis.dim()];
    for n in 0..basis.n_fock {
        for (a, &q) in charges.iter().enumerate() {
            let x = v[(n * k + a, col)];
            if q == 0 {
                out[basis.index(n, 0).unwrap()] = C64::new(x, 0.0);
            } else {
                let sign = if sector == Sector::Odd { -1.0 } else { 1.0 };
                out[basis.index(n, q).unwrap()] = C64::new(x * FRAC_1_SQRT_2, 0.0);
                out[basis.index(n, -q).unwrap()] = C64::new(sign * x * FRAC_1_SQRT_2, 0.0);
            }
        }
    }
    out
}

fn gauge_parity(basis: BasisSpec, gauge: &[C64]) -> f64 {
    (0..basis.dim())
        .map(|i| {
            let (n, q) = basis.state(i);
            (gauge[i].conj() * gauge[basis.index(n, -q).unwrap()]).re
        })
        .sum()
}

/// Sector path: |g⟩, |e⟩ from the even block and |ψ₋⟩ from the odd block.
pub fn solve_levels(
    ops: &OperatorSet,
    scales: &DerivedScales,
    flux: FluxPoint,
    form: HamiltonianForm,
) -> Result<AtomLevels> {
    let basis = ops.basis;
    let solve = |sector| -> Result<_> {
        sector_hamiltonian(ops, scales, flux, form, sector)?
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| FluxtuneError::Eigensolver(format!("{e:?}")))
    };
    let even = solve(Sector::Even)?;
    let odd = solve(Sector::Odd)?;
    let level = |sector, evd: &faer::linalg::solvers::SelfAdjointEigen<f64>, col: usize| {
        let gauge = sector_to_gauge(basis, sector, evd.U(), col);
        Level {
            energy: evd.S()[col],
            parity: gauge_parity(basis, &gauge),
            vector: canonical_phase(basis, &gauge, flux.delta),
        }
    };
    Ok(AtomLevels {
        basis,
        ground: level(Sector::Even, &even, 0),
        excited: level(Sector::Even, &even, 1),
        odd: level(Sector::Odd, &odd, 0),
    })
}

/// Full-basis real-gauge Hamiltonian with charge term E_c(n₋ + n_g)².
pub fn gauge_hamiltonian(
    ops: &OperatorSet,
    scales: &DerivedScales,
    flux: FluxPoint,
    form: HamiltonianForm,
    ng: f64,
) -> Result<Mat<f64>> {
    check_flux(flux.delta)?;
    let basis = ops.basis;
    let k = basis.charge_dim();
    let amp = form.amplitude(scales.ej, flux.delta);
    let c = ops.cos_phi_plus(flux.f_prime / 2.0);
    let d = basis.dim();
    Ok(Mat::from_fn(d, d, |i, j| {
        let (n, a) = (i / k, i % k);
        let (m, b) = (j / k, j % k);
        let mut v = if a.abs_diff(b) == 1 { -amp * c[(n, m)] * 0.5 } else { 0.0 };
        if i == j {
            let q = basis.state(i).1 as f64 + ng;
            v += scales.eb * (n as f64 + 0.5) + scales.ec * q * q + 4.0 * scales.ej;
        }
        v
    }))
}

/// Couplings from exact matrix elements of φ₊ (ω/2π in GHz).
pub fn exact_couplings(levels: &AtomLevels, ops: &OperatorSet, scales: &DerivedScales) -> CouplingSet {
    let x = ops.phi_plus_osc();
    let xg = ops.apply_osc(x, &levels.ground.vector);
    let xe = ops.apply_osc(x, &levels.excited.vector);
    let eg = dot(&levels.excited.vector, &xg);
    let gg = dot(&levels.ground.vector, &xg).re;
    let ee = dot(&levels.excited.vector, &xe).re;
    let root = (scales.omega0_ghz * scales.cavity_ghz).sqrt();
    CouplingSet::new(
        root * eg.im,
        -root * (ee + gg) / 2.0,
        -root * (ee - gg) / 2.0,
        -root * eg.re,
        scales.cavity_ghz,
    )
}

/// Selection-rule matrix elements of one classified level set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionRules {
    pub n_eg: f64,
    pub phi_g_odd: f64,
    pub phi_e_odd: f64,
}

/// |⟨e|n₋|g⟩|, |⟨g|φ₊|ψ₋⟩|, |⟨e|φ₊|ψ₋⟩|.
pub fn selection_rules(levels: &AtomLevels, ops: &OperatorSet) -> SelectionRules {
    let basis = levels.basis;
    let n_g: Vec<C64> = levels
        .ground
        .vector
        .iter()
        .enumerate()
        .map(|(i, z)| z * basis.state(i).1 as f64)
        .collect();
    let x_odd = ops.apply_osc(ops.phi_plus_osc(), &levels.odd.vector);
    SelectionRules {
        n_eg: dot(&levels.excited.vector, &n_g).norm(),
        phi_g_odd: dot(&levels.ground.vector, &x_odd).norm(),
        phi_e_odd: dot(&levels.excited.vector, &x_odd).norm(),
    }
}

/// Diagonal and transition elements of φ₊ and n₋ between classified levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactElements {
    pub phi_eg: C64,
    pub phi_gg: f64,
    pub phi_ee: f64,
    pub n_odd_g: C64,
    pub n_odd_e: C64,
}

pub fn exact_elements(levels: &AtomLevels, ops: &OperatorSet) -> ExactElements {
    let basis = levels.basis;
    let x = ops.phi_plus_osc();
    let xg = ops.apply_osc(x, &levels.ground.vector);
    let xe = ops.apply_osc(x, &levels.excited.vector);
    let n = |v: &[C64]| -> Vec<C64> {
        v.iter().enumerate().map(|(i, z)| z * basis.state(i).1 as f64).collect()
    };
    ExactElements {
        phi_eg: dot(&levels.excited.vector, &xg),
        phi_gg: dot(&levels.ground.vector, &xg).re,
        phi_ee: dot(&levels.excited.vector, &xe).re,
        n_odd_g: dot(&levels.odd.vector, &n(&levels.ground.vector)),
        n_odd_e: dot(&levels.odd.vector, &n(&levels.excited.vector)),
    }
}

/// ⟨a|op|b⟩ for full-basis vectors, without dimension checks.
pub fn element(op: &HermitianOperator, a: &[C64], b: &[C64]) -> C64 {
    dot(a, &op.apply(b))
}
