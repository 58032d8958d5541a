//! Decoherence budget: flux-noise relaxation, 1/f dephasing from flux,
//! critical current and charge, with exact-diagonalization oracles.
//!
//! Closed forms take energies in GHz and return SI seconds. Numeric oracles
//! differentiate exact splittings; flux derivatives use the loop split
//! ∂δE/∂f₁ = (∂_f δE − ∂_f′ δE)/2, ∂δE/∂f₂ = (∂_f δE + ∂_f′ δE)/2, ∂δE/∂f₃ = ∂_f′ δE,
//! which follows from the f₁ ≠ f₂ Hamiltonian (the parity-odd part of ∂H/∂f₁
//! has zero expectation).

use faer::{Mat, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{FluxtuneError, Result};
use crate::hilbert::{self, Bias, FluxChannel};
use crate::params::{Constants, DerivedScales, DeviceParams};
use crate::perturb::{self, Formula};
use crate::schedule::{solve_fprime, EngineKind, FluxPoint, Model, SolverOptions};

const BOLTZMANN: f64 = 1.380_649e-23;

/// Noise environment: mutual inductances, impedance and 1/f amplitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseEnv {
    /// M₁, M₂, M₃ in Φ₀/A.
    #[serde(rename = "m1_m2_m3_phi0_per_A")]
    pub m_phi0_per_a: [f64; 3],
    pub zr_ohm: f64,
    /// A_Φ in units of Φ₀, shared by the three loops.
    pub aphi_phi0: f64,
    pub aic_rel: f64,
    /// A_c in units of e.
    pub ac_e: f64,
    /// Only used to flag the zero-temperature assumption.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature_k: Option<f64>,
}

impl NoiseEnv {
    pub fn from_device(p: &DeviceParams) -> Self {
        Self {
            m_phi0_per_a: p.mutuals_phi0_per_a,
            zr_ohm: p.zr_ohm,
            aphi_phi0: p.aphi_phi0,
            aic_rel: p.aic_rel,
            ac_e: p.ac_e,
            temperature_k: None,
        }
    }

    pub fn check(&self) -> Result<()> {
        let fields = [
            ("noise_env.m1_m2_m3_phi0_per_A[0]", self.m_phi0_per_a[0]),
            ("noise_env.m1_m2_m3_phi0_per_A[1]", self.m_phi0_per_a[1]),
            ("noise_env.m1_m2_m3_phi0_per_A[2]", self.m_phi0_per_a[2]),
            ("noise_env.zr_ohm", self.zr_ohm),
            ("noise_env.aphi_phi0", self.aphi_phi0),
            ("noise_env.aic_rel", self.aic_rel),
            ("noise_env.ac_e", self.ac_e),
        ];
        for (field, value) in fields {
            if !(value.is_finite() && value >= 0.0) {
                return Err(FluxtuneError::ParamDomain {
                    field: field.into(),
                    value,
                    reason: "must be finite and non-negative".into(),
                });
            }
        }
        if self.zr_ohm == 0.0 {
            return Err(FluxtuneError::ParamDomain {
                field: "noise_env.zr_ohm".into(),
                value: 0.0,
                reason: "must be strictly positive".into(),
            });
        }
        Ok(())
    }

    /// k_B T / (h δE) < 0.1, or `None` when no temperature is given.
    pub fn zero_temperature_ok(&self, delta_e_ghz: f64, c: &Constants) -> Option<bool> {
        self.temperature_k
            .map(|t| BOLTZMANN * t / (c.joule_per_ghz() * delta_e_ghz) < 0.1)
    }
}

/// Finite-difference and guard settings of the numeric oracles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericOptions {
    pub flux_step_rad: f64,
    pub charge_step: f64,
    /// Largest tolerated relative change when the step is halved.
    pub richardson_rel: f64,
    /// Guard trips when |E₂ − E_e| < factor · 2E_c(A_c/e)|⟨ψ₋|n₋|e⟩|.
    pub guard_factor: f64,
    pub guard: bool,
}

impl Default for NumericOptions {
    fn default() -> Self {
        Self {
            flux_step_rad: 1e-6,
            charge_step: 1e-4,
            richardson_rel: 0.01,
            guard_factor: 100.0,
            guard: true,
        }
    }
}

/// Closed-form or exact-diagonalization estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Closed,
    Numeric,
}

/// S_Φ(ω) = 2M²Θ(ω)ħω/Z_R in Wb²·s, M given in Φ₀/A.
pub fn flux_noise_psd(m_phi0_per_a: f64, omega: f64, zr_ohm: f64, c: &Constants) -> f64 {
    if omega <= 0.0 {
        return 0.0;
    }
    let m = m_phi0_per_a * c.flux_quantum();
    2.0 * m * m * c.hbar() * omega / zr_ohm
}

/// Relaxation rates of the three flux channels and the resulting T₁.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Relaxation {
    pub rates_per_s: [f64; 3],
    pub t1_s: f64,
}

impl Relaxation {
    fn from_rates(rates_per_s: [f64; 3]) -> Self {
        let total: f64 = rates_per_s.iter().sum();
        Self {
            rates_per_s,
            t1_s: 1.0 / total,
        }
    }
}

/// Closed-form T₁ with channel terms M₁²cos²((Δ+f′)/2), M₂²cos²((Δ−f′)/2), Δ²M₃²sin²(f′/2).
pub fn t1_flux(s: &DerivedScales, flux: FluxPoint, env: &NoiseEnv, delta_e_ghz: f64) -> Relaxation {
    let c = s.consts();
    let jpg = c.joule_per_ghz();
    let (ej, de) = (s.ej * jpg, delta_e_ghz * jpg);
    let phi0 = c.phi0();
    let pre = ej * ej * de * (-s.lambda_sq()).exp() / (c.hbar().powi(2) * phi0 * phi0 * env.zr_ohm);
    let m = env.m_phi0_per_a.map(|x| x * c.flux_quantum());
    let d = flux.delta;
    let fp = flux.f_prime;
    Relaxation::from_rates([
        pre * m[0] * m[0] * ((d + fp) / 2.0).cos().powi(2),
        pre * m[1] * m[1] * ((d - fp) / 2.0).cos().powi(2),
        pre * d * d * m[2] * m[2] * (fp / 2.0).sin().powi(2),
    ])
}

/// Golden-rule relaxation from exact matrix elements ⟨e|∂H/∂fᵢ|g⟩ (GHz/rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoldenRule {
    pub elements: [Complex64; 3],
    pub relaxation: Relaxation,
}

/// Generic golden-rule path Γᵢ = |⟨e|∂H/∂Φᵢ|g⟩|² S_Φᵢ(ω)/ħ².
///
/// The f′ element uses the analytic ∂H/∂f′ of the model's form; the loop
/// elements differentiate the f₁ ≠ f₂ exact-form Hamiltonian.
pub fn t1_golden_rule(model: &Model, flux: FluxPoint, env: &NoiseEnv) -> Result<GoldenRule> {
    let (ops, s) = (&model.ops, &model.scales);
    let levels = hilbert::solve_levels(ops, s, flux, model.form)?;
    let bias = Bias::symmetric(flux);
    let ops_f = [
        hilbert::dh_dchannel(ops, s, bias, FluxChannel::F1)?,
        hilbert::dh_dchannel(ops, s, bias, FluxChannel::F2)?,
        hilbert::dh_dfprime(ops, s, flux, model.form)?,
    ];
    let c = s.consts();
    let omega = 2.0 * PI * levels.splitting() * 1e9;
    let elements = ops_f
        .each_ref()
        .map(|op| hilbert::element(op, &levels.excited.vector, &levels.ground.vector));
    let mut rates = [0.0; 3];
    for i in 0..3 {
        let coupling = elements[i].norm() * c.joule_per_ghz() / c.phi0();
        rates[i] = coupling * coupling * flux_noise_psd(env.m_phi0_per_a[i], omega, env.zr_ohm, &c)
            / c.hbar().powi(2);
    }
    Ok(GoldenRule {
        elements,
        relaxation: Relaxation::from_rates(rates),
    })
}

/// Closed-form flux dephasing time.
pub fn tphi_flux_closed(s: &DerivedScales, flux: FluxPoint, env: &NoiseEnv) -> f64 {
    let c = s.consts();
    let (eb, ec, ej, l2) = (s.eb, s.ec, s.ej, s.lambda_sq());
    let d = flux.delta;
    let fp = flux.f_prime;
    let x = 11.0 / (3.0 * ec) - l2 / eb;
    let y = 11.0 / (3.0 * ec) + l2 / eb;
    let bracket = x + y * (fp.cos() - 1.5 * d * fp.sin()) + (x + y * (fp.cos() + 0.5 * d * fp.sin())).abs();
    let a_phi = env.aphi_phi0 * c.flux_quantum();
    2.0 * c.hbar() * c.phi0() * l2.exp() / (d * a_phi * ej * ej * bracket * c.joule_per_ghz())
}

/// Numeric flux dephasing with derivatives in GHz/rad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxDephasing {
    pub t_s: f64,
    pub d_df: f64,
    pub d_dfprime: f64,
    /// ∂δE/∂f₁, ∂δE/∂f₂, ∂δE/∂f₃.
    pub channels: [f64; 3],
    pub richardson_rel_change: f64,
    pub ill_conditioned: bool,
}

fn flux_derivatives(model: &Model, flux: FluxPoint, h: f64) -> Result<(f64, f64)> {
    if !(h > 0.0) || h < 1e-12 * flux.f.abs().max(1.0) {
        return Err(FluxtuneError::IllConditioned(format!("flux step {h:e} underflows")));
    }
    if flux.f + h >= PI {
        return Err(FluxtuneError::IllConditioned(format!(
            "f + step = {} reaches pi",
            flux.f + h
        )));
    }
    let de = |f: f64, fp: f64| model.splitting(FluxPoint::new(f, fp), EngineKind::Exact);
    let d_df = (de(flux.f + h, flux.f_prime)? - de(flux.f - h, flux.f_prime)?) / (2.0 * h);
    let d_dfp = (de(flux.f, flux.f_prime + h)? - de(flux.f, flux.f_prime - h)?) / (2.0 * h);
    Ok((d_df, d_dfp))
}

fn flux_time(s: &DerivedScales, env: &NoiseEnv, channels: &[f64; 3]) -> f64 {
    let c = s.consts();
    let a_phi = env.aphi_phi0 * c.flux_quantum();
    let sum: f64 = channels.iter().map(|x| x.abs()).sum();
    let rate = a_phi / c.hbar() * sum * c.joule_per_ghz() / c.phi0();
    1.0 / rate
}

fn split(d_df: f64, d_dfp: f64) -> [f64; 3] {
    [0.5 * (d_df - d_dfp), 0.5 * (d_df + d_dfp), d_dfp]
}

/// T_φ = ħ/(A_Φ Σᵢ|∂δE/∂Φᵢ|) from central differences of the exact splitting.
pub fn tphi_flux_numeric(
    model: &Model,
    flux: FluxPoint,
    env: &NoiseEnv,
    opts: &NumericOptions,
) -> Result<FluxDephasing> {
    let h = opts.flux_step_rad;
    let (d_df, d_dfprime) = flux_derivatives(model, flux, h)?;
    let channels = split(d_df, d_dfprime);
    let t_s = flux_time(&model.scales, env, &channels);
    let (a, b) = flux_derivatives(model, flux, h / 2.0)?;
    let t_half = flux_time(&model.scales, env, &split(a, b));
    let change = ((t_s - t_half) / t_half).abs();
    Ok(FluxDephasing {
        t_s,
        d_df,
        d_dfprime,
        channels,
        richardson_rel_change: change,
        ill_conditioned: !(change < opts.richardson_rel),
    })
}

/// Hellmann–Feynman derivatives ⟨e|∂H/∂fᵢ|e⟩ − ⟨g|∂H/∂fᵢ|g⟩ for f₁, f₂, f′ (exact form).
pub fn flux_channels_hellmann_feynman(model: &Model, flux: FluxPoint) -> Result<[f64; 3]> {
    let (ops, s) = (&model.ops, &model.scales);
    let levels = hilbert::solve_levels(ops, s, flux, hilbert::HamiltonianForm::Exact)?;
    let bias = Bias::symmetric(flux);
    let mut out = [0.0; 3];
    for (o, ch) in out.iter_mut().zip([FluxChannel::F1, FluxChannel::F2, FluxChannel::FPrime]) {
        let op = hilbert::dh_dchannel(ops, s, bias, ch)?;
        let e = hilbert::element(&op, &levels.excited.vector, &levels.excited.vector).re;
        let g = hilbert::element(&op, &levels.ground.vector, &levels.ground.vector).re;
        *o = e - g;
    }
    Ok(out)
}

/// T_φ = ħ/(2(A_Ic/I_c)(δE − E_c)).
pub fn tphi_ic(s: &DerivedScales, delta_e_ghz: f64, env: &NoiseEnv) -> Result<f64> {
    if !(delta_e_ghz > s.ec) {
        return Err(FluxtuneError::ParamDomain {
            field: "delta_e".into(),
            value: delta_e_ghz,
            reason: format!("must exceed E_c = {}", s.ec),
        });
    }
    let c = s.consts();
    Ok(c.hbar() / (2.0 * env.aic_rel * (delta_e_ghz - s.ec) * c.joule_per_ghz()))
}

/// Charge dephasing estimate with its degeneracy diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargeDephasing {
    pub t_s: f64,
    pub degenerate: bool,
    pub gap_e2_ee_ghz: f64,
    pub guard_scale_ghz: f64,
    /// d²δE/dn_g² in GHz (NaN when guarded).
    pub curvature_ghz: f64,
    /// δE(A_c/e) − δE(0) in GHz (NaN when not guarded).
    pub shift_ghz: f64,
    pub richardson_rel_change: f64,
}

fn charge_time_curvature(c: &Constants, a_c: f64, curvature_ghz: f64) -> f64 {
    c.hbar() / (PI * PI * a_c * a_c * curvature_ghz.abs() * c.joule_per_ghz())
}

fn charge_time_shift(c: &Constants, shift_ghz: f64) -> f64 {
    c.hbar() / (2.0 * PI * PI * shift_ghz.abs() * c.joule_per_ghz())
}

/// Second-order closed form, or the two-level avoided-crossing response when guarded.
pub fn tphi_charge_closed(
    s: &DerivedScales,
    flux: FluxPoint,
    env: &NoiseEnv,
    formula: Formula,
    opts: &NumericOptions,
) -> Result<ChargeDephasing> {
    let c = s.consts();
    let lv = perturb::energies(s, flux, formula);
    let el = perturb::charge_elements(s, flux, formula);
    let mg2 = el.odd_g.norm_sqr();
    let me = el.odd_e.norm();
    let gap = lv.e_2 - lv.e_e;
    let guard_scale = 2.0 * s.ec * env.ac_e * me;
    let degenerate = gap.abs() < opts.guard_factor * guard_scale;
    let ground_term = mg2 / (lv.e_2 - lv.e_g);
    if !degenerate || !opts.guard {
        if gap == 0.0 || (degenerate && !opts.guard) {
            return Err(FluxtuneError::Degenerate {
                f_over_pi: flux.f / PI,
                gap,
            });
        }
        let curvature = 8.0 * s.ec * s.ec * (ground_term - me * me / gap);
        return Ok(ChargeDephasing {
            t_s: charge_time_curvature(&c, env.ac_e, curvature),
            degenerate,
            gap_e2_ee_ghz: gap,
            guard_scale_ghz: guard_scale,
            curvature_ghz: curvature,
            shift_ghz: f64::NAN,
            richardson_rel_change: 0.0,
        });
    }
    let dn = env.ac_e;
    let coupling = 2.0 * s.ec * dn * me;
    let sign = if gap >= 0.0 { 1.0 } else { -1.0 };
    let shift = (gap - sign * (gap * gap + 4.0 * coupling * coupling).sqrt()) / 2.0
        + 4.0 * s.ec * s.ec * dn * dn * ground_term;
    Ok(ChargeDephasing {
        t_s: charge_time_shift(&c, shift),
        degenerate,
        gap_e2_ee_ghz: gap,
        guard_scale_ghz: guard_scale,
        curvature_ghz: f64::NAN,
        shift_ghz: shift,
        richardson_rel_change: 0.0,
    })
}

struct ChargeReference {
    dim: usize,
    ground: Vec<f64>,
    excited: Vec<f64>,
    splitting: f64,
    gap: f64,
    odd_e: f64,
}

fn eigen_full(model: &Model, flux: FluxPoint, ng: f64) -> Result<(Vec<f64>, Mat<f64>)> {
    let h = hilbert::gauge_hamiltonian(&model.ops, &model.scales, flux, model.form, ng)?;
    let evd = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| FluxtuneError::Eigensolver(format!("{e:?}")))?;
    let vals = (0..h.nrows()).map(|i| evd.S()[i]).collect();
    Ok((vals, evd.U().to_owned()))
}

fn charge_reference(model: &Model, flux: FluxPoint) -> Result<ChargeReference> {
    let basis = model.ops.basis();
    let (vals, u) = eigen_full(model, flux, 0.0)?;
    let dim = basis.dim();
    let column = |j: usize| -> Vec<f64> { (0..dim).map(|i| u[(i, j)]).collect() };
    let parity = |v: &[f64]| -> f64 {
        (0..dim)
            .map(|i| {
                let (n, q) = basis.state(i);
                v[i] * v[basis.index(n, -q).unwrap()]
            })
            .sum()
    };
    let ground = column(0);
    let mut excited = None;
    let mut odd = None;
    for j in 1..dim.min(16) {
        let v = column(j);
        let p = parity(&v);
        if p > 0.5 && excited.is_none() {
            excited = Some((vals[j], v));
        } else if p < -0.5 && odd.is_none() {
            odd = Some((vals[j], v));
        }
        if excited.is_some() && odd.is_some() {
            break;
        }
    }
    let miss = || FluxtuneError::Classification("charge oracle could not classify levels".into());
    let (ee, excited) = excited.ok_or_else(miss)?;
    let (e2, odd) = odd.ok_or_else(miss)?;
    let odd_e = (0..dim)
        .map(|i| odd[i] * basis.state(i).1 as f64 * excited[i])
        .sum::<f64>()
        .abs();
    Ok(ChargeReference {
        dim,
        ground,
        excited,
        splitting: ee - vals[0],
        gap: e2 - ee,
        odd_e,
    })
}

fn tracked_splitting(model: &Model, flux: FluxPoint, ng: f64, r: &ChargeReference) -> Result<f64> {
    let (vals, u) = eigen_full(model, flux, ng)?;
    let overlap = |v: &[f64], j: usize| -> f64 {
        let d: f64 = (0..r.dim).map(|i| v[i] * u[(i, j)]).sum();
        d * d
    };
    let cols = r.dim.min(16);
    let best = |v: &[f64], skip: Option<usize>| -> usize {
        (0..cols)
            .filter(|&j| Some(j) != skip)
            .max_by(|&a, &b| overlap(v, a).total_cmp(&overlap(v, b)))
            .unwrap_or(0)
    };
    let ig = best(&r.ground, None);
    let ie = best(&r.excited, Some(ig));
    Ok(vals[ie] - vals[ig])
}

fn curvature(model: &Model, flux: FluxPoint, r: &ChargeReference, h: f64) -> Result<f64> {
    let mut v = [0.0; 5];
    for (k, x) in v.iter_mut().enumerate() {
        let ng = (k as f64 - 2.0) * h;
        *x = if k == 2 {
            r.splitting
        } else {
            tracked_splitting(model, flux, ng, r)?
        };
    }
    Ok((-v[0] + 16.0 * v[1] - 30.0 * v[2] + 16.0 * v[3] - v[4]) / (12.0 * h * h))
}

/// Offset-charge oracle: d²δE/dn_g² from exact levels of H(n_g) by a 5-point stencil.
pub fn tphi_charge_numeric(
    model: &Model,
    flux: FluxPoint,
    env: &NoiseEnv,
    opts: &NumericOptions,
) -> Result<ChargeDephasing> {
    let s = &model.scales;
    let c = s.consts();
    let r = charge_reference(model, flux)?;
    let guard_scale = 2.0 * s.ec * env.ac_e * r.odd_e;
    let degenerate = r.gap.abs() < opts.guard_factor * guard_scale;
    if degenerate && opts.guard {
        let shift = tracked_splitting(model, flux, env.ac_e, &r)? - r.splitting;
        return Ok(ChargeDephasing {
            t_s: charge_time_shift(&c, shift),
            degenerate,
            gap_e2_ee_ghz: r.gap,
            guard_scale_ghz: guard_scale,
            curvature_ghz: f64::NAN,
            shift_ghz: shift,
            richardson_rel_change: 0.0,
        });
    }
    if degenerate {
        return Err(FluxtuneError::Degenerate {
            f_over_pi: flux.f / PI,
            gap: r.gap,
        });
    }
    let h = opts.charge_step;
    if !(h > 0.0) {
        return Err(FluxtuneError::IllConditioned(format!("charge step {h:e}")));
    }
    let k = curvature(model, flux, &r, h)?;
    let k_half = curvature(model, flux, &r, h / 2.0)?;
    Ok(ChargeDephasing {
        t_s: charge_time_curvature(&c, env.ac_e, k),
        degenerate,
        gap_e2_ee_ghz: r.gap,
        guard_scale_ghz: guard_scale,
        curvature_ghz: k,
        shift_ghz: f64::NAN,
        richardson_rel_change: ((k - k_half) / k_half).abs(),
    })
}

/// All four characteristic times at one bias point (closed forms).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseBudget {
    pub f: f64,
    pub f_prime: f64,
    pub delta_e: f64,
    pub t1_flux_s: f64,
    pub tphi_flux_s: f64,
    pub tphi_ic_s: f64,
    pub tphi_charge_s: f64,
    pub charge_degenerate: bool,
    pub gap_e2_ee_ghz: f64,
    pub t1_rates_per_s: [f64; 3],
    pub errors: Vec<String>,
}

/// Runs every estimator; a failing channel yields NaN and an entry in `errors`.
pub fn budget(
    model: &Model,
    flux: FluxPoint,
    env: &NoiseEnv,
    delta_e_ghz: f64,
    opts: &NumericOptions,
) -> NoiseBudget {
    let s = &model.scales;
    let mut errors = Vec::new();
    let t1 = t1_flux(s, flux, env, delta_e_ghz);
    let tphi_ic_s = tphi_ic(s, delta_e_ghz, env).unwrap_or_else(|e| {
        errors.push(format!("tphi_ic: {e}"));
        f64::NAN
    });
    let (tphi_charge_s, charge_degenerate, gap) =
        match tphi_charge_closed(s, flux, env, model.formula, opts) {
            Ok(c) => (c.t_s, c.degenerate, c.gap_e2_ee_ghz),
            Err(e) => {
                errors.push(format!("tphi_charge: {e}"));
                (f64::NAN, true, f64::NAN)
            }
        };
    NoiseBudget {
        f: flux.f,
        f_prime: flux.f_prime,
        delta_e: delta_e_ghz,
        t1_flux_s: t1.t1_s,
        tphi_flux_s: tphi_flux_closed(s, flux, env),
        tphi_ic_s,
        tphi_charge_s,
        charge_degenerate,
        gap_e2_ee_ghz: gap,
        t1_rates_per_s: t1.rates_per_s,
        errors,
    }
}

/// Maximum of the closed-form T₁ along a constant-δE schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T1Peak {
    pub f: f64,
    pub f_prime: f64,
    pub t1_s: f64,
}

/// Coarse scan over [lo, hi]·π followed by golden-section refinement.
pub fn locate_t1_max(
    model: &Model,
    env: &NoiseEnv,
    target: f64,
    engine: EngineKind,
    range_over_pi: (f64, f64),
    coarse_points: usize,
    solver: &SolverOptions,
) -> Result<T1Peak> {
    let eval = |f: f64| -> Result<(f64, f64)> {
        let fp = solve_fprime(model, f, target, engine, solver)?;
        Ok((t1_flux(&model.scales, FluxPoint::new(f, fp), env, target).t1_s, fp))
    };
    let grid = crate::schedule::f_grid(range_over_pi.0, range_over_pi.1, coarse_points.max(3));
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, &f) in grid.iter().enumerate() {
        let (t, _) = eval(f)?;
        if t > best.1 {
            best = (i, t);
        }
    }
    let i = best.0;
    let mut a = grid[i.saturating_sub(1)];
    let mut b = grid[(i + 1).min(grid.len() - 1)];
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let mut t1 = eval(x1)?.0;
    let mut t2 = eval(x2)?.0;
    while b - a > 1e-10 * PI {
        if t1 < t2 {
            a = x1;
            x1 = x2;
            t1 = t2;
            x2 = a + ratio * (b - a);
            t2 = eval(x2)?.0;
        } else {
            b = x2;
            x2 = x1;
            t2 = t1;
            x1 = b - ratio * (b - a);
            t1 = eval(x1)?.0;
        }
    }
    let f = 0.5 * (a + b);
    let (t1_s, f_prime) = eval(f)?;
    Ok(T1Peak { f, f_prime, t1_s })
}

/// Reference charge-dephasing minimum and where it is reported.
pub const CHARGE_TARGET_MIN_S: f64 = 1.002_93e-3;
pub const CHARGE_TARGET_F_OVER_PI: f64 = 0.999_51;

/// Comparison of the computed charge-dephasing curve against the reference minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeDiscrepancyReport {
    pub target_min_s: f64,
    pub target_f_over_pi: f64,
    pub tolerance_rel: f64,
    pub closed_min_s: f64,
    pub closed_min_f_over_pi: f64,
    pub closed_at_target_s: f64,
    pub numeric_at_target_s: f64,
    pub gap_e2_ee_at_target_ghz: f64,
    pub guard_at_target_closed: bool,
    pub guard_at_target_numeric: bool,
    pub reproduced: bool,
}

/// Scans the closed form over `grid` (rad) and evaluates both methods at the reference point.
pub fn charge_discrepancy_report(
    model: &Model,
    env: &NoiseEnv,
    target: f64,
    engine: EngineKind,
    grid: &[f64],
    solver: &SolverOptions,
    opts: &NumericOptions,
) -> Result<ChargeDiscrepancyReport> {
    let samples = grid
        .iter()
        .map(|&f| {
            let fp = solve_fprime(model, f, target, engine, solver)?;
            let t = tphi_charge_closed(&model.scales, FluxPoint::new(f, fp), env, model.formula, opts)?.t_s;
            Ok((f, t))
        })
        .collect::<Result<Vec<_>>>()?;
    charge_discrepancy_from_samples(model, env, target, engine, &samples, solver, opts)
}

/// As [`charge_discrepancy_report`] with the closed-form curve supplied as (f, T) pairs.
pub fn charge_discrepancy_from_samples(
    model: &Model,
    env: &NoiseEnv,
    target: f64,
    engine: EngineKind,
    samples: &[(f64, f64)],
    solver: &SolverOptions,
    opts: &NumericOptions,
) -> Result<ChargeDiscrepancyReport> {
    let s = &model.scales;
    let mut min = (f64::INFINITY, f64::NAN);
    for &(f, t) in samples {
        if t < min.0 {
            min = (t, f / PI);
        }
    }
    let f_ref = CHARGE_TARGET_F_OVER_PI * PI;
    let flux = FluxPoint::new(f_ref, solve_fprime(model, f_ref, target, engine, solver)?);
    let closed = tphi_charge_closed(s, flux, env, model.formula, opts)?;
    let numeric = tphi_charge_numeric(model, flux, env, opts)?;
    let tolerance_rel = 0.05;
    let reproduced = ((min.0 - CHARGE_TARGET_MIN_S) / CHARGE_TARGET_MIN_S).abs() <= tolerance_rel
        && (min.1 - CHARGE_TARGET_F_OVER_PI).abs() <= 2e-4;
    Ok(ChargeDiscrepancyReport {
        target_min_s: CHARGE_TARGET_MIN_S,
        target_f_over_pi: CHARGE_TARGET_F_OVER_PI,
        tolerance_rel,
        closed_min_s: min.0,
        closed_min_f_over_pi: min.1,
        closed_at_target_s: closed.t_s,
        numeric_at_target_s: numeric.t_s,
        gap_e2_ee_at_target_ghz: numeric.gap_e2_ee_ghz,
        guard_at_target_closed: closed.degenerate,
        guard_at_target_numeric: numeric.degenerate,
        reproduced,
    })
}
