use faer::Mat;
use fluxtune::hilbert::{self, BasisSpec, HamiltonianForm, HermitianOperator, C64};
use fluxtune::params::{derive_scales, DerivedScales, DeviceParams};
use fluxtune::perturb::{self, Formula};
use fluxtune::schedule::{self, EngineKind, FluxPoint, Model, SolverOptions};
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::OnceLock;

const TARGET: f64 = 2.000_052_546_55;

fn model() -> &'static Model {
    static M: OnceLock<Model> = OnceLock::new();
    M.get_or_init(|| Model::with_defaults(derive_scales(&DeviceParams::reference_device()).unwrap()).unwrap())
}

fn scales() -> &'static DerivedScales {
    &model().scales
}

fn on_schedule(f: f64) -> FluxPoint {
    let fp = schedule::solve_fprime(model(), f, TARGET, EngineKind::Exact, &SolverOptions::default()).unwrap();
    FluxPoint::new(f, fp)
}

fn max_dev(a: faer::MatRef<'_, C64>, b: faer::MatRef<'_, C64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    m
}

#[test]
fn basis_dimensions() {
    assert_eq!(BasisSpec::new(15, 20).unwrap().dim(), 615);
    assert_eq!(BasisSpec::new(2, 1).unwrap().dim(), 6);
    assert!(BasisSpec::new(1, 5).is_err());
    assert!(BasisSpec::new(5, 0).is_err());
}

#[test]
fn basis_index_bijection_row_major() {
    let b = BasisSpec::new(4, 3).unwrap();
    for i in 0..b.dim() {
        let (n, q) = b.state(i);
        assert_eq!(b.index(n, q), Some(i));
    }
    assert_eq!(b.state(0), (0, -3));
    assert_eq!(b.state(1), (0, -2));
    assert_eq!(b.state(7), (1, -3));
    assert_eq!(b.index(4, 0), None);
    assert_eq!(b.index(0, 4), None);
}

#[test]
fn trig_matrix_elements() {
    let ops = &model().ops;
    let l2 = scales().lambda_sq();
    let l = scales().lambda;
    let c = ops.cos_phi_plus(0.0);
    let s = ops.sin_phi_plus(0.0);
    assert!((c[(0, 0)] - (-l2 / 2.0).exp()).abs() < 1e-10);
    assert!((s[(1, 0)] - l * (-l2 / 2.0).exp()).abs() < 1e-10);
    assert!((c[(1, 1)] - (1.0 - l2) * (-l2 / 2.0).exp()).abs() < 1e-10);
}

#[test]
fn zero_delta_spectrum_is_zero_order() {
    let m = model();
    let flux = FluxPoint::new(PI, 1.3 * PI);
    let h = hilbert::assemble_atom_hamiltonian(&m.ops, scales(), flux, m.form).unwrap();
    let sp = hilbert::eigensolve(&h, 5).unwrap();
    let s = scales();
    let expect = [
        perturb::zero_order_energy(0, 0, s),
        perturb::zero_order_energy(0, 1, s),
        perturb::zero_order_energy(0, -1, s),
        perturb::zero_order_energy(0, 2, s),
        perturb::zero_order_energy(0, -2, s),
    ];
    for (e, x) in sp.eigenvalues.iter().zip(expect) {
        assert!(((e - x) / x).abs() < 1e-12, "{e} vs {x}");
    }
    let lv = hilbert::lowest_levels(&m.ops, s, flux, m.form, 3).unwrap();
    assert!((lv[0] - (s.eb / 2.0 + 4.0 * s.ej)).abs() < 1e-9);
    assert!((lv[1] - (s.eb / 2.0 + s.ec + 4.0 * s.ej)).abs() < 1e-9);
    assert!((lv[2] - lv[1]).abs() < 1e-9);
}

#[test]
fn linearized_form_differs_at_second_order() {
    let m = model();
    let s = scales();
    let fp = 1.2 * PI;
    let mut ratios = Vec::new();
    for d in [0.1, 0.05, 0.025] {
        let flux = FluxPoint::from_delta(d, fp);
        let he = hilbert::assemble_atom_hamiltonian(&m.ops, s, flux, HamiltonianForm::Exact).unwrap();
        let hl = hilbert::assemble_atom_hamiltonian(&m.ops, s, flux, HamiltonianForm::Linearized).unwrap();
        let h0 = hilbert::assemble_atom_hamiltonian(&m.ops, s, FluxPoint::from_delta(0.0, fp), HamiltonianForm::Exact)
            .unwrap();
        let diff = hilbert::frobenius((he.mat() - hl.mat()).as_ref());
        let v = hilbert::frobenius((he.mat() - h0.mat()).as_ref());
        ratios.push(diff / v);
    }
    for w in ratios.windows(2) {
        let slope = (w[0] / w[1]).log2();
        assert!((slope - 2.0).abs() < 0.05, "slope {slope}");
    }
}

#[test]
fn parity_squares_to_one_and_fixes_zero_charge() {
    let basis = model().ops.basis();
    let p = hilbert::parity_operator(basis, 0.07);
    let p2 = p.mat() * p.mat();
    let id = Mat::<C64>::identity(basis.dim(), basis.dim());
    assert!(max_dev(p2.as_ref(), id.as_ref()) <= 1e-14);
    let mut zero = vec![C64::new(0.0, 0.0); basis.dim()];
    zero[basis.index(3, 0).unwrap()] = C64::new(1.0, 0.0);
    let pz = p.apply(&zero);
    for (a, b) in pz.iter().zip(&zero) {
        assert!((a - b).norm() < 1e-15);
    }
}

#[test]
fn eigensolver_small_cases() {
    let one = Mat::from_fn(1, 1, |_, _| C64::new(3.5, 0.0));
    let sp = hilbert::eigensolve_matrix(one.as_ref(), 1).unwrap();
    assert_eq!(sp.eigenvalues, vec![3.5]);

    // Deterministic pseudo-random Hermitian matrix.
    let n = 50;
    let mut seed = 0x2545_f491_4f6c_dd1du64;
    let mut next = || {
        seed ^= seed << 13;
        seed ^= seed >> 7;
        seed ^= seed << 17;
        (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let mut a = Mat::<C64>::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let z = if i == j { C64::new(next(), 0.0) } else { C64::new(next(), next()) };
            a[(i, j)] = z;
            a[(j, i)] = z.conj();
        }
    }
    let sp = hilbert::eigensolve_matrix(a.as_ref(), n).unwrap();
    let u = &sp.eigenvectors;
    let d = Mat::from_fn(n, n, |i, j| if i == j { C64::new(sp.eigenvalues[i], 0.0) } else { C64::new(0.0, 0.0) });
    let rebuilt = u * &d * u.adjoint();
    assert!(max_dev(rebuilt.as_ref(), a.as_ref()) < 1e-10);
    let norm = hilbert::frobenius(a.as_ref());
    for k in 0..n {
        let v = sp.vector(k);
        let hv: Vec<C64> = (0..n).map(|i| (0..n).map(|j| a[(i, j)] * v[j]).sum()).collect();
        let r: f64 = hv.iter().zip(&v).map(|(x, y)| (x - y * sp.eigenvalues[k]).norm_sqr()).sum::<f64>().sqrt();
        assert!(r <= 1e-10 * norm);
    }
    let gram = u.adjoint() * u;
    let id = Mat::<C64>::identity(n, n);
    assert!(max_dev(gram.as_ref(), id.as_ref()) < 1e-10);
    assert!(sp.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn non_hermitian_rejected() {
    let basis = BasisSpec::new(2, 1).unwrap();
    let mut m = Mat::<C64>::zeros(6, 6);
    m[(0, 1)] = C64::new(1.0, 0.0);
    assert!(HermitianOperator::new(basis, m.clone()).is_err());
    assert!(hilbert::eigensolve_matrix(m.as_ref(), 2).is_err());
}

#[test]
fn schedule_point_levels() {
    let m = model();
    let flux = on_schedule(0.999 * PI);
    let lv = hilbert::solve_levels(&m.ops, scales(), flux, m.form).unwrap();
    assert!((lv.splitting() - TARGET).abs() < 1e-9);
    assert!((lv.ground.parity - 1.0).abs() < 1e-6);
    assert!((lv.excited.parity - 1.0).abs() < 1e-6);
    assert!((lv.odd.parity + 1.0).abs() < 1e-6);
    let all = hilbert::lowest_levels(&m.ops, scales(), flux, m.form, 5).unwrap();
    assert!((all[0] - lv.e_g()).abs() < 1e-9);
}

#[test]
fn sector_path_matches_generic_path() {
    let m = model();
    let flux = on_schedule(0.985 * PI);
    let a = hilbert::solve_levels(&m.ops, scales(), flux, m.form).unwrap();
    let b = hilbert::solve_levels_generic(&m.ops, scales(), flux, m.form).unwrap();
    for (x, y) in [(a.e_g(), b.e_g()), (a.e_e(), b.e_e()), (a.e_2(), b.e_2())] {
        assert!((x - y).abs() < 1e-9);
    }
    let ca = hilbert::exact_couplings(&a, &m.ops, scales());
    let cb = hilbert::exact_couplings(&b, &m.ops, scales());
    assert!(((ca.g - cb.g) / ca.g).abs() < 1e-9);
    assert!(((ca.gz - cb.gz) / ca.gz).abs() < 1e-6);
}

#[test]
fn selection_rules_and_purely_imaginary_transition() {
    let m = model();
    for fr in [0.97, 0.995, 0.9995] {
        let flux = on_schedule(fr * PI);
        let lv = hilbert::solve_levels_generic(&m.ops, scales(), flux, m.form).unwrap();
        let sel = hilbert::selection_rules(&lv, &m.ops);
        assert!(sel.n_eg <= 1e-10 && sel.phi_g_odd <= 1e-10 && sel.phi_e_odd <= 1e-10, "{sel:?}");
        let c = hilbert::exact_couplings(&lv, &m.ops, scales());
        assert!(c.gx.abs() <= 1e-10 * scales().cavity_ghz);
        assert!(c.g > 0.0);
    }
}

#[test]
fn transition_element_against_closed_form() {
    let m = model();
    let flux = on_schedule(0.999 * PI);
    let lv = hilbert::solve_levels(&m.ops, scales(), flux, m.form).unwrap();
    let ex = hilbert::exact_elements(&lv, &m.ops);
    let pt = perturb::phi_elements(scales(), flux, Formula::Simplified);
    assert!(ex.phi_eg.re.abs() < 1e-14);
    // Agreement to O(Δ²) relative.
    assert!(((ex.phi_eg.im - pt.eg.im) / pt.eg.im).abs() < 0.01);
    let phi = m.ops.phi_plus();
    let via_op = hilbert::transition_element(phi.mat(), &lv.excited.vector, &lv.ground.vector).unwrap();
    assert!((via_op - ex.phi_eg).norm() < 1e-14);
}

#[test]
fn couplings_vanish_at_symmetric_fprime() {
    let m = model();
    let flux = FluxPoint::from_delta(0.01, PI);
    let lv = hilbert::solve_levels(&m.ops, scales(), flux, m.form).unwrap();
    let c = hilbert::exact_couplings(&lv, &m.ops, scales());
    assert!(c.g0.abs() < 1e-9 && c.gz.abs() < 1e-9, "{c:?}");
}

#[test]
fn ultrastrong_at_schedule_start() {
    let m = model();
    let flux = on_schedule(0.96 * PI);
    let lv = hilbert::solve_levels(&m.ops, scales(), flux, m.form).unwrap();
    let c = hilbert::exact_couplings(&lv, &m.ops, scales());
    assert!(c.g_over_wc > 0.3 && c.g_over_wc < 0.4, "{}", c.g_over_wc);
}

#[test]
fn parity_breaking_negative_control() {
    let m = model();
    let flux = on_schedule(0.99 * PI);
    let h = hilbert::assemble_atom_hamiltonian(&m.ops, scales(), flux, m.form).unwrap();
    let n = m.ops.n_minus();
    let broken = h.mat() + n.mat() * faer::Scale(C64::new(0.05, 0.0));
    let sp = hilbert::eigensolve_matrix(broken.as_ref(), 2).unwrap();
    let elem = hilbert::element(&n, &sp.vector(1), &sp.vector(0)).norm();
    assert!(elem > 1e-6, "{elem}");
}

#[test]
fn truncation_convergence() {
    let s = scales().clone();
    let small = Model::new(s.clone(), BasisSpec::new(12, 15).unwrap(), HamiltonianForm::Exact, Formula::Full).unwrap();
    let large = Model::new(s.clone(), BasisSpec::new(16, 20).unwrap(), HamiltonianForm::Exact, Formula::Full).unwrap();
    let flux = on_schedule(0.99 * PI);
    let a = hilbert::lowest_levels(&small.ops, &s, flux, small.form, 5).unwrap();
    let b = hilbert::lowest_levels(&large.ops, &s, flux, large.form, 5).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-10 * s.ec);
    }
}

#[test]
fn delta_domain_enforced() {
    let m = model();
    let flux = FluxPoint::from_delta(0.6 * PI, PI);
    assert!(hilbert::assemble_atom_hamiltonian(&m.ops, scales(), flux, m.form).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn hermitian_and_parity_symmetric(d in 0.0..0.5f64, fp in 0.0..(2.0 * PI), lin in any::<bool>()) {
        let m = model();
        let form = if lin { HamiltonianForm::Linearized } else { HamiltonianForm::Exact };
        let flux = FluxPoint::from_delta(d, fp);
        let h = hilbert::assemble_atom_hamiltonian(&m.ops, scales(), flux, form).unwrap();
        prop_assert!(hilbert::hermiticity_defect(h.mat()) <= 1e-12 * h.frobenius_norm());
        let p = hilbert::parity_operator(m.ops.basis(), d);
        prop_assert!(p.commutator_norm(&h) / h.frobenius_norm() <= 1e-12);
    }
}
