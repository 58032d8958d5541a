use fluxtune::hilbert;
use fluxtune::noise::{self, NoiseEnv, NumericOptions};
use fluxtune::params::{derive_scales, DeviceParams};
use fluxtune::perturb::Formula;
use fluxtune::schedule::{self, EngineKind, FluxPoint, Model, SolverOptions};
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::OnceLock;

const TARGET: f64 = 2.000_052_546_55;

fn model() -> &'static Model {
    static M: OnceLock<Model> = OnceLock::new();
    M.get_or_init(|| Model::with_defaults(derive_scales(&DeviceParams::reference_device()).unwrap()).unwrap())
}

fn env() -> NoiseEnv {
    NoiseEnv::from_device(&DeviceParams::reference_device())
}

fn on_schedule(f: f64) -> FluxPoint {
    let fp = schedule::solve_fprime(model(), f, TARGET, EngineKind::Exact, &SolverOptions::default()).unwrap();
    FluxPoint::new(f, fp)
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

#[test]
fn t1_peak_on_simplified_schedule() {
    let mut m = model().clone();
    m.formula = Formula::Simplified;
    let peak = noise::locate_t1_max(&m, &env(), TARGET, EngineKind::Perturbative, (0.995, 0.9995), 60, &SolverOptions::default())
        .unwrap();
    assert!(rel(peak.t1_s, 1.068_93) < 5e-3, "{peak:?}");
    assert!((peak.f / PI - 0.998_487).abs() < 2e-4);
}

#[test]
fn t1_infinite_without_mutuals() {
    let mut e = env();
    e.m_phi0_per_a = [0.0; 3];
    let r = noise::t1_flux(&model().scales, on_schedule(0.99 * PI), &e, TARGET);
    assert_eq!(r.rates_per_s, [0.0; 3]);
    assert!(r.t1_s.is_infinite());
}

#[test]
fn t1_scalings() {
    let s = &model().scales;
    let flux = FluxPoint::new(0.99 * PI, 1.01 * PI);
    let base = noise::t1_flux(s, flux, &env(), TARGET).t1_s;
    let mut e = env();
    e.zr_ohm *= 2.0;
    assert!(rel(noise::t1_flux(s, flux, &e, TARGET).t1_s, 2.0 * base) < 1e-12);
    let mut e = env();
    e.m_phi0_per_a = [0.0, 0.0, 35.0];
    let one = noise::t1_flux(s, flux, &e, TARGET).t1_s;
    e.m_phi0_per_a[2] *= 2.0;
    assert!(rel(noise::t1_flux(s, flux, &e, TARGET).t1_s, one / 4.0) < 1e-12);
}

#[test]
fn golden_rule_matches_third_channel() {
    let m = model();
    for fr in [0.995, 0.999, 0.9995] {
        let flux = on_schedule(fr * PI);
        let closed = noise::t1_flux(&m.scales, flux, &env(), TARGET).rates_per_s[2];
        let golden = noise::t1_golden_rule(m, flux, &env()).unwrap().relaxation.rates_per_s[2];
        assert!(rel(golden, closed) < 0.10, "{fr}: {golden} vs {closed}");
    }
}

#[test]
fn charge_relaxation_element_vanishes() {
    let m = model();
    for fr in [0.96, 0.99, 0.999] {
        let lv = hilbert::solve_levels(&m.ops, &m.scales, on_schedule(fr * PI), m.form).unwrap();
        assert!(hilbert::selection_rules(&lv, &m.ops).n_eg <= 1e-10);
    }
}

#[test]
fn critical_current_dephasing() {
    let s = &model().scales;
    let t = noise::tphi_ic(s, s.ec + 5.2546e-5, &env()).unwrap();
    assert!(rel(t, 1.514_42) < 1e-3, "{t}");
    let t2 = noise::tphi_ic(s, s.ec + 2.0 * 5.2546e-5, &env()).unwrap();
    assert!(rel(t2, t / 2.0) < 1e-12);
    let mut e = env();
    e.aic_rel = 0.0;
    assert!(noise::tphi_ic(s, TARGET, &e).unwrap().is_infinite());
    assert!(noise::tphi_ic(s, s.ec, &env()).is_err());
}

#[test]
fn flux_dephasing_closed_vs_numeric() {
    let m = model();
    for fr in [0.995, 0.998, 0.9995] {
        let flux = on_schedule(fr * PI);
        let c = noise::tphi_flux_closed(&m.scales, flux, &env());
        let n = noise::tphi_flux_numeric(m, flux, &env(), &NumericOptions::default()).unwrap();
        assert!(rel(n.t_s, c) < 0.10, "{fr}: {} vs {c}", n.t_s);
        assert!(!n.ill_conditioned);
        let hf = noise::flux_channels_hellmann_feynman(m, flux).unwrap();
        for (a, b) in hf.iter().zip(&n.channels) {
            assert!((a - b).abs() < 2e-3 * b.abs().max(1e-2), "{hf:?} {:?}", n.channels);
        }
    }
    let t = noise::tphi_flux_closed(&m.scales, on_schedule(0.99 * PI), &env());
    assert!((1e-6..1e-4).contains(&t), "{t}");
}

#[test]
fn flux_dephasing_scales_inversely_with_amplitude() {
    let s = &model().scales;
    let flux = FluxPoint::new(0.99 * PI, 1.01 * PI);
    let a = noise::tphi_flux_closed(s, flux, &env());
    let mut e = env();
    e.aphi_phi0 *= 2.0;
    assert!(rel(noise::tphi_flux_closed(s, flux, &e), a / 2.0) < 1e-12);
    e.aphi_phi0 = 0.0;
    assert!(noise::tphi_flux_closed(s, flux, &e).is_infinite());
}

#[test]
fn charge_dephasing_closed_vs_numeric_unguarded() {
    let m = model();
    let opts = NumericOptions::default();
    let flux = on_schedule(0.96 * PI);
    let c = noise::tphi_charge_closed(&m.scales, flux, &env(), m.formula, &opts).unwrap();
    let n = noise::tphi_charge_numeric(m, flux, &env(), &opts).unwrap();
    assert!(!c.degenerate && !n.degenerate);
    assert!(rel(n.t_s, c.t_s) < 0.10, "{} vs {}", n.t_s, c.t_s);
    // Second-order channel: T ∝ 1/A².
    let mut e = env();
    e.ac_e *= 2.0;
    let c2 = noise::tphi_charge_closed(&m.scales, flux, &e, m.formula, &opts).unwrap();
    assert!(rel(c2.t_s, c.t_s / 4.0) < 1e-12);
    e.ac_e = 0.0;
    let c0 = noise::tphi_charge_closed(&m.scales, flux, &e, m.formula, &opts).unwrap();
    assert!(c0.t_s.is_infinite());
}

#[test]
fn guard_trips_near_level_crossing() {
    let m = model();
    let opts = NumericOptions::default();
    let flux = on_schedule(0.9995 * PI);
    let c = noise::tphi_charge_closed(&m.scales, flux, &env(), m.formula, &opts).unwrap();
    assert!(c.degenerate);
    assert!(c.t_s.is_finite() && c.t_s > 0.0);
}

#[test]
fn discrepancy_report_is_structured() {
    let m = model();
    let grid = schedule::f_grid(0.999, 0.9995, 4);
    let r = noise::charge_discrepancy_report(
        m,
        &env(),
        TARGET,
        EngineKind::Exact,
        &grid,
        &SolverOptions::default(),
        &NumericOptions::default(),
    )
    .unwrap();
    assert_eq!(r.target_min_s, noise::CHARGE_TARGET_MIN_S);
    assert!(r.closed_at_target_s.is_finite() && r.numeric_at_target_s.is_finite());
    assert!(r.gap_e2_ee_at_target_ghz.is_finite());
    let json = serde_json::to_value(&r).unwrap();
    for key in ["closed_at_target_s", "numeric_at_target_s", "gap_e2_ee_at_target_ghz", "guard_at_target_closed", "reproduced"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}

#[test]
fn budget_positive_along_schedule() {
    let m = model();
    for f in schedule::f_grid(0.96, 0.9995, 12) {
        let flux = on_schedule(f);
        let b = noise::budget(m, flux, &env(), TARGET, &NumericOptions::default());
        assert!(b.errors.is_empty(), "{:?}", b.errors);
        for t in [b.t1_flux_s, b.tphi_flux_s, b.tphi_ic_s, b.tphi_charge_s] {
            assert!(t.is_finite() && t > 0.0, "{b:?}");
        }
        assert_eq!(b, noise::budget(m, flux, &env(), TARGET, &NumericOptions::default()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn t1_mutual_exchange_symmetry(d in 0.0..0.3f64, fp in 0.0..(2.0 * PI), m1 in 0.0..80.0f64, m2 in 0.0..80.0f64) {
        let s = &model().scales;
        let mut a = env();
        a.m_phi0_per_a = [m1, m2, 35.0];
        let mut b = env();
        b.m_phi0_per_a = [m2, m1, 35.0];
        let ta = noise::t1_flux(s, FluxPoint::from_delta(d, fp), &a, TARGET).t1_s;
        let tb = noise::t1_flux(s, FluxPoint::from_delta(d, (2.0 * PI - fp) % (2.0 * PI)), &b, TARGET).t1_s;
        prop_assert!(rel(ta, tb) < 1e-10);
    }
}
