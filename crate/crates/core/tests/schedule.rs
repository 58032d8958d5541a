use fluxtune::params::{derive_scales, DeviceParams};
use fluxtune::perturb::Formula;
use fluxtune::schedule::{
    self, EngineKind, FluxPoint, Model, Regime, RegimeThresholds, SolverOptions,
};
use fluxtune::FluxtuneError;
use std::f64::consts::PI;
use std::sync::OnceLock;

const TARGET: f64 = 2.000_052_546_55;

fn model() -> &'static Model {
    static M: OnceLock<Model> = OnceLock::new();
    M.get_or_init(|| Model::with_defaults(derive_scales(&DeviceParams::reference_device()).unwrap()).unwrap())
}

fn opts() -> SolverOptions {
    SolverOptions::default()
}

#[test]
fn threshold_limits_and_monotonicity() {
    assert!((schedule::min_fprime_for_lambda(0.0) - PI).abs() < 1e-12);
    let l = model().scales.lambda;
    let t = schedule::min_fprime_for_lambda(l);
    // 2π − arccos(−1 + x) ≈ π + √(2x), x = 6λ⁴/11.
    let x = 6.0 * l.powi(4) / 11.0;
    assert!((t - PI - (2.0 * x).sqrt()).abs() < 1e-5);
    let ts: Vec<f64> = (1..20).map(|i| schedule::min_fprime_for_lambda(0.02 * i as f64)).collect();
    assert!(ts.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn solve_at_reference_point() {
    let m = model();
    for engine in [EngineKind::Perturbative, EngineKind::Exact] {
        let fp = schedule::solve_fprime(m, 0.999 * PI, TARGET, engine, &opts()).unwrap();
        assert!((fp / PI - 1.006).abs() < 1e-3, "{engine:?} {}", fp / PI);
        let de = m.splitting(FluxPoint::new(0.999 * PI, fp), engine).unwrap();
        assert!((de - TARGET).abs() < 1e-10);
    }
}

#[test]
fn f_equal_pi_is_unreachable() {
    let err = schedule::solve_fprime(model(), PI, TARGET, EngineKind::Perturbative, &opts()).unwrap_err();
    assert!(matches!(err, FluxtuneError::UnreachableTarget { .. }), "{err:?}");
}

#[test]
fn engines_converge_towards_pi() {
    let m = model();
    let gap = |fr: f64| {
        let a = schedule::solve_fprime(m, fr * PI, TARGET, EngineKind::Perturbative, &opts()).unwrap();
        let b = schedule::solve_fprime(m, fr * PI, TARGET, EngineKind::Exact, &opts()).unwrap();
        (a - b).abs()
    };
    let far = gap(0.98);
    let near = gap(0.998);
    assert!(near < far, "{near} vs {far}");
    assert!(far < 0.02 * PI);
}

#[test]
fn regimes() {
    let t = RegimeThresholds::default();
    assert_eq!(schedule::regime(0.36, &t), Regime::Ultrastrong);
    assert_eq!(schedule::regime(0.0, &t), Regime::Negligible);
    assert_eq!(schedule::regime(0.05, &t), Regime::WeakToStrong);
}

#[test]
fn identity_residuals() {
    let m = model();
    let s = &m.scales;
    assert_eq!(schedule::identity_residual(s, FluxPoint::from_delta(0.0, 1.3 * PI), 0.0, s.ec), 0.0);
    // Exact (g, δE) carry higher-order content: residual shrinks with Δ.
    let res = |fr: f64| {
        let fp = schedule::solve_fprime(m, fr * PI, TARGET, EngineKind::Exact, &opts()).unwrap();
        let flux = FluxPoint::new(fr * PI, fp);
        let c = schedule::engine_couplings(m, flux, EngineKind::Exact).unwrap();
        schedule::identity_residual(s, flux, c.g, TARGET)
    };
    let (a, b) = (res(0.99), res(0.999));
    assert!(b < a && a < 0.1, "{a} {b}");
}

#[test]
fn perturbative_schedule_properties() {
    let mut m = model().clone();
    m.formula = Formula::Simplified;
    let grid = schedule::f_grid(0.96, 0.9995, 40);
    let t = RegimeThresholds::default();
    let sch = schedule::build_schedule(&m, &grid, TARGET, EngineKind::Perturbative, &opts(), &t).unwrap();
    assert_eq!(sch.rows.len(), 40);
    let thr = schedule::min_fprime(&m.scales);
    for (r, f) in sch.rows.iter().zip(&grid) {
        assert_eq!(r.f, *f);
        assert!(r.f_prime > thr && r.f_prime < 2.0 * PI);
        assert!(r.delta > 0.0 && r.delta <= 0.2 * PI);
        assert!((r.delta_e_pert - TARGET).abs() < 1e-10);
        assert!(schedule::identity_residual(&m.scales, r.flux(), r.g, r.delta_e_pert) <= 1e-12);
    }
    assert!(sch.rows.windows(2).all(|w| w[1].g_over_wc < w[0].g_over_wc));
}

#[test]
fn exact_schedule_properties_and_determinism() {
    let m = model();
    let grid = schedule::f_grid(0.96, 0.9995, 24);
    let t = RegimeThresholds::default();
    let a = schedule::build_schedule(m, &grid, TARGET, EngineKind::Exact, &opts(), &t).unwrap();
    let b = schedule::build_schedule(m, &grid, TARGET, EngineKind::Exact, &opts(), &t).unwrap();
    assert_eq!(a, b);
    let first = &a.rows[0];
    let last = a.rows.last().unwrap();
    assert!(first.g_over_wc > 0.3 && first.g_over_wc < 0.4);
    assert!(last.g_over_wc < 0.01);
    assert_eq!(first.regime, Regime::Ultrastrong);
    for r in &a.rows {
        assert!((r.delta_e_exact - TARGET).abs() <= 1e-8 * TARGET);
        if r.f > 0.988 * PI {
            assert!((r.gz / r.g).abs() < 0.1 && (r.g0 / r.g).abs() < 0.1);
        }
    }
    assert!(a.rows.windows(2).all(|w| w[1].g_over_wc < w[0].g_over_wc));
}

#[test]
fn row_errors_carry_context() {
    let grid = vec![0.99 * PI, PI];
    let err = schedule::build_schedule(model(), &grid, TARGET, EngineKind::Perturbative, &opts(), &RegimeThresholds::default())
        .unwrap_err();
    match err {
        FluxtuneError::Row { row, f_over_pi, .. } => {
            assert_eq!(row, 1);
            assert_eq!(f_over_pi, 1.0);
        }
        other => panic!("{other:?}"),
    }
}
