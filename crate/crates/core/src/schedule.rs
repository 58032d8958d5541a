//! Constant-δE tuning curve f′(f), coupling regimes and the tuning identity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{FluxtuneError, Result};
use crate::hilbert::{self, BasisSpec, HamiltonianForm, OperatorSet};
use crate::params::DerivedScales;
use crate::perturb::{self, CouplingSet, Formula};

/// Bias point: loop flux f, third-loop flux f′ and Δ = π − f, all in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxPoint {
    pub f: f64,
    pub f_prime: f64,
    pub delta: f64,
}

impl FluxPoint {
    pub fn new(f: f64, f_prime: f64) -> Self {
        Self {
            f,
            f_prime,
            delta: PI - f,
        }
    }

    pub fn from_delta(delta: f64, f_prime: f64) -> Self {
        Self {
            f: PI - delta,
            f_prime,
            delta,
        }
    }
}

/// How δE(f, f′) is evaluated while solving for f′.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Perturbative,
    #[default]
    Exact,
}

impl EngineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Perturbative => "perturbative",
            Self::Exact => "exact",
        }
    }
}

/// Scales, operators and model choices shared by every evaluation.
#[derive(Debug, Clone)]
pub struct Model {
    pub scales: DerivedScales,
    pub ops: OperatorSet,
    pub form: HamiltonianForm,
    pub formula: Formula,
}

impl Model {
    pub fn new(
        scales: DerivedScales,
        basis: BasisSpec,
        form: HamiltonianForm,
        formula: Formula,
    ) -> Result<Self> {
        let ops = hilbert::build_operators(basis, &scales)?;
        Ok(Self {
            scales,
            ops,
            form,
            formula,
        })
    }

    /// Default truncation (15, 20), exact form, full formulas.
    pub fn with_defaults(scales: DerivedScales) -> Result<Self> {
        Self::new(
            scales,
            BasisSpec::new(15, 20)?,
            HamiltonianForm::Exact,
            Formula::Full,
        )
    }

    pub fn splitting(&self, flux: FluxPoint, engine: EngineKind) -> Result<f64> {
        match engine {
            EngineKind::Perturbative => Ok(perturb::splitting(&self.scales, flux, self.formula)),
            EngineKind::Exact => hilbert::exact_splitting(&self.ops, &self.scales, flux, self.form),
        }
    }
}

/// Root-finder settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Stop once |δE − target| falls below this (GHz).
    pub tolerance_ghz: f64,
    pub scan_steps: usize,
    pub max_iterations: usize,
    /// Distance kept from the bracket ends (rad).
    pub epsilon: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance_ghz: 1e-10,
            scan_steps: 64,
            max_iterations: 100,
            epsilon: 1e-9,
        }
    }
}

/// 2π − arccos((3λ⁴ − 11)/(11 + 3λ⁴)): below it the splitting cannot exceed E_c.
pub fn min_fprime(s: &DerivedScales) -> f64 {
    min_fprime_for_lambda(s.lambda)
}

pub fn min_fprime_for_lambda(lambda: f64) -> f64 {
    let l4 = lambda.powi(4);
    2.0 * PI - ((3.0 * l4 - 11.0) / (11.0 + 3.0 * l4)).acos()
}

/// Solves δE(f, f′) = target for f′ on the branch (π, 2π).
///
/// The perturbative engine scans from [`min_fprime`]; the exact engine scans
/// from π because its constant-δE curve may dip below that threshold.
pub fn solve_fprime(
    model: &Model,
    f: f64,
    target: f64,
    engine: EngineKind,
    opts: &SolverOptions,
) -> Result<f64> {
    let unreachable = |reason: String| FluxtuneError::UnreachableTarget {
        f_over_pi: f / PI,
        target,
        reason,
    };
    if !(f > 0.0 && f < PI) {
        return Err(unreachable(format!(
            "f must lie in (0, pi); at f = pi the splitting is E_c = {}",
            model.scales.ec
        )));
    }
    if target <= model.scales.ec {
        return Err(unreachable(format!("target must exceed E_c = {}", model.scales.ec)));
    }
    let lo = match engine {
        EngineKind::Perturbative => min_fprime(&model.scales),
        EngineKind::Exact => PI,
    } + opts.epsilon;
    let hi = 2.0 * PI - opts.epsilon;
    let residual = |fp: f64| -> Result<f64> { Ok(model.splitting(FluxPoint::new(f, fp), engine)? - target) };

    let steps = opts.scan_steps.max(1);
    let mut a = lo;
    let mut ra = residual(a)?;
    if ra == 0.0 {
        return Ok(a);
    }
    let mut bracket = None;
    for i in 1..=steps {
        let b = lo + (hi - lo) * i as f64 / steps as f64;
        let rb = residual(b)?;
        if rb == 0.0 {
            return Ok(b);
        }
        if ra.signum() != rb.signum() {
            bracket = Some((b, rb));
            break;
        }
        a = b;
        ra = rb;
    }
    let (mut b, mut rb) = bracket.ok_or_else(|| unreachable("no sign change on the f' branch".into()))?;

    for _ in 0..opts.max_iterations {
        let mid = 0.5 * (a + b);
        if mid <= a.min(b) || mid >= a.max(b) {
            break;
        }
        let rm = residual(mid)?;
        if rm.abs() <= opts.tolerance_ghz {
            return Ok(mid);
        }
        if rm.signum() == ra.signum() {
            a = mid;
            ra = rm;
        } else {
            b = mid;
            rb = rm;
        }
    }
    Ok(if ra.abs() <= rb.abs() { a } else { b })
}

/// Coupling band of g/ω_c.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Negligible,
    WeakToStrong,
    Ultrastrong,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Negligible => "negligible",
            Self::WeakToStrong => "weak_to_strong",
            Self::Ultrastrong => "ultrastrong",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegimeThresholds {
    pub negligible_below: f64,
    pub ultrastrong_from: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        Self {
            negligible_below: 1e-4,
            ultrastrong_from: 0.1,
        }
    }
}

pub fn regime(g_over_wc: f64, t: &RegimeThresholds) -> Regime {
    let r = g_over_wc.abs();
    if r < t.negligible_below {
        Regime::Negligible
    } else if r >= t.ultrastrong_from {
        Regime::Ultrastrong
    } else {
        Regime::WeakToStrong
    }
}

/// Relative spread of the three members of the tuning identity
/// g²E_b²/(8ω₀ω_cλ⁴E_J²) = Δ²e^{−λ²}sin²(f′/2)
/// = [11E_bΔ²e^{−λ²} − 3E_bE_c(δE − E_c)/E_J²]/(11E_b + 3λ²E_c).
pub fn identity_residual(s: &DerivedScales, flux: FluxPoint, g: f64, delta_e: f64) -> f64 {
    let (eb, ec, ej, l2) = (s.eb, s.ec, s.ej, s.lambda_sq());
    let d2 = flux.delta * flux.delta;
    let left = g * g * eb * eb / (8.0 * s.omega0_ghz * s.cavity_ghz * l2 * l2 * ej * ej);
    let middle = d2 * (-l2).exp() * (flux.f_prime / 2.0).sin().powi(2);
    let den = 11.0 * eb + 3.0 * l2 * ec;
    let right = 11.0 * eb * d2 * (-l2).exp() / den - 3.0 * eb * ec * (delta_e - ec) / (den * ej * ej);
    let scale = left.abs().max(middle.abs()).max(right.abs());
    if scale == 0.0 {
        return 0.0;
    }
    let spread = (left - middle).abs().max((middle - right).abs()).max((left - right).abs());
    spread / scale
}

/// One schedule row; couplings come from the engine that solved f′.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub f: f64,
    pub f_prime: f64,
    pub delta: f64,
    pub delta_e_exact: f64,
    pub delta_e_pert: f64,
    pub g: f64,
    pub g0: f64,
    pub gz: f64,
    pub g_over_wc: f64,
    pub regime: Regime,
}

impl ScheduleRow {
    pub fn flux(&self) -> FluxPoint {
        FluxPoint::new(self.f, self.f_prime)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub engine: EngineKind,
    pub target_delta_e: f64,
    pub rows: Vec<ScheduleRow>,
}

/// Evenly spaced f values (rad) from start·π to stop·π inclusive.
pub fn f_grid(start_over_pi: f64, stop_over_pi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![start_over_pi * PI];
    }
    (0..points)
        .map(|i| {
            let t = i as f64 / (points - 1) as f64;
            (start_over_pi + (stop_over_pi - start_over_pi) * t) * PI
        })
        .collect()
}

/// Couplings at a bias point from the chosen engine.
pub fn engine_couplings(model: &Model, flux: FluxPoint, engine: EngineKind) -> Result<CouplingSet> {
    match engine {
        EngineKind::Perturbative => Ok(perturb::couplings(&model.scales, flux, model.formula)),
        EngineKind::Exact => {
            let levels = hilbert::solve_levels(&model.ops, &model.scales, flux, model.form)?;
            Ok(hilbert::exact_couplings(&levels, &model.ops, &model.scales))
        }
    }
}

pub fn schedule_row(
    model: &Model,
    f: f64,
    target: f64,
    engine: EngineKind,
    opts: &SolverOptions,
    thresholds: &RegimeThresholds,
) -> Result<ScheduleRow> {
    let f_prime = solve_fprime(model, f, target, engine, opts)?;
    let flux = FluxPoint::new(f, f_prime);
    let c = engine_couplings(model, flux, engine)?;
    Ok(ScheduleRow {
        f,
        f_prime,
        delta: flux.delta,
        delta_e_exact: model.splitting(flux, EngineKind::Exact)?,
        delta_e_pert: perturb::splitting(&model.scales, flux, model.formula),
        g: c.g,
        g0: c.g0,
        gz: c.gz,
        g_over_wc: c.g_over_wc,
        regime: regime(c.g_over_wc, thresholds),
    })
}

/// Solves every grid point (in parallel); row order follows `grid`.
pub fn build_schedule(
    model: &Model,
    grid: &[f64],
    target: f64,
    engine: EngineKind,
    opts: &SolverOptions,
    thresholds: &RegimeThresholds,
) -> Result<Schedule> {
    let rows = grid
        .par_iter()
        .map(|&f| schedule_row(model, f, target, engine, opts, thresholds))
        .collect::<Vec<_>>();
    let rows = collect_rows(grid, rows)?;
    Ok(Schedule {
        engine,
        target_delta_e: target,
        rows,
    })
}

/// Unwraps per-row results, attaching the first failing row's index.
pub fn collect_rows<T>(grid: &[f64], rows: Vec<Result<T>>) -> Result<Vec<T>> {
    rows.into_iter()
        .enumerate()
        .map(|(row, r)| {
            r.map_err(|e| FluxtuneError::Row {
                row,
                f_over_pi: grid[row] / PI,
                source: Box::new(e),
            })
        })
        .collect()
}
