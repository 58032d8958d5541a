//! Subcommand orchestration: one [`ResultTable`] per subcommand.
//!
//! Grid rows are evaluated concurrently; output order always equals grid order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{FluxtuneError, Result};
use crate::hilbert;
use crate::noise;
use crate::params;
use crate::perturb;
use crate::schedule::{self, EngineKind, FluxPoint, Model};
use crate::table::{Cell, Provenance, ResultTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subcommand {
    Derive,
    Validate,
    Schedule,
    Spectrum,
    Couplings,
    Noise,
}

impl Subcommand {
    pub const ALL: [Self; 6] = [
        Self::Derive,
        Self::Validate,
        Self::Schedule,
        Self::Spectrum,
        Self::Couplings,
        Self::Noise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Derive => "derive",
            Self::Validate => "validate",
            Self::Schedule => "schedule",
            Self::Spectrum => "spectrum",
            Self::Couplings => "couplings",
            Self::Noise => "noise",
        }
    }

    /// Column names, in emission order.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Self::Derive => &[
                "ec_ghz",
                "ej_ghz",
                "eb_ghz",
                "lambda",
                "lambda_sq",
                "lr_prime_nh",
                "omega0_ghz",
                "omegar_ghz",
                "omegar_prime_ghz",
                "omegaj_ghz",
                "cavity_ghz",
                "c0_pf",
                "bound_uh",
            ],
            Self::Validate => &["check", "value", "limit", "pass"],
            Self::Schedule => &[
                "f",
                "f_prime",
                "delta",
                "delta_e_exact",
                "delta_e_pert",
                "g",
                "g0",
                "gz",
                "g_over_wc",
                "regime",
            ],
            Self::Spectrum => &[
                "f", "f_prime", "delta", "e0", "e1", "e2", "e3", "e4", "e_g_pert", "e_e_pert",
            ],
            Self::Couplings => &[
                "f",
                "f_prime",
                "delta",
                "g_exact",
                "g_pert",
                "g0_exact",
                "g0_pert",
                "gz_exact",
                "gz_pert",
                "gx_exact",
                "g_over_wc_exact",
                "g_over_wc_pert",
            ],
            Self::Noise => &[
                "f",
                "f_prime",
                "delta",
                "delta_e",
                "t1_flux_s",
                "tphi_flux_s",
                "tphi_ic_s",
                "tphi_charge_s",
                "charge_degenerate",
                "gap_e2_ee_ghz",
            ],
        }
    }
}

impl std::str::FromStr for Subcommand {
    type Err = FluxtuneError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| FluxtuneError::config("subcommand", format!("unknown subcommand `{s}`")))
    }
}

/// Runs `sub` on a validated configuration.
pub fn run(sub: Subcommand, cfg: &RunConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let prov = Provenance::new(sub.as_str(), cfg.engine.as_str(), &cfg.sha256());
    let mut table = ResultTable::new(prov, sub.columns());
    let rows = match sub {
        Subcommand::Derive => vec![derive_row(cfg)?],
        Subcommand::Validate => validate_rows(cfg)?,
        _ => {
            let model = cfg.model()?;
            let grid = cfg.grid();
            let solved = solve_grid(&model, &grid, cfg)?;
            let rows = grid_rows(sub, &model, &solved, cfg)?;
            if sub == Subcommand::Noise {
                table.notes.push(("charge_discrepancy".into(), charge_note(&model, &rows, cfg)?));
            }
            rows
        }
    };
    for row in rows {
        table.push(row)?;
    }
    Ok(table)
}

fn derive_row(cfg: &RunConfig) -> Result<Vec<Cell>> {
    let s = cfg.scales()?;
    Ok([
        s.ec,
        s.ej,
        s.eb,
        s.lambda,
        s.lambda_sq(),
        s.lr_prime_nh,
        s.omega0_ghz,
        s.omegar_ghz,
        s.omegar_prime_ghz,
        s.omegaj_ghz,
        s.cavity_ghz,
        s.c0_pf,
        s.inductance_bound_uh(),
    ]
    .into_iter()
    .map(Cell::Float)
    .collect())
}

fn validate_rows(cfg: &RunConfig) -> Result<Vec<Vec<Cell>>> {
    let report = params::validate_params_with(&cfg.scales()?, &cfg.tolerances.validation);
    Ok(report
        .checks
        .iter()
        .map(|c| vec![c.name.as_str().into(), c.value.into(), c.limit.into(), c.pass.into()])
        .collect())
}

/// f′ for every grid point with the configured engine.
fn solve_grid(model: &Model, grid: &[f64], cfg: &RunConfig) -> Result<Vec<FluxPoint>> {
    let target = cfg.target();
    let solved = grid
        .par_iter()
        .map(|&f| {
            schedule::solve_fprime(model, f, target, cfg.engine, &cfg.tolerances.solver)
                .map(|fp| FluxPoint::new(f, fp))
        })
        .collect::<Vec<_>>();
    schedule::collect_rows(grid, solved)
}

fn grid_rows(sub: Subcommand, model: &Model, points: &[FluxPoint], cfg: &RunConfig) -> Result<Vec<Vec<Cell>>> {
    let rows = points
        .par_iter()
        .map(|&flux| grid_row(sub, model, flux, cfg))
        .collect::<Vec<_>>();
    let grid: Vec<f64> = points.iter().map(|p| p.f).collect();
    schedule::collect_rows(&grid, rows)
}

fn grid_row(sub: Subcommand, model: &Model, flux: FluxPoint, cfg: &RunConfig) -> Result<Vec<Cell>> {
    let s = &model.scales;
    let mut row: Vec<Cell> = vec![flux.f.into(), flux.f_prime.into(), flux.delta.into()];
    match sub {
        Subcommand::Schedule => {
            let c = schedule::engine_couplings(model, flux, cfg.engine)?;
            row.extend([
                model.splitting(flux, EngineKind::Exact)?.into(),
                perturb::splitting(s, flux, model.formula).into(),
                c.g.into(),
                c.g0.into(),
                c.gz.into(),
                c.g_over_wc.into(),
                schedule::regime(c.g_over_wc, &cfg.regime).as_str().into(),
            ]);
        }
        Subcommand::Spectrum => {
            let levels = hilbert::lowest_levels(&model.ops, s, flux, model.form, 5)?;
            if levels.len() < 5 {
                return Err(FluxtuneError::Dimension {
                    expected: 5,
                    got: levels.len(),
                });
            }
            let p = perturb::energies(s, flux, model.formula);
            row.extend(levels.into_iter().map(Cell::Float));
            row.extend([p.e_g.into(), p.e_e.into()]);
        }
        Subcommand::Couplings => {
            let ex = schedule::engine_couplings(model, flux, EngineKind::Exact)?;
            let pt = perturb::couplings(s, flux, model.formula);
            row.extend(
                [ex.g, pt.g, ex.g0, pt.g0, ex.gz, pt.gz, ex.gx, ex.g_over_wc, pt.g_over_wc]
                    .into_iter()
                    .map(Cell::Float),
            );
        }
        Subcommand::Noise => {
            let b = noise::budget(model, flux, &cfg.noise(), cfg.target(), &cfg.tolerances.numeric);
            if let Some(e) = b.errors.first() {
                return Err(FluxtuneError::IllConditioned(e.clone()));
            }
            row.extend([
                b.delta_e.into(),
                b.t1_flux_s.into(),
                b.tphi_flux_s.into(),
                b.tphi_ic_s.into(),
                b.tphi_charge_s.into(),
                b.charge_degenerate.into(),
                b.gap_e2_ee_ghz.into(),
            ]);
        }
        Subcommand::Derive | Subcommand::Validate => unreachable!("not a grid subcommand"),
    }
    Ok(row)
}

fn charge_note(model: &Model, rows: &[Vec<Cell>], cfg: &RunConfig) -> Result<serde_json::Value> {
    let samples: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| Some((r[0].as_f64()?, r[7].as_f64()?)))
        .collect();
    let report = noise::charge_discrepancy_from_samples(
        model,
        &cfg.noise(),
        cfg.target(),
        cfg.engine,
        &samples,
        &cfg.tolerances.solver,
        &cfg.tolerances.numeric,
    )?;
    serde_json::to_value(report).map_err(|e| FluxtuneError::Serialization(e.to_string()))
}
