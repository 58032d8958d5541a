//! Python bindings. Structured results cross the boundary as JSON and arrive
//! as plain dicts and lists.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::Serialize;

use fluxtune::config::{parse_config, RunConfig};
use fluxtune::noise;
use fluxtune::run::{self, Subcommand};
use fluxtune::schedule::{self, EngineKind, FluxPoint, Model};
use fluxtune::table;
use fluxtune::{perturb, FluxtuneError};

fn py_err(e: FluxtuneError) -> PyErr {
    match e {
        FluxtuneError::Config { .. } | FluxtuneError::ParamDomain { .. } | FluxtuneError::FluxDomain(_) => {
            PyValueError::new_err(format!("{}: {e}", e.kind()))
        }
        _ => PyRuntimeError::new_err(format!("{}: {e}", e.kind())),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn config_from(py: Python<'_>, config: Option<&Bound<'_, PyAny>>) -> PyResult<RunConfig> {
    match config {
        None => Ok(RunConfig::reference()),
        Some(obj) => {
            let text: String = if let Ok(s) = obj.extract::<String>() {
                s
            } else {
                py.import("json")?.call_method1("dumps", (obj,))?.extract()?
            };
            parse_config(&text).map_err(py_err)
        }
    }
}

fn engine_from(name: Option<&str>, default: EngineKind) -> PyResult<EngineKind> {
    match name {
        None => Ok(default),
        Some("exact") => Ok(EngineKind::Exact),
        Some("perturbative") => Ok(EngineKind::Perturbative),
        Some(other) => Err(PyValueError::new_err(format!("unknown engine `{other}`"))),
    }
}

/// Reference configuration as a dict.
#[pyfunction]
fn reference_config(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &RunConfig::reference())
}

/// Runs a subcommand; returns `{"provenance": ..., "rows": [...]}`.
#[pyfunction]
#[pyo3(signature = (subcommand, config=None))]
fn run_subcommand<'py>(
    py: Python<'py>,
    subcommand: &str,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let sub: Subcommand = subcommand.parse().map_err(py_err)?;
    let cfg = config_from(py, config)?;
    let t = py.detach(|| run::run(sub, &cfg)).map_err(py_err)?;
    let text = table::to_json(&t).map_err(py_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A configured device with its operators built once.
#[pyclass(module = "fluxtune_py")]
struct Simulator {
    cfg: RunConfig,
    model: Model,
}

#[pymethods]
impl Simulator {
    /// `config` is a dict, a JSON string, or None for the reference device.
    #[new]
    #[pyo3(signature = (config=None))]
    fn new(py: Python<'_>, config: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let cfg = config_from(py, config)?;
        let model = cfg.model().map_err(py_err)?;
        Ok(Self { cfg, model })
    }

    /// Derived energy scales (GHz, nH, pF).
    fn scales<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.model.scales)
    }

    fn inductance_bound_uh(&self) -> f64 {
        self.model.scales.inductance_bound_uh()
    }

    fn target_delta_e(&self) -> f64 {
        self.cfg.target()
    }

    /// δE = E_e − E_g in GHz at (f, f′).
    #[pyo3(signature = (f, f_prime, engine=None))]
    fn splitting(&self, py: Python<'_>, f: f64, f_prime: f64, engine: Option<&str>) -> PyResult<f64> {
        let engine = engine_from(engine, self.cfg.engine)?;
        py.detach(|| self.model.splitting(FluxPoint::new(f, f_prime), engine))
            .map_err(py_err)
    }

    /// f′ with δE(f, f′) equal to the target.
    #[pyo3(signature = (f, target=None, engine=None))]
    fn solve_fprime(&self, py: Python<'_>, f: f64, target: Option<f64>, engine: Option<&str>) -> PyResult<f64> {
        let engine = engine_from(engine, self.cfg.engine)?;
        let target = target.unwrap_or(self.cfg.target());
        py.detach(|| schedule::solve_fprime(&self.model, f, target, engine, &self.cfg.tolerances.solver))
            .map_err(py_err)
    }

    /// g, g0, gz, gx and ratios at (f, f′).
    #[pyo3(signature = (f, f_prime, engine=None))]
    fn couplings<'py>(
        &self,
        py: Python<'py>,
        f: f64,
        f_prime: f64,
        engine: Option<&str>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let engine = engine_from(engine, self.cfg.engine)?;
        let c = py
            .detach(|| schedule::engine_couplings(&self.model, FluxPoint::new(f, f_prime), engine))
            .map_err(py_err)?;
        to_py(py, &c)
    }

    /// Closed-form perturbative levels at (f, f′).
    fn perturbative_levels<'py>(&self, py: Python<'py>, f: f64, f_prime: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(
            py,
            &perturb::energies(&self.model.scales, FluxPoint::new(f, f_prime), self.model.formula),
        )
    }

    /// Relaxation and dephasing times at (f, f′); δE defaults to the target.
    #[pyo3(signature = (f, f_prime, delta_e=None))]
    fn noise_budget<'py>(
        &self,
        py: Python<'py>,
        f: f64,
        f_prime: f64,
        delta_e: Option<f64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let delta_e = delta_e.unwrap_or(self.cfg.target());
        let b = py.detach(|| {
            noise::budget(
                &self.model,
                FluxPoint::new(f, f_prime),
                &self.cfg.noise(),
                delta_e,
                &self.cfg.tolerances.numeric,
            )
        });
        to_py(py, &b)
    }
}

#[pymodule]
fn fluxtune_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(reference_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_subcommand, m)?)?;
    m.add_class::<Simulator>()?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
