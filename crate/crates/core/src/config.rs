//! Strict JSON run configuration.
//!
//! Only `device` is required. Unknown keys anywhere are rejected. Defaults:
//! target splitting = cavity frequency, grid f/π ∈ [0.96, 0.9995] with 200
//! points, truncation (15, 20), exact engine, full formulas, exact Hamiltonian
//! form, SI-2019 constants.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{FluxtuneError, Result};
use crate::hilbert::{BasisSpec, HamiltonianForm};
use crate::noise::{NoiseEnv, NumericOptions};
use crate::params::{derive_scales_with, ConstantSet, DerivedScales, DeviceParams, ValidationOptions};
use crate::perturb::Formula;
use crate::schedule::{self, EngineKind, Model, RegimeThresholds, SolverOptions};

/// Flux grid in units of π.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            start: 0.96,
            stop: 0.9995,
            points: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truncation {
    pub n_fock: usize,
    pub n_charge: usize,
}

impl Default for Truncation {
    fn default() -> Self {
        Self {
            n_fock: 15,
            n_charge: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub solver: SolverOptions,
    pub numeric: NumericOptions,
    pub validation: ValidationOptions,
}

/// Everything a subcommand needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub device: DeviceParams,
    /// Overrides the noise fields of `device` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_env: Option<NoiseEnv>,
    /// Defaults to `device.cavity_ghz`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_delta_e_ghz: Option<f64>,
    #[serde(default)]
    pub f_grid: GridSpec,
    #[serde(default)]
    pub truncation: Truncation,
    #[serde(default)]
    pub engine: EngineKind,
    #[serde(default)]
    pub formula: Formula,
    #[serde(default)]
    pub hamiltonian_form: HamiltonianForm,
    #[serde(default)]
    pub constants: ConstantSet,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub regime: RegimeThresholds,
}

impl RunConfig {
    /// Reference device with every other field at its default.
    pub fn reference() -> Self {
        Self {
            device: DeviceParams::reference_device(),
            noise_env: None,
            target_delta_e_ghz: None,
            f_grid: GridSpec::default(),
            truncation: Truncation::default(),
            engine: EngineKind::default(),
            formula: Formula::default(),
            hamiltonian_form: HamiltonianForm::default(),
            constants: ConstantSet::default(),
            tolerances: Tolerances::default(),
            regime: RegimeThresholds::default(),
        }
    }

    pub fn target(&self) -> f64 {
        self.target_delta_e_ghz.unwrap_or(self.device.cavity_ghz)
    }

    pub fn noise(&self) -> NoiseEnv {
        self.noise_env
            .clone()
            .unwrap_or_else(|| NoiseEnv::from_device(&self.device))
    }

    pub fn scales(&self) -> Result<DerivedScales> {
        derive_scales_with(&self.device, self.constants)
    }

    pub fn model(&self) -> Result<Model> {
        Model::new(
            self.scales()?,
            BasisSpec::new(self.truncation.n_fock, self.truncation.n_charge)?,
            self.hamiltonian_form,
            self.formula,
        )
    }

    /// Grid in radians.
    pub fn grid(&self) -> Vec<f64> {
        schedule::f_grid(self.f_grid.start, self.f_grid.stop, self.f_grid.points)
    }

    /// Domain checks with field paths.
    pub fn validate(&self) -> Result<()> {
        self.device.check().map_err(|e| match e {
            FluxtuneError::ParamDomain { field, value, reason } => {
                FluxtuneError::config(format!("device.{field}"), format!("{value}: {reason}"))
            }
            other => other,
        })?;
        if let Some(env) = &self.noise_env {
            env.check().map_err(|e| match e {
                FluxtuneError::ParamDomain { field, value, reason } => {
                    FluxtuneError::config(field, format!("{value}: {reason}"))
                }
                other => other,
            })?;
        }
        let g = &self.f_grid;
        if !(g.start > 0.0 && g.start < 1.0) {
            return Err(FluxtuneError::config("f_grid.start", format!("{} must lie in (0, 1)", g.start)));
        }
        if !(g.stop > g.start && g.stop < 1.0) {
            return Err(FluxtuneError::config(
                "f_grid.stop",
                format!("{} must lie in (start, 1): the splitting is unreachable at f = pi", g.stop),
            ));
        }
        if g.points < 2 {
            return Err(FluxtuneError::config("f_grid.points", format!("{} must be >= 2", g.points)));
        }
        BasisSpec::new(self.truncation.n_fock, self.truncation.n_charge)
            .map_err(|e| FluxtuneError::config("truncation", e.to_string()))?;
        let target = self.target();
        if !(target.is_finite() && target > self.device.ec_ghz) {
            return Err(FluxtuneError::config(
                "target_delta_e_ghz",
                format!("{target} must exceed ec_ghz = {}", self.device.ec_ghz),
            ));
        }
        Ok(())
    }

    /// Compact canonical JSON.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of [`Self::to_canonical_json`], lowercase hex.
    pub fn sha256(&self) -> String {
        let digest = Sha256::digest(self.to_canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parses and validates a JSON document; an empty document counts as `{}`.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let text = if text.trim().is_empty() { "{}" } else { text };
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| FluxtuneError::config("$", format!("malformed JSON: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| FluxtuneError::config("$", "top level must be an object"))?;
    let missing: Vec<String> = match obj.get("device") {
        None => DeviceParams::REQUIRED_KEYS.iter().map(|k| format!("device.{k}")).collect(),
        Some(serde_json::Value::Object(d)) => DeviceParams::REQUIRED_KEYS
            .iter()
            .filter(|k| !d.contains_key(**k))
            .map(|k| format!("device.{k}"))
            .collect(),
        Some(_) => return Err(FluxtuneError::config("device", "must be an object")),
    };
    if !missing.is_empty() {
        return Err(FluxtuneError::config(
            "device",
            format!("missing required fields: {}", missing.join(", ")),
        ));
    }
    let cfg: RunConfig = serde_json::from_value(value).map_err(|e| FluxtuneError::config("$", e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_round_trip() {
        let cfg = RunConfig::reference();
        let text = cfg.to_canonical_json();
        let back = parse_config(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_canonical_json(), text);
    }

    #[test]
    fn hash_is_hex_sha256() {
        let h = RunConfig::reference().sha256();
        assert_eq!(h.len(), 64);
        assert!(h.chars().all(|c| c.is_ascii_hexdigit()));
    }
}
