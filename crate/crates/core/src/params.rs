//! Units, physical constants, raw device parameters and derived energy scales.
//!
//! Energies are E/h in GHz, frequencies are ω/2π in GHz, inductances in nH,
//! times in seconds and reduced fluxes in radians.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{FluxtuneError, Result};

/// Which numerical values of h and e are used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantSet {
    /// Exact SI values since the 2019 redefinition.
    #[default]
    Si2019,
    /// Four-significant-digit values h = 6.626e-34, e = 1.602e-19.
    Rounded,
}

/// Numerical values of the fundamental constants in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub h: f64,
    pub e: f64,
}

impl Constants {
    pub const SI2019: Constants = Constants {
        h: 6.626_070_15e-34,
        e: 1.602_176_634e-19,
    };
    pub const ROUNDED: Constants = Constants {
        h: 6.626e-34,
        e: 1.602e-19,
    };

    pub fn of(set: ConstantSet) -> Self {
        match set {
            ConstantSet::Si2019 => Self::SI2019,
            ConstantSet::Rounded => Self::ROUNDED,
        }
    }

    pub fn hbar(&self) -> f64 {
        self.h / (2.0 * PI)
    }

    /// Reduced flux quantum φ₀ = ħ/2e in Wb.
    pub fn phi0(&self) -> f64 {
        self.hbar() / (2.0 * self.e)
    }

    /// Flux quantum Φ₀ = h/2e in Wb.
    pub fn flux_quantum(&self) -> f64 {
        self.h / (2.0 * self.e)
    }

    /// Joules per GHz of E/h.
    pub fn joule_per_ghz(&self) -> f64 {
        self.h * 1e9
    }
}

/// Raw circuit and environment parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceParams {
    pub ej_ghz: f64,
    pub ec_ghz: f64,
    #[serde(rename = "l0_nH")]
    pub l0_nh: f64,
    #[serde(rename = "lr_nH")]
    pub lr_nh: f64,
    pub cavity_ghz: f64,
    /// Mutual inductances M₁, M₂, M₃ in Φ₀/A.
    #[serde(rename = "m1_m2_m3_phi0_per_A")]
    pub mutuals_phi0_per_a: [f64; 3],
    pub zr_ohm: f64,
    pub aphi_phi0: f64,
    pub aic_rel: f64,
    pub ac_e: f64,
    /// Optional loop self-inductance for the screening-parameter check.
    #[serde(rename = "ls_nH", default, skip_serializing_if = "Option::is_none")]
    pub ls_nh: Option<f64>,
}

impl DeviceParams {
    /// Required JSON keys, in declaration order.
    pub const REQUIRED_KEYS: [&'static str; 10] = [
        "ej_ghz",
        "ec_ghz",
        "l0_nH",
        "lr_nH",
        "cavity_ghz",
        "m1_m2_m3_phi0_per_A",
        "zr_ohm",
        "aphi_phi0",
        "aic_rel",
        "ac_e",
    ];

    /// The reference device: E_J/h = 300 GHz, E_J/E_c = 150, cavity at 2.00005254655 GHz.
    pub fn reference_device() -> Self {
        Self {
            ej_ghz: 300.0,
            ec_ghz: 2.0,
            l0_nh: 0.061_928_674_73,
            lr_nh: 12.292_919_539_01,
            cavity_ghz: 2.000_052_546_55,
            mutuals_phi0_per_a: [40.0, 40.0, 35.0],
            zr_ohm: 50.0,
            aphi_phi0: 1e-6,
            aic_rel: 1e-6,
            ac_e: 1e-4,
            ls_nh: None,
        }
    }

    /// Checks that every quantity is finite and strictly positive.
    pub fn check(&self) -> Result<()> {
        let fields = [
            ("ej_ghz", self.ej_ghz),
            ("ec_ghz", self.ec_ghz),
            ("l0_nH", self.l0_nh),
            ("lr_nH", self.lr_nh),
            ("cavity_ghz", self.cavity_ghz),
            ("m1_m2_m3_phi0_per_A[0]", self.mutuals_phi0_per_a[0]),
            ("m1_m2_m3_phi0_per_A[1]", self.mutuals_phi0_per_a[1]),
            ("m1_m2_m3_phi0_per_A[2]", self.mutuals_phi0_per_a[2]),
            ("zr_ohm", self.zr_ohm),
            ("aphi_phi0", self.aphi_phi0),
            ("aic_rel", self.aic_rel),
            ("ac_e", self.ac_e),
        ];
        for (name, v) in fields {
            positive(name, v)?;
        }
        if let Some(ls) = self.ls_nh {
            positive("ls_nH", ls)?;
        }
        Ok(())
    }
}

fn positive(field: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(FluxtuneError::ParamDomain {
            field: field.to_string(),
            value,
            reason: "must be finite and strictly positive".into(),
        })
    }
}

/// Energy and frequency scales derived from [`DeviceParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedScales {
    pub ec: f64,
    pub ej: f64,
    pub eb: f64,
    pub lambda: f64,
    #[serde(rename = "lr_prime_nH")]
    pub lr_prime_nh: f64,
    pub omega0_ghz: f64,
    pub omegar_ghz: f64,
    pub omegar_prime_ghz: f64,
    #[serde(rename = "omegaJ_ghz")]
    pub omegaj_ghz: f64,
    pub cavity_ghz: f64,
    #[serde(rename = "c0_pF")]
    pub c0_pf: f64,
    #[serde(rename = "l0_nH")]
    pub l0_nh: f64,
    #[serde(rename = "lr_nH")]
    pub lr_nh: f64,
    #[serde(rename = "ls_nH", default, skip_serializing_if = "Option::is_none")]
    pub ls_nh: Option<f64>,
    pub constants: ConstantSet,
}

impl DerivedScales {
    pub fn lambda_sq(&self) -> f64 {
        self.lambda * self.lambda
    }

    pub fn consts(&self) -> Constants {
        Constants::of(self.constants)
    }

    /// Upper bound 8φ₀²/E_c on L₀ and L_r, in μH.
    pub fn inductance_bound_uh(&self) -> f64 {
        let c = self.consts();
        8.0 * c.phi0() * c.phi0() / (self.ec * c.joule_per_ghz()) * 1e6
    }
}

/// Derives scales with exact SI constants.
pub fn derive_scales(p: &DeviceParams) -> Result<DerivedScales> {
    derive_scales_with(p, ConstantSet::Si2019)
}

/// Derives scales with the chosen constant set.
pub fn derive_scales_with(p: &DeviceParams, set: ConstantSet) -> Result<DerivedScales> {
    p.check()?;
    let c = Constants::of(set);
    let jpg = c.joule_per_ghz();
    let phi0_sq = c.phi0() * c.phi0();
    let l0 = p.l0_nh * 1e-9;
    let lr = p.lr_nh * 1e-9;
    let lr_prime = 2.0 * l0 * lr / (2.0 * l0 + lr);

    let omega0_ghz = phi0_sq / l0 / jpg;
    let omegar_ghz = phi0_sq / lr / jpg;
    let omegar_prime_ghz = phi0_sq / lr_prime / jpg;
    let eb = (8.0 * omegar_prime_ghz * p.ec_ghz).sqrt();
    let lambda = (p.ec_ghz / eb).sqrt();

    let cj = c.e * c.e / (2.0 * p.ec_ghz * jpg);
    let omegaj_ghz = 1.0 / (lr * cj).sqrt() / (2.0 * PI) / 1e9;
    let wc = 2.0 * PI * p.cavity_ghz * 1e9;
    let c0_pf = 1.0 / (l0 * wc * wc) * 1e12;

    Ok(DerivedScales {
        ec: p.ec_ghz,
        ej: p.ej_ghz,
        eb,
        lambda,
        lr_prime_nh: lr_prime * 1e9,
        omega0_ghz,
        omegar_ghz,
        omegar_prime_ghz,
        omegaj_ghz,
        cavity_ghz: p.cavity_ghz,
        c0_pf,
        l0_nh: p.l0_nh,
        lr_nh: p.lr_nh,
        ls_nh: p.ls_nh,
        constants: set,
    })
}

/// Thresholds used by [`validate_params_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationOptions {
    /// Each inductance must stay below this fraction of the bound.
    pub margin: f64,
    pub lambda_max: f64,
    pub beta_l_max: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            margin: 0.05,
            lambda_max: 0.3,
            beta_l_max: 0.1,
        }
    }
}

/// One named pass/fail check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

/// Outcome of [`validate_params`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub bound_uh: f64,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub fn validate_params(s: &DerivedScales) -> ValidationReport {
    validate_params_with(s, &ValidationOptions::default())
}

pub fn validate_params_with(s: &DerivedScales, opts: &ValidationOptions) -> ValidationReport {
    let bound_uh = s.inductance_bound_uh();
    let limit_nh = opts.margin * bound_uh * 1e3;
    let below = |name: &str, value: f64, limit: f64| Check {
        name: name.to_string(),
        value,
        limit,
        pass: value < limit,
    };
    let mut checks = vec![
        below("l0_nH", s.l0_nh, limit_nh),
        below("lr_nH", s.lr_nh, limit_nh),
        below("lr_prime_nH", s.lr_prime_nh, limit_nh),
        below("lambda", s.lambda, opts.lambda_max),
    ];
    if let Some(ls) = s.ls_nh {
        let c = s.consts();
        let beta = ls * 1e-9 * s.ej * c.joule_per_ghz() / (c.phi0() * c.phi0());
        checks.push(below("beta_l", beta, opts.beta_l_max));
    }
    ValidationReport { bound_uh, checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_scales() {
        let s = derive_scales(&DeviceParams::reference_device()).unwrap();
        assert!((s.eb - 146.044).abs() < 1e-2, "eb {}", s.eb);
        assert!((s.lambda_sq() - 0.013_694_5).abs() < 1e-6);
        assert!((s.omega0_ghz - 2639.51).abs() < 0.05);
    }

    #[test]
    fn rejects_nonpositive_field() {
        let mut p = DeviceParams::reference_device();
        p.zr_ohm = 0.0;
        match derive_scales(&p) {
            Err(FluxtuneError::ParamDomain { field, .. }) => assert_eq!(field, "zr_ohm"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn large_l0_fails_check() {
        let mut p = DeviceParams::reference_device();
        p.l0_nh = 1000.0;
        let r = validate_params(&derive_scales(&p).unwrap());
        assert!(!r.check("l0_nH").unwrap().pass);
    }

    #[test]
    fn beta_l_only_with_ls() {
        let mut p = DeviceParams::reference_device();
        assert!(validate_params(&derive_scales(&p).unwrap()).check("beta_l").is_none());
        p.ls_nh = Some(0.001);
        assert!(validate_params(&derive_scales(&p).unwrap()).check("beta_l").is_some());
    }
}
