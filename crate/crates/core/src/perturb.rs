//! Closed-form second-order perturbation theory around the Δ = 0 spectrum.
//!
//! All energies are E/h in GHz. Couplings are ω/2π in GHz: the dimensionless
//! φ₊ matrix elements are multiplied by √(ω₀ω_c) with both factors already
//! expressed as ω/2π, so no extra 2π appears anywhere.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

use crate::params::DerivedScales;
use crate::schedule::FluxPoint;

/// Denominator convention of the second-order formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formula {
    /// Intermediate-state denominators E_b ± E_c, E_b + 3E_c kept.
    #[default]
    Full,
    /// Leading order in E_c/E_b.
    Simplified,
}

/// Perturbative E_g, E_e, E₂ and δE = E_e − E_g in GHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbativeLevels {
    pub e_g: f64,
    pub e_e: f64,
    pub e_2: f64,
    pub delta_e: f64,
}

/// Qubit–cavity coupling coefficients, ω/2π in GHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingSet {
    pub g: f64,
    pub g0: f64,
    pub gz: f64,
    pub gx: f64,
    pub g_over_wc: f64,
    pub g0_over_g: f64,
    pub gz_over_g: f64,
}

impl CouplingSet {
    pub fn new(g: f64, g0: f64, gz: f64, gx: f64, cavity_ghz: f64) -> Self {
        Self {
            g,
            g0,
            gz,
            gx,
            g_over_wc: g / cavity_ghz,
            g0_over_g: g0 / g,
            gz_over_g: gz / g,
        }
    }
}

/// φ₊ matrix elements between |g⟩ and |e⟩.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiElements {
    pub eg: Complex64,
    pub gg: f64,
    pub ee: f64,
}

/// n₋ matrix elements ⟨ψ₋|n₋|g⟩ and ⟨ψ₋|n₋|e⟩.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargeElements {
    pub odd_g: Complex64,
    pub odd_e: Complex64,
}

struct Terms {
    eb: f64,
    ec: f64,
    ej: f64,
    l2: f64,
    k0: f64,
    c2: f64,
    s2: f64,
}

impl Terms {
    fn new(s: &DerivedScales, flux: FluxPoint) -> Self {
        let l2 = s.lambda_sq();
        let half = flux.f_prime / 2.0;
        Self {
            eb: s.eb,
            ec: s.ec,
            ej: s.ej,
            l2,
            k0: flux.delta * flux.delta * s.ej * s.ej * (-l2).exp(),
            c2: half.cos().powi(2),
            s2: half.sin().powi(2),
        }
    }

    fn base(&self) -> f64 {
        self.eb / 2.0 + 4.0 * self.ej
    }
}

/// E⁽⁰⁾ = (n + ½)E_b + E_c n₋² + 4E_J.
pub fn zero_order_energy(n: u32, n_minus: i64, s: &DerivedScales) -> f64 {
    let q = n_minus as f64;
    (n as f64 + 0.5) * s.eb + s.ec * q * q + 4.0 * s.ej
}

pub fn energies(s: &DerivedScales, flux: FluxPoint, formula: Formula) -> PerturbativeLevels {
    let t = Terms::new(s, flux);
    let (eb, ec, k0, l2) = (t.eb, t.ec, t.k0, t.l2);
    let ls2 = l2 * t.s2;
    let (e_g, e_e, e_2) = match formula {
        Formula::Full => (
            t.base() - 2.0 * k0 * t.c2 / ec - 2.0 * k0 * ls2 / (eb + ec),
            t.base() + ec + 5.0 / 3.0 * k0 * t.c2 / ec
                - 2.0 * k0 * ls2 / (eb - ec)
                - k0 * ls2 / (eb + 3.0 * ec),
            t.base() + ec - k0 * (t.c2 / (3.0 * ec) + ls2 / (eb + 3.0 * ec)),
        ),
        Formula::Simplified => (
            t.base() - 2.0 * k0 * t.c2 / ec - 2.0 * k0 * ls2 / eb,
            t.base() + ec + 5.0 / 3.0 * k0 * t.c2 / ec - 3.0 * k0 * ls2 / eb,
            t.base() + ec - k0 * (t.c2 / (3.0 * ec) + ls2 / eb),
        ),
    };
    PerturbativeLevels {
        e_g,
        e_e,
        e_2,
        delta_e: splitting(s, flux, formula),
    }
}

/// δE = E_e − E_g, evaluated without the large common offset.
pub fn splitting(s: &DerivedScales, flux: FluxPoint, formula: Formula) -> f64 {
    let t = Terms::new(s, flux);
    let (eb, ec, k0) = (t.eb, t.ec, t.k0);
    let ls2 = t.l2 * t.s2;
    let coulomb = ec + 11.0 / 3.0 * k0 * t.c2 / ec;
    match formula {
        Formula::Full => {
            coulomb - 4.0 * k0 * ec * ls2 / (eb * eb - ec * ec) - k0 * ls2 / (eb + 3.0 * ec)
        }
        Formula::Simplified => coulomb - k0 * ls2 / eb,
    }
}

pub fn phi_elements(s: &DerivedScales, flux: FluxPoint, formula: Formula) -> PhiElements {
    let (eb, ec, ej, l2) = (s.eb, s.ec, s.ej, s.lambda_sq());
    let d = flux.delta;
    let k = d * d * ej * ej * l2 * (-l2).exp();
    let sin_fp = flux.f_prime.sin();
    let off = 2.0 * SQRT_2 * d * l2 * ej * (-l2 / 2.0).exp() * (flux.f_prime / 2.0).sin();
    match formula {
        Formula::Full => {
            let gg = -2.0
                * k
                * sin_fp
                * (1.0 / (ec * (eb + ec)) + 1.0 / (eb * ec) + (1.0 - l2) / (eb * (eb + ec)));
            let num = 10.0 * eb * eb + (26.0 + 3.0 * l2) * eb * ec - 3.0 * (4.0 + l2) * ec * ec;
            let den = 6.0 * eb * ec * (eb + 3.0 * ec) * (eb - ec);
            PhiElements {
                eg: Complex64::new(0.0, off * eb / (eb * eb - ec * ec)),
                gg,
                ee: 2.0 * k * sin_fp * num / den,
            }
        }
        Formula::Simplified => PhiElements {
            eg: Complex64::new(0.0, off / eb),
            gg: -4.0 * k * sin_fp / (eb * ec),
            ee: 10.0 / 3.0 * k * sin_fp / (eb * ec),
        },
    }
}

pub fn couplings(s: &DerivedScales, flux: FluxPoint, formula: Formula) -> CouplingSet {
    let el = phi_elements(s, flux, formula);
    let root = (s.omega0_ghz * s.cavity_ghz).sqrt();
    CouplingSet::new(
        root * el.eg.im,
        -root * (el.ee + el.gg) / 2.0,
        -root * (el.ee - el.gg) / 2.0,
        0.0,
        s.cavity_ghz,
    )
}

/// g/ω_c = √(8ω₀/ω_c) Δ λ⁴ (E_J/E_c) e^{−λ²/2} sin(f′/2).
pub fn coupling_ratio(s: &DerivedScales, flux: FluxPoint) -> f64 {
    let l2 = s.lambda_sq();
    (8.0 * s.omega0_ghz / s.cavity_ghz).sqrt()
        * flux.delta
        * l2
        * l2
        * (s.ej / s.ec)
        * (-l2 / 2.0).exp()
        * (flux.f_prime / 2.0).sin()
}

pub fn charge_elements(s: &DerivedScales, flux: FluxPoint, formula: Formula) -> ChargeElements {
    let (eb, ec, ej, l2) = (s.eb, s.ec, s.ej, s.lambda_sq());
    let d = flux.delta;
    let half = flux.f_prime / 2.0;
    let odd_g = -SQRT_2 * d * ej * (-l2 / 2.0).exp() * half.cos() / ec;
    let den = match formula {
        Formula::Full => eb + 3.0 * ec,
        Formula::Simplified => eb,
    };
    let odd_e = 1.0
        + 2.0 * d * d * ej * ej * (-l2).exp()
            * (half.cos().powi(2) / (9.0 * ec * ec) - l2 * half.sin().powi(2) / (den * den));
    ChargeElements {
        odd_g: Complex64::new(0.0, odd_g),
        odd_e: Complex64::new(odd_e, 0.0),
    }
}
