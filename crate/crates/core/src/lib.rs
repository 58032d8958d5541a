//! Simulator for a two-dc-SQUID artificial atom whose coupling to a cavity is
//! tuned by external fluxes while the qubit splitting stays fixed.
//!
//! Modules build on each other: [`params`] derives energy scales,
//! [`hilbert`] diagonalizes the atom exactly, [`perturb`] holds the closed
//! forms, [`schedule`] solves the constant-splitting flux curve, [`noise`]
//! estimates relaxation and dephasing, and [`config`], [`table`] and [`run`]
//! drive the command-line workflow.

pub mod config;
pub mod error;
pub mod hilbert;
pub mod noise;
pub mod params;
pub mod perturb;
pub mod run;
pub mod schedule;
pub mod table;

pub use error::{FluxtuneError, Result};
pub use params::{derive_scales, ConstantSet, DerivedScales, DeviceParams};
pub use schedule::{EngineKind, FluxPoint, Model};
