//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failures raised by the simulator.
#[derive(Debug, Error)]
pub enum FluxtuneError {
    #[error("parameter `{field}` out of domain: {value} ({reason})")]
    ParamDomain {
        field: String,
        value: f64,
        reason: String,
    },

    #[error("invalid basis: {0}")]
    Basis(String),

    #[error("flux point out of domain: {0}")]
    FluxDomain(String),

    #[error("operator is not Hermitian: defect {defect:e} exceeds {tolerance:e}")]
    NotHermitian { defect: f64, tolerance: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    #[error("level classification failed: {0}")]
    Classification(String),

    #[error("target splitting {target} GHz unreachable at f = {f_over_pi} pi: {reason}")]
    UnreachableTarget {
        f_over_pi: f64,
        target: f64,
        reason: String,
    },

    #[error("degenerate denominator E2 - Ee = {gap:e} GHz at f = {f_over_pi} pi")]
    Degenerate { f_over_pi: f64, gap: f64 },

    #[error("finite difference ill-conditioned: {0}")]
    IllConditioned(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("row {row} (f = {f_over_pi} pi): {source}")]
    Row {
        row: usize,
        f_over_pi: f64,
        #[source]
        source: Box<FluxtuneError>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl FluxtuneError {
    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::ParamDomain { .. } => "param_domain",
            Self::Basis(_) => "basis",
            Self::FluxDomain(_) => "flux_domain",
            Self::NotHermitian { .. } => "not_hermitian",
            Self::Dimension { .. } => "dimension",
            Self::Eigensolver(_) => "eigensolver",
            Self::Classification(_) => "classification",
            Self::UnreachableTarget { .. } => "unreachable_target",
            Self::Degenerate { .. } => "degenerate",
            Self::IllConditioned(_) => "ill_conditioned",
            Self::Config { .. } => "config",
            Self::Row { .. } => "row",
            Self::Io { .. } => "io",
            Self::Serialization(_) => "serialization",
        }
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, FluxtuneError>;
