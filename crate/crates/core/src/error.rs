use std::fmt;

use thiserror::Error;

/// Where in a simulation or filter sweep a numerical failure happened.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Location {
    pub block: Option<usize>,
    pub step: Option<usize>,
    pub node: Option<usize>,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(b) = self.block {
            parts.push(format!("block {b}"));
        }
        if let Some(s) = self.step {
            parts.push(format!("step {s}"));
        }
        if let Some(n) = self.node {
            parts.push(format!("node {n}"));
        }
        if parts.is_empty() {
            f.write_str("unknown location")
        } else {
            f.write_str(&parts.join(", "))
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-physical Bloch vector: |r| = {norm} exceeds 1")]
    NonPhysical { norm: f64 },

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("Cramér-Rao bound undefined for Fisher information {fq}")]
    DegenerateBound { fq: f64 },

    #[error("state left the Bloch ball (min eigenvalue {min_eigenvalue:e}) at {location}; dt is too large")]
    NonPhysicalDrift {
        min_eigenvalue: f64,
        location: Location,
    },

    #[error("posterior underflow: every hypothesis has zero likelihood")]
    AllZeroLikelihood,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration violates `{invariant}`: {detail}")]
    Validation { invariant: String, detail: String },

    #[error("parse error{}{}: {message}",
        line.map(|l| format!(" at line {l}")).unwrap_or_default(),
        key.as_ref().map(|k| format!(" (key `{k}`)")).unwrap_or_default())]
    Parse {
        line: Option<usize>,
        key: Option<String>,
        message: String,
    },

    #[error("malformed record file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(invariant: &str, detail: impl Into<String>) -> Self {
        Error::Validation {
            invariant: invariant.to_string(),
            detail: detail.into(),
        }
    }

    /// Attach (or refine) the location of a numerical failure.
    pub fn at(mut self, f: impl FnOnce(&mut Location)) -> Self {
        if let Error::NonPhysicalDrift { location, .. } = &mut self {
            f(location);
        }
        self
    }

    /// Short machine-readable tag used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonPhysical { .. } => "non_physical",
            Error::InvalidOperator(_) => "invalid_operator",
            Error::DegenerateBound { .. } => "degenerate_bound",
            Error::NonPhysicalDrift { .. } => "non_physical_drift",
            Error::AllZeroLikelihood => "all_zero_likelihood",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Validation { .. } => "validation",
            Error::Parse { .. } => "parse",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    /// Configuration problems (exit code 2) versus numerical failures (3).
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Validation { .. }
                | Error::Parse { .. }
                | Error::InvalidArgument(_)
                | Error::NonPhysical { .. }
                | Error::DegenerateBound { .. }
                | Error::InvalidOperator(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
