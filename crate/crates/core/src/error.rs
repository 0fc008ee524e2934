//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CadeError>;

#[derive(Debug, Error)]
pub enum CadeError {
    /// The nonzero pattern of an adjacency matrix contains a directed cycle.
    #[error("adjacency contains a directed cycle through {cycle:?}")]
    Cycle { cycle: Vec<usize> },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("design matrix is rank deficient: {0}")]
    Singular(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("enumeration needs {configs} configurations, cap is {cap}")]
    Size { configs: usize, cap: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CadeError {
    /// Stable machine-readable tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            CadeError::Cycle { .. } => "CycleError",
            CadeError::Numeric(_) => "NumericError",
            CadeError::Range(_) => "RangeError",
            CadeError::Config(_) => "ConfigError",
            CadeError::Singular(_) => "SingularError",
            CadeError::Divergence { .. } => "DivergenceError",
            CadeError::Shape(_) => "ShapeError",
            CadeError::Size { .. } => "SizeError",
            CadeError::Parse(_) => "ParseError",
            CadeError::Io(_) => "IoError",
            CadeError::Csv(_) => "IoError",
        }
    }

    /// Prefix the message with experiment context, keeping the kind.
    pub fn context(self, ctx: &str) -> CadeError {
        match self {
            CadeError::Numeric(m) => CadeError::Numeric(format!("{ctx}: {m}")),
            CadeError::Range(m) => CadeError::Range(format!("{ctx}: {m}")),
            CadeError::Config(m) => CadeError::Config(format!("{ctx}: {m}")),
            CadeError::Singular(m) => CadeError::Singular(format!("{ctx}: {m}")),
            CadeError::Shape(m) => CadeError::Shape(format!("{ctx}: {m}")),
            CadeError::Parse(m) => CadeError::Parse(format!("{ctx}: {m}")),
            CadeError::Io(e) => CadeError::Io(std::io::Error::new(e.kind(), format!("{ctx}: {e}"))),
            other => other,
        }
    }
}

pub(crate) fn ensure_finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CadeError::Numeric(format!("{what} is not finite ({v})")))
    }
}
