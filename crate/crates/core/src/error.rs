use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the laboratory.
///
/// Every refusal carries enough context to be reported as machine-readable
/// JSON by the runner; budget refusals map to their own exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid form: {0}")]
    InvalidForm(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what}: estimated cost {estimated:.3e} exceeds budget {budget:.3e}")]
    Budget {
        what: String,
        estimated: f64,
        budget: f64,
    },

    #[error("lambda = {0} is not a represented value inside the cutoff support")]
    NotRepresented(u64),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid sparse collection: {0}")]
    InvalidCollection(String),

    #[error("inadmissible stopping time: density cube {cube} has min scale {min_scale} <= side {side}")]
    Inadmissible {
        cube: String,
        min_scale: f64,
        side: i64,
    },

    #[error("packing violated below {cube}: stopping cubes cover {covered} > |Q|/4 = {limit}")]
    Packing {
        cube: String,
        covered: u128,
        limit: u128,
    },

    #[error("recursion depth cap {0} reached")]
    DepthCap(usize),

    #[error("quadrature error estimate {estimate:.3e} above tolerance {tolerance:.3e}")]
    Quadrature { estimate: f64, tolerance: f64 },

    #[error("cache corruption in {0:?}")]
    CacheCorrupt(Vec<PathBuf>),

    #[error("malformed file {path:?}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn budget(what: impl Into<String>, estimated: f64, budget: f64) -> Self {
        Error::Budget {
            what: what.into(),
            estimated,
            budget,
        }
    }

    /// Short machine-readable tag used in error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidForm(_) => "invalid-form",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Budget { .. } => "budget",
            Error::NotRepresented(_) => "not-represented",
            Error::Unsupported(_) => "unsupported",
            Error::InvalidCollection(_) => "invalid-collection",
            Error::Inadmissible { .. } => "inadmissible",
            Error::Packing { .. } => "packing",
            Error::DepthCap(_) => "depth-cap",
            Error::Quadrature { .. } => "quadrature",
            Error::CacheCorrupt(_) => "cache-corrupt",
            Error::Format { .. } => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
