use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or query point is outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The Mittag-Leffler / exponential-moment series cannot be evaluated
    /// to the promised accuracy for this argument.
    #[error("series domain error at argument {argument}: {reason}")]
    SeriesDomain { argument: f64, reason: String },

    #[error("implicit solve failed at step {step}: residual {residual:e} after {iterations} iterations")]
    Solver {
        step: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("subordinator path exceeded the step cap of {cap}")]
    StepCap { cap: usize },

    #[error("{failed} of {total} paths failed, above the abort threshold")]
    TooManyFailures { failed: usize, total: usize },

    #[error("config error for key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
