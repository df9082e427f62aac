use std::path::PathBuf;

use crate::picard::PicardReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(
        "bundle needs {required} values but the memory budget allows {budget}; \
         use BrownianBundle::streaming to generate increments on demand"
    )]
    MemoryBudget { required: usize, budget: usize },

    #[error("non-finite state at step {step} (t = {time}) for particle {particle}")]
    BlowUp { step: usize, time: f64, particle: usize },

    #[error("Picard iteration did not reach tolerance after {} iterations (last gap {:e})", .0.iterations, .0.terminal_gap())]
    NonConvergence(Box<PicardReport>),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed law-flow file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for failures of the numerics (blow-up, non-convergence) as
    /// opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::BlowUp { .. } | Error::NonConvergence(_))
    }
}
