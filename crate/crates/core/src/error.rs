use std::path::PathBuf;

use crate::linalg::LinearSolveReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("linear solver failure: {message} (residual {:.3e}, {} iterations)", report.relative_residual, report.iterations)]
    SolverFailure { message: String, report: LinearSolveReport },

    /// Picard coupling did not reach its tolerance. Carries the last iterates
    /// so the caller can inspect or restart.
    #[error("picard iteration did not converge after {iterations} iterations (increment {increment:.3e}); try reducing the time step")]
    Nonconvergence { iterations: usize, increment: f64, last_density: Vec<f64>, last_velocity: Vec<f64> },

    #[error("internal invariant violated: {0}")]
    InternalBug(String),

    #[error("line {line}: `{key}`: {message}")]
    Parse { line: usize, key: String, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
