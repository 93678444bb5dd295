use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tableau: {0}")]
    InvalidTableau(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid model parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("spectral data is not the transform of a real field (imaginary residue {residue:.3e}, norm {norm:.3e})")]
    ImaginaryResidue { residue: f64, norm: f64 },

    #[error("Krylov solver did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    KrylovNonConvergence { iterations: usize, residual: f64 },

    #[error("Picard iteration did not converge in {iterations} iterations (last increment {increment:.3e})")]
    PicardNonConvergence { iterations: usize, increment: f64 },

    #[error("extrapolation history is empty; take the first step with the start-up procedure")]
    HistoryNotReady,

    #[error("{0}")]
    Precondition(String),

    #[error("config line {line}: `{key}`: {reason}")]
    Config {
        line: usize,
        key: String,
        reason: String,
    },

    #[error("config: required key `{0}` is missing")]
    MissingKey(String),

    #[error("solution became non-finite")]
    NonFinite,

    #[error("snapshot format: {0}")]
    Format(String),

    #[error("step {step} (t = {t}): {source}")]
    Step {
        step: usize,
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn config(line: usize, key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            line,
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// True for bad configuration input.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::MissingKey(_))
    }

    /// True for failures of the time integrators (as opposed to bad input).
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::KrylovNonConvergence { .. }
            | Error::PicardNonConvergence { .. }
            | Error::NonFinite => true,
            Error::Step { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }
}
