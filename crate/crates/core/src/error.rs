use std::path::PathBuf;

/// Errors raised by the library and the experiment runner.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A dimension, length or parameter combination that cannot work.
    #[error("configuration error: {0}")]
    Config(String),

    /// A physical quantity outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    /// `R_D + gamma*I` could not be Cholesky-factorized.
    #[error("dark-zone covariance is not positive definite (gamma = {gamma}); increase the regularization gamma")]
    SingularDarkCovariance { gamma: f64 },

    /// Generalized eigenvalues came out significantly negative.
    #[error("numerical asymmetry: generalized eigenvalue {value} below tolerance {tolerance}")]
    NegativeEigenvalue { value: f64, tolerance: f64 },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io { .. } | Error::Format { .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
