use thiserror::Error;

/// Errors raised by the modeling, analysis and control routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("index out of range: {0}")]
    Range(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Explicit stepping would be unstable; carries the diffusion number
    /// `alpha*dt*(1/dx^2 + 1/dy^2 + 1/dz^2)` which must not exceed 1/2.
    #[error("explicit scheme unstable: diffusion number {ratio:.6} exceeds 0.5")]
    Stability { ratio: f64 },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("measurement {0} is state dependent and has no lifted matrix")]
    UnsupportedMeasurement(String),

    #[error("controllability precondition violated: {0}")]
    Precondition(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit status for the command-line front end: 2 for numerical
    /// failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stability { .. } | Error::Numerical(_) => 2,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
