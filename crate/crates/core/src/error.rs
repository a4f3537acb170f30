use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("curvilinear singularity: 1 - d*kappa too small (d = {d}, kappa = {kappa})")]
    Singularity { d: f64, kappa: f64 },

    #[error("validation error at {pointer}: {message}")]
    Validation { pointer: String, message: String },

    #[error("no solution: every relaxation set was infeasible")]
    NoSolution,

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("candidate cannot be tracked: max deviation {max_deviation_m:.3} m exceeds {limit_m:.3} m")]
    Untrackable { max_deviation_m: f64, limit_m: f64 },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn validation(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
