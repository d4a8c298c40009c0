use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("inadmissible state: density {rho:e}, internal energy {internal:e}")]
    Inadmissible { rho: f64, internal: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("index ({i}, {j}) outside grid")]
    IndexOutOfRange { i: isize, j: isize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite numerical flux at {location}")]
    NonFiniteFlux { location: String },

    #[error("no convergence after {steps} steps (max residual {residual:e})")]
    NonConvergence { steps: usize, residual: f64, history: Vec<f64> },

    #[error("mean field is not steady: max residual {residual:e} exceeds {tolerance:e}")]
    NotSteady { residual: f64, tolerance: f64 },

    #[error("eigenvalue iteration failed to converge at index {index}")]
    EigenNoConvergence { index: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
