use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A tabulated nonlinearity was queried outside its sample range.
    #[error("argument s = {s} outside tabulated range [{lo}, {hi}]")]
    OutOfDomain { s: f64, lo: f64, hi: f64 },

    /// The nonlinearity does not have a root of F with negative slope.
    #[error("invalid nonlinearity model: {0}")]
    InvalidModel(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// Bad run parameters (speed, ansatz, tolerances, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// The Pohozaev projection has no root in (0, 1].
    #[error("projection infeasible: {0}")]
    ProjectionInfeasible(String),

    /// An internal invariant was violated.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("field format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
