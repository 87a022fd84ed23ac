use thiserror::Error;

use crate::inversion::Reconstruction;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A point or ray lies outside the domain an operation requires.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Grids, sinograms or fields that must share a layout do not.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The Neumann series for the scattering term failed to contract.
    #[error(
        "Neumann iteration is not contractive after {iterations} iterations \
         (last residual ratio {ratio:.4}); (sigma, lambda*k) is outside the solvable regime"
    )]
    NonContractive { iterations: usize, ratio: f64 },

    /// Krylov iteration budget exhausted; carries the last iterate.
    #[error("Krylov solver stopped after {} iterations without reaching tolerance", .0.iterations)]
    MaxIterReached(Box<Reconstruction>),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}
