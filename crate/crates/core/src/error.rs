//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter value is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Input data is malformed (wrong shape, unsorted, missing values).
    #[error("invalid input: {0}")]
    Input(String),

    /// A model fit could not be carried out or produced an unusable model.
    #[error("fit failed: {0}")]
    Fit(String),

    /// Rejection sampling exhausted its attempt budget.
    #[error("sampling failed after {attempts} attempts: {context}")]
    Sampling { attempts: usize, context: String },

    /// A numerical routine diverged or encountered non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The hydraulic simulation could not be advanced.
    #[error("simulation failure: {0}")]
    Simulation(String),

    /// A configuration file is missing keys or holds rejected values.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
