use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A model or sampler parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// The inputs are admissible but the requested quantity is undefined there.
    #[error("domain error: {0}")]
    Domain(String),
    /// The requested integral does not converge for this parameter combination.
    #[error("divergent model: {0}")]
    Divergent(String),
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
