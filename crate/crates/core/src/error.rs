use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("trait {trait_value} is outside the viable set (R(y, 0) = {rate_at_zero} <= 0)")]
    OutOfDomain { trait_value: f64, rate_at_zero: f64 },

    #[error("maximum of the field touches the grid boundary at x = {x} (t = {time}); enlarge the domain")]
    BoundaryContact { x: f64, time: f64 },

    #[error("non-finite value at step {step} (t = {time})")]
    BlowUp { step: usize, time: f64 },

    #[error("degenerate configuration: {0}")]
    Degeneracy(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("trajectories are not time-aligned: {0}")]
    Misalignment(String),

    #[error("misuse: {0}")]
    Misuse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
