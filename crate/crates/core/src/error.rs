use thiserror::Error;

/// Errors surfaced by the simulation, moment, and control engines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: field `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("degenerate canard flow: u_c{index} = {value} (axial flow must be positive)")]
    DegenerateFlow { index: usize, value: f64 },

    #[error("statistics error: {0}")]
    Statistics(String),

    #[error("integration horizon exceeded at tau = {0}")]
    HorizonExceeded(f64),

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(field: &str, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
