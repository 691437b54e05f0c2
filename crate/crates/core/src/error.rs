use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain spec: {0}")]
    InvalidSpec(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{block} solve failed: {msg}")]
    Solver { block: &'static str, msg: String },

    #[error("matrix is not positive definite (curvature {curvature:e} at iteration {iteration})")]
    Indefinite { iteration: usize, curvature: f64 },

    #[error("step {step} rejected: {msg}")]
    StepRejected { step: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
