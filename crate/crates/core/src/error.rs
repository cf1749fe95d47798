use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("kernel validation: {0}")]
    Kernel(String),

    #[error("invalid noise level {0}: must lie in (0, 1]")]
    InvalidDelta(f64),

    #[error("map validation: {0}")]
    Map(String),

    #[error("expression error: {0}")]
    Expr(String),

    #[error("representation mismatch: {0}")]
    Representation(String),

    #[error("resolution check failed: {0}")]
    Resolution(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("input must have zero mass, got {0:.3e}")]
    MassNotZero(f64),

    #[error("deflated linear system is singular (leading eigenvalue not simple?)")]
    SingularSystem,

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("fit needs at least {needed} usable records, got {got}")]
    TooFewRecords { needed: usize, got: usize },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("Markov family validation: {0}")]
    Family(String),

    #[error("simulation config: {0}")]
    Simulation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
