use thiserror::Error;

/// Everything that can go wrong while building or running a model.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite amplitude in component {component} at index {index}")]
    NonFinite { component: usize, index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A parameter violates one of the structural conditions of the model.
    /// `condition` names the violated condition, e.g. `(restrh-localwp)`.
    #[error("{condition}: {message}")]
    Condition { condition: String, message: String },

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("Krylov propagation failed: {0}")]
    Krylov(String),

    #[error("Picard iteration does not contract on a slab of length {slab_length}; halve the slab (last ratios {ratios:?})")]
    SlabTooLong { slab_length: f64, ratios: Vec<f64> },

    #[error("Picard iteration did not reach tolerance {tol:e} within {iterations} iterations (last distance {distance:e})")]
    PicardExhausted { iterations: usize, distance: f64, tol: f64 },

    #[error("gradient flow stagnated: energy increased after {halvings} step halvings")]
    Stagnation { halvings: usize },

    #[error("snapshot format: {0}")]
    Snapshot(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn condition(condition: &str, message: impl Into<String>) -> Self {
        Error::Condition {
            condition: condition.to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
