use thiserror::Error;

/// Errors shared by the geometry, problem, solver and MDP layers.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    /// A point lies outside the domain of the operation (e.g. a zero
    /// coordinate where strict positivity is required).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Requested a (distance generator, stabilizer) combination for which no
    /// prox step is implemented.
    #[error("unsupported geometry: {0}")]
    Geometry(String),

    /// A Markov chain did not have a unique stationary distribution, or a
    /// linear solve for one failed.
    #[error("ergodicity error: {0}")]
    Ergodicity(String),

    #[error("guard exceeded: {0}")]
    Guard(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
