use thiserror::Error;

/// Errors produced by the toolkit's core operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix/vector dimensions do not line up with the system.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    /// `1 + D*Dc` vanished: the feedback loop has no unique solution.
    #[error("ill-posed feedback loop: |1 + D*Dc| = {magnitude:.3e} (D = {d}, Dc = {dc})")]
    IllPosed { magnitude: f64, d: f64, dc: f64 },

    /// Not enough samples for the requested horizon.
    #[error("insufficient data: {context} requires {required} samples, trajectory has {available}")]
    InsufficientData {
        context: &'static str,
        required: usize,
        available: usize,
    },

    /// The measured input is not persistently exciting of the required order.
    #[error(
        "input not persistently exciting of order {required}: Hankel matrix of that depth has \
         numerical rank {achieved_rank} (need {required})"
    )]
    NotPersistentlyExciting {
        required: usize,
        achieved_rank: usize,
    },

    /// The data admits no usable zero-initial-condition trajectory.
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// A reference signal cannot be reproduced by the trajectory parametrization.
    #[error(
        "reference not representable: least-squares residual {residual:.3e} exceeds {limit:.3e} \
         (check persistence of excitation and well-posedness)"
    )]
    NotRepresentable { residual: f64, limit: f64 },

    /// Caller passed an argument outside the operation's domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Internal iteration cap exhausted; indicates a bug or a hostile seed.
    #[error("internal: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
