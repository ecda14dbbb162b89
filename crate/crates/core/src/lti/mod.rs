//! Linear time-invariant building blocks.
//!
//! Rational transfer functions (ascending coefficients), their controllable
//! canonical realizations, series/feedback/MIMO composition, Padé dead-time
//! approximants, frequency and step responses, and a dense eigenvalue
//! solver for the stability tests built on top.

mod eigen;
mod rational;
mod response;
mod state_space;

pub use eigen::{eigenvalues, spectral_abscissa};
pub use rational::{pade_delay, poly, RationalTransfer};
pub use response::{default_step, rk4_step, step_response, StepResponse};
pub use state_space::{compose_mimo, realize, StateSpace, TransferMatrix};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LtiError {
    #[error("denominator is identically zero")]
    ZeroDenominator,
    #[error("improper transfer function: numerator degree {num} exceeds denominator degree {den}")]
    Improper { num: usize, den: usize },
    #[error("unsupported Padé order {0}, expected 1..=5")]
    UnsupportedPadeOrder(usize),
    #[error("eigenvalue iteration did not converge within {0} sweeps")]
    EigenNoConvergence(usize),
    #[error("matrix is not square")]
    NotSquare,
    #[error("non-finite coefficient")]
    NonFinite,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
    #[error("operation requires a single-input single-output model")]
    NotSiso,
    #[error("resolvent is singular at s = {0} + {1}j")]
    SingularAt(f64, f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}
