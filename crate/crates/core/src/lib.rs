#![no_std]
//! Circle-criterion certification of Q(U) droop control in distribution grids.
//!
//! The crate covers the static grid model and AC power flow, the DER control
//! loops and their PT2 approximations, the strict-positive-realness test of
//! the sector-transformed MIMO loop with its slope search, and a quasi-static
//! time-domain simulator used to cross-check certified slopes.

extern crate alloc;

pub mod circle;
pub mod der;
pub mod fit;
pub mod grid;
pub mod lti;
pub mod optimize;
pub mod powerflow;
pub mod search;
pub mod sim;

/// Any error raised by the crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Grid(#[from] grid::GridError),
    #[error(transparent)]
    PowerFlow(#[from] powerflow::PowerFlowError),
    #[error(transparent)]
    Lti(#[from] lti::LtiError),
    #[error(transparent)]
    Der(#[from] der::DerError),
    #[error(transparent)]
    Fit(#[from] fit::FitError),
    #[error(transparent)]
    Circle(#[from] circle::CircleError),
    #[error(transparent)]
    Sim(#[from] sim::SimError),
}
