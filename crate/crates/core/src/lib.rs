//! Simulator and estimation toolkit for a symmetric two-group scheduling
//! model with queue-based momentary releases.
//!
//! The crate simulates the slot-level dynamics and the embedded chain at
//! switching times, estimates stationary means and the heavy-traffic scaling
//! exponent `alpha(beta)` via a `a + b/x` regression, and ships Monte-Carlo
//! oracles that check the random-walk bounds and conditioned-walk facts the
//! scaling analysis rests on.

pub mod dist;
pub mod estimators;
mod lsq;
pub mod model;
pub mod oracles;
pub mod regression;
pub mod rng;

pub use dist::{geometric_xi_for_load, DistError, Distribution, DistributionSpec};
pub use model::{
    psi, Beta, Chain, ChainStreams, CycleRecord, Epoch, Model, ModelError, ModelParams,
    SystemState,
};
pub use rng::RngStream;
