//! Simulator of an energy-harvesting cognitive radio that estimates,
//! senses, and opportunistically accesses primary-user channels under an
//! energy-neutrality constraint.
//!
//! Layers, bottom up:
//!
//! - [`phy`]: energy-detector sample counts, transmit power for the square
//!   M-QAM family, per-slot energy arithmetic, and the fading-region rate
//!   table.
//! - [`occupancy`]: per-channel two-state Markov chains of the primary
//!   network and their joint product chain.
//! - [`policy`]: belief maintenance (joint and factored), the
//!   energy-constrained channel-selection criterion, the finite-horizon
//!   optimal policy, the myopic policy, and the baseline criteria.
//! - [`engine`]: the slot-synchronous procedure (estimate, sense, access,
//!   ACK, harvest) with deterministic parallel Monte Carlo aggregation.

pub mod engine;
pub mod error;
pub mod occupancy;
pub mod phy;
pub mod policy;
pub mod rng;

pub use error::{Error, Result};
