//! Core of the multi-UAV offloading simulator: scenario physics, network
//! formation heuristics, Gaussian-process trajectory proposals, a small
//! multi-layer perceptron with analytic gradients, and the multi-agent
//! actor-critic trainer that ties them together.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! loading and the command line live in the `uavnet` crate.

#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod channel;
pub mod config;
pub mod error;
pub mod formation;
pub mod gp;
pub mod marl;
pub mod math;
pub mod nn;
pub mod world;

pub use error::{Error, Result};
