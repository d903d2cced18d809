use alloc::string::String;
use alloc::vec::Vec;

use crate::channel::Violation;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("direction vector is not unit length (norm {0})")]
    NonUnitDirection(f64),
    #[error("speed must be non-negative and finite, got {0}")]
    InvalidSpeed(f64),
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("formation matrix is {got_uavs}x{got_channels}, world has {uavs} UAVs and {channels} sub-channels")]
    FormationShape {
        uavs: usize,
        channels: usize,
        got_uavs: usize,
        got_channels: usize,
    },
    #[error("formation matrix violates the sub-channel constraint at {} place(s)", .0.len())]
    InvalidFormation(Vec<Violation>),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("forward cache does not belong to this network state")]
    StaleCache,
    #[error("kernel matrix is not positive definite even with jitter {0}")]
    NotPositiveDefinite(f64),
    #[error("instance too large for exhaustive search ({uavs} UAVs, {channels} sub-channels)")]
    TooLarge { uavs: usize, channels: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}
