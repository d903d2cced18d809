//! Configuration files, metric and trajectory writers, checkpoints, run
//! commands and oracle checks around [`uavnet_core`].

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod oracle;
pub mod run;
pub mod trajectory;

pub use config::{load_config, parse_config, RunConfig};
pub use error::{HarnessError, Result};
pub use uavnet_core;
