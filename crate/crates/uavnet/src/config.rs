//! JSON run configuration.
//!
//! Every section falls back to its defaults, so an empty file or `{}` is a
//! valid configuration. Unknown keys are rejected with their full path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uavnet_core::config::{ChannelConfig, FormationConfig, ScenarioConfig, SimConfig, TrainingConfig};
use uavnet_core::formation::PolicyKind;
use uavnet_core::gp::GpConfig;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub channel: ChannelConfig,
    pub formation: FormationConfig,
    pub gp: GpConfig,
    pub training: TrainingConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub logging: LoggingConfig,
    pub compare: CompareConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            scenario: sim.scenario,
            channel: sim.channel,
            formation: sim.formation,
            gp: sim.gp,
            training: sim.training,
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            logging: LoggingConfig::default(),
            compare: CompareConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoggingConfig {
    /// Write per-slot rows every this many episodes.
    pub metrics_every: u64,
    /// Write trajectories every this many episodes.
    pub trajectories_every: u64,
}

impl Default for LoggingConfig {
    fn default() -> Self {
        Self { metrics_every: 1, trajectories_every: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    pub policies: Vec<PolicyKind>,
    /// Multiples of the configured per-GU demand.
    pub demand_scales: Vec<f64>,
    /// Slot limit of each comparison episode.
    pub horizon: u64,
    /// Episode index whose UAV starts are used.
    pub episode: u64,
    /// Run policies on separate threads.
    pub parallel: bool,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            policies: PolicyKind::ALL.to_vec(),
            demand_scales: vec![1.0, 2.0, 3.0],
            horizon: 600,
            episode: 0,
            parallel: true,
        }
    }
}

impl RunConfig {
    pub fn sim(&self) -> SimConfig {
        SimConfig {
            scenario: self.scenario.clone(),
            channel: self.channel.clone(),
            formation: self.formation.clone(),
            gp: self.gp.clone(),
            training: self.training.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sim().validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.logging.metrics_every == 0 || self.logging.trajectories_every == 0 {
            return Err(HarnessError::Config("logging strides must be at least 1".into()));
        }
        if self.compare.horizon == 0 {
            return Err(HarnessError::Config("compare.horizon must be at least 1".into()));
        }
        if self.compare.demand_scales.iter().any(|s| !(*s > 0.0)) {
            return Err(HarnessError::Config("compare.demand_scales must be positive".into()));
        }
        Ok(())
    }
}

/// Parses and validates a configuration string.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg = if text.trim().is_empty() {
        RunConfig::default()
    } else {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            HarnessError::Config(format!("at `{path}`: {}", e.into_inner()))
        })?
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io("reading config", path, e))?;
    parse_config(&text)
}
