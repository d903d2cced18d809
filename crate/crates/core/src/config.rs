//! Serializable configuration sections with their defaults, and conversion
//! into the runtime parameter types.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::formation::{FormationPolicy, MinRate, PolicyKind};
use crate::gp::GpConfig;
use crate::math;
use crate::world::{EnergyModel, GroundUser, Position, ProtocolConfig, SimParams, UavState, WorldState};

/// Scenario geometry, demand and flight constants. Planar coordinates in
/// this section are scaled: `[-1, 1]` spans the whole area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Half the side of the square area, in km.
    pub half_width_km: f64,
    pub uavs: usize,
    pub gus: usize,
    /// Explicit GU positions; drawn from the seed when absent.
    pub gu_positions: Option<Vec<[f64; 2]>>,
    /// Explicit UAV start positions; drawn per episode when absent.
    pub uav_starts: Option<Vec<[f64; 2]>>,
    /// Per-GU demand in bits.
    pub demand_bits: f64,
    /// UAV buffer capacity in bits.
    pub d_max_bits: f64,
    /// UAV altitude in m.
    pub altitude: f64,
    /// BS antenna height in m.
    pub bs_height: f64,
    pub bs_position: [f64; 2],
    pub v_max: f64,
    /// Minimum safe separation in m.
    pub d_min: f64,
    pub slot_len: f64,
    pub t_f: f64,
    pub t_s: f64,
    pub t_o: f64,
    pub energy: EnergyModel,
    /// G2U SNR that defines the sensing range, in dB.
    pub coverage_snr_db: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            half_width_km: 1.0,
            uavs: 3,
            gus: 8,
            gu_positions: None,
            uav_starts: None,
            demand_bits: 10e6,
            d_max_bits: 20e6,
            altitude: 100.0,
            bs_height: 25.0,
            bs_position: [1.5, 1.5],
            v_max: 20.0,
            d_min: 20.0,
            slot_len: 1.0,
            t_f: 0.3,
            t_s: 0.3,
            t_o: 0.4,
            energy: EnergyModel { c1: 9.26e-4, c2: 2250.0, hover_power: 170.0, v_floor: 1.0 },
            coverage_snr_db: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub sub_channels: usize,
    pub bandwidth_hz: f64,
    pub noise_dbm: f64,
    pub alpha_u: f64,
    pub alpha_s: f64,
    pub carrier_hz: f64,
    pub uav_power_dbm: f64,
    pub gu_power_dbm: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            sub_channels: 3,
            bandwidth_hz: 1e6,
            noise_dbm: -90.0,
            alpha_u: 2.0,
            alpha_s: 2.0,
            carrier_hz: 2e9,
            uav_power_dbm: 23.0,
            gu_power_dbm: 23.0,
        }
    }
}

impl ChannelConfig {
    /// Reference gains follow free-space propagation at the carrier.
    pub fn to_params(&self) -> ChannelParams {
        let noise = math::dbm_to_watts(self.noise_dbm);
        let beta = math::free_space_gain(self.carrier_hz);
        ChannelParams {
            sub_channels: self.sub_channels,
            bandwidth: self.bandwidth_hz,
            noise,
            alpha_u: self.alpha_u,
            alpha_s: self.alpha_s,
            beta_u: beta,
            beta_s: beta / noise,
            p_uav: math::dbm_to_watts(self.uav_power_dbm),
            q_gu: math::dbm_to_watts(self.gu_power_dbm),
            carrier: self.carrier_hz,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FormationConfig {
    pub policy: PolicyKind,
    pub b_o: f64,
    pub buffer_threshold_bits: f64,
    pub d_k: f64,
    pub min_rate: MinRate,
    pub dynamic_margin: f64,
    pub ratio_cap: f64,
    /// Buffer weight of every UAV in the cost and objective.
    pub lambda: f64,
}

impl Default for FormationConfig {
    fn default() -> Self {
        let p = FormationPolicy::default();
        Self {
            policy: p.kind,
            b_o: p.b_o,
            buffer_threshold_bits: p.buffer_threshold,
            d_k: p.d_k,
            min_rate: p.min_rate,
            dynamic_margin: p.dynamic_margin,
            ratio_cap: p.ratio_cap,
            lambda: 0.5,
        }
    }
}

impl FormationConfig {
    pub fn to_policy(&self) -> FormationPolicy {
        FormationPolicy {
            kind: self.policy,
            b_o: self.b_o,
            buffer_threshold: self.buffer_threshold_bits,
            d_k: self.d_k,
            min_rate: self.min_rate,
            dynamic_margin: self.dynamic_margin,
            ratio_cap: self.ratio_cap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub energy: f64,
    pub delivery: f64,
    pub sensing: f64,
    /// Penalty per neighbour closer than the safe distance.
    pub safety: f64,
    pub discount: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { energy: 1.0, delivery: 1.0, sensing: 1.0, safety: 10.0, discount: 0.95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub episodes: u64,
    /// Slots per episode.
    pub horizon: u64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Transitions stored before updates start; defaults to the batch size.
    pub warmup: Option<usize>,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub epsilon: f64,
    pub noise_rate: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub rewards: RewardWeights,
    pub bo_enabled: bool,
    /// Propose a GP waypoint every `bo_stride` slots.
    pub bo_stride: u64,
    /// Gradient updates per agent per slot once warm.
    pub updates_per_slot: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            episodes: 20_000,
            horizon: 60,
            batch_size: 256,
            replay_capacity: 100_000,
            warmup: None,
            tau: 0.01,
            actor_lr: 1e-3,
            critic_lr: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epsilon: 0.1,
            noise_rate: 0.1,
            actor_hidden: alloc::vec![64, 64],
            critic_hidden: alloc::vec![64, 64],
            rewards: RewardWeights::default(),
            bo_enabled: true,
            bo_stride: 1,
            updates_per_slot: 1,
        }
    }
}

impl TrainingConfig {
    pub fn warmup(&self) -> usize {
        self.warmup.unwrap_or(self.batch_size)
    }
}

/// Everything a simulation or training run needs apart from the seed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub scenario: ScenarioConfig,
    pub channel: ChannelConfig,
    pub formation: FormationConfig,
    pub gp: GpConfig,
    pub training: TrainingConfig,
}

fn check(ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg.into()))
    }
}

fn in_unit_square(p: &[f64; 2]) -> bool {
    p[0].abs() <= 1.0 && p[1].abs() <= 1.0
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        check(s.half_width_km > 0.0, "scenario.half_width_km must be positive")?;
        check(s.uavs >= 1, "scenario.uavs must be at least 1")?;
        check(s.demand_bits >= 0.0, "scenario.demand_bits must be non-negative")?;
        check(s.v_max > 0.0, "scenario.v_max must be positive")?;
        check(s.altitude > 0.0 && s.bs_height >= 0.0, "heights must be non-negative, altitude positive")?;
        if let Some(g) = &s.gu_positions {
            check(g.len() == s.gus, "scenario.gu_positions must list one point per GU")?;
            check(g.iter().all(in_unit_square), "scenario.gu_positions must lie in [-1, 1]")?;
        }
        if let Some(u) = &s.uav_starts {
            check(u.len() == s.uavs, "scenario.uav_starts must list one point per UAV")?;
            check(u.iter().all(in_unit_square), "scenario.uav_starts must lie in [-1, 1]")?;
        }
        let t = &self.training;
        check(t.horizon >= 1, "training.horizon must be at least 1")?;
        check(t.batch_size >= 1, "training.batch_size must be at least 1")?;
        check(t.replay_capacity >= t.batch_size, "training.replay_capacity must hold a batch")?;
        check(t.tau >= 0.0 && t.tau <= 1.0, "training.tau must lie in [0, 1]")?;
        check(t.actor_lr > 0.0 && t.critic_lr > 0.0, "learning rates must be positive")?;
        check((0.0..=1.0).contains(&t.epsilon), "training.epsilon must lie in [0, 1]")?;
        check(t.noise_rate >= 0.0, "training.noise_rate must be non-negative")?;
        check(t.bo_stride >= 1, "training.bo_stride must be at least 1")?;
        check(
            t.actor_hidden.iter().chain(&t.critic_hidden).all(|&h| h > 0),
            "hidden layer sizes must be positive",
        )?;
        let r = &t.rewards;
        check(
            r.energy >= 0.0 && r.delivery >= 0.0 && r.sensing >= 0.0 && r.safety >= 0.0,
            "reward weights must be non-negative",
        )?;
        check((0.0..1.0).contains(&r.discount), "training.rewards.discount must lie in [0, 1)")?;
        check(self.formation.lambda >= 0.0, "formation.lambda must be non-negative")?;
        self.formation.to_policy().validate()?;
        self.gp.validate()?;
        let p = self.sim_params();
        p.protocol.validate()?;
        p.channel.validate()
    }

    pub fn half_width(&self) -> f64 {
        self.scenario.half_width_km * 1e3
    }

    pub fn sim_params(&self) -> SimParams {
        let s = &self.scenario;
        let channel = self.channel.to_params();
        let coverage_radius = channel.coverage_radius(math::db_to_linear(s.coverage_snr_db));
        let hw = self.half_width();
        SimParams {
            protocol: ProtocolConfig {
                slot_len: s.slot_len,
                t_f: s.t_f,
                t_s: s.t_s,
                t_o: s.t_o,
                d_min: s.d_min,
                coverage_radius,
                d_max: s.d_max_bits,
                energy: s.energy,
            },
            channel,
            bs: Position::new(s.bs_position[0] * hw, s.bs_position[1] * hw, s.bs_height),
            half_width: hw,
        }
    }

    /// World stream 0 places the GUs; stream `episode + 1` draws that
    /// episode's UAV starts.
    pub fn world_rng(seed: u64, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        rng
    }

    pub fn gu_layout(&self, seed: u64) -> Vec<GroundUser> {
        let s = &self.scenario;
        let hw = self.half_width();
        let mut rng = Self::world_rng(seed, 0);
        (0..s.gus)
            .map(|id| {
                let [x, y] = match &s.gu_positions {
                    Some(p) => p[id],
                    None => [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                };
                GroundUser {
                    id,
                    pos: Position::new(x * hw, y * hw, 0.0),
                    demand: s.demand_bits,
                    remaining: s.demand_bits,
                }
            })
            .collect()
    }

    /// Initial world of an episode. `gus` comes from [`SimConfig::gu_layout`].
    pub fn initial_world(&self, seed: u64, episode: u64, gus: &[GroundUser]) -> WorldState {
        let s = &self.scenario;
        let hw = self.half_width();
        let mut rng = Self::world_rng(seed, episode + 1);
        let uavs = (0..s.uavs)
            .map(|id| {
                let [x, y] = match &s.uav_starts {
                    Some(p) => p[id],
                    None => [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                };
                UavState {
                    id,
                    pos: Position::new(x * hw, y * hw, s.altitude),
                    buffer: 0.0,
                    energy_used: 0.0,
                    v_max: s.v_max,
                }
            })
            .collect();
        WorldState::new(uavs, gus.to_vec(), self.channel.sub_channels)
    }

    pub fn lambdas(&self) -> Vec<f64> {
        alloc::vec![self.formation.lambda; self.scenario.uavs]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn defaults_validate() {
        SimConfig::default().validate().unwrap();
    }

    #[test]
    fn default_physics() {
        let p = SimConfig::default().sim_params();
        assert_relative_eq!(p.channel.noise, 1e-12, max_relative = 1e-12);
        assert_relative_eq!(p.channel.p_uav, 0.19952623149688797, max_relative = 1e-12);
        assert_relative_eq!(p.channel.beta_u, 1.42286e-4, max_relative = 1e-4);
        assert_eq!(p.channel.sub_channels, 3);
        assert_eq!(p.half_width, 1000.0);
        assert_eq!(p.bs, Position::new(1500.0, 1500.0, 25.0));
        let snr = p.channel.g2u_snr(p.protocol.coverage_radius);
        assert_relative_eq!(snr, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn layout_is_seeded_and_independent_of_episode() {
        let cfg = SimConfig::default();
        let a = cfg.gu_layout(7);
        assert_eq!(a, cfg.gu_layout(7));
        assert_ne!(a, cfg.gu_layout(8));
        let w1 = cfg.initial_world(7, 0, &a);
        let w2 = cfg.initial_world(7, 1, &a);
        assert_eq!(w1.gus, w2.gus);
        assert_ne!(w1.uavs, w2.uavs);
        assert_eq!(w1, cfg.initial_world(7, 0, &a));
        for u in &w1.uavs {
            assert!(u.pos.x.abs() <= 1000.0 && u.pos.y.abs() <= 1000.0 && u.pos.z == 100.0);
        }
    }

    #[test]
    fn explicit_positions_are_scaled() {
        let mut cfg = SimConfig::default();
        cfg.scenario.gus = 1;
        cfg.scenario.gu_positions = Some(alloc::vec![[0.5, -0.25]]);
        cfg.validate().unwrap();
        assert_eq!(cfg.gu_layout(0)[0].pos, Position::new(500.0, -250.0, 0.0));
        cfg.scenario.gu_positions = Some(alloc::vec![[1.5, 0.0]]);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = SimConfig::default();
        cfg.training.rewards.discount = 1.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = SimConfig::default();
        cfg.scenario.t_o = 0.5;
        assert!(cfg.validate().is_err());
    }
}
