//! Training experiments behind the convergence and ordering checks.

use serde::{Deserialize, Serialize};
use uavnet_core::formation::PolicyKind;
use uavnet_core::marl::{EpisodeMode, EpisodeSummary, NullSink, Trainer};

use crate::config::RunConfig;
use crate::error::Result;
use crate::run::{compare, Comparison, Pilot};

/// One UAV, one GU at a fixed offset from a fixed start, plain DDPG. The
/// demand exceeds what one episode can drain so flying towards the GU pays.
pub fn single_agent_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    let s = &mut cfg.scenario;
    s.uavs = 1;
    s.gus = 1;
    s.uav_starts = Some(vec![[0.0, 0.0]]);
    s.gu_positions = Some(vec![[0.3, 0.0]]);
    s.demand_bits = 400e6;
    cfg.training.bo_enabled = false;
    cfg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanityOutcome {
    pub seed: u64,
    pub scripted_reward: f64,
    pub best_eval_reward: f64,
    /// Training episodes run before the greedy policy reached the target.
    pub episodes_to_target: Option<u64>,
    pub episodes_run: u64,
}

impl SanityOutcome {
    pub fn passed(&self) -> bool {
        self.episodes_to_target.is_some()
    }
}

/// Trains until the greedy episode reward reaches `fraction` of the scripted
/// pilot's reward, evaluating every `eval_every` episodes, for at most
/// `max_episodes`.
pub fn single_agent_sanity(
    cfg: &RunConfig,
    seed: u64,
    fraction: f64,
    max_episodes: u64,
    eval_every: u64,
) -> Result<SanityOutcome> {
    let mut trainer = Trainer::new(&cfg.sim(), seed)?;
    let scripted = trainer.scripted_episode(0, &mut NullSink)?.reward;
    let target = if scripted >= 0.0 { fraction * scripted } else { scripted / fraction };
    let mut best = f64::NEG_INFINITY;
    let mut reached = None;
    let mut ep = 0;
    while ep < max_episodes {
        trainer.run_episode(ep, EpisodeMode::Train, &mut NullSink)?;
        ep += 1;
        if ep % eval_every == 0 || ep == max_episodes {
            let r = trainer.run_episode(ep, EpisodeMode::Eval, &mut NullSink)?.reward;
            best = best.max(r);
            if r >= target {
                reached = Some(ep);
                break;
            }
        }
    }
    Ok(SanityOutcome { seed, scripted_reward: scripted, best_eval_reward: best, episodes_to_target: reached, episodes_run: ep })
}

/// Trailing mean over `window` episodes.
pub fn smoothed(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (i, v) in values.iter().enumerate() {
        acc += v;
        if i >= window {
            acc -= values[i - window];
        }
        out.push(acc / (i + 1).min(window) as f64);
    }
    out
}

/// Learning-curve statistics of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveStats {
    pub episodes: usize,
    pub mean_sensed_bits: f64,
    pub final_reward: f64,
    /// First episode whose smoothed reward covers 80% of the way from the
    /// first full window to the final smoothed reward.
    pub episodes_to_80: usize,
    /// Sample variance of episode rewards over the last quarter of the run.
    pub late_variance: f64,
}

pub const SMOOTHING_WINDOW: usize = 100;

pub fn curve_stats(runs: &[EpisodeSummary]) -> CurveStats {
    let rewards: Vec<f64> = runs.iter().map(|s| s.reward).collect();
    let n = rewards.len();
    let w = SMOOTHING_WINDOW.min(n.max(1));
    let sm = smoothed(&rewards, w);
    let final_reward = sm.last().copied().unwrap_or(0.0);
    let start = sm.get(w - 1).copied().unwrap_or(final_reward);
    let threshold = start + 0.8 * (final_reward - start);
    let episodes_to_80 = (w - 1..n).find(|&e| sm[e] >= threshold).unwrap_or(n);
    let tail = &rewards[n - n / 4..];
    let late_variance = if tail.len() > 1 {
        let m = tail.iter().sum::<f64>() / tail.len() as f64;
        tail.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (tail.len() - 1) as f64
    } else {
        0.0
    };
    CurveStats {
        episodes: n,
        mean_sensed_bits: runs.iter().map(|s| s.sensed_bits).sum::<f64>() / n.max(1) as f64,
        final_reward,
        episodes_to_80,
        late_variance,
    }
}

/// Trains one variant for `episodes` episodes and returns every episode
/// summary with the trained trainer.
pub fn train_variant(cfg: &RunConfig, seed: u64, bo: bool, episodes: u64) -> Result<(Vec<EpisodeSummary>, Trainer)> {
    let mut sim = cfg.sim();
    sim.training.bo_enabled = bo;
    let mut trainer = Trainer::new(&sim, seed)?;
    let mut runs = Vec::with_capacity(episodes as usize);
    for ep in 0..episodes {
        runs.push(trainer.run_episode(ep, EpisodeMode::Train, &mut NullSink)?);
    }
    Ok((runs, trainer))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedClaims {
    pub seed: u64,
    pub bo: CurveStats,
    pub plain: CurveStats,
    pub comparison: Comparison,
    pub more_sensing: bool,
    pub faster_convergence: bool,
    pub final_not_lower: bool,
    pub smaller_variance: bool,
    pub completion_ordering: bool,
    pub eda_beats_noncoop_10pct: bool,
    pub noncoop_largest_buffer: bool,
}

fn completion_at(c: &Comparison, kind: PolicyKind, idx: usize) -> f64 {
    c.result(kind).map_or(f64::INFINITY, |r| r.runs[idx].completion_time_slots as f64)
}

fn buffer_at(c: &Comparison, kind: PolicyKind, idx: usize) -> f64 {
    c.result(kind).map_or(f64::NAN, |r| r.runs[idx].max_buffer_bits)
}

/// Both variants on one seed, then the formation comparison flown by the
/// trained BO variant's actors over the demand sweep.
pub fn desk_scale_seed(cfg: &RunConfig, seed: u64, episodes: u64) -> Result<SeedClaims> {
    let (bo_runs, bo_trainer) = train_variant(cfg, seed, true, episodes)?;
    let (plain_runs, _) = train_variant(cfg, seed, false, episodes)?;
    let bo = curve_stats(&bo_runs);
    let plain = curve_stats(&plain_runs);
    let mut ccfg = cfg.clone();
    ccfg.seed = seed;
    let comparison = compare(&ccfg, &PolicyKind::ALL, &Pilot::Actors(bo_trainer.agents.clone()))?;
    let top = ccfg.compare.demand_scales.len() - 1;
    let ct = |k| completion_at(&comparison, k, top);
    let (eda, dynamic, buffer, noncoop) =
        (ct(PolicyKind::EdaNf), ct(PolicyKind::DynamicNf), ct(PolicyKind::BufferThreshold), ct(PolicyKind::NonCooperative));
    Ok(SeedClaims {
        seed,
        more_sensing: bo.mean_sensed_bits >= plain.mean_sensed_bits,
        faster_convergence: bo.episodes_to_80 < plain.episodes_to_80,
        final_not_lower: bo.final_reward >= plain.final_reward,
        smaller_variance: bo.late_variance < plain.late_variance,
        completion_ordering: eda <= dynamic && dynamic <= buffer && buffer <= noncoop,
        eda_beats_noncoop_10pct: eda <= 0.9 * noncoop,
        noncoop_largest_buffer: buffer_at(&comparison, PolicyKind::NonCooperative, 0)
            >= buffer_at(&comparison, PolicyKind::EdaNf, 0),
        bo,
        plain,
        comparison,
    })
}

/// Desk-scale scenario: three UAVs, eight GUs, a 2 km square and defaults
/// everywhere else.
pub fn desk_scale_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.scenario.uavs = 3;
    cfg.scenario.gus = 8;
    cfg.scenario.half_width_km = 1.0;
    cfg.training.episodes = 20_000;
    cfg.compare.demand_scales = vec![1.0, 2.0, 3.0];
    cfg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimTally {
    pub sensing: usize,
    pub convergence: usize,
    pub variance: usize,
    pub completion: usize,
    pub buffer: usize,
    pub seeds: usize,
}

pub fn tally(claims: &[SeedClaims]) -> ClaimTally {
    let count = |f: &dyn Fn(&SeedClaims) -> bool| claims.iter().filter(|c| f(c)).count();
    ClaimTally {
        sensing: count(&|c| c.more_sensing),
        convergence: count(&|c| c.faster_convergence && c.final_not_lower),
        variance: count(&|c| c.smaller_variance),
        completion: count(&|c| c.completion_ordering && c.eda_beats_noncoop_10pct),
        buffer: count(&|c| c.noncoop_largest_buffer),
        seeds: claims.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing_is_a_trailing_mean() {
        let s = smoothed(&[1.0, 2.0, 3.0, 4.0], 2);
        assert_eq!(s, vec![1.0, 1.5, 2.5, 3.5]);
    }

    #[test]
    fn curve_stats_on_a_ramp() {
        let runs: Vec<EpisodeSummary> = (0..400)
            .map(|e| EpisodeSummary { episode: e, reward: (e as f64).min(200.0), sensed_bits: 1.0, ..Default::default() })
            .collect();
        let c = curve_stats(&runs);
        assert_eq!(c.final_reward, 200.0);
        assert_eq!(c.late_variance, 0.0);
        assert!(c.episodes_to_80 > 99 && c.episodes_to_80 < 250, "{}", c.episodes_to_80);
        assert_eq!(c.mean_sensed_bits, 1.0);
    }

    #[test]
    fn tiny_desk_run_produces_claims() {
        let mut cfg = desk_scale_config();
        cfg.training.horizon = 4;
        cfg.training.batch_size = 4;
        cfg.training.actor_hidden = vec![4];
        cfg.training.critic_hidden = vec![4];
        cfg.compare.horizon = 20;
        let c = desk_scale_seed(&cfg, 1, 3).unwrap();
        assert_eq!(c.bo.episodes, 3);
        assert_eq!(c.comparison.policies.len(), 4);
        let t = tally(&[c]);
        assert_eq!(t.seeds, 1);
    }

    #[test]
    fn sanity_stops_at_cap() {
        let mut cfg = single_agent_config();
        cfg.training.horizon = 3;
        cfg.training.batch_size = 2;
        let out = single_agent_sanity(&cfg, 0, 10.0, 2, 1).unwrap();
        assert_eq!(out.episodes_run, 2);
        assert!(!out.passed());
    }
}
