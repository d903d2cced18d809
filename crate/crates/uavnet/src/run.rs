//! Train, evaluate and compare runners that write their results to disk.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uavnet_core::config::SimConfig;
use uavnet_core::formation::PolicyKind;
use uavnet_core::marl::{
    act, observe, rollout, scripted_commands, Agent, EpisodeMode, EpisodeSummary, ObsScale, Trainer,
};
use uavnet_core::nn::AdamConfig;
use uavnet_core::world::{FlyCommand, SimParams, WorldState};

use crate::checkpoint::{agent_file, load_agent, save_agent};
use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::metrics::{CsvSink, CurveSink, EpisodeRow, Tee};
use crate::trajectory::TrajectorySink;

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::io("creating output file", path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| HarnessError::io("writing", path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io("creating output directory", dir, e))
}

fn adam(cfg: &SimConfig) -> (AdamConfig, AdamConfig) {
    let t = &cfg.training;
    let a = |lr| AdamConfig { lr, beta1: t.adam_beta1, beta2: t.adam_beta2, eps: t.adam_eps };
    (a(t.actor_lr), a(t.critic_lr))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub seed: u64,
    pub episodes_requested: u64,
    pub episodes_completed: u64,
    pub stopped_early: bool,
    /// Slots the greedy evaluation episode took to drain all data.
    pub completion_time_slots: Option<u64>,
    /// Propulsion energy of the greedy evaluation episode in J.
    pub total_energy: f64,
    /// Propulsion energy over all training episodes in J.
    pub training_energy_j: f64,
    /// Mean episode reward over the last (up to) 100 training episodes.
    pub final_reward_mean: f64,
    pub mean_sensed_bits: f64,
    pub eval: Option<EpisodeRow>,
}

/// Trains, checking `stop` before each episode. Metrics, trajectories and
/// checkpoints of the episodes completed so far are written and flushed on
/// every exit path.
pub fn run_train_with(cfg: &RunConfig, stop: &dyn Fn(u64) -> bool) -> Result<TrainSummary> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    ensure_dir(out)?;
    let ckpt = out.join("checkpoints");
    ensure_dir(&ckpt)?;
    let sim = cfg.sim();
    let mut trainer = Trainer::new(&sim, cfg.seed)?;
    let mut csv = CsvSink::new(
        create(&out.join("metrics.csv"))?,
        create(&out.join("episodes.csv"))?,
        cfg.logging.metrics_every,
    );
    let mut traj = TrajectorySink::new(
        create(&out.join("trajectories.jsonl"))?,
        trainer.params(),
        cfg.logging.trajectories_every,
    );

    let episodes = cfg.training.episodes;
    let mut summaries: Vec<EpisodeSummary> = Vec::new();
    let mut stopped_early = false;
    let mut failure = None;
    for ep in 0..episodes {
        if stop(ep) {
            stopped_early = true;
            break;
        }
        let mut tee = Tee(vec![&mut csv, &mut traj]);
        match trainer.run_episode(ep, EpisodeMode::Train, &mut tee) {
            Ok(s) => summaries.push(s),
            Err(e) => {
                failure = Some(HarnessError::from(e));
                break;
            }
        }
    }
    let csv_done = csv.finish();
    let traj_done = traj.finish();
    let saved = trainer
        .agents
        .iter()
        .enumerate()
        .try_for_each(|(i, a)| save_agent(&agent_file(&ckpt, i), a));
    let eval = if failure.is_none() {
        Some(trainer.run_episode(episodes, EpisodeMode::Eval, &mut uavnet_core::marl::NullSink)?)
    } else {
        None
    };
    let tail = &summaries[summaries.len().saturating_sub(100)..];
    let mean = |v: &[EpisodeSummary], f: fn(&EpisodeSummary) -> f64| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().map(f).sum::<f64>() / v.len() as f64
        }
    };
    let summary = TrainSummary {
        seed: cfg.seed,
        episodes_requested: episodes,
        episodes_completed: summaries.len() as u64,
        stopped_early,
        completion_time_slots: eval.as_ref().and_then(|e| e.completion_slots),
        total_energy: eval.as_ref().map_or(0.0, |e| e.energy_j),
        training_energy_j: summaries.iter().map(|s| s.energy_j).sum(),
        final_reward_mean: mean(tail, |s| s.reward),
        mean_sensed_bits: mean(&summaries, |s| s.sensed_bits),
        eval: eval.as_ref().map(EpisodeRow::from),
    };
    let written = write_json(&out.join("summary.json"), &summary);
    if let Some(e) = failure {
        return Err(e);
    }
    csv_done?;
    traj_done?;
    saved?;
    written?;
    Ok(summary)
}

pub fn run_train(cfg: &RunConfig) -> Result<TrainSummary> {
    run_train_with(cfg, &|_| false)
}

pub fn load_agents(cfg: &RunConfig, dir: &Path) -> Result<Vec<Agent>> {
    let (a, c) = adam(&cfg.sim());
    (0..cfg.scenario.uavs).map(|i| load_agent(&agent_file(dir, i), a, c)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub seed: u64,
    pub episodes: Vec<EpisodeRow>,
    pub mean_reward: f64,
    pub mean_sensed_bits: f64,
    pub completed: u64,
}

/// Greedy episodes `0..episodes` with agents loaded from `checkpoints`.
pub fn run_eval(cfg: &RunConfig, checkpoints: &Path, episodes: u64) -> Result<EvalSummary> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    ensure_dir(out)?;
    let mut trainer = Trainer::new(&cfg.sim(), cfg.seed)?;
    trainer.set_agents(load_agents(cfg, checkpoints)?)?;
    let mut csv = CsvSink::new(
        create(&out.join("eval_metrics.csv"))?,
        create(&out.join("eval_episodes.csv"))?,
        cfg.logging.metrics_every,
    );
    let mut rows = Vec::new();
    let mut failure = None;
    for ep in 0..episodes {
        match trainer.run_episode(ep, EpisodeMode::Eval, &mut csv) {
            Ok(s) => rows.push(EpisodeRow::from(&s)),
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    csv.finish()?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    let n = rows.len().max(1) as f64;
    let summary = EvalSummary {
        seed: cfg.seed,
        mean_reward: rows.iter().map(|r| r.reward).sum::<f64>() / n,
        mean_sensed_bits: rows.iter().map(|r| r.sensed_bits).sum::<f64>() / n,
        completed: rows.iter().filter(|r| r.completion_slots.is_some()).count() as u64,
        episodes: rows,
    };
    write_json(&out.join("eval_summary.json"), &summary)?;
    Ok(summary)
}

/// Who flies the UAVs during a comparison.
#[derive(Debug, Clone)]
pub enum Pilot {
    Scripted,
    /// Greedy trained actors, one per UAV.
    Actors(Vec<Agent>),
}

impl Pilot {
    fn name(&self) -> &'static str {
        match self {
            Pilot::Scripted => "scripted",
            Pilot::Actors(_) => "actors",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandRun {
    pub demand_scale: f64,
    /// Slots until all data reached the BS, if within the horizon.
    pub completion_slots: Option<u64>,
    /// `completion_slots`, or the horizon when the run did not finish.
    pub completion_time_slots: u64,
    pub max_buffer_bits: f64,
    pub energy_j: f64,
    pub reward: f64,
    pub remaining_curve: Vec<f64>,
    pub reward_curve: Vec<f64>,
    pub max_buffer_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyResult {
    pub policy: PolicyKind,
    pub runs: Vec<DemandRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub seed: u64,
    pub pilot: String,
    pub horizon: u64,
    pub episode: u64,
    pub demand_scales: Vec<f64>,
    pub policies: Vec<PolicyResult>,
}

impl Comparison {
    pub fn result(&self, policy: PolicyKind) -> Option<&PolicyResult> {
        self.policies.iter().find(|p| p.policy == policy)
    }
}

fn actor_pilot<'a>(
    params: &'a SimParams,
    scale: &'a ObsScale,
    agents: &'a [Agent],
    v_max: f64,
) -> impl FnMut(&WorldState) -> Vec<FlyCommand> + 'a {
    let mut last: Option<Vec<f64>> = None;
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    move |w: &WorldState| {
        let used: Vec<f64> = w.uavs.iter().map(|u| u.energy_used).collect();
        let energy: Vec<f64> = match &last {
            Some(prev) => used.iter().zip(prev).map(|(a, b)| a - b).collect(),
            None => vec![0.0; used.len()],
        };
        last = Some(used);
        agents
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let obs = observe(params, scale, w, &energy, i);
                act(&a.actor, &obs, 0.0, &mut rng).map_or(FlyCommand::HOLD, |x| x.decode(v_max))
            })
            .collect()
    }
}

fn compare_policy(cfg: &RunConfig, kind: PolicyKind, pilot: &Pilot) -> Result<PolicyResult> {
    let mut runs = Vec::new();
    for &scale in &cfg.compare.demand_scales {
        let mut sim = cfg.sim();
        sim.scenario.demand_bits *= scale;
        sim.formation.policy = kind;
        let params = sim.sim_params();
        let gus = sim.gu_layout(cfg.seed);
        let world = sim.initial_world(cfg.seed, cfg.compare.episode, &gus);
        let policy = sim.formation.to_policy();
        let lambda = sim.lambdas();
        let mut curves = CurveSink::default();
        let obs_scale = ObsScale::new(&params, sim.scenario.altitude, sim.scenario.v_max);
        let summary = match pilot {
            Pilot::Scripted => rollout(
                &params,
                world,
                &policy,
                &lambda,
                cfg.compare.horizon,
                cfg.compare.episode,
                &sim.training.rewards,
                &mut |w| scripted_commands(&params, w),
                &mut curves,
            )?,
            Pilot::Actors(agents) => {
                let mut fly = actor_pilot(&params, &obs_scale, agents, sim.scenario.v_max);
                rollout(
                    &params,
                    world,
                    &policy,
                    &lambda,
                    cfg.compare.horizon,
                    cfg.compare.episode,
                    &sim.training.rewards,
                    &mut fly,
                    &mut curves,
                )?
            }
        };
        runs.push(DemandRun {
            demand_scale: scale,
            completion_slots: summary.completion_slots,
            completion_time_slots: summary.completion_slots.unwrap_or(cfg.compare.horizon),
            max_buffer_bits: summary.max_buffer_bits,
            energy_j: summary.energy_j,
            reward: summary.reward,
            remaining_curve: curves.remaining,
            reward_curve: curves.reward,
            max_buffer_curve: curves.max_buffer,
        });
    }
    Ok(PolicyResult { policy: kind, runs })
}

/// Runs every formation policy over the demand sweep on the same GU layout,
/// UAV starts and pilot. Nothing random depends on the policy.
pub fn compare(cfg: &RunConfig, policies: &[PolicyKind], pilot: &Pilot) -> Result<Comparison> {
    cfg.validate()?;
    if policies.len() < 2 {
        return Err(HarnessError::Config("compare needs at least two policies".into()));
    }
    if let Pilot::Actors(a) = pilot {
        if a.len() != cfg.scenario.uavs {
            return Err(HarnessError::Config(format!("{} actors for {} UAVs", a.len(), cfg.scenario.uavs)));
        }
    }
    let results: Vec<Result<PolicyResult>> = if cfg.compare.parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = policies.iter().map(|&k| s.spawn(move || compare_policy(cfg, k, pilot))).collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(HarnessError::Runtime("comparison thread panicked".into()))))
                .collect()
        })
    } else {
        policies.iter().map(|&k| compare_policy(cfg, k, pilot)).collect()
    };
    Ok(Comparison {
        seed: cfg.seed,
        pilot: pilot.name().into(),
        horizon: cfg.compare.horizon,
        episode: cfg.compare.episode,
        demand_scales: cfg.compare.demand_scales.clone(),
        policies: results.into_iter().collect::<Result<_>>()?,
    })
}

/// [`compare`] and write `comparison.json` to the output directory.
pub fn run_compare(cfg: &RunConfig, policies: &[PolicyKind], pilot: &Pilot) -> Result<(Comparison, PathBuf)> {
    let c = compare(cfg, policies, pilot)?;
    ensure_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join("comparison.json");
    write_json(&path, &c)?;
    Ok((c, path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(dir: &Path) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.output_dir = dir.to_path_buf();
        cfg.training.episodes = 3;
        cfg.training.horizon = 6;
        cfg.training.batch_size = 8;
        cfg.training.actor_hidden = vec![8];
        cfg.training.critic_hidden = vec![8];
        cfg.seed = 4;
        cfg
    }

    #[test]
    fn train_writes_all_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path());
        let s = run_train(&cfg).unwrap();
        assert_eq!(s.episodes_completed, 3);
        for f in ["metrics.csv", "episodes.csv", "trajectories.jsonl", "summary.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert!(json.get("completion_time_slots").is_some());
        assert!(json["total_energy"].as_f64().unwrap() > 0.0);
        let agents = load_agents(&cfg, &dir.path().join("checkpoints")).unwrap();
        assert_eq!(agents.len(), cfg.scenario.uavs);
    }

    #[test]
    fn early_stop_still_flushes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path());
        let s = run_train_with(&cfg, &|ep| ep == 1).unwrap();
        assert!(s.stopped_early);
        assert_eq!(s.episodes_completed, 1);
        let text = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(text.lines().count(), 1 + 6 * cfg.scenario.uavs);
    }

    #[test]
    fn eval_reloads_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path());
        run_train(&cfg).unwrap();
        let e = run_eval(&cfg, &dir.path().join("checkpoints"), 2).unwrap();
        assert_eq!(e.episodes.len(), 2);
        assert!(dir.path().join("eval_summary.json").exists());
    }

    #[test]
    fn compare_needs_two_policies() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path());
        let err = compare(&cfg, &[PolicyKind::EdaNf], &Pilot::Scripted).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn duplicate_policy_gives_identical_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        cfg.compare.horizon = 40;
        let c = compare(&cfg, &[PolicyKind::NonCooperative, PolicyKind::NonCooperative], &Pilot::Scripted).unwrap();
        assert_eq!(c.policies[0], c.policies[1]);
        assert_eq!(c.policies[0].runs.len(), 3);
        let seq = RunConfig { compare: crate::config::CompareConfig { parallel: false, ..cfg.compare.clone() }, ..cfg };
        let d = compare(&seq, &[PolicyKind::NonCooperative, PolicyKind::EdaNf], &Pilot::Scripted).unwrap();
        assert_eq!(d.policies[0], c.policies[0]);
    }

    #[test]
    fn actor_pilot_runs() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        cfg.compare.horizon = 10;
        let tr = Trainer::new(&cfg.sim(), cfg.seed).unwrap();
        let (c, path) = run_compare(&cfg, &PolicyKind::ALL, &Pilot::Actors(tr.agents.clone())).unwrap();
        assert_eq!(c.policies.len(), 4);
        assert!(path.exists());
        for p in &c.policies {
            for r in &p.runs {
                assert_eq!(r.remaining_curve.len(), r.reward_curve.len());
            }
        }
    }
}
