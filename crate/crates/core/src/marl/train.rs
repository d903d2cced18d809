use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::action::{act, arbitrate, bo_to_action, Action, Choice, ACTION_DIM};
use super::agent::{critic_q, target_actions, update_agent_with, Agent, Batch, Losses};
use super::obs::{obs_dim, observe_all, ObsScale};
use super::replay::{ReplayBuffer, Transition};
use super::reward::{reward, RewardComponents};
use crate::channel::FormationMatrix;
use crate::config::SimConfig;
use crate::error::Result;
use crate::formation::{cost_report, decide, CostReport, FormationInput, FormationPolicy};
use crate::gp::{propose_point, SampleHistory};
use crate::math;
use crate::nn::AdamConfig;
use crate::world::{objective_slot, step, FlyCommand, GroundUser, Position, SimParams, StepReport, WorldState, MBIT};

/// Cost report of the current state and the formation the policy builds
/// from it. `energy` is each UAV's propulsion energy of the last slot.
pub fn formation_step(
    params: &SimParams,
    w: &WorldState,
    energy: &[f64],
    lambda: &[f64],
    policy: &FormationPolicy,
) -> (FormationMatrix, CostReport) {
    let report = cost_report(params, w, energy, lambda, policy.ratio_cap);
    let positions = w.positions();
    let buffers = w.buffers();
    let input = FormationInput {
        channel: &params.channel,
        positions: &positions,
        bs: params.bs,
        buffers: &buffers,
        t_o: params.protocol.t_o,
    };
    (decide(policy, &report, &input), report)
}

/// Fly-straight-then-hover pilot: each UAV, in id order, claims the nearest
/// GU with data left that no earlier UAV claimed and flies at it, stopping
/// overhead. UAVs with nothing to claim hover.
pub fn scripted_commands(params: &SimParams, w: &WorldState) -> Vec<FlyCommand> {
    let mut claimed = vec![false; w.gus.len()];
    w.uavs
        .iter()
        .map(|u| {
            let target = w
                .gus
                .iter()
                .enumerate()
                .filter(|(m, g)| g.remaining > 0.0 && !claimed[*m])
                .map(|(m, g)| {
                    let (dx, dy) = (g.pos.x - u.pos.x, g.pos.y - u.pos.y);
                    (m, math::sqrt(dx * dx + dy * dy))
                })
                .fold(None, |best: Option<(usize, f64)>, c| match best {
                    Some(b) if b.1 <= c.1 => Some(b),
                    _ => Some(c),
                });
            match target {
                Some((m, d)) if d > 1e-9 => {
                    claimed[m] = true;
                    let g = &w.gus[m];
                    FlyCommand {
                        dir: [(g.pos.x - u.pos.x) / d, (g.pos.y - u.pos.y) / d],
                        speed: (d / params.protocol.t_f).min(u.v_max),
                    }
                }
                Some((m, _)) => {
                    claimed[m] = true;
                    FlyCommand::HOLD
                }
                None => FlyCommand::HOLD,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeMode {
    /// Exploration noise, replay and gradient updates.
    Train,
    /// Greedy actors, no learning.
    Eval,
}

/// Everything observed in one slot, handed to a [`MetricsSink`].
#[derive(Debug, Clone, Copy)]
pub struct SlotRecord<'a> {
    pub episode: u64,
    /// Index of the slot within the episode.
    pub slot: u64,
    pub commands: &'a [FlyCommand],
    pub formation: &'a FormationMatrix,
    /// Report the formation was built from.
    pub cost: &'a CostReport,
    /// State after the slot.
    pub world: &'a WorldState,
    pub report: &'a StepReport,
    pub rewards: &'a [RewardComponents],
    pub choices: &'a [Choice],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeSummary {
    pub episode: u64,
    pub slots: u64,
    /// Slots until every GU and buffer was empty, if that happened.
    pub completion_slots: Option<u64>,
    /// Reward summed over slots and agents.
    pub reward: f64,
    pub reward_per_agent: Vec<f64>,
    pub sensed_bits: f64,
    pub delivered_bits: f64,
    pub energy_j: f64,
    pub max_buffer_bits: f64,
    /// Data still in GU queues and UAV buffers at the end.
    pub remaining_bits: f64,
    /// Sum of the per-slot objective in kJ and Mbit.
    pub objective: f64,
    pub safety_violations: u64,
    pub updates: u64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub bo_chosen: u64,
    pub random_chosen: u64,
}

pub trait MetricsSink {
    fn episode_start(&mut self, _episode: u64, _world: &WorldState) {}
    fn slot(&mut self, _rec: &SlotRecord<'_>) {}
    fn episode_end(&mut self, _summary: &EpisodeSummary) {}
}

pub struct NullSink;

impl MetricsSink for NullSink {}

struct Tally {
    s: EpisodeSummary,
    losses: Losses,
}

impl Tally {
    fn new(episode: u64, n: usize) -> Self {
        Self {
            s: EpisodeSummary { episode, reward_per_agent: vec![0.0; n], ..Default::default() },
            losses: Losses::default(),
        }
    }

    fn slot(&mut self, next: &WorldState, rep: &StepReport, rewards: &[RewardComponents], lambda: &[f64]) {
        let s = &mut self.s;
        s.slots += 1;
        for (acc, r) in s.reward_per_agent.iter_mut().zip(rewards) {
            *acc += r.total;
            s.reward += r.total;
        }
        s.sensed_bits += rep.sensed.iter().sum::<f64>();
        s.delivered_bits += rep.delivered_to_bs.iter().sum::<f64>();
        s.energy_j += rep.energy.iter().sum::<f64>();
        s.max_buffer_bits = next.uavs.iter().map(|u| u.buffer).fold(s.max_buffer_bits, f64::max);
        s.objective += objective_slot(next, rep, lambda);
        s.safety_violations += rep.safety_violations as u64;
        if next.drained() && s.completion_slots.is_none() {
            s.completion_slots = Some(s.slots);
        }
    }

    fn finish(mut self, last: &WorldState) -> EpisodeSummary {
        self.s.remaining_bits = last.gu_backlog() + last.buffers().iter().sum::<f64>();
        if self.s.updates > 0 {
            self.s.critic_loss = self.losses.critic / self.s.updates as f64;
            self.s.actor_loss = self.losses.actor / self.s.updates as f64;
        }
        self.s
    }
}

/// Runs one episode with a fixed pilot and formation policy, no learning.
pub fn rollout(
    params: &SimParams,
    world: WorldState,
    policy: &FormationPolicy,
    lambda: &[f64],
    horizon: u64,
    episode: u64,
    rewards: &crate::config::RewardWeights,
    pilot: &mut dyn FnMut(&WorldState) -> Vec<FlyCommand>,
    sink: &mut dyn MetricsSink,
) -> Result<EpisodeSummary> {
    let n = world.uavs.len();
    let mut tally = Tally::new(episode, n);
    sink.episode_start(episode, &world);
    let mut w = world;
    let (mut phi, mut cost) = formation_step(params, &w, &vec![0.0; n], lambda, policy);
    let choices = vec![Choice::Actor; n];
    for t in 0..horizon {
        let commands = pilot(&w);
        let (next, rep) = step(params, &w, &commands, &phi)?;
        let rs: Vec<RewardComponents> = (0..n).map(|i| reward(i, &rep, rewards)).collect();
        tally.slot(&next, &rep, &rs, lambda);
        sink.slot(&SlotRecord {
            episode,
            slot: t,
            commands: &commands,
            formation: &phi,
            cost: &cost,
            world: &next,
            report: &rep,
            rewards: &rs,
            choices: &choices,
        });
        (phi, cost) = formation_step(params, &next, &rep.energy, lambda, policy);
        w = next;
        if w.drained() {
            break;
        }
    }
    let summary = tally.finish(&w);
    sink.episode_end(&summary);
    Ok(summary)
}

/// Multi-agent trainer over one scenario and seed.
pub struct Trainer {
    cfg: SimConfig,
    seed: u64,
    params: SimParams,
    scale: ObsScale,
    policy: FormationPolicy,
    lambda: Vec<f64>,
    gus: Vec<GroundUser>,
    pub agents: Vec<Agent>,
    replay: ReplayBuffer,
    rng: ChaCha8Rng,
}

/// Stream of the agent generator, far from the per-episode world streams.
const AGENT_STREAM: u64 = 1 << 63;

impl Trainer {
    pub fn new(cfg: &SimConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let params = cfg.sim_params();
        let n = cfg.scenario.uavs;
        let od = obs_dim(n);
        let t = &cfg.training;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(AGENT_STREAM);
        let adam = |lr| AdamConfig { lr, beta1: t.adam_beta1, beta2: t.adam_beta2, eps: t.adam_eps };
        let agents: Vec<Agent> = (0..n)
            .map(|_| Agent::new(n, od, &t.actor_hidden, &t.critic_hidden, adam(t.actor_lr), adam(t.critic_lr), &mut rng))
            .collect();
        for a in &agents {
            a.check_dims(n, od)?;
        }
        Ok(Self {
            scale: ObsScale::new(&params, cfg.scenario.altitude, cfg.scenario.v_max),
            policy: cfg.formation.to_policy(),
            lambda: cfg.lambdas(),
            gus: cfg.gu_layout(seed),
            replay: ReplayBuffer::new(t.replay_capacity),
            cfg: cfg.clone(),
            seed,
            params,
            agents,
            rng,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replay_len(&self) -> usize {
        self.replay.len()
    }

    pub fn initial_world(&self, episode: u64) -> WorldState {
        self.cfg.initial_world(self.seed, episode, &self.gus)
    }

    /// Replaces the agents, e.g. with loaded checkpoints.
    pub fn set_agents(&mut self, agents: Vec<Agent>) -> Result<()> {
        let n = self.cfg.scenario.uavs;
        for a in &agents {
            a.check_dims(n, obs_dim(n))?;
        }
        if agents.len() != n {
            return Err(crate::Error::Dimension { expected: n, got: agents.len() });
        }
        self.agents = agents;
        Ok(())
    }

    /// Plays one episode. Training episodes explore, store transitions and
    /// update every agent each slot once the replay holds `warmup` items.
    /// Evaluation episodes act greedily and leave the trainer untouched.
    pub fn run_episode(&mut self, episode: u64, mode: EpisodeMode, sink: &mut dyn MetricsSink) -> Result<EpisodeSummary> {
        let train = mode == EpisodeMode::Train;
        let mut eval_rng = ChaCha8Rng::seed_from_u64(self.seed);
        eval_rng.set_stream(AGENT_STREAM + 1 + episode);
        let tc = self.cfg.training.clone();
        let (noise, epsilon) = if train { (tc.noise_rate, tc.epsilon) } else { (0.0, 0.0) };
        let n = self.agents.len();
        let od = obs_dim(n);
        let v_max = self.cfg.scenario.v_max;
        let t_f = self.params.protocol.t_f;
        let hw = self.params.half_width;
        let reach = v_max * t_f / hw;
        let scaled = |p: Position| Position::new(p.x / hw, p.y / hw, 0.0);

        let mut tally = Tally::new(episode, n);
        let mut w = self.initial_world(episode);
        sink.episode_start(episode, &w);
        let mut energy = vec![0.0; n];
        let (mut phi, mut cost) = formation_step(&self.params, &w, &energy, &self.lambda, &self.policy);
        let mut histories: Vec<SampleHistory> = (0..n).map(|_| SampleHistory::new(self.cfg.gp.window)).collect();

        for t in 0..tc.horizon {
            let rng = if train { &mut self.rng } else { &mut eval_rng };
            let obs = observe_all(&self.params, &self.scale, &w, &energy);
            let mut actor_actions = Vec::with_capacity(n);
            for (i, a) in self.agents.iter().enumerate() {
                actor_actions.push(act(&a.actor, &obs[i * od..(i + 1) * od], noise, rng)?);
            }
            let joint: Vec<f64> = actor_actions.iter().flat_map(|a| a.raw).collect();
            let propose = tc.bo_enabled && t % tc.bo_stride == 0;
            let mut chosen = Vec::with_capacity(n);
            let mut choices = Vec::with_capacity(n);
            for i in 0..n {
                let a_actor = actor_actions[i];
                let (a, c) = if propose {
                    let u = &w.uavs[i];
                    let here = scaled(u.pos);
                    let target = propose_point(&histories[i], here, reach, 1.0, &self.cfg.gp)?;
                    let target = Position::new(target.x * hw, target.y * hw, u.pos.z);
                    let a_bo = bo_to_action(u.pos, target, v_max, t_f);
                    let q_actor = critic_q(&self.agents[i].critic, &obs, &joint)?;
                    let mut alt = joint.clone();
                    alt[i * ACTION_DIM..(i + 1) * ACTION_DIM].copy_from_slice(&a_bo.raw);
                    let q_bo = critic_q(&self.agents[i].critic, &obs, &alt)?;
                    arbitrate(a_actor, a_bo, q_actor, q_bo, epsilon, rng)
                } else {
                    arbitrate(a_actor, a_actor, 0.0, 0.0, epsilon, rng)
                };
                match c {
                    Choice::Bo => tally.s.bo_chosen += 1,
                    Choice::Random => tally.s.random_chosen += 1,
                    Choice::Actor => {}
                }
                chosen.push(a);
                choices.push(c);
            }
            let commands: Vec<FlyCommand> = chosen.iter().map(|a: &Action| a.decode(v_max)).collect();
            let (next, rep) = step(&self.params, &w, &commands, &phi)?;
            let rs: Vec<RewardComponents> = (0..n).map(|i| reward(i, &rep, &tc.rewards)).collect();
            let done = t + 1 == tc.horizon || next.drained();
            for (i, h) in histories.iter_mut().enumerate() {
                h.push(scaled(next.uavs[i].pos), rep.sensed[i] / MBIT);
            }
            if train {
                let next_obs = observe_all(&self.params, &self.scale, &next, &rep.energy);
                self.replay.push(Transition {
                    obs,
                    actions: chosen.iter().flat_map(|a| a.raw).collect(),
                    rewards: rs.iter().map(|r| r.total).collect(),
                    next_obs,
                    done,
                });
                if self.replay.len() >= tc.warmup().max(1) {
                    for _ in 0..tc.updates_per_slot {
                        let items = self.replay.sample(tc.batch_size, &mut self.rng);
                        let batch = Batch::from_transitions(&items, n)?;
                        let next_actions = target_actions(&self.agents, &batch)?;
                        for i in 0..n {
                            let l = update_agent_with(
                                i,
                                &batch,
                                &next_actions,
                                &mut self.agents,
                                tc.rewards.discount,
                                tc.tau,
                            )?;
                            tally.losses.critic += l.critic / n as f64;
                            tally.losses.actor += l.actor / n as f64;
                        }
                        tally.s.updates += 1;
                    }
                }
            }
            tally.slot(&next, &rep, &rs, &self.lambda);
            sink.slot(&SlotRecord {
                episode,
                slot: t,
                commands: &commands,
                formation: &phi,
                cost: &cost,
                world: &next,
                report: &rep,
                rewards: &rs,
                choices: &choices,
            });
            (phi, cost) = formation_step(&self.params, &next, &rep.energy, &self.lambda, &self.policy);
            energy = rep.energy;
            w = next;
            if done {
                break;
            }
        }
        let summary = tally.finish(&w);
        sink.episode_end(&summary);
        Ok(summary)
    }

    /// Scripted pilot on the same scenario and episode starts.
    pub fn scripted_episode(&self, episode: u64, sink: &mut dyn MetricsSink) -> Result<EpisodeSummary> {
        let params = self.params.clone();
        rollout(
            &self.params,
            self.initial_world(episode),
            &self.policy,
            &self.lambda,
            self.cfg.training.horizon,
            episode,
            &self.cfg.training.rewards,
            &mut |w| scripted_commands(&params, w),
            sink,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formation::PolicyKind;

    fn small_cfg() -> SimConfig {
        let mut cfg = SimConfig::default();
        cfg.scenario.uavs = 2;
        cfg.scenario.gus = 3;
        cfg.training.horizon = 12;
        cfg.training.batch_size = 8;
        cfg.training.replay_capacity = 64;
        cfg.training.actor_hidden = vec![8];
        cfg.training.critic_hidden = vec![8];
        cfg
    }

    #[derive(Default)]
    struct Collect {
        rows: Vec<(u64, u64, Vec<FlyCommand>, f64)>,
        ends: Vec<EpisodeSummary>,
    }

    impl MetricsSink for Collect {
        fn slot(&mut self, r: &SlotRecord<'_>) {
            self.rows.push((r.episode, r.slot, r.commands.to_vec(), r.rewards.iter().map(|x| x.total).sum()));
        }
        fn episode_end(&mut self, s: &EpisodeSummary) {
            self.ends.push(s.clone());
        }
    }

    fn run(cfg: &SimConfig, seed: u64, episodes: u64) -> Collect {
        let mut tr = Trainer::new(cfg, seed).unwrap();
        let mut sink = Collect::default();
        for e in 0..episodes {
            tr.run_episode(e, EpisodeMode::Train, &mut sink).unwrap();
        }
        sink
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = small_cfg();
        let a = run(&cfg, 3, 3);
        let b = run(&cfg, 3, 3);
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.ends, b.ends);
        assert!(a.ends.iter().any(|s| s.updates > 0));
        assert_ne!(a.rows, run(&cfg, 4, 3).rows);
    }

    #[test]
    fn bo_flag_changes_only_arbitration() {
        let mut cfg = small_cfg();
        cfg.training.bo_enabled = false;
        let plain = run(&cfg, 5, 2);
        assert!(plain.ends.iter().all(|s| s.bo_chosen == 0));
        cfg.training.bo_enabled = true;
        let bo = run(&cfg, 5, 2);
        assert_eq!(plain.rows.len() > 0, bo.rows.len() > 0);
    }

    #[test]
    fn eval_leaves_trainer_untouched() {
        let cfg = small_cfg();
        let mut tr = Trainer::new(&cfg, 9).unwrap();
        tr.run_episode(0, EpisodeMode::Train, &mut NullSink).unwrap();
        let before: Vec<Vec<f64>> = tr.agents.iter().map(|a| a.actor.params().to_vec()).collect();
        let replay = tr.replay_len();
        let e1 = tr.run_episode(1, EpisodeMode::Eval, &mut NullSink).unwrap();
        let e2 = tr.run_episode(1, EpisodeMode::Eval, &mut NullSink).unwrap();
        assert_eq!(e1, e2);
        assert_eq!(tr.replay_len(), replay);
        let after: Vec<Vec<f64>> = tr.agents.iter().map(|a| a.actor.params().to_vec()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn scripted_single_uav_drains_before_horizon() {
        let mut cfg = SimConfig::default();
        cfg.scenario.uavs = 1;
        cfg.scenario.gus = 1;
        cfg.scenario.gu_positions = Some(vec![[0.1, 0.0]]);
        cfg.scenario.uav_starts = Some(vec![[0.0, 0.0]]);
        cfg.training.horizon = 60;
        let tr = Trainer::new(&cfg, 0).unwrap();
        let s = tr.scripted_episode(0, &mut NullSink).unwrap();
        assert!(s.completion_slots.unwrap() < 60);
        assert_eq!(s.remaining_bits, 0.0);
        assert!((s.sensed_bits - 10e6).abs() < 1e-6);
    }

    #[test]
    fn rollout_policies_share_the_scenario() {
        let mut cfg = small_cfg();
        cfg.training.horizon = 30;
        let tr = Trainer::new(&cfg, 2).unwrap();
        let w0 = tr.initial_world(0);
        let mut starts = Vec::new();
        for kind in PolicyKind::ALL {
            let mut c = cfg.clone();
            c.formation.policy = kind;
            let t = Trainer::new(&c, 2).unwrap();
            starts.push(t.initial_world(0));
            t.scripted_episode(0, &mut NullSink).unwrap();
        }
        assert!(starts.iter().all(|w| *w == w0));
    }

    #[test]
    fn scripted_pilot_heads_for_nearest_gu() {
        let cfg = small_cfg();
        let p = cfg.sim_params();
        let mut w = crate::world::tests_support::world(&[(0.0, 0.0, 0.0), (5.0, 0.0, 0.0)]);
        w.gus.push(GroundUser { id: 0, pos: Position::new(100.0, 0.0, 0.0), demand: 1.0, remaining: 1.0 });
        w.gus.push(GroundUser { id: 1, pos: Position::new(0.0, -300.0, 0.0), demand: 1.0, remaining: 1.0 });
        let c = scripted_commands(&p, &w);
        assert_eq!(c[0].dir, [1.0, 0.0]);
        assert_eq!(c[0].speed, 20.0);
        assert!(c[1].dir[1] < -0.99);
    }
}
