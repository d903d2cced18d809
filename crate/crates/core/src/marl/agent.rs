use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::action::ACTION_DIM;
use super::replay::Transition;
use crate::error::{Error, Result};
use crate::nn::{opt_step, soft_update, Activation, AdamConfig, Mlp, OptState};

/// A decentralized actor with its centralized critic and target copies.
#[derive(Debug, Clone)]
pub struct Agent {
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    pub actor_opt: OptState,
    pub critic_opt: OptState,
}

fn layer_dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut d = Vec::with_capacity(hidden.len() + 2);
    d.push(input);
    d.extend_from_slice(hidden);
    d.push(output);
    d
}

impl Agent {
    /// Actor maps `obs_dim` to a tanh action; the critic sees every agent's
    /// observation and action, `n (obs_dim + 2)` inputs in all.
    pub fn new<R: Rng + ?Sized>(
        n: usize,
        obs_dim: usize,
        actor_hidden: &[usize],
        critic_hidden: &[usize],
        actor_adam: AdamConfig,
        critic_adam: AdamConfig,
        rng: &mut R,
    ) -> Self {
        let actor = Mlp::new(&layer_dims(obs_dim, actor_hidden, ACTION_DIM), Activation::Tanh, rng);
        let critic = Mlp::new(&layer_dims(n * (obs_dim + ACTION_DIM), critic_hidden, 1), Activation::Identity, rng);
        Self::from_nets(actor, critic, actor_adam, critic_adam)
    }

    pub fn from_nets(actor: Mlp, critic: Mlp, actor_adam: AdamConfig, critic_adam: AdamConfig) -> Self {
        Self {
            actor_opt: OptState::new(&actor, actor_adam),
            critic_opt: OptState::new(&critic, critic_adam),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
        }
    }

    /// Checks the critic width against `n` agents with `obs_dim` observations.
    pub fn check_dims(&self, n: usize, obs_dim: usize) -> Result<()> {
        let expected = n * (obs_dim + ACTION_DIM);
        if self.critic.input_dim() != expected || self.target_critic.input_dim() != expected {
            return Err(Error::Dimension { expected, got: self.critic.input_dim() });
        }
        if self.actor.input_dim() != obs_dim || self.actor.output_dim() != ACTION_DIM {
            return Err(Error::Dimension { expected: obs_dim, got: self.actor.input_dim() });
        }
        Ok(())
    }
}

/// `[o_1 .. o_n, a_1 .. a_n]`.
pub fn critic_input(obs: &[f64], actions: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(obs.len() + actions.len());
    x.extend_from_slice(obs);
    x.extend_from_slice(actions);
    x
}

pub fn critic_q(critic: &Mlp, obs: &[f64], actions: &[f64]) -> Result<f64> {
    Ok(critic.forward(&critic_input(obs, actions))?.0[0])
}

/// Critic values of `batch` rows of joint observations and actions.
pub fn critic_q_batch(critic: &Mlp, obs: &[f64], actions: &[f64], batch: usize) -> Result<Vec<f64>> {
    let x = joint_rows(obs, actions, batch)?;
    Ok(critic.forward_batch(&x, batch)?.output().to_vec())
}

fn joint_rows(obs: &[f64], actions: &[f64], batch: usize) -> Result<Vec<f64>> {
    if batch == 0 || obs.len() % batch != 0 || actions.len() % batch != 0 {
        return Err(Error::Dimension { expected: batch, got: obs.len() });
    }
    let (ow, aw) = (obs.len() / batch, actions.len() / batch);
    let mut x = Vec::with_capacity(obs.len() + actions.len());
    for s in 0..batch {
        x.extend_from_slice(&obs[s * ow..(s + 1) * ow]);
        x.extend_from_slice(&actions[s * aw..(s + 1) * aw]);
    }
    Ok(x)
}

/// Transitions laid out as row-major matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub agents: usize,
    pub obs_dim: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub done: Vec<bool>,
}

impl Batch {
    pub fn from_transitions(items: &[&Transition], agents: usize) -> Result<Self> {
        let first = items.first().ok_or(Error::Dimension { expected: 1, got: 0 })?;
        let obs_dim = first.obs.len() / agents;
        let mut b = Batch {
            size: items.len(),
            agents,
            obs_dim,
            obs: Vec::with_capacity(items.len() * first.obs.len()),
            actions: Vec::with_capacity(items.len() * agents * ACTION_DIM),
            rewards: Vec::with_capacity(items.len() * agents),
            next_obs: Vec::with_capacity(items.len() * first.obs.len()),
            done: Vec::with_capacity(items.len()),
        };
        for t in items {
            if t.obs.len() != agents * obs_dim
                || t.next_obs.len() != agents * obs_dim
                || t.actions.len() != agents * ACTION_DIM
                || t.rewards.len() != agents
            {
                return Err(Error::Dimension { expected: agents * obs_dim, got: t.obs.len() });
            }
            b.obs.extend_from_slice(&t.obs);
            b.actions.extend_from_slice(&t.actions);
            b.rewards.extend_from_slice(&t.rewards);
            b.next_obs.extend_from_slice(&t.next_obs);
            b.done.push(t.done);
        }
        Ok(b)
    }

    /// Agent `i`'s columns of a joint observation matrix.
    fn agent_obs(&self, joint: &[f64], i: usize) -> Vec<f64> {
        let w = self.agents * self.obs_dim;
        let mut out = Vec::with_capacity(self.size * self.obs_dim);
        for s in 0..self.size {
            out.extend_from_slice(&joint[s * w + i * self.obs_dim..s * w + (i + 1) * self.obs_dim]);
        }
        out
    }
}

/// Next joint actions chosen by every target actor, without noise.
pub fn target_actions(agents: &[Agent], batch: &Batch) -> Result<Vec<f64>> {
    let n = agents.len();
    let mut out = vec![0.0; batch.size * n * ACTION_DIM];
    for (j, a) in agents.iter().enumerate() {
        let cache = a.target_actor.forward_batch(&batch.agent_obs(&batch.next_obs, j), batch.size)?;
        for (s, y) in cache.output().chunks(ACTION_DIM).enumerate() {
            out[s * n * ACTION_DIM + j * ACTION_DIM..][..ACTION_DIM].copy_from_slice(y);
        }
    }
    Ok(out)
}

/// `r + gamma Q'(o', mu'(o'))`, or `r` alone on the final slot.
pub fn td_target(
    r: f64,
    next_obs: &[f64],
    target_actors: &[&Mlp],
    target_critic: &Mlp,
    gamma: f64,
    done: bool,
) -> Result<f64> {
    if done {
        return Ok(r);
    }
    let n = target_actors.len();
    let od = next_obs.len() / n.max(1);
    let mut next_a = Vec::with_capacity(n * ACTION_DIM);
    for (j, actor) in target_actors.iter().enumerate() {
        next_a.extend(actor.forward(&next_obs[j * od..(j + 1) * od])?.0);
    }
    Ok(r + gamma * critic_q(target_critic, next_obs, &next_a)?)
}

/// Batched TD targets for agent `i`.
pub fn td_targets(i: usize, batch: &Batch, next_actions: &[f64], target_critic: &Mlp, gamma: f64) -> Result<Vec<f64>> {
    let q = critic_q_batch(target_critic, &batch.next_obs, next_actions, batch.size)?;
    Ok((0..batch.size)
        .map(|s| {
            let r = batch.rewards[s * batch.agents + i];
            if batch.done[s] {
                r
            } else {
                r + gamma * q[s]
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Losses {
    /// Mean squared TD error before the critic step.
    pub critic: f64,
    /// Mean of `-Q` under the actor's own action before the actor step.
    pub actor: f64,
}

/// Gradient of `-mean Q(o, a)` with respect to agent `i`'s actor parameters,
/// agent `i`'s action replaced by its actor output and the rest held fixed.
pub fn actor_gradient(i: usize, batch: &Batch, agents: &[Agent]) -> Result<(Vec<f64>, f64)> {
    let agent = &agents[i];
    let n = batch.agents;
    let own_obs = batch.agent_obs(&batch.obs, i);
    let actor_cache = agent.actor.forward_batch(&own_obs, batch.size)?;
    let mut actions = batch.actions.clone();
    for (s, y) in actor_cache.output().chunks(ACTION_DIM).enumerate() {
        actions[s * n * ACTION_DIM + i * ACTION_DIM..][..ACTION_DIM].copy_from_slice(y);
    }
    let x = joint_rows(&batch.obs, &actions, batch.size)?;
    let critic_cache = agent.critic.forward_batch(&x, batch.size)?;
    let mean_q = critic_cache.output().iter().sum::<f64>() / batch.size as f64;
    let dq = vec![-1.0 / batch.size as f64; batch.size];
    let dx = agent.critic.backward_input(&critic_cache, &dq)?;
    let width = agent.critic.input_dim();
    let a_off = n * batch.obs_dim + i * ACTION_DIM;
    let mut da = Vec::with_capacity(batch.size * ACTION_DIM);
    for s in 0..batch.size {
        da.extend_from_slice(&dx[s * width + a_off..s * width + a_off + ACTION_DIM]);
    }
    let (grads, _) = agent.actor.backward(&actor_cache, &da)?;
    Ok((grads, -mean_q))
}

/// Critic gradient of the mean squared TD error and the loss itself.
pub fn critic_gradient(batch: &Batch, critic: &Mlp, targets: &[f64]) -> Result<(Vec<f64>, f64)> {
    let x = joint_rows(&batch.obs, &batch.actions, batch.size)?;
    let cache = critic.forward_batch(&x, batch.size)?;
    let b = batch.size as f64;
    let mut loss = 0.0;
    let dq: Vec<f64> = cache
        .output()
        .iter()
        .zip(targets)
        .map(|(q, y)| {
            let e = q - y;
            loss += e * e;
            2.0 * e / b
        })
        .collect();
    let (grads, _) = critic.backward(&cache, &dq)?;
    Ok((grads, loss / b))
}

/// One critic step, one actor step and soft target updates for agent `i`,
/// with the next joint actions already computed by [`target_actions`].
pub fn update_agent_with(
    i: usize,
    batch: &Batch,
    next_actions: &[f64],
    agents: &mut [Agent],
    gamma: f64,
    tau: f64,
) -> Result<Losses> {
    let targets = td_targets(i, batch, next_actions, &agents[i].target_critic, gamma)?;
    let (cg, critic_loss) = critic_gradient(batch, &agents[i].critic, &targets)?;
    {
        let a = &mut agents[i];
        opt_step(&mut a.critic, &cg, &mut a.critic_opt)?;
    }
    let (ag, actor_loss) = actor_gradient(i, batch, agents)?;
    let a = &mut agents[i];
    opt_step(&mut a.actor, &ag, &mut a.actor_opt)?;
    soft_update(&mut a.target_critic, &a.critic, tau)?;
    soft_update(&mut a.target_actor, &a.actor, tau)?;
    Ok(Losses { critic: critic_loss, actor: actor_loss })
}

pub fn update_agent(i: usize, batch: &Batch, agents: &mut [Agent], gamma: f64, tau: f64) -> Result<Losses> {
    let next = target_actions(agents, batch)?;
    update_agent_with(i, batch, &next, agents, gamma, tau)
}
