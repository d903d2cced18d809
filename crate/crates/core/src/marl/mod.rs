//! Per-UAV actor-critic agents with centralized critics, trained on the
//! simulator with optional GP waypoint proposals arbitrated by the critic.

mod action;
mod agent;
mod obs;
mod replay;
mod reward;
mod train;

pub use action::{act, arbitrate, bo_to_action, Action, Choice, ACTION_BOUND, ACTION_DIM};
pub use agent::{
    actor_gradient, critic_gradient, critic_input, critic_q, critic_q_batch, target_actions, td_target, td_targets, update_agent, update_agent_with,
    Agent, Batch, Losses,
};
pub use obs::{obs_dim, observe, observe_all, ObsScale};
pub use replay::{ReplayBuffer, Transition};
pub use reward::{reward, RewardComponents};
pub use train::{
    formation_step, rollout, scripted_commands, EpisodeMode, EpisodeSummary, MetricsSink, NullSink, SlotRecord, Trainer,
};
