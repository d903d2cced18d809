use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::math;
use crate::nn::Mlp;
use crate::world::{FlyCommand, Position};

pub const ACTION_DIM: usize = 2;
/// Raw actions are clamped to `[-ACTION_BOUND, ACTION_BOUND]`, inside `(-1, 1)`.
pub const ACTION_BOUND: f64 = 1.0 - 1e-12;

/// Raw actor output: `raw[0]` scales the heading, `raw[1]` the speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub raw: [f64; 2],
}

impl Action {
    pub fn new(a1: f64, a2: f64) -> Self {
        Self { raw: [a1, a2] }
    }

    /// Heading in radians, `pi * a1`.
    pub fn angle(&self) -> f64 {
        PI * self.raw[0]
    }

    /// Speed in m/s, `v_max (a2 + 1) / 2`, within `[0, v_max]`.
    pub fn speed(&self, v_max: f64) -> f64 {
        (v_max * (self.raw[1] + 1.0) / 2.0).clamp(0.0, v_max)
    }

    pub fn decode(&self, v_max: f64) -> FlyCommand {
        let a = self.angle();
        FlyCommand { dir: [math::cos(a), math::sin(a)], speed: self.speed(v_max) }
    }

    fn clamped(raw: [f64; 2]) -> Self {
        Self { raw: raw.map(|v| v.clamp(-ACTION_BOUND, ACTION_BOUND)) }
    }
}

/// Actor output plus Gaussian exploration noise, clamped into range.
pub fn act<R: Rng + ?Sized>(actor: &Mlp, obs: &[f64], noise_scale: f64, rng: &mut R) -> Result<Action> {
    let (y, _) = actor.forward(obs)?;
    let mut raw = [y[0], y[1]];
    if noise_scale > 0.0 {
        for v in &mut raw {
            let z: f64 = StandardNormal.sample(rng);
            *v += noise_scale * z;
        }
    }
    Ok(Action::clamped(raw))
}

/// Action that flies from `current` towards `proposed` within one flying
/// sub-slot of length `t_f`; out-of-reach targets keep the bearing at `v_max`.
pub fn bo_to_action(current: Position, proposed: Position, v_max: f64, t_f: f64) -> Action {
    let (dx, dy) = (proposed.x - current.x, proposed.y - current.y);
    let d = math::sqrt(dx * dx + dy * dy);
    if d == 0.0 {
        return Action::new(0.0, -1.0);
    }
    let speed = (d / t_f).min(v_max);
    Action::new(math::atan2(dy, dx) / PI, 2.0 * speed / v_max - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    Actor,
    Bo,
    Random,
}

/// Higher critic value wins, ties go to the actor; with probability
/// `epsilon` a uniform random action replaces both.
pub fn arbitrate<R: Rng + ?Sized>(
    a_actor: Action,
    a_bo: Action,
    q_actor: f64,
    q_bo: f64,
    epsilon: f64,
    rng: &mut R,
) -> (Action, Choice) {
    let u: f64 = rng.random();
    if u < epsilon {
        let raw = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        return (Action::clamped(raw), Choice::Random);
    }
    if q_bo > q_actor {
        (a_bo, Choice::Bo)
    } else {
        (a_actor, Choice::Actor)
    }
}
