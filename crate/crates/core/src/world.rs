//! Scenario state and the time-slotted fly / sense / offload protocol.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelParams, FormationMatrix, OffloadInput};
use crate::error::{Error, Result};
use crate::math;

/// Bits per megabit, the data unit used by rewards and costs.
pub const MBIT: f64 = 1e6;
/// Joules per kilojoule, the energy unit used by rewards and costs.
pub const KJ: f64 = 1e3;

/// A point in metres. The BS may be placed anywhere in the frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }
}

/// Euclidean distance in metres.
pub fn distance(a: Position, b: Position) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    math::sqrt(dx * dx + dy * dy + dz * dz)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyModel {
    /// Blade-profile coefficient of the cubic term, W s^3/m^3.
    pub c1: f64,
    /// Induced-power coefficient, W m/s.
    pub c2: f64,
    /// Hover power in W.
    pub hover_power: f64,
    /// Speeds below this use it in the induced term.
    pub v_floor: f64,
}

impl EnergyModel {
    /// Flying power at speed `v`.
    pub fn flying_power(&self, v: f64) -> f64 {
        self.c1 * v * v * v + self.c2 / v.max(self.v_floor)
    }
}

/// Timing, safety and buffer constants of the protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub slot_len: f64,
    pub t_f: f64,
    pub t_s: f64,
    pub t_o: f64,
    /// Minimum safe UAV separation in metres.
    pub d_min: f64,
    /// Sensing range in metres (3-D distance).
    pub coverage_radius: f64,
    /// UAV buffer capacity in bits.
    pub d_max: f64,
    pub energy: EnergyModel,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("t_f", self.t_f), ("t_s", self.t_s), ("t_o", self.t_o)] {
            if !(v > 0.0) {
                return Err(Error::Config(alloc::format!("sub-slot {name} must be positive")));
            }
        }
        let sum = self.t_f + self.t_s + self.t_o;
        if (sum - self.slot_len).abs() > 1e-9 {
            return Err(Error::Config(alloc::format!(
                "sub-slots sum to {sum}, slot length is {}",
                self.slot_len
            )));
        }
        if !(self.d_max > 0.0) || !(self.coverage_radius >= 0.0) || !(self.d_min >= 0.0) {
            return Err(Error::Config("d_max must be positive, d_min and coverage non-negative".into()));
        }
        if !(self.energy.hover_power > 0.0) || !(self.energy.v_floor > 0.0) {
            return Err(Error::Config("hover power and v_floor must be positive".into()));
        }
        Ok(())
    }
}

/// Everything about a scenario that does not change while it runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub protocol: ProtocolConfig,
    pub channel: ChannelParams,
    pub bs: Position,
    /// Positions are clamped to `[-half_width, half_width]` on both axes.
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundUser {
    pub id: usize,
    pub pos: Position,
    /// Initial demand D_m in bits.
    pub demand: f64,
    /// Remaining bits W_m.
    pub remaining: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub id: usize,
    pub pos: Position,
    /// Buffered bits D_i.
    pub buffer: f64,
    /// Cumulative propulsion energy in J.
    pub energy_used: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub t: u64,
    pub uavs: Vec<UavState>,
    pub gus: Vec<GroundUser>,
    /// Formation used in the last completed slot.
    pub formation: FormationMatrix,
}

impl WorldState {
    pub fn new(uavs: Vec<UavState>, gus: Vec<GroundUser>, sub_channels: usize) -> Self {
        let formation = FormationMatrix::empty(uavs.len(), sub_channels);
        Self { t: 0, uavs, gus, formation }
    }

    pub fn positions(&self) -> Vec<Position> {
        self.uavs.iter().map(|u| u.pos).collect()
    }

    pub fn buffers(&self) -> Vec<f64> {
        self.uavs.iter().map(|u| u.buffer).collect()
    }

    pub fn gu_backlog(&self) -> f64 {
        self.gus.iter().map(|g| g.remaining).sum()
    }

    /// No data left anywhere in the system.
    pub fn drained(&self) -> bool {
        self.gus.iter().all(|g| g.remaining <= 0.0) && self.uavs.iter().all(|u| u.buffer <= 0.0)
    }
}

/// A flying command: unit heading in the x-y plane and a speed in m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlyCommand {
    pub dir: [f64; 2],
    pub speed: f64,
}

impl FlyCommand {
    pub const HOLD: FlyCommand = FlyCommand { dir: [1.0, 0.0], speed: 0.0 };
}

/// What happened in one slot.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepReport {
    pub sensed: Vec<f64>,
    /// GU served by each UAV in the sensing sub-slot.
    pub served: Vec<Option<usize>>,
    pub delivered_to_bs: Vec<f64>,
    pub relayed_out: Vec<f64>,
    pub relayed_in: Vec<f64>,
    /// Propulsion energy of the slot in J.
    pub energy: Vec<f64>,
    /// Transmit energy of the slot in J; reported only, never optimized.
    pub tx_energy: Vec<f64>,
    /// Unordered UAV pairs closer than `d_min`.
    pub safety_violations: usize,
    /// For each UAV, how many others are closer than `d_min`.
    pub close_neighbors: Vec<usize>,
    /// Per-GU bits drained.
    pub drained: Vec<f64>,
}

/// Moves a UAV for one flying sub-slot. The speed is capped at `v_max` and the
/// result is clamped to the scenario square.
pub fn move_uav(u: &UavState, cmd: FlyCommand, params: &SimParams) -> Result<Position> {
    let norm = math::sqrt(cmd.dir[0] * cmd.dir[0] + cmd.dir[1] * cmd.dir[1]);
    if !((norm - 1.0).abs() <= 1e-9) {
        return Err(Error::NonUnitDirection(norm));
    }
    if !(cmd.speed >= 0.0 && cmd.speed.is_finite()) {
        return Err(Error::InvalidSpeed(cmd.speed));
    }
    let step = cmd.speed.min(u.v_max) * params.protocol.t_f;
    let hw = params.half_width;
    Ok(Position {
        x: (u.pos.x + step * cmd.dir[0]).clamp(-hw, hw),
        y: (u.pos.y + step * cmd.dir[1]).clamp(-hw, hw),
        z: u.pos.z,
    })
}

/// Picks the eligible GU with the strongest signal: nonzero remaining demand,
/// within `coverage_radius`, not in `taken`. Equal transmit powers make this
/// the nearest one; ties go to the lowest id.
pub fn select_gu_excluding(u: &UavState, gus: &[GroundUser], coverage_radius: f64, taken: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (m, g) in gus.iter().enumerate() {
        if g.remaining <= 0.0 || taken.get(m).copied().unwrap_or(false) {
            continue;
        }
        let d = distance(u.pos, g.pos);
        if d > coverage_radius {
            continue;
        }
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((m, d));
        }
    }
    best.map(|(m, _)| m)
}

pub fn select_gu(u: &UavState, gus: &[GroundUser], coverage_radius: f64) -> Option<usize> {
    select_gu_excluding(u, gus, coverage_radius, &[])
}

/// Bits collected from `g` in one sensing sub-slot.
pub fn sense(u: &UavState, g: &GroundUser, params: &SimParams) -> f64 {
    let raw = params.protocol.t_s * channel::g2u_rate(&params.channel, g.pos, u.pos);
    raw.min(g.remaining.max(0.0)).min((params.protocol.d_max - u.buffer).max(0.0))
}

pub fn gu_queue_step(g: &GroundUser, drained: f64) -> GroundUser {
    GroundUser {
        remaining: (g.remaining - drained).max(0.0),
        ..g.clone()
    }
}

/// `min([d - outgoing]^+ + incoming, d_max)`.
pub fn uav_buffer_step(d: f64, outgoing: f64, incoming: f64, d_max: f64) -> f64 {
    ((d - outgoing).max(0.0) + incoming).min(d_max)
}

/// Propulsion energy of one slot: flying power over `t_f` plus hover power
/// over the sensing and offloading sub-slots.
pub fn propulsion_energy(speed: f64, cfg: &ProtocolConfig) -> f64 {
    cfg.energy.flying_power(speed) * cfg.t_f + cfg.energy.hover_power * (cfg.t_s + cfg.t_o)
}

/// Advances the world by one slot: fly, sense, offload, then update queues and
/// energy. Nothing is mutated when the inputs are rejected.
pub fn step(
    params: &SimParams,
    w: &WorldState,
    actions: &[FlyCommand],
    phi: &FormationMatrix,
) -> Result<(WorldState, StepReport)> {
    let n = w.uavs.len();
    if actions.len() != n {
        return Err(Error::ActionCount { expected: n, got: actions.len() });
    }
    if phi.uavs() != n || phi.channels() != params.channel.sub_channels {
        return Err(Error::FormationShape {
            uavs: n,
            channels: params.channel.sub_channels,
            got_uavs: phi.uavs(),
            got_channels: phi.channels(),
        });
    }
    channel::validate_alloc(phi).map_err(Error::InvalidFormation)?;

    let mut next = w.clone();
    let mut report = StepReport {
        sensed: vec![0.0; n],
        served: vec![None; n],
        energy: vec![0.0; n],
        tx_energy: vec![0.0; n],
        close_neighbors: vec![0; n],
        drained: vec![0.0; w.gus.len()],
        ..Default::default()
    };

    // flying sub-slot
    for (i, (u, cmd)) in next.uavs.iter_mut().zip(actions).enumerate() {
        u.pos = move_uav(u, *cmd, params)?;
        report.energy[i] = propulsion_energy(cmd.speed.min(u.v_max), &params.protocol);
    }

    // sensing sub-slot; a GU uploads to at most one UAV per slot
    let mut taken = vec![false; w.gus.len()];
    for (i, u) in next.uavs.iter().enumerate() {
        if let Some(m) = select_gu_excluding(u, &next.gus, params.protocol.coverage_radius, &taken) {
            taken[m] = true;
            let bits = sense(u, &next.gus[m], params);
            report.sensed[i] = bits;
            report.served[i] = Some(m);
            report.drained[m] += bits;
        }
    }

    // offloading sub-slot
    let positions = next.positions();
    let buffers = w.buffers();
    let off = channel::offload(
        &params.channel,
        &OffloadInput {
            positions: &positions,
            bs: params.bs,
            buffers: &buffers,
            sensed: &report.sensed,
            d_max: params.protocol.d_max,
            t_o: params.protocol.t_o,
        },
        phi,
    )?;
    for l in phi.links() {
        report.tx_energy[l.tx] += params.channel.p_uav * params.protocol.t_o;
    }

    for (g, drained) in next.gus.iter_mut().zip(&report.drained) {
        *g = gu_queue_step(g, *drained);
    }
    for (i, u) in next.uavs.iter_mut().enumerate() {
        u.buffer = uav_buffer_step(
            u.buffer,
            off.outgoing[i],
            report.sensed[i] + off.incoming[i],
            params.protocol.d_max,
        );
        u.energy_used += report.energy[i];
    }

    for i in 0..n {
        for j in i + 1..n {
            if distance(next.uavs[i].pos, next.uavs[j].pos) < params.protocol.d_min {
                report.safety_violations += 1;
                report.close_neighbors[i] += 1;
                report.close_neighbors[j] += 1;
            }
        }
    }

    report.delivered_to_bs = off.to_bs;
    report.relayed_in = off.incoming;
    report.relayed_out = off
        .outgoing
        .iter()
        .zip(&report.delivered_to_bs)
        .map(|(o, b)| o - b)
        .collect();
    next.formation = phi.clone();
    next.t += 1;
    Ok((next, report))
}

/// One slot's term of the penalized objective, in kJ and Mbit:
/// `sum_i (e_i + lambda_i D_i) + sum_m W_m`, evaluated on the post-slot state.
pub fn objective_slot(w: &WorldState, report: &StepReport, lambda: &[f64]) -> f64 {
    let uav_terms: f64 = w
        .uavs
        .iter()
        .enumerate()
        .map(|(i, u)| report.energy.get(i).copied().unwrap_or(0.0) / KJ + lambda[i] * u.buffer / MBIT)
        .sum();
    uav_terms + w.gu_backlog() / MBIT
}
