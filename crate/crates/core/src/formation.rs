//! Network formation: which UAV sends to whom on which sub-channel.
//!
//! [`eda_nf`] pairs heavily loaded UAVs with lightly loaded neighbours using a
//! load balance coefficient and a per-UAV cost. Three baselines share the same
//! channel assignment rules, and [`brute_force_formation`] enumerates every
//! feasible matrix of a tiny instance as a reference.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelParams, FormationMatrix, Link, Node, OffloadInput};
use crate::error::{Error, Result};
use crate::world::{distance, objective_slot, Position, SimParams, StepReport, WorldState, KJ, MBIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    EdaNf,
    NonCooperative,
    BufferThreshold,
    DynamicNf,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::EdaNf,
        PolicyKind::DynamicNf,
        PolicyKind::BufferThreshold,
        PolicyKind::NonCooperative,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::EdaNf => "eda_nf",
            PolicyKind::NonCooperative => "non_cooperative",
            PolicyKind::BufferThreshold => "buffer_threshold",
            PolicyKind::DynamicNf => "dynamic_nf",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Minimum U2U rate a new relay link must offer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinRate {
    /// The sender's own U2B rate, so switching never lowers its rate.
    U2b,
    /// A fixed floor in bit/s.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationPolicy {
    pub kind: PolicyKind,
    /// Balance threshold: UAVs with `b_i > b_o` seek a relay.
    pub b_o: f64,
    /// Buffer threshold in bits for the buffer-based baseline.
    pub buffer_threshold: f64,
    /// Maximum U2U pairing distance in metres.
    pub d_k: f64,
    pub min_rate: MinRate,
    /// Cost gap a dynamic-NF neighbour must undercut by.
    pub dynamic_margin: f64,
    /// Delay ratio (in slots) used when a UAV has data but no U2B capacity.
    pub ratio_cap: f64,
}

impl Default for FormationPolicy {
    fn default() -> Self {
        Self {
            kind: PolicyKind::EdaNf,
            b_o: 0.0,
            buffer_threshold: 10.0 * MBIT,
            d_k: 1000.0,
            min_rate: MinRate::U2b,
            dynamic_margin: 1.0,
            ratio_cap: 1e9,
        }
    }
}

impl FormationPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.buffer_threshold >= 0.0) || !(self.d_k >= 0.0) || !(self.dynamic_margin >= 0.0) {
            return Err(Error::Config("formation thresholds must be non-negative".into()));
        }
        if let MinRate::Fixed(r) = self.min_rate {
            if !(r >= 0.0) {
                return Err(Error::Config("min_rate must be non-negative".into()));
            }
        }
        if !(self.ratio_cap > 0.0) {
            return Err(Error::Config("ratio_cap must be positive".into()));
        }
        Ok(())
    }
}

/// Per-UAV balance coefficients and costs reported to the BS.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CostReport {
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// UAVs whose delay ratio hit `ratio_cap`.
    pub capped: Vec<bool>,
    /// Direct U2B capacity of each UAV in bits per slot.
    pub u2b_capacity: Vec<f64>,
}

/// What a formation decision may look at.
#[derive(Debug, Clone, Copy)]
pub struct FormationInput<'a> {
    pub channel: &'a ChannelParams,
    pub positions: &'a [Position],
    pub bs: Position,
    pub buffers: &'a [f64],
    pub t_o: f64,
}

impl FormationInput<'_> {
    fn n(&self) -> usize {
        self.positions.len()
    }
}

/// Load balance coefficients: each UAV's expected drain time over its direct
/// link minus the mean of everybody else's. Returns the coefficients and which
/// ratios were capped because the UAV holds data but has no U2B capacity.
pub fn load_balance(buffers: &[f64], capacities: &[f64], ratio_cap: f64) -> (Vec<f64>, Vec<bool>) {
    let n = buffers.len();
    let mut capped = vec![false; n];
    let ratios: Vec<f64> = buffers
        .iter()
        .zip(capacities)
        .enumerate()
        .map(|(i, (&d, &o))| {
            if d <= 0.0 {
                0.0
            } else if o > 0.0 {
                (d / o).min(ratio_cap)
            } else {
                capped[i] = true;
                ratio_cap
            }
        })
        .collect();
    if n < 2 {
        return (vec![0.0; n], capped);
    }
    let total: f64 = ratios.iter().sum();
    let b = ratios
        .iter()
        .map(|r| r - (total - r) / (n - 1) as f64)
        .collect();
    (b, capped)
}

/// Per-UAV cost in kJ and Mbit: energy plus weighted buffer plus the backlog of
/// GUs under the UAV's coverage.
pub fn cost(energy_kj: f64, buffer_mbit: f64, backlog_mbit: f64, lambda: f64) -> f64 {
    energy_kj + lambda * buffer_mbit + backlog_mbit
}

/// Every UAV sends straight to the BS, one sub-channel each in id order.
/// With more UAVs than sub-channels the surplus UAVs stay idle.
pub fn direct_formation(uavs: usize, channels: usize) -> FormationMatrix {
    let mut phi = FormationMatrix::empty(uavs, channels);
    for i in 0..uavs.min(channels) {
        phi.set(i, Node::Bs, i, true);
    }
    phi
}

/// Direct U2B capacity of every UAV, in bits per slot.
pub fn u2b_capacities(input: &FormationInput<'_>) -> Vec<f64> {
    let direct = direct_formation(input.n(), input.channel.sub_channels);
    (0..input.n())
        .map(|i| channel::u2u_rate(input.channel, &direct, input.positions, input.bs, i, Node::Bs) * input.t_o)
        .collect()
}

/// Builds the status report the formation policies act on.
///
/// `energy` is each UAV's propulsion energy of the last slot in J and
/// `lambda` the buffer weights.
pub fn cost_report(
    params: &SimParams,
    w: &WorldState,
    energy: &[f64],
    lambda: &[f64],
    ratio_cap: f64,
) -> CostReport {
    let positions = w.positions();
    let buffers = w.buffers();
    let input = FormationInput {
        channel: &params.channel,
        positions: &positions,
        bs: params.bs,
        buffers: &buffers,
        t_o: params.protocol.t_o,
    };
    let caps = u2b_capacities(&input);
    let (b, capped) = load_balance(&buffers, &caps, ratio_cap);
    let c = w
        .uavs
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let backlog: f64 = w
                .gus
                .iter()
                .filter(|g| distance(g.pos, u.pos) <= params.protocol.coverage_radius)
                .map(|g| g.remaining)
                .sum();
            cost(
                energy.get(i).copied().unwrap_or(0.0) / KJ,
                u.buffer / MBIT,
                backlog / MBIT,
                lambda[i],
            )
        })
        .collect();
    CostReport { b, c, capped, u2b_capacity: caps }
}

/// Round-robin sub-channel picker shared by every policy.
struct ChannelCursor {
    next: usize,
    channels: usize,
}

impl ChannelCursor {
    fn new(channels: usize) -> Self {
        Self { next: 0, channels }
    }

    /// First sub-channel from the cursor on which neither endpoint is busy.
    fn pick(&mut self, phi: &FormationMatrix, tx: usize, rx: usize) -> Option<usize> {
        let k = (0..self.channels)
            .map(|a| (self.next + a) % self.channels)
            .find(|&k| !phi.busy(Node::Uav(tx), k) && !phi.busy(Node::Uav(rx), k))?;
        self.next = (k + 1) % self.channels;
        Some(k)
    }
}

/// Tries to redirect `tx` from its U2B link(s) to relay `rx`. Leaves `phi`
/// unchanged and returns false when no sub-channel fits or the new link is
/// slower than `min_rate`.
fn try_relay(
    phi: &mut FormationMatrix,
    cursor: &mut ChannelCursor,
    input: &FormationInput<'_>,
    tx: usize,
    rx: usize,
    min_rate: Option<f64>,
) -> bool {
    let saved = phi.clone();
    let saved_next = cursor.next;
    phi.clear_outgoing(tx);
    let Some(k) = cursor.pick(phi, tx, rx) else {
        *phi = saved;
        cursor.next = saved_next;
        return false;
    };
    phi.set(tx, Node::Uav(rx), k, true);
    if let Some(floor) = min_rate {
        let rate = channel::u2u_rate(input.channel, phi, input.positions, input.bs, tx, Node::Uav(rx));
        if rate < floor {
            *phi = saved;
            cursor.next = saved_next;
            return false;
        }
    }
    true
}

fn min_rate_for(policy: &FormationPolicy, report: &CostReport, t_o: f64, i: usize) -> f64 {
    match policy.min_rate {
        MinRate::U2b => report.u2b_capacity.get(i).copied().unwrap_or(0.0) / t_o,
        MinRate::Fixed(r) => r,
    }
}

/// Energy- and delay-aware network formation.
///
/// Starts from all-direct links, splits UAVs into relay seekers (`b_i > b_o`,
/// highest cost first) and candidate relays (lowest cost first), then walks
/// the seekers and links each to the first candidate closer than `d_k` whose
/// link meets the minimum rate. Both leave their groups once paired; the relay
/// keeps its U2B link.
pub fn eda_nf(report: &CostReport, input: &FormationInput<'_>, policy: &FormationPolicy) -> FormationMatrix {
    let n = input.n();
    let mut phi = direct_formation(n, input.channel.sub_channels);
    let mut seekers: Vec<usize> = (0..n).filter(|&i| report.b[i] > policy.b_o).collect();
    let mut relays: Vec<usize> = (0..n).filter(|&i| report.b[i] <= policy.b_o).collect();
    seekers.sort_by(|&a, &b| report.c[b].total_cmp(&report.c[a]).then(a.cmp(&b)));
    relays.sort_by(|&a, &b| report.c[a].total_cmp(&report.c[b]).then(a.cmp(&b)));

    let mut cursor = ChannelCursor::new(input.channel.sub_channels);
    for &i in &seekers {
        let floor = min_rate_for(policy, report, input.t_o, i);
        let pick = relays.iter().position(|&j| {
            distance(input.positions[i], input.positions[j]) < policy.d_k
                && phi.connected(j, Node::Bs)
                && try_relay(&mut phi, &mut cursor, input, i, j, Some(floor))
        });
        if let Some(p) = pick {
            relays.remove(p);
        }
    }
    phi
}

/// Every UAV keeps its direct U2B link.
pub fn baseline_noncoop(uavs: usize, channels: usize) -> FormationMatrix {
    direct_formation(uavs, channels)
}

/// UAVs whose buffer exceeds `threshold` relay through the nearest UAV at or
/// below it within `d_k`. Fullest buffers choose first.
pub fn baseline_buffer(input: &FormationInput<'_>, threshold: f64, d_k: f64) -> FormationMatrix {
    let n = input.n();
    let mut phi = direct_formation(n, input.channel.sub_channels);
    let mut senders: Vec<usize> = (0..n).filter(|&i| input.buffers[i] > threshold).collect();
    senders.sort_by(|&a, &b| input.buffers[b].total_cmp(&input.buffers[a]).then(a.cmp(&b)));
    let mut relays: Vec<usize> = (0..n).filter(|&i| input.buffers[i] <= threshold).collect();
    let mut cursor = ChannelCursor::new(input.channel.sub_channels);
    for &i in &senders {
        let mut near: Vec<(f64, usize)> = relays
            .iter()
            .map(|&j| (distance(input.positions[i], input.positions[j]), j))
            .filter(|&(d, j)| d < d_k && phi.connected(j, Node::Bs))
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if let Some(&(_, j)) = near.iter().find(|&&(_, j)| try_relay(&mut phi, &mut cursor, input, i, j, None)) {
            relays.retain(|&r| r != j);
        }
    }
    phi
}

/// Cost-only formation: each UAV, highest cost first, links to the in-range
/// neighbour with the lowest cost, provided that cost undercuts its own by
/// more than the margin.
pub fn baseline_dynamic_nf(report: &CostReport, input: &FormationInput<'_>, policy: &FormationPolicy) -> FormationMatrix {
    let n = input.n();
    let mut phi = direct_formation(n, input.channel.sub_channels);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| report.c[b].total_cmp(&report.c[a]).then(a.cmp(&b)));
    let mut paired = vec![false; n];
    let mut cursor = ChannelCursor::new(input.channel.sub_channels);
    for &i in &order {
        if paired[i] {
            continue;
        }
        let mut cands: Vec<usize> = (0..n)
            .filter(|&j| {
                j != i
                    && !paired[j]
                    && report.c[j] < report.c[i] - policy.dynamic_margin
                    && distance(input.positions[i], input.positions[j]) < policy.d_k
                    && phi.connected(j, Node::Bs)
            })
            .collect();
        cands.sort_by(|&a, &b| report.c[a].total_cmp(&report.c[b]).then(a.cmp(&b)));
        if let Some(&j) = cands.iter().find(|&&j| try_relay(&mut phi, &mut cursor, input, i, j, None)) {
            paired[i] = true;
            paired[j] = true;
        }
    }
    phi
}

/// Dispatches on the policy kind.
pub fn decide(policy: &FormationPolicy, report: &CostReport, input: &FormationInput<'_>) -> FormationMatrix {
    match policy.kind {
        PolicyKind::EdaNf => eda_nf(report, input, policy),
        PolicyKind::NonCooperative => baseline_noncoop(input.n(), input.channel.sub_channels),
        PolicyKind::BufferThreshold => baseline_buffer(input, policy.buffer_threshold, policy.d_k),
        PolicyKind::DynamicNf => baseline_dynamic_nf(report, input, policy),
    }
}

/// Applies only an offloading sub-slot to `w` under `phi`: no flight, no
/// sensing, no propulsion energy.
pub fn offload_only(params: &SimParams, w: &WorldState, phi: &FormationMatrix) -> Result<(WorldState, StepReport)> {
    let n = w.uavs.len();
    let positions = w.positions();
    let buffers = w.buffers();
    let zeros = vec![0.0; n];
    let off = channel::offload(
        &params.channel,
        &OffloadInput {
            positions: &positions,
            bs: params.bs,
            buffers: &buffers,
            sensed: &zeros,
            d_max: params.protocol.d_max,
            t_o: params.protocol.t_o,
        },
        phi,
    )?;
    let mut next = w.clone();
    for (i, u) in next.uavs.iter_mut().enumerate() {
        u.buffer = crate::world::uav_buffer_step(u.buffer, off.outgoing[i], off.incoming[i], params.protocol.d_max);
    }
    next.formation = phi.clone();
    let report = StepReport {
        sensed: zeros.clone(),
        served: vec![None; n],
        relayed_out: off.outgoing.iter().zip(&off.to_bs).map(|(o, b)| o - b).collect(),
        delivered_to_bs: off.to_bs,
        relayed_in: off.incoming,
        energy: zeros.clone(),
        tx_energy: zeros,
        safety_violations: 0,
        close_neighbors: vec![0; n],
        drained: vec![0.0; w.gus.len()],
    };
    Ok((next, report))
}

/// Largest instance [`brute_force_formation`] accepts.
pub const BRUTE_FORCE_MAX_UAVS: usize = 3;
pub const BRUTE_FORCE_MAX_CHANNELS: usize = 2;

/// Exhaustive search over every feasible formation of a tiny instance for the
/// one minimizing the slot objective after one offloading sub-slot. Ties keep
/// the first matrix in enumeration order, which starts at the empty matrix.
pub fn brute_force_formation(params: &SimParams, w: &WorldState, lambda: &[f64]) -> Result<(FormationMatrix, f64)> {
    let n = w.uavs.len();
    let k = params.channel.sub_channels;
    if n > BRUTE_FORCE_MAX_UAVS || k > BRUTE_FORCE_MAX_CHANNELS {
        return Err(Error::TooLarge { uavs: n, channels: k });
    }
    // every (tx, rx != tx, k) slot, in (tx, rx, k) order
    let slots: Vec<Link> = (0..n)
        .flat_map(|tx| {
            core::iter::once(Node::Bs)
                .chain((0..n).filter(move |&j| j != tx).map(Node::Uav))
                .flat_map(move |rx| (0..k).map(move |kk| Link { tx, rx, k: kk }))
        })
        .collect();
    let mut best: Option<(FormationMatrix, f64)> = None;
    for mask in 0u64..(1u64 << slots.len()) {
        let links: Vec<Link> = slots
            .iter()
            .enumerate()
            .filter(|(b, _)| mask >> b & 1 == 1)
            .map(|(_, l)| *l)
            .collect();
        let phi = FormationMatrix::from_links(n, k, &links);
        if channel::validate_alloc(&phi).is_err() {
            continue;
        }
        let (next, report) = offload_only(params, w, &phi)?;
        let value = objective_slot(&next, &report, lambda);
        if best.as_ref().map_or(true, |(_, v)| value < *v) {
            best = Some((phi, value));
        }
    }
    Ok(best.expect("the empty matrix is always feasible"))
}
