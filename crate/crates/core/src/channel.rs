//! Link-level physics: G2U, U2U and U2B rates over shared sub-channels, and
//! one offloading sub-slot of store-and-forward transfers.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::world::{distance, Position};

/// Path-loss distances are floored at the 1 m reference distance.
pub const MIN_LINK_DISTANCE: f64 = 1.0;

/// Physical-layer constants, all in linear SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Number of orthogonal sub-channels.
    pub sub_channels: usize,
    /// Bandwidth of one sub-channel in Hz.
    pub bandwidth: f64,
    /// Noise power per sub-channel in W.
    pub noise: f64,
    pub alpha_u: f64,
    pub alpha_s: f64,
    /// U2U/U2B reference power gain at 1 m.
    pub beta_u: f64,
    /// G2U reference gain at 1 m, already normalized by the receiver noise (1/W).
    pub beta_s: f64,
    /// UAV transmit power per sub-channel in W.
    pub p_uav: f64,
    /// GU transmit power in W.
    pub q_gu: f64,
    /// Carrier frequency in Hz. Metadata only.
    pub carrier: f64,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("bandwidth", self.bandwidth),
            ("noise", self.noise),
            ("beta_u", self.beta_u),
            ("beta_s", self.beta_s),
            ("p_uav", self.p_uav),
            ("q_gu", self.q_gu),
        ];
        if self.sub_channels == 0 {
            return Err(Error::Config("sub_channels must be at least 1".into()));
        }
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(alloc::format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.alpha_u >= 1.0) || !(self.alpha_s >= 1.0) {
            return Err(Error::Config("path-loss exponents must be >= 1".into()));
        }
        Ok(())
    }

    /// Power received over a U2U/U2B link of length `d`.
    pub fn u2u_received_power(&self, d: f64) -> f64 {
        self.p_uav * self.beta_u * math::powf(d.max(MIN_LINK_DISTANCE), -self.alpha_u)
    }

    /// G2U signal-to-noise ratio at distance `d`.
    pub fn g2u_snr(&self, d: f64) -> f64 {
        self.q_gu * self.beta_s * math::powf(d.max(MIN_LINK_DISTANCE), -self.alpha_s)
    }

    /// Largest G2U distance whose SNR meets `min_snr` (linear).
    pub fn coverage_radius(&self, min_snr: f64) -> f64 {
        math::powf(self.q_gu * self.beta_s / min_snr, 1.0 / self.alpha_s)
    }
}

/// A node of the offloading graph. The base station only receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Node {
    Bs,
    Uav(usize),
}

impl Node {
    /// Receiver slot in the formation matrix: 0 is the BS, `j + 1` is UAV `j`.
    pub fn slot(self) -> usize {
        match self {
            Node::Bs => 0,
            Node::Uav(j) => j + 1,
        }
    }

    pub fn from_slot(slot: usize) -> Self {
        if slot == 0 {
            Node::Bs
        } else {
            Node::Uav(slot - 1)
        }
    }
}

/// A directed link on one sub-channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Link {
    pub tx: usize,
    pub rx: Node,
    pub k: usize,
}

/// Binary sub-channel allocation over (transmitting UAV, receiver, sub-channel).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FormationMatrix {
    uavs: usize,
    channels: usize,
    bits: Vec<bool>,
}

impl FormationMatrix {
    pub fn empty(uavs: usize, channels: usize) -> Self {
        Self {
            uavs,
            channels,
            bits: vec![false; uavs * (uavs + 1) * channels],
        }
    }

    pub fn from_links(uavs: usize, channels: usize, links: &[Link]) -> Self {
        let mut m = Self::empty(uavs, channels);
        for l in links {
            m.set(l.tx, l.rx, l.k, true);
        }
        m
    }

    pub fn uavs(&self) -> usize {
        self.uavs
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    fn index(&self, tx: usize, rx: Node, k: usize) -> usize {
        assert!(tx < self.uavs && rx.slot() <= self.uavs && k < self.channels);
        (tx * (self.uavs + 1) + rx.slot()) * self.channels + k
    }

    pub fn get(&self, tx: usize, rx: Node, k: usize) -> bool {
        self.bits[self.index(tx, rx, k)]
    }

    pub fn set(&mut self, tx: usize, rx: Node, k: usize, on: bool) {
        let i = self.index(tx, rx, k);
        self.bits[i] = on;
    }

    /// Clears every outgoing link of `tx`.
    pub fn clear_outgoing(&mut self, tx: usize) {
        let row = (self.uavs + 1) * self.channels;
        self.bits[tx * row..(tx + 1) * row].fill(false);
    }

    /// Active links in (tx, rx, k) order with the BS first among receivers.
    pub fn links(&self) -> impl Iterator<Item = Link> + '_ {
        let per_tx = (self.uavs + 1) * self.channels;
        self.bits.iter().enumerate().filter(|(_, b)| **b).map(move |(idx, _)| Link {
            tx: idx / per_tx,
            rx: Node::from_slot((idx % per_tx) / self.channels),
            k: idx % self.channels,
        })
    }

    /// Whether `tx` has any link to `rx`.
    pub fn connected(&self, tx: usize, rx: Node) -> bool {
        (0..self.channels).any(|k| self.get(tx, rx, k))
    }

    /// Whether `node` transmits or receives on sub-channel `k`.
    pub fn busy(&self, node: Node, k: usize) -> bool {
        self.load(node, k) > 0
    }

    /// Incoming plus outgoing links of `node` on `k`.
    fn load(&self, node: Node, k: usize) -> usize {
        let incoming = (0..self.uavs)
            .filter(|&m| Node::Uav(m) != node && self.get(m, node, k))
            .count();
        let outgoing = match node {
            Node::Bs => 0,
            Node::Uav(i) => (0..=self.uavs)
                .map(Node::from_slot)
                .filter(|&j| j != node && self.get(i, j, k))
                .count(),
        };
        incoming + outgoing
    }

    pub fn is_all_zero(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }
}

/// A breach of the per-node, per-sub-channel half-duplex constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Violation {
    /// `node` transmits and/or receives more than once on `k`.
    Conflict { node: Node, k: usize },
    /// A UAV links to itself.
    SelfLink { uav: usize, k: usize },
}

/// Checks that on every sub-channel each node (BS included) takes part in at
/// most one link, as transmitter or receiver.
pub fn validate_alloc(phi: &FormationMatrix) -> core::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    for i in 0..phi.uavs {
        for k in 0..phi.channels {
            if phi.get(i, Node::Uav(i), k) {
                out.push(Violation::SelfLink { uav: i, k });
            }
        }
    }
    let nodes = core::iter::once(Node::Bs).chain((0..phi.uavs).map(Node::Uav));
    for node in nodes {
        for k in 0..phi.channels {
            if phi.load(node, k) > 1 {
                out.push(Violation::Conflict { node, k });
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Looks up the position of a node.
pub fn node_position(positions: &[Position], bs: Position, node: Node) -> Position {
    match node {
        Node::Bs => bs,
        Node::Uav(j) => positions[j],
    }
}

/// Co-channel interference at the receiver of `tx -> rx` on `k`: every other
/// UAV transmitting on `k` to a different receiver contributes its received
/// power at `rx`.
pub fn interference(
    params: &ChannelParams,
    phi: &FormationMatrix,
    positions: &[Position],
    bs: Position,
    tx: usize,
    rx: Node,
    k: usize,
) -> f64 {
    let rx_pos = node_position(positions, bs, rx);
    let mut total = 0.0;
    for m in (0..phi.uavs).filter(|&m| m != tx) {
        for n in (0..=phi.uavs).map(Node::from_slot).filter(|&n| n != rx) {
            if phi.get(m, n, k) {
                total += params.u2u_received_power(distance(positions[m], rx_pos));
            }
        }
    }
    total
}

/// Rate in bit/s from UAV `tx` to `rx` summed over its allocated sub-channels.
/// U2B links use the same physics with the BS as receiver.
pub fn u2u_rate(
    params: &ChannelParams,
    phi: &FormationMatrix,
    positions: &[Position],
    bs: Position,
    tx: usize,
    rx: Node,
) -> f64 {
    let d = distance(positions[tx], node_position(positions, bs, rx));
    let signal = params.u2u_received_power(d);
    (0..phi.channels)
        .filter(|&k| phi.get(tx, rx, k))
        .map(|k| {
            let sinr = signal / (params.noise + interference(params, phi, positions, bs, tx, rx, k));
            params.bandwidth * math::log2(1.0 + sinr)
        })
        .sum()
}

/// Interference-free rate in bit/s of a single-sub-channel link of length `d`.
pub fn isolated_link_rate(params: &ChannelParams, d: f64) -> f64 {
    params.bandwidth * math::log2(1.0 + params.u2u_received_power(d) / params.noise)
}

/// G2U uplink rate in bit/s. GU uplinks are spatially separated, so there is
/// no interference term.
pub fn g2u_rate(params: &ChannelParams, gu: Position, uav: Position) -> f64 {
    params.bandwidth * math::log2(1.0 + params.g2u_snr(distance(gu, uav)))
}

/// Per-slot inputs of one offloading sub-slot.
#[derive(Debug, Clone, Copy)]
pub struct OffloadInput<'a> {
    pub positions: &'a [Position],
    pub bs: Position,
    /// Buffers at the start of the slot, before this slot's sensing.
    pub buffers: &'a [f64],
    /// Bits sensed earlier in this slot.
    pub sensed: &'a [f64],
    pub d_max: f64,
    pub t_o: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkFlow {
    pub tx: usize,
    pub rx: Node,
    pub bits: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Offload {
    pub flows: Vec<LinkFlow>,
    /// O_i: everything sent by UAV i.
    pub outgoing: Vec<f64>,
    /// Bits relayed into UAV i from other UAVs.
    pub incoming: Vec<f64>,
    /// The part of `outgoing` that reached the BS.
    pub to_bs: Vec<f64>,
}

/// Executes one offloading sub-slot.
///
/// Each sender serves its receivers capacity-first in ascending receiver order
/// (BS first) from the bits it held at the start of the slot. A relay accepts
/// at most the buffer room it is guaranteed to have after the slot: its free
/// space minus this slot's sensing plus what it sends to the BS.
pub fn offload(params: &ChannelParams, input: &OffloadInput<'_>, phi: &FormationMatrix) -> Result<Offload> {
    validate_alloc(phi).map_err(Error::InvalidFormation)?;
    let n = phi.uavs;
    if input.positions.len() != n || input.buffers.len() != n || input.sensed.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: input.positions.len().min(input.buffers.len()).min(input.sensed.len()),
        });
    }

    let mut flows = Vec::new();
    for tx in 0..n {
        let mut left = input.buffers[tx].max(0.0);
        for rx in (0..=n).map(Node::from_slot) {
            if !phi.connected(tx, rx) {
                continue;
            }
            let cap = u2u_rate(params, phi, input.positions, input.bs, tx, rx) * input.t_o;
            let bits = cap.min(left);
            left -= bits;
            flows.push(LinkFlow { tx, rx, bits });
        }
    }

    let mut room: Vec<f64> = (0..n)
        .map(|j| input.d_max - input.buffers[j] - input.sensed[j])
        .collect();
    for f in flows.iter().filter(|f| f.rx == Node::Bs) {
        room[f.tx] += f.bits;
    }
    for f in flows.iter_mut() {
        if let Node::Uav(j) = f.rx {
            f.bits = f.bits.min(room[j].max(0.0));
            room[j] -= f.bits;
        }
    }

    let mut out = Offload {
        flows: Vec::new(),
        outgoing: vec![0.0; n],
        incoming: vec![0.0; n],
        to_bs: vec![0.0; n],
    };
    for f in &flows {
        out.outgoing[f.tx] += f.bits;
        match f.rx {
            Node::Bs => out.to_bs[f.tx] += f.bits,
            Node::Uav(j) => out.incoming[j] += f.bits,
        }
    }
    out.flows = flows;
    Ok(out)
}
