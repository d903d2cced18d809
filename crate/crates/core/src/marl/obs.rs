use alloc::vec::Vec;

use crate::channel::Node;
use crate::math;
use crate::world::{distance, propulsion_energy, select_gu, SimParams, WorldState};

/// Observation length for `n` UAVs: position (2), buffer, energy, formation
/// row (`n + 1`), GU signal, GU bearing (2), GU demand.
pub fn obs_dim(n: usize) -> usize {
    n + 9
}

/// Normalizers derived once from the scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObsScale {
    pub half_width: f64,
    pub d_max: f64,
    /// Largest possible propulsion energy of one slot in J.
    pub energy: f64,
    /// Spectral efficiency of a GU directly below the UAV.
    pub signal: f64,
}

impl ObsScale {
    pub fn new(params: &SimParams, altitude: f64, v_max: f64) -> Self {
        let p = &params.protocol;
        // flying power is convex above the floor speed and flat below it
        let energy = propulsion_energy(p.energy.v_floor.min(v_max), p).max(propulsion_energy(v_max, p));
        Self {
            half_width: params.half_width,
            d_max: p.d_max,
            energy,
            signal: math::log2(1.0 + params.channel.g2u_snr(altitude)),
        }
    }
}

/// Local observation of UAV `i`; every entry lies in `[-1, 1]`.
pub fn observe(params: &SimParams, scale: &ObsScale, w: &WorldState, energy: &[f64], i: usize) -> Vec<f64> {
    let n = w.uavs.len();
    let u = &w.uavs[i];
    let mut o = Vec::with_capacity(obs_dim(n));
    o.push((u.pos.x / scale.half_width).clamp(-1.0, 1.0));
    o.push((u.pos.y / scale.half_width).clamp(-1.0, 1.0));
    o.push((u.buffer / scale.d_max).clamp(0.0, 1.0));
    o.push((energy.get(i).copied().unwrap_or(0.0) / scale.energy).clamp(0.0, 1.0));
    for slot in 0..=n {
        let on = w.formation.uavs() == n && w.formation.connected(i, Node::from_slot(slot));
        o.push(if on { 1.0 } else { 0.0 });
    }
    match select_gu(u, &w.gus, params.protocol.coverage_radius) {
        Some(m) => {
            let g = &w.gus[m];
            let se = math::log2(1.0 + params.channel.g2u_snr(distance(g.pos, u.pos)));
            o.push((se / scale.signal).clamp(0.0, 1.0));
            let (dx, dy) = (g.pos.x - u.pos.x, g.pos.y - u.pos.y);
            let h = math::sqrt(dx * dx + dy * dy);
            if h > 1e-9 {
                o.push(dx / h);
                o.push(dy / h);
            } else {
                o.push(0.0);
                o.push(0.0);
            }
            o.push(if g.demand > 0.0 { (g.remaining / g.demand).clamp(0.0, 1.0) } else { 0.0 });
        }
        None => o.extend([0.0; 4]),
    }
    o
}

/// Concatenated observations of all UAVs.
pub fn observe_all(params: &SimParams, scale: &ObsScale, w: &WorldState, energy: &[f64]) -> Vec<f64> {
    (0..w.uavs.len()).flat_map(|i| observe(params, scale, w, energy, i)).collect()
}
