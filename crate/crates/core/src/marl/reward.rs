use crate::config::RewardWeights;
use crate::world::{StepReport, KJ, MBIT};

/// Unweighted reward terms of one UAV and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardComponents {
    /// Negative propulsion energy in kJ.
    pub energy: f64,
    /// Bits delivered to the BS or handed to a relay, in Mbit.
    pub data: f64,
    /// Bits sensed, in Mbit.
    pub sensing: f64,
    /// Weighted safety penalty, already multiplied by its weight.
    pub penalty: f64,
    pub total: f64,
}

pub fn reward(i: usize, report: &StepReport, w: &RewardWeights) -> RewardComponents {
    let energy = -report.energy[i] / KJ;
    let data = (report.delivered_to_bs[i] + report.relayed_out[i]) / MBIT;
    let sensing = report.sensed[i] / MBIT;
    let penalty = w.safety * report.close_neighbors[i] as f64;
    let total = w.energy * energy + w.delivery * data + w.sensing * sensing - penalty;
    RewardComponents { energy, data, sensing, penalty, total }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::FormationMatrix;
    use crate::world::tests_support::{sim_params, world};
    use crate::world::{step, FlyCommand};

    fn blank(n: usize) -> StepReport {
        StepReport {
            sensed: alloc::vec![0.0; n],
            delivered_to_bs: alloc::vec![0.0; n],
            relayed_out: alloc::vec![0.0; n],
            relayed_in: alloc::vec![0.0; n],
            energy: alloc::vec![0.0; n],
            close_neighbors: alloc::vec![0; n],
            ..Default::default()
        }
    }

    #[test]
    fn inert_slot_is_energy_only() {
        let w = RewardWeights { energy: 2.0, ..RewardWeights::default() };
        let mut rep = blank(1);
        rep.energy[0] = 500.0;
        let r = reward(0, &rep, &w);
        assert_eq!(r.total, -2.0 * 0.5);
        assert_eq!(r.penalty, 0.0);
    }

    #[test]
    fn one_close_neighbour_costs_weight() {
        let p = sim_params();
        let wts = RewardWeights::default();
        let w = world(&[(0.0, 0.0, 0.0), (p.protocol.d_min / 2.0, 0.0, 0.0)]);
        let (_, rep) = step(&p, &w, &[FlyCommand::HOLD; 2], &FormationMatrix::empty(2, 3)).unwrap();
        let r = reward(0, &rep, &wts);
        assert_eq!(r.penalty, wts.safety);
    }

    #[test]
    fn total_is_weighted_sum() {
        let w = RewardWeights { energy: 0.3, delivery: 1.7, sensing: 0.9, safety: 4.0, discount: 0.9 };
        let mut rep = blank(2);
        rep.energy[1] = 321.0;
        rep.delivered_to_bs[1] = 2.5e6;
        rep.relayed_out[1] = 1e6;
        rep.sensed[1] = 3e6;
        rep.close_neighbors[1] = 1;
        let r = reward(1, &rep, &w);
        assert_eq!(r.total, 0.3 * r.energy + 1.7 * r.data + 0.9 * r.sensing - r.penalty);
        assert_eq!(r.data, 3.5);
        assert_eq!(r.penalty, 4.0);
    }
}
