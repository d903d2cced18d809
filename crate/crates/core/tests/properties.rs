use proptest::prelude::*;
use uavnet_core::channel::{validate_alloc, FormationMatrix, Link, Node};
use uavnet_core::config::SimConfig;
use uavnet_core::formation::{cost_report, decide, load_balance, FormationInput, FormationPolicy, PolicyKind};
use uavnet_core::world::{distance, step, FlyCommand, GroundUser, Position, SimParams, UavState, WorldState};

fn params() -> SimParams {
    SimConfig::default().sim_params()
}

prop_compose! {
    fn arb_world(max_uavs: usize)(
        uavs in proptest::collection::vec((-1000.0..1000.0f64, -1000.0..1000.0f64, 0.0..1.0f64), 1..=max_uavs),
        gus in proptest::collection::vec((-1000.0..1000.0f64, -1000.0..1000.0f64, 0.0..30e6f64, 0.0..1.0f64), 0..6),
    ) -> WorldState {
        let d_max = params().protocol.d_max;
        let uavs = uavs.into_iter().enumerate().map(|(id, (x, y, f))| UavState {
            id, pos: Position::new(x, y, 100.0), buffer: f * d_max, energy_used: 0.0, v_max: 20.0,
        }).collect();
        let gus = gus.into_iter().enumerate().map(|(id, (x, y, d, f))| GroundUser {
            id, pos: Position::new(x, y, 0.0), demand: d, remaining: d * f,
        }).collect();
        WorldState::new(uavs, gus, 3)
    }
}

fn arb_commands(n: usize) -> impl Strategy<Value = Vec<FlyCommand>> {
    proptest::collection::vec((-3.2..3.2f64, 0.0..40.0f64), n)
        .prop_map(|v| v.into_iter().map(|(a, s)| FlyCommand { dir: [a.cos(), a.sin()], speed: s }).collect())
}

fn arb_policy() -> impl Strategy<Value = PolicyKind> {
    prop_oneof![
        Just(PolicyKind::EdaNf),
        Just(PolicyKind::NonCooperative),
        Just(PolicyKind::BufferThreshold),
        Just(PolicyKind::DynamicNf),
    ]
}

fn formation_for(p: &SimParams, w: &WorldState, kind: PolicyKind, energy: &[f64]) -> FormationMatrix {
    let policy = FormationPolicy { kind, buffer_threshold: 5e6, ..FormationPolicy::default() };
    let lambda = vec![0.5; w.uavs.len()];
    let report = cost_report(p, w, energy, &lambda, policy.ratio_cap);
    let (pos, buf) = (w.positions(), w.buffers());
    let input = FormationInput { channel: &p.channel, positions: &pos, bs: p.bs, buffers: &buf, t_o: p.protocol.t_o };
    decide(&policy, &report, &input)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn slot_invariants(
        w in arb_world(4),
        kind in arb_policy(),
        cmds in arb_commands(4),
        energy in proptest::collection::vec(0.0..1000.0f64, 4),
    ) {
        let p = params();
        let n = w.uavs.len();
        let phi = formation_for(&p, &w, kind, &energy[..n]);
        prop_assert!(validate_alloc(&phi).is_ok());
        let (next, rep) = step(&p, &w, &cmds[..n], &phi).unwrap();

        let mut delta = 0.0;
        for (i, (a, b)) in w.uavs.iter().zip(&next.uavs).enumerate() {
            prop_assert!(b.buffer >= 0.0 && b.buffer <= p.protocol.d_max);
            prop_assert!(distance(a.pos, b.pos) <= a.v_max * p.protocol.t_f + 1e-9);
            prop_assert!(b.energy_used > a.energy_used);
            let out = rep.delivered_to_bs[i] + rep.relayed_out[i];
            prop_assert!(out <= a.buffer + 1e-9, "uav {i} sent {out} holding {}", a.buffer);
            prop_assert!(rep.sensed[i] >= 0.0);
            delta += b.buffer - a.buffer;
        }
        for (a, b) in w.gus.iter().zip(&next.gus) {
            prop_assert!(b.remaining <= a.remaining && b.remaining >= 0.0);
        }
        let sensed: f64 = rep.sensed.iter().sum();
        let delivered: f64 = rep.delivered_to_bs.iter().sum();
        let scale = 1.0 + sensed.abs() + delivered.abs();
        prop_assert!((delta - (sensed - delivered)).abs() <= 1e-9 * scale * 1e3);
        let drained: f64 = w.gu_backlog() - next.gu_backlog();
        prop_assert!((drained - sensed).abs() <= 1e-6);

        let mut pairs = 0;
        for i in 0..n {
            for j in i + 1..n {
                if distance(next.uavs[i].pos, next.uavs[j].pos) < p.protocol.d_min {
                    pairs += 1;
                }
            }
        }
        prop_assert_eq!(rep.safety_violations, pairs);
    }

    #[test]
    fn step_is_deterministic(w in arb_world(3), cmds in arb_commands(3), kind in arb_policy()) {
        let p = params();
        let n = w.uavs.len();
        let phi = formation_for(&p, &w, kind, &vec![0.0; n]);
        let a = step(&p, &w, &cmds[..n], &phi).unwrap();
        let b = step(&p, &w, &cmds[..n], &phi).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn eda_nf_link_rules(
        n in 2usize..=6,
        pts in proptest::collection::vec((-1000.0..1000.0f64, -1000.0..1000.0f64), 6),
        b in proptest::collection::vec(-5.0..5.0f64, 6),
        c in proptest::collection::vec(0.0..50.0f64, 6),
        bufs in proptest::collection::vec(0.0..20e6f64, 6),
        b_o in -1.0..1.0f64,
        d_k in 100.0..3000.0f64,
    ) {
        let p = params();
        let pos: Vec<Position> = pts[..n].iter().map(|&(x, y)| Position::new(x, y, 100.0)).collect();
        let policy = FormationPolicy { b_o, d_k, ..FormationPolicy::default() };
        let report = uavnet_core::formation::CostReport {
            b: b[..n].to_vec(),
            c: c[..n].to_vec(),
            capped: vec![false; n],
            u2b_capacity: vec![1e6; n],
        };
        let input = FormationInput { channel: &p.channel, positions: &pos, bs: p.bs, buffers: &bufs[..n], t_o: p.protocol.t_o };
        let phi = decide(&policy, &report, &input);
        prop_assert!(validate_alloc(&phi).is_ok());
        for Link { tx, rx, .. } in phi.links() {
            if let Node::Uav(j) = rx {
                prop_assert!(report.b[tx] > b_o);
                prop_assert!(report.b[j] <= b_o);
                prop_assert!(distance(pos[tx], pos[j]) < d_k);
            }
        }
    }

    #[test]
    fn balance_sums_to_zero(
        d in proptest::collection::vec(0.0..20e6f64, 2..8),
        o in proptest::collection::vec(1e3..5e6f64, 8),
    ) {
        let (b, capped) = load_balance(&d, &o[..d.len()], 1e9);
        prop_assert!(capped.iter().all(|c| !c));
        let sum: f64 = b.iter().sum();
        let mag: f64 = b.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
        prop_assert!(sum.abs() <= 1e-9 * mag);
    }

    #[test]
    fn formation_is_idempotent(w in arb_world(4), kind in arb_policy()) {
        let p = params();
        let n = w.uavs.len();
        let a = formation_for(&p, &w, kind, &vec![100.0; n]);
        let b = formation_for(&p, &w, kind, &vec![100.0; n]);
        prop_assert_eq!(a, b);
    }
}
