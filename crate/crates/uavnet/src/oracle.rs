//! Independent reference implementations checked against the simulator.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use uavnet_core::channel::{validate_alloc, FormationMatrix, Node};
use uavnet_core::config::SimConfig;
use uavnet_core::formation::{brute_force_formation, cost_report, decide, offload_only, FormationInput, FormationPolicy, PolicyKind};
use uavnet_core::gp::{expected_improvement, GpConfig, GpModel, Kernel, Posterior, SampleHistory, SquaredExponential};
use uavnet_core::nn::{Activation, Mlp};
use uavnet_core::world::{objective_slot, GroundUser, Position, UavState, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub cases: u64,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub seconds: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub checks: Vec<OracleCheck>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&OracleCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl std::fmt::Display for OracleReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{:<5} {:<18} cases={:<9} max_error={:.3e} tol={:.1e} {:.1}s {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.cases,
                c.max_error,
                c.tolerance,
                c.seconds,
                c.detail
            )?;
        }
        Ok(())
    }
}

fn timed(name: &str, tolerance: f64, f: impl FnOnce() -> (u64, f64, String)) -> OracleCheck {
    let start = Instant::now();
    let (cases, max_error, detail) = f();
    OracleCheck {
        name: name.into(),
        cases,
        max_error,
        tolerance,
        passed: max_error.is_finite() && max_error <= tolerance,
        seconds: start.elapsed().as_secs_f64(),
        detail,
    }
}

fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

/// Squared-exponential covariance written out independently.
fn reference_cov(p: Position, q: Position, length: f64, var: f64) -> f64 {
    let d2 = (p.x - q.x).powi(2) + (p.y - q.y).powi(2) + (p.z - q.z).powi(2);
    var * (-d2 / (2.0 * length * length)).exp()
}

/// Posterior by explicit inversion of the jittered Gram matrix.
pub fn dense_posterior(points: &[Position], values: &[f64], query: Position, cfg: &GpConfig, jitter: f64) -> Posterior {
    let n = points.len();
    let k = |p, q| reference_cov(p, q, cfg.length_scale, cfg.signal_var);
    if n == 0 {
        return Posterior { mean: cfg.prior_mean, var: k(query, query) };
    }
    let gram = DMatrix::from_fn(n, n, |i, j| k(points[i], points[j]) + if i == j { jitter } else { 0.0 });
    let inv = gram.try_inverse().expect("jittered Gram matrix is invertible");
    let kq = DVector::from_fn(n, |i, _| k(points[i], query));
    let y = DVector::from_fn(n, |i, _| values[i] - cfg.prior_mean);
    let mean = cfg.prior_mean + (kq.transpose() * &inv * y)[(0, 0)];
    let var = k(query, query) - (kq.transpose() * &inv * &kq)[(0, 0)];
    Posterior { mean, var }
}

/// Fits the implementation with `kernel` on 20 random histories of up to 8
/// scaled positions and compares mean and variance at 5 queries each with the
/// dense solve. Errors are relative with a floor of `signal_var`.
pub fn gp_dense_check<K: Kernel + Clone>(kernel: K, seed: u64) -> (u64, f64, String) {
    let cfg = GpConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = 0;
    let mut worst: f64 = 0.0;
    let pt = |rng: &mut ChaCha8Rng| Position::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0);
    for _ in 0..20 {
        let len = rng.random_range(1..=8);
        let mut h = SampleHistory::new(cfg.window);
        let mut points = Vec::new();
        let mut values = Vec::new();
        for _ in 0..len {
            let p = pt(&mut rng);
            let v = rng.random_range(0.0..5.0);
            h.push(p, v);
            points.push(p);
            values.push(v);
        }
        let model = match GpModel::fit_with(kernel.clone(), &h, &cfg) {
            Ok(m) => m,
            Err(e) => return (cases, f64::INFINITY, format!("fit failed: {e}")),
        };
        for _ in 0..5 {
            let q = pt(&mut rng);
            let got = model.predict(q);
            let want = dense_posterior(&points, &values, q, &cfg, model.jitter);
            worst = worst
                .max(rel(got.mean, want.mean, cfg.signal_var))
                .max(rel(got.var, want.var.max(0.0), cfg.signal_var));
            cases += 1;
        }
    }
    (cases, worst, "20 histories x 5 queries".into())
}

/// Expected improvement against a Monte Carlo mean of `max(0, f - f*)`.
pub fn ei_monte_carlo_check(seed: u64, draws: usize) -> (u64, f64, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let mu: f64 = rng.random_range(-2.0..2.0);
        let sigma: f64 = rng.random_range(0.1..2.0);
        let f_star = mu + sigma * rng.random_range(-1.0..0.5);
        let mut acc = 0.0;
        for _ in 0..draws {
            let z: f64 = StandardNormal.sample(&mut rng);
            acc += (mu + sigma * z - f_star).max(0.0);
        }
        let mc = acc / draws as f64;
        let ei = expected_improvement(Posterior { mean: mu, var: sigma * sigma }, f_star);
        worst = worst.max(rel(ei, mc, 1e-12));
    }
    (10, worst, format!("{draws} draws per triple"))
}

fn fd_check_net(net: &mut Mlp, rng: &mut ChaCha8Rng) -> f64 {
    const H: f64 = 1e-6;
    const FLOOR: f64 = 1e-4;
    let x: Vec<f64> = (0..net.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c: Vec<f64> = (0..net.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = |net: &Mlp, x: &[f64]| -> f64 {
        let (y, _) = net.forward(x).unwrap();
        y.iter().zip(&c).map(|(a, b)| a * b).sum()
    };
    let (_, cache) = net.forward(&x).unwrap();
    let (grads, dx) = net.backward(&cache, &c).unwrap();
    let mut worst: f64 = 0.0;
    for p in 0..grads.len() {
        let orig = net.params()[p];
        net.params_mut()[p] = orig + H;
        let up = loss(net, &x);
        net.params_mut()[p] = orig - H;
        let down = loss(net, &x);
        net.params_mut()[p] = orig;
        let fd = (up - down) / (2.0 * H);
        worst = worst.max((grads[p] - fd).abs() / fd.abs().max(grads[p].abs()).max(FLOOR));
    }
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp[i] += H;
        let up = loss(net, &xp);
        xp[i] -= 2.0 * H;
        let down = loss(net, &xp);
        let fd = (up - down) / (2.0 * H);
        worst = worst.max((dx[i] - fd).abs() / fd.abs().max(dx[i].abs()).max(FLOOR));
    }
    worst
}

/// Parameter and input gradients of the actor and critic shapes used with
/// three UAVs against central differences.
pub fn mlp_gradient_check(seeds: u64) -> (u64, f64, String) {
    let od = uavnet_core::marl::obs_dim(3);
    let shapes: [(Vec<usize>, Activation); 2] = [
        (vec![od, 64, 64, 2], Activation::Tanh),
        (vec![3 * (od + 2), 64, 64, 1], Activation::Identity),
    ];
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (dims, act) in &shapes {
            let mut net = Mlp::new(dims, *act, &mut rng);
            worst = worst.max(fd_check_net(&mut net, &mut rng));
            cases += 1;
        }
    }
    (cases, worst, "actor and critic, all parameters and inputs".into())
}

/// Half-duplex feasibility of a dense `[tx][node][k]` array with the BS as
/// node 0 and UAV `j` as node `j + 1`. Each node takes part in at most one
/// link per sub-channel counting links from other UAVs and links to other
/// nodes; UAVs never link to themselves and the BS never transmits.
pub fn reference_feasible(phi: &[Vec<Vec<bool>>], n: usize, k: usize) -> bool {
    for kk in 0..k {
        for m in 0..n {
            if phi[m][m + 1][kk] {
                return false;
            }
        }
        for node in 0..=n {
            let incoming = (0..n).filter(|&m| m + 1 != node && phi[m][node][kk]).count();
            let outgoing = if node == 0 {
                0
            } else {
                (0..=n).filter(|&j| j != node && phi[node - 1][j][kk]).count()
            };
            if incoming + outgoing > 1 {
                return false;
            }
        }
    }
    true
}

/// Every matrix with up to `max_n` UAVs and `max_k` sub-channels, self-link
/// entries included, checked against [`validate_alloc`].
pub fn enumerator_check(max_n: usize, max_k: usize) -> (u64, f64, String) {
    let mut cases = 0u64;
    let mut disagreements = 0u64;
    let mut feasible = 0u64;
    for n in 1..=max_n {
        for k in 1..=max_k {
            let slots: Vec<(usize, usize, usize)> =
                (0..n).flat_map(|tx| (0..=n).flat_map(move |rx| (0..k).map(move |kk| (tx, rx, kk)))).collect();
            let mut dense = vec![vec![vec![false; k]; n + 1]; n];
            let mut phi = FormationMatrix::empty(n, k);
            for mask in 0u64..(1u64 << slots.len()) {
                for (b, &(tx, rx, kk)) in slots.iter().enumerate() {
                    let on = mask >> b & 1 == 1;
                    dense[tx][rx][kk] = on;
                    phi.set(tx, Node::from_slot(rx), kk, on);
                }
                let want = reference_feasible(&dense, n, k);
                if want != validate_alloc(&phi).is_ok() {
                    disagreements += 1;
                }
                feasible += want as u64;
                cases += 1;
            }
        }
    }
    (cases, disagreements as f64, format!("{feasible} feasible, {disagreements} disagreements"))
}

/// Random tiny instances: the exhaustive optimum must be feasible, must
/// reproduce its own objective and must not be beaten by any policy.
pub fn brute_force_check(seed: u64, instances: usize) -> (u64, f64, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut gap_sum = 0.0;
    let mut gap_count = 0;
    for _ in 0..instances {
        let n = rng.random_range(1..=3);
        let k = rng.random_range(1..=2);
        let mut sim = SimConfig::default();
        sim.channel.sub_channels = k;
        let p = sim.sim_params();
        let hw = p.half_width;
        let uavs = (0..n)
            .map(|id| UavState {
                id,
                pos: Position::new(rng.random_range(-hw..hw), rng.random_range(-hw..hw), 100.0),
                buffer: rng.random_range(0.0..p.protocol.d_max),
                energy_used: 0.0,
                v_max: 20.0,
            })
            .collect();
        let gus = vec![GroundUser { id: 0, pos: Position::new(0.0, 0.0, 0.0), demand: 1e7, remaining: 1e7 }];
        let w = WorldState::new(uavs, gus, k);
        let lambda: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let (best, value) = match brute_force_formation(&p, &w, &lambda) {
            Ok(b) => b,
            Err(e) => return (0, f64::INFINITY, format!("brute force failed: {e}")),
        };
        if validate_alloc(&best).is_err() {
            return (0, f64::INFINITY, "brute force returned an infeasible matrix".into());
        }
        let (next, rep) = offload_only(&p, &w, &best).unwrap();
        worst = worst.max((objective_slot(&next, &rep, &lambda) - value).abs());
        let energy: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..200.0)).collect();
        let report = cost_report(&p, &w, &energy, &lambda, FormationPolicy::default().ratio_cap);
        let (pos, buf) = (w.positions(), w.buffers());
        let input = FormationInput { channel: &p.channel, positions: &pos, bs: p.bs, buffers: &buf, t_o: p.protocol.t_o };
        for kind in PolicyKind::ALL {
            let policy = FormationPolicy { kind, ..FormationPolicy::default() };
            let phi = decide(&policy, &report, &input);
            let (next, rep) = offload_only(&p, &w, &phi).unwrap();
            let v = objective_slot(&next, &rep, &lambda);
            worst = worst.max(value - v);
            gap_sum += v - value;
            gap_count += 1;
        }
    }
    (
        instances as u64,
        worst,
        format!("mean policy gap over optimum {:.4}", gap_sum / gap_count.max(1) as f64),
    )
}

/// Runs every oracle. `seed` varies the random cases.
pub fn run_oracle_checks(seed: u64) -> OracleReport {
    let checks = vec![
        timed("gp_dense", 1e-8, || {
            gp_dense_check(SquaredExponential::from_config(&GpConfig::default()), seed)
        }),
        timed("ei_monte_carlo", 1e-2, || ei_monte_carlo_check(seed, 1_000_000)),
        timed("mlp_gradients", 1e-4, || mlp_gradient_check(10)),
        timed("alloc_enumerator", 0.0, || enumerator_check(3, 2)),
        timed("brute_force", 1e-9, || brute_force_check(seed, 40)),
    ];
    OracleReport { checks }
}
