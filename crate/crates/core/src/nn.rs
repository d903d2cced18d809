//! Fully connected networks with tanh hidden layers, exact backpropagation
//! and Adam.
//!
//! Parameters live in one flat vector, layer by layer: a row-major
//! `out x in` weight block followed by the `out` biases. Gradients and
//! optimizer moments share that layout.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => math::tanh(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output.
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    output: Activation,
    params: Vec<f64>,
    version: u64,
}

fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
}

impl Mlp {
    /// Weights and biases uniform in `+-1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], output: Activation, rng: &mut R) -> Self {
        let mut net = Self::zeros(dims, output);
        let mut at = 0;
        for w in dims.windows(2) {
            let bound = 1.0 / math::sqrt(w[0] as f64);
            for p in &mut net.params[at..at + w[1] * (w[0] + 1)] {
                *p = rng.random_range(-bound..bound);
            }
            at += w[1] * (w[0] + 1);
        }
        net
    }

    pub fn zeros(dims: &[usize], output: Activation) -> Self {
        assert!(dims.len() >= 2 && dims.iter().all(|&d| d > 0), "an MLP needs at least one layer");
        Self { dims: dims.to_vec(), output, params: vec![0.0; param_count(dims)], version: 0 }
    }

    /// Rebuilds a network from its parts, checking the parameter count.
    pub fn from_parts(dims: &[usize], output: Activation, params: Vec<f64>) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::Dimension { expected: 2, got: dims.len() });
        }
        let expected = param_count(dims);
        if params.len() != expected {
            return Err(Error::Dimension { expected, got: params.len() });
        }
        Ok(Self { dims: dims.to_vec(), output, params, version: 0 })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding caches.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    fn layer_activation(&self, l: usize) -> Activation {
        if l + 2 == self.dims.len() {
            self.output
        } else {
            Activation::Tanh
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Cache)> {
        let cache = self.forward_batch(x, 1)?;
        Ok((cache.output().to_vec(), cache))
    }

    /// Forward pass on `batch` row-major inputs.
    pub fn forward_batch(&self, x: &[f64], batch: usize) -> Result<Cache> {
        let n_in = self.input_dim();
        if x.len() != n_in * batch {
            return Err(Error::Dimension { expected: n_in * batch, got: x.len() });
        }
        let mut acts = Vec::with_capacity(self.dims.len());
        acts.push(x.to_vec());
        let mut at = 0;
        for l in 0..self.dims.len() - 1 {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let w = &self.params[at..at + fan_out * fan_in];
            let b = &self.params[at + fan_out * fan_in..at + fan_out * (fan_in + 1)];
            let act = self.layer_activation(l);
            let prev = &acts[l];
            let mut out = vec![0.0; batch * fan_out];
            for s in 0..batch {
                let xs = &prev[s * fan_in..(s + 1) * fan_in];
                for (o, y) in out[s * fan_out..(s + 1) * fan_out].iter_mut().enumerate() {
                    let row = &w[o * fan_in..(o + 1) * fan_in];
                    let z = b[o] + row.iter().zip(xs).map(|(a, c)| a * c).sum::<f64>();
                    *y = act.apply(z);
                }
            }
            acts.push(out);
            at += fan_out * (fan_in + 1);
        }
        Ok(Cache { version: self.version, batch, acts })
    }

    fn check_cache(&self, cache: &Cache, dy: &[f64]) -> Result<()> {
        if cache.version != self.version || cache.acts.len() != self.dims.len() {
            return Err(Error::StaleCache);
        }
        let expected = cache.batch * self.output_dim();
        if dy.len() != expected {
            return Err(Error::Dimension { expected, got: dy.len() });
        }
        Ok(())
    }

    /// Gradients of `sum(y . dy)` over the batch with respect to every
    /// parameter and every input.
    pub fn backward(&self, cache: &Cache, dy: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_cache(cache, dy)?;
        let mut grads = vec![0.0; self.params.len()];
        let dx = self.backprop(cache, dy, Some(&mut grads));
        Ok((grads, dx))
    }

    /// Like [`Mlp::backward`] but only the input gradient.
    pub fn backward_input(&self, cache: &Cache, dy: &[f64]) -> Result<Vec<f64>> {
        self.check_cache(cache, dy)?;
        Ok(self.backprop(cache, dy, None))
    }

    fn backprop(&self, cache: &Cache, dy: &[f64], mut grads: Option<&mut Vec<f64>>) -> Vec<f64> {
        let batch = cache.batch;
        let layers = self.dims.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut at = 0;
        for l in 0..layers {
            offsets.push(at);
            at += self.dims[l + 1] * (self.dims[l] + 1);
        }
        let mut delta = dy.to_vec();
        for l in (0..layers).rev() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let act = self.layer_activation(l);
            for (d, y) in delta.iter_mut().zip(&cache.acts[l + 1]) {
                *d *= act.grad_from_output(*y);
            }
            let at = offsets[l];
            let prev = &cache.acts[l];
            if let Some(g) = grads.as_deref_mut() {
                let (gw, gb) = g[at..at + fan_out * (fan_in + 1)].split_at_mut(fan_out * fan_in);
                for s in 0..batch {
                    let xs = &prev[s * fan_in..(s + 1) * fan_in];
                    for o in 0..fan_out {
                        let d = delta[s * fan_out + o];
                        if d == 0.0 {
                            continue;
                        }
                        gb[o] += d;
                        for (g, x) in gw[o * fan_in..(o + 1) * fan_in].iter_mut().zip(xs) {
                            *g += d * x;
                        }
                    }
                }
            }
            let w = &self.params[at..at + fan_out * fan_in];
            let mut next = vec![0.0; batch * fan_in];
            for s in 0..batch {
                let dn = &mut next[s * fan_in..(s + 1) * fan_in];
                for o in 0..fan_out {
                    let d = delta[s * fan_out + o];
                    if d == 0.0 {
                        continue;
                    }
                    for (v, wv) in dn.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                        *v += d * wv;
                    }
                }
            }
            delta = next;
        }
        delta
    }
}

/// Layer outputs of a forward pass, tied to the parameter version that
/// produced them.
#[derive(Debug, Clone)]
pub struct Cache {
    version: u64,
    batch: usize,
    acts: Vec<Vec<f64>>,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub cfg: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl OptState {
    pub fn new(net: &Mlp, cfg: AdamConfig) -> Self {
        Self { cfg, m: vec![0.0; net.params.len()], v: vec![0.0; net.params.len()], t: 0 }
    }
}

/// One bias-corrected Adam step descending `grads`.
pub fn opt_step(net: &mut Mlp, grads: &[f64], opt: &mut OptState) -> Result<()> {
    let n = net.params.len();
    if grads.len() != n || opt.m.len() != n || opt.v.len() != n {
        return Err(Error::Dimension { expected: n, got: grads.len() });
    }
    opt.t += 1;
    let AdamConfig { lr, beta1, beta2, eps } = opt.cfg;
    let t = opt.t as i32;
    let c1 = 1.0 - math::powf(beta1, t as f64);
    let c2 = 1.0 - math::powf(beta2, t as f64);
    let params = net.params_mut();
    for i in 0..n {
        let g = grads[i];
        opt.m[i] = beta1 * opt.m[i] + (1.0 - beta1) * g;
        opt.v[i] = beta2 * opt.v[i] + (1.0 - beta2) * g * g;
        let m_hat = opt.m[i] / c1;
        let v_hat = opt.v[i] / c2;
        params[i] -= lr * m_hat / (math::sqrt(v_hat) + eps);
    }
    Ok(())
}

/// `target <- tau * online + (1 - tau) * target`.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if target.dims != online.dims {
        return Err(Error::Dimension { expected: target.params.len(), got: online.params.len() });
    }
    for (t, o) in target.params_mut().iter_mut().zip(&online.params) {
        *t = tau * o + (1.0 - tau) * *t;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_net(dims: &[usize], out: Activation, seed: u64) -> Mlp {
        Mlp::new(dims, out, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Layer-by-layer evaluation written against the documented layout.
    fn reference_forward(net: &Mlp, x: &[f64]) -> Vec<f64> {
        let dims = net.dims();
        let p = net.params();
        let mut a = x.to_vec();
        let mut at = 0;
        for l in 0..dims.len() - 1 {
            let (i, o) = (dims[l], dims[l + 1]);
            let last = l + 2 == dims.len();
            a = (0..o)
                .map(|r| {
                    let mut z = p[at + o * i + r];
                    for c in 0..i {
                        z += p[at + r * i + c] * a[c];
                    }
                    if last && net.output_activation() == Activation::Identity {
                        z
                    } else {
                        z.tanh()
                    }
                })
                .collect();
            at += o * (i + 1);
        }
        a
    }

    #[test]
    fn zero_weights_output_bias() {
        let mut net = Mlp::zeros(&[3, 2], Activation::Tanh);
        net.params_mut()[6] = 0.5;
        net.params_mut()[7] = -0.25;
        let (y, _) = net.forward(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(y, vec![math::tanh(0.5), math::tanh(-0.25)]);
    }

    #[test]
    fn unit_tanh_net() {
        let net = Mlp::from_parts(&[1, 1], Activation::Tanh, vec![1.0, 0.0]).unwrap();
        assert_eq!(net.forward(&[0.7]).unwrap().0, vec![math::tanh(0.7)]);
    }

    #[test]
    fn forward_matches_reference() {
        for seed in 0..5 {
            let net = random_net(&[4, 6, 3], Activation::Identity, seed);
            let x = [0.3, -0.2, 0.9, -1.1];
            let (y, _) = net.forward(&x).unwrap();
            for (a, b) in y.iter().zip(reference_forward(&net, &x)) {
                assert_relative_eq!(*a, b, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn batch_forward_matches_single() {
        let net = random_net(&[3, 5, 2], Activation::Tanh, 9);
        let xs = [0.1, 0.2, 0.3, -0.4, 0.5, -0.6];
        let cache = net.forward_batch(&xs, 2).unwrap();
        assert_eq!(&cache.output()[..2], &net.forward(&xs[..3]).unwrap().0[..]);
        assert_eq!(&cache.output()[2..], &net.forward(&xs[3..]).unwrap().0[..]);
    }

    #[test]
    fn forward_rejects_wrong_input() {
        let net = Mlp::zeros(&[3, 2], Activation::Tanh);
        assert!(matches!(net.forward(&[1.0]), Err(Error::Dimension { expected: 3, got: 1 })));
    }

    #[test]
    fn linear_hand_gradients() {
        let net = Mlp::from_parts(&[1, 1], Activation::Identity, vec![2.5, 0.0]).unwrap();
        let (_, cache) = net.forward(&[1.5]).unwrap();
        let (g, dx) = net.backward(&cache, &[1.0]).unwrap();
        assert_eq!(g, vec![1.5, 1.0]);
        assert_eq!(dx, vec![2.5]);
        let (g, dx) = net.backward(&cache, &[0.0]).unwrap();
        assert!(g.iter().chain(&dx).all(|&v| v == 0.0));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut net = random_net(&[2, 3, 1], Activation::Identity, 1);
        let (_, cache) = net.forward(&[0.1, 0.2]).unwrap();
        net.params_mut()[0] += 1.0;
        assert_eq!(net.backward(&cache, &[1.0]).unwrap_err(), Error::StaleCache);
        let other = random_net(&[2, 3, 1], Activation::Identity, 2);
        let (_, cache) = other.forward(&[0.1, 0.2]).unwrap();
        assert!(net.backward(&cache, &[1.0]).is_err());
    }

    fn fd_check(dims: &[usize], out: Activation, seed: u64) {
        let net = random_net(dims, out, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let x: Vec<f64> = (0..dims[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dy: Vec<f64> = (0..*dims.last().unwrap()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = |n: &Mlp, x: &[f64]| -> f64 {
            n.forward(x).unwrap().0.iter().zip(&dy).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = net.forward(&x).unwrap();
        let (g, dx) = net.backward(&cache, &dy).unwrap();
        let h = 1e-5;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-4 * a.abs().max(b.abs()).max(1e-3);
        for i in 0..net.params().len() {
            let (mut p, mut m) = (net.clone(), net.clone());
            p.params_mut()[i] += h;
            m.params_mut()[i] -= h;
            let fd = (f(&p, &x) - f(&m, &x)) / (2.0 * h);
            assert!(close(g[i], fd), "param {i}: {} vs {fd}", g[i]);
        }
        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += h;
            xm[i] -= h;
            let fd = (f(&net, &xp) - f(&net, &xm)) / (2.0 * h);
            assert!(close(dx[i], fd), "input {i}: {} vs {fd}", dx[i]);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..3 {
            fd_check(&[3, 5, 4, 2], Activation::Tanh, seed);
            fd_check(&[6, 7, 1], Activation::Identity, seed);
        }
    }

    #[test]
    fn backward_input_matches_full() {
        let net = random_net(&[4, 8, 3], Activation::Tanh, 4);
        let xs = [0.1, 0.2, 0.3, 0.4, -0.1, -0.2, -0.3, -0.4];
        let cache = net.forward_batch(&xs, 2).unwrap();
        let dy = [1.0, -1.0, 0.5, 0.2, 0.0, -0.3];
        assert_eq!(net.backward(&cache, &dy).unwrap().1, net.backward_input(&cache, &dy).unwrap());
    }

    #[test]
    fn adam_cases() {
        let mut net = random_net(&[2, 3, 1], Activation::Identity, 3);
        let before = net.clone();
        let mut opt = OptState::new(&net, AdamConfig::with_lr(1e-3));
        opt_step(&mut net, &vec![0.0; before.params().len()], &mut opt).unwrap();
        assert_eq!(net.params(), before.params());

        let mut net = before.clone();
        let mut opt = OptState::new(&net, AdamConfig::with_lr(1e-3));
        let grads: Vec<f64> = (0..net.params().len()).map(|i| if i % 2 == 0 { 0.7 } else { -3.0 }).collect();
        opt_step(&mut net, &grads, &mut opt).unwrap();
        for ((a, b), g) in net.params().iter().zip(before.params()).zip(&grads) {
            assert_relative_eq!(a - b, -1e-3 * g.signum(), max_relative = 1e-6);
        }

        let (mut n1, mut n2) = (before.clone(), before.clone());
        let (mut o1, mut o2) = (OptState::new(&n1, AdamConfig::with_lr(1e-2)), OptState::new(&n2, AdamConfig::with_lr(1e-2)));
        opt_step(&mut n1, &grads, &mut o1).unwrap();
        opt_step(&mut n2, &grads, &mut o2).unwrap();
        assert_eq!(n1.params(), n2.params());
        assert_eq!(o1, o2);
    }

    #[test]
    fn soft_update_cases() {
        let online = Mlp::from_parts(&[1, 1], Activation::Identity, vec![2.0, 2.0]).unwrap();
        let zero = Mlp::from_parts(&[1, 1], Activation::Identity, vec![0.0, 0.0]).unwrap();
        let mut t = zero.clone();
        soft_update(&mut t, &online, 1.0).unwrap();
        assert_eq!(t.params(), online.params());
        let mut t = zero.clone();
        soft_update(&mut t, &online, 0.0).unwrap();
        assert_eq!(t.params(), zero.params());
        let mut t = zero.clone();
        soft_update(&mut t, &online, 0.5).unwrap();
        assert_eq!(t.params(), &[1.0, 1.0]);
        let mut wrong = Mlp::zeros(&[2, 1], Activation::Identity);
        assert!(soft_update(&mut wrong, &online, 0.5).is_err());
    }

    #[test]
    fn tanh_output_bounded() {
        let mut net = random_net(&[2, 4, 2], Activation::Tanh, 5);
        for p in net.params_mut() {
            *p *= 1e3;
        }
        let (y, _) = net.forward(&[1.0, -1.0]).unwrap();
        assert!(y.iter().all(|v| v.abs() <= 1.0));
    }
}
