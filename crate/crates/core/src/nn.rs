//! Small fully connected networks with manual backpropagation and Adam.
//!
//! Batches are column-major: an `n_in × batch` matrix in, `n_out × batch` out.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu(a) => {
                if z > 0.0 {
                    z
                } else {
                    a * z
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::LeakyRelu(a) => {
                if z > 0.0 {
                    1.0
                } else {
                    a
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `n_out × n_in`.
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Dense {
    fn zeros_like(&self) -> Self {
        Self { w: DMatrix::zeros(self.w.nrows(), self.w.ncols()), b: DVector::zeros(self.b.len()) }
    }
}

/// Dropout behaviour for a forward pass.
pub enum Mode<'a> {
    Eval,
    /// Fresh inverted-dropout masks on every hidden layer.
    Train(&'a mut SimRng),
    /// Replays masks from an earlier training pass.
    Replay(&'a [DMatrix<f64>]),
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    inputs: Vec<DMatrix<f64>>,
    pre: Vec<DMatrix<f64>>,
    post: Vec<DMatrix<f64>>,
    /// One mask per hidden layer (all ones outside training).
    pub masks: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub hidden: Activation,
    pub output: Activation,
    /// Drop probability on hidden activations during training.
    pub dropout: f64,
}

/// Parameter gradients, shaped like [`Mlp::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w += &b.w;
            a.b += &b.b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.layers {
            a.w *= s;
            a.b *= s;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|d| d.w.iter().chain(d.b.iter()).all(|v| v.is_finite()))
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|d| d.w.norm_squared() + d.b.norm_squared())
            .sum::<f64>()
            .sqrt()
    }
}

impl Mlp {
    /// `sizes = [n_in, h_1, …, n_out]`; Glorot-uniform weights, zero biases.
    pub fn new(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        dropout: f64,
        rng: &mut SimRng,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!("dropout {dropout} outside [0, 1)")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let lim = (6.0 / (n_in + n_out) as f64).sqrt();
                Dense {
                    w: DMatrix::from_fn(n_out, n_in, |_, _| rng.uniform_range(-lim, lim)),
                    b: DVector::zeros(n_out),
                }
            })
            .collect();
        Ok(Self { layers, hidden, output, dropout })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |d| d.w.nrows())
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|d| d.w.nrows()));
        s
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|d| d.w.len() + d.b.len()).sum()
    }

    /// Shape consistency between consecutive layers.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("network has no layers".into()));
        }
        for (i, d) in self.layers.iter().enumerate() {
            if d.b.len() != d.w.nrows() {
                return Err(Error::Dimension(format!("layer {i}: bias/weight mismatch")));
            }
            if i > 0 && d.w.ncols() != self.layers[i - 1].w.nrows() {
                return Err(Error::Dimension(format!("layer {i}: input width mismatch")));
            }
        }
        Ok(())
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients { layers: self.layers.iter().map(Dense::zeros_like).collect() }
    }

    pub fn forward(&self, x: &DMatrix<f64>, mut mode: Mode<'_>) -> Result<(DMatrix<f64>, Cache)> {
        if x.nrows() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.nrows()
            )));
        }
        let n = self.layers.len();
        let mut cache = Cache {
            inputs: Vec::with_capacity(n),
            pre: Vec::with_capacity(n),
            post: Vec::with_capacity(n),
            masks: Vec::with_capacity(n - 1),
        };
        let mut a = x.clone();
        for (i, d) in self.layers.iter().enumerate() {
            let mut z = &d.w * &a;
            for mut col in z.column_iter_mut() {
                col += &d.b;
            }
            let last = i + 1 == n;
            let act = if last { self.output } else { self.hidden };
            let y = z.map(|v| act.apply(v));
            let out = if last {
                y.clone()
            } else {
                let mask = match &mut mode {
                    Mode::Eval => DMatrix::from_element(y.nrows(), y.ncols(), 1.0),
                    Mode::Train(rng) => {
                        let keep = 1.0 - self.dropout;
                        DMatrix::from_fn(y.nrows(), y.ncols(), |_, _| {
                            if rng.uniform() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        })
                    }
                    Mode::Replay(masks) => {
                        let m = masks.get(i).ok_or_else(|| Error::Dimension("missing dropout mask".into()))?;
                        if m.shape() != y.shape() {
                            return Err(Error::Dimension("dropout mask shape mismatch".into()));
                        }
                        m.clone()
                    }
                };
                let out = y.component_mul(&mask);
                cache.masks.push(mask);
                out
            };
            cache.inputs.push(std::mem::replace(&mut a, out));
            cache.pre.push(z);
            cache.post.push(y);
        }
        Ok((a, cache))
    }

    /// Deterministic forward pass without dropout.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward(x, Mode::Eval)?.0)
    }

    /// Backpropagates `∂loss/∂output`; returns parameter and input gradients.
    pub fn backward(&self, cache: &Cache, grad_out: &DMatrix<f64>) -> (Gradients, DMatrix<f64>) {
        let n = self.layers.len();
        let mut grads = Vec::with_capacity(n);
        let mut g = grad_out.clone();
        for i in (0..n).rev() {
            let last = i + 1 == n;
            let act = if last { self.output } else { self.hidden };
            if !last {
                g.component_mul_assign(&cache.masks[i]);
            }
            let dz = g.zip_zip_map(&cache.pre[i], &cache.post[i], |gv, z, y| gv * act.derivative(z, y));
            let dw = &dz * cache.inputs[i].transpose();
            let db = DVector::from_iterator(dz.nrows(), dz.row_iter().map(|r| r.sum()));
            g = self.layers[i].w.transpose() * &dz;
            grads.push(Dense { w: dw, b: db });
        }
        grads.reverse();
        (Gradients { layers: grads }, g)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|d| d.w.iter().chain(d.b.iter()).all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam moment estimates for one network. Descends the supplied gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    t: u64,
    m: Vec<Dense>,
    v: Vec<Dense>,
}

impl Adam {
    pub fn new(net: &Mlp, cfg: AdamConfig) -> Self {
        let z: Vec<Dense> = net.layers.iter().map(Dense::zeros_like).collect();
        Self { cfg, t: 0, m: z.clone(), v: z }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) {
        self.t += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for (((layer, g), m), v) in net.layers.iter_mut().zip(&grads.layers).zip(&mut self.m).zip(&mut self.v) {
            let pairs = [
                (layer.w.as_mut_slice(), g.w.as_slice(), m.w.as_mut_slice(), v.w.as_mut_slice()),
                (layer.b.as_mut_slice(), g.b.as_slice(), m.b.as_mut_slice(), v.b.as_mut_slice()),
            ];
            for (p, g, m, v) in pairs {
                adam_update(p, g, m, v, c, bc1, bc2);
            }
        }
    }
}

/// Adam update on flat slices, with bias corrections `bc1`, `bc2` precomputed.
pub fn adam_update(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], c: AdamConfig, bc1: f64, bc2: f64) {
    for i in 0..p.len() {
        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
        let mh = m[i] / bc1;
        let vh = v[i] / bc2;
        p[i] -= c.lr * mh / (vh.sqrt() + c.eps);
    }
}

/// Adam state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct FlatAdam {
    pub cfg: AdamConfig,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl FlatAdam {
    pub fn new(n: usize, cfg: AdamConfig) -> Self {
        Self { cfg, t: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn step(&mut self, p: &mut [f64], g: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.cfg.beta2.powi(self.t as i32);
        adam_update(p, g, &mut self.m, &mut self.v, self.cfg, bc1, bc2);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(rng: &mut SimRng, out: Activation) -> Mlp {
        Mlp::new(&[3, 5, 4, 2], Activation::LeakyRelu(0.2), out, 0.2, rng).unwrap()
    }

    /// Weighted-sum loss `Σ c ⊙ f(x)` so the output gradient is `c`.
    fn loss(net: &Mlp, x: &DMatrix<f64>, c: &DMatrix<f64>, masks: &[DMatrix<f64>]) -> f64 {
        net.forward(x, Mode::Replay(masks)).unwrap().0.component_mul(c).sum()
    }

    #[test]
    fn glorot_bounds_and_zero_bias() {
        let mut rng = SimRng::new(1);
        let n = Mlp::new(&[10, 20, 1], Activation::Tanh, Activation::Identity, 0.0, &mut rng).unwrap();
        let lim = (6.0f64 / 30.0).sqrt();
        assert!(n.layers[0].w.iter().all(|v| v.abs() <= lim));
        assert!(n.layers.iter().all(|d| d.b.iter().all(|&v| v == 0.0)));
        assert_eq!(n.param_count(), 10 * 20 + 20 + 20 + 1);
    }

    #[test]
    fn backward_matches_finite_difference() {
        for out in [Activation::Tanh, Activation::Sigmoid, Activation::Identity] {
            let mut rng = SimRng::new(2);
            let mut n = net(&mut rng, out);
            for d in &mut n.layers {
                d.b = DVector::from_fn(d.b.len(), |_, _| rng.uniform_range(-0.3, 0.3));
            }
            let x = DMatrix::from_fn(3, 4, |_, _| rng.normal());
            let c = DMatrix::from_fn(2, 4, |_, _| rng.normal());
            let (_, cache) = n.forward(&x, Mode::Train(&mut rng)).unwrap();
            let masks = cache.masks.clone();
            let (g, gx) = n.backward(&cache, &c);
            let h = 1e-6;
            for li in 0..n.layers.len() {
                for idx in 0..n.layers[li].w.len() {
                    let mut p = n.clone();
                    p.layers[li].w.as_mut_slice()[idx] += h;
                    let mut m = n.clone();
                    m.layers[li].w.as_mut_slice()[idx] -= h;
                    let fd = (loss(&p, &x, &c, &masks) - loss(&m, &x, &c, &masks)) / (2.0 * h);
                    let an = g.layers[li].w.as_slice()[idx];
                    assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "{out:?} w[{li}][{idx}] {fd} {an}");
                }
                for idx in 0..n.layers[li].b.len() {
                    let mut p = n.clone();
                    p.layers[li].b[idx] += h;
                    let mut m = n.clone();
                    m.layers[li].b[idx] -= h;
                    let fd = (loss(&p, &x, &c, &masks) - loss(&m, &x, &c, &masks)) / (2.0 * h);
                    assert!((fd - g.layers[li].b[idx]).abs() < 1e-6 * (1.0 + fd.abs()));
                }
            }
            for idx in 0..x.len() {
                let mut p = x.clone();
                p.as_mut_slice()[idx] += h;
                let mut m = x.clone();
                m.as_mut_slice()[idx] -= h;
                let fd = (loss(&n, &p, &c, &masks) - loss(&n, &m, &c, &masks)) / (2.0 * h);
                assert!((fd - gx.as_slice()[idx]).abs() < 1e-6 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn eval_mode_is_deterministic_and_unmasked() {
        let mut rng = SimRng::new(3);
        let n = net(&mut rng, Activation::Tanh);
        let x = DMatrix::from_fn(3, 6, |_, _| rng.normal());
        assert_eq!(n.predict(&x).unwrap(), n.predict(&x).unwrap());
        let (_, cache) = n.forward(&x, Mode::Eval).unwrap();
        assert!(cache.masks.iter().all(|m| m.iter().all(|&v| v == 1.0)));
    }

    #[test]
    fn dropout_mask_statistics() {
        let mut rng = SimRng::new(4);
        let n = Mlp::new(&[1, 200, 1], Activation::Identity, Activation::Identity, 0.2, &mut rng).unwrap();
        let x = DMatrix::from_element(1, 100, 1.0);
        let (_, cache) = n.forward(&x, Mode::Train(&mut rng)).unwrap();
        let m = &cache.masks[0];
        let dropped = m.iter().filter(|&&v| v == 0.0).count() as f64 / m.len() as f64;
        assert!((dropped - 0.2).abs() < 0.01);
        assert!(m.iter().all(|&v| v == 0.0 || (v - 1.25).abs() < 1e-12));
    }

    #[test]
    fn first_adam_step_is_learning_rate() {
        let mut p = vec![0.5, -0.5];
        let mut opt = FlatAdam::new(2, AdamConfig::default());
        opt.step(&mut p, &[3.0, -0.01]);
        assert!((p[0] - (0.5 - 1e-3)).abs() < 1e-9);
        assert!((p[1] - (-0.5 + 1e-3)).abs() < 1e-6);
    }

    #[test]
    fn network_adam_matches_flat() {
        let mut rng = SimRng::new(5);
        let mut n = net(&mut rng, Activation::Identity);
        let before = n.clone();
        let g = Gradients { layers: n.layers.iter().map(|d| Dense { w: d.w.map(|_| 1.0), b: d.b.map(|_| -1.0) }).collect() };
        let mut opt = Adam::new(&n, AdamConfig::default());
        opt.step(&mut n, &g);
        for (a, b) in n.layers.iter().zip(&before.layers) {
            assert!((&a.w - &b.w).iter().all(|d| (d + 1e-3).abs() < 1e-9));
            assert!((&a.b - &b.b).iter().all(|d| (d - 1e-3).abs() < 1e-9));
        }
    }

    #[test]
    fn adam_fits_tiny_regression() {
        let mut rng = SimRng::new(6);
        let mut n = Mlp::new(&[2, 8, 1], Activation::Tanh, Activation::Identity, 0.0, &mut rng).unwrap();
        let x = DMatrix::from_fn(2, 64, |_, _| rng.uniform_range(-1.0, 1.0));
        let y = DMatrix::from_fn(1, 64, |_, j| 0.7 * x[(0, j)] - 0.3 * x[(1, j)]);
        let mut opt = Adam::new(&n, AdamConfig { lr: 1e-2, ..AdamConfig::default() });
        let mse = |n: &Mlp| (n.predict(&x).unwrap() - &y).norm_squared() / 64.0;
        let first = mse(&n);
        for _ in 0..500 {
            let (out, cache) = n.forward(&x, Mode::Eval).unwrap();
            let (g, _) = n.backward(&cache, &((out - &y) * (2.0 / 64.0)));
            opt.step(&mut n, &g);
        }
        assert!(mse(&n) < 0.01 * first, "{} -> {}", first, mse(&n));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = SimRng::new(7);
        let n = net(&mut rng, Activation::Sigmoid);
        let back: Mlp = serde_json::from_str(&serde_json::to_string(&n).unwrap()).unwrap();
        assert_eq!(back, n);
        back.validate().unwrap();
    }

    #[test]
    fn wrong_input_width_rejected() {
        let mut rng = SimRng::new(8);
        let n = net(&mut rng, Activation::Tanh);
        assert!(n.predict(&DMatrix::zeros(4, 1)).is_err());
    }
}
