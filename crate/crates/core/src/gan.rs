//! Mode-regularized GAN: generator `G`, discriminator `D` and encoder `E`.
//!
//! Each epoch takes three Adam steps on fresh minibatches: ascend `T_D` over
//! `D`, descend `T_G` over `G`, descend `T_E` over `E`, where
//!
//! ```text
//! T_D = E log D(x) + E log(1 − D(G(z)))
//! T_G = −E log D(G(z)) + E[λ1‖x − G(E(x))‖² + λ2 log D(G(E(x)))]
//! T_E = E[λ1‖x − G(E(x))‖² + λ2 log D(G(E(x)))]
//! ```
//!
//! `D` outputs are clamped to `[1e−7, 1 − 1e−7]` inside every logarithm.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::FeatureScaler;
use crate::error::{Error, Result};
use crate::linalg::SimRng;
use crate::nn::{Activation, Adam, AdamConfig, Cache, Gradients, Mlp, Mode};

const D_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Realism {
    /// Reconstructions are pushed toward high `D`, i.e. the term enters with
    /// weight `-lambda2`.
    #[default]
    Reward,
    /// The term enters with weight `+lambda2`.
    Penalty,
}

impl std::str::FromStr for Realism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reward" => Ok(Self::Reward),
            "penalty" => Ok(Self::Penalty),
            _ => Err(Error::Config(format!("unknown realism mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    /// Latent dimension.
    pub d: usize,
    /// Feature dimension.
    pub n: usize,
    pub g_hidden: Vec<usize>,
    pub e_hidden: Vec<usize>,
    pub d_hidden: Vec<usize>,
    pub batch: usize,
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Direction in which the `lambda2 * log D(G(E(x)))` term pushes reconstructions.
    #[serde(default)]
    pub realism: Realism,
    pub dropout: f64,
    pub leaky_slope: f64,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            d: 8,
            n: 15,
            g_hidden: vec![10, 12, 14],
            e_hidden: vec![14, 12, 10],
            d_hidden: vec![12, 8, 4, 2],
            batch: 256,
            epochs: 3000,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            lambda1: 1e-2,
            lambda2: 1e-2,
            realism: Realism::Reward,
            dropout: 0.2,
            leaky_slope: 0.2,
            seed: 1,
        }
    }
}

impl GanConfig {
    /// Signed weight of the `log D(G(E(x)))` term in the generator and encoder losses.
    pub fn realism_weight(&self) -> f64 {
        match self.realism {
            Realism::Reward => -self.lambda2,
            Realism::Penalty => self.lambda2,
        }
    }

    /// Full-scale schedule: minibatch 512, 20000 epochs.
    pub fn full_scale() -> Self {
        Self { batch: 512, epochs: 20_000, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d == 0 || self.n == 0 || self.d > self.n {
            return bad(format!("need 0 < d <= n, got d={} n={}", self.d, self.n));
        }
        if self.batch == 0 {
            return bad("batch must be >= 1".into());
        }
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return bad("lambda1 and lambda2 must be >= 0".into());
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("invalid Adam settings".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)".into());
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, ..AdamConfig::default() }
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    fn sizes(&self, input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
        let mut s = vec![input];
        s.extend_from_slice(hidden);
        s.push(output);
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub t_d: f64,
    pub t_g: f64,
    pub t_e: f64,
    pub d_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanModel {
    pub config: GanConfig,
    pub g: Mlp,
    pub d: Mlp,
    pub e: Mlp,
    pub scaler: Option<FeatureScaler>,
    pub history: Vec<EpochStats>,
}

fn log_clamped(y: f64) -> f64 {
    y.clamp(D_CLAMP, 1.0 - D_CLAMP).ln()
}

/// `d/dy log(clamp(y))`: zero where the clamp is active.
fn dlog_clamped(y: f64) -> f64 {
    if (D_CLAMP..=1.0 - D_CLAMP).contains(&y) {
        1.0 / y
    } else {
        0.0
    }
}

/// `d/dy log(1 − clamp(y))`.
fn dlog1m_clamped(y: f64) -> f64 {
    if (D_CLAMP..=1.0 - D_CLAMP).contains(&y) {
        -1.0 / (1.0 - y)
    } else {
        0.0
    }
}

fn run(net: &Mlp, x: &DMatrix<f64>, rng: &mut Option<&mut SimRng>) -> Result<(DMatrix<f64>, Cache)> {
    match rng {
        Some(r) => net.forward(x, Mode::Train(r)),
        None => net.forward(x, Mode::Eval),
    }
}

fn check_batch(x: &DMatrix<f64>) -> Result<usize> {
    if x.ncols() == 0 {
        return Err(Error::InvalidInput("empty minibatch".into()));
    }
    Ok(x.ncols())
}

/// `T_D`, the gradient of `−T_D` over `D`, and the batch accuracy of `D`.
pub fn d_step_grad(
    g: &Mlp,
    d: &Mlp,
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    mut rng: Option<&mut SimRng>,
) -> Result<(f64, Gradients, f64)> {
    let m = check_batch(x)? as f64;
    let mf = check_batch(z)? as f64;
    let (fake, _) = run(g, z, &mut rng)?;
    let (dr, cr) = run(d, x, &mut rng)?;
    let (df, cf) = run(d, &fake, &mut rng)?;
    let t_d = dr.iter().map(|&y| log_clamped(y)).sum::<f64>() / m
        + df.iter().map(|&y| log_clamped(1.0 - y)).sum::<f64>() / mf;
    let (mut grad, _) = d.backward(&cr, &dr.map(|y| -dlog_clamped(y) / m));
    let (gf, _) = d.backward(&cf, &df.map(|y| -dlog1m_clamped(y) / mf));
    grad.add_assign(&gf);
    let correct = dr.iter().filter(|&&y| y > 0.5).count() + df.iter().filter(|&&y| y < 0.5).count();
    Ok((t_d, grad, correct as f64 / (m + mf)))
}

/// Value and `∂/∂x̂` of the regularizer `λ1‖x − x̂‖² + λ2 log D(x̂)`, batch-mean.
fn regularizer(
    d: &Mlp,
    x: &DMatrix<f64>,
    recon: &DMatrix<f64>,
    l1: f64,
    l2: f64,
    rng: &mut Option<&mut SimRng>,
) -> Result<(f64, DMatrix<f64>)> {
    let m = x.ncols() as f64;
    let diff = recon - x;
    let (dy, cache) = run(d, recon, rng)?;
    let value = l1 * diff.norm_squared() / m + l2 * dy.iter().map(|&y| log_clamped(y)).sum::<f64>() / m;
    let (_, via_d) = d.backward(&cache, &dy.map(|y| l2 * dlog_clamped(y) / m));
    Ok((value, diff * (2.0 * l1 / m) + via_d))
}

/// `T_G` and its gradient over `G`. `l2` is the signed realism weight
/// (see [`GanConfig::realism_weight`]).
pub fn g_step_grad(
    g: &Mlp,
    d: &Mlp,
    e: &Mlp,
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    l1: f64,
    l2: f64,
    mut rng: Option<&mut SimRng>,
) -> Result<(f64, Gradients)> {
    let mz = check_batch(z)? as f64;
    check_batch(x)?;
    let (fake, cg) = run(g, z, &mut rng)?;
    let (df, cd) = run(d, &fake, &mut rng)?;
    let adv = -df.iter().map(|&y| log_clamped(y)).sum::<f64>() / mz;
    let (_, dfake) = d.backward(&cd, &df.map(|y| -dlog_clamped(y) / mz));
    let (mut grad, _) = g.backward(&cg, &dfake);

    let (code, _) = run(e, x, &mut rng)?;
    let (recon, cr) = run(g, &code, &mut rng)?;
    let (reg, drecon) = regularizer(d, x, &recon, l1, l2, &mut rng)?;
    let (gr, _) = g.backward(&cr, &drecon);
    grad.add_assign(&gr);
    Ok((adv + reg, grad))
}

/// `T_E` and its gradient over `E`, with `l2` signed as in [`g_step_grad`].
pub fn e_step_grad(
    g: &Mlp,
    d: &Mlp,
    e: &Mlp,
    x: &DMatrix<f64>,
    l1: f64,
    l2: f64,
    mut rng: Option<&mut SimRng>,
) -> Result<(f64, Gradients)> {
    check_batch(x)?;
    let (code, ce) = run(e, x, &mut rng)?;
    let (recon, cr) = run(g, &code, &mut rng)?;
    let (reg, drecon) = regularizer(d, x, &recon, l1, l2, &mut rng)?;
    let (_, dcode) = g.backward(&cr, &drecon);
    let (grad, _) = e.backward(&ce, &dcode);
    Ok((reg, grad))
}

/// Batch estimate of `T_D` with all networks in eval mode.
pub fn loss_d(g: &Mlp, d: &Mlp, x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<f64> {
    Ok(d_step_grad(g, d, x, z, None)?.0)
}

/// Batch estimate of `T_G` with all networks in eval mode.
pub fn loss_g(g: &Mlp, d: &Mlp, e: &Mlp, x: &DMatrix<f64>, z: &DMatrix<f64>, l1: f64, l2: f64) -> Result<f64> {
    Ok(g_step_grad(g, d, e, x, z, l1, l2, None)?.0)
}

/// Batch estimate of `T_E` with all networks in eval mode.
pub fn loss_e(g: &Mlp, d: &Mlp, e: &Mlp, x: &DMatrix<f64>, l1: f64, l2: f64) -> Result<f64> {
    Ok(e_step_grad(g, d, e, x, l1, l2, None)?.0)
}

/// Stacks feature rows into an `n × N` column matrix.
pub fn feature_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.first().map(Vec::len).ok_or_else(|| Error::InvalidInput("no training samples".into()))?;
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension("feature rows differ in length".into()));
    }
    Ok(DMatrix::from_fn(n, rows.len(), |i, j| rows[j][i]))
}

fn minibatch(data: &DMatrix<f64>, m: usize, rng: &mut SimRng) -> DMatrix<f64> {
    let cols: Vec<usize> = (0..m).map(|_| rng.below(data.ncols())).collect();
    data.select_columns(&cols)
}

fn latent(d: usize, m: usize, rng: &mut SimRng) -> DMatrix<f64> {
    DMatrix::from_fn(d, m, |_, _| rng.normal())
}

impl GanModel {
    /// Freshly initialized networks.
    pub fn new(cfg: &GanConfig, scaler: Option<FeatureScaler>) -> Result<Self> {
        cfg.validate()?;
        let root = SimRng::new(cfg.seed).child("gan");
        let hid = Activation::LeakyRelu(cfg.leaky_slope);
        let g = Mlp::new(&cfg.sizes(cfg.d, &cfg.g_hidden, cfg.n), hid, Activation::Tanh, cfg.dropout, &mut root.child("init-g"))?;
        let d = Mlp::new(&cfg.sizes(cfg.n, &cfg.d_hidden, 1), hid, Activation::Sigmoid, cfg.dropout, &mut root.child("init-d"))?;
        let e = Mlp::new(&cfg.sizes(cfg.n, &cfg.e_hidden, cfg.d), hid, Activation::Identity, cfg.dropout, &mut root.child("init-e"))?;
        Ok(Self { config: cfg.clone(), g, d, e, scaler, history: Vec::new() })
    }

    pub fn latent_dim(&self) -> usize {
        self.g.input_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.g.output_dim()
    }

    /// Eval-mode generator output, one column per latent column.
    pub fn generate(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.g.predict(z)
    }

    pub fn sample(&self, count: usize, rng: &mut SimRng) -> Result<DMatrix<f64>> {
        self.generate(&latent(self.latent_dim(), count, rng))
    }

    pub fn validate(&self) -> Result<()> {
        for net in [&self.g, &self.d, &self.e] {
            net.validate()?;
        }
        let (d, n) = (self.g.input_dim(), self.g.output_dim());
        if self.e.input_dim() != n || self.e.output_dim() != d || self.d.input_dim() != n || self.d.output_dim() != 1 {
            return Err(Error::Dimension("generator, encoder and discriminator shapes disagree".into()));
        }
        if let Some(s) = &self.scaler {
            if s.dim() != n {
                return Err(Error::Dimension(format!("scaler dimension {} vs generator output {n}", s.dim())));
            }
        }
        Ok(())
    }

    /// Writes the per-epoch history as CSV.
    pub fn write_history_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "T_D", "T_G", "T_E", "D_accuracy"])?;
        for h in &self.history {
            w.write_record([
                h.epoch.to_string(),
                h.t_d.to_string(),
                h.t_g.to_string(),
                h.t_e.to_string(),
                h.d_accuracy.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let ck = Checkpoint { format: CHECKPOINT_TAG.into(), config_hash: self.config.hash(), model: self.clone() };
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut out, &ck)?;
        out.flush()?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_reader(BufReader::new(File::open(path)?))
            .map_err(|e| Error::Parse { path: path.to_path_buf(), line: e.line(), msg: e.to_string() })?;
        let fail = |msg: String| Error::Parse { path: path.to_path_buf(), line: 1, msg };
        if ck.format != CHECKPOINT_TAG {
            return Err(fail(format!("unknown checkpoint format `{}`", ck.format)));
        }
        if ck.config_hash != ck.model.config.hash() {
            return Err(fail("config hash does not match stored config".into()));
        }
        ck.model.validate().map_err(|e| fail(e.to_string()))?;
        Ok(ck.model)
    }
}

const CHECKPOINT_TAG: &str = "fddmimo-gan-v1";

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    config_hash: String,
    model: GanModel,
}

/// Trains on the columns of `data` (features already scaled to `[−1, 1]`).
pub fn train(data: &DMatrix<f64>, cfg: &GanConfig, scaler: Option<FeatureScaler>) -> Result<GanModel> {
    train_with(data, cfg, scaler, |_| Ok(()))
}

/// As [`train`], calling `on_epoch` after every epoch (e.g. to write checkpoints).
pub fn train_with(
    data: &DMatrix<f64>,
    cfg: &GanConfig,
    scaler: Option<FeatureScaler>,
    mut on_epoch: impl FnMut(&GanModel) -> Result<()>,
) -> Result<GanModel> {
    if data.ncols() == 0 {
        return Err(Error::InvalidInput("training split is empty".into()));
    }
    if data.nrows() != cfg.n {
        return Err(Error::Dimension(format!("data has {} features, config expects {}", data.nrows(), cfg.n)));
    }
    let mut model = GanModel::new(cfg, scaler)?;
    let root = SimRng::new(cfg.seed).child("gan");
    let mut batches = root.child("batches");
    let mut drop = root.child("dropout");
    let mut opt_d = Adam::new(&model.d, cfg.adam());
    let mut opt_g = Adam::new(&model.g, cfg.adam());
    let mut opt_e = Adam::new(&model.e, cfg.adam());
    let m = cfg.batch;
    model.history.reserve(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let x = minibatch(data, m, &mut batches);
        let z = latent(cfg.d, m, &mut batches);
        let (t_d, gd, acc) = d_step_grad(&model.g, &model.d, &x, &z, Some(&mut drop))?;
        if !t_d.is_finite() || !gd.is_finite() {
            return Err(Error::Diverged { epoch, loss: "T_D" });
        }
        opt_d.step(&mut model.d, &gd);

        let x = minibatch(data, m, &mut batches);
        let z = latent(cfg.d, m, &mut batches);
        let (t_g, gg) = g_step_grad(&model.g, &model.d, &model.e, &x, &z, cfg.lambda1, cfg.realism_weight(), Some(&mut drop))?;
        if !t_g.is_finite() || !gg.is_finite() {
            return Err(Error::Diverged { epoch, loss: "T_G" });
        }
        opt_g.step(&mut model.g, &gg);

        let x = minibatch(data, m, &mut batches);
        let (t_e, ge) = e_step_grad(&model.g, &model.d, &model.e, &x, cfg.lambda1, cfg.realism_weight(), Some(&mut drop))?;
        if !t_e.is_finite() || !ge.is_finite() {
            return Err(Error::Diverged { epoch, loss: "T_E" });
        }
        opt_e.step(&mut model.e, &ge);

        model.history.push(EpochStats { epoch, t_d, t_g, t_e, d_accuracy: acc });
        if epoch % 500 == 0 {
            log::debug!("epoch {epoch}: T_D {t_d:.4} T_G {t_g:.4} T_E {t_e:.4} acc {acc:.3}");
        }
        on_epoch(&model)?;
    }
    Ok(model)
}

/// Equal-width histogram of one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: impl IntoIterator<Item = f64>, lo: f64, hi: f64, bins: usize) -> Self {
        let mut counts = vec![0; bins.max(1)];
        let w = (hi - lo) / counts.len() as f64;
        for v in values {
            let b = if w > 0.0 { ((v - lo) / w).floor() } else { 0.0 };
            let b = (b.max(0.0) as usize).min(counts.len() - 1);
            counts[b] += 1;
        }
        Self { lo, hi, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Fraction of real and generated samples `D` classifies correctly.
    pub d_accuracy: f64,
    /// Mean pairwise Euclidean distance among generated samples.
    pub mean_pairwise_distance: f64,
    /// Same statistic over real samples, for reference.
    pub real_pairwise_distance: f64,
    pub generated_histograms: Vec<Histogram>,
    pub real_histograms: Vec<Histogram>,
    pub samples: usize,
}

/// Mean Euclidean distance over all column pairs.
pub fn mean_pairwise_distance(x: &DMatrix<f64>) -> f64 {
    let n = x.ncols();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += (x.column(i) - x.column(j)).norm();
        }
    }
    total / (n * (n - 1) / 2) as f64
}

/// Eval-mode discriminator accuracy on real and generated columns.
pub fn d_accuracy(d: &Mlp, real: &DMatrix<f64>, fake: &DMatrix<f64>) -> Result<f64> {
    let dr = d.predict(real)?;
    let df = d.predict(fake)?;
    let correct = dr.iter().filter(|&&y| y > 0.5).count() + df.iter().filter(|&&y| y < 0.5).count();
    Ok(correct as f64 / (dr.len() + df.len()) as f64)
}

/// Mode-collapse and fit statistics on `samples` generated points versus held-out data.
pub fn diagnostics(model: &GanModel, real: &DMatrix<f64>, samples: usize, bins: usize, rng: &mut SimRng) -> Result<Diagnostics> {
    if real.ncols() == 0 || samples == 0 {
        return Err(Error::InvalidInput("diagnostics need samples".into()));
    }
    let fake = model.sample(samples, rng)?;
    let take: Vec<usize> = (0..samples.min(real.ncols())).collect();
    let real = real.select_columns(&take);
    let hist = |x: &DMatrix<f64>| {
        (0..x.nrows())
            .map(|i| Histogram::new(x.row(i).iter().copied(), -1.0, 1.0, bins))
            .collect::<Vec<_>>()
    };
    Ok(Diagnostics {
        d_accuracy: d_accuracy(&model.d, &real, &fake)?,
        mean_pairwise_distance: mean_pairwise_distance(&fake),
        real_pairwise_distance: mean_pairwise_distance(&real),
        generated_histograms: hist(&fake),
        real_histograms: hist(&real),
        samples,
    })
}
