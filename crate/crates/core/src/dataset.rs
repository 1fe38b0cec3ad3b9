//! Synthetic multipath populations, feature scaling, and dataset files.
//!
//! The generator is a stand-in for a ray-traced indoor scene: a rectangular
//! room with the BS array on the ceiling, users gathered around a few
//! hotspots, and paths formed by the image method (line of sight plus wall
//! and floor reflections up to second order). The `L` earliest arrivals are
//! kept. Because every user's `(α, τ, θ)` is a smooth function of position,
//! the population lives near a low-dimensional, multi-modal manifold.

use std::f64::consts::{PI, TAU};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{PathParams, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::linalg::{wrap_2pi, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// Paths kept per user.
    pub l: usize,
    pub user_count: usize,
    /// Upper bound on any path delay, seconds.
    pub delay_spread_max: f64,
    /// Number of user hotspots.
    pub cluster_count: usize,
    /// Standard deviation of user positions around a hotspot, meters.
    pub cluster_radius_m: f64,
    /// Per-path angular jitter (diffuse scattering), radians.
    pub angle_spread: f64,
    /// Exponential gain decay constant versus excess delay, seconds.
    pub gain_decay_s: f64,
    /// Mean relative deviation of downlink path gains from uplink gains.
    pub alpha_dl_rel_err: f64,
    /// Room extent (x, y, z), meters.
    pub room_m: [f64; 3],
    /// BS array reference position; the array axis is x.
    pub bs_position_m: [f64; 3],
    pub ue_height_m: f64,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            l: 5,
            user_count: 20_000,
            delay_spread_max: 94.5e-9,
            cluster_count: 4,
            cluster_radius_m: 0.6,
            angle_spread: 0.002,
            gain_decay_s: 40e-9,
            alpha_dl_rel_err: 0.008,
            room_m: [10.0, 10.0, 2.5],
            bs_position_m: [5.0, 5.0, 2.5],
            ue_height_m: 1.0,
            carrier_hz: 2.4e9,
            bandwidth_hz: 20e6,
            seed: 1,
        }
    }
}

/// Maximum number of distinct image paths (LOS, 5 first order, 20 second order).
const MAX_PATHS: usize = 26;

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.l == 0 || self.l > MAX_PATHS {
            return bad("l must lie in 1..=26");
        }
        if self.user_count == 0 || self.cluster_count == 0 {
            return bad("user_count and cluster_count must be positive");
        }
        if !(self.delay_spread_max > 0.0) || !(self.gain_decay_s > 0.0) {
            return bad("delay_spread_max and gain_decay_s must be > 0");
        }
        if !(self.cluster_radius_m >= 0.0) || !(self.angle_spread >= 0.0) {
            return bad("spreads must be >= 0");
        }
        if !(self.alpha_dl_rel_err >= 0.0) {
            return bad("alpha_dl_rel_err must be >= 0");
        }
        if self.room_m.iter().any(|&d| !(d > 0.0)) {
            return bad("room dimensions must be > 0");
        }
        if !(self.ue_height_m > 0.0 && self.ue_height_m < self.room_m[2]) {
            return bad("ue height must lie strictly inside the room");
        }
        if !(self.carrier_hz > 0.0 && self.bandwidth_hz > 0.0) {
            return bad("carrier and bandwidth must be > 0");
        }
        Ok(())
    }

    pub fn t_s(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    /// Image sources of `ue` reflected in the floor and the four walls, up to
    /// second order, paired with their reflection count.
    fn images(&self, ue: [f64; 3]) -> Vec<[f64; 3]> {
        let [w, d, _] = self.room_m;
        // (axis, plane coordinate)
        let planes = [(2usize, 0.0), (0, 0.0), (0, w), (1, 0.0), (1, d)];
        let reflect = |p: [f64; 3], (axis, c): (usize, f64)| {
            let mut q = p;
            q[axis] = 2.0 * c - p[axis];
            q
        };
        let mut out = vec![ue];
        for (i, &pl) in planes.iter().enumerate() {
            let first = reflect(ue, pl);
            out.push(first);
            for (j, &pl2) in planes.iter().enumerate() {
                if i != j {
                    out.push(reflect(first, pl2));
                }
            }
        }
        out
    }

    /// Noise-free path parameters for a user at `(x, y)`; phases left zero.
    pub fn paths_at(&self, x: f64, y: f64, rng: &mut SimRng) -> PathParams {
        let bs = self.bs_position_m;
        let lambda = SPEED_OF_LIGHT / self.carrier_hz;
        let mut cand: Vec<(f64, f64)> = self
            .images([x, y, self.ue_height_m])
            .into_iter()
            .map(|img| {
                let v = [img[0] - bs[0], img[1] - bs[1], img[2] - bs[2]];
                let dist = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                // sin θ is the direction cosine along the array axis; this
                // branch keeps θ in [π/2, 3π/2] without wrap-around
                let theta = PI - (v[0] / dist).clamp(-1.0, 1.0).asin();
                (dist, theta)
            })
            .collect();
        cand.sort_by(|a, b| a.0.total_cmp(&b.0));
        cand.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9);
        cand.truncate(self.l);
        while cand.len() < self.l {
            // only reachable in degenerate geometries
            let last = *cand.last().unwrap();
            cand.push((last.0 * 1.01, last.1));
        }

        let tau0 = cand[0].0 / SPEED_OF_LIGHT;
        let mut params = PathParams {
            alpha: Vec::with_capacity(self.l),
            tau: Vec::with_capacity(self.l),
            theta: Vec::with_capacity(self.l),
            phi_up: vec![0.0; self.l],
            phi_dl: vec![0.0; self.l],
        };
        for (dist, theta) in cand {
            let tau = (dist / SPEED_OF_LIGHT).min(self.delay_spread_max);
            let alpha = lambda / (4.0 * PI * dist) * (-(tau - tau0) / self.gain_decay_s).exp();
            params.alpha.push(alpha);
            params.tau.push(tau);
            params
                .theta
                .push(wrap_2pi(theta + self.angle_spread * rng.normal()));
        }
        params.sort_by_delay();
        params
    }

    fn hotspots(&self, rng: &mut SimRng) -> Vec<(f64, f64)> {
        let margin = 1.0f64.min(0.25 * self.room_m[0].min(self.room_m[1]));
        (0..self.cluster_count)
            .map(|_| {
                (
                    rng.uniform_range(margin, self.room_m[0] - margin),
                    rng.uniform_range(margin, self.room_m[1] - margin),
                )
            })
            .collect()
    }
}

/// Downlink gains `α·(1 + ε)` with `ε ~ N(0, σ²)`, `σ` chosen so `E|ε| = rel_err`.
pub fn perturb_gains(alpha: &[f64], rel_err: f64, rng: &mut SimRng) -> Vec<f64> {
    let sigma = rel_err * (PI / 2.0).sqrt();
    alpha
        .iter()
        .map(|a| {
            if sigma == 0.0 {
                *a
            } else {
                (a * (1.0 + sigma * rng.normal())).max(0.0)
            }
        })
        .collect()
}

/// Affine map `scaled = (value − offset) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockMap {
    pub offset: f64,
    pub scale: f64,
}

impl BlockMap {
    /// Min-max map sending `[lo, hi]` onto `[−1, 1]`.
    pub fn fit(lo: f64, hi: f64) -> Self {
        let scale = 0.5 * (hi - lo);
        Self {
            offset: 0.5 * (hi + lo),
            scale: if scale > 0.0 { scale } else { 1.0 },
        }
    }

    pub fn forward(&self, v: f64) -> f64 {
        (v - self.offset) / self.scale
    }

    pub fn inverse(&self, s: f64) -> f64 {
        self.offset + self.scale * s
    }
}

/// Per-block feature scaling of `log10 α`, `τ/T_s`, `θ` and `φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub l: usize,
    pub t_s: f64,
    pub log_alpha: BlockMap,
    pub tau: BlockMap,
    pub theta: BlockMap,
    pub phi: BlockMap,
}

impl FeatureScaler {
    pub fn fit<'a>(records: impl IntoIterator<Item = &'a PathParams>, t_s: f64) -> Result<Self> {
        let mut l = None;
        let mut ext = [(f64::INFINITY, f64::NEG_INFINITY); 3];
        for r in records {
            if let Some(n) = l {
                if r.num_paths() != n {
                    return Err(Error::InvalidInput("records differ in path count".into()));
                }
            }
            l = Some(r.num_paths());
            for &a in &r.alpha {
                if !(a > 0.0) {
                    return Err(Error::InvalidInput("path gains must be > 0".into()));
                }
                let v = a.log10();
                ext[0] = (ext[0].0.min(v), ext[0].1.max(v));
            }
            for &t in &r.tau {
                let v = t / t_s;
                ext[1] = (ext[1].0.min(v), ext[1].1.max(v));
            }
            for &t in &r.theta {
                ext[2] = (ext[2].0.min(t), ext[2].1.max(t));
            }
        }
        let l = l.ok_or_else(|| Error::InvalidInput("cannot fit a scaler on no records".into()))?;
        Ok(Self {
            l,
            t_s,
            log_alpha: BlockMap::fit(ext[0].0, ext[0].1),
            tau: BlockMap::fit(ext[1].0, ext[1].1),
            theta: BlockMap::fit(ext[2].0, ext[2].1),
            phi: BlockMap::fit(0.0, TAU),
        })
    }

    /// Feature dimension `3L` seen by the GAN.
    pub fn dim(&self) -> usize {
        3 * self.l
    }

    /// `[α̃, τ̃, θ]` scaled into the training box.
    pub fn to_features(&self, x: &PathParams) -> Result<Vec<f64>> {
        if x.num_paths() != self.l {
            return Err(Error::Dimension(format!(
                "record has {} paths, scaler expects {}",
                x.num_paths(),
                self.l
            )));
        }
        if x.alpha.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::InvalidInput("path gains must be > 0".into()));
        }
        let mut v = Vec::with_capacity(3 * self.l);
        v.extend(x.alpha.iter().map(|a| self.log_alpha.forward(a.log10())));
        v.extend(x.tau.iter().map(|t| self.tau.forward(t / self.t_s)));
        v.extend(x.theta.iter().map(|t| self.theta.forward(*t)));
        Ok(v)
    }

    /// Inverse of [`to_features`](Self::to_features): `(α, τ, θ)`.
    pub fn from_features(&self, v: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let l = self.l;
        if v.len() != 3 * l {
            return Err(Error::Dimension(format!("feature vector has {} entries, expected {}", v.len(), 3 * l)));
        }
        let alpha = v[..l].iter().map(|s| 10f64.powf(self.log_alpha.inverse(*s))).collect();
        let tau = v[l..2 * l].iter().map(|s| self.tau.inverse(*s) * self.t_s).collect();
        let theta = v[2 * l..].iter().map(|s| self.theta.inverse(*s)).collect();
        Ok((alpha, tau, theta))
    }

    /// Diagonal Jacobian `d(α, τ, θ)/d(features)` evaluated at `v`.
    pub fn jacobian_diag(&self, v: &[f64]) -> Vec<f64> {
        let l = self.l;
        let ln10 = std::f64::consts::LN_10;
        v.iter()
            .enumerate()
            .map(|(i, s)| match i / l {
                0 => 10f64.powf(self.log_alpha.inverse(*s)) * ln10 * self.log_alpha.scale,
                1 => self.tau.scale * self.t_s,
                _ => self.theta.scale,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub spec: Option<ScenarioSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<PathParams>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub scaler: FeatureScaler,
    pub provenance: Provenance,
}

/// Fraction of records assigned to the training split.
pub const TRAIN_FRACTION: f64 = 0.8;

impl Dataset {
    /// Shuffles, splits 80/20, and fits the scaler on the training split.
    pub fn from_records(records: Vec<PathParams>, t_s: f64, seed: u64, provenance: Provenance) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidInput("dataset has no records".into()));
        }
        for r in &records {
            r.validate()?;
        }
        let mut idx: Vec<usize> = (0..records.len()).collect();
        SimRng::new(seed).child("split").shuffle(&mut idx);
        let n_train = ((records.len() as f64 * TRAIN_FRACTION).round() as usize).clamp(1, records.len());
        let mut train = idx[..n_train].to_vec();
        let mut test = idx[n_train..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        let scaler = FeatureScaler::fit(train.iter().map(|&i| &records[i]), t_s)?;
        Ok(Self { records, train, test, scaler, provenance })
    }

    pub fn train_records(&self) -> impl Iterator<Item = &PathParams> {
        self.train.iter().map(|&i| &self.records[i])
    }

    pub fn test_records(&self) -> impl Iterator<Item = &PathParams> {
        self.test.iter().map(|&i| &self.records[i])
    }

    /// Scaled training features, one row per record.
    pub fn train_features(&self) -> Result<Vec<Vec<f64>>> {
        self.train_records().map(|r| self.scaler.to_features(r)).collect()
    }
}

/// Draws `spec.user_count` users around the hotspots and builds a dataset.
pub fn generate(spec: &ScenarioSpec) -> Result<Dataset> {
    spec.validate()?;
    let root = SimRng::new(spec.seed);
    let mut layout = root.child("hotspots");
    let centers = spec.hotspots(&mut layout);
    let mut rng = root.child("users");
    let [w, d, _] = spec.room_m;
    let records = (0..spec.user_count)
        .map(|_| {
            let (cx, cy) = centers[rng.below(centers.len())];
            let x = (cx + spec.cluster_radius_m * rng.normal()).clamp(0.2, w - 0.2);
            let y = (cy + spec.cluster_radius_m * rng.normal()).clamp(0.2, d - 0.2);
            let mut p = spec.paths_at(x, y, &mut rng);
            p.phi_up = (0..spec.l).map(|_| rng.uniform_range(0.0, TAU)).collect();
            p.phi_dl = (0..spec.l).map(|_| rng.uniform_range(0.0, TAU)).collect();
            p
        })
        .collect();
    Dataset::from_records(
        records,
        spec.t_s(),
        spec.seed,
        Provenance { source: "synthetic".into(), spec: Some(spec.clone()) },
    )
}

/// Sidecar metadata written next to the JSONL records.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetMeta {
    format: String,
    records: usize,
    train: Vec<usize>,
    test: Vec<usize>,
    scaler: FeatureScaler,
    provenance: Provenance,
}

const FORMAT_TAG: &str = "fddmimo-dataset-v1";

/// Path of the metadata sidecar for a dataset file: `foo.jsonl` → `foo.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

/// Writes one JSON record per line plus the metadata sidecar.
pub fn save(ds: &Dataset, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for r in &ds.records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    let meta = DatasetMeta {
        format: FORMAT_TAG.into(),
        records: ds.records.len(),
        train: ds.train.clone(),
        test: ds.test.clone(),
        scaler: ds.scaler.clone(),
        provenance: ds.provenance.clone(),
    };
    let mut side = BufWriter::new(File::create(sidecar_path(path))?);
    serde_json::to_writer_pretty(&mut side, &meta)?;
    side.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Dataset> {
    let side = sidecar_path(path);
    let meta: DatasetMeta = serde_json::from_reader(BufReader::new(File::open(&side)?))
        .map_err(|e| Error::Parse { path: side.clone(), line: e.line(), msg: e.to_string() })?;
    if meta.format != FORMAT_TAG {
        return Err(Error::Parse { path: side, line: 1, msg: format!("unknown format `{}`", meta.format) });
    }
    let mut records = Vec::with_capacity(meta.records);
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PathParams = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { path: path.to_path_buf(), line: i + 1, msg: e.to_string() })?;
        rec.validate()
            .map_err(|e| Error::Parse { path: path.to_path_buf(), line: i + 1, msg: e.to_string() })?;
        records.push(rec);
    }
    if records.len() != meta.records {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: records.len(),
            msg: format!("expected {} records, found {}", meta.records, records.len()),
        });
    }
    if meta.train.iter().chain(&meta.test).any(|&i| i >= records.len()) {
        return Err(Error::Parse { path: side, line: 1, msg: "split index out of range".into() });
    }
    Ok(Dataset {
        records,
        train: meta.train,
        test: meta.test,
        scaler: meta.scaler,
        provenance: meta.provenance,
    })
}

/// Imports an external parameter table with columns `alpha_1..L`, `tau_1..L`,
/// `theta_1..L`, `phi_up_1..L`, `phi_dl_1..L` (any column order).
pub fn import_csv(path: &Path, t_s: f64, seed: u64) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let blocks = ["alpha", "tau", "theta", "phi_up", "phi_dl"];
    let l = headers
        .iter()
        .filter_map(|h| h.strip_prefix("alpha_").and_then(|n| n.parse::<usize>().ok()))
        .max()
        .ok_or_else(|| Error::Parse { path: path.to_path_buf(), line: 1, msg: "no alpha_<n> columns".into() })?;
    let mut cols = vec![vec![0usize; l]; blocks.len()];
    for (b, name) in blocks.iter().enumerate() {
        for i in 0..l {
            let key = format!("{name}_{}", i + 1);
            cols[b][i] = headers
                .iter()
                .position(|h| h == key)
                .ok_or_else(|| Error::Parse { path: path.to_path_buf(), line: 1, msg: format!("missing column `{key}`") })?;
        }
    }
    let mut records = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        let get = |b: usize| -> Result<Vec<f64>> {
            cols[b]
                .iter()
                .map(|&c| {
                    rec.get(c)
                        .and_then(|s| s.trim().parse::<f64>().ok())
                        .ok_or_else(|| Error::Parse { path: path.to_path_buf(), line, msg: format!("bad value in column {}", c + 1) })
                })
                .collect()
        };
        let mut p = PathParams { alpha: get(0)?, tau: get(1)?, theta: get(2)?, phi_up: get(3)?, phi_dl: get(4)? };
        p.sort_by_delay();
        p.validate().map_err(|e| Error::Parse { path: path.to_path_buf(), line, msg: e.to_string() })?;
        records.push(p);
    }
    Dataset::from_records(
        records,
        t_s,
        seed,
        Provenance { source: format!("csv:{}", path.display()), spec: None },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> ScenarioSpec {
        ScenarioSpec { user_count: 1000, ..ScenarioSpec::default() }
    }

    #[test]
    fn generate_sorted_records() {
        let ds = generate(&small_spec()).unwrap();
        assert_eq!(ds.records.len(), 1000);
        for r in &ds.records {
            assert_eq!(r.num_paths(), 5);
            assert!(r.tau.windows(2).all(|w| w[0] <= w[1]));
            assert!(r.tau.iter().all(|&t| t <= 94.5e-9));
            assert!(r.alpha.iter().all(|&a| a > 0.0));
            assert!(r.theta.iter().all(|&t| (0.0..TAU).contains(&t)));
        }
    }

    #[test]
    fn split_is_a_partition() {
        let ds = generate(&small_spec()).unwrap();
        assert_eq!(ds.train.len(), 800);
        let mut all: Vec<usize> = ds.train.iter().chain(&ds.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate(&small_spec()).unwrap(), generate(&small_spec()).unwrap());
    }

    #[test]
    fn invalid_spreads_rejected() {
        let s = ScenarioSpec { angle_spread: -0.1, ..small_spec() };
        assert!(generate(&s).is_err());
        let s = ScenarioSpec { delay_spread_max: 0.0, ..small_spec() };
        assert!(generate(&s).is_err());
        let s = ScenarioSpec { cluster_radius_m: f64::NAN, ..small_spec() };
        assert!(generate(&s).is_err());
    }

    #[test]
    fn zero_perturbation_keeps_gains() {
        let a = vec![1e-3, 2e-4, 5e-5];
        assert_eq!(perturb_gains(&a, 0.0, &mut SimRng::new(1)), a);
    }

    #[test]
    fn default_perturbation_mean_matches() {
        let mut rng = SimRng::new(3);
        let a = vec![1.0; 20_000];
        let p = perturb_gains(&a, ScenarioSpec::default().alpha_dl_rel_err, &mut rng);
        let mean = p.iter().map(|v| (v - 1.0).abs()).sum::<f64>() / p.len() as f64;
        assert!((mean / 0.008 - 1.0).abs() < 0.2, "mean rel err {mean}");
    }

    #[test]
    fn features_round_trip_and_box() {
        let ds = generate(&small_spec()).unwrap();
        let feats = ds.train_features().unwrap();
        let (mut lo, mut hi) = ([f64::INFINITY; 3], [f64::NEG_INFINITY; 3]);
        for f in &feats {
            assert_eq!(f.len(), 15);
            for (i, v) in f.iter().enumerate() {
                assert!(v.abs() <= 1.0 + 1e-9);
                lo[i / 5] = lo[i / 5].min(*v);
                hi[i / 5] = hi[i / 5].max(*v);
            }
        }
        for b in 0..3 {
            assert!((lo[b] + 1.0).abs() < 1e-12 && (hi[b] - 1.0).abs() < 1e-12, "block {b}: {lo:?} {hi:?}");
        }
        let r = &ds.records[ds.test[0]];
        let f = ds.scaler.to_features(r).unwrap();
        let (a, t, th) = ds.scaler.from_features(&f).unwrap();
        for i in 0..5 {
            assert!((a[i] / r.alpha[i] - 1.0).abs() < 1e-12);
            assert!((t[i] - r.tau[i]).abs() < 1e-12 * r.tau[i].max(1e-9));
            assert!((th[i] - r.theta[i]).abs() < 1e-12);
        }
        let f2 = ds.scaler.to_features(&PathParams { alpha: a, tau: t, theta: th, ..r.clone() }).unwrap();
        assert!(f.iter().zip(&f2).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn unit_gains_map_to_log_zero() {
        let sc = FeatureScaler {
            l: 2,
            t_s: 5e-8,
            log_alpha: BlockMap { offset: 0.0, scale: 1.0 },
            tau: BlockMap::fit(0.0, 2.0),
            theta: BlockMap::fit(0.0, TAU),
            phi: BlockMap::fit(0.0, TAU),
        };
        let x = PathParams { alpha: vec![1.0, 1.0], tau: vec![0.0, 1e-8], theta: vec![1.0, 2.0], phi_up: vec![0.0; 2], phi_dl: vec![0.0; 2] };
        let f = sc.to_features(&x).unwrap();
        assert_eq!(&f[..2], &[0.0, 0.0]);
        let bad = PathParams { alpha: vec![0.0, 1.0], ..x };
        assert!(sc.to_features(&bad).is_err());
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        let ds = generate(&ScenarioSpec { user_count: 200, ..ScenarioSpec::default() }).unwrap();
        let f = ds.scaler.to_features(&ds.records[0]).unwrap();
        let jac = ds.scaler.jacobian_diag(&f);
        let flat = |v: &[f64]| {
            let (a, t, th) = ds.scaler.from_features(v).unwrap();
            [a, t, th].concat()
        };
        for i in 0..f.len() {
            let h = 1e-6;
            let mut p = f.clone();
            let mut m = f.clone();
            p[i] += h;
            m[i] -= h;
            let fd = (flat(&p)[i] - flat(&m)[i]) / (2.0 * h);
            assert!((fd - jac[i]).abs() <= 1e-6 * jac[i].abs());
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.jsonl");
        let ds = generate(&ScenarioSpec { user_count: 50, ..ScenarioSpec::default() }).unwrap();
        save(&ds, &path).unwrap();
        assert_eq!(load(&path).unwrap(), ds);
    }

    #[test]
    fn load_missing_field_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.jsonl");
        let ds = generate(&ScenarioSpec { user_count: 3, ..ScenarioSpec::default() }).unwrap();
        save(&ds, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[1] = r#"{"alpha":[1.0],"tau":[0.0],"theta":[0.0],"phi_up":[0.0]}"#.into();
        std::fs::write(&path, lines.join("\n")).unwrap();
        match load(&path) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("phi_dl"), "{msg}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn import_table_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.csv");
        // second row has its delays out of order; import sorts them
        let text = "\
alpha_1,alpha_2,tau_1,tau_2,theta_1,theta_2,phi_up_1,phi_up_2,phi_dl_1,phi_dl_2
1e-4,5e-5,1e-8,3e-8,2.0,2.5,0.1,0.2,1.1,1.2
2e-4,6e-5,4e-8,2e-8,3.0,3.5,0.3,0.4,1.3,1.4
";
        std::fs::write(&path, text).unwrap();
        let ds = import_csv(&path, 5e-8, 0).unwrap();
        assert_eq!(ds.records.len(), 2);
        assert_eq!(ds.records[0].alpha, vec![1e-4, 5e-5]);
        assert_eq!(ds.records[1].tau, vec![2e-8, 4e-8]);
        assert_eq!(ds.records[1].alpha, vec![6e-5, 2e-4]);
        assert_eq!(ds.records[1].theta, vec![3.5, 3.0]);
        assert_eq!(ds.records[1].phi_dl, vec![1.4, 1.3]);

        std::fs::write(&path, "alpha_1,tau_1,theta_1,phi_up_1\n1,0,0,0\n").unwrap();
        assert!(matches!(import_csv(&path, 5e-8, 0), Err(Error::Parse { .. })));
    }
}
