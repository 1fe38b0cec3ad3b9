#![allow(dead_code)]

use std::sync::OnceLock;

use fddmimo_core::dataset::{generate, Dataset, ScenarioSpec};
use fddmimo_core::estimators::DescentConfig;
use fddmimo_core::experiments::sweep::EstimatorConfigs;
use fddmimo_core::gan::{feature_matrix, train, GanConfig, GanModel};

/// Small population plus a briefly trained generator, built once per test binary.
pub fn fixture() -> &'static (Dataset, GanModel) {
    static CELL: OnceLock<(Dataset, GanModel)> = OnceLock::new();
    CELL.get_or_init(|| {
        let ds = generate(&ScenarioSpec { user_count: 600, seed: 11, ..ScenarioSpec::default() }).unwrap();
        let data = feature_matrix(&ds.train_features().unwrap()).unwrap();
        let cfg = GanConfig { epochs: 600, batch: 64, seed: 5, ..GanConfig::default() };
        let model = train(&data, &cfg, Some(ds.scaler.clone())).unwrap();
        (ds, model)
    })
}

/// Cheap solver settings for plumbing tests.
pub fn quick_estimators() -> EstimatorConfigs {
    let mut e = EstimatorConfigs::default();
    e.up_gan = DescentConfig { restarts: 2, candidates: 16, max_iters: 60, ..e.up_gan };
    e.dl_phase = DescentConfig { restarts: 2, max_iters: 60, ..e.dl_phase };
    e.r2f2.up = DescentConfig { restarts: 2, candidates: 4, max_iters: 20, ..e.r2f2.up };
    e.r2f2.dl = e.dl_phase.clone();
    e
}

use std::f64::consts::TAU;

use fddmimo_core::channel::{PathParams, SystemConfig};
use fddmimo_core::linalg::{CVec, SimRng};
use nalgebra::DMatrix;

/// Random paths with gains in `[0.2, 1]`, delays within the default spread.
pub fn random_params(rng: &mut SimRng, l: usize) -> PathParams {
    PathParams {
        alpha: (0..l).map(|_| rng.uniform_range(0.2, 1.0)).collect(),
        tau: (0..l).map(|_| rng.uniform_range(0.0, 94.5e-9)).collect(),
        theta: (0..l).map(|_| rng.uniform_range(0.0, TAU)).collect(),
        phi_up: (0..l).map(|_| rng.uniform_range(0.0, TAU)).collect(),
        phi_dl: (0..l).map(|_| rng.uniform_range(0.0, TAU)).collect(),
    }
}

/// A user whose `(α, τ, θ)` is exactly `G(z₀)` for a random `z₀`.
pub fn planted_user(model: &GanModel, rng: &mut SimRng) -> PathParams {
    let d = model.latent_dim();
    let z0 = rng.randn(d);
    let v = model.generate(&DMatrix::from_column_slice(d, 1, &z0)).unwrap();
    let (alpha, tau, theta) = model.scaler.as_ref().unwrap().from_features(v.as_slice()).unwrap();
    let l = alpha.len();
    PathParams {
        alpha,
        tau,
        theta,
        phi_up: (0..l).map(|_| rng.uniform_range(0.0, TAU)).collect(),
        phi_dl: (0..l).map(|_| rng.uniform_range(0.0, TAU)).collect(),
    }
}

pub fn noiseless() -> SystemConfig {
    SystemConfig { sigma_n2: 0.0, ..SystemConfig::default() }
}

pub fn uplink_truth(x: &PathParams, cfg: &SystemConfig) -> Vec<CVec> {
    (1..=cfg.k).map(|k| fddmimo_core::channel::uplink_channel(x, cfg, k)).collect()
}

pub fn downlink_truth(x: &PathParams, cfg: &SystemConfig) -> Vec<CVec> {
    (1..=cfg.k).map(|k| fddmimo_core::channel::downlink_channel_full(x, cfg, k)).collect()
}
