//! Channel estimators: the GAN-prior uplink solver, downlink phase recovery,
//! and the LMMSE, downlink-LS, R2F2 and full-reciprocity baselines.

mod descent;
pub mod dl_ls;
pub mod dl_phase;
pub mod lmmse;
pub mod r2f2;
pub mod reciprocity;
pub mod up_gan;

use serde::{Deserialize, Serialize};

use crate::channel::{downlink_channel_full, uplink_channel, PathParams, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::CVec;

pub use descent::{minimize, Minimized, Objective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    FixedStep,
    Adam,
    /// Gradient descent with backtracking line search; monotone by construction.
    Backtracking,
    /// Damped Gauss-Newton on the residual vector; monotone by construction.
    /// `lr` is the initial damping.
    LevenbergMarquardt,
}

impl std::str::FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed_step" => Ok(Self::FixedStep),
            "adam" => Ok(Self::Adam),
            "backtracking" => Ok(Self::Backtracking),
            "levenberg_marquardt" => Ok(Self::LevenbergMarquardt),
            _ => Err(Error::Config(format!("unknown optimizer `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentConfig {
    pub optimizer: Optimizer,
    /// Step size (initial trial step for backtracking).
    pub lr: f64,
    pub max_iters: usize,
    /// Stop once the objective drops by less than this fraction over `window` iterations.
    pub epsilon: f64,
    pub window: usize,
    pub restarts: usize,
    /// Random points screened per restart; the best one starts the descent.
    pub candidates: usize,
    /// Step-size halvings allowed when the stopping rule fires.
    #[serde(default)]
    pub anneal: usize,
    pub seed: u64,
}

impl DescentConfig {
    /// Uplink latent-space solver defaults.
    pub fn up_gan() -> Self {
        Self { optimizer: Optimizer::Adam, lr: 1e-2, max_iters: 2000, epsilon: 0.01, window: 20, restarts: 5, candidates: 256, anneal: 0, seed: 0 }
    }

    /// Downlink phase solver defaults.
    pub fn dl_phase() -> Self {
        Self { optimizer: Optimizer::Backtracking, lr: 1.0, max_iters: 500, epsilon: 0.01, window: 20, restarts: 3, candidates: 1, anneal: 0, seed: 0 }
    }

    /// Coordinate-descent baseline defaults.
    pub fn r2f2() -> Self {
        Self { optimizer: Optimizer::Backtracking, lr: 1.0, max_iters: 300, epsilon: 0.01, window: 20, restarts: 10, candidates: 32, anneal: 0, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be > 0".into()));
        }
        if self.restarts == 0 || self.max_iters == 0 || self.window == 0 || self.candidates == 0 {
            return Err(Error::Config("restarts, candidates, max_iters and window must be >= 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("lr must be > 0".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self::up_gan()
    }
}

/// Which link the reconstructed channels in a report belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Link {
    Uplink,
    Downlink,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub alpha: Vec<f64>,
    pub tau: Vec<f64>,
    pub theta: Vec<f64>,
    pub phi_up: Option<Vec<f64>>,
    pub phi_dl: Option<Vec<f64>>,
    /// Downlink gains when re-estimated separately from the uplink.
    pub alpha_dl: Option<Vec<f64>>,
    pub link: Link,
    /// Subcarrier index of each entry of `channels`.
    pub subcarriers: Vec<usize>,
    /// Reconstructed channel per subcarrier (whole array).
    pub channels: Vec<CVec>,
    /// Objective per iteration of the chosen restart.
    pub trace: Vec<f64>,
    /// Best objective of every restart.
    pub restart_objectives: Vec<f64>,
    pub restart: usize,
    pub iterations: usize,
    pub seconds: f64,
    pub unidentifiable: bool,
}

impl EstimateReport {
    pub fn objective(&self) -> f64 {
        self.restart_objectives.get(self.restart).copied().unwrap_or(f64::NAN)
    }

    /// Path parameters implied by the report (phases absent from it are zero).
    pub fn params(&self) -> PathParams {
        let l = self.alpha.len();
        PathParams {
            alpha: self.alpha.clone(),
            tau: self.tau.clone(),
            theta: self.theta.clone(),
            phi_up: self.phi_up.clone().unwrap_or_else(|| vec![0.0; l]),
            phi_dl: self.phi_dl.clone().unwrap_or_else(|| vec![0.0; l]),
        }
    }
}

/// Uplink channels over all `K` subcarriers.
pub(crate) fn uplink_channels(x: &PathParams, cfg: &SystemConfig) -> (Vec<usize>, Vec<CVec>) {
    let ks = cfg.all_subcarriers();
    let hs = ks.iter().map(|&k| uplink_channel(x, cfg, k)).collect();
    (ks, hs)
}

/// Downlink channels over the whole array and all `K` subcarriers.
pub(crate) fn downlink_channels(x: &PathParams, cfg: &SystemConfig) -> (Vec<usize>, Vec<CVec>) {
    let ks = cfg.all_subcarriers();
    let hs = ks.iter().map(|&k| downlink_channel_full(x, cfg, k)).collect();
    (ks, hs)
}

/// Index of the smallest finite value.
pub(crate) fn argmin(values: &[f64]) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
}
