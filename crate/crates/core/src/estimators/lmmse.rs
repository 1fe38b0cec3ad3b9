//! Per-subcarrier Bayesian LMMSE uplink estimation with a sample-covariance prior.

use std::time::Instant;

use super::{EstimateReport, Link};
use crate::channel::{uplink_channel, PathParams, SystemConfig, UplinkObservation};
use crate::error::{Error, Result};
use crate::linalg::{lstsq, CMat, CVec, C64};

/// Diagonal loading relative to the mean eigenvalue of each covariance.
pub const SHRINKAGE: f64 = 1e-3;

/// Channel covariance `R_h` for each uplink training subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct LmmsePrior {
    pub k_up: Vec<usize>,
    pub covariances: Vec<CMat>,
}

impl LmmsePrior {
    /// Sample covariance of uplink channels over `records`, plus
    /// `SHRINKAGE·trace/M` on the diagonal.
    pub fn fit<'a>(records: impl IntoIterator<Item = &'a PathParams>, cfg: &SystemConfig) -> Result<Self> {
        let m = cfg.m;
        let mut acc: Vec<CMat> = cfg.k_up.iter().map(|_| CMat::zeros(m, m)).collect();
        let mut count = 0usize;
        for x in records {
            for (r, &k) in acc.iter_mut().zip(&cfg.k_up) {
                let h = uplink_channel(x, cfg, k);
                r.gerc(C64::new(1.0, 0.0), &h, &h, C64::new(1.0, 0.0));
            }
            count += 1;
        }
        if count == 0 {
            return Err(Error::InvalidInput("no records for covariance estimate".into()));
        }
        let covariances = acc
            .into_iter()
            .map(|mut r| {
                r /= C64::new(count as f64, 0.0);
                let load = SHRINKAGE * r.trace().re / m as f64;
                for i in 0..m {
                    r[(i, i)] += load;
                }
                r
            })
            .collect();
        Ok(Self { k_up: cfg.k_up.clone(), covariances })
    }
}

/// `ĥ_k = conj(s_k)·R_h·(|s_k|² R_h + σ² I)⁻¹ y_k` on every observed subcarrier.
pub fn up_lmmse(obs: &UplinkObservation, prior: &LmmsePrior, cfg: &SystemConfig) -> Result<EstimateReport> {
    let start = Instant::now();
    if prior.k_up != obs.k_up {
        return Err(Error::Dimension("prior and observation cover different subcarriers".into()));
    }
    let m = obs.m;
    let mut channels = Vec::with_capacity(obs.k_up.len());
    for (i, r) in prior.covariances.iter().enumerate() {
        if r.shape() != (m, m) {
            return Err(Error::Dimension("covariance does not match array size".into()));
        }
        let herm_err = (r - r.adjoint()).norm();
        if herm_err > 1e-9 * r.norm().max(1e-300) {
            return Err(Error::InvalidInput("covariance is not Hermitian".into()));
        }
        let s = obs.pilots[i];
        let y = obs.block(i);
        let mut a = r * C64::new(s.norm_sqr(), 0.0);
        for d in 0..m {
            a[(d, d)] += cfg.sigma_n2;
        }
        let w: CVec = match a.clone().cholesky() {
            Some(ch) => ch.solve(&y),
            None => lstsq(&a, &y)?,
        };
        channels.push(r * w * s.conj());
    }
    Ok(EstimateReport {
        alpha: Vec::new(),
        tau: Vec::new(),
        theta: Vec::new(),
        phi_up: None,
        phi_dl: None,
        alpha_dl: None,
        link: Link::Uplink,
        subcarriers: obs.k_up.clone(),
        channels,
        trace: Vec::new(),
        restart_objectives: vec![0.0],
        restart: 0,
        iterations: 0,
        seconds: start.elapsed().as_secs_f64(),
        unidentifiable: false,
    })
}
