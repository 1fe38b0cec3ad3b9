//! Downlink least squares on the complex path coefficients `ρ_l = α_l e^{jφ_l}`.

use std::time::Instant;

use super::dl_phase::RANK_TOL;
use super::{downlink_channels, EstimateReport, Link};
use crate::channel::{build_b, DownlinkObservation, PathParams, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{lstsq, rank, wrap_2pi};

/// `ρ̂ = lstsq(𝓑̃, y)` where `𝓑̃` is built with unit gains.
pub fn dl_ls(obs: &DownlinkObservation, tau: &[f64], theta: &[f64], cfg: &SystemConfig) -> Result<EstimateReport> {
    if tau.len() != cfg.l || theta.len() != cfg.l {
        return Err(Error::Dimension(format!("expected {} paths", cfg.l)));
    }
    let start = Instant::now();
    let b = build_b(&vec![1.0; cfg.l], tau, theta, cfg, &obs.pilots)?;
    let unidentifiable = rank(&b, RANK_TOL) < cfg.l;
    let rho = lstsq(&b, &obs.y)?;
    let residual = (&obs.y - &b * &rho).norm_squared();
    let alpha: Vec<f64> = rho.iter().map(|r| r.norm()).collect();
    let phi_dl: Vec<f64> = rho.iter().map(|r| wrap_2pi(r.arg())).collect();
    let params = PathParams {
        alpha: alpha.clone(),
        tau: tau.to_vec(),
        theta: theta.to_vec(),
        phi_up: vec![0.0; cfg.l],
        phi_dl: phi_dl.clone(),
    };
    let (subcarriers, channels) = downlink_channels(&params, cfg);
    Ok(EstimateReport {
        alpha: alpha.clone(),
        tau: params.tau,
        theta: params.theta,
        phi_up: None,
        phi_dl: Some(phi_dl),
        alpha_dl: Some(alpha),
        link: Link::Downlink,
        subcarriers,
        channels,
        trace: vec![residual],
        restart_objectives: vec![residual],
        restart: 0,
        iterations: 1,
        seconds: start.elapsed().as_secs_f64(),
        unidentifiable,
    })
}
