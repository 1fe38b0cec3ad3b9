//! Downlink reconstruction that assumes full reciprocity of the phases.

use serde::{Deserialize, Serialize};

use super::{downlink_channels, EstimateReport, Link};
use crate::channel::{PathParams, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::wrap_2pi;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseRule {
    /// `φ_dl = φ_up`.
    CopyPhase,
    /// `φ_dl = 2π f_dl τ`.
    DelayPhase,
}

/// Builds downlink channels from an uplink estimate without any downlink pilots.
pub fn full_reciprocity(est_up: &EstimateReport, mode: PhaseRule, cfg: &SystemConfig) -> Result<EstimateReport> {
    let phi_up = est_up
        .phi_up
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("uplink estimate carries no phases".into()))?;
    if est_up.alpha.len() != cfg.l {
        return Err(Error::Dimension(format!("estimate has {} paths, expected {}", est_up.alpha.len(), cfg.l)));
    }
    let phi_dl: Vec<f64> = match mode {
        PhaseRule::CopyPhase => phi_up.clone(),
        PhaseRule::DelayPhase => est_up
            .tau
            .iter()
            .map(|t| wrap_2pi(std::f64::consts::TAU * cfg.f_dl_hz * t))
            .collect(),
    };
    let params = PathParams {
        alpha: est_up.alpha.clone(),
        tau: est_up.tau.clone(),
        theta: est_up.theta.clone(),
        phi_up: phi_up.clone(),
        phi_dl: phi_dl.clone(),
    };
    let (subcarriers, channels) = downlink_channels(&params, cfg);
    Ok(EstimateReport {
        phi_dl: Some(phi_dl),
        link: Link::Downlink,
        subcarriers,
        channels,
        seconds: 0.0,
        unidentifiable: false,
        ..est_up.clone()
    })
}
