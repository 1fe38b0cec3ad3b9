//! Downlink phase recovery with `(α, τ, θ)` carried over from the uplink.

use std::f64::consts::TAU;
use std::time::Instant;

use super::descent::Objective;
use super::{argmin, downlink_channels, minimize, DescentConfig, EstimateReport, Link};
use crate::channel::{build_b, grad_dl_phase_objective, DownlinkObservation, PathParams, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{lstsq, rank, wrap_2pi, CMat, CVec, SimRng};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-9;

const FLOOR: f64 = 1e-20;

/// `J_dl(φ) / ‖y‖²` for a fixed measurement matrix.
pub struct PhaseObjective<'a> {
    b: &'a CMat,
    y: &'a CVec,
    y_energy: f64,
}

impl<'a> PhaseObjective<'a> {
    pub fn new(b: &'a CMat, y: &'a CVec) -> Self {
        let e = y.norm_squared();
        Self { b, y, y_energy: if e > 0.0 { e } else { 1.0 } }
    }
}

impl Objective for PhaseObjective<'_> {
    fn value(&mut self, x: &[f64]) -> f64 {
        self.value_grad(x).0
    }

    fn value_grad(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
        match grad_dl_phase_objective(x, self.b, self.y) {
            Ok((v, g)) => (v / self.y_energy, g.into_iter().map(|gi| gi / self.y_energy).collect()),
            Err(_) => (f64::NAN, vec![0.0; x.len()]),
        }
    }
}

fn check_lengths(alpha: &[f64], tau: &[f64], theta: &[f64], cfg: &SystemConfig) -> Result<()> {
    if alpha.len() != cfg.l || tau.len() != cfg.l || theta.len() != cfg.l {
        return Err(Error::Dimension(format!("expected {} paths", cfg.l)));
    }
    Ok(())
}

/// Phases of the unconstrained least-squares fit `𝓑ρ ≈ y`.
fn ls_phases(b: &CMat, y: &CVec) -> Option<Vec<f64>> {
    lstsq(b, y).ok().map(|rho| rho.iter().map(|r| r.arg()).collect())
}

fn run(
    obs: &DownlinkObservation,
    alpha: &[f64],
    tau: &[f64],
    theta: &[f64],
    cfg: &SystemConfig,
    dcfg: &DescentConfig,
    fixed_init: Option<&[f64]>,
) -> Result<EstimateReport> {
    dcfg.validate()?;
    check_lengths(alpha, tau, theta, cfg)?;
    let start = Instant::now();
    let b = build_b(alpha, tau, theta, cfg, &obs.pilots)?;
    if b.nrows() != obs.y.len() {
        return Err(Error::Dimension("downlink observation does not match configuration".into()));
    }
    let unidentifiable = rank(&b, RANK_TOL) < cfg.l;
    if unidentifiable {
        log::debug!("downlink measurement matrix is rank deficient; phases are not identifiable");
    }
    let mut obj = PhaseObjective::new(&b, &obs.y);
    let mut rng = SimRng::new(dcfg.seed).child("dl-init");
    let inits: Vec<Vec<f64>> = match fixed_init {
        Some(x0) => vec![x0.to_vec()],
        None => (0..dcfg.restarts)
            .map(|r| match (r, ls_phases(&b, &obs.y)) {
                (0, Some(p)) => p,
                _ => (0..cfg.l).map(|_| rng.uniform_range(0.0, TAU)).collect(),
            })
            .collect(),
    };
    let runs: Vec<_> = inits.into_iter().map(|x0| minimize(&mut obj, x0, dcfg, FLOOR)).collect();
    let objectives: Vec<f64> = runs.iter().map(|r| r.value * obj.y_energy).collect();
    let best = argmin(&objectives).ok_or(Error::AllRestartsFailed)?;
    let run = &runs[best];
    let phi_dl: Vec<f64> = run.x.iter().map(|p| wrap_2pi(*p)).collect();
    let params = PathParams {
        alpha: alpha.to_vec(),
        tau: tau.to_vec(),
        theta: theta.to_vec(),
        phi_up: vec![0.0; cfg.l],
        phi_dl: phi_dl.clone(),
    };
    let (subcarriers, channels) = downlink_channels(&params, cfg);
    Ok(EstimateReport {
        alpha: params.alpha,
        tau: params.tau,
        theta: params.theta,
        phi_up: None,
        phi_dl: Some(phi_dl),
        alpha_dl: None,
        link: Link::Downlink,
        subcarriers,
        channels,
        trace: run.trace.iter().map(|v| v * obj.y_energy).collect(),
        restart_objectives: objectives,
        restart: best,
        iterations: run.iterations,
        seconds: start.elapsed().as_secs_f64(),
        unidentifiable,
    })
}

/// Minimizes `J_dl(φ_dl)`. The first restart starts from the phases of the
/// unconstrained least-squares fit, the rest from uniform draws.
pub fn dl_phase_estimate(
    obs: &DownlinkObservation,
    alpha: &[f64],
    tau: &[f64],
    theta: &[f64],
    cfg: &SystemConfig,
    dcfg: &DescentConfig,
) -> Result<EstimateReport> {
    run(obs, alpha, tau, theta, cfg, dcfg, None)
}

/// Single descent from a given phase vector.
pub fn dl_phase_from(
    obs: &DownlinkObservation,
    alpha: &[f64],
    tau: &[f64],
    theta: &[f64],
    cfg: &SystemConfig,
    dcfg: &DescentConfig,
    init: &[f64],
) -> Result<EstimateReport> {
    if init.len() != cfg.l {
        return Err(Error::Dimension("initial phase vector has wrong length".into()));
    }
    run(obs, alpha, tau, theta, cfg, dcfg, Some(init))
}
