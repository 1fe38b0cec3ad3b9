//! Block-coordinate projected gradient descent on the raw uplink parameters.
//!
//! Blocks `(α, τ, θ, φ_up)` are updated in turn, each with a projected
//! backtracking step, inside the box `α ∈ [0, α_max]`, `τ ∈ [0, τ_max]`,
//! `θ, φ ∈ [0, 2π]`. The downlink phases are then recovered as in DL-GAN.

use std::f64::consts::TAU;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::dl_phase::dl_phase_estimate;
use super::{argmin, uplink_channels, DescentConfig, EstimateReport, Link};
use crate::channel::{DownlinkObservation, PathParams, SystemConfig, UplinkObjective, UplinkObservation, UplinkParams};
use crate::error::{Error, Result};
use crate::linalg::{wrap_2pi, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R2f2Config {
    pub up: DescentConfig,
    pub dl: DescentConfig,
    /// Upper delay bound, seconds.
    pub tau_max: f64,
}

impl Default for R2f2Config {
    fn default() -> Self {
        Self { up: DescentConfig::r2f2(), dl: DescentConfig::dl_phase(), tau_max: 94.5e-9 }
    }
}

/// Parameters in scaled units: `α/α_ref`, `τ/T_s`, `θ`, `φ`.
struct Scaled<'a> {
    inner: UplinkObjective<'a>,
    l: usize,
    alpha_ref: f64,
    t_s: f64,
    upper: [f64; 4],
    y_energy: f64,
}

impl Scaled<'_> {
    fn unpack(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let l = self.l;
        let alpha = u[..l].iter().map(|a| a * self.alpha_ref).collect();
        let tau = u[l..2 * l].iter().map(|t| t * self.t_s).collect();
        (alpha, tau)
    }

    fn value(&self, u: &[f64]) -> f64 {
        let l = self.l;
        let (alpha, tau) = self.unpack(u);
        self.inner.value(UplinkParams { alpha: &alpha, tau: &tau, theta: &u[2 * l..3 * l], phi: &u[3 * l..] })
            / self.y_energy
    }

    fn value_grad(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let l = self.l;
        let (alpha, tau) = self.unpack(u);
        let g = self
            .inner
            .value_and_grad(UplinkParams { alpha: &alpha, tau: &tau, theta: &u[2 * l..3 * l], phi: &u[3 * l..] });
        let grad = g
            .grad
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let s = match i / l {
                    0 => self.alpha_ref,
                    1 => self.t_s,
                    _ => 1.0,
                };
                v * s / self.y_energy
            })
            .collect();
        (g.value / self.y_energy, grad)
    }

    fn project_block(&self, u: &mut [f64], block: usize) {
        let l = self.l;
        for v in &mut u[block * l..(block + 1) * l] {
            *v = v.clamp(0.0, self.upper[block]);
        }
    }

    fn random_point(&self, rng: &mut SimRng) -> Vec<f64> {
        let mut u = Vec::with_capacity(4 * self.l);
        for hi in self.upper {
            u.extend((0..self.l).map(|_| rng.uniform_range(0.0, hi)));
        }
        u
    }
}

struct Run {
    u: Vec<f64>,
    value: f64,
    trace: Vec<f64>,
    cycles: usize,
}

/// One projected backtracking step on `block`; never increases the objective.
fn block_step(obj: &Scaled<'_>, u: &mut Vec<f64>, f: &mut f64, block: usize, step: &mut f64) {
    let l = obj.l;
    let (_, g) = obj.value_grad(u);
    let range = block * l..(block + 1) * l;
    if g[range.clone()].iter().all(|v| *v == 0.0) {
        return;
    }
    for _ in 0..40 {
        let mut trial = u.clone();
        for i in range.clone() {
            trial[i] -= *step * g[i];
        }
        obj.project_block(&mut trial, block);
        let moved: f64 = range.clone().map(|i| g[i] * (u[i] - trial[i])).sum();
        let ft = obj.value(&trial);
        if ft.is_finite() && ft <= *f - 1e-4 * moved && ft <= *f {
            *u = trial;
            *f = ft;
            *step *= 2.0;
            return;
        }
        *step *= 0.5;
    }
}

fn descend(obj: &Scaled<'_>, mut u: Vec<f64>, dcfg: &DescentConfig) -> Run {
    let mut f = obj.value(&u);
    let mut trace = vec![f];
    let mut steps = [dcfg.lr; 4];
    let mut cycles = 0;
    while cycles < dcfg.max_iters && f.is_finite() && f > 1e-20 {
        for (b, step) in steps.iter_mut().enumerate() {
            block_step(obj, &mut u, &mut f, b, step);
        }
        cycles += 1;
        trace.push(f);
        let i = trace.len() - 1;
        if i >= dcfg.window && trace[i - dcfg.window] - f < dcfg.epsilon * trace[i - dcfg.window] {
            break;
        }
    }
    Run { u, value: f, trace, cycles }
}

/// Uplink coordinate descent over `dcfg.up.restarts` screened random starts,
/// then downlink phase recovery from the winning `(α, τ, θ)`.
pub fn modified_r2f2(
    obs_up: &UplinkObservation,
    obs_dl: &DownlinkObservation,
    cfg: &SystemConfig,
    rcfg: &R2f2Config,
) -> Result<EstimateReport> {
    let up = r2f2_uplink(obs_up, cfg, rcfg)?;
    r2f2_downlink(&up, obs_dl, cfg, rcfg)
}

/// Downlink phase stage on top of an [`r2f2_uplink`] report.
pub fn r2f2_downlink(
    up: &EstimateReport,
    obs_dl: &DownlinkObservation,
    cfg: &SystemConfig,
    rcfg: &R2f2Config,
) -> Result<EstimateReport> {
    let start = Instant::now();
    let dl = dl_phase_estimate(obs_dl, &up.alpha, &up.tau, &up.theta, cfg, &rcfg.dl.with_seed(rcfg.up.seed))?;
    Ok(EstimateReport {
        phi_up: up.phi_up.clone(),
        trace: up.trace.clone(),
        restart_objectives: up.restart_objectives.clone(),
        restart: up.restart,
        iterations: up.iterations,
        seconds: up.seconds + start.elapsed().as_secs_f64(),
        ..dl
    })
}

/// The uplink stage alone: best `(α, τ, θ, φ_up)` and the uplink channels.
pub fn r2f2_uplink(obs_up: &UplinkObservation, cfg: &SystemConfig, rcfg: &R2f2Config) -> Result<EstimateReport> {
    rcfg.up.validate()?;
    if !(rcfg.tau_max > 0.0) {
        return Err(Error::Config("tau_max must be > 0".into()));
    }
    let start = Instant::now();
    let l = cfg.l;
    let y_energy = obs_up.y.norm_squared();
    if !(y_energy > 0.0) {
        return Err(Error::InvalidInput("uplink observation is identically zero".into()));
    }
    let p_t = obs_up.pilots.iter().map(|s| s.norm_sqr()).sum::<f64>() / obs_up.pilots.len() as f64;
    // gain of a single path that would explain all received energy
    let alpha_ref = (y_energy / (obs_up.y.len() as f64 * p_t)).sqrt();
    let obj = Scaled {
        inner: UplinkObjective::new(obs_up, cfg)?,
        l,
        alpha_ref,
        t_s: cfg.t_s(),
        upper: [2.0, rcfg.tau_max / cfg.t_s(), TAU, TAU],
        y_energy,
    };
    let mut rng = SimRng::new(rcfg.up.seed).child("init");
    let runs: Vec<Run> = (0..rcfg.up.restarts)
        .map(|_| {
            let start = (0..rcfg.up.candidates)
                .map(|_| {
                    let u = obj.random_point(&mut rng);
                    (obj.value(&u), u)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, u)| u)
                .expect("at least one candidate");
            descend(&obj, start, &rcfg.up)
        })
        .collect();
    let objectives: Vec<f64> = runs.iter().map(|r| r.value * y_energy).collect();
    let best = argmin(&objectives).ok_or(Error::AllRestartsFailed)?;
    let run = &runs[best];
    let (alpha, tau) = obj.unpack(&run.u);
    let theta = run.u[2 * l..3 * l].to_vec();
    let phi_up: Vec<f64> = run.u[3 * l..].iter().map(|p| wrap_2pi(*p)).collect();
    let params = PathParams { alpha, tau, theta, phi_up, phi_dl: vec![0.0; l] };
    let (subcarriers, channels) = uplink_channels(&params, cfg);
    Ok(EstimateReport {
        alpha: params.alpha,
        tau: params.tau,
        theta: params.theta,
        phi_up: Some(params.phi_up),
        phi_dl: None,
        alpha_dl: None,
        link: Link::Uplink,
        subcarriers,
        channels,
        trace: run.trace.iter().map(|v| v * y_energy).collect(),
        restart_objectives: objectives,
        restart: best,
        iterations: run.cycles,
        seconds: start.elapsed().as_secs_f64(),
        unidentifiable: false,
    })
}
