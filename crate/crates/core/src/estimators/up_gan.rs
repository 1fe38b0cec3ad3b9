//! Uplink least squares in the generator's latent space.
//!
//! Minimizes `J_up(G(z), φ_up) / ‖y‖²` jointly over `(z, φ_up)`, with the
//! generator in eval mode. Gradients flow from the channel model through the
//! inverse feature scaling and back through `G`.

use std::f64::consts::TAU;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::descent::Objective;
use super::{argmin, minimize, uplink_channels, DescentConfig, EstimateReport, Link};
use crate::channel::{PathParams, SystemConfig, UplinkObjective, UplinkObservation, UplinkParams};
use crate::dataset::FeatureScaler;
use crate::error::{Error, Result};
use crate::gan::GanModel;
use crate::linalg::{wrap_2pi, SimRng};
use crate::nn::Mode;

/// Normalized objective below which a restart counts as converged.
const FLOOR: f64 = 1e-14;

pub struct LatentObjective<'a> {
    model: &'a GanModel,
    scaler: &'a FeatureScaler,
    inner: UplinkObjective<'a>,
    y_energy: f64,
}

impl<'a> LatentObjective<'a> {
    pub fn new(obs: &'a UplinkObservation, model: &'a GanModel, cfg: &SystemConfig) -> Result<Self> {
        let scaler = model
            .scaler
            .as_ref()
            .ok_or_else(|| Error::Config("generator has no feature scaler attached".into()))?;
        if model.feature_dim() != 3 * cfg.l || scaler.l != cfg.l {
            return Err(Error::Dimension(format!(
                "generator emits {} features, configuration needs {}",
                model.feature_dim(),
                3 * cfg.l
            )));
        }
        let e = obs.y.norm_squared();
        Ok(Self { model, scaler, inner: UplinkObjective::new(obs, cfg)?, y_energy: if e > 0.0 { e } else { 1.0 } })
    }

    pub fn latent_dim(&self) -> usize {
        self.model.latent_dim()
    }

    /// `‖y‖²`, the normalization of the objective (1 when `y = 0`).
    pub fn y_energy(&self) -> f64 {
        self.y_energy
    }

    /// `(α, τ, θ)` for latent `z`.
    pub fn decode(&self, z: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let v = self.model.generate(&DMatrix::from_column_slice(z.len(), 1, z))?;
        self.scaler.from_features(v.as_slice())
    }
}

impl LatentObjective<'_> {
    /// Draws `count` latent points from the prior, fits phases to each by
    /// least squares, and returns the `(z, φ)` with the lowest objective.
    pub fn screen(&mut self, count: usize, rng: &mut SimRng) -> Result<Vec<f64>> {
        let d = self.latent_dim();
        let z = DMatrix::from_fn(d, count, |_, _| rng.normal());
        let v = self.model.generate(&z)?;
        let mut best: Option<(f64, Vec<f64>)> = None;
        for (zc, vc) in z.column_iter().zip(v.column_iter()) {
            let (alpha, tau, theta) = self.scaler.from_features(vc.as_slice())?;
            let Ok(phi) = self.inner.fit_phases(&tau, &theta) else { continue };
            let f = self.inner.value(UplinkParams { alpha: &alpha, tau: &tau, theta: &theta, phi: &phi });
            if f.is_finite() && best.as_ref().is_none_or(|b| f < b.0) {
                best = Some((f, zc.iter().copied().chain(phi).collect()));
            }
        }
        best.map(|b| b.1).ok_or(Error::AllRestartsFailed)
    }
}

impl Objective for LatentObjective<'_> {
    fn value(&mut self, x: &[f64]) -> f64 {
        let d = self.latent_dim();
        match self.decode(&x[..d]) {
            Ok((alpha, tau, theta)) => {
                self.inner.value(UplinkParams { alpha: &alpha, tau: &tau, theta: &theta, phi: &x[d..] }) / self.y_energy
            }
            Err(_) => f64::NAN,
        }
    }

    fn value_grad(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
        let d = self.latent_dim();
        let z = DMatrix::from_column_slice(d, 1, &x[..d]);
        let Ok((v, cache)) = self.model.g.forward(&z, Mode::Eval) else {
            return (f64::NAN, vec![0.0; x.len()]);
        };
        let Ok((alpha, tau, theta)) = self.scaler.from_features(v.as_slice()) else {
            return (f64::NAN, vec![0.0; x.len()]);
        };
        let g = self.inner.value_and_grad(UplinkParams { alpha: &alpha, tau: &tau, theta: &theta, phi: &x[d..] });
        let jac = self.scaler.jacobian_diag(v.as_slice());
        let n = jac.len();
        let dv = DMatrix::from_iterator(n, 1, g.grad[..n].iter().zip(&jac).map(|(a, b)| a * b));
        let (_, dz) = self.model.g.backward(&cache, &dv);
        let s = 1.0 / self.y_energy;
        let grad = dz.iter().chain(&g.grad[n..]).map(|v| v * s).collect();
        (g.value * s, grad)
    }

    fn residuals(&mut self, x: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let d = self.latent_dim();
        let z = DMatrix::from_column_slice(d, 1, &x[..d]);
        let (v, _) = self.model.g.forward(&z, Mode::Eval).ok()?;
        let n = v.len();
        let (alpha, tau, theta) = self.scaler.from_features(v.as_slice()).ok()?;
        let (r, jac) = self.inner.residual_jacobian(UplinkParams { alpha: &alpha, tau: &tau, theta: &theta, phi: &x[d..] });
        // ∂G/∂z, one row per feature, from a single batched backward pass
        let zs = DMatrix::from_fn(d, n, |i, _| x[i]);
        let (_, cache) = self.model.g.forward(&zs, Mode::Eval).ok()?;
        let (_, jg_t) = self.model.g.backward(&cache, &DMatrix::identity(n, n));
        let scale = self.scaler.jacobian_diag(v.as_slice());
        let rows = r.len();
        let s = self.y_energy.sqrt().recip();
        let mut out = DMatrix::zeros(2 * rows, x.len());
        for row in 0..rows {
            for j in 0..d {
                let c: crate::linalg::C64 = (0..n).map(|f| jac[(row, f)] * (scale[f] * jg_t[(j, f)])).sum();
                out[(row, j)] = -c.re * s;
                out[(rows + row, j)] = -c.im * s;
            }
            for l in 0..x.len() - d {
                let c = jac[(row, n + l)];
                out[(row, d + l)] = -c.re * s;
                out[(rows + row, d + l)] = -c.im * s;
            }
        }
        let res = DVector::from_iterator(2 * rows, r.iter().map(|c| c.re * s).chain(r.iter().map(|c| c.im * s)));
        Some((res, out))
    }
}

/// Best of `dcfg.restarts` descents from `z ~ N(0, I)`, `φ_up ~ U[0, 2π)`.
pub fn up_gan_estimate(
    obs: &UplinkObservation,
    model: &GanModel,
    cfg: &SystemConfig,
    dcfg: &DescentConfig,
) -> Result<EstimateReport> {
    dcfg.validate()?;
    let start = Instant::now();
    let mut obj = LatentObjective::new(obs, model, cfg)?;
    let d = obj.latent_dim();
    let mut rng = SimRng::new(dcfg.seed).child("init");
    let mut runs = Vec::with_capacity(dcfg.restarts);
    for _ in 0..dcfg.restarts {
        let x0 = if dcfg.candidates > 1 {
            obj.screen(dcfg.candidates, &mut rng)?
        } else {
            let mut x0 = rng.randn(d);
            x0.extend((0..cfg.l).map(|_| rng.uniform_range(0.0, TAU)));
            x0
        };
        runs.push(minimize(&mut obj, x0, dcfg, FLOOR));
    }
    let objectives: Vec<f64> = runs.iter().map(|r| r.value * obj.y_energy()).collect();
    let best = argmin(&objectives).ok_or(Error::AllRestartsFailed)?;
    let run = &runs[best];
    let (alpha, tau, theta) = obj.decode(&run.x[..d])?;
    let phi_up: Vec<f64> = run.x[d..].iter().map(|p| wrap_2pi(*p)).collect();
    let params = PathParams { alpha, tau, theta, phi_up, phi_dl: vec![0.0; cfg.l] };
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
        trace: run.trace.iter().map(|v| v * obj.y_energy()).collect(),
        restart_objectives: objectives,
        restart: best,
        iterations: run.iterations,
        seconds: start.elapsed().as_secs_f64(),
        unidentifiable: false,
    })
}
