//! Monte-Carlo sweep over one experimental axis.
//!
//! Trial `t` always uses the same test user and the same random streams, so
//! every axis point and every scenario sees common random numbers. When the
//! axis leaves the uplink untouched, uplink estimates are computed once per
//! trial and reused across the axis.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{inject_feedback_error, nmse, rate, ser_qpsk};
use super::parallel::{map_indexed, Execution};
use super::{Axis, MetricRow, Scenario};
use crate::channel::{
    downlink_channel_full, downlink_pilots, spread_indices, synth_downlink, synth_uplink, uplink_channel, PathParams,
    SystemConfig,
};
use crate::dataset::{perturb_gains, Dataset};
use crate::error::{Error, Result};
use crate::estimators::dl_ls::dl_ls;
use crate::estimators::dl_phase::dl_phase_estimate;
use crate::estimators::lmmse::{up_lmmse, LmmsePrior};
use crate::estimators::r2f2::{r2f2_downlink, r2f2_uplink, R2f2Config};
use crate::estimators::reciprocity::{full_reciprocity, PhaseRule};
use crate::estimators::up_gan::up_gan_estimate;
use crate::estimators::{downlink_channels, DescentConfig, EstimateReport, Link};
use crate::gan::GanModel;
use crate::linalg::{child_seed, CMat, CVec, SimRng};

/// Solver settings for every estimator a sweep may run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfigs {
    pub up_gan: DescentConfig,
    pub dl_phase: DescentConfig,
    pub r2f2: R2f2Config,
}

impl Default for EstimatorConfigs {
    fn default() -> Self {
        Self { up_gan: DescentConfig::up_gan(), dl_phase: DescentConfig::dl_phase(), r2f2: R2f2Config::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub scenarios: Vec<Scenario>,
    pub trials: usize,
    /// Master seed of the sweep.
    pub seed: u64,
    /// SNR used when another axis is swept.
    pub snr_db: f64,
    /// Feedback phase error used when another axis is swept.
    pub sigma_phi_deg: f64,
    /// QPSK symbols per subcarrier and trial in the SER estimate.
    pub ser_symbols: usize,
    /// Report mean wall time per estimate. Off by default so that the CSV
    /// depends on the seed alone.
    pub record_seconds: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            axis: Axis::SnrDb,
            values: Axis::SnrDb.default_values(),
            scenarios: Scenario::ALL.to_vec(),
            trials: 200,
            seed: 0,
            snr_db: 10.0,
            sigma_phi_deg: 0.0,
            ser_symbols: 100,
            record_seconds: false,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.values.is_empty() || self.scenarios.is_empty() {
            return Err(Error::Config("a sweep needs at least one axis value and one scenario".into()));
        }
        if self.ser_symbols == 0 {
            return Err(Error::Config("ser_symbols must be >= 1".into()));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("axis value {v} is not finite")));
        }
        Ok(())
    }

    /// Whether the swept axis changes the uplink observation.
    fn uplink_varies(&self) -> bool {
        self.axis == Axis::SnrDb
    }
}

/// Everything a sweep reads but never modifies.
#[derive(Debug, Clone, Copy)]
pub struct SweepContext<'a> {
    /// Base system; `p_t` is replaced by the value implied by the SNR.
    pub system: &'a SystemConfig,
    /// Test users come from the test split; the LMMSE prior from the training split.
    pub dataset: &'a Dataset,
    pub model: Option<&'a GanModel>,
    pub estimators: &'a EstimatorConfigs,
    /// Relative uplink/downlink gain mismatch applied to every test user.
    pub alpha_dl_rel_err: f64,
}

/// Mean of `Σ_l α_l²` over `records`, which equals `E‖h_k‖²/M` for
/// independent uniform path phases.
pub fn mean_path_energy<'a>(records: impl IntoIterator<Item = &'a PathParams>) -> Result<f64> {
    let (mut acc, mut n) = (0.0, 0usize);
    for r in records {
        acc += r.alpha.iter().map(|a| a * a).sum::<f64>();
        n += 1;
    }
    if n == 0 || !(acc > 0.0) {
        return Err(Error::InvalidInput("cannot calibrate SNR on an empty or zero-gain population".into()));
    }
    Ok(acc / n as f64)
}

/// Pilot power giving `SNR = P_T·E‖h‖²/(M·σ²)`; `sigma_n2 = 0` keeps `fallback`.
pub fn pilot_power(snr_db: f64, sigma_n2: f64, path_energy: f64, fallback: f64) -> f64 {
    if sigma_n2 > 0.0 {
        10f64.powf(snr_db / 10.0) * sigma_n2 / path_energy
    } else {
        fallback
    }
}

/// System configuration and feedback error at one axis point.
#[derive(Debug, Clone)]
struct Point {
    cfg: SystemConfig,
    sigma_phi_deg: f64,
    pilots: Vec<CMat>,
}

fn as_count(axis: Axis, v: f64, max: usize) -> Result<usize> {
    if v.fract() != 0.0 || v < 1.0 || v > max as f64 {
        return Err(Error::Config(format!("{axis} value {v} must be an integer in 1..={max}")));
    }
    Ok(v as usize)
}

fn build_point(base: &SystemConfig, spec: &SweepSpec, value: f64, energy: f64) -> Result<Point> {
    let mut cfg = base.clone();
    let mut snr = spec.snr_db;
    let mut sigma_phi_deg = spec.sigma_phi_deg;
    match spec.axis {
        Axis::SnrDb => snr = value,
        Axis::P => cfg.p = as_count(spec.axis, value, base.k)?,
        Axis::MDlSize => cfg.m_dl = (1..=as_count(spec.axis, value, base.m)?).collect(),
        Axis::SigmaPhiDeg => {
            if value < 0.0 {
                return Err(Error::Config(format!("sigma_phi_deg value {value} is negative")));
            }
            sigma_phi_deg = value;
        }
    }
    cfg.k_dl = spread_indices(cfg.k, cfg.p);
    cfg.p_t = pilot_power(snr, cfg.sigma_n2, energy, cfg.p_t);
    cfg.validate()?;
    let pilots = downlink_pilots(&cfg, &mut SimRng::new(spec.seed).child("pilot"));
    Ok(Point { cfg, sigma_phi_deg, pilots })
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    nmse: f64,
    rate: f64,
    ser: f64,
    iters: f64,
    seconds: f64,
}

#[derive(Debug, Clone, Default)]
struct UplinkEstimates {
    gan: Option<EstimateReport>,
    lmmse: Option<EstimateReport>,
    r2f2: Option<EstimateReport>,
}

struct Runner<'a> {
    spec: &'a SweepSpec,
    ctx: SweepContext<'a>,
    points: Vec<Point>,
    prior: Option<LmmsePrior>,
}

impl Runner<'_> {
    fn needs(&self, pred: impl Fn(Scenario) -> bool) -> bool {
        self.spec.scenarios.iter().any(|&s| pred(s))
    }

    fn uplink(&self, x: &PathParams, cfg: &SystemConfig, rng: &SimRng, seed: u64) -> Result<UplinkEstimates> {
        let obs = synth_uplink(x, cfg, &mut rng.child("noise-up"));
        let est = &self.ctx.estimators;
        let mut out = UplinkEstimates::default();
        if let (true, Some(model)) = (self.needs(Scenario::needs_generator), self.ctx.model) {
            out.gan = Some(up_gan_estimate(&obs, model, cfg, &est.up_gan.with_seed(seed))?);
        }
        if let Some(prior) = &self.prior {
            out.lmmse = Some(up_lmmse(&obs, prior, cfg)?);
        }
        if self.needs(|s| s == Scenario::DlR2f2) {
            let rcfg = R2f2Config { up: est.r2f2.up.with_seed(seed), ..est.r2f2.clone() };
            out.r2f2 = Some(r2f2_uplink(&obs, cfg, &rcfg)?);
        }
        Ok(out)
    }

    fn trial(&self, t: usize) -> Result<Vec<Vec<Sample>>> {
        let test = &self.ctx.dataset.test;
        let x = &self.ctx.dataset.records[test[t % test.len()]];
        let seed = child_seed(self.spec.seed, &format!("trial-{t}"));
        let rng = SimRng::new(seed);
        let x_dl = PathParams {
            alpha: perturb_gains(&x.alpha, self.ctx.alpha_dl_rel_err, &mut rng.child("gain-dl")),
            ..x.clone()
        };
        let cached = if self.spec.uplink_varies() {
            None
        } else {
            Some(self.uplink(x, &self.points[0].cfg, &rng, seed)?)
        };
        let mut rows = Vec::with_capacity(self.points.len());
        for point in &self.points {
            let cfg = &point.cfg;
            let fresh;
            let up = match &cached {
                Some(u) => u,
                None => {
                    fresh = self.uplink(x, cfg, &rng, seed)?;
                    &fresh
                }
            };
            let obs_dl = synth_downlink(&x_dl, cfg, &point.pilots, &mut rng.child("noise-dl"))?;
            let h_up: Vec<CVec> = (1..=cfg.k).map(|k| uplink_channel(x, cfg, k)).collect();
            let h_dl: Vec<CVec> = (1..=cfg.k).map(|k| downlink_channel_full(&x_dl, cfg, k)).collect();
            let mut samples = Vec::with_capacity(self.spec.scenarios.len());
            for &sc in &self.spec.scenarios {
                let start = Instant::now();
                let mut report = self.estimate(sc, up, &obs_dl, cfg, seed)?;
                if sc.feeds_back_phases() && point.sigma_phi_deg > 0.0 {
                    let phi = report.phi_dl.as_ref().ok_or_else(|| Error::InvalidInput("missing downlink phases".into()))?;
                    let noisy = inject_feedback_error(phi, point.sigma_phi_deg, &mut rng.child("feedback"));
                    let mut params = report.params();
                    if let Some(a) = &report.alpha_dl {
                        params.alpha = a.clone();
                    }
                    params.phi_dl = noisy.clone();
                    report.channels = downlink_channels(&params, cfg).1;
                    report.phi_dl = Some(noisy);
                }
                let upstream = match sc {
                    Scenario::UpLmmse | Scenario::UpGan | Scenario::DlR2f2 => 0.0,
                    _ => up.gan.as_ref().map_or(0.0, |g| g.seconds),
                };
                let seconds = upstream + start.elapsed().as_secs_f64().max(report.seconds);
                let truth = if report.link == Link::Uplink { &h_up } else { &h_dl };
                let rate = if cfg.sigma_n2 > 0.0 { rate(truth, &report.channels, cfg.p_t, cfg.sigma_n2)? } else { f64::NAN };
                let ser = ser_qpsk(
                    truth,
                    &report.channels,
                    cfg.p_t,
                    cfg.sigma_n2,
                    self.spec.ser_symbols,
                    &mut rng.child("ser"),
                )?;
                samples.push(Sample {
                    nmse: nmse(truth, &report.channels)?,
                    rate,
                    ser,
                    iters: report.iterations as f64,
                    seconds,
                });
            }
            rows.push(samples);
        }
        Ok(rows)
    }

    fn estimate(
        &self,
        sc: Scenario,
        up: &UplinkEstimates,
        obs_dl: &crate::channel::DownlinkObservation,
        cfg: &SystemConfig,
        seed: u64,
    ) -> Result<EstimateReport> {
        let missing = || Error::Config(format!("{sc} needs an estimate that was not computed"));
        let est = &self.ctx.estimators;
        match sc {
            Scenario::UpLmmse => up.lmmse.clone().ok_or_else(missing),
            Scenario::UpGan => up.gan.clone().ok_or_else(missing),
            Scenario::DlGan => {
                let g = up.gan.as_ref().ok_or_else(missing)?;
                dl_phase_estimate(obs_dl, &g.alpha, &g.tau, &g.theta, cfg, &est.dl_phase.with_seed(seed))
            }
            Scenario::DlReciprocityCopy => full_reciprocity(up.gan.as_ref().ok_or_else(missing)?, PhaseRule::CopyPhase, cfg),
            Scenario::DlReciprocityDelay => {
                full_reciprocity(up.gan.as_ref().ok_or_else(missing)?, PhaseRule::DelayPhase, cfg)
            }
            Scenario::DlLs => {
                let g = up.gan.as_ref().ok_or_else(missing)?;
                dl_ls(obs_dl, &g.tau, &g.theta, cfg)
            }
            Scenario::DlR2f2 => {
                let rcfg = R2f2Config { up: est.r2f2.up.with_seed(seed), ..est.r2f2.clone() };
                r2f2_downlink(up.r2f2.as_ref().ok_or_else(missing)?, obs_dl, cfg, &rcfg)
            }
        }
    }
}

/// Runs every scenario at every axis value for `spec.trials` test users and
/// returns one averaged row per `(value, scenario)`, values outermost.
pub fn run_sweep(spec: &SweepSpec, ctx: SweepContext<'_>, exec: Execution) -> Result<Vec<MetricRow>> {
    spec.validate()?;
    ctx.system.validate()?;
    if ctx.dataset.test.is_empty() {
        return Err(Error::InvalidInput("dataset has an empty test split".into()));
    }
    if spec.scenarios.iter().any(|s| s.needs_generator()) {
        let model = ctx.model.ok_or_else(|| Error::Config("GAN scenarios need a trained generator".into()))?;
        if model.scaler.is_none() {
            return Err(Error::Config("generator checkpoint carries no feature scaler".into()));
        }
    }
    let energy = mean_path_energy(ctx.dataset.train_records())?;
    let points = spec
        .values
        .iter()
        .map(|&v| build_point(ctx.system, spec, v, energy))
        .collect::<Result<Vec<_>>>()?;
    let prior = if spec.scenarios.contains(&Scenario::UpLmmse) {
        Some(LmmsePrior::fit(ctx.dataset.train_records(), &points[0].cfg)?)
    } else {
        None
    };
    let runner = Runner { spec, ctx, points, prior };
    let trials = map_indexed(spec.trials, exec, |t| runner.trial(t))?;

    let mut rows = Vec::with_capacity(spec.values.len() * spec.scenarios.len());
    for (pi, &value) in spec.values.iter().enumerate() {
        for (si, sc) in spec.scenarios.iter().enumerate() {
            let samples: Vec<Sample> = trials.iter().map(|t| t[pi][si]).collect();
            let n = samples.len() as f64;
            let mean = |f: fn(&Sample) -> f64| samples.iter().map(f).sum::<f64>() / n;
            rows.push(MetricRow {
                scenario: sc.name().to_string(),
                axis: spec.axis.name().to_string(),
                value,
                nmse_db: 10.0 * mean(|s| s.nmse).log10(),
                rate: mean(|s| s.rate),
                ser: mean(|s| s.ser),
                iters: mean(|s| s.iters),
                seconds: if spec.record_seconds { mean(|s| s.seconds) } else { 0.0 },
                trials: samples.len(),
            });
        }
    }
    Ok(rows)
}
