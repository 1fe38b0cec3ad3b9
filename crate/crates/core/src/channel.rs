//! Geometric multipath OFDM channel, pilot observations, and the analytic
//! least-squares gradients used by every estimator.
//!
//! Subcarrier indices `k` and antenna indices `m` are 1-based throughout,
//! matching the phase term `2πk/K·τ·B` and the array phase `(m−1)·sin θ`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cis, norm_sqr, CMat, CVec, SimRng, C64, J};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Thermal noise density used by the default configuration, dBm/Hz.
pub const NOISE_PSD_DBM_HZ: f64 = -174.0;

/// Radio constants and pilot index sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// BS antenna count.
    pub m: usize,
    /// Subcarrier count.
    pub k: usize,
    pub bandwidth_hz: f64,
    pub f_up_hz: f64,
    pub f_dl_hz: f64,
    /// Antenna spacing in meters.
    pub d_bar: f64,
    /// Pilot power.
    pub p_t: f64,
    pub sigma_n2: f64,
    /// Uplink pilot subcarriers, 1-based, sorted.
    pub k_up: Vec<usize>,
    /// Downlink pilot subcarriers, 1-based, sorted.
    pub k_dl: Vec<usize>,
    /// Downlink training antennas, 1-based, sorted.
    pub m_dl: Vec<usize>,
    /// Downlink pilot slots per subcarrier.
    pub p: usize,
    /// Number of propagation paths.
    pub l: usize,
}

impl Default for SystemConfig {
    /// 64-antenna ULA, 16 subcarriers over 20 MHz, 2.4/2.5 GHz, five paths,
    /// full pilot sets and `p = |K_dl|`.
    fn default() -> Self {
        let bandwidth_hz = 20e6;
        let f_dl_hz = 2.5e9;
        let k = 16;
        let m = 64;
        Self {
            m,
            k,
            bandwidth_hz,
            f_up_hz: 2.4e9,
            f_dl_hz,
            d_bar: 0.5 * SPEED_OF_LIGHT / f_dl_hz,
            p_t: 1.0,
            sigma_n2: noise_power_watts(NOISE_PSD_DBM_HZ, bandwidth_hz),
            k_up: (1..=k).collect(),
            k_dl: (1..=k).collect(),
            m_dl: (1..=m).collect(),
            p: k,
            l: 5,
        }
    }
}

/// Noise power in watts for a density in dBm/Hz over `bandwidth_hz`.
pub fn noise_power_watts(psd_dbm_hz: f64, bandwidth_hz: f64) -> f64 {
    10f64.powf(psd_dbm_hz / 10.0) * 1e-3 * bandwidth_hz
}

fn check_index_set(name: &str, set: &[usize], max: usize) -> Result<()> {
    if set.is_empty() {
        return Err(Error::Config(format!("{name} is empty")));
    }
    if set.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!("{name} must be strictly increasing")));
    }
    if set[0] < 1 || *set.last().unwrap() > max {
        return Err(Error::Config(format!("{name} must lie in 1..={max}")));
    }
    Ok(())
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.k == 0 || self.l == 0 {
            return Err(Error::Config("m, k and l must be positive".into()));
        }
        check_index_set("k_up", &self.k_up, self.k)?;
        check_index_set("k_dl", &self.k_dl, self.k)?;
        check_index_set("m_dl", &self.m_dl, self.m)?;
        if self.p == 0 {
            return Err(Error::Config("p must be at least 1".into()));
        }
        if !(self.p_t > 0.0) || !(self.sigma_n2 >= 0.0) {
            return Err(Error::Config("p_t must be > 0 and sigma_n2 >= 0".into()));
        }
        if !(self.bandwidth_hz > 0.0) || !(self.d_bar > 0.0) {
            return Err(Error::Config("bandwidth and antenna spacing must be > 0".into()));
        }
        if self.f_up_hz == self.f_dl_hz {
            return Err(Error::Config("FDD requires f_up != f_dl".into()));
        }
        Ok(())
    }

    pub fn lambda_up(&self) -> f64 {
        SPEED_OF_LIGHT / self.f_up_hz
    }

    pub fn lambda_dl(&self) -> f64 {
        SPEED_OF_LIGHT / self.f_dl_hz
    }

    /// OFDM sample time `1/B`.
    pub fn t_s(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    /// Delay phase slope `2πk·B/K` for subcarrier `k`.
    pub fn beta(&self, k: usize) -> f64 {
        TAU * k as f64 * self.bandwidth_hz / self.k as f64
    }

    pub fn all_antennas(&self) -> Vec<usize> {
        (1..=self.m).collect()
    }

    pub fn all_subcarriers(&self) -> Vec<usize> {
        (1..=self.k).collect()
    }

    /// `count` subcarriers spread evenly over `1..=K`.
    pub fn spread_subcarriers(&self, count: usize) -> Vec<usize> {
        spread_indices(self.k, count)
    }
}

/// `count` distinct 1-based indices spread evenly over `1..=n`.
pub fn spread_indices(n: usize, count: usize) -> Vec<usize> {
    let count = count.clamp(1, n);
    (0..count).map(|i| 1 + i * n / count).collect()
}

/// Per-user propagation parameters of `L` paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub alpha: Vec<f64>,
    pub tau: Vec<f64>,
    pub theta: Vec<f64>,
    pub phi_up: Vec<f64>,
    pub phi_dl: Vec<f64>,
}

impl PathParams {
    pub fn num_paths(&self) -> usize {
        self.alpha.len()
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.alpha.len();
        if l == 0 {
            return Err(Error::InvalidInput("no paths".into()));
        }
        for (name, v) in [
            ("tau", &self.tau),
            ("theta", &self.theta),
            ("phi_up", &self.phi_up),
            ("phi_dl", &self.phi_dl),
        ] {
            if v.len() != l {
                return Err(Error::InvalidInput(format!(
                    "{name} has {} entries, expected {l}",
                    v.len()
                )));
            }
        }
        let all = self
            .alpha
            .iter()
            .chain(&self.tau)
            .chain(&self.theta)
            .chain(&self.phi_up)
            .chain(&self.phi_dl);
        if all.clone().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite path parameter".into()));
        }
        if self.alpha.iter().any(|&a| a < 0.0) || self.tau.iter().any(|&t| t < 0.0) {
            return Err(Error::InvalidInput("alpha and tau must be >= 0".into()));
        }
        if self.tau.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidInput("tau must be sorted ascending".into()));
        }
        Ok(())
    }

    /// Reorders all paths by ascending delay.
    pub fn sort_by_delay(&mut self) {
        let mut idx: Vec<usize> = (0..self.num_paths()).collect();
        idx.sort_by(|&a, &b| self.tau[a].total_cmp(&self.tau[b]));
        let pick = |v: &Vec<f64>| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        self.alpha = pick(&self.alpha);
        self.tau = pick(&self.tau);
        self.theta = pick(&self.theta);
        self.phi_up = pick(&self.phi_up);
        self.phi_dl = pick(&self.phi_dl);
    }
}

/// Array steering vector over the given 1-based antenna indices:
/// entry `m` is `exp(j·2π/λ·d̄·(m−1)·sin θ)`.
pub fn array_response(theta: f64, lambda: f64, d_bar: f64, antennas: &[usize]) -> CVec {
    let step = TAU / lambda * d_bar * theta.sin();
    CVec::from_iterator(
        antennas.len(),
        antennas.iter().map(|&m| cis(step * (m as f64 - 1.0))),
    )
}

/// `Σ_l α_l·exp(j(φ_l + 2πk/K·τ_l·B))·a(θ_l, λ)` restricted to `antennas`.
#[allow(clippy::too_many_arguments)]
pub fn channel_response(
    alpha: &[f64],
    tau: &[f64],
    theta: &[f64],
    phi: &[f64],
    k: usize,
    cfg: &SystemConfig,
    lambda: f64,
    antennas: &[usize],
) -> CVec {
    let beta = cfg.beta(k);
    let mut h = CVec::zeros(antennas.len());
    for l in 0..alpha.len() {
        let gain = alpha[l] * cis(phi[l] + beta * tau[l]);
        h.axpy(gain, &array_response(theta[l], lambda, cfg.d_bar, antennas), C64::new(1.0, 0.0));
    }
    h
}

/// Uplink channel `h_k^up` over all `M` antennas.
pub fn uplink_channel(x: &PathParams, cfg: &SystemConfig, k: usize) -> CVec {
    channel_response(
        &x.alpha,
        &x.tau,
        &x.theta,
        &x.phi_up,
        k,
        cfg,
        cfg.lambda_up(),
        &cfg.all_antennas(),
    )
}

/// Downlink channel `h_k^dl` over the training antennas `M_dl`.
pub fn downlink_channel(x: &PathParams, cfg: &SystemConfig, k: usize) -> CVec {
    channel_response(
        &x.alpha,
        &x.tau,
        &x.theta,
        &x.phi_dl,
        k,
        cfg,
        cfg.lambda_dl(),
        &cfg.m_dl,
    )
}

/// Downlink channel over the whole array, used for evaluation.
pub fn downlink_channel_full(x: &PathParams, cfg: &SystemConfig, k: usize) -> CVec {
    channel_response(
        &x.alpha,
        &x.tau,
        &x.theta,
        &x.phi_dl,
        k,
        cfg,
        cfg.lambda_dl(),
        &cfg.all_antennas(),
    )
}

/// Stacked uplink pilot observation.
#[derive(Debug, Clone, PartialEq)]
pub struct UplinkObservation {
    /// Subcarriers of each `M`-sized block of `y`, in order.
    pub k_up: Vec<usize>,
    /// Pilot symbol per subcarrier, `|s_k|² = P_T`.
    pub pilots: Vec<C64>,
    pub y: CVec,
    pub m: usize,
}

impl UplinkObservation {
    pub fn block(&self, idx: usize) -> CVec {
        self.y.rows(idx * self.m, self.m).into_owned()
    }
}

/// Stacked downlink pilot observation.
#[derive(Debug, Clone, PartialEq)]
pub struct DownlinkObservation {
    pub k_dl: Vec<usize>,
    /// `p × |M_dl|` pilot matrix per subcarrier; every row has norm² `P_T`.
    pub pilots: Vec<CMat>,
    pub y: CVec,
}

/// Uplink pilots `s_k = √P_T`.
pub fn uplink_pilots(cfg: &SystemConfig) -> Vec<C64> {
    vec![C64::new(cfg.p_t.sqrt(), 0.0); cfg.k_up.len()]
}

/// Unit-modulus QPSK pilot matrices scaled so each row has norm² `P_T`.
pub fn downlink_pilots(cfg: &SystemConfig, rng: &mut SimRng) -> Vec<CMat> {
    let n = cfg.m_dl.len();
    let amp = (cfg.p_t / n as f64).sqrt();
    cfg.k_dl
        .iter()
        .map(|_| {
            CMat::from_fn(cfg.p, n, |_, _| {
                let q = rng.below(4) as f64;
                amp * cis(PI / 4.0 + q * PI / 2.0)
            })
        })
        .collect()
}

/// Rescales pilot matrices to a new `P_T`, preserving their phases.
pub fn rescale_pilots(pilots: &[CMat], p_t: f64) -> Vec<CMat> {
    pilots
        .iter()
        .map(|s| {
            let mut s = s.clone();
            for mut row in s.row_iter_mut() {
                let nrm = row.norm();
                if nrm > 0.0 {
                    row *= C64::new(p_t.sqrt() / nrm, 0.0);
                }
            }
            s
        })
        .collect()
}

/// `y_k = h_k^up·s_k + n_k` stacked over `K_up`.
pub fn synth_uplink(x: &PathParams, cfg: &SystemConfig, rng: &mut SimRng) -> UplinkObservation {
    let pilots = uplink_pilots(cfg);
    let mut y = CVec::zeros(cfg.m * cfg.k_up.len());
    for (i, &k) in cfg.k_up.iter().enumerate() {
        let h = uplink_channel(x, cfg, k);
        for m in 0..cfg.m {
            let noise = if cfg.sigma_n2 > 0.0 {
                rng.complex_normal(cfg.sigma_n2)
            } else {
                C64::new(0.0, 0.0)
            };
            y[i * cfg.m + m] = h[m] * pilots[i] + noise;
        }
    }
    UplinkObservation {
        k_up: cfg.k_up.clone(),
        pilots,
        y,
        m: cfg.m,
    }
}

/// `y_k = S_k·h_k^dl + n_k` stacked over `K_dl`.
pub fn synth_downlink(
    x: &PathParams,
    cfg: &SystemConfig,
    pilots: &[CMat],
    rng: &mut SimRng,
) -> Result<DownlinkObservation> {
    check_pilots(cfg, pilots)?;
    let p = cfg.p;
    let mut y = CVec::zeros(p * cfg.k_dl.len());
    for (i, &k) in cfg.k_dl.iter().enumerate() {
        let yk = &pilots[i] * downlink_channel(x, cfg, k);
        for r in 0..p {
            let noise = if cfg.sigma_n2 > 0.0 {
                rng.complex_normal(cfg.sigma_n2)
            } else {
                C64::new(0.0, 0.0)
            };
            y[i * p + r] = yk[r] + noise;
        }
    }
    Ok(DownlinkObservation {
        k_dl: cfg.k_dl.clone(),
        pilots: pilots.to_vec(),
        y,
    })
}

fn check_pilots(cfg: &SystemConfig, pilots: &[CMat]) -> Result<()> {
    if pilots.len() != cfg.k_dl.len() {
        return Err(Error::Dimension(format!(
            "{} pilot matrices for {} downlink subcarriers",
            pilots.len(),
            cfg.k_dl.len()
        )));
    }
    for s in pilots {
        if s.shape() != (cfg.p, cfg.m_dl.len()) {
            return Err(Error::Dimension(format!(
                "pilot matrix is {:?}, expected ({}, {})",
                s.shape(),
                cfg.p,
                cfg.m_dl.len()
            )));
        }
        for row in s.row_iter() {
            let e = row.norm_squared();
            if (e - cfg.p_t).abs() > 1e-9 * cfg.p_t {
                return Err(Error::InvalidInput(format!(
                    "pilot row energy {e} differs from P_T {}",
                    cfg.p_t
                )));
            }
        }
    }
    Ok(())
}

/// Stacked downlink measurement matrix `𝓑` of size `(p·|K_dl|) × L`, so that
/// the noiseless downlink observation equals `𝓑·g(φ_dl)`.
pub fn build_b(
    alpha: &[f64],
    tau: &[f64],
    theta: &[f64],
    cfg: &SystemConfig,
    pilots: &[CMat],
) -> Result<CMat> {
    check_pilots(cfg, pilots)?;
    let l = alpha.len();
    if tau.len() != l || theta.len() != l {
        return Err(Error::Dimension("alpha, tau, theta lengths differ".into()));
    }
    let p = cfg.p;
    let lambda = cfg.lambda_dl();
    let steer: Vec<CVec> = theta
        .iter()
        .map(|&t| array_response(t, lambda, cfg.d_bar, &cfg.m_dl))
        .collect();
    let mut b = CMat::zeros(p * cfg.k_dl.len(), l);
    for (i, &k) in cfg.k_dl.iter().enumerate() {
        let beta = cfg.beta(k);
        for col in 0..l {
            let gamma = alpha[col] * cis(beta * tau[col]);
            let v = &pilots[i] * &steer[col] * gamma;
            b.view_mut((i * p, col), (p, 1)).copy_from(&v);
        }
    }
    Ok(b)
}

/// `g(φ) = [e^{jφ_1} … e^{jφ_L}]ᵀ`.
pub fn phase_vector(phi: &[f64]) -> CVec {
    CVec::from_iterator(phi.len(), phi.iter().map(|&p| cis(p)))
}

/// Parameters entering the uplink objective, in SI units.
#[derive(Debug, Clone, Copy)]
pub struct UplinkParams<'a> {
    pub alpha: &'a [f64],
    pub tau: &'a [f64],
    pub theta: &'a [f64],
    pub phi: &'a [f64],
}

/// Objective value and gradient with respect to `(α, τ, θ, φ)`, concatenated
/// in that order (length `4L`).
#[derive(Debug, Clone)]
pub struct UplinkGradient {
    pub value: f64,
    pub grad: Vec<f64>,
}

impl UplinkGradient {
    pub fn alpha(&self) -> &[f64] {
        let l = self.grad.len() / 4;
        &self.grad[..l]
    }
    pub fn tau(&self) -> &[f64] {
        let l = self.grad.len() / 4;
        &self.grad[l..2 * l]
    }
    pub fn theta(&self) -> &[f64] {
        let l = self.grad.len() / 4;
        &self.grad[2 * l..3 * l]
    }
    pub fn phi(&self) -> &[f64] {
        let l = self.grad.len() / 4;
        &self.grad[3 * l..]
    }
}

/// Precomputed geometry for repeated evaluation of `J_up` against one
/// observation.
#[derive(Debug, Clone)]
pub struct UplinkObjective<'a> {
    obs: &'a UplinkObservation,
    /// `2π/λ_up·d̄·(m−1)` per antenna.
    gamma: Vec<f64>,
    /// `2πk·B/K` per block.
    beta: Vec<f64>,
}

impl<'a> UplinkObjective<'a> {
    pub fn new(obs: &'a UplinkObservation, cfg: &SystemConfig) -> Result<Self> {
        if obs.y.len() != obs.m * obs.k_up.len() || obs.pilots.len() != obs.k_up.len() {
            return Err(Error::Dimension("malformed uplink observation".into()));
        }
        if obs.m != cfg.m {
            return Err(Error::Dimension(format!(
                "observation has {} antennas, config has {}",
                obs.m, cfg.m
            )));
        }
        let step = TAU / cfg.lambda_up() * cfg.d_bar;
        Ok(Self {
            obs,
            gamma: (0..cfg.m).map(|m| step * m as f64).collect(),
            beta: obs.k_up.iter().map(|&k| cfg.beta(k)).collect(),
        })
    }

    pub fn observation(&self) -> &UplinkObservation {
        self.obs
    }

    /// Columns `s_k e^{jβ_k τ_l} a(θ_l)` stacked like `y`, so that
    /// `y = D·(α ⊙ e^{jφ})` for a noiseless observation.
    pub fn dictionary(&self, tau: &[f64], theta: &[f64]) -> CMat {
        let m = self.obs.m;
        let steer = self.steering(theta);
        let ph = self.delay_phase(tau, &vec![0.0; tau.len()]);
        CMat::from_fn(self.obs.y.len(), tau.len(), |row, l| {
            let (i, a) = (row / m, row % m);
            self.obs.pilots[i] * ph[i][l] * steer[l][a]
        })
    }

    /// Phases of the unconstrained least-squares path coefficients for fixed
    /// `(τ, θ)`; a cheap phase initialization.
    pub fn fit_phases(&self, tau: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        let rho = crate::linalg::lstsq(&self.dictionary(tau, theta), &self.obs.y)?;
        Ok(rho.iter().map(|r| r.arg()).collect())
    }

    fn steering(&self, theta: &[f64]) -> Vec<Vec<C64>> {
        theta
            .iter()
            .map(|t| {
                let s = t.sin();
                self.gamma.iter().map(|g| cis(g * s)).collect()
            })
            .collect()
    }

    /// `e^{j(φ_l + β_k τ_l)}` indexed `[block][path]`.
    fn delay_phase(&self, tau: &[f64], phi: &[f64]) -> Vec<Vec<C64>> {
        self.beta
            .iter()
            .map(|b| tau.iter().zip(phi).map(|(t, p)| cis(p + b * t)).collect())
            .collect()
    }

    /// Residual `y − 𝒜(x)` block by block.
    fn residual(&self, x: UplinkParams<'_>, steer: &[Vec<C64>], ph: &[Vec<C64>]) -> Vec<C64> {
        let m = self.obs.m;
        let mut r = self.obs.y.as_slice().to_vec();
        for (i, s_k) in self.obs.pilots.iter().enumerate() {
            let block = &mut r[i * m..(i + 1) * m];
            for l in 0..x.alpha.len() {
                let c = ph[i][l] * (x.alpha[l] * s_k);
                for (dst, a) in block.iter_mut().zip(&steer[l]) {
                    *dst -= c * a;
                }
            }
        }
        r
    }

    pub fn value(&self, x: UplinkParams<'_>) -> f64 {
        let steer = self.steering(x.theta);
        let ph = self.delay_phase(x.tau, x.phi);
        self.residual(x, &steer, &ph).iter().map(|z| z.norm_sqr()).sum()
    }

    /// `J` and `dJ/dp = −2·Σ Re{conj(r)·s_k·∂h/∂p}` using the per-path
    /// partials `∂h/∂α = e^{jω}`, `∂h/∂τ = jβα e^{jω}`,
    /// `∂h/∂θ = jγ_m α cos θ e^{jω}`, `∂h/∂φ = jα e^{jω}`.
    pub fn value_and_grad(&self, x: UplinkParams<'_>) -> UplinkGradient {
        let l = x.alpha.len();
        let m = self.obs.m;
        let steer = self.steering(x.theta);
        let ph = self.delay_phase(x.tau, x.phi);
        let r = self.residual(x, &steer, &ph);
        let value = r.iter().map(|z| z.norm_sqr()).sum();

        let mut grad = vec![0.0; 4 * l];
        for (i, s_k) in self.obs.pilots.iter().enumerate() {
            let block = &r[i * m..(i + 1) * m];
            for p in 0..l {
                // U = Σ_m conj(r) a,  V = Σ_m conj(r) γ_m a
                let mut u = C64::new(0.0, 0.0);
                let mut v = C64::new(0.0, 0.0);
                for ((res, a), g) in block.iter().zip(&steer[p]).zip(&self.gamma) {
                    let t = res.conj() * a;
                    u += t;
                    v += t * g;
                }
                let base = ph[i][p] * s_k;
                let bu = base * u;
                grad[p] -= 2.0 * bu.re;
                grad[l + p] -= 2.0 * (J * self.beta[i] * x.alpha[p] * bu).re;
                grad[2 * l + p] -= 2.0 * (J * x.alpha[p] * x.theta[p].cos() * base * v).re;
                grad[3 * l + p] -= 2.0 * (J * x.alpha[p] * bu).re;
            }
        }
        UplinkGradient { value, grad }
    }

    /// Residual `y − 𝒜(x)` and the Jacobian `∂𝒜/∂p` of the noiseless
    /// observation, one column per parameter in `(α, τ, θ, φ)` order.
    pub fn residual_jacobian(&self, x: UplinkParams<'_>) -> (CVec, CMat) {
        let l = x.alpha.len();
        let m = self.obs.m;
        let steer = self.steering(x.theta);
        let ph = self.delay_phase(x.tau, x.phi);
        let r = CVec::from_vec(self.residual(x, &steer, &ph));
        let mut jac = CMat::zeros(r.len(), 4 * l);
        for (i, s_k) in self.obs.pilots.iter().enumerate() {
            for p in 0..l {
                let base = ph[i][p] * s_k;
                let dtau = J * self.beta[i] * x.alpha[p] * base;
                let dtheta = J * x.alpha[p] * x.theta[p].cos() * base;
                let dphi = J * x.alpha[p] * base;
                for (a, (e, g)) in steer[p].iter().zip(&self.gamma).enumerate() {
                    let row = i * m + a;
                    jac[(row, p)] = base * e;
                    jac[(row, l + p)] = dtau * e;
                    jac[(row, 2 * l + p)] = dtheta * g * e;
                    jac[(row, 3 * l + p)] = dphi * e;
                }
            }
        }
        (r, jac)
    }
}

/// `J_up(x) = ‖y − 𝒜(x)‖²` and its real gradient over `(α, τ, θ, φ_up)`.
pub fn grad_uplink_objective(
    x: UplinkParams<'_>,
    obs: &UplinkObservation,
    cfg: &SystemConfig,
) -> Result<UplinkGradient> {
    Ok(UplinkObjective::new(obs, cfg)?.value_and_grad(x))
}

/// `J_dl(φ) = ‖y − 𝓑 g(φ)‖²` and its gradient, using `∂g_l/∂φ_l = j e^{jφ_l}`.
pub fn grad_dl_phase_objective(phi: &[f64], b: &CMat, y: &CVec) -> Result<(f64, Vec<f64>)> {
    if b.ncols() != phi.len() || b.nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "B is {:?}, phi has {}, y has {}",
            b.shape(),
            phi.len(),
            y.len()
        )));
    }
    let g = phase_vector(phi);
    let r = y - b * &g;
    let value = norm_sqr(&r);
    // Bᴴ r gives Σ_i conj(B_il) r_i; we need Σ_i conj(r_i) B_il = conj of that
    let bhr = b.adjoint() * &r;
    let grad = (0..phi.len())
        .map(|l| -2.0 * (bhr[l].conj() * J * g[l]).re)
        .collect();
    Ok((value, grad))
}
