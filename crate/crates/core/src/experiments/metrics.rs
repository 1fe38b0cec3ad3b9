//! Channel-estimate quality metrics.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::linalg::{wrap_2pi, CVec, SimRng, C64};

fn check_pair(h: &[CVec], h_hat: &[CVec]) -> Result<()> {
    if h.is_empty() || h.len() != h_hat.len() {
        return Err(Error::Dimension(format!("{} true vs {} estimated channels", h.len(), h_hat.len())));
    }
    if let Some(k) = h.iter().zip(h_hat).position(|(a, b)| a.len() != b.len()) {
        return Err(Error::Dimension(format!("channel length mismatch at subcarrier index {k}")));
    }
    Ok(())
}

/// `(1/K)·Σ_k ‖h_k − ĥ_k‖² / ‖h_k‖²`, linear.
pub fn nmse(h: &[CVec], h_hat: &[CVec]) -> Result<f64> {
    check_pair(h, h_hat)?;
    let mut acc = 0.0;
    for (k, (a, b)) in h.iter().zip(h_hat).enumerate() {
        let e = a.norm_squared();
        if !(e > 0.0) {
            return Err(Error::ZeroChannel(k));
        }
        acc += (a - b).norm_squared() / e;
    }
    Ok(acc / h.len() as f64)
}

/// [`nmse`] in dB.
pub fn nmse_db(h: &[CVec], h_hat: &[CVec]) -> Result<f64> {
    Ok(10.0 * nmse(h, h_hat)?.log10())
}

/// `h_kᴴ ŵ_k` with the MRT beam `ŵ_k = ĥ_k/‖ĥ_k‖`, or `None` when `ĥ_k = 0`.
fn effective_gain(h: &CVec, h_hat: &CVec) -> Option<C64> {
    let n = h_hat.norm();
    (n > 0.0).then(|| h.dotc(h_hat) / n)
}

/// Mean MRT rate `(1/K)·Σ_k log2(1 + P_T |h_kᴴŵ_k|² / σ²)` in bits/s/Hz.
pub fn rate(h: &[CVec], h_hat: &[CVec], p_t: f64, sigma_n2: f64) -> Result<f64> {
    check_pair(h, h_hat)?;
    if !(sigma_n2 > 0.0) || !(p_t >= 0.0) {
        return Err(Error::InvalidInput("rate needs sigma_n2 > 0 and p_t >= 0".into()));
    }
    let total: f64 = h
        .iter()
        .zip(h_hat)
        .map(|(a, b)| {
            let g = effective_gain(a, b).map_or(0.0, |g| g.norm_sqr());
            (1.0 + p_t * g / sigma_n2).log2()
        })
        .sum();
    Ok(total / h.len() as f64)
}

const QPSK: [C64; 4] = [
    C64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    C64::new(-FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    C64::new(-FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
    C64::new(FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
];

fn qpsk_decide(r: C64) -> usize {
    match (r.re >= 0.0, r.im >= 0.0) {
        (true, true) => 0,
        (false, true) => 1,
        (false, false) => 2,
        (true, false) => 3,
    }
}

/// Monte-Carlo QPSK symbol error rate over `trials` symbols per subcarrier.
///
/// Each symbol is sent as `√P_T·s` over the MRT beam from `ĥ_k`, received as
/// `r = √P_T (h_kᴴŵ_k) s + n`, equalized by the estimated gain `‖ĥ_k‖` and
/// sliced to the nearest constellation point. Without an estimate the
/// receiver guesses.
pub fn ser_qpsk(h: &[CVec], h_hat: &[CVec], p_t: f64, sigma_n2: f64, trials: usize, rng: &mut SimRng) -> Result<f64> {
    check_pair(h, h_hat)?;
    if trials == 0 {
        return Err(Error::InvalidInput("ser needs at least one trial".into()));
    }
    if !(sigma_n2 >= 0.0) || !(p_t > 0.0) {
        return Err(Error::InvalidInput("ser needs sigma_n2 >= 0 and p_t > 0".into()));
    }
    let amp = p_t.sqrt();
    let mut errors = 0usize;
    for (a, b) in h.iter().zip(h_hat) {
        let gain = effective_gain(a, b);
        let est = b.norm();
        for _ in 0..trials {
            let sent = rng.below(4);
            let noise = rng.complex_normal(sigma_n2);
            let decided = match gain {
                Some(g) => qpsk_decide((g * QPSK[sent] * amp + noise) / (amp * est)),
                None => rng.below(4),
            };
            errors += usize::from(decided != sent);
        }
    }
    Ok(errors as f64 / (trials * h.len()) as f64)
}

/// `φ + ε` with `ε ~ N(0, σ²)`, `σ` given in degrees, wrapped to `[0, 2π)`.
pub fn inject_feedback_error(phi: &[f64], sigma_deg: f64, rng: &mut SimRng) -> Vec<f64> {
    let sigma = sigma_deg.to_radians();
    phi.iter().map(|p| wrap_2pi(p + sigma * rng.normal())).collect()
}
