//! Complex dense linear algebra and seeded random streams.
//!
//! Vectors and matrices are `nalgebra` dynamic types over `Complex64`. The
//! random streams are ChaCha8 generators; a single master seed fans out to
//! independent child streams keyed by a text label.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CVec = DVector<C64>;
pub type CMat = DMatrix<C64>;

pub const J: C64 = C64::new(0.0, 1.0);

/// Unit phasor `e^{j x}`.
#[inline]
pub fn cis(x: f64) -> C64 {
    let (s, c) = x.sin_cos();
    C64::new(c, s)
}

/// Wraps an angle to `[0, 2π)`.
#[inline]
pub fn wrap_2pi(x: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let w = x.rem_euclid(tau);
    // rem_euclid can return exactly TAU for tiny negative inputs
    if w >= tau {
        0.0
    } else {
        w
    }
}

pub fn norm_sqr(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Relative pivot threshold below which the pivoted QR is treated as rank deficient.
const QR_RANK_TOL: f64 = 1e-12;

/// Least-squares solution of `A x ≈ b`.
///
/// Full-column-rank systems go through a column-pivoted QR. Rank-deficient
/// (or wide) systems fall back to the SVD pseudo-inverse, which yields the
/// minimum-norm minimiser.
pub fn lstsq(a: &CMat, b: &CVec) -> Result<CVec> {
    let (p, q) = a.shape();
    if p == 0 || q == 0 {
        return Err(Error::Dimension(format!("lstsq on empty {p}x{q} matrix")));
    }
    if b.len() != p {
        return Err(Error::Dimension(format!(
            "lstsq: matrix has {p} rows but rhs has {}",
            b.len()
        )));
    }

    if p >= q {
        let qr = a.clone().col_piv_qr();
        let r = qr.r();
        let lead = r[(0, 0)].norm();
        let full_rank = lead > 0.0 && (0..q).all(|i| r[(i, i)].norm() > QR_RANK_TOL * lead);
        if full_rank {
            let qhb = qr.q().adjoint() * b;
            let r_sq = r.view((0, 0), (q, q)).into_owned();
            if let Some(mut x) = r_sq.solve_upper_triangular(&qhb) {
                qr.p().inv_permute_rows(&mut x);
                return Ok(x);
            }
        }
    }

    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = (smax * QR_RANK_TOL).max(f64::MIN_POSITIVE);
    svd.solve(b, eps)
        .map_err(|e| Error::InvalidInput(format!("lstsq svd solve failed: {e}")))
}

/// Number of singular values above `tol` times the largest one.
pub fn rank(a: &CMat, tol: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * smax).count()
}

/// FNV-1a over the label bytes, mixed with the master seed by SplitMix64.
pub fn child_seed(master: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(master ^ h)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Reproducible random stream.
#[derive(Debug, Clone)]
pub struct SimRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream derived from this stream's seed and a label.
    pub fn child(&self, label: &str) -> Self {
        Self::new(child_seed(self.seed, label))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Circularly-symmetric complex Gaussian with `E|x|² = var`.
    pub fn complex_normal(&mut self, var: f64) -> C64 {
        let s = (var / 2.0).sqrt();
        C64::new(s * self.normal(), s * self.normal())
    }

    pub fn randn(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    pub fn shuffle<T>(&mut self, v: &mut [T]) {
        use rand::seq::SliceRandom;
        v.shuffle(&mut self.inner);
    }
}

/// `n` i.i.d. standard-normal draws from `rng`.
pub fn randn(rng: &mut SimRng, n: usize) -> Vec<f64> {
    rng.randn(n)
}
