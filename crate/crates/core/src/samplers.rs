//! Exact samplers consumed by the Gibbs engine.
//!
//! - Kolmogorov–Smirnov variates by the series method (no density evaluation).
//! - Truncated normals: inverse cdf in the body, exponential or uniform
//!   envelopes in the tails.
//! - Multivariate normals from a Cholesky factor.
//! - Gamma variates.
//! - An adaptive random-walk Metropolis kernel on the log scale.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use statrs::distribution::ContinuousCDF;
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::linalg::Factor;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const PI: f64 = std::f64::consts::PI;

/// Standard normal cdf.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

// ---------------------------------------------------------------------------
// Kolmogorov–Smirnov

/// Split point between the two series representations.
const KS_SPLIT: f64 = 0.75;

/// `pi^2 / (8 t^2)` for the split point.
fn ks_left_threshold() -> f64 {
    PI * PI / (8.0 * KS_SPLIT * KS_SPLIT)
}

/// Cdf of the asymptotic Kolmogorov–Smirnov distribution.
pub fn ks_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < KS_SPLIT {
        // sqrt(2 pi)/x * sum exp(-(2n-1)^2 pi^2 / (8 x^2))
        let g = PI * PI / (8.0 * x * x);
        let mut s = 0.0;
        for n in 1..50 {
            let k = (2 * n - 1) as f64;
            let term = (-k * k * g).exp();
            s += term;
            if term < 1e-17 * s {
                break;
            }
        }
        4.0 * (g / PI).sqrt() * s
    } else {
        // 1 - 2 sum (-1)^{n-1} exp(-2 n^2 x^2)
        let mut s = 0.0;
        for n in 1..100 {
            let nf = n as f64;
            let term = (-2.0 * nf * nf * x * x).exp();
            s += if n % 2 == 1 { term } else { -term };
            if term < 1e-17 {
                break;
            }
        }
        1.0 - 2.0 * s
    }
}

/// Draw from the asymptotic Kolmogorov–Smirnov distribution.
pub fn sample_ks<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let left_mass = ks_cdf(KS_SPLIT);
    if rng.random::<f64>() < left_mass {
        ks_left(rng)
    } else {
        ks_right(rng)
    }
}

/// Right piece `x > t`: envelope `x exp(-2x^2)`, accepted against the
/// alternating series `sum (-1)^{n+1} n^2 exp(-2(n^2-1)x^2)`.
fn ks_right<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let t2 = KS_SPLIT * KS_SPLIT;
    loop {
        let e: f64 = Exp1.sample(rng);
        let u: f64 = rng.random();
        let x = (t2 + 0.5 * e).sqrt();
        let x2 = x * x;
        let mut s = 1.0;
        let mut n = 1u32;
        loop {
            n += 1;
            let nf = n as f64;
            let term = nf * nf * (-2.0 * (nf * nf - 1.0) * x2).exp();
            if n % 2 == 0 {
                s -= term;
                if u <= s {
                    return x;
                }
            } else {
                s += term;
                if u > s {
                    break;
                }
            }
        }
    }
}

/// Ratio of the n-th to the first term of the left-piece density in
/// `g = pi^2 / (8 x^2)`.
fn ks_left_term_ratio(n: u32, g: f64) -> f64 {
    let k = (2 * n - 1) as f64;
    (2.0 * k * k * g - 1.0) / (2.0 * g - 1.0) * (-(k * k - 1.0) * g).exp()
}

/// Left piece `x <= t`, sampled in `g = pi^2/(8x^2) >= g0`.
///
/// The density of `g` is a positive series whose leading term is
/// proportional to `(2g - 1) g^{-1/2} e^{-g}`. That term is drawn by rejection
/// from a shifted exponential; the remaining terms (relative size below
/// `1e-6`) are handled by a bounded-remainder acceptance test.
fn ks_left<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let g0 = ks_left_threshold();
    let rho = 1.0 - 1.0 / (2.0 * g0);
    let log_r = |g: f64| (2.0 * g - 1.0).ln() - 0.5 * g.ln() - (1.0 - rho) * g;
    // maximiser of log_r on [g0, inf): root of 2g^2 - (1 + 2 g0) g - g0 = 0
    let b = 1.0 + 2.0 * g0;
    let g_star = ((b + (b * b + 8.0 * g0).sqrt()) / 4.0).max(g0);
    let log_r_max = log_r(g_star);
    let c = 1.0 + (2..6).map(|n| ks_left_term_ratio(n, g0)).sum::<f64>();
    loop {
        let e: f64 = Exp1.sample(rng);
        let g = g0 + e / rho;
        let u1: f64 = rng.random();
        if u1.ln() > log_r(g) - log_r_max {
            continue;
        }
        let uc = rng.random::<f64>() * c;
        let mut lower = 1.0;
        let mut n = 2u32;
        let accepted = loop {
            if uc <= lower {
                break true;
            }
            let next = ks_left_term_ratio(n, g);
            // terms shrink by far more than half, so twice the next term bounds the tail
            if uc > lower + 2.0 * next {
                break false;
            }
            lower += next;
            n += 1;
        };
        if accepted {
            return PI / (8.0 * g).sqrt();
        }
    }
}

// ---------------------------------------------------------------------------
// Truncated normal

/// Standardised lower bound beyond which the exponential envelope is used.
const TN_TAIL_SWITCH: f64 = 0.4;
/// Standardised distance beyond which an interval is numerically empty.
const TN_EMPTY: f64 = 38.0;

/// Draw from `N(mean, var)` restricted to `(lo, hi)`; either bound may be infinite.
pub fn sample_truncated_normal<R: Rng + ?Sized>(mean: f64, var: f64, lo: f64, hi: f64, rng: &mut R) -> Result<f64> {
    if !(var > 0.0) || !var.is_finite() || !mean.is_finite() {
        return Err(Error::InvalidParameter(format!("truncated normal with mean {mean}, variance {var}")));
    }
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!("empty interval ({lo}, {hi})")));
    }
    let sd = var.sqrt();
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    if a > TN_EMPTY || b < -TN_EMPTY {
        return Err(Error::InvalidParameter(format!(
            "interval ({lo}, {hi}) is numerically empty under N({mean}, {var})"
        )));
    }
    Ok(mean + sd * std_truncated(a, b, rng))
}

fn std_truncated<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a >= TN_TAIL_SWITCH {
        upper_tail(a, b, rng)
    } else if b <= -TN_TAIL_SWITCH {
        -upper_tail(-b, -a, rng)
    } else {
        inverse_cdf_central(a, b, rng)
    }
}

/// `a >= 0.4`: uniform envelope for short intervals, else translated exponential.
fn upper_tail<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if b.is_finite() && b - a < 1.0 / a.max(1.0) {
        loop {
            let z = a + (b - a) * rng.random::<f64>();
            let u: f64 = rng.random();
            if u.ln() <= 0.5 * (a * a - z * z) {
                return z;
            }
        }
    }
    let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = Exp1.sample(rng);
        let z = a + e / alpha;
        if z >= b {
            continue;
        }
        let u: f64 = rng.random();
        if u.ln() <= -0.5 * (z - alpha) * (z - alpha) {
            return z;
        }
    }
}

fn inverse_cdf_central<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a >= 0.0 {
        // upper-tail probabilities keep precision for large z
        let pa = norm_cdf(-a);
        let pb = norm_cdf(-b);
        loop {
            let p = pb + rng.random::<f64>() * (pa - pb);
            let z = -norm_quantile(p);
            if z.is_finite() && z > a && z < b {
                return z;
            }
        }
    } else {
        let pa = norm_cdf(a);
        let pb = norm_cdf(b);
        loop {
            let p = pa + rng.random::<f64>() * (pb - pa);
            let z = norm_quantile(p);
            if z.is_finite() && z > a && z < b {
                return z;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Multivariate normal, gamma

pub fn sample_mvn<R: Rng + ?Sized>(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut R) -> Result<DVector<f64>> {
    let f = Factor::new(cov.clone(), "mvn covariance")?;
    Ok(mvn_from_factor(mean, &f, rng))
}

/// `mean + L z` for a factor `L L' = cov`.
pub fn mvn_from_factor<R: Rng + ?Sized>(mean: &DVector<f64>, cov: &Factor, rng: &mut R) -> DVector<f64> {
    let z = standard_normals(mean.len(), rng);
    mean + cov.lower_mul(&z)
}

/// Draw from `N(P^{-1} b, P^{-1})` given the factor of the precision `P`.
pub fn mvn_from_precision<R: Rng + ?Sized>(rhs: &DVector<f64>, precision: &Factor, rng: &mut R) -> DVector<f64> {
    let mean = precision.solve(rhs);
    let z = standard_normals(rhs.len(), rng);
    mean + precision.upper_solve(&z)
}

pub fn standard_normals<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

/// Gamma draw with the given shape and rate.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && rate > 0.0) || !shape.is_finite() || !rate.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma shape {shape}, rate {rate}")));
    }
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(g.sample(rng))
}

/// Inverse-gamma draw (shape, scale): reciprocal of a gamma(shape, rate = scale).
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    Ok(1.0 / sample_gamma(shape, scale, rng)?)
}

/// Quantile of the inverse-gamma distribution with the given shape and scale.
pub fn inverse_gamma_quantile(shape: f64, scale: f64, p: f64) -> f64 {
    let g = statrs::distribution::Gamma::new(shape, scale).expect("valid gamma");
    1.0 / g.inverse_cdf(1.0 - p)
}

// ---------------------------------------------------------------------------
// Adaptive random-walk Metropolis on the log scale

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveRwState {
    /// Current value on the log scale.
    pub log_value: f64,
    pub log_sd: f64,
    pub target_rate: f64,
    pub batch_size: usize,
    pub frozen: bool,
    batch_accepted: usize,
    batch_seen: usize,
    batches: usize,
    pub accepted: usize,
    pub proposed: usize,
}

impl AdaptiveRwState {
    pub fn new(value: f64, proposal_sd: f64) -> Self {
        assert!(value > 0.0 && proposal_sd > 0.0);
        AdaptiveRwState {
            log_value: value.ln(),
            log_sd: proposal_sd.ln(),
            target_rate: 0.33,
            batch_size: 50,
            frozen: false,
            batch_accepted: 0,
            batch_seen: 0,
            batches: 0,
            accepted: 0,
            proposed: 0,
        }
    }

    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }

    pub fn proposal_sd(&self) -> f64 {
        self.log_sd.exp()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    /// Stops adaptation and resets the acceptance counters.
    pub fn freeze(&mut self) {
        self.frozen = true;
        self.accepted = 0;
        self.proposed = 0;
    }
}

/// One Metropolis step for a positive parameter.
///
/// `log_target` is the log density of the parameter on its natural scale; the
/// walk runs on the log scale and includes the Jacobian. A proposal at which
/// the target fails or is not finite is rejected. While not frozen, the
/// proposal log-sd moves by `min(0.1, k^{-1/2})` after each batch `k`, up when
/// the batch acceptance exceeds the target rate and down otherwise.
pub fn adaptive_rw_step<R, F>(state: &mut AdaptiveRwState, mut log_target: F, rng: &mut R) -> Result<bool>
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> Result<f64>,
{
    let current = log_target(state.value())?;
    if !current.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "log target not finite at current value {}",
            state.value()
        )));
    }
    let z: f64 = StandardNormal.sample(rng);
    let proposal = state.log_value + state.proposal_sd() * z;
    let accept = match log_target(proposal.exp()) {
        Ok(lp) if lp.is_finite() => {
            let log_ratio = (lp + proposal) - (current + state.log_value);
            rng.random::<f64>().ln() < log_ratio
        }
        _ => false,
    };
    if accept {
        state.log_value = proposal;
    }
    state.proposed += 1;
    state.accepted += accept as usize;
    if !state.frozen {
        state.batch_seen += 1;
        state.batch_accepted += accept as usize;
        if state.batch_seen == state.batch_size {
            state.batches += 1;
            let rate = state.batch_accepted as f64 / state.batch_size as f64;
            let delta = (1.0 / (state.batches as f64).sqrt()).min(0.1);
            state.log_sd += if rate > state.target_rate { delta } else { -delta };
            state.batch_seen = 0;
            state.batch_accepted = 0;
        }
    }
    Ok(accept)
}
