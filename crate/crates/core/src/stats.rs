//! Small numeric helpers shared across modules.

/// Fixed-order incremental mean. Identical inputs give exactly that value back.
pub fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut m = 0.0;
    let mut k = 0usize;
    for x in xs {
        k += 1;
        m += (x - m) / k as f64;
    }
    if k == 0 {
        f64::NAN
    } else {
        m
    }
}

/// Neumaier-compensated sum.
pub fn sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs.iter().copied());
    let n = xs.len() as f64;
    sum(xs.iter().map(|x| (x - m) * (x - m))) / (n - 1.0)
}

/// Empirical quantile with linear interpolation between order statistics
/// (the usual "type 7" definition). `sorted` must be ascending.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(xs: &[f64], p: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&v, p)
}

/// Posterior-style summary: mean with 5% and 95% quantiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub q05: f64,
    pub q95: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let mut v = xs.to_vec();
        v.sort_by(|a, b| a.total_cmp(b));
        Summary {
            mean: mean(xs.iter().copied()),
            q05: quantile_sorted(&v, 0.05),
            q95: quantile_sorted(&v, 0.95),
        }
    }
}

pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Centered moving average with window `2 * half + 1`, shrinking at the ends.
pub fn centered_moving_average(xs: &[f64], half: usize) -> Vec<f64> {
    (0..xs.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(xs.len() - 1);
            mean(xs[lo..=hi].iter().copied())
        })
        .collect()
}
