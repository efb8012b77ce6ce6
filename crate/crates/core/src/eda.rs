//! Exploratory statistics: yearly record rates, persistence tables with
//! continuity-corrected log odds ratios, and maximum-likelihood logit fits
//! compared by AIC.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::design::{build_design_row, harmonics, OrthoPolyBasis};
use crate::error::{Error, Result};
use crate::linalg::Factor;
use crate::records::RecordTensor;

fn check_year(tensor: &RecordTensor, t: usize) -> Result<()> {
    if t < 2 || t > tensor.years() {
        return Err(Error::OutOfRange(format!("year {t} outside 2..={}", tensor.years())));
    }
    Ok(())
}

/// Share of record cells in year `t` over all sites and days (ties count as 0).
pub fn empirical_p_hat(tensor: &RecordTensor, t: usize) -> Result<f64> {
    check_year(tensor, t)?;
    let mut k = 0usize;
    for s in 0..tensor.n_sites() {
        for d in 1..=tensor.days() {
            k += tensor.get(s, t, d).strict() as usize;
        }
    }
    Ok(k as f64 / (tensor.n_sites() * tensor.days()) as f64)
}

/// Counts `n[j][k]`: current day `j`, previous day `k`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Table2x2 {
    pub n: [[u64; 2]; 2],
}

impl Table2x2 {
    pub fn total(&self) -> u64 {
        self.n.iter().flatten().sum()
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        Table2x2 {
            n: [[n[0][0], n[1][0]], [n[0][1], n[1][1]]],
        }
    }
}

/// Counts `n[j][k][v]`: current day `j`, one day before `k`, two days before `v`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Table2x2x2 {
    pub n: [[[u64; 2]; 2]; 2],
}

impl Table2x2x2 {
    pub fn total(&self) -> u64 {
        self.n.iter().flatten().flatten().sum()
    }

    /// Sums out the two-days-before axis.
    pub fn collapse(&self) -> Table2x2 {
        let mut out = Table2x2::default();
        for j in 0..2 {
            for k in 0..2 {
                out.n[j][k] = self.n[j][k][0] + self.n[j][k][1];
            }
        }
        out
    }
}

fn lag_strict(tensor: &RecordTensor, s: usize, t: usize, d: usize, back: usize) -> usize {
    tensor.lag(s, t, d, back).map_or(0, |i| i.strict() as usize)
}

pub fn persistence_table(tensor: &RecordTensor, t: usize) -> Result<Table2x2> {
    check_year(tensor, t)?;
    let mut out = Table2x2::default();
    for s in 0..tensor.n_sites() {
        for d in 1..=tensor.days() {
            let j = tensor.get(s, t, d).strict() as usize;
            out.n[j][lag_strict(tensor, s, t, d, 1)] += 1;
        }
    }
    Ok(out)
}

pub fn persistence_table3(tensor: &RecordTensor, t: usize) -> Result<Table2x2x2> {
    check_year(tensor, t)?;
    let mut out = Table2x2x2::default();
    for s in 0..tensor.n_sites() {
        for d in 1..=tensor.days() {
            let j = tensor.get(s, t, d).strict() as usize;
            let k = lag_strict(tensor, s, t, d, 1);
            let v = lag_strict(tensor, s, t, d, 2);
            out.n[j][k][v] += 1;
        }
    }
    Ok(out)
}

fn corrected(n: u64) -> f64 {
    n as f64 + 0.5
}

pub fn log_odds_ratio(table: &Table2x2) -> f64 {
    let n = &table.n;
    (corrected(n[1][1]) * corrected(n[0][0])).ln() - (corrected(n[0][1]) * corrected(n[1][0])).ln()
}

/// `(LOR given a record two days before, LOR given none)`.
pub fn second_order_lors(table: &Table2x2x2) -> (f64, f64) {
    let n = &table.n;
    let lor = |v: usize| {
        (corrected(n[0][0][v]) * corrected(n[1][1][v])).ln() - (corrected(n[1][0][v]) * corrected(n[0][1][v])).ln()
    };
    (lor(1), lor(0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YearSummary {
    pub t: usize,
    pub p_hat: f64,
    pub lor1: f64,
    pub lor_given_record: f64,
    pub lor_given_none: f64,
}

pub fn yearly_summary(tensor: &RecordTensor) -> Result<Vec<YearSummary>> {
    (2..=tensor.years())
        .map(|t| {
            let t3 = persistence_table3(tensor, t)?;
            let (a, b) = second_order_lors(&t3);
            Ok(YearSummary {
                t,
                p_hat: empirical_p_hat(tensor, t)?,
                lor1: log_odds_ratio(&t3.collapse()),
                lor_given_record: a,
                lor_given_none: b,
            })
        })
        .collect()
}

/// Drops every site in `region` except `keep`.
pub fn dedupe_region(tensor: &RecordTensor, region: &[usize], keep: usize) -> Result<(RecordTensor, Vec<usize>)> {
    if !region.contains(&keep) {
        return Err(Error::InvalidParameter(format!("site {keep} is not in the region list")));
    }
    let kept: Vec<usize> = (0..tensor.n_sites()).filter(|s| *s == keep || !region.contains(s)).collect();
    Ok((tensor.select_sites(&kept), kept))
}

// ---------------------------------------------------------------------------
// Logit MLE

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogitFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub loglik: f64,
    pub dof: usize,
    pub aic: f64,
    pub iterations: usize,
    pub converged: bool,
}

const MAX_ITER: usize = 50;
const DEV_TOL: f64 = 1e-10;
const SEPARATION_BOUND: f64 = 30.0;

/// Bernoulli log-likelihood term `y eta - log(1 + e^eta)`.
fn loglik_term(y: u8, eta: f64) -> f64 {
    let log1pexp = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
    y as f64 * eta - log1pexp
}

struct Rows<'a> {
    /// Row-major copy: row `i` is `xt[i*p..(i+1)*p]`.
    xt: Vec<f64>,
    p: usize,
    y: &'a [u8],
    offset: Option<&'a [f64]>,
}

impl Rows<'_> {
    fn eta(&self, i: usize, beta: &[f64]) -> f64 {
        let row = &self.xt[i * self.p..(i + 1) * self.p];
        let lin: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        lin + self.offset.map_or(0.0, |o| o[i])
    }

    fn loglik(&self, beta: &[f64]) -> f64 {
        (0..self.y.len()).map(|i| loglik_term(self.y[i], self.eta(i, beta))).sum()
    }

    /// Gradient and Fisher information.
    fn score_info(&self, beta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let p = self.p;
        let mut g = DVector::zeros(p);
        let mut h = DMatrix::zeros(p, p);
        for i in 0..self.y.len() {
            let mu = crate::stats::logistic(self.eta(i, beta));
            let w = mu * (1.0 - mu);
            let r = self.y[i] as f64 - mu;
            let row = &self.xt[i * p..(i + 1) * p];
            for a in 0..p {
                g[a] += row[a] * r;
                let wa = w * row[a];
                for b in 0..=a {
                    h[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
        }
        (g, h)
    }
}

/// Maximum-likelihood logistic regression by Newton/IRLS with step halving.
///
/// `x` may have zero columns, in which case only the offset enters and the
/// fit has 0 degrees of freedom.
pub fn fit_logit_mle(x: &DMatrix<f64>, y: &[u8], offset: Option<&[f64]>) -> Result<LogitFit> {
    let (n, p) = x.shape();
    if y.len() != n || offset.is_some_and(|o| o.len() != n) {
        return Err(Error::MalformedInput("response/offset length does not match design".into()));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::MalformedInput("response must be 0/1".into()));
    }
    let rows = Rows {
        xt: x.transpose().as_slice().to_vec(),
        p,
        y,
        offset,
    };
    let mut beta = vec![0.0; p];
    let mut ll = rows.loglik(&beta);
    if p == 0 {
        return Ok(finish(&rows, beta, ll, 0, true)?);
    }
    let mut converged = false;
    let mut polish = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let (g, h) = rows.score_info(&beta);
        let f = Factor::new(h, "logit information")?;
        let step = f.solve(&g);
        let mut scale = 1.0;
        let mut next;
        let mut next_ll;
        loop {
            next = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect::<Vec<_>>();
            next_ll = rows.loglik(&next);
            if next_ll >= ll - 1e-12 * ll.abs() || scale < 1e-10 {
                break;
            }
            scale *= 0.5;
        }
        let rel = (next_ll - ll).abs() / (2.0 * next_ll.abs() + 0.1);
        beta = next;
        ll = next_ll;
        if let Some(m) = beta.iter().map(|b| b.abs()).reduce(f64::max) {
            if m > SEPARATION_BOUND {
                return Err(Error::Separation { max_abs: m });
            }
        }
        if polish {
            converged = true;
            break;
        }
        if rel < DEV_TOL {
            // one more full Newton step drives the score to rounding level
            polish = true;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations,
            detail: "logit deviance still changing".into(),
        });
    }
    // fitted probabilities pinned at 0 or 1 mean the optimum lies at infinity
    let max_eta = (0..n).map(|i| rows.eta(i, &beta).abs()).fold(0.0, f64::max);
    if max_eta > SEPARATION_BOUND {
        return Err(Error::Separation { max_abs: max_eta });
    }
    finish(&rows, beta, ll, iterations, converged)
}

fn finish(rows: &Rows, beta: Vec<f64>, ll: f64, iterations: usize, converged: bool) -> Result<LogitFit> {
    let p = beta.len();
    let std_errors = if p > 0 {
        let (_, h) = rows.score_info(&beta);
        let inv = Factor::new(h, "logit information")?.inverse();
        (0..p).map(|j| inv[(j, j)].sqrt()).collect()
    } else {
        Vec::new()
    };
    Ok(LogitFit {
        coefficients: beta,
        std_errors,
        loglik: ll,
        dof: p,
        aic: -2.0 * ll + 2.0 * p as f64,
        iterations,
        converged,
    })
}

/// Score vector of the Bernoulli log-likelihood at `beta`.
pub fn logit_gradient(x: &DMatrix<f64>, y: &[u8], offset: Option<&[f64]>, beta: &[f64]) -> Vec<f64> {
    let rows = Rows {
        xt: x.transpose().as_slice().to_vec(),
        p: x.ncols(),
        y,
        offset,
    };
    rows.score_info(beta).0.iter().copied().collect()
}

// ---------------------------------------------------------------------------
// Nested fixed-effects models

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NestedModel {
    Stationary,
    Linear,
    Quadratic,
    FirstOrderAr,
    SecondOrderAr,
    Seasonal,
    LogDistTrend,
    LogDistAr,
    Cubic,
}

impl NestedModel {
    pub const ALL: [NestedModel; 9] = [
        NestedModel::Stationary,
        NestedModel::Linear,
        NestedModel::Quadratic,
        NestedModel::FirstOrderAr,
        NestedModel::SecondOrderAr,
        NestedModel::Seasonal,
        NestedModel::LogDistTrend,
        NestedModel::LogDistAr,
        NestedModel::Cubic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NestedModel::Stationary => "stationary",
            NestedModel::Linear => "linear_trend",
            NestedModel::Quadratic => "quadratic_trend",
            NestedModel::FirstOrderAr => "plus_ar1",
            NestedModel::SecondOrderAr => "plus_ar2",
            NestedModel::Seasonal => "plus_seasonal",
            NestedModel::LogDistTrend => "plus_logdist_trend",
            NestedModel::LogDistAr => "plus_logdist_ar",
            NestedModel::Cubic => "cubic_trend",
        }
    }

    /// Number of free coefficients.
    pub fn dof(self) -> usize {
        self.columns().len() + (self == NestedModel::Cubic) as usize
    }

    /// Indices into the 21-entry main row (cubic adds its own column).
    fn columns(self) -> Vec<usize> {
        match self {
            NestedModel::Stationary => vec![],
            NestedModel::Linear => vec![0, 1],
            NestedModel::Quadratic | NestedModel::Cubic => vec![0, 1, 2],
            NestedModel::FirstOrderAr => vec![0, 1, 2, 3, 6],
            NestedModel::SecondOrderAr => vec![0, 1, 2, 3, 6, 4, 5, 7, 8],
            NestedModel::Seasonal => (0..15).collect(),
            NestedModel::LogDistTrend => (0..18).collect(),
            NestedModel::LogDistAr => (0..21).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelComparison {
    pub model: NestedModel,
    pub fit: LogitFit,
}

/// Response and full-row covariates for every `(site, t >= 2, day)`, using the
/// wrap-around lag convention for the first two days and ties as 0.
pub struct EdaData {
    pub y: Vec<u8>,
    pub t: Vec<usize>,
    /// Row-major, 21 entries per row.
    pub rows: Vec<f64>,
    pub cubic: Vec<f64>,
}

pub fn eda_data(tensor: &RecordTensor, dists: &[f64]) -> Result<EdaData> {
    if dists.len() != tensor.n_sites() {
        return Err(Error::MalformedInput("one distance per site required".into()));
    }
    let basis = OrthoPolyBasis::new(tensor.years())?;
    let mut data = EdaData {
        y: Vec::new(),
        t: Vec::new(),
        rows: Vec::new(),
        cubic: Vec::new(),
    };
    for s in 0..tensor.n_sites() {
        for t in 2..=tensor.years() {
            for d in 1..=tensor.days() {
                let l1 = lag_strict(tensor, s, t, d, 1) as f64;
                let l2 = lag_strict(tensor, s, t, d, 2) as f64;
                // day index only drives the harmonics, which are evaluated directly
                let mut row = build_design_row(t, d.max(3), l1, l2, dists[s], &basis)?.0;
                if d < 3 {
                    let (sn, cs) = harmonics(d);
                    row[9] = sn;
                    row[10] = cs;
                    row[11] = sn * row[1];
                    row[12] = cs * row[1];
                    row[13] = sn * row[2];
                    row[14] = cs * row[2];
                }
                data.rows.extend_from_slice(&row);
                data.y.push(tensor.get(s, t, d).strict());
                data.t.push(t);
            }
        }
    }
    // cubic term: centred cube of log(t - 1), standardised
    let x: Vec<f64> = data.t.iter().map(|&t| ((t - 1) as f64).ln()).collect();
    let m = crate::stats::mean(x.iter().copied());
    let c: Vec<f64> = x.iter().map(|v| (v - m).powi(3)).collect();
    let sd = crate::stats::variance(&c).sqrt().max(1e-300);
    data.cubic = c.iter().map(|v| v / sd).collect();
    Ok(data)
}

pub fn fit_nested_model(data: &EdaData, model: NestedModel) -> Result<LogitFit> {
    let cols = model.columns();
    let n = data.y.len();
    let extra = (model == NestedModel::Cubic) as usize;
    let p = cols.len() + extra;
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let row = &data.rows[i * 21..(i + 1) * 21];
        for (j, &c) in cols.iter().enumerate() {
            x[(i, j)] = row[c];
        }
        if extra == 1 {
            x[(i, p - 1)] = data.cubic[i];
        }
    }
    let offset: Option<Vec<f64>> =
        (model == NestedModel::Stationary).then(|| data.t.iter().map(|&t| -((t - 1) as f64).ln()).collect());
    fit_logit_mle(&x, &data.y, offset.as_deref())
}

pub fn compare_nested_models(tensor: &RecordTensor, dists: &[f64]) -> Result<Vec<ModelComparison>> {
    let data = eda_data(tensor, dists)?;
    NestedModel::ALL
        .iter()
        .map(|&model| Ok(ModelComparison { model, fit: fit_nested_model(&data, model)? }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::Indicator::{self, NotRecord, Record};
    use crate::rng::seeded;
    use rand::Rng;

    fn ind(b: bool) -> Indicator {
        if b {
            Record
        } else {
            NotRecord
        }
    }

    #[test]
    fn p_hat_extremes() {
        let zeros = RecordTensor::from_fn(3, 4, 10, |_, t, _| ind(t == 1));
        assert_eq!(empirical_p_hat(&zeros, 3).unwrap(), 0.0);
        let ones = RecordTensor::from_fn(3, 4, 10, |_, _, _| Record);
        assert_eq!(empirical_p_hat(&ones, 3).unwrap(), 1.0);
        assert!(empirical_p_hat(&ones, 1).is_err());
        assert!(empirical_p_hat(&ones, 5).is_err());
    }

    #[test]
    fn tables_for_simple_patterns() {
        let zeros = RecordTensor::from_fn(2, 3, 365, |_, t, _| ind(t == 1));
        let tab = persistence_table(&zeros, 3).unwrap();
        assert_eq!(tab.n[0][0], 730);
        assert_eq!(tab.total(), 730);
        let alt = RecordTensor::from_fn(1, 3, 365, |_, _, d| ind(d % 2 == 0));
        let tab = persistence_table(&alt, 2).unwrap();
        assert_eq!(tab.n[1][1], 0);
        // day 1 of year 2 follows day 365 of year 1 (odd, no record), so both off-diagonals match
        assert_eq!(tab.n[0][1], tab.n[1][0]);
    }

    #[test]
    fn lor_values() {
        assert_eq!(log_odds_ratio(&Table2x2::default()), 0.0);
        let sym = Table2x2 { n: [[7, 7], [7, 7]] };
        assert_eq!(log_odds_ratio(&sym), 0.0);
        let t = Table2x2 { n: [[100, 5], [4, 3]] };
        let direct = (3.5f64 * 100.5 / (5.5 * 4.5)).ln();
        assert!((log_odds_ratio(&t) - direct).abs() < 1e-14);
        assert!((log_odds_ratio(&t.transpose()) - direct).abs() < 1e-14);
        assert_eq!(second_order_lors(&Table2x2x2::default()), (0.0, 0.0));
    }

    #[test]
    fn balanced_intercept_is_zero() {
        let x = DMatrix::from_element(10, 1, 1.0);
        let y: Vec<u8> = (0..10).map(|i| (i % 2) as u8).collect();
        let fit = fit_logit_mle(&x, &y, None).unwrap();
        assert!(fit.coefficients[0].abs() < 1e-10);
        assert_eq!(fit.dof, 1);
    }

    #[test]
    fn offset_only_has_zero_dof() {
        let mut rng = seeded(3);
        let t: Vec<usize> = (0..2000).map(|i| 2 + i % 60).collect();
        let y: Vec<u8> = t.iter().map(|&t| (rng.random::<f64>() < 1.0 / t as f64) as u8).collect();
        let off: Vec<f64> = t.iter().map(|&t| -((t - 1) as f64).ln()).collect();
        let fit = fit_logit_mle(&DMatrix::zeros(2000, 0), &y, Some(&off)).unwrap();
        assert_eq!(fit.dof, 0);
        assert_eq!(fit.aic, -2.0 * fit.loglik);
    }

    #[test]
    fn separation_is_flagged() {
        let x = DMatrix::from_row_slice(6, 2, &[1.0, -3.0, 1.0, -2.0, 1.0, -1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = [0, 0, 0, 1, 1, 1];
        let r = fit_logit_mle(&x, &y, None);
        assert!(matches!(r, Err(Error::Separation { .. })), "{r:?}");
    }

    #[test]
    fn dedupe_keeps_one() {
        let tensor = RecordTensor::from_fn(6, 3, 5, |s, _, _| ind(s % 2 == 0));
        let (out, kept) = dedupe_region(&tensor, &[1, 2, 3], 2).unwrap();
        assert_eq!(kept, vec![0, 2, 4, 5]);
        assert_eq!(out.n_sites(), 4);
        assert!(dedupe_region(&tensor, &[1, 2], 0).is_err());
    }
}
