//! Covariate rows for the record-probability model.
//!
//! Main rows (day >= 3) carry the intercept and 20 predictors; the first two
//! days of each year use reduced three-entry rows.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::{RecordTensor, DAYS_PER_YEAR};

pub const MAIN_NAMES: [&str; 21] = [
    "intercept",
    "trend1",
    "trend2",
    "lag1",
    "lag2",
    "lag1:lag2",
    "logt:lag1",
    "logt:lag2",
    "logt:lag1:lag2",
    "sin",
    "cos",
    "sin:trend1",
    "cos:trend1",
    "sin:trend2",
    "cos:trend2",
    "logdist",
    "logdist:trend1",
    "logdist:trend2",
    "logdist:lag1",
    "logdist:lag2",
    "logdist:lag1:lag2",
];

pub const DAY1_NAMES: [&str; 3] = ["intercept", "trend1", "lag_prev_year_last"];
pub const DAY2_NAMES: [&str; 3] = ["intercept", "trend1", "lag_day1"];

/// Degree-1 and degree-2 orthonormal polynomials in `log(t - 1)` over `t = 2..=T`.
///
/// Stored as three-term recurrence coefficients so the basis can be evaluated
/// at any `t >= 2`, including years beyond the fitting range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthoPolyBasis {
    pub years: usize,
    alpha: [f64; 2],
    /// Squared norms of the unnormalised polynomials of degree -1, 0, 1, 2.
    norm2: [f64; 4],
}

impl OrthoPolyBasis {
    pub fn new(years: usize) -> Result<Self> {
        if years < 4 {
            return Err(Error::InvalidParameter(format!(
                "orthogonal quadratic basis needs at least 4 years, got {years}"
            )));
        }
        let x: Vec<f64> = (2..=years).map(|t| ((t - 1) as f64).ln()).collect();
        let n = x.len() as f64;
        let alpha0 = x.iter().sum::<f64>() / n;
        let p1: Vec<f64> = x.iter().map(|v| v - alpha0).collect();
        let n1: f64 = p1.iter().map(|v| v * v).sum();
        let alpha1 = x.iter().zip(&p1).map(|(v, p)| v * p * p).sum::<f64>() / n1;
        let p2: Vec<f64> = x.iter().zip(&p1).map(|(v, p)| (v - alpha1) * p - n1 / n).collect();
        let n2: f64 = p2.iter().map(|v| v * v).sum();
        Ok(OrthoPolyBasis {
            years,
            alpha: [alpha0, alpha1],
            norm2: [1.0, n, n1, n2],
        })
    }

    /// `(trend1_t, trend2_t)`.
    pub fn eval(&self, t: usize) -> (f64, f64) {
        assert!(t >= 2, "trend basis defined for t >= 2");
        let x = ((t - 1) as f64).ln();
        let p1 = x - self.alpha[0];
        let p2 = (x - self.alpha[1]) * p1 - self.norm2[2] / self.norm2[1];
        (p1 / self.norm2[2].sqrt(), p2 / self.norm2[3].sqrt())
    }

    pub fn trend1(&self, t: usize) -> f64 {
        self.eval(t).0
    }

    pub fn trend2(&self, t: usize) -> f64 {
        self.eval(t).1
    }

    /// Basis columns over the support `t = 2..=T`.
    pub fn columns(&self) -> (Vec<f64>, Vec<f64>) {
        (2..=self.years).map(|t| self.eval(t)).unzip()
    }
}

/// `(sin(2 pi day / 365), cos(2 pi day / 365))`.
pub fn harmonics(day: usize) -> (f64, f64) {
    let a = 2.0 * std::f64::consts::PI * day as f64 / DAYS_PER_YEAR as f64;
    let (s, c) = a.sin_cos();
    // exact zeros at the quarter points keep symmetric identities exact
    let snap = |v: f64| if v.abs() < 1e-15 { 0.0 } else { v };
    (snap(s), snap(c))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow(pub Vec<f64>);

impl std::ops::Deref for DesignRow {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Main-block row for `t >= 2`, `day >= 3`.
pub fn build_design_row(t: usize, day: usize, lag1: f64, lag2: f64, dist: f64, basis: &OrthoPolyBasis) -> Result<DesignRow> {
    if t < 2 {
        return Err(Error::OutOfRange(format!("design row needs t >= 2, got {t}")));
    }
    if day < 3 {
        return Err(Error::OutOfRange(format!("main design row needs day >= 3, got {day}")));
    }
    if !(dist > 0.0) {
        return Err(Error::InvalidParameter(format!("distance must be positive, got {dist}")));
    }
    let (tr1, tr2) = basis.eval(t);
    let logt = ((t - 1) as f64).ln();
    let (s, c) = harmonics(day);
    let ld = dist.ln();
    let l12 = lag1 * lag2;
    Ok(DesignRow(vec![
        1.0,
        tr1,
        tr2,
        lag1,
        lag2,
        l12,
        logt * lag1,
        logt * lag2,
        logt * l12,
        s,
        c,
        s * tr1,
        c * tr1,
        s * tr2,
        c * tr2,
        ld,
        ld * tr1,
        ld * tr2,
        ld * lag1,
        ld * lag2,
        ld * l12,
    ]))
}

/// Reduced row `(1, trend1_t, lag)` for day 1 (lag = last day of the
/// previous year) or day 2 (lag = day 1).
pub fn build_initial_row(t: usize, lag: f64, which_day: usize, basis: &OrthoPolyBasis) -> Result<DesignRow> {
    if t < 2 {
        return Err(Error::OutOfRange(format!("initial row needs t >= 2, got {t}")));
    }
    if which_day != 1 && which_day != 2 {
        return Err(Error::OutOfRange(format!("initial rows exist for days 1 and 2, got {which_day}")));
    }
    Ok(DesignRow(vec![1.0, basis.trend1(t), lag]))
}

/// Per-column centring and scaling; column 0 (intercept) is left alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSpec {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub scaled: Vec<bool>,
}

impl ScalingSpec {
    /// Fits column means and sample standard deviations.
    pub fn fit(x: &DMatrix<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if n < 2 {
            return Err(Error::InvalidParameter("scaling needs at least two rows".into()));
        }
        let mut mean = vec![0.0; p];
        let mut sd = vec![1.0; p];
        let mut scaled = vec![false; p];
        for j in 1..p {
            let col = x.column(j);
            let m = col.iter().sum::<f64>() / n as f64;
            let v = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
            let s = v.sqrt();
            if !(s > 1e-12 * m.abs().max(1.0)) {
                return Err(Error::InvalidParameter(format!("covariate column {j} is constant")));
            }
            mean[j] = m;
            sd[j] = s;
            scaled[j] = true;
        }
        Ok(ScalingSpec { mean, sd, scaled })
    }

    /// Like [`ScalingSpec::fit`] but leaves constant columns unscaled instead
    /// of failing (small simulated panels can lack any lagged record).
    pub fn fit_lenient(x: &DMatrix<f64>) -> Self {
        let (n, p) = x.shape();
        let mut spec = ScalingSpec::identity(p);
        if n < 2 {
            return spec;
        }
        for j in 1..p {
            let col = x.column(j);
            let m = col.iter().sum::<f64>() / n as f64;
            let s = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64).sqrt();
            if s > 1e-12 * m.abs().max(1.0) {
                spec.mean[j] = m;
                spec.sd[j] = s;
                spec.scaled[j] = true;
            }
        }
        spec
    }

    pub fn identity(p: usize) -> Self {
        ScalingSpec {
            mean: vec![0.0; p],
            sd: vec![1.0; p],
            scaled: vec![false; p],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, row: &mut [f64]) {
        for (j, v) in row.iter_mut().enumerate() {
            if self.scaled[j] {
                *v = (*v - self.mean[j]) / self.sd[j];
            }
        }
    }

    pub fn invert(&self, row: &mut [f64]) {
        for (j, v) in row.iter_mut().enumerate() {
            if self.scaled[j] {
                *v = *v * self.sd[j] + self.mean[j];
            }
        }
    }

    pub fn apply_matrix(&self, x: &mut DMatrix<f64>) {
        for j in 0..x.ncols() {
            if self.scaled[j] {
                let (m, s) = (self.mean[j], self.sd[j]);
                x.column_mut(j).apply(|v| *v = (*v - m) / s);
            }
        }
    }

    /// Raw-scale coefficients giving the same linear predictor as `beta` on
    /// scaled covariates. Requires an intercept in column 0.
    pub fn back_transform(&self, beta: &DVector<f64>) -> DVector<f64> {
        let mut raw = beta.clone();
        for j in 1..beta.len() {
            if self.scaled[j] {
                raw[j] = beta[j] / self.sd[j];
                raw[0] -= beta[j] * self.mean[j] / self.sd[j];
            }
        }
        raw
    }
}

pub fn fit_scaling(x: &DMatrix<f64>) -> Result<ScalingSpec> {
    ScalingSpec::fit(x)
}

pub fn apply_scaling(row: &[f64], spec: &ScalingSpec) -> Vec<f64> {
    let mut out = row.to_vec();
    spec.apply(&mut out);
    out
}

/// Which reduced sub-model a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Block {
    Main,
    Day1,
    Day2,
}

impl Block {
    pub const ALL: [Block; 3] = [Block::Main, Block::Day1, Block::Day2];

    pub fn of_day(day: usize) -> Block {
        match day {
            1 => Block::Day1,
            2 => Block::Day2,
            _ => Block::Main,
        }
    }

    pub fn names(self) -> &'static [&'static str] {
        match self {
            Block::Main => &MAIN_NAMES,
            Block::Day1 => &DAY1_NAMES,
            Block::Day2 => &DAY2_NAMES,
        }
    }

    pub fn dim(self) -> usize {
        self.names().len()
    }

    pub fn label(self) -> &'static str {
        match self {
            Block::Main => "main",
            Block::Day1 => "day1",
            Block::Day2 => "day2",
        }
    }
}

/// Raw row for `(t, day)` given its lag values and site distance.
pub fn raw_row(block: Block, t: usize, day: usize, lag1: f64, lag2: f64, dist: f64, basis: &OrthoPolyBasis) -> Result<DesignRow> {
    match block {
        Block::Main => build_design_row(t, day, lag1, lag2, dist, basis),
        Block::Day1 | Block::Day2 => build_initial_row(t, lag1, day, basis),
    }
}

/// One named row of a design dump.
#[derive(Debug, Clone, PartialEq)]
pub struct DumpRow {
    pub site: usize,
    pub t: usize,
    pub day: usize,
    pub block: Block,
    pub response: u8,
    pub row: DesignRow,
}

/// Unscaled design rows for every `(site, t >= 2, day)` of a tensor, with
/// tied indicators (response and lags) set to 0.
pub fn design_dump(tensor: &RecordTensor, dists: &[f64], basis: &OrthoPolyBasis) -> Result<Vec<DumpRow>> {
    if dists.len() != tensor.n_sites() {
        return Err(Error::MalformedInput("one distance per site required".into()));
    }
    let mut out = Vec::new();
    for site in 0..tensor.n_sites() {
        for t in 2..=tensor.years() {
            for day in 1..=tensor.days() {
                let block = Block::of_day(day);
                let lag = |back| tensor.lag(site, t, day, back).map_or(0.0, |i| i.strict() as f64);
                let row = raw_row(block, t, day, lag(1), lag(2), dists[site], basis)?;
                out.push(DumpRow {
                    site,
                    t,
                    day,
                    block,
                    response: tensor.get(site, t, day).strict(),
                    row,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_orthonormal() {
        for years in [4, 5, 10, 62, 200] {
            let b = OrthoPolyBasis::new(years).unwrap();
            let (c1, c2) = b.columns();
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            assert!(c1.iter().sum::<f64>().abs() < 1e-12);
            assert!(c2.iter().sum::<f64>().abs() < 1e-12);
            assert!((dot(&c1, &c1) - 1.0).abs() < 1e-12);
            assert!((dot(&c2, &c2) - 1.0).abs() < 1e-12);
            assert!(dot(&c1, &c2).abs() < 1e-12);
        }
        assert!(OrthoPolyBasis::new(3).is_err());
    }

    #[test]
    fn linear_column_is_centered_log() {
        let b = OrthoPolyBasis::new(30).unwrap();
        let (c1, _) = b.columns();
        let x: Vec<f64> = (2..=30).map(|t| ((t - 1) as f64).ln()).collect();
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let ratio = c1[5] / (x[5] - m);
        for (c, v) in c1.iter().zip(&x) {
            assert!((c - ratio * (v - m)).abs() < 1e-12);
        }
    }

    #[test]
    fn harmonics_values() {
        let (s, c) = harmonics(365);
        assert!(s.abs() < 1e-12 && (c - 1.0).abs() < 1e-12);
        for d in 1..365 {
            let (s, c) = harmonics(d);
            let (s2, c2) = harmonics(365 - d);
            assert!((s * s + c * c - 1.0).abs() < 1e-12);
            assert!((s + s2).abs() < 1e-12 && (c - c2).abs() < 1e-12);
        }
    }

    #[test]
    fn row_zero_lags_and_first_year() {
        let b = OrthoPolyBasis::new(62).unwrap();
        let r = build_design_row(10, 100, 0.0, 0.0, 50.0, &b).unwrap();
        for j in [3, 4, 5, 6, 7, 8, 18, 19, 20] {
            assert_eq!(r[j], 0.0, "{}", MAIN_NAMES[j]);
        }
        let r = build_design_row(2, 100, 1.0, 1.0, 50.0, &b).unwrap();
        assert_eq!(&r[6..9], &[0.0, 0.0, 0.0]);
        assert_eq!(r.len(), 21);
        assert!(build_design_row(2, 2, 1.0, 1.0, 50.0, &b).is_err());
        assert!(build_design_row(2, 3, 1.0, 1.0, 0.0, &b).is_err());
    }

    #[test]
    fn initial_rows() {
        let b = OrthoPolyBasis::new(10).unwrap();
        let r = build_initial_row(5, 0.0, 1, &b).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r[2], 0.0);
        assert_eq!(r[1], b.trend1(5));
        assert!(build_initial_row(1, 0.0, 1, &b).is_err());
        assert!(build_initial_row(3, 0.0, 3, &b).is_err());
    }

    #[test]
    fn scaling_round_trip_and_constant_column() {
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 0.0, 1.0, 4.0, 1.0, 1.0, 6.0, 1.0, 1.0, 8.0, 0.0]);
        let spec = ScalingSpec::fit(&x).unwrap();
        let mut row = vec![1.0, 5.0, 1.0];
        spec.apply(&mut row);
        assert_eq!(row[0], 1.0);
        spec.invert(&mut row);
        assert!((row[1] - 5.0).abs() < 1e-14 && (row[2] - 1.0).abs() < 1e-14);
        let bad = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(ScalingSpec::fit(&bad).is_err());
    }

    #[test]
    fn dump_covers_all_blocks() {
        let tensor = RecordTensor::from_fn(2, 4, 365, |_, t, d| {
            if t == 1 || d % 7 == 0 {
                crate::records::Indicator::Record
            } else {
                crate::records::Indicator::NotRecord
            }
        });
        let b = OrthoPolyBasis::new(4).unwrap();
        let rows = design_dump(&tensor, &[10.0, 20.0], &b).unwrap();
        assert_eq!(rows.len(), 2 * 3 * 365);
        let day1 = rows.iter().find(|r| r.block == Block::Day1 && r.t == 2).unwrap();
        // previous year's day 365 was a record (t = 1)
        assert_eq!(day1.row[2], 1.0);
    }
}
