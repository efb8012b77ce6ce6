//! Exponential-covariance kriging of spatial effects and posterior
//! predictive simulation of record indicators at new locations.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{raw_row, Block, OrthoPolyBasis};
use crate::error::{Error, Result};
use crate::linalg::Factor;
use crate::mcmc::{Draw, PosteriorDraws, Variant};
use crate::records::{expected_stationary_records, Indicator, RecordTensor, Site};
use crate::rng::stream;
use crate::samplers::standard_normals;
use crate::stats;

pub type Coord = (f64, f64);

pub fn coords_of(sites: &[Site]) -> Vec<Coord> {
    sites.iter().map(|s| (s.x_km, s.y_km)).collect()
}

fn dist(a: Coord, b: Coord) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// `sigma2 * exp(-phi * ||a_i - b_j||)`.
pub fn exp_covariance(a: &[Coord], b: &[Coord], sigma2: f64, phi: f64) -> Result<DMatrix<f64>> {
    if !(sigma2 > 0.0) || !(phi > 0.0) {
        return Err(Error::InvalidParameter(format!("covariance with sigma2 {sigma2}, phi {phi}")));
    }
    Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| sigma2 * (-phi * dist(a[i], b[j])).exp()))
}

/// Correlation matrix `exp(-phi d_ij)` among one set of points.
pub fn exp_correlation(coords: &[Coord], phi: f64) -> Result<DMatrix<f64>> {
    exp_covariance(coords, coords, 1.0, phi)
}

/// Conditional law of a zero-mean-shifted GP at targets given its values at
/// observed sites, for fixed `(sigma2, phi)`.
///
/// Targets whose conditional variance vanishes (they coincide with observed
/// sites) are interpolated exactly and excluded from the random part.
#[derive(Debug, Clone)]
pub struct Kriger {
    /// `C_ts C_ss^{-1}`.
    weights: DMatrix<f64>,
    random: Vec<usize>,
    chol: Option<Factor>,
    n_targets: usize,
}

impl Kriger {
    pub fn new(observed: &[Coord], targets: &[Coord], sigma2: f64, phi: f64) -> Result<Self> {
        let c_ss = exp_covariance(observed, observed, sigma2, phi)?;
        let c_ts = exp_covariance(targets, observed, sigma2, phi)?;
        let f = Factor::new(c_ss, "observed-site covariance")?;
        let weights = f.solve_mat(&c_ts.transpose()).transpose();
        let mut cond = exp_covariance(targets, targets, sigma2, phi)? - &weights * c_ts.transpose();
        cond = (&cond + cond.transpose()) * 0.5;
        let random: Vec<usize> = (0..targets.len()).filter(|&i| cond[(i, i)] > 1e-10 * sigma2).collect();
        let chol = if random.is_empty() {
            None
        } else {
            let sub = DMatrix::from_fn(random.len(), random.len(), |a, b| cond[(random[a], random[b])]);
            Some(Factor::new(sub, "kriging conditional covariance")?)
        };
        Ok(Kriger {
            weights,
            random,
            chol,
            n_targets: targets.len(),
        })
    }

    /// Conditional mean `mean + C_ts C_ss^{-1} (w - mean)`.
    pub fn mean(&self, observed: &DVector<f64>, mean: f64) -> DVector<f64> {
        let centred = observed.map(|v| v - mean);
        (&self.weights * centred).map(|v| v + mean)
    }

    pub fn draw<R: Rng + ?Sized>(&self, observed: &DVector<f64>, mean: f64, rng: &mut R) -> DVector<f64> {
        let mut out = self.mean(observed, mean);
        if let Some(chol) = &self.chol {
            let z = standard_normals(self.random.len(), rng);
            let e = chol.lower_mul(&z);
            for (k, &i) in self.random.iter().enumerate() {
                out[i] += e[k];
            }
        }
        out
    }

    pub fn n_targets(&self) -> usize {
        self.n_targets
    }
}

/// One conditional draw of a GP surface at `targets`.
pub fn krige_w<R: Rng + ?Sized>(
    observed_w: &DVector<f64>,
    mean: f64,
    observed: &[Coord],
    targets: &[Coord],
    sigma2: f64,
    phi: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    Ok(Kriger::new(observed, targets, sigma2, phi)?.draw(observed_w, mean, rng))
}

// ---------------------------------------------------------------------------
// Grids and predictive fields

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub id: String,
    pub x_km: f64,
    pub y_km: f64,
    pub dist_coast_km: f64,
    pub block: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionGrid {
    pub cells: Vec<GridCell>,
}

impl PredictionGrid {
    pub fn new(cells: Vec<GridCell>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::MalformedInput("prediction grid is empty".into()));
        }
        if let Some(c) = cells.iter().find(|c| !(c.dist_coast_km > 0.0)) {
            return Err(Error::MalformedInput(format!("cell {} has non-positive coast distance", c.id)));
        }
        Ok(PredictionGrid { cells })
    }

    pub fn from_sites(sites: &[Site]) -> Result<Self> {
        PredictionGrid::new(
            sites
                .iter()
                .map(|s| GridCell {
                    id: s.id.clone(),
                    x_km: s.x_km,
                    y_km: s.y_km,
                    dist_coast_km: s.dist_coast_km,
                    block: None,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn coords(&self) -> Vec<Coord> {
        self.cells.iter().map(|c| (c.x_km, c.y_km)).collect()
    }

    /// Indices of cells labelled with `block`.
    pub fn block_cells(&self, block: &str) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.cells[i].block.as_deref() == Some(block)).collect()
    }
}

/// Simulated indicators and probabilities per draw, year `1..=years`, day and cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveField {
    pub draws: usize,
    pub years: usize,
    pub days: usize,
    pub cells: usize,
    pub indicators: Vec<u8>,
    pub probabilities: Vec<f64>,
}

impl PredictiveField {
    pub fn zeros(draws: usize, years: usize, days: usize, cells: usize) -> Self {
        let n = draws * years * days * cells;
        PredictiveField {
            draws,
            years,
            days,
            cells,
            indicators: vec![0; n],
            probabilities: vec![0.0; n],
        }
    }

    pub fn index(&self, draw: usize, t: usize, day: usize, cell: usize) -> usize {
        ((draw * self.years + (t - 1)) * self.days + (day - 1)) * self.cells + cell
    }

    pub fn indicator(&self, draw: usize, t: usize, day: usize, cell: usize) -> u8 {
        self.indicators[self.index(draw, t, day, cell)]
    }

    pub fn probability(&self, draw: usize, t: usize, day: usize, cell: usize) -> f64 {
        self.probabilities[self.index(draw, t, day, cell)]
    }

    fn draw_slice_len(&self) -> usize {
        self.years * self.days * self.cells
    }
}

/// Per-draw kriged effects for one posterior draw.
struct DrawEffects<'a> {
    variant: Variant,
    draw: &'a Draw,
    /// Per block: time-constant surface at the targets (M2-M4).
    constant: Vec<Option<DVector<f64>>>,
    /// Per block: kriger reused across days (M5).
    krigers: Vec<Option<Kriger>>,
}

impl<'a> DrawEffects<'a> {
    fn new<R: Rng + ?Sized>(
        draws: &PosteriorDraws,
        draw: &'a Draw,
        targets: &[Coord],
        rng: &mut R,
    ) -> Result<Self> {
        let variant = draws.meta.variant;
        let observed = coords_of(&draws.meta.sites);
        let mut constant = vec![None, None, None];
        let mut krigers = vec![None, None, None];
        if variant.has_spatial() {
            for (b, bd) in draw.blocks.iter().enumerate() {
                let k = Kriger::new(&observed, targets, bd.sigma0_sq, draw.phi0)?;
                if variant == Variant::M5 {
                    krigers[b] = Some(k);
                } else {
                    let mean = if variant == Variant::M2 { bd.beta0 } else { 0.0 };
                    let w = DVector::from_column_slice(&bd.surfaces[0]);
                    constant[b] = Some(k.draw(&w, mean, rng));
                }
            }
        }
        Ok(DrawEffects {
            variant,
            draw,
            constant,
            krigers,
        })
    }

    /// Effects at every target for `(t, day)`.
    fn effects<R: Rng + ?Sized>(&self, meta: &crate::mcmc::DrawsMeta, t: usize, day: usize, n: usize, rng: &mut R) -> Result<DVector<f64>> {
        let block = Block::of_day(day);
        let b = block_slot(block);
        let bd = &self.draw.blocks[b];
        let temporal = |idx: usize| -> Result<f64> {
            bd.temporal.get(idx).copied().ok_or_else(|| {
                Error::MalformedInput(format!("no daily effect stored for t {t}, day {day}"))
            })
        };
        Ok(match self.variant {
            Variant::M0 | Variant::M1 => DVector::zeros(n),
            Variant::M2 => self.constant[b].clone().expect("surface"),
            Variant::M3 => self.constant[b].as_ref().expect("surface").add_scalar(temporal(t - 2)?),
            Variant::M4 => {
                let g = meta.group_index(block, t, day)?;
                self.constant[b].as_ref().expect("surface").add_scalar(temporal(g)?)
            }
            Variant::M5 => {
                let g = meta.group_index(block, t, day)?;
                let w = bd
                    .surfaces
                    .get(g)
                    .ok_or_else(|| Error::MalformedInput(format!("missing W surface for t {t}, day {day}")))?;
                let w = DVector::from_column_slice(w);
                self.krigers[b].as_ref().expect("kriger").draw(&w, temporal(g)?, rng)
            }
        })
    }
}

pub(crate) fn block_slot(block: Block) -> usize {
    match block {
        Block::Main => 0,
        Block::Day1 => 1,
        Block::Day2 => 2,
    }
}

/// Linear predictor for one scaled row under a block's coefficients.
pub(crate) fn linear_predictor(variant: Variant, raw: &[f64], meta: &crate::mcmc::DrawsMeta, block: Block, beta: &[f64]) -> f64 {
    let spec = &meta.scaling[block_slot(block)];
    let first = variant.first_column();
    let mut eta = 0.0;
    for (k, b) in beta.iter().enumerate() {
        let j = k + first;
        let x = if spec.scaled[j] { (raw[j] - spec.mean[j]) / spec.sd[j] } else { raw[j] };
        eta += x * b;
    }
    eta
}

/// Dynamic posterior predictive simulation on a grid for years `1..=t_end`.
///
/// Each cell carries its own simulated history for the lag covariates; year 1
/// is all records.
pub fn simulate_predictive(draws: &PosteriorDraws, grid: &PredictionGrid, t_end: usize, seed: u64) -> Result<PredictiveField> {
    let meta = &draws.meta;
    if t_end < 1 || t_end > meta.years {
        return Err(Error::OutOfRange(format!("prediction years 1..={t_end} outside fitted 1..={}", meta.years)));
    }
    let basis = OrthoPolyBasis::new(meta.years)?;
    let all: Vec<(usize, &Draw)> = draws.flat().enumerate().collect();
    let n_draws = if meta.variant == Variant::M0 { draws.total_draws().max(1) } else { all.len() };
    let mut field = PredictiveField::zeros(n_draws, t_end, meta.days, grid.len());
    let slice = field.draw_slice_len();
    let targets = grid.coords();
    let days = meta.days;
    let chunks: Vec<(&mut [u8], &mut [f64])> = field
        .indicators
        .chunks_mut(slice)
        .zip(field.probabilities.chunks_mut(slice))
        .collect();
    chunks.into_par_iter().enumerate().try_for_each(|(d, (ind, prob))| -> Result<()> {
        let mut rng = stream(seed, &[d as u64]);
        let idx = |t: usize, day: usize, c: usize| ((t - 1) * days + (day - 1)) * targets.len() + c;
        let effects = if meta.variant == Variant::M0 {
            None
        } else {
            Some(DrawEffects::new(draws, all[d].1, &targets, &mut rng)?)
        };
        for c in 0..targets.len() {
            for day in 1..=days {
                ind[idx(1, day, c)] = 1;
                prob[idx(1, day, c)] = 1.0;
            }
        }
        for t in 2..=t_end {
            for day in 1..=days {
                let block = Block::of_day(day);
                let eff = match &effects {
                    Some(e) => e.effects(meta, t, day, targets.len(), &mut rng)?,
                    None => DVector::zeros(targets.len()),
                };
                for c in 0..targets.len() {
                    let p = match &effects {
                        None => 1.0 / t as f64,
                        Some(e) => {
                            let lag = |back: usize| {
                                let (tt, dd) = lag_pos(t, day, back, days);
                                ind[idx(tt, dd, c)] as f64
                            };
                            let raw = raw_row(block, t, day, lag(1), lag(2), grid.cells[c].dist_coast_km, &basis)?;
                            let beta = &e.draw.blocks[block_slot(block)].beta;
                            stats::logistic(linear_predictor(meta.variant, &raw, meta, block, beta) + eff[c])
                        }
                    };
                    let i = idx(t, day, c);
                    prob[i] = p;
                    ind[i] = (rng.random::<f64>() < p) as u8;
                }
            }
        }
        Ok(())
    })?;
    Ok(field)
}

fn lag_pos(t: usize, day: usize, back: usize, days: usize) -> (usize, usize) {
    if day > back {
        (t, day - back)
    } else {
        (t - 1, days - (back - day))
    }
}

/// Posterior samples of hold-out probabilities using observed lags.
#[derive(Debug, Clone, PartialEq)]
pub struct OneStepPrediction {
    /// `(holdout index, t, day)` per column, `t >= 2`.
    pub cells: Vec<(usize, usize, usize)>,
    /// Outcome per cell; `None` for tied cells.
    pub outcomes: Vec<Option<u8>>,
    /// `probs[draw][cell]`.
    pub probs: Vec<Vec<f64>>,
}

impl OneStepPrediction {
    pub fn mean(&self) -> Vec<f64> {
        (0..self.cells.len())
            .map(|j| stats::mean(self.probs.iter().map(|p| p[j])))
            .collect()
    }
}

/// One-step-ahead probabilities at hold-out sites. Tied lag cells are
/// resolved by a `Bernoulli(1/r)` draw per posterior sample.
pub fn one_step_ahead(draws: &PosteriorDraws, holdout: &[Site], tensor: &RecordTensor, seed: u64) -> Result<OneStepPrediction> {
    let meta = &draws.meta;
    if tensor.n_sites() != holdout.len() {
        return Err(Error::MalformedInput("hold-out tensor and site list differ in size".into()));
    }
    if tensor.years() != meta.years || tensor.days() != meta.days {
        return Err(Error::MalformedInput("hold-out tensor dimensions differ from the fit".into()));
    }
    for h in holdout {
        if meta.sites.iter().any(|s| s.id == h.id) {
            return Err(Error::InvalidParameter(format!("hold-out site {} was used in the fit", h.id)));
        }
    }
    let basis = OrthoPolyBasis::new(meta.years)?;
    let targets = coords_of(holdout);
    let mut cells = Vec::new();
    let mut outcomes = Vec::new();
    for t in 2..=meta.years {
        for day in 1..=meta.days {
            for s in 0..holdout.len() {
                cells.push((s, t, day));
                let i = tensor.get(s, t, day);
                outcomes.push(if i.is_tied() { None } else { Some(i.strict()) });
            }
        }
    }
    let all: Vec<&Draw> = draws.flat().collect();
    let n_draws = if meta.variant == Variant::M0 { 1 } else { all.len() };
    let probs: Vec<Vec<f64>> = (0..n_draws)
        .into_par_iter()
        .map(|d| -> Result<Vec<f64>> {
            let mut rng = stream(seed, &[d as u64]);
            if meta.variant == Variant::M0 {
                return Ok(cells.iter().map(|&(_, t, _)| 1.0 / t as f64).collect());
            }
            let e = DrawEffects::new(draws, all[d], &targets, &mut rng)?;
            // ties resolved once per draw so a cell keeps one value as lag 1 and lag 2
            let resolved: Vec<u8> = tensor
                .cells()
                .iter()
                .map(|i| match i {
                    Indicator::Tied(r) => (rng.random::<f64>() < 1.0 / *r as f64) as u8,
                    other => other.strict(),
                })
                .collect();
            let lag_value = |s: usize, t: usize, day: usize, back: usize| -> f64 {
                tensor
                    .lag_position(t, day, back)
                    .map_or(0.0, |(tt, dd)| resolved[tensor.index(s, tt, dd)] as f64)
            };
            let mut out = Vec::with_capacity(cells.len());
            for t in 2..=meta.years {
                for day in 1..=meta.days {
                    let block = Block::of_day(day);
                    let eff = e.effects(meta, t, day, targets.len(), &mut rng)?;
                    let beta = &all[d].blocks[block_slot(block)].beta;
                    for s in 0..holdout.len() {
                        let l1 = lag_value(s, t, day, 1);
                        let l2 = lag_value(s, t, day, 2);
                        let raw = raw_row(block, t, day, l1, l2, holdout[s].dist_coast_km, &basis)?;
                        out.push(stats::logistic(linear_predictor(meta.variant, &raw, meta, block, beta) + eff[s]));
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(OneStepPrediction { cells, outcomes, probs })
}

// ---------------------------------------------------------------------------
// Summary statistics over a predictive field

fn check_window(field: &PredictiveField, t1: usize, t2: usize, l1: usize, l2: usize, cell: usize) -> Result<()> {
    if t1 < 1 || t2 < t1 || t2 > field.years || l1 < 1 || l2 < l1 || l2 > field.days || cell >= field.cells {
        return Err(Error::OutOfRange(format!(
            "window t {t1}..={t2}, days {l1}..={l2}, cell {cell} outside field"
        )));
    }
    Ok(())
}

/// Average over days `l1..=l2` of the number of records in years `t1..=t2`, per draw.
pub fn nbar(field: &PredictiveField, t1: usize, t2: usize, l1: usize, l2: usize, cell: usize) -> Result<Vec<f64>> {
    check_window(field, t1, t2, l1, l2, cell)?;
    let width = (l2 - l1 + 1) as f64;
    Ok((0..field.draws)
        .map(|d| {
            let mut k = 0u64;
            for t in t1..=t2 {
                for l in l1..=l2 {
                    k += field.indicator(d, t, l, cell) as u64;
                }
            }
            k as f64 / width
        })
        .collect())
}

/// `nbar` relative to its stationary expectation.
pub fn ratio(field: &PredictiveField, t1: usize, t2: usize, l1: usize, l2: usize, cell: usize) -> Result<Vec<f64>> {
    let e0 = expected_stationary_records(t1, t2)?;
    Ok(nbar(field, t1, t2, l1, l2, cell)?.into_iter().map(|v| v / e0).collect())
}

/// Share of `cells` with a record on `(t, day)`, per draw.
pub fn ers(field: &PredictiveField, t: usize, day: usize, cells: &[usize]) -> Result<Vec<f64>> {
    ers_bar(field, t, &[day], cells)
}

/// `ers` averaged over a set of days, per draw.
pub fn ers_bar(field: &PredictiveField, t: usize, days: &[usize], cells: &[usize]) -> Result<Vec<f64>> {
    if cells.is_empty() || days.is_empty() {
        return Err(Error::InvalidParameter("empty block or day set".into()));
    }
    if t < 1 || t > field.years || days.iter().any(|&d| d < 1 || d > field.days) || cells.iter().any(|&c| c >= field.cells) {
        return Err(Error::OutOfRange("ERS index outside field".into()));
    }
    let denom = (cells.len() * days.len()) as f64;
    Ok((0..field.draws)
        .map(|d| {
            let mut k = 0u64;
            for &l in days {
                for &c in cells {
                    k += field.indicator(d, t, l, c) as u64;
                }
            }
            k as f64 / denom
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExceedMode {
    /// Per draw: fraction of cells whose statistic exceeds the threshold.
    Mean,
    /// Fraction of cells whose 5% posterior quantile exceeds the threshold.
    PointwiseQ05,
}

/// `per_cell[cell][draw]` statistic; returns one fraction per draw (`Mean`)
/// or a single fraction (`PointwiseQ05`).
pub fn area_fraction_exceeding(per_cell: &[Vec<f64>], threshold: f64, mode: ExceedMode) -> Result<Vec<f64>> {
    if per_cell.is_empty() {
        return Err(Error::InvalidParameter("empty grid".into()));
    }
    let n = per_cell.len() as f64;
    match mode {
        ExceedMode::Mean => {
            let draws = per_cell[0].len();
            Ok((0..draws)
                .map(|d| per_cell.iter().filter(|c| c[d] > threshold).count() as f64 / n)
                .collect())
        }
        ExceedMode::PointwiseQ05 => {
            let k = per_cell.iter().filter(|c| stats::quantile(c, 0.05) > threshold).count();
            Ok(vec![k as f64 / n])
        }
    }
}
