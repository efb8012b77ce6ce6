//! Record indicators for calendar-day series, classical record laws, and the
//! drift-model simulators used as oracles.
//!
//! Panels are indexed by `(site, year, day)`. Years and days are 1-based in
//! the public API (`t = 1` is the first year, `day = 1` the first calendar
//! day); storage is 0-based and contiguous in day, then year, then site.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng};
use crate::stats;

/// Fixed calendar grid (February 29 is dropped at ingestion).
pub const DAYS_PER_YEAR: usize = 365;

/// Missing observations are stored as negative infinity.
pub const MISSING: f64 = f64::NEG_INFINITY;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub id: String,
    pub x_km: f64,
    pub y_km: f64,
    pub dist_coast_km: f64,
}

impl Site {
    pub fn new(id: impl Into<String>, x_km: f64, y_km: f64, dist_coast_km: f64) -> Self {
        Site {
            id: id.into(),
            x_km,
            y_km,
            dist_coast_km,
        }
    }

    pub fn distance(&self, other: &Site) -> f64 {
        (self.x_km - other.x_km).hypot(self.y_km - other.y_km)
    }
}

/// Daily maxima per `(site, year, day)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperaturePanel {
    sites: Vec<Site>,
    years: usize,
    days: usize,
    temps: Vec<f64>,
}

impl TemperaturePanel {
    /// Builds a panel from a flat `(site, year, day)`-ordered buffer.
    pub fn new(sites: Vec<Site>, years: usize, days: usize, temps: Vec<f64>) -> Result<Self> {
        if years < 2 {
            return Err(Error::MalformedInput(format!("panel needs at least 2 years, got {years}")));
        }
        if days == 0 || days > DAYS_PER_YEAR {
            return Err(Error::MalformedInput(format!("day grid of {days} days")));
        }
        if sites.is_empty() {
            return Err(Error::MalformedInput("panel has no sites".into()));
        }
        if let Some(s) = sites.iter().find(|s| !(s.dist_coast_km > 0.0) || !s.dist_coast_km.is_finite()) {
            return Err(Error::MalformedInput(format!(
                "site {} has non-positive distance to coast {}",
                s.id, s.dist_coast_km
            )));
        }
        if temps.len() != sites.len() * years * days {
            return Err(Error::MalformedInput(format!(
                "expected {} values, got {}",
                sites.len() * years * days,
                temps.len()
            )));
        }
        Ok(TemperaturePanel {
            sites,
            years,
            days,
            temps,
        })
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }
    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }
    pub fn years(&self) -> usize {
        self.years
    }
    pub fn days(&self) -> usize {
        self.days
    }

    fn offset(&self, site: usize, t: usize, day: usize) -> usize {
        (site * self.years + (t - 1)) * self.days + (day - 1)
    }

    pub fn get(&self, site: usize, t: usize, day: usize) -> f64 {
        self.temps[self.offset(site, t, day)]
    }

    pub fn set(&mut self, site: usize, t: usize, day: usize, value: f64) {
        let o = self.offset(site, t, day);
        self.temps[o] = value;
    }

    /// The `years`-long series for one site and calendar day.
    pub fn series(&self, site: usize, day: usize) -> impl Iterator<Item = f64> + '_ {
        (1..=self.years).map(move |t| self.get(site, t, day))
    }

    /// Panel restricted to the given site indices, in that order.
    pub fn select_sites(&self, keep: &[usize]) -> Result<Self> {
        let mut temps = Vec::with_capacity(keep.len() * self.years * self.days);
        let mut sites = Vec::with_capacity(keep.len());
        for &s in keep {
            if s >= self.n_sites() {
                return Err(Error::OutOfRange(format!("site index {s}")));
            }
            sites.push(self.sites[s].clone());
            let start = s * self.years * self.days;
            temps.extend_from_slice(&self.temps[start..start + self.years * self.days]);
        }
        TemperaturePanel::new(sites, self.years, self.days, temps)
    }
}

/// Record indicator for one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Indicator {
    NotRecord,
    Record,
    /// Equal to the running maximum, which was held by `r - 1` preceding weak records.
    Tied(u32),
}

impl Indicator {
    /// Value with ties mapped to 0.
    pub fn strict(self) -> u8 {
        matches!(self, Indicator::Record) as u8
    }

    pub fn tie_multiplicity(self) -> Option<u32> {
        match self {
            Indicator::Tied(r) => Some(r),
            _ => None,
        }
    }

    pub fn is_tied(self) -> bool {
        matches!(self, Indicator::Tied(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TieRule {
    Exclude,
    IncludeAsWeak,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordTensor {
    n_sites: usize,
    years: usize,
    days: usize,
    cells: Vec<Indicator>,
}

impl RecordTensor {
    pub fn from_cells(n_sites: usize, years: usize, days: usize, cells: Vec<Indicator>) -> Result<Self> {
        if cells.len() != n_sites * years * days {
            return Err(Error::MalformedInput("record tensor size mismatch".into()));
        }
        Ok(RecordTensor {
            n_sites,
            years,
            days,
            cells,
        })
    }

    /// Tensor built from 0/1 values (no ties), `f(site, t, day)` with 1-based `t` and `day`.
    pub fn from_fn(
        n_sites: usize,
        years: usize,
        days: usize,
        mut f: impl FnMut(usize, usize, usize) -> Indicator,
    ) -> Self {
        let mut cells = Vec::with_capacity(n_sites * years * days);
        for s in 0..n_sites {
            for t in 1..=years {
                for d in 1..=days {
                    cells.push(f(s, t, d));
                }
            }
        }
        RecordTensor {
            n_sites,
            years,
            days,
            cells,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }
    pub fn years(&self) -> usize {
        self.years
    }
    pub fn days(&self) -> usize {
        self.days
    }
    pub fn cells(&self) -> &[Indicator] {
        &self.cells
    }

    pub fn index(&self, site: usize, t: usize, day: usize) -> usize {
        (site * self.years + (t - 1)) * self.days + (day - 1)
    }

    pub fn get(&self, site: usize, t: usize, day: usize) -> Indicator {
        self.cells[self.index(site, t, day)]
    }

    pub fn try_get(&self, site: usize, t: usize, day: usize) -> Result<Indicator> {
        if site >= self.n_sites || t == 0 || t > self.years || day == 0 || day > self.days {
            return Err(Error::OutOfRange(format!(
                "(site {site}, t {t}, day {day}) outside {}x{}x{}",
                self.n_sites, self.years, self.days
            )));
        }
        Ok(self.get(site, t, day))
    }

    /// Position of the cell `back` days before `(t, day)`, wrapping into the
    /// previous year's last days (`I_{t,0} = I_{t-1,L}`). `None` before year 1.
    pub fn lag_position(&self, t: usize, day: usize, back: usize) -> Option<(usize, usize)> {
        if day > back {
            Some((t, day - back))
        } else if t >= 2 && back - day < self.days {
            Some((t - 1, self.days - (back - day)))
        } else {
            None
        }
    }

    pub fn lag(&self, site: usize, t: usize, day: usize, back: usize) -> Option<Indicator> {
        self.lag_position(t, day, back).map(|(tt, dd)| self.get(site, tt, dd))
    }

    /// Tensor restricted to the given sites.
    pub fn select_sites(&self, keep: &[usize]) -> Self {
        let block = self.years * self.days;
        let mut cells = Vec::with_capacity(keep.len() * block);
        for &s in keep {
            cells.extend_from_slice(&self.cells[s * block..(s + 1) * block]);
        }
        RecordTensor {
            n_sites: keep.len(),
            years: self.years,
            days: self.days,
            cells,
        }
    }

    pub fn count_ties(&self) -> usize {
        self.cells.iter().filter(|c| c.is_tied()).count()
    }
}

/// Indicators for one series. The first value is always a (trivial) record.
fn series_records(series: impl Iterator<Item = f64>, out: &mut Vec<Indicator>) -> Result<()> {
    let mut running_max = MISSING;
    let mut weak_at_max = 0u32;
    for (i, y) in series.enumerate() {
        if y.is_nan() || y == f64::INFINITY {
            return Err(Error::MalformedInput(format!("non-finite value {y} at position {}", i + 1)));
        }
        let ind = if i == 0 {
            running_max = y;
            weak_at_max = 1;
            Indicator::Record
        } else if y > running_max {
            running_max = y;
            weak_at_max = 1;
            Indicator::Record
        } else if y == running_max && y.is_finite() {
            weak_at_max += 1;
            Indicator::Tied(weak_at_max)
        } else {
            Indicator::NotRecord
        };
        out.push(ind);
    }
    Ok(())
}

/// Indicators of a single series (helper for tests and small analyses).
pub fn records_of_series(series: &[f64]) -> Result<Vec<Indicator>> {
    let mut out = Vec::with_capacity(series.len());
    series_records(series.iter().copied(), &mut out)?;
    Ok(out)
}

pub fn extract_records(panel: &TemperaturePanel) -> Result<RecordTensor> {
    let (n, years, days) = (panel.n_sites(), panel.years(), panel.days());
    let mut cells = vec![Indicator::NotRecord; n * years * days];
    let mut buf = Vec::with_capacity(years);
    for s in 0..n {
        for d in 1..=days {
            buf.clear();
            series_records(panel.series(s, d), &mut buf).map_err(|e| match e {
                Error::MalformedInput(m) => {
                    Error::MalformedInput(format!("site {}, day {d}: {m}", panel.sites()[s].id))
                }
                other => other,
            })?;
            for (t0, ind) in buf.iter().enumerate() {
                cells[(s * years + t0) * days + (d - 1)] = *ind;
            }
        }
    }
    RecordTensor::from_cells(n, years, days, cells)
}

/// Number of records up to and including year `t` for one site and day.
pub fn count_records(tensor: &RecordTensor, site: usize, day: usize, t: usize, rule: TieRule) -> Result<usize> {
    tensor.try_get(site, t, day)?;
    Ok((1..=t)
        .filter(|&j| match tensor.get(site, j, day) {
            Indicator::Record => true,
            Indicator::Tied(_) => rule == TieRule::IncludeAsWeak,
            Indicator::NotRecord => false,
        })
        .count())
}

/// Record probability at year `t` for an i.i.d. continuous series.
pub fn crm_probability(t: usize) -> Result<f64> {
    if t == 0 {
        return Err(Error::InvalidParameter("year index must be >= 1".into()));
    }
    Ok(1.0 / t as f64)
}

/// Expected number of records in years `t1..=t2` under stationarity.
pub fn expected_stationary_records(t1: usize, t2: usize) -> Result<f64> {
    if t1 == 0 || t2 < t1 {
        return Err(Error::InvalidParameter(format!("year range {t1}..={t2}")));
    }
    // smallest terms first
    Ok(stats::sum((t1..=t2).rev().map(|t| 1.0 / t as f64)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesModel {
    /// Classical record model: i.i.d. noise, no drift.
    Crm,
    /// Linear drift model `Y_t = c t + e_t`.
    Ldm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedSeriesConfig {
    pub model: SeriesModel,
    /// Drift per year; ignored for the CRM.
    pub drift: f64,
    pub sigma: f64,
    pub years: usize,
    /// Number of simulated sites; each carries `days` independent series.
    pub sites: usize,
    pub days: usize,
    pub seed: u64,
}

impl SimulatedSeriesConfig {
    pub fn crm(years: usize, sites: usize, days: usize, seed: u64) -> Self {
        SimulatedSeriesConfig {
            model: SeriesModel::Crm,
            drift: 0.0,
            sigma: 1.0,
            years,
            sites,
            days,
            seed,
        }
    }

    pub fn ldm(drift: f64, sigma: f64, years: usize, sites: usize, days: usize, seed: u64) -> Self {
        SimulatedSeriesConfig {
            model: SeriesModel::Ldm,
            drift,
            sigma,
            years,
            sites,
            days,
            seed,
        }
    }

    fn effective_drift(&self) -> f64 {
        match self.model {
            SeriesModel::Crm => 0.0,
            SeriesModel::Ldm => self.drift,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("noise sd must be positive, got {}", self.sigma)));
        }
        if self.years == 0 || self.sites == 0 || self.days == 0 {
            return Err(Error::InvalidParameter("empty simulation grid".into()));
        }
        Ok(())
    }
}

/// Fills `out` with one simulated series drawn from the series stream.
fn simulate_one(drift: f64, sigma: f64, years: usize, rng: &mut StreamRng, out: &mut Vec<f64>) {
    out.clear();
    for t in 1..=years {
        let z: f64 = StandardNormal.sample(rng);
        out.push(drift * t as f64 + sigma * z);
    }
}

fn series_stream(seed: u64, site: usize, day: usize) -> StreamRng {
    stream(seed, &[site as u64, day as u64])
}

/// Simulates `sites x days` independent series of length `years`.
///
/// Each series has its own stream keyed by `(seed, site, day)`, so a CRM run
/// and an LDM run with `drift = 0` consume identical draws.
pub fn simulate_series(cfg: &SimulatedSeriesConfig) -> Result<TemperaturePanel> {
    cfg.validate()?;
    let sites = (0..cfg.sites)
        .map(|s| Site::new(format!("sim{s:03}"), 10.0 * s as f64, 0.0, 1.0))
        .collect();
    let mut temps = vec![0.0; cfg.sites * cfg.years * cfg.days];
    let mut buf = Vec::with_capacity(cfg.years);
    for s in 0..cfg.sites {
        for d in 1..=cfg.days {
            let mut rng = series_stream(cfg.seed, s, d);
            simulate_one(cfg.effective_drift(), cfg.sigma, cfg.years, &mut rng, &mut buf);
            for (t0, y) in buf.iter().enumerate() {
                temps[(s * cfg.years + t0) * cfg.days + (d - 1)] = *y;
            }
        }
    }
    TemperaturePanel::new(sites, cfg.years, cfg.days, temps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MaskPosition {
    pub site: usize,
    pub t: usize,
    pub day: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissingImpactSummary {
    /// Mean number of indicators that change when the mask is applied.
    pub mean_diff: f64,
    pub q05: f64,
    pub q95: f64,
    /// Change in the total number of records (masked minus original).
    pub record_count_delta: stats::Summary,
    pub per_replicate_diff: Vec<f64>,
    pub per_replicate_delta: Vec<f64>,
}

/// Replicates the effect of a missing-value layout on record indicators.
///
/// For each replicate the full `sites x days` grid of series is simulated, the
/// mask positions are set to [`MISSING`], and indicators are compared. Series
/// without masked positions cannot change, so only those carrying a mask
/// position are drawn; every series has its own stream, which keeps the result
/// identical to simulating the whole grid.
pub fn missing_impact_study(
    cfg: &SimulatedSeriesConfig,
    mask: &[MaskPosition],
    reps: usize,
    rng: &mut impl Rng,
) -> Result<MissingImpactSummary> {
    cfg.validate()?;
    if mask.is_empty() {
        return Err(Error::InvalidParameter("empty missing-value mask".into()));
    }
    if reps == 0 {
        return Err(Error::InvalidParameter("need at least one replicate".into()));
    }
    for m in mask {
        if m.site >= cfg.sites || m.t == 0 || m.t > cfg.years || m.day == 0 || m.day > cfg.days {
            return Err(Error::OutOfRange(format!("mask position {m:?}")));
        }
    }
    let mut by_series: std::collections::BTreeMap<(usize, usize), Vec<usize>> = Default::default();
    for m in mask {
        by_series.entry((m.site, m.day)).or_default().push(m.t);
    }

    let mut diffs = Vec::with_capacity(reps);
    let mut deltas = Vec::with_capacity(reps);
    let mut y = Vec::with_capacity(cfg.years);
    let mut a = Vec::with_capacity(cfg.years);
    let mut b = Vec::with_capacity(cfg.years);
    for _ in 0..reps {
        let rep_seed: u64 = rng.random();
        let mut diff = 0i64;
        let mut delta = 0i64;
        for (&(site, day), ts) in &by_series {
            let mut srng = series_stream(rep_seed, site, day);
            simulate_one(cfg.effective_drift(), cfg.sigma, cfg.years, &mut srng, &mut y);
            a.clear();
            series_records(y.iter().copied(), &mut a)?;
            for &t in ts {
                y[t - 1] = MISSING;
            }
            b.clear();
            series_records(y.iter().copied(), &mut b)?;
            for (x, z) in a.iter().zip(&b) {
                diff += (x.strict() != z.strict()) as i64;
                delta += z.strict() as i64 - x.strict() as i64;
            }
        }
        diffs.push(diff as f64);
        deltas.push(delta as f64);
    }
    let s = stats::Summary::of(&diffs);
    Ok(MissingImpactSummary {
        mean_diff: s.mean,
        q05: s.q05,
        q95: s.q95,
        record_count_delta: stats::Summary::of(&deltas),
        per_replicate_diff: diffs,
        per_replicate_delta: deltas,
    })
}

/// A 649-position gap layout over 40 stations, 62 years and 365 days.
///
/// Stations: one with 70 gaps (29 in year 6 and 18 in year 7), eight complete
/// stations, nineteen with 1 to 10 gaps, and twelve with about 40 gaps. Gap
/// years follow the usual pattern of early-record data loss: 52 gaps in the
/// first year, 193 in years 2-11, 143 in years 12-31 and 214 in years 32-62.
/// Calendar days are drawn uniformly.
pub fn reference_gap_mask(seed: u64) -> Vec<MaskPosition> {
    const SITES: usize = 40;
    const YEARS: usize = 62;
    let mut rng = stream(seed, &[0x6a70]);

    let mut counts = vec![0usize; SITES];
    counts[0] = 70;
    for (i, c) in counts[9..28].iter_mut().enumerate() {
        *c = i % 10 + 1;
    }
    for (i, c) in counts[28..40].iter_mut().enumerate() {
        *c = if i == 11 { 39 } else { 40 };
    }
    debug_assert_eq!(counts.iter().sum::<usize>(), 649);

    // pool of gap years outside the fixed block of station 0
    let mut years: Vec<usize> = Vec::with_capacity(602);
    years.extend(std::iter::repeat_n(1, 52));
    years.extend((0..193).map(|_| rng.random_range(2..=11)));
    years.extend((0..143).map(|_| rng.random_range(12..=31)));
    years.extend((0..214).map(|_| rng.random_range(32..=YEARS)));
    // Fisher-Yates so stations draw a mixture of bands
    for i in (1..years.len()).rev() {
        let j = rng.random_range(0..=i);
        years.swap(i, j);
    }

    let mut taken = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(649);
    let mut place = |site: usize, t: usize, rng: &mut StreamRng| loop {
        let day = rng.random_range(1..=DAYS_PER_YEAR);
        if taken.insert((site, t, day)) {
            out.push(MaskPosition { site, t, day });
            break;
        }
    };
    for _ in 0..29 {
        place(0, 6, &mut rng);
    }
    for _ in 0..18 {
        place(0, 7, &mut rng);
    }
    let mut pool = years.into_iter();
    for (site, &count) in counts.iter().enumerate() {
        let fixed = if site == 0 { 47 } else { 0 };
        for _ in fixed..count {
            let t = pool.next().expect("gap year pool exhausted");
            place(site, t, &mut rng);
        }
    }
    out.sort();
    out
}
