//! Scoring rules, DIC, discrete PIT, PSRF and spatial cross-validation.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::krige::one_step_ahead;
use crate::mcmc::{run_chains, FitData, ModelSpec, Variant};
use crate::records::{RecordTensor, Site};
use crate::rng::stream;
use crate::stats;

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::MalformedInput(format!("{a} probabilities for {b} outcomes")));
    }
    if a == 0 {
        return Err(Error::MalformedInput("no observations".into()));
    }
    Ok(())
}

/// Mean squared difference between probabilities and 0/1 outcomes.
pub fn brier(p: &[f64], y: &[u8]) -> Result<f64> {
    check_lengths(p.len(), y.len())?;
    Ok(stats::mean(p.iter().zip(y).map(|(p, &y)| (y as f64 - p).powi(2))))
}

/// Keeps the untied cells: `(probabilities, outcomes)`.
pub fn drop_tied(p: &[f64], y: &[Option<u8>]) -> (Vec<f64>, Vec<u8>) {
    p.iter().zip(y).filter_map(|(&p, y)| y.map(|y| (p, y))).unzip()
}

/// Tie-corrected Mann-Whitney AUC: `P(s+ > s-) + P(s+ = s-)/2`.
pub fn auc(scores: &[f64], y: &[u8]) -> Result<f64> {
    check_lengths(scores.len(), y.len())?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let n_pos = y.iter().filter(|&&v| v == 1).count();
    let n_neg = y.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Undefined("AUC needs both positive and negative outcomes".into()));
    }
    // midranks over tie runs, summed over positives (exact in u128 halves)
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // ranks i+1..=j+1, midrank*2 = i + j + 2
        let pos = idx[i..=j].iter().filter(|&&k| y[k] == 1).count() as u128;
        twice_rank_sum += pos * (i + j + 2) as u128;
        i = j + 1;
    }
    let np = n_pos as u128;
    let twice_u = twice_rank_sum - np * (np + 1);
    Ok(twice_u as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

fn bernoulli_deviance(p: &[f64], y: &[u8]) -> Result<f64> {
    let mut terms = Vec::with_capacity(p.len());
    for (&p, &y) in p.iter().zip(y) {
        let l = if y == 1 { p.ln() } else { (-p).ln_1p() };
        if !l.is_finite() {
            return Err(Error::Undefined(format!("infinite deviance: probability {p} with outcome {y}")));
        }
        terms.push(l);
    }
    Ok(-2.0 * stats::sum(terms))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dic {
    pub dic: f64,
    /// Posterior mean deviance.
    pub d_hat: f64,
    pub p_d: f64,
}

/// Streaming DIC over draws with fixed outcomes.
///
/// Means are updated as `m += (x - m) / k`, so identical draws leave them
/// bit-exact and `p_D` is exactly 0 for deterministic models.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DicAccumulator {
    count: usize,
    mean_deviance: f64,
    mean_p: Vec<f64>,
    outcomes: Vec<u8>,
}

impl DicAccumulator {
    pub fn add(&mut self, p: &[f64], y: &[u8]) -> Result<()> {
        check_lengths(p.len(), y.len())?;
        if self.count == 0 {
            self.mean_p = vec![0.0; p.len()];
            self.outcomes = y.to_vec();
        } else if self.outcomes != y {
            return Err(Error::MalformedInput("outcomes changed between draws".into()));
        }
        let d = bernoulli_deviance(p, y)?;
        self.count += 1;
        let k = self.count as f64;
        self.mean_deviance += (d - self.mean_deviance) / k;
        for (m, &p) in self.mean_p.iter_mut().zip(p) {
            *m += (p - *m) / k;
        }
        Ok(())
    }

    /// Pools another accumulator over the same outcomes.
    pub fn merge(&mut self, other: &DicAccumulator) -> Result<()> {
        if other.count == 0 {
            return Ok(());
        }
        if self.count == 0 {
            *self = other.clone();
            return Ok(());
        }
        if self.outcomes != other.outcomes {
            return Err(Error::MalformedInput("cannot merge DIC over different outcomes".into()));
        }
        let w = other.count as f64 / (self.count + other.count) as f64;
        self.mean_deviance += (other.mean_deviance - self.mean_deviance) * w;
        for (m, o) in self.mean_p.iter_mut().zip(&other.mean_p) {
            *m += (o - *m) * w;
        }
        self.count += other.count;
        Ok(())
    }

    pub fn finish(&self) -> Result<Dic> {
        if self.count == 0 {
            return Err(Error::MalformedInput("no draws accumulated".into()));
        }
        let d_at_mean = bernoulli_deviance(&self.mean_p, &self.outcomes)?;
        let p_d = self.mean_deviance - d_at_mean;
        Ok(Dic {
            dic: self.mean_deviance + p_d,
            d_hat: self.mean_deviance,
            p_d,
        })
    }
}

/// DIC from `probs[draw][obs]`.
pub fn dic(probs: &[Vec<f64>], y: &[u8]) -> Result<Dic> {
    let mut acc = DicAccumulator::default();
    for p in probs {
        acc.add(p, y)?;
    }
    acc.finish()
}

/// Predictive cdf just below and at the observed count, from samples.
pub fn pit_steps(samples: &[f64], observed: f64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::MalformedInput("no predictive samples".into()));
    }
    let n = samples.len() as f64;
    let below = samples.iter().filter(|&&s| s < observed).count() as f64;
    let at_or_below = samples.iter().filter(|&&s| s <= observed).count() as f64;
    Ok((below / n, at_or_below / n))
}

/// Accumulates the piecewise-linear per-observation cdfs of the discrete PIT.
#[derive(Debug, Clone, PartialEq)]
pub struct PitAccumulator {
    bins: usize,
    /// Sum over observations of `F(j/J)`, `j = 0..=J`, one list per grid point.
    sums: Vec<Vec<f64>>,
    n: usize,
}

impl PitAccumulator {
    pub fn new(bins: usize) -> Self {
        PitAccumulator {
            bins,
            sums: vec![Vec::new(); bins + 1],
            n: 0,
        }
    }

    pub fn add(&mut self, p_prev: f64, p_at: f64) -> Result<()> {
        if !(p_prev <= p_at) || p_prev < 0.0 || p_at > 1.0 {
            return Err(Error::InvalidParameter(format!("cdf steps {p_prev} > {p_at} or outside [0, 1]")));
        }
        for (j, s) in self.sums.iter_mut().enumerate() {
            let u = j as f64 / self.bins as f64;
            // F(0) = 0 and F(1) = 1 even when the step has zero width
            let f = if j == 0 {
                0.0
            } else if u >= p_at {
                1.0
            } else if u <= p_prev {
                0.0
            } else {
                (u - p_prev) / (p_at - p_prev)
            };
            s.push(f);
        }
        self.n += 1;
        Ok(())
    }

    /// Bin masses `f_j = Fbar(j/J) - Fbar((j-1)/J)`.
    pub fn masses(&self) -> Result<Vec<f64>> {
        if self.n == 0 {
            return Err(Error::MalformedInput("no PIT observations".into()));
        }
        // sorted sums make the result independent of observation order
        let fbar: Vec<f64> = self
            .sums
            .iter()
            .map(|s| {
                let mut s = s.clone();
                s.sort_by(f64::total_cmp);
                stats::sum(s) / self.n as f64
            })
            .collect();
        Ok(fbar.windows(2).map(|w| w[1] - w[0]).collect())
    }
}

/// Ten-bin discrete PIT histogram from `(P_{k-1}, P_k)` pairs.
pub fn pit_histogram(steps: &[(f64, f64)]) -> Result<Vec<f64>> {
    let mut acc = PitAccumulator::new(10);
    for &(a, b) in steps {
        acc.add(a, b)?;
    }
    acc.masses()
}

/// Mean absolute deviation between observed and predicted record counts,
/// per year. `observed[t][k]` runs over aligned (day, site) pairs and
/// `predicted[draw][t][k]` holds the matching predictive counts.
pub fn ad_metric(observed: &[Vec<f64>], predicted: &[Vec<Vec<f64>>]) -> Result<Vec<f64>> {
    if predicted.is_empty() {
        return Err(Error::MalformedInput("no predictive draws".into()));
    }
    let mut out = Vec::with_capacity(observed.len());
    for (t, obs) in observed.iter().enumerate() {
        let mut dev = Vec::with_capacity(obs.len() * predicted.len());
        for pred in predicted {
            let row = pred
                .get(t)
                .filter(|r| r.len() == obs.len())
                .ok_or_else(|| Error::MalformedInput(format!("predictive counts misaligned at year index {t}")))?;
            dev.extend(obs.iter().zip(row).map(|(o, p)| (o - p).abs()));
        }
        if predicted.iter().any(|p| p.len() != observed.len()) {
            return Err(Error::MalformedInput("predictive counts cover a different number of years".into()));
        }
        out.push(stats::mean(dev));
    }
    Ok(out)
}

fn check_chains(chains: &[Vec<f64>]) -> Result<usize> {
    if chains.len() < 2 {
        return Err(Error::InvalidParameter("PSRF needs at least two chains".into()));
    }
    let n = chains[0].len();
    if n < 10 || chains.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidParameter("PSRF needs equal chain lengths of at least 10".into()));
    }
    Ok(n)
}

fn split(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    chains
        .iter()
        .flat_map(|c| {
            let h = c.len() / 2;
            [&c[..h], &c[c.len() - h..]]
        })
        .collect()
}

/// Split-chain potential scale reduction factor of one scalar.
pub fn psrf(chains: &[Vec<f64>]) -> Result<f64> {
    check_chains(chains)?;
    let halves = split(chains);
    let n = halves[0].len() as f64;
    let means: Vec<f64> = halves.iter().map(|c| stats::mean(c.iter().copied())).collect();
    let w = stats::mean(halves.iter().map(|c| stats::variance(c)));
    let b_over_n = stats::variance(&means);
    if !(w > 0.0) {
        return Err(Error::Undefined("PSRF undefined: zero within-chain variance".into()));
    }
    let v = (n - 1.0) / n * w + b_over_n;
    Ok((v / w).sqrt())
}

/// Multivariate PSRF `(n-1)/n + (m+1)/m * lambda_max(W^-1 B/n)` over split chains.
///
/// `chains[c][k]` is the parameter vector of draw `k` in chain `c`.
pub fn multivariate_psrf(chains: &[Vec<Vec<f64>>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::InvalidParameter("PSRF needs at least two chains".into()));
    }
    let len = chains[0].len();
    if len < 10 || chains.iter().any(|c| c.len() != len) {
        return Err(Error::InvalidParameter("PSRF needs equal chain lengths of at least 10".into()));
    }
    let p = chains[0][0].len();
    let h = len / 2;
    let halves: Vec<&[Vec<f64>]> = chains.iter().flat_map(|c| [&c[..h], &c[len - h..]]).collect();
    let m = halves.len() as f64;
    let n = h as f64;
    let mean_of = |c: &[Vec<f64>]| -> Vec<f64> { (0..p).map(|j| stats::mean(c.iter().map(|d| d[j]))).collect() };
    let means: Vec<Vec<f64>> = halves.iter().map(|c| mean_of(c)).collect();
    let grand = mean_of(&means);
    let mut w = DMatrix::<f64>::zeros(p, p);
    for (c, mu) in halves.iter().zip(&means) {
        for d in c.iter() {
            for a in 0..p {
                for b in 0..p {
                    w[(a, b)] += (d[a] - mu[a]) * (d[b] - mu[b]);
                }
            }
        }
    }
    w /= m * (n - 1.0);
    let mut b_n = DMatrix::<f64>::zeros(p, p);
    for mu in &means {
        for a in 0..p {
            for b in 0..p {
                b_n[(a, b)] += (mu[a] - grand[a]) * (mu[b] - grand[b]);
            }
        }
    }
    b_n /= m - 1.0;
    let chol = nalgebra::Cholesky::new(w).ok_or_else(|| Error::Undefined("within-chain covariance is singular".into()))?;
    // L^-1 B L^-T has the eigenvalues of W^-1 B
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Undefined("within-chain covariance is singular".into()))?;
    let sym = &linv * b_n * linv.transpose();
    let sym = (&sym + sym.transpose()) * 0.5;
    let lambda = sym.symmetric_eigenvalues().max();
    Ok((n - 1.0) / n + (m + 1.0) / m * lambda)
}

/// Hold-out groups of site indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub groups: Vec<Vec<usize>>,
    pub seed: u64,
}

impl CvPlan {
    /// Random split of `n_sites` into `n_groups` groups of near-equal size.
    pub fn random(n_sites: usize, n_groups: usize, seed: u64) -> Result<Self> {
        if n_groups < 2 || n_groups > n_sites {
            return Err(Error::InvalidParameter(format!("cannot split {n_sites} sites into {n_groups} groups")));
        }
        let mut ids: Vec<usize> = (0..n_sites).collect();
        ids.shuffle(&mut stream(seed, &[0xc5]));
        let mut groups = vec![Vec::new(); n_groups];
        for (k, id) in ids.into_iter().enumerate() {
            groups[k % n_groups].push(id);
        }
        for g in &mut groups {
            g.sort_unstable();
        }
        Ok(CvPlan { groups, seed })
    }

    pub fn validate(&self, n_sites: usize) -> Result<()> {
        let mut seen = vec![false; n_sites];
        for g in &self.groups {
            for &s in g {
                if s >= n_sites || std::mem::replace(&mut seen[s], true) {
                    return Err(Error::InvalidParameter(format!("site index {s} repeated or out of range in plan")));
                }
            }
        }
        if seen.iter().any(|v| !v) {
            return Err(Error::InvalidParameter("plan does not cover every site".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AucMode {
    /// AUC per fold, then averaged over folds.
    FoldAverage,
    /// One AUC over the pooled hold-out predictions.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvRow {
    pub model: Variant,
    pub fold: usize,
    pub period: usize,
    pub bs: f64,
    /// `None` when the fold has a single outcome class in the period.
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvSummary {
    pub model: Variant,
    pub period: usize,
    pub bs: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CvTable {
    pub rows: Vec<CvRow>,
    pub summary: Vec<CvSummary>,
    /// `(model, fold, message)` for folds whose fit failed.
    pub failures: Vec<(Variant, usize, String)>,
    pub warnings: Vec<String>,
}

/// Inclusive year ranges used to split the metrics.
pub type Periods = Vec<(usize, usize)>;

/// Default split: years `2..=T/2` and `T/2+1..=T`.
pub fn default_periods(years: usize) -> Periods {
    let h = years / 2;
    vec![(2, h), (h + 1, years)]
}

/// Spatial cross-validation: each plan group in turn is held out, the model
/// is fitted to the rest and the hold-outs are scored one step ahead.
pub fn run_crossval(
    specs: &[ModelSpec],
    tensor: &RecordTensor,
    sites: &[Site],
    plan: &CvPlan,
    periods: &Periods,
    mode: AucMode,
) -> Result<CvTable> {
    plan.validate(sites.len())?;
    let jobs: Vec<(usize, usize)> = (0..specs.len())
        .flat_map(|m| (0..plan.groups.len()).map(move |f| (m, f)))
        .collect();
    // per job: per period (probabilities, outcomes)
    let results: Vec<Result<Vec<(Vec<f64>, Vec<u8>)>>> = jobs
        .par_iter()
        .map(|&(m, f)| {
            let hold = &plan.groups[f];
            let keep: Vec<usize> = (0..sites.len()).filter(|s| !hold.contains(s)).collect();
            let train_sites: Vec<Site> = keep.iter().map(|&s| sites[s].clone()).collect();
            let hold_sites: Vec<Site> = hold.iter().map(|&s| sites[s].clone()).collect();
            let data = FitData::new(tensor.select_sites(&keep), train_sites)?;
            let spec = ModelSpec {
                seed: crate::rng::derive_seed(specs[m].seed, &[f as u64]),
                ..specs[m].clone()
            };
            let fit = run_chains(&spec, &data, &[])?;
            let pred = one_step_ahead(&fit.draws, &hold_sites, &tensor.select_sites(hold), spec.seed)?;
            let mean = pred.mean();
            Ok(periods
                .iter()
                .map(|&(a, b)| {
                    let (p, y): (Vec<f64>, Vec<Option<u8>>) = pred
                        .cells
                        .iter()
                        .zip(mean.iter().zip(&pred.outcomes))
                        .filter(|((_, t, _), _)| (a..=b).contains(t))
                        .map(|(_, (p, y))| (*p, *y))
                        .unzip();
                    drop_tied(&p, &y)
                })
                .collect())
        })
        .collect();

    let mut table = CvTable::default();
    let mut pooled: Vec<Vec<(Vec<f64>, Vec<u8>)>> = vec![vec![(Vec::new(), Vec::new()); periods.len()]; specs.len()];
    for (&(m, f), r) in jobs.iter().zip(results) {
        let model = specs[m].variant;
        match r {
            Err(e) => table.failures.push((model, f, e.to_string())),
            Ok(per) => {
                for (k, (p, y)) in per.into_iter().enumerate() {
                    if p.is_empty() {
                        continue;
                    }
                    let a = auc(&p, &y).ok();
                    if a.is_none() {
                        table.warnings.push(format!("{model} fold {f} period {}: single outcome class, AUC skipped", k + 1));
                    }
                    table.rows.push(CvRow {
                        model,
                        fold: f,
                        period: k + 1,
                        bs: brier(&p, &y)?,
                        auc: a,
                    });
                    pooled[m][k].0.extend(p);
                    pooled[m][k].1.extend(y);
                }
            }
        }
    }
    for (m, spec) in specs.iter().enumerate() {
        for k in 0..periods.len() {
            let (p, y) = &pooled[m][k];
            if p.is_empty() {
                continue;
            }
            let auc_value = match mode {
                AucMode::Pooled => auc(p, y).unwrap_or(f64::NAN),
                AucMode::FoldAverage => stats::mean(
                    table
                        .rows
                        .iter()
                        .filter(|r| r.model == spec.variant && r.period == k + 1)
                        .filter_map(|r| r.auc),
                ),
            };
            table.summary.push(CvSummary {
                model: spec.variant,
                period: k + 1,
                bs: brier(p, y)?,
                auc: auc_value,
            });
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn brute_auc(s: &[f64], y: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if y[i] == 1 && y[j] == 0 {
                    den += 1.0;
                    num += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
                }
            }
        }
        num / den
    }

    #[test]
    fn brier_hand_cases() {
        assert!((brier(&[0.8, 0.2], &[1, 0]).unwrap() - 0.04).abs() < 1e-15);
        assert_eq!(brier(&[0.5; 4], &[1, 0, 1, 1]).unwrap(), 0.25);
        assert!(brier(&[0.5], &[1, 0]).is_err());
    }

    #[test]
    fn auc_hand_cases() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 5], &[0, 1, 0, 1, 1]).unwrap(), 0.5);
        let s = [0.2, 0.5, 0.5, 0.7];
        let y = [0, 1, 0, 1];
        assert_eq!(auc(&s, &y).unwrap(), brute_auc(&s, &y));
        assert!(auc(&[0.1, 0.2], &[1, 1]).is_err());
    }

    #[test]
    fn dic_two_draw_hand_case() {
        let probs = vec![vec![0.6, 0.3], vec![0.8, 0.1]];
        let y = [1, 0];
        let d1 = -2.0 * (0.6f64.ln() + 0.7f64.ln());
        let d2 = -2.0 * (0.8f64.ln() + 0.9f64.ln());
        let dbar = (d1 + d2) / 2.0;
        let dmean = -2.0 * (0.7f64.ln() + 0.8f64.ln());
        let r = dic(&probs, &y).unwrap();
        assert!((r.d_hat - dbar).abs() < 1e-12);
        assert!((r.p_d - (dbar - dmean)).abs() < 1e-12);
        assert!((r.dic - (2.0 * dbar - dmean)).abs() < 1e-12);
    }

    #[test]
    fn dic_deterministic_draws() {
        let p = vec![0.37, 0.11, 0.93];
        let r = dic(&vec![p; 7], &[1, 0, 1]).unwrap();
        assert_eq!(r.p_d, 0.0);
        assert_eq!(r.dic, r.d_hat);
        assert!(dic(&[vec![1.0]], &[0]).is_err());
    }

    #[test]
    fn dic_merge_matches_single_pass() {
        let mut rng = seeded(3);
        let y = [1, 0, 0, 1];
        let draws: Vec<Vec<f64>> = (0..9).map(|_| (0..4).map(|_| rng.random_range(0.05..0.95)).collect()).collect();
        let whole = dic(&draws, &y).unwrap();
        let mut a = DicAccumulator::default();
        let mut b = DicAccumulator::default();
        for d in &draws[..4] {
            a.add(d, &y).unwrap();
        }
        for d in &draws[4..] {
            b.add(d, &y).unwrap();
        }
        a.merge(&b).unwrap();
        let merged = a.finish().unwrap();
        assert!((merged.dic - whole.dic).abs() < 1e-10);
    }

    #[test]
    fn pit_special_cases() {
        let f = pit_histogram(&[(0.0, 1.0)]).unwrap();
        assert!(f.iter().all(|v| (v - 0.1).abs() < 1e-15));
        let f = pit_histogram(&[(0.9, 1.0), (0.9, 1.0)]).unwrap();
        assert!((f[9] - 1.0).abs() < 1e-15);
        assert!(f[..9].iter().all(|&v| v == 0.0));
        assert!(pit_histogram(&[(0.6, 0.5)]).is_err());
    }

    #[test]
    fn pit_steps_from_samples() {
        let (a, b) = pit_steps(&[0.0, 1.0, 1.0, 2.0, 3.0], 1.0).unwrap();
        assert_eq!((a, b), (0.2, 0.6));
    }

    #[test]
    fn ad_hand_cases() {
        let obs = vec![vec![1.0, 2.0], vec![0.0, 3.0]];
        assert_eq!(ad_metric(&obs, &[obs.clone()]).unwrap(), vec![0.0, 0.0]);
        let off: Vec<Vec<f64>> = obs.iter().map(|r| r.iter().map(|v| v + 1.0).collect()).collect();
        assert_eq!(ad_metric(&obs, &[off]).unwrap(), vec![1.0, 1.0]);
        assert!(ad_metric(&obs, &[vec![vec![1.0]]]).is_err());
    }

    #[test]
    fn psrf_same_and_disjoint() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = seeded(5);
        let mut draw = |shift: f64| -> Vec<f64> {
            (0..10_000)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z + shift
                })
                .collect()
        };
        let same = vec![draw(0.0), draw(0.0)];
        assert!(psrf(&same).unwrap() < 1.05);
        let apart = vec![draw(0.0), draw(100.0)];
        assert!(psrf(&apart).unwrap() > 1.1);
        assert!(psrf(&[vec![1.0; 20], vec![1.0; 20]]).is_err());
        assert!(psrf(&same[..1]).is_err());
    }

    #[test]
    fn multivariate_psrf_bounds_marginals() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = seeded(6);
        let chains: Vec<Vec<Vec<f64>>> = (0..2)
            .map(|c| {
                (0..2000)
                    .map(|_| {
                        let a: f64 = StandardNormal.sample(&mut rng);
                        let b: f64 = StandardNormal.sample(&mut rng);
                        vec![a + c as f64 * 0.5, a * 0.3 + b]
                    })
                    .collect()
            })
            .collect();
        let mv = multivariate_psrf(&chains).unwrap();
        for j in 0..2 {
            let marg: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|d| d[j]).collect()).collect();
            // the multivariate statistic bounds the marginal ones (squared scale)
            assert!(mv + 1e-9 >= psrf(&marg).unwrap().powi(2) - 0.01);
        }
    }

    #[test]
    fn plan_partition() {
        let plan = CvPlan::random(42, 10, 1).unwrap();
        plan.validate(42).unwrap();
        let sizes: Vec<usize> = plan.groups.iter().map(|g| g.len()).collect();
        assert!(sizes.iter().all(|&s| s == 4 || s == 5));
        assert!(CvPlan { groups: vec![vec![0, 1], vec![1]], seed: 0 }.validate(2).is_err());
    }
}
