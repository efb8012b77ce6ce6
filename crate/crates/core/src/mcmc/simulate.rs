//! Forward simulation of record indicators from known parameters.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{BlockDraw, Draw, Variant};
use crate::design::{raw_row, Block, OrthoPolyBasis};
use crate::error::{Error, Result};
use crate::krige::{block_slot, exp_covariance, Coord};
use crate::linalg::Factor;
use crate::records::{Indicator, RecordTensor, Site};
use crate::rng::stream;
use crate::samplers::mvn_from_factor;
use crate::stats;

/// Random-effect hyperparameters shared by the three blocks of a truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthHyper {
    pub beta0: f64,
    pub sigma0_sq: f64,
    pub sigma1_sq: f64,
    pub phi0: f64,
}

fn n_groups(block: Block, years: usize, days: usize) -> usize {
    match block {
        Block::Main => (years - 1) * (days - 2),
        _ => years - 1,
    }
}

/// Builds a truth whose random effects are drawn from their priors.
///
/// `betas` are raw-scale coefficients per block, without the intercept for
/// the spatial variants.
pub fn sample_truth(
    variant: Variant,
    betas: [Vec<f64>; 3],
    hyper: TruthHyper,
    coords: &[Coord],
    years: usize,
    days: usize,
    seed: u64,
) -> Result<Draw> {
    if years < 2 || days < 3 {
        return Err(Error::InvalidParameter("need at least 2 years and 3 days".into()));
    }
    for (block, beta) in Block::ALL.iter().zip(&betas) {
        if beta.len() != block.dim() - variant.first_column() {
            return Err(Error::InvalidParameter(format!(
                "{} coefficients for the {} block, expected {}",
                beta.len(),
                block.label(),
                block.dim() - variant.first_column()
            )));
        }
    }
    let mut rng = stream(seed, &[0x7e0]);
    let cov = if variant.has_spatial() {
        Some(Factor::new(
            exp_covariance(coords, coords, hyper.sigma0_sq, hyper.phi0)?,
            "truth covariance",
        )?)
    } else {
        None
    };
    let n = coords.len();
    let mut blocks = Vec::with_capacity(3);
    for (block, beta) in Block::ALL.into_iter().zip(betas) {
        let groups = n_groups(block, years, days);
        let n_temporal = match variant {
            Variant::M3 => years - 1,
            Variant::M4 | Variant::M5 => groups,
            _ => 0,
        };
        let temporal: Vec<f64> = (0..n_temporal)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                hyper.beta0 + hyper.sigma1_sq.sqrt() * z
            })
            .collect();
        let mut surface = |mean: f64| -> Vec<f64> {
            let f = cov.as_ref().expect("spatial variant");
            mvn_from_factor(&DVector::from_element(n, mean), f, &mut rng).iter().copied().collect()
        };
        let surfaces = match variant {
            Variant::M0 | Variant::M1 => Vec::new(),
            Variant::M2 => vec![surface(hyper.beta0)],
            Variant::M3 | Variant::M4 => vec![surface(0.0)],
            Variant::M5 => temporal.iter().map(|&m| surface(m)).collect(),
        };
        blocks.push(BlockDraw {
            beta,
            beta0: if variant.has_spatial() { hyper.beta0 } else { 0.0 },
            sigma0_sq: if variant.has_spatial() { hyper.sigma0_sq } else { 0.0 },
            sigma1_sq: if variant.has_temporal() { hyper.sigma1_sq } else { 0.0 },
            temporal,
            surfaces,
        });
    }
    Ok(Draw {
        blocks,
        phi0: if variant.has_spatial() { hyper.phi0 } else { 0.0 },
    })
}

/// Random effect of `(site, t, day)` under a draw.
fn truth_effect(variant: Variant, bd: &BlockDraw, block: Block, years: usize, days: usize, site: usize, t: usize, day: usize) -> Result<f64> {
    let g = || super::group_index(block, years, days, t, day);
    Ok(match variant {
        Variant::M0 | Variant::M1 => 0.0,
        Variant::M2 => bd.surfaces[0][site],
        Variant::M3 => bd.surfaces[0][site] + bd.temporal[t - 2],
        Variant::M4 => bd.surfaces[0][site] + bd.temporal[g()?],
        Variant::M5 => bd.surfaces[g()?][site],
    })
}

/// Simulates indicators sequentially in `(t, day)` so lags use simulated
/// values. Year 1 is all records. M0 uses `1/t` and ignores `truth`.
pub fn simulate_indicators(
    variant: Variant,
    truth: &Draw,
    sites: &[Site],
    years: usize,
    days: usize,
    seed: u64,
) -> Result<RecordTensor> {
    if years < 2 || days < 3 {
        return Err(Error::InvalidParameter("need at least 2 years and 3 days".into()));
    }
    let basis = OrthoPolyBasis::new(years)?;
    let n = sites.len();
    let mut rng = stream(seed, &[0x5a1]);
    let mut tensor = RecordTensor::from_fn(n, years, days, |_, t, _| {
        if t == 1 {
            Indicator::Record
        } else {
            Indicator::NotRecord
        }
    });
    let mut cells = tensor.cells().to_vec();
    let first = variant.first_column();
    for t in 2..=years {
        for day in 1..=days {
            let block = Block::of_day(day);
            for s in 0..n {
                let p = if variant == Variant::M0 {
                    1.0 / t as f64
                } else {
                    let lag = |back: usize| {
                        tensor
                            .lag_position(t, day, back)
                            .map_or(0.0, |(tt, dd)| cells[tensor.index(s, tt, dd)].strict() as f64)
                    };
                    let raw = raw_row(block, t, day, lag(1), lag(2), sites[s].dist_coast_km, &basis)?;
                    let bd = &truth.blocks[block_slot(block)];
                    let xb: f64 = raw[first..].iter().zip(&bd.beta).map(|(x, b)| x * b).sum();
                    stats::logistic(xb + truth_effect(variant, bd, block, years, days, s, t, day)?)
                };
                cells[tensor.index(s, t, day)] = if rng.random::<f64>() < p {
                    Indicator::Record
                } else {
                    Indicator::NotRecord
                };
            }
        }
    }
    tensor = RecordTensor::from_cells(n, years, days, cells)?;
    Ok(tensor)
}
