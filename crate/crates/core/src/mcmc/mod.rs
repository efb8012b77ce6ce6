//! Data-augmentation Gibbs sampler for the record-probability models M0-M5.
//!
//! | variant | linear predictor                      |
//! |---------|---------------------------------------|
//! | M0      | `-log(t - 1)` (no parameters)         |
//! | M1      | `x beta`                              |
//! | M2      | `x beta + w(s)`                       |
//! | M3      | `x beta + w(s) + w_t`                 |
//! | M4      | `x beta + w(s) + w_tl`                |
//! | M5      | `x beta + w_tl(s)`                    |
//!
//! Days 1 and 2 of each year use their own reduced sub-models with separate
//! coefficients and variances; the spatial decay is shared.

pub mod chain;
pub mod data;
pub mod gp;
pub mod simulate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::design::{Block, ScalingSpec};
use crate::error::{Error, Result};
use crate::records::Site;

pub use chain::{
    augmentation_run, fit, lambda_update, latent_update, run_chain, run_chains, ChainInit, ChainOutput, FitResult,
};
pub use data::FitData;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    M0,
    M1,
    M2,
    M3,
    M4,
    M5,
}

impl Variant {
    pub const ALL: [Variant; 6] = [Variant::M0, Variant::M1, Variant::M2, Variant::M3, Variant::M4, Variant::M5];

    /// Carries a Gaussian-process surface (and hence `beta0`, `sigma0^2`, `phi0`).
    pub fn has_spatial(self) -> bool {
        matches!(self, Variant::M2 | Variant::M3 | Variant::M4 | Variant::M5)
    }

    /// Carries temporal means (and hence `sigma1^2`).
    pub fn has_temporal(self) -> bool {
        matches!(self, Variant::M3 | Variant::M4 | Variant::M5)
    }

    /// First design column with a coefficient: the intercept moves into the
    /// random effects under hierarchical centring.
    pub fn first_column(self) -> usize {
        if self == Variant::M1 {
            0
        } else {
            1
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown model {s:?}; expected M0..M5")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Priors {
    pub beta_mean: f64,
    pub beta_sd: f64,
    pub beta0_mean: f64,
    pub beta0_sd: f64,
    /// Gamma prior (shape, rate) on every precision `1/sigma^2`.
    pub a_sigma: f64,
    pub b_sigma: f64,
    /// Gamma prior (shape, rate) on the decay.
    pub a_phi: f64,
    pub b_phi: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Priors {
            beta_mean: 0.0,
            beta_sd: 100.0,
            beta0_mean: 0.0,
            beta0_sd: 100.0,
            a_sigma: 2.0,
            b_sigma: 1.0,
            a_phi: 2.0,
            b_phi: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub variant: Variant,
    pub priors: Priors,
    /// Total sweeps per chain, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
    /// Initial proposal sd of the log-scale decay walk.
    pub phi_proposal_sd: f64,
    /// Keep latent `Y` and `lambda` with every retained draw.
    pub retain_latent: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            variant: Variant::M1,
            priors: Priors::default(),
            iterations: 2000,
            burn_in: 1000,
            thin: 1,
            chains: 2,
            seed: 1,
            phi_proposal_sd: 0.2,
            retain_latent: false,
        }
    }
}

impl ModelSpec {
    pub fn new(variant: Variant) -> Self {
        ModelSpec {
            variant,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.priors;
        let positive = [p.beta_sd, p.beta0_sd, p.a_sigma, p.b_sigma, p.a_phi, p.b_phi, self.phi_proposal_sd];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter("prior scales and hyperparameters must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidParameter(format!(
                "burn-in {} must be below the chain length {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 || self.chains == 0 {
            return Err(Error::InvalidParameter("thin and chains must be at least 1".into()));
        }
        Ok(())
    }

    /// Retained draws per chain.
    pub fn kept(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub chain: usize,
    pub phi_acceptance: f64,
    pub phi_proposal_sd: f64,
    pub lambda_acceptance: f64,
}

/// Everything needed to interpret and reuse a set of draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawsMeta {
    pub variant: Variant,
    pub years: usize,
    pub days: usize,
    pub sites: Vec<Site>,
    /// Per block in `Block::ALL` order.
    pub scaling: Vec<ScalingSpec>,
    pub spec: ModelSpec,
    pub stats: Vec<ChainStats>,
}

impl DrawsMeta {
    /// Days of the year that belong to `block`.
    pub fn block_days(&self, block: Block) -> std::ops::RangeInclusive<usize> {
        match block {
            Block::Main => 3..=self.days,
            Block::Day1 => 1..=1,
            Block::Day2 => 2..=2,
        }
    }

    /// Index of `(t, day)` among the block's `(t, day)` groups, ordered by year then day.
    pub fn group_index(&self, block: Block, t: usize, day: usize) -> Result<usize> {
        group_index(block, self.years, self.days, t, day)
    }
}

pub(crate) fn group_index(block: Block, years: usize, days: usize, t: usize, day: usize) -> Result<usize> {
    let (first, width) = match block {
        Block::Main => (3, days.saturating_sub(2)),
        Block::Day1 => (1, 1),
        Block::Day2 => (2, 1),
    };
    if t < 2 || t > years || day < first || day >= first + width {
        return Err(Error::OutOfRange(format!("(t {t}, day {day}) is not in the {} block", block.label())));
    }
    Ok((t - 2) * width + (day - first))
}

/// `(t, day)` groups of a block in storage order (year, then day).
pub fn group_days(block: Block, years: usize, days: usize) -> Vec<(usize, usize)> {
    let range = match block {
        Block::Main => 3..=days,
        Block::Day1 => 1..=1,
        Block::Day2 => 2..=2,
    };
    (2..=years).flat_map(|t| range.clone().map(move |d| (t, d))).collect()
}

/// One block's parameters in a retained draw. Absent parameters are 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BlockDraw {
    pub beta: Vec<f64>,
    pub beta0: f64,
    pub sigma0_sq: f64,
    pub sigma1_sq: f64,
    pub temporal: Vec<f64>,
    pub surfaces: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Draw {
    /// In `Block::ALL` order.
    pub blocks: Vec<BlockDraw>,
    pub phi0: f64,
}

impl Draw {
    /// Named scalar parameters present under `variant`.
    pub fn scalars(&self, variant: Variant) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        if variant == Variant::M0 {
            return out;
        }
        for (block, bd) in Block::ALL.iter().zip(&self.blocks) {
            let names = &block.names()[variant.first_column()..];
            for (name, v) in names.iter().zip(&bd.beta) {
                out.push((format!("{}.beta.{name}", block.label()), *v));
            }
            if variant.has_spatial() {
                out.push((format!("{}.beta0", block.label()), bd.beta0));
                out.push((format!("{}.sigma0_sq", block.label()), bd.sigma0_sq));
            }
            if variant.has_temporal() {
                out.push((format!("{}.sigma1_sq", block.label()), bd.sigma1_sq));
            }
        }
        if variant.has_spatial() {
            out.push(("phi0".to_string(), self.phi0));
        }
        out
    }

    /// Sets one scalar by the name used in [`Draw::scalars`].
    pub fn set_scalar(&mut self, variant: Variant, name: &str, value: f64) -> Result<()> {
        if name == "phi0" {
            self.phi0 = value;
            return Ok(());
        }
        let unknown = || Error::Format {
            path: std::path::PathBuf::new(),
            msg: format!("unknown parameter {name:?}"),
        };
        let (label, rest) = name.split_once('.').ok_or_else(unknown)?;
        let slot = Block::ALL.iter().position(|b| b.label() == label).ok_or_else(unknown)?;
        let block = Block::ALL[slot];
        let bd = &mut self.blocks[slot];
        match rest {
            "beta0" => bd.beta0 = value,
            "sigma0_sq" => bd.sigma0_sq = value,
            "sigma1_sq" => bd.sigma1_sq = value,
            _ => {
                let coef = rest.strip_prefix("beta.").ok_or_else(unknown)?;
                let names = &block.names()[variant.first_column()..];
                let j = names.iter().position(|n| *n == coef).ok_or_else(unknown)?;
                bd.beta[j] = value;
            }
        }
        Ok(())
    }
}

/// Retained draws of every chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub meta: DrawsMeta,
    /// `chains[c][k]` is draw `k` of chain `c`.
    pub chains: Vec<Vec<Draw>>,
}

impl PosteriorDraws {
    /// All draws, chain by chain.
    pub fn flat(&self) -> impl Iterator<Item = &Draw> + '_ {
        self.chains.iter().flatten()
    }

    pub fn total_draws(&self) -> usize {
        self.chains.iter().map(|c| c.len()).sum()
    }

    pub fn scalar_names(&self) -> Vec<String> {
        self.flat()
            .next()
            .map(|d| d.scalars(self.meta.variant).into_iter().map(|(n, _)| n).collect())
            .unwrap_or_default()
    }

    /// `out[chain][draw]` for one named scalar.
    pub fn scalar_series(&self, name: &str) -> Option<Vec<Vec<f64>>> {
        let idx = self.scalar_names().iter().position(|n| n == name)?;
        Some(
            self.chains
                .iter()
                .map(|c| c.iter().map(|d| d.scalars(self.meta.variant)[idx].1).collect())
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_parsing() {
        assert_eq!("m3".parse::<Variant>().unwrap(), Variant::M3);
        assert!("M9".parse::<Variant>().is_err());
    }

    #[test]
    fn spec_validation() {
        let mut s = ModelSpec::default();
        assert!(s.validate().is_ok());
        s.burn_in = s.iterations;
        assert!(s.validate().is_err());
        let s = ModelSpec {
            iterations: 10,
            burn_in: 3,
            thin: 2,
            ..Default::default()
        };
        assert_eq!(s.kept(), 4);
    }

    #[test]
    fn group_indices() {
        assert_eq!(group_index(Block::Main, 5, 10, 2, 3).unwrap(), 0);
        assert_eq!(group_index(Block::Main, 5, 10, 3, 3).unwrap(), 8);
        assert_eq!(group_index(Block::Day2, 5, 10, 4, 2).unwrap(), 2);
        assert!(group_index(Block::Main, 5, 10, 2, 2).is_err());
        assert!(group_index(Block::Day1, 5, 10, 1, 1).is_err());
        let g = group_days(Block::Main, 5, 10);
        for (i, &(t, d)) in g.iter().enumerate() {
            assert_eq!(group_index(Block::Main, 5, 10, t, d).unwrap(), i);
        }
    }

    #[test]
    fn scalar_names_round_trip() {
        let mut d = Draw {
            blocks: Block::ALL
                .iter()
                .map(|b| BlockDraw {
                    beta: vec![0.0; b.dim() - 1],
                    ..Default::default()
                })
                .collect(),
            phi0: 0.0,
        };
        let names: Vec<String> = d.scalars(Variant::M5).into_iter().map(|(n, _)| n).collect();
        for (i, n) in names.iter().enumerate() {
            d.set_scalar(Variant::M5, n, i as f64 + 0.5).unwrap();
        }
        let back = d.scalars(Variant::M5);
        for (i, (_, v)) in back.iter().enumerate() {
            assert_eq!(*v, i as f64 + 0.5);
        }
        assert!(d.set_scalar(Variant::M5, "main.beta.nothing", 1.0).is_err());
    }
}
