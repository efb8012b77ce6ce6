//! One sweep per iteration, in this order:
//!
//! 1. tied indicators redrawn from `Bernoulli(1/r)`, dependent rows rebuilt;
//! 2. latent `Y ~ TN(eta, lambda)` on the side given by the indicator;
//! 3. `lambda = (2K)^2` by Metropolis with Kolmogorov–Smirnov proposals;
//! 4. regression coefficients per block;
//! 5. spatial surfaces;
//! 6. temporal means and centring intercepts;
//! 7. the shared decay by adaptive log-scale random walk;
//! 8. variances.
//!
//! Random numbers come from streams keyed by `(seed, chain, sweep, step, ...)`
//! so results do not depend on the thread count.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::data::{BlockData, FitData};
use super::gp::{correlation_terms, median_distance, phi_log_target, quad_sum, GpLayer};
use super::{BlockDraw, ChainStats, Draw, DrawsMeta, ModelSpec, PosteriorDraws, Variant};
use crate::diagnostics::{Dic, DicAccumulator};
use crate::error::Result;
use crate::linalg::Factor;
use crate::records::{RecordTensor, Site};
use crate::rng::{stream, StreamRng};
use crate::samplers::{adaptive_rw_step, mvn_from_precision, sample_ks, sample_truncated_normal, AdaptiveRwState};
use crate::stats;

const STEP_TIES: u64 = 1;
const STEP_LATENT: u64 = 2;
const STEP_BETA: u64 = 4;
const STEP_W: u64 = 5;
const STEP_MEANS: u64 = 6;
const STEP_PHI: u64 = 7;
const STEP_VAR: u64 = 8;

/// Latent draw for one cell given its indicator.
pub fn latent_update<R: Rng + ?Sized>(eta: f64, lambda: f64, indicator: u8, rng: &mut R) -> Result<f64> {
    if indicator == 1 {
        sample_truncated_normal(eta, lambda, 0.0, f64::INFINITY, rng)
    } else {
        sample_truncated_normal(eta, lambda, f64::NEG_INFINITY, 0.0, rng)
    }
}

/// Metropolis update of `lambda` given the residual `e = Y - eta`.
///
/// The proposal `(2K)^2`, `K ~ KS`, is the prior itself, so the acceptance
/// ratio is the normal likelihood ratio `N(e; 0, lambda*) / N(e; 0, lambda)`.
pub fn lambda_update<R: Rng + ?Sized>(residual: f64, lambda: f64, rng: &mut R) -> (f64, bool) {
    let k = sample_ks(rng);
    let proposal = 4.0 * k * k;
    let log_ratio = 0.5 * (lambda / proposal).ln() - 0.5 * residual * residual * (1.0 / proposal - 1.0 / lambda);
    if rng.random::<f64>().ln() < log_ratio {
        (proposal, true)
    } else {
        (lambda, false)
    }
}

/// Fixed-`eta` augmentation run on one cell: the indicator is redrawn from
/// its `lambda`-conditional law, then `Y` and `lambda` by the chain kernels.
/// Returns `Y - eta` per sweep, which should be standard logistic.
pub fn augmentation_run(eta: f64, sweeps: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = stream(seed, &[0xa11]);
    let mut lambda: f64 = 1.0;
    let mut out = Vec::with_capacity(sweeps);
    for _ in 0..sweeps {
        let p1 = crate::samplers::norm_cdf(eta / lambda.sqrt());
        let ind = (rng.random::<f64>() < p1) as u8;
        let y = latent_update(eta, lambda, ind, &mut rng)?;
        lambda = lambda_update(y - eta, lambda, &mut rng).0;
        out.push(y - eta);
    }
    Ok(out)
}

/// Per-block mutable state.
#[derive(Debug, Clone)]
struct BlockState {
    xt: DMatrix<f64>,
    y: Vec<f64>,
    lambda: Vec<f64>,
    beta: DVector<f64>,
    layer: GpLayer,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ChainInit {
    /// Added to the intercept-like parameters at the start.
    pub intercept_shift: f64,
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub draws: Vec<Draw>,
    pub stats: ChainStats,
    pub dic: DicAccumulator,
    /// `(Y, lambda)` per retained draw and block when requested.
    pub latent: Vec<Vec<(Vec<f64>, Vec<f64>)>>,
    pub seconds: f64,
}

struct Chain<'a> {
    spec: &'a ModelSpec,
    data: &'a FitData,
    chain: usize,
    blocks: Vec<BlockState>,
    indicators: Vec<u8>,
    phi: AdaptiveRwState,
    lambda_accepted: u64,
    lambda_proposed: u64,
}

fn effect(variant: Variant, layer: &GpLayer, b: &BlockData, cell: usize) -> f64 {
    let g = cell / b.n_sites;
    let i = cell % b.n_sites;
    match variant {
        Variant::M0 | Variant::M1 => 0.0,
        Variant::M2 => layer.surfaces[0][i],
        Variant::M3 => layer.surfaces[0][i] + layer.temporal[b.groups[g].0 - 2],
        Variant::M4 => layer.surfaces[0][i] + layer.temporal[g],
        Variant::M5 => layer.surfaces[g][i],
    }
}

impl<'a> Chain<'a> {
    fn new(spec: &'a ModelSpec, data: &'a FitData, chain: usize, init: ChainInit) -> Self {
        let v = spec.variant;
        let first = v.first_column();
        let blocks = data
            .blocks
            .iter()
            .map(|b| {
                let mut layer = GpLayer::new(v, b.n_sites, b.n_groups(), data.years);
                let mut beta = DVector::zeros(b.block.dim() - first);
                match v {
                    Variant::M1 => beta[0] = init.intercept_shift,
                    Variant::M2 => {
                        layer.beta0 = init.intercept_shift;
                        layer.surfaces[0].fill(init.intercept_shift);
                    }
                    Variant::M3 | Variant::M4 => {
                        layer.beta0 = init.intercept_shift;
                        layer.temporal.fill(init.intercept_shift);
                    }
                    Variant::M5 => {
                        layer.beta0 = init.intercept_shift;
                        layer.temporal.fill(init.intercept_shift);
                        for s in &mut layer.surfaces {
                            s.fill(init.intercept_shift);
                        }
                    }
                    Variant::M0 => {}
                }
                let y = b
                    .tensor_index
                    .iter()
                    .map(|&i| if data.initial_indicators[i] == 1 { 1.0 } else { -1.0 })
                    .collect();
                BlockState {
                    xt: b.xt.clone(),
                    y,
                    lambda: vec![1.0; b.n_cells()],
                    beta,
                    layer,
                }
            })
            .collect();
        let phi0 = median_distance(&data.coords).map_or(1.0, |m| 3.0 / m);
        Chain {
            spec,
            data,
            chain,
            blocks,
            indicators: data.initial_indicators.clone(),
            phi: AdaptiveRwState::new(phi0, spec.phi_proposal_sd),
            lambda_accepted: 0,
            lambda_proposed: 0,
        }
    }

    fn rng(&self, sweep: usize, step: u64, extra: &[u64]) -> StreamRng {
        let mut keys = vec![self.chain as u64, sweep as u64, step];
        keys.extend_from_slice(extra);
        stream(self.spec.seed, &keys)
    }

    /// `x beta` per cell of a block.
    fn xb(&self, slot: usize) -> DVector<f64> {
        let st = &self.blocks[slot];
        let first = self.spec.variant.first_column();
        st.xt.rows(first, st.beta.len()).tr_mul(&st.beta)
    }

    fn step_ties(&mut self, sweep: usize) -> Result<()> {
        if self.data.ties.is_empty() {
            return Ok(());
        }
        let mut rng = self.rng(sweep, STEP_TIES, &[]);
        for tie in &self.data.ties {
            self.indicators[tie.tensor_index] = (rng.random::<f64>() < 1.0 / tie.multiplicity as f64) as u8;
        }
        for tie in &self.data.ties {
            for &(slot, cell) in &tie.dependents {
                let row = self.data.blocks[slot].row(cell, &self.indicators, &self.data.dists, &self.data.basis)?;
                self.blocks[slot].xt.column_mut(cell).copy_from_slice(&row);
            }
        }
        Ok(())
    }

    /// Steps 2 and 3, parallel over `(t, day)` groups.
    fn step_latent_lambda(&mut self, sweep: usize) -> Result<()> {
        let variant = self.spec.variant;
        let seed = self.spec.seed;
        let chain = self.chain as u64;
        let mut accepted = 0u64;
        let mut proposed = 0u64;
        for slot in 0..self.blocks.len() {
            let xb = self.xb(slot);
            let b = &self.data.blocks[slot];
            let n = b.n_sites;
            let indicators = &self.indicators;
            let st = &mut self.blocks[slot];
            let layer = &st.layer;
            let counts: Vec<Result<u64>> = st
                .y
                .par_chunks_mut(n)
                .zip(st.lambda.par_chunks_mut(n))
                .enumerate()
                .map(|(g, (ys, ls))| {
                    let mut rng = stream(seed, &[chain, sweep as u64, STEP_LATENT, slot as u64, g as u64]);
                    let mut acc = 0;
                    for i in 0..n {
                        let cell = g * n + i;
                        let eta = xb[cell] + effect(variant, layer, b, cell);
                        let ind = indicators[b.tensor_index[cell]];
                        ys[i] = latent_update(eta, ls[i], ind, &mut rng)?;
                        let (l, a) = lambda_update(ys[i] - eta, ls[i], &mut rng);
                        ls[i] = l;
                        acc += a as u64;
                    }
                    Ok(acc)
                })
                .collect();
            for c in counts {
                accepted += c?;
            }
            proposed += b.n_cells() as u64;
        }
        self.lambda_accepted += accepted;
        self.lambda_proposed += proposed;
        Ok(())
    }

    fn step_beta(&mut self, sweep: usize) -> Result<()> {
        let variant = self.spec.variant;
        let first = variant.first_column();
        let pr = &self.spec.priors;
        let prior_prec = 1.0 / (pr.beta_sd * pr.beta_sd);
        for slot in 0..self.blocks.len() {
            let b = &self.data.blocks[slot];
            let st = &self.blocks[slot];
            let p = st.beta.len();
            let rows = st.xt.nrows();
            let mut gram = vec![0.0; p * p];
            let mut rhs = DVector::zeros(p);
            for (cell, col) in st.xt.as_slice().chunks_exact(rows).enumerate() {
                let x = &col[first..];
                let w = 1.0 / st.lambda[cell];
                let r = (st.y[cell] - effect(variant, &st.layer, b, cell)) * w;
                for a in 0..p {
                    let wa = w * x[a];
                    rhs[a] += x[a] * r;
                    for (g, xb) in gram[a * p..=a * p + a].iter_mut().zip(x) {
                        *g += wa * xb;
                    }
                }
            }
            let prec = DMatrix::from_fn(p, p, |a, c| {
                let v = if c <= a { gram[a * p + c] } else { gram[c * p + a] };
                if a == c {
                    v + prior_prec
                } else {
                    v
                }
            });
            rhs.add_scalar_mut(pr.beta_mean * prior_prec);
            let f = Factor::new(prec, "coefficient precision")?;
            let mut rng = self.rng(sweep, STEP_BETA, &[slot as u64]);
            self.blocks[slot].beta = mvn_from_precision(&rhs, &f, &mut rng);
        }
        Ok(())
    }

    /// Steps 5 and 6.
    fn step_surfaces_and_means(&mut self, sweep: usize) -> Result<()> {
        let variant = self.spec.variant;
        if !variant.has_spatial() {
            return Ok(());
        }
        let (_, r_inv, u, s1) = correlation_terms(&self.data.coords, self.phi.value())?;
        let priors = self.spec.priors.clone();
        for slot in 0..self.blocks.len() {
            let xb = self.xb(slot);
            let b = &self.data.blocks[slot];
            let n = b.n_sites;
            let st = &mut self.blocks[slot];
            let sigma_inv = &r_inv / st.layer.sigma0_sq;
            match variant {
                Variant::M5 => {
                    let seed = self.spec.seed;
                    let chain = self.chain as u64;
                    let layer = &st.layer;
                    let (ys, ls) = (&st.y, &st.lambda);
                    let new: Vec<Result<DVector<f64>>> = (0..b.n_groups())
                        .into_par_iter()
                        .map(|g| {
                            let mut prec = sigma_inv.clone();
                            let mean = layer.temporal[g];
                            let mut rhs = &sigma_inv * DVector::from_element(n, mean);
                            for i in 0..n {
                                let cell = g * n + i;
                                prec[(i, i)] += 1.0 / ls[cell];
                                rhs[i] += (ys[cell] - xb[cell]) / ls[cell];
                            }
                            let f = Factor::new(prec, "surface precision")?;
                            let mut rng = stream(seed, &[chain, sweep as u64, STEP_W, slot as u64, g as u64]);
                            Ok(mvn_from_precision(&rhs, &f, &mut rng))
                        })
                        .collect();
                    for (g, w) in new.into_iter().enumerate() {
                        st.layer.surfaces[g] = w?;
                    }
                    let mut rng = stream(self.spec.seed, &[chain, sweep as u64, STEP_MEANS, slot as u64]);
                    st.layer.sample_temporal_from_surfaces(&u, s1, &mut rng);
                    st.layer.sample_beta0(variant, &priors, &u, s1, &mut rng);
                }
                _ => {
                    // one time-constant surface per block
                    let mut rng = stream(self.spec.seed, &[self.chain as u64, sweep as u64, STEP_W, slot as u64]);
                    let mean = st.layer.surface_mean(variant, 0);
                    let mut prec = sigma_inv.clone();
                    let mut rhs = &sigma_inv * DVector::from_element(n, mean);
                    for cell in 0..b.n_cells() {
                        let i = cell % n;
                        let g = cell / n;
                        let temporal = match variant {
                            Variant::M3 => st.layer.temporal[b.groups[g].0 - 2],
                            Variant::M4 => st.layer.temporal[g],
                            _ => 0.0,
                        };
                        prec[(i, i)] += 1.0 / st.lambda[cell];
                        rhs[i] += (st.y[cell] - xb[cell] - temporal) / st.lambda[cell];
                    }
                    let f = Factor::new(prec, "surface precision")?;
                    st.layer.surfaces[0] = mvn_from_precision(&rhs, &f, &mut rng);

                    let mut rng = stream(self.spec.seed, &[self.chain as u64, sweep as u64, STEP_MEANS, slot as u64]);
                    if variant.has_temporal() {
                        let k = st.layer.temporal.len();
                        let mut wsum = vec![0.0; k];
                        let mut rsum = vec![0.0; k];
                        for cell in 0..b.n_cells() {
                            let g = cell / n;
                            let tau = if variant == Variant::M3 { b.groups[g].0 - 2 } else { g };
                            let w = 1.0 / st.lambda[cell];
                            wsum[tau] += w;
                            rsum[tau] += (st.y[cell] - xb[cell] - st.layer.surfaces[0][cell % n]) * w;
                        }
                        let (beta0, s1sq) = (st.layer.beta0, st.layer.sigma1_sq);
                        for tau in 0..k {
                            let prec = wsum[tau] + 1.0 / s1sq;
                            let m = (rsum[tau] + beta0 / s1sq) / prec;
                            let z: f64 = StandardNormal.sample(&mut rng);
                            st.layer.temporal[tau] = m + z / prec.sqrt();
                        }
                    }
                    st.layer.sample_beta0(variant, &priors, &u, s1, &mut rng);
                }
            }
        }
        Ok(())
    }

    /// Steps 7 and 8.
    fn step_phi_and_variances(&mut self, sweep: usize) -> Result<()> {
        let variant = self.spec.variant;
        if !variant.has_spatial() {
            return Ok(());
        }
        let devs: Vec<DMatrix<f64>> = self.blocks.iter().map(|b| b.layer.deviations(variant)).collect();
        let s2: Vec<f64> = self.blocks.iter().map(|b| b.layer.sigma0_sq).collect();
        let layers: Vec<(&DMatrix<f64>, f64)> = devs.iter().zip(s2.iter().copied()).collect();
        let coords = &self.data.coords;
        let priors = &self.spec.priors;
        let mut rng = self.rng(sweep, STEP_PHI, &[]);
        adaptive_rw_step(&mut self.phi, |p| phi_log_target(p, coords, &layers, priors), &mut rng)?;
        let r = Factor::new(crate::krige::exp_correlation(coords, self.phi.value())?, "spatial correlation")?;
        let mut rng = self.rng(sweep, STEP_VAR, &[]);
        for (slot, d) in devs.iter().enumerate() {
            let q = quad_sum(&r, d);
            self.blocks[slot].layer.sample_variances(variant, priors, q, &mut rng)?;
        }
        Ok(())
    }

    fn sweep(&mut self, sweep: usize) -> Result<()> {
        self.step_ties(sweep).map_err(|e| e.at_step(sweep, "tied indicators"))?;
        self.step_latent_lambda(sweep).map_err(|e| e.at_step(sweep, "latent and lambda"))?;
        self.step_beta(sweep).map_err(|e| e.at_step(sweep, "coefficients"))?;
        self.step_surfaces_and_means(sweep).map_err(|e| e.at_step(sweep, "surfaces and means"))?;
        self.step_phi_and_variances(sweep).map_err(|e| e.at_step(sweep, "decay and variances"))?;
        Ok(())
    }

    fn snapshot(&self) -> Draw {
        let spatial = self.spec.variant.has_spatial();
        Draw {
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockDraw {
                    beta: b.beta.iter().copied().collect(),
                    beta0: if spatial { b.layer.beta0 } else { 0.0 },
                    sigma0_sq: if spatial { b.layer.sigma0_sq } else { 0.0 },
                    sigma1_sq: if self.spec.variant.has_temporal() { b.layer.sigma1_sq } else { 0.0 },
                    temporal: b.layer.temporal.clone(),
                    surfaces: b.layer.surfaces.iter().map(|s| s.iter().copied().collect()).collect(),
                })
                .collect(),
            phi0: if spatial { self.phi.value() } else { 0.0 },
        }
    }

    /// Fitted probabilities and outcomes of the untied cells, block by block.
    fn fitted(&self) -> (Vec<f64>, Vec<u8>) {
        let mut p = Vec::new();
        let mut y = Vec::new();
        for slot in 0..self.blocks.len() {
            let xb = self.xb(slot);
            let b = &self.data.blocks[slot];
            for cell in 0..b.n_cells() {
                if b.observed[cell] {
                    // clamped so a saturated fit keeps a finite deviance
                    let eta = xb[cell] + effect(self.spec.variant, &self.blocks[slot].layer, b, cell);
                    p.push(stats::logistic(eta.clamp(-35.0, 35.0)));
                    y.push(self.indicators[b.tensor_index[cell]]);
                }
            }
        }
        (p, y)
    }
}

/// Runs one chain. M0 has no parameters and returns empty draws.
pub fn run_chain(spec: &ModelSpec, data: &FitData, chain: usize, init: ChainInit) -> Result<ChainOutput> {
    spec.validate()?;
    let start = Instant::now();
    let kept = spec.kept();
    if spec.variant == Variant::M0 {
        let mut dic = DicAccumulator::default();
        let (p, y) = m0_fitted(data);
        dic.add(&p, &y)?;
        return Ok(ChainOutput {
            draws: vec![Draw::default(); kept],
            stats: ChainStats {
                chain,
                phi_acceptance: 0.0,
                phi_proposal_sd: 0.0,
                lambda_acceptance: 0.0,
            },
            dic,
            latent: Vec::new(),
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    let mut c = Chain::new(spec, data, chain, init);
    let mut draws = Vec::with_capacity(kept);
    let mut latent = Vec::new();
    let mut dic = DicAccumulator::default();
    for sweep in 0..spec.iterations {
        if sweep == spec.burn_in {
            c.phi.freeze();
            c.lambda_accepted = 0;
            c.lambda_proposed = 0;
        }
        c.sweep(sweep)?;
        if sweep >= spec.burn_in && (sweep - spec.burn_in) % spec.thin == 0 {
            draws.push(c.snapshot());
            let (p, y) = c.fitted();
            dic.add(&p, &y)?;
            if spec.retain_latent {
                latent.push(c.blocks.iter().map(|b| (b.y.clone(), b.lambda.clone())).collect());
            }
        }
    }
    Ok(ChainOutput {
        draws,
        stats: ChainStats {
            chain,
            phi_acceptance: if spec.variant.has_spatial() { c.phi.acceptance_rate() } else { 0.0 },
            phi_proposal_sd: if spec.variant.has_spatial() { c.phi.proposal_sd() } else { 0.0 },
            lambda_acceptance: c.lambda_accepted as f64 / c.lambda_proposed.max(1) as f64,
        },
        dic,
        latent,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn m0_fitted(data: &FitData) -> (Vec<f64>, Vec<u8>) {
    let mut p = Vec::new();
    let mut y = Vec::new();
    for b in &data.blocks {
        for cell in 0..b.n_cells() {
            if b.observed[cell] {
                let t = b.groups[cell / b.n_sites].0;
                p.push(1.0 / t as f64);
                y.push(data.initial_indicators[b.tensor_index[cell]]);
            }
        }
    }
    (p, y)
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub draws: PosteriorDraws,
    pub dic: Dic,
    /// Wall-clock seconds per chain (not part of the reproducible output).
    pub seconds: Vec<f64>,
    pub latent: Vec<Vec<Vec<(Vec<f64>, Vec<f64>)>>>,
}

/// Runs `spec.chains` chains (concurrently) with per-chain initialisations.
pub fn run_chains(spec: &ModelSpec, data: &FitData, inits: &[ChainInit]) -> Result<FitResult> {
    spec.validate()?;
    let outputs: Vec<Result<ChainOutput>> = (0..spec.chains)
        .into_par_iter()
        .map(|c| run_chain(spec, data, c, inits.get(c).copied().unwrap_or_default()))
        .collect();
    let outputs: Vec<ChainOutput> = outputs.into_iter().collect::<Result<_>>()?;
    let mut dic = DicAccumulator::default();
    for o in &outputs {
        dic.merge(&o.dic)?;
    }
    let dic = dic.finish()?;
    let meta = DrawsMeta {
        variant: spec.variant,
        years: data.years,
        days: data.days,
        sites: data.sites.clone(),
        scaling: data.scaling(),
        spec: spec.clone(),
        stats: outputs.iter().map(|o| o.stats.clone()).collect(),
    };
    let seconds = outputs.iter().map(|o| o.seconds).collect();
    let mut chains = Vec::new();
    let mut latent = Vec::new();
    for o in outputs {
        chains.push(o.draws);
        latent.push(o.latent);
    }
    Ok(FitResult {
        draws: PosteriorDraws { meta, chains },
        dic,
        seconds,
        latent,
    })
}

/// Prepares the data and runs all chains from the default start.
pub fn fit(spec: &ModelSpec, tensor: &RecordTensor, sites: &[Site]) -> Result<FitResult> {
    let data = FitData::new(tensor.clone(), sites.to_vec())?;
    run_chains(spec, &data, &[])
}
