//! Spatial effect layer shared by the chain: surfaces, their temporal means,
//! the centring intercept, variances, and the decay target.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Priors, Variant};
use crate::error::Result;
use crate::krige::{exp_correlation, Coord};
use crate::linalg::Factor;
use crate::samplers::sample_gamma;

/// Random-effect parameters of one block.
///
/// - M2: one surface with prior mean `beta0`.
/// - M3: one zero-mean surface plus yearly means around `beta0`.
/// - M4: one zero-mean surface plus per-day means around `beta0`.
/// - M5: one surface per day, centred on its daily mean, daily means around `beta0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GpLayer {
    pub surfaces: Vec<DVector<f64>>,
    pub temporal: Vec<f64>,
    pub beta0: f64,
    pub sigma0_sq: f64,
    pub sigma1_sq: f64,
}

impl GpLayer {
    pub fn new(variant: Variant, n_sites: usize, n_groups: usize, years: usize) -> Self {
        let n_surfaces = match variant {
            Variant::M0 | Variant::M1 => 0,
            Variant::M2 | Variant::M3 | Variant::M4 => 1,
            Variant::M5 => n_groups,
        };
        let n_temporal = match variant {
            Variant::M3 => years - 1,
            Variant::M4 | Variant::M5 => n_groups,
            _ => 0,
        };
        GpLayer {
            surfaces: vec![DVector::zeros(n_sites); n_surfaces],
            temporal: vec![0.0; n_temporal],
            beta0: 0.0,
            sigma0_sq: 1.0,
            sigma1_sq: 1.0,
        }
    }

    /// Prior mean of surface `k`.
    pub fn surface_mean(&self, variant: Variant, k: usize) -> f64 {
        match variant {
            Variant::M2 => self.beta0,
            Variant::M5 => self.temporal[k],
            _ => 0.0,
        }
    }

    /// Columns `W_k - mu_k`.
    pub fn deviations(&self, variant: Variant) -> DMatrix<f64> {
        let n = self.surfaces.first().map_or(0, |s| s.len());
        let mut d = DMatrix::zeros(n, self.surfaces.len());
        for (k, s) in self.surfaces.iter().enumerate() {
            let m = self.surface_mean(variant, k);
            for i in 0..n {
                d[(i, k)] = s[i] - m;
            }
        }
        d
    }

    /// Daily means given their surfaces (M5 only): conjugate normal update.
    pub fn sample_temporal_from_surfaces<R: Rng + ?Sized>(&mut self, r_inv_one: &DVector<f64>, one_r_inv_one: f64, rng: &mut R) {
        let prec = one_r_inv_one / self.sigma0_sq + 1.0 / self.sigma1_sq;
        let var = 1.0 / prec;
        for (k, w) in self.temporal.iter_mut().enumerate() {
            let mean = var * (r_inv_one.dot(&self.surfaces[k]) / self.sigma0_sq + self.beta0 / self.sigma1_sq);
            let z: f64 = StandardNormal.sample(rng);
            *w = mean + var.sqrt() * z;
        }
    }

    /// Centring intercept given the temporal means (M3-M5) or the surface (M2).
    pub fn sample_beta0<R: Rng + ?Sized>(
        &mut self,
        variant: Variant,
        priors: &Priors,
        r_inv_one: &DVector<f64>,
        one_r_inv_one: f64,
        rng: &mut R,
    ) {
        let prior_prec = 1.0 / (priors.beta0_sd * priors.beta0_sd);
        let (prec, lin) = match variant {
            Variant::M2 => (
                one_r_inv_one / self.sigma0_sq + prior_prec,
                r_inv_one.dot(&self.surfaces[0]) / self.sigma0_sq,
            ),
            Variant::M3 | Variant::M4 | Variant::M5 => (
                self.temporal.len() as f64 / self.sigma1_sq + prior_prec,
                crate::stats::sum(self.temporal.iter().copied()) / self.sigma1_sq,
            ),
            _ => return,
        };
        let var = 1.0 / prec;
        let mean = var * (lin + priors.beta0_mean * prior_prec);
        let z: f64 = StandardNormal.sample(rng);
        self.beta0 = mean + var.sqrt() * z;
    }

    /// Gamma updates of the precisions `1/sigma0^2` and `1/sigma1^2`.
    pub fn sample_variances<R: Rng + ?Sized>(&mut self, variant: Variant, priors: &Priors, quad_sum: f64, rng: &mut R) -> Result<()> {
        if variant.has_spatial() {
            let n = self.surfaces[0].len() as f64;
            let shape = n * self.surfaces.len() as f64 / 2.0 + priors.a_sigma;
            let rate = 0.5 * quad_sum + priors.b_sigma;
            self.sigma0_sq = 1.0 / sample_gamma(shape, rate, rng)?;
        }
        if variant.has_temporal() {
            let ss = crate::stats::sum(self.temporal.iter().map(|w| (w - self.beta0) * (w - self.beta0)));
            let shape = self.temporal.len() as f64 / 2.0 + priors.a_sigma;
            let rate = 0.5 * ss + priors.b_sigma;
            self.sigma1_sq = 1.0 / sample_gamma(shape, rate, rng)?;
        }
        Ok(())
    }
}

/// `sum_k d_k' R^{-1} d_k` for the columns of `d`.
pub fn quad_sum(r: &Factor, d: &DMatrix<f64>) -> f64 {
    if d.ncols() == 0 {
        return 0.0;
    }
    let l = r.l();
    let mut z = d.clone();
    l.solve_lower_triangular_mut(&mut z);
    crate::stats::sum(z.iter().map(|v| v * v))
}

/// Log full conditional of the decay (natural scale, up to a constant).
///
/// `layers` holds, per block, the deviation matrix and its `sigma0^2`.
pub fn phi_log_target(phi: f64, coords: &[Coord], layers: &[(&DMatrix<f64>, f64)], priors: &Priors) -> Result<f64> {
    let r = Factor::new(exp_correlation(coords, phi)?, "spatial correlation")?;
    let log_det = r.log_det();
    let mut lt = (priors.a_phi - 1.0) * phi.ln() - priors.b_phi * phi;
    for (d, s2) in layers {
        lt -= 0.5 * d.ncols() as f64 * log_det;
        lt -= quad_sum(&r, d) / (2.0 * s2);
    }
    Ok(lt)
}

/// `(R^{-1}, R^{-1} 1, 1' R^{-1} 1)` at a given decay.
pub fn correlation_terms(coords: &[Coord], phi: f64) -> Result<(Factor, DMatrix<f64>, DVector<f64>, f64)> {
    let r = Factor::new(exp_correlation(coords, phi)?, "spatial correlation")?;
    let inv = r.inverse();
    let one = DVector::from_element(coords.len(), 1.0);
    let u = r.solve(&one);
    let s1 = u.sum();
    Ok((r, inv, u, s1))
}

/// Median pairwise distance, the scale for the default decay start `3 / median`.
pub fn median_distance(coords: &[Coord]) -> Option<f64> {
    let mut d = Vec::new();
    for i in 0..coords.len() {
        for j in i + 1..coords.len() {
            d.push((coords[i].0 - coords[j].0).hypot(coords[i].1 - coords[j].1));
        }
    }
    if d.is_empty() {
        return None;
    }
    d.sort_by(f64::total_cmp);
    Some(crate::stats::quantile_sorted(&d, 0.5))
}

/// Hyperparameter draws from a chain over steps 6-8 with the surfaces held fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperDraw {
    pub beta0: f64,
    pub sigma0_sq: f64,
    pub sigma1_sq: f64,
    pub phi0: f64,
}

/// Runs the daily-mean, decay and variance updates of an M5 layer whose
/// surfaces are known. Used to check recovery of the GP hyperparameters.
pub fn run_hyper_chain(
    coords: &[Coord],
    surfaces: Vec<DVector<f64>>,
    priors: &Priors,
    sweeps: usize,
    burn_in: usize,
    seed: u64,
) -> Result<(Vec<HyperDraw>, f64)> {
    use crate::rng::stream;
    use crate::samplers::{adaptive_rw_step, AdaptiveRwState};
    let n_groups = surfaces.len();
    let mut layer = GpLayer {
        temporal: vec![0.0; n_groups],
        surfaces,
        beta0: 0.0,
        sigma0_sq: 1.0,
        sigma1_sq: 1.0,
    };
    let phi0 = median_distance(coords).map_or(1.0, |m| 3.0 / m);
    let mut phi = AdaptiveRwState::new(phi0, 0.2);
    let mut out = Vec::new();
    for sweep in 0..sweeps {
        if sweep == burn_in {
            phi.freeze();
        }
        let mut rng = stream(seed, &[sweep as u64]);
        let (_, _, u, s1) = correlation_terms(coords, phi.value())?;
        layer.sample_temporal_from_surfaces(&u, s1, &mut rng);
        layer.sample_beta0(Variant::M5, priors, &u, s1, &mut rng);
        let d = layer.deviations(Variant::M5);
        let s2 = layer.sigma0_sq;
        adaptive_rw_step(&mut phi, |p| phi_log_target(p, coords, &[(&d, s2)], priors), &mut rng)?;
        let r = Factor::new(exp_correlation(coords, phi.value())?, "spatial correlation")?;
        let q = quad_sum(&r, &d);
        layer.sample_variances(Variant::M5, priors, q, &mut rng)?;
        if sweep >= burn_in {
            out.push(HyperDraw {
                beta0: layer.beta0,
                sigma0_sq: layer.sigma0_sq,
                sigma1_sq: layer.sigma1_sq,
                phi0: phi.value(),
            });
        }
    }
    Ok((out, phi.acceptance_rate()))
}
