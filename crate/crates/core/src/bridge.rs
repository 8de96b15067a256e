//! Step 5: bridge sampling of each component's normalizing constant
//! Λ_k = ∫ ρ̂_k, against a moment-matched Gaussian proposal φ (normalized,
//! so Λ_φ = 1 and the bridge ratio is Λ_k itself). The optimal-α iteration
//! is the classic two-sample fixed point, run entirely in log space:
//! with l = log(Λ_k/Λ_φ) and mixture fractions s_ρ = N_k/(N_k+N′),
//! s_φ = N′/(N_k+N′),
//!     l ← logmean_i[log ρ̂(x′_i) − m(x′_i)] − logmean_j[log φ(x_j) − m(x_j)],
//!     m(x) = logsumexp(ln s_ρ + log ρ̂(x) − l, ln s_φ + log φ(x)),
//! where x′ are fresh proposal draws and x are target-side samples.

use crate::error::{Error, Result};
use crate::rng::{stream, tag};
use crate::sample::SampleSet;
use crate::special::{log_mean_exp, log_sum_exp, LN_SQRT_2PI};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone)]
pub struct BridgeConfig {
    pub n_proposal: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub covariance_ridge: f64,
    pub seed: u64,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        BridgeConfig {
            n_proposal: 10000,
            max_iters: 50,
            rel_tol: 1e-6,
            covariance_ridge: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RatioEstimate {
    /// Λ_k / Λ_φ; with the normalized proposal this is Λ_k.
    pub lambda_ratio: f64,
    pub log_lambda_ratio: f64,
    pub iterates: Vec<f64>,
    pub converged: bool,
}

/// Moment-matched normalized Gaussian proposal.
#[derive(Debug, Clone)]
pub struct GaussianProposal {
    pub mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl GaussianProposal {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let diff = DVector::from_row_slice(x) - &self.mean;
        let z = self.chol.l_dirty().solve_lower_triangular(&diff).unwrap();
        self.log_norm - 0.5 * z.norm_squared()
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let d = self.dim();
        let z = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng)));
        (&self.mean + self.chol.l_dirty().lower_triangle() * z)
            .iter()
            .copied()
            .collect()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let l = self.chol.l();
        &l * l.transpose()
    }
}

pub fn fit_proposal(samples: &SampleSet, ridge: f64) -> Result<GaussianProposal> {
    let d = samples.dim();
    let n = samples.len();
    if n < d + 1 {
        return Err(Error::invalid(format!(
            "proposal fit needs at least d+1 = {} samples, got {n}",
            d + 1
        )));
    }
    let mut mean = DVector::zeros(d);
    for r in samples.rows() {
        mean += DVector::from_row_slice(r);
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for r in samples.rows() {
        let diff = DVector::from_row_slice(r) - &mean;
        cov += &diff * diff.transpose();
    }
    cov /= n as f64;
    for i in 0..d {
        cov[(i, i)] += ridge;
    }
    let chol = Cholesky::new(cov)
        .ok_or_else(|| Error::EstimationFailure("proposal covariance not SPD".into()))?;
    let log_det_half: f64 = (0..d).map(|i| chol.l_dirty()[(i, i)].ln()).sum();
    let log_norm = -(d as f64) * LN_SQRT_2PI - log_det_half;
    Ok(GaussianProposal {
        mean,
        chol,
        log_norm,
    })
}

/// Iterative bridge estimate of Λ_k/Λ_φ. `log_rho_hat` returns the
/// unnormalized log target, −∞ (or the floor) outside Ω_k.
pub fn bridge_iterate(
    log_rho_hat: &dyn Fn(&[f64]) -> f64,
    target_samples: &SampleSet,
    proposal: &GaussianProposal,
    cfg: &BridgeConfig,
) -> Result<RatioEstimate> {
    if cfg.n_proposal == 0 || target_samples.len() == 0 {
        return Err(Error::invalid("bridge sampling needs samples on both sides"));
    }
    if target_samples.dim() != proposal.dim() {
        return Err(Error::DimensionMismatch {
            expected: proposal.dim(),
            got: target_samples.dim(),
        });
    }
    let mut rng = stream(cfg.seed, &[tag::BRIDGE]);
    let prop_pts: Vec<Vec<f64>> = (0..cfg.n_proposal).map(|_| proposal.sample(&mut rng)).collect();
    let lr_prop: Vec<f64> = prop_pts.iter().map(|x| log_rho_hat(x)).collect();
    let lp_prop: Vec<f64> = prop_pts.iter().map(|x| proposal.log_pdf(x)).collect();
    let lr_targ: Vec<f64> = target_samples.rows().map(log_rho_hat).collect();
    let lp_targ: Vec<f64> = target_samples.rows().map(|x| proposal.log_pdf(x)).collect();

    // init with α = 1/φ: simple importance-sampling ratio
    let init: Vec<f64> = lr_prop.iter().zip(&lp_prop).map(|(r, p)| r - p).collect();
    let mut l = log_mean_exp(&init);
    if !l.is_finite() {
        return Err(Error::EstimationFailure(
            "bridge initialization underflowed; proposal misses the target mass".into(),
        ));
    }
    let n_t = target_samples.len() as f64;
    let n_p = cfg.n_proposal as f64;
    let ls_rho = (n_t / (n_t + n_p)).ln();
    let ls_phi = (n_p / (n_t + n_p)).ln();
    let mut iterates = vec![l.exp()];
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        let num: Vec<f64> = lr_prop
            .iter()
            .zip(&lp_prop)
            .map(|(&r, &p)| r - log_sum_exp(&[ls_rho + r - l, ls_phi + p]))
            .collect();
        let den: Vec<f64> = lr_targ
            .iter()
            .zip(&lp_targ)
            .map(|(&r, &p)| p - log_sum_exp(&[ls_rho + r - l, ls_phi + p]))
            .collect();
        let l_new = log_mean_exp(&num) - log_mean_exp(&den);
        if !l_new.is_finite() {
            return Err(Error::EstimationFailure(
                "bridge iteration underflowed; proposal misses the target mass".into(),
            ));
        }
        let delta = (l_new - l).abs();
        l = l_new;
        iterates.push(l.exp());
        if delta < cfg.rel_tol {
            converged = true;
            break;
        }
    }
    Ok(RatioEstimate {
        lambda_ratio: l.exp(),
        log_lambda_ratio: l,
        iterates,
        converged,
    })
}

/// r̂_k = Λ_k / Σ_j Λ_j.
pub fn mixing_ratios(lambdas: &[f64]) -> Result<Vec<f64>> {
    if lambdas.is_empty() {
        return Err(Error::invalid("no lambdas"));
    }
    if lambdas.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::invalid("lambdas must be positive and finite"));
    }
    let total: f64 = lambdas.iter().sum();
    Ok(lambdas.iter().map(|&l| l / total).collect())
}

/// Softmax variant for log-scale Λ's (high-dimensional targets).
pub fn mixing_ratios_from_log(log_lambdas: &[f64]) -> Result<Vec<f64>> {
    if log_lambdas.is_empty() || log_lambdas.iter().any(|l| !l.is_finite()) {
        return Err(Error::invalid("log-lambdas must be finite and non-empty"));
    }
    let lse = log_sum_exp(log_lambdas);
    Ok(log_lambdas.iter().map(|&l| (l - lse).exp()).collect())
}
