//! Gaussian mixture targets: ρ(x) = Σ_k r_k N(x | μ_k, Σ_k).

use super::{check_dim, Target, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::special::{log_sum_exp, LN_SQRT_2PI};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

pub struct GaussianComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub(crate) chol: Cholesky<f64, Dyn>,
    /// log of the normal density's normalization constant part:
    /// -d/2 log 2π - 1/2 log det Σ.
    pub(crate) log_norm: f64,
}

impl GaussianComponent {
    pub fn new(weight: f64, mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::invalid("covariance shape does not match mean"));
        }
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(Error::invalid(format!("component weight {weight} not in (0, 1]")));
        }
        let sym_err = (&cov - cov.transpose()).abs().max();
        if sym_err > 1e-10 {
            return Err(Error::invalid("covariance is not symmetric"));
        }
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::invalid("covariance is not positive definite"))?;
        let log_det: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
        let log_norm = -(d as f64) * LN_SQRT_2PI - 0.5 * log_det;
        Ok(GaussianComponent {
            weight,
            mean: DVector::from_vec(mean),
            cov,
            chol,
            log_norm,
        })
    }

    /// log N(x | μ, Σ), without the mixture weight.
    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let diff = DVector::from_column_slice(x) - &self.mean;
        let z = self.chol.l().solve_lower_triangular(&diff).unwrap();
        self.log_norm - 0.5 * z.norm_squared()
    }

    /// ∇ log N = -Σ⁻¹ (x - μ).
    pub fn grad_log_pdf(&self, x: &[f64]) -> DVector<f64> {
        let diff = DVector::from_column_slice(x) - &self.mean;
        -self.chol.solve(&diff)
    }
}

pub struct GaussianMixture {
    dim: usize,
    components: Vec<GaussianComponent>,
    prior_box: Vec<(f64, f64)>,
}

impl GaussianMixture {
    pub fn new(components: Vec<GaussianComponent>, prior_box: Vec<(f64, f64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        let dim = components[0].mean.len();
        for c in &components {
            check_dim(dim, c.mean.len())?;
        }
        if prior_box.len() != dim {
            return Err(Error::invalid("prior box dimension mismatch"));
        }
        let wsum: f64 = components.iter().map(|c| c.weight).sum();
        if (wsum - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("component weights sum to {wsum}, not 1")));
        }
        Ok(GaussianMixture {
            dim,
            components,
            prior_box,
        })
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    /// The §4.1-style two-mode 2d benchmark: μ1=(6,0), Σ1=diag(1.2,0.5),
    /// μ2=(a,0), Σ2=I, weights (0.4, 0.6).
    pub fn benchmark_2d(a: f64) -> Self {
        let c1 = GaussianComponent::new(
            0.4,
            vec![6.0, 0.0],
            DMatrix::from_row_slice(2, 2, &[1.2, 0.0, 0.0, 0.5]),
        )
        .unwrap();
        let c2 = GaussianComponent::new(0.6, vec![a, 0.0], DMatrix::identity(2, 2)).unwrap();
        GaussianMixture::new(vec![c1, c2], vec![(-15.0, 15.0); 2]).unwrap()
    }

    fn component_log_terms(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.weight.ln() + c.log_pdf(x))
            .collect()
    }

    /// Exact (generator-free) sampler for ground-truth comparisons.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut idx = self.components.len() - 1;
                for (k, c) in self.components.iter().enumerate() {
                    acc += c.weight;
                    if u < acc {
                        idx = k;
                        break;
                    }
                }
                let c = &self.components[idx];
                let z = DVector::from_iterator(
                    self.dim,
                    (0..self.dim).map(|_| rng.sample::<f64, _>(StandardNormal)),
                );
                let x = &c.mean + c.chol.l() * z;
                x.iter().cloned().collect()
            })
            .collect()
    }
}

impl Target for GaussianMixture {
    fn dim(&self) -> usize {
        self.dim
    }

    fn prior_box(&self) -> &[(f64, f64)] {
        &self.prior_box
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim, "dimension mismatch");
        log_sum_exp(&self.component_log_terms(x)).max(LOG_FLOOR)
    }

    fn gradient_available(&self) -> bool {
        true
    }

    fn grad_log_density(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, out.len())?;
        let terms = self.component_log_terms(x);
        let lse = log_sum_exp(&terms);
        out.fill(0.0);
        // responsibilities in log space, so far tails stay 0/0-free
        for (k, c) in self.components.iter().enumerate() {
            let resp = (terms[k] - lse).exp();
            if resp == 0.0 {
                continue;
            }
            let g = c.grad_log_pdf(x);
            for i in 0..self.dim {
                out[i] += resp * g[i];
            }
        }
        Ok(())
    }
}
