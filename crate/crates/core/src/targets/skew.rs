//! Skew-normal mixture targets:
//! ρ(x) = Σ_k r_k · 2 N(x | μ_k, Σ_k) Φ(α_kᵀ (x − μ_k)).

use super::gmm::GaussianComponent;
use super::{check_dim, Target, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::special::{log_std_normal_cdf, log_sum_exp, std_normal_hazard};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub struct SkewNormalComponent {
    pub base: GaussianComponent,
    pub skew: DVector<f64>,
}

impl SkewNormalComponent {
    pub fn new(weight: f64, mean: Vec<f64>, cov: DMatrix<f64>, skew: Vec<f64>) -> Result<Self> {
        if skew.len() != mean.len() {
            return Err(Error::invalid("skewness dimension mismatch"));
        }
        Ok(SkewNormalComponent {
            base: GaussianComponent::new(weight, mean, cov)?,
            skew: DVector::from_vec(skew),
        })
    }

    fn skew_arg(&self, x: &[f64]) -> f64 {
        let diff = DVector::from_column_slice(x) - &self.base.mean;
        self.skew.dot(&diff)
    }

    /// log SN(x | μ, Σ, α), without the mixture weight.
    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        std::f64::consts::LN_2 + self.base.log_pdf(x) + log_std_normal_cdf(self.skew_arg(x))
    }
}

pub struct SkewNormalMixture {
    dim: usize,
    components: Vec<SkewNormalComponent>,
    prior_box: Vec<(f64, f64)>,
}

impl SkewNormalMixture {
    pub fn new(components: Vec<SkewNormalComponent>, prior_box: Vec<(f64, f64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        let dim = components[0].base.mean.len();
        for c in &components {
            check_dim(dim, c.base.mean.len())?;
        }
        if prior_box.len() != dim {
            return Err(Error::invalid("prior box dimension mismatch"));
        }
        let wsum: f64 = components.iter().map(|c| c.base.weight).sum();
        if (wsum - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("component weights sum to {wsum}, not 1")));
        }
        Ok(SkewNormalMixture {
            dim,
            components,
            prior_box,
        })
    }

    pub fn components(&self) -> &[SkewNormalComponent] {
        &self.components
    }

    /// The four-mode skew-normal benchmark, embedded in `dim >= 3`
    /// dimensions (the full-size experiment uses dim = 20).
    pub fn benchmark(dim: usize) -> Self {
        assert!(dim >= 3);
        let pad = |v: &[f64]| {
            let mut out = vec![0.0; dim];
            out[..v.len()].copy_from_slice(v);
            out
        };
        let block = |a: f64, b: f64| {
            let mut m = DMatrix::identity(dim, dim);
            m[(0, 0)] = a;
            m[(1, 1)] = a;
            m[(0, 1)] = b;
            m[(1, 0)] = b;
            m
        };
        let c1 = SkewNormalComponent::new(
            0.35,
            pad(&[4.0, 4.0, 4.0]),
            block(1.5, -0.9),
            pad(&[5.0, 0.0, 0.0]),
        )
        .unwrap();
        let c2 = SkewNormalComponent::new(
            0.27,
            pad(&[-4.0, -4.0, 4.0]),
            DMatrix::identity(dim, dim),
            pad(&[-2.0, 1.0, 0.0]),
        )
        .unwrap();
        let c3 = SkewNormalComponent::new(
            0.17,
            pad(&[-4.0, 4.0, -4.0]),
            block(1.0, 0.9),
            pad(&[5.0, 0.0, 0.0]),
        )
        .unwrap();
        let c4 = SkewNormalComponent::new(
            0.21,
            pad(&[4.0, -4.0, -4.0]),
            DMatrix::identity(dim, dim),
            pad(&[5.0, 5.0, 0.0]),
        )
        .unwrap();
        SkewNormalMixture::new(vec![c1, c2, c3, c4], vec![(-8.0, 8.0); dim]).unwrap()
    }

    fn component_log_terms(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.base.weight.ln() + c.log_pdf(x))
            .collect()
    }

    /// Exact sampler via the additive representation:
    /// X = μ + δ|t| + L v with δ = Σα / √(1 + αᵀΣα), L Lᵀ = Σ − δδᵀ.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let parts: Vec<(DVector<f64>, nalgebra::Cholesky<f64, nalgebra::Dyn>)> = self
            .components
            .iter()
            .map(|c| {
                let sa = &c.base.cov * &c.skew;
                let delta = &sa / (1.0 + c.skew.dot(&sa)).sqrt();
                let mut reduced = c.base.cov.clone() - &delta * delta.transpose();
                // tiny ridge keeps the factorization alive when α = 0 in
                // some directions makes the matrix barely semidefinite
                for i in 0..self.dim {
                    reduced[(i, i)] += 1e-12;
                }
                let chol = Cholesky::new(reduced).expect("reduced covariance not SPD");
                (delta, chol)
            })
            .collect();
        (0..n)
            .map(|_| {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut idx = self.components.len() - 1;
                for (k, c) in self.components.iter().enumerate() {
                    acc += c.base.weight;
                    if u < acc {
                        idx = k;
                        break;
                    }
                }
                let t: f64 = rng.sample(StandardNormal);
                let v = DVector::from_iterator(
                    self.dim,
                    (0..self.dim).map(|_| rng.sample::<f64, _>(StandardNormal)),
                );
                let (delta, chol) = &parts[idx];
                let x = &self.components[idx].base.mean + delta * t.abs() + chol.l() * v;
                x.iter().cloned().collect()
            })
            .collect()
    }
}

impl Target for SkewNormalMixture {
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
        for (k, c) in self.components.iter().enumerate() {
            let resp = (terms[k] - lse).exp();
            if resp == 0.0 {
                continue;
            }
            let g = c.base.grad_log_pdf(x);
            let hz = std_normal_hazard(c.skew_arg(x));
            for i in 0..self.dim {
                out[i] += resp * (g[i] + hz * c.skew[i]);
            }
        }
        Ok(())
    }
}
