//! Random-walk Metropolis baseline: independent chains with isotropic
//! Gaussian proposals, final states collected as the sample set.

use crate::error::{Error, Result};
use crate::rng::{stream, tag};
use crate::sample::{Provenance, SampleSet};
use crate::targets::Target;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct MetropolisConfig {
    pub n_chains: usize,
    pub n_steps: usize,
    /// Std of the isotropic Gaussian proposal.
    pub step_size: f64,
    pub init_box: Vec<(f64, f64)>,
    pub seed: u64,
}

pub fn metropolis_run(target: &dyn Target, cfg: &MetropolisConfig) -> Result<SampleSet> {
    let d = target.dim();
    if !(cfg.step_size > 0.0) {
        return Err(Error::invalid("step_size must be positive"));
    }
    if cfg.n_chains == 0 {
        return Err(Error::invalid("n_chains must be positive"));
    }
    if cfg.init_box.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: cfg.init_box.len(),
        });
    }
    let finals: Vec<Vec<f64>> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|m| {
            let mut rng = stream(cfg.seed, &[tag::METROPOLIS, m as u64]);
            let mut x: Vec<f64> = cfg
                .init_box
                .iter()
                .map(|&(lo, hi)| rng.gen_range(lo..hi))
                .collect();
            let mut lp = target.log_density(&x);
            let mut prop = vec![0.0; d];
            for _ in 0..cfg.n_steps {
                for i in 0..d {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    prop[i] = x[i] + cfg.step_size * z;
                }
                let lp_new = target.log_density(&prop);
                // accept with min(1, ρ′/ρ) in log space
                let accept = lp_new >= lp || {
                    let u: f64 = rng.gen_range(0.0..1.0f64);
                    u.ln() < lp_new - lp
                };
                if accept {
                    x.copy_from_slice(&prop);
                    lp = lp_new;
                }
            }
            x
        })
        .collect();
    let mut out = SampleSet::with_capacity(d, cfg.n_chains, Provenance::Metropolis);
    for x in finals {
        out.push(&x, 0);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{GaussianComponent, GaussianMixture};
    use nalgebra::DMatrix;

    fn std_normal_2d() -> GaussianMixture {
        let c = GaussianComponent::new(1.0, vec![0.0, 0.0], DMatrix::identity(2, 2)).unwrap();
        GaussianMixture::new(vec![c], vec![(-10.0, 10.0); 2]).unwrap()
    }

    #[test]
    fn standard_normal_moments() {
        let t = std_normal_2d();
        let cfg = MetropolisConfig {
            n_chains: 10000,
            n_steps: 5000,
            step_size: 0.5,
            init_box: vec![(-2.0, 2.0); 2],
            seed: 1,
        };
        let s = metropolis_run(&t, &cfg).unwrap();
        for d in 0..2 {
            let col = s.column(d);
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            assert!(mean.abs() < 0.05, "mean[{d}] = {mean}");
            assert!((var - 1.0).abs() < 0.1, "var[{d}] = {var}");
        }
    }

    #[test]
    fn scale_invariance_of_decisions() {
        // multiplying ρ by a constant must not change any decision
        struct Scaled<'a> {
            inner: &'a GaussianMixture,
            log_c: f64,
        }
        impl crate::targets::Target for Scaled<'_> {
            fn dim(&self) -> usize {
                self.inner.dim()
            }
            fn prior_box(&self) -> &[(f64, f64)] {
                self.inner.prior_box()
            }
            fn log_density(&self, x: &[f64]) -> f64 {
                self.inner.log_density(x) + self.log_c
            }
        }
        let base = std_normal_2d();
        let scaled = Scaled {
            inner: &base,
            log_c: 42.0,
        };
        let cfg = MetropolisConfig {
            n_chains: 50,
            n_steps: 200,
            step_size: 0.3,
            init_box: vec![(-1.0, 1.0); 2],
            seed: 2,
        };
        let a = metropolis_run(&base, &cfg).unwrap();
        let b = metropolis_run(&scaled, &cfg).unwrap();
        assert_eq!(a.flat(), b.flat());
    }

    #[test]
    fn determinism_and_validation() {
        let t = std_normal_2d();
        let cfg = MetropolisConfig {
            n_chains: 20,
            n_steps: 100,
            step_size: 0.5,
            init_box: vec![(-1.0, 1.0); 2],
            seed: 3,
        };
        let a = metropolis_run(&t, &cfg).unwrap();
        let b = metropolis_run(&t, &cfg).unwrap();
        assert_eq!(a.flat(), b.flat());
        assert_eq!(a.provenance, Provenance::Metropolis);
        let bad = MetropolisConfig {
            step_size: 0.0,
            ..cfg.clone()
        };
        assert!(metropolis_run(&t, &bad).is_err());
        let wrong_box = MetropolisConfig {
            init_box: vec![(-1.0, 1.0); 3],
            ..cfg
        };
        assert!(metropolis_run(&t, &wrong_box).is_err());
    }

    #[test]
    fn floored_region_is_left_quickly() {
        // chains starting where ρ underflows still accept moves toward mass
        let t = std_normal_2d();
        let cfg = MetropolisConfig {
            n_chains: 200,
            n_steps: 3000,
            step_size: 0.5,
            init_box: vec![(8.0, 9.0); 2],
            seed: 4,
        };
        let s = metropolis_run(&t, &cfg).unwrap();
        let mean0 = s.column(0).iter().sum::<f64>() / s.len() as f64;
        assert!(mean0.abs() < 0.6, "chains stuck: mean {mean0}");
    }
}
