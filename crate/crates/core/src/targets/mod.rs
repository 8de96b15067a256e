//! Registry of unnormalized target densities. Everything downstream sees a
//! target only through [`Target`]: log-density point evaluations, optional
//! analytic gradients, and a declared prior box.

mod gmm;
mod image;
mod pde;
mod skew;

pub use gmm::{GaussianComponent, GaussianMixture};
pub use image::ImageDensity;
pub use pde::PdePosterior;
pub use skew::{SkewNormalComponent, SkewNormalMixture};

use crate::error::{Error, Result};
pub use crate::special::LOG_FLOOR;

/// An unnormalized, possibly multimodal density known through point queries.
pub trait Target: Send + Sync {
    fn dim(&self) -> usize;

    /// Per-dimension [lo, hi] search/prior box.
    fn prior_box(&self) -> &[(f64, f64)];

    /// Unnormalized log ρ(x), clamped below at [`LOG_FLOOR`].
    fn log_density(&self, x: &[f64]) -> f64;

    fn gradient_available(&self) -> bool {
        false
    }

    /// ∇ log ρ(x) into `out`. Errors for gradient-free families.
    fn grad_log_density(&self, _x: &[f64], _out: &mut [f64]) -> Result<()> {
        Err(Error::UnsupportedTarget(
            "analytic gradient not available for this family".into(),
        ))
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Central finite differences of the log-density, used as the gradient
/// oracle in tests.
pub fn fd_grad_log_density(target: &dyn Target, x: &[f64], step: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + step;
        let hi = target.log_density(&xp);
        xp[i] = x[i] - step;
        let lo = target.log_density(&xp);
        xp[i] = x[i];
        g[i] = (hi - lo) / (2.0 * step);
    }
    g
}
