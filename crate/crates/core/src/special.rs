//! Scalar Gaussian helpers shared by the density families.

use std::f64::consts::PI;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;
const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Log-density floor: densities are clamped here instead of returning -inf,
/// which keeps gradient-free stages (SVC labeling, Metropolis) NaN-free.
pub const LOG_FLOOR: f64 = -1e8;

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn std_normal_log_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// Standard normal CDF via the complementary error function.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / SQRT_2)
}

/// log Φ(z), stable into the far left tail where erfc underflows.
pub fn log_std_normal_cdf(z: f64) -> f64 {
    if z > -35.0 {
        let c = std_normal_cdf(z);
        if c > 0.0 {
            return c.ln();
        }
    }
    // Asymptotic expansion of the Mills ratio for z << 0.
    let z2 = z * z;
    -0.5 * z2 - (-z).ln() - LN_SQRT_2PI + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2)).ln()
}

/// Hazard ratio φ(z)/Φ(z), the gradient factor for skew-normal terms.
pub fn std_normal_hazard(z: f64) -> f64 {
    (std_normal_log_pdf(z) - log_std_normal_cdf(z)).exp()
}

/// Numerically stable log Σ exp(v_i); -inf entries are ignored.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// log of the mean of exp(v_i) over all n entries (including -inf ones).
pub fn log_mean_exp(values: &[f64]) -> f64 {
    log_sum_exp(values) - (values.len() as f64).ln()
}
