//! Evaluation metrics: per-dimension histogram KL divergence, 1d
//! Wasserstein distance, entropic-regularized OT (log-domain Sinkhorn),
//! and a two-sample Kolmogorov–Smirnov test.

use crate::error::{Error, Result};
use crate::sample::SampleSet;
use crate::special::log_sum_exp;

#[derive(Debug, Clone, Copy)]
pub struct HistogramSpec {
    pub n_bins: usize,
    /// Fractional padding applied to the joint range on each side.
    pub range_pad: f64,
    /// Additive smoothing (pseudocounts) per bin before normalization.
    /// Large enough that lone tail-bin mismatches between two same-law
    /// clouds stay below the estimator's sampling noise.
    pub smoothing: f64,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        HistogramSpec {
            n_bins: 100,
            range_pad: 0.01,
            smoothing: 1e-2,
        }
    }
}

fn histogram(values: &[f64], lo: f64, hi: f64, spec: &HistogramSpec) -> Vec<f64> {
    let mut bins = vec![spec.smoothing; spec.n_bins];
    let width = hi - lo;
    for &v in values {
        let mut b = ((v - lo) / width * spec.n_bins as f64) as isize;
        b = b.clamp(0, spec.n_bins as isize - 1);
        bins[b as usize] += 1.0;
    }
    let total: f64 = bins.iter().sum();
    for b in bins.iter_mut() {
        *b /= total;
    }
    bins
}

/// KL(p_a ‖ p_b) over smoothed histograms of coordinate `dim`, on the
/// shared padded range of both sets.
pub fn marginal_kl(a: &SampleSet, b: &SampleSet, dim: usize, spec: &HistogramSpec) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("marginal_kl needs non-empty sample sets"));
    }
    if dim >= a.dim() || dim >= b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: dim,
        });
    }
    if spec.n_bins < 2 {
        return Err(Error::invalid("need at least two bins"));
    }
    let va = a.column(dim);
    let vb = b.column(dim);
    let lo0 = va
        .iter()
        .chain(&vb)
        .fold(f64::INFINITY, |acc, &v| acc.min(v));
    let hi0 = va
        .iter()
        .chain(&vb)
        .fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
    let pad = (hi0 - lo0).max(1e-300) * spec.range_pad;
    let (lo, hi) = (lo0 - pad, hi0 + pad);
    let pa = histogram(&va, lo, hi, spec);
    let pb = histogram(&vb, lo, hi, spec);
    let mut kl = 0.0;
    for (p, q) in pa.iter().zip(&pb) {
        if *p > 0.0 {
            kl += p * (p / q).ln();
        }
    }
    Ok(kl.max(0.0))
}

fn quantile(sorted: &[f64], u: f64) -> f64 {
    // linear interpolation between order statistics at plotting positions
    let n = sorted.len();
    let pos = u * n as f64 - 0.5;
    if pos <= 0.0 {
        return sorted[0];
    }
    if pos >= (n - 1) as f64 {
        return sorted[n - 1];
    }
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
}

/// W₁ between two 1d samples: mean |sorted difference| for equal sizes,
/// otherwise matched quantiles on the finer grid.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("wasserstein_1d needs non-empty inputs"));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    if sa.len() == sb.len() {
        let n = sa.len() as f64;
        return Ok(sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum::<f64>() / n);
    }
    let n = sa.len().max(sb.len());
    let mut total = 0.0;
    for i in 0..n {
        let u = (i as f64 + 0.5) / n as f64;
        total += (quantile(&sa, u) - quantile(&sb, u)).abs();
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone)]
pub struct SinkhornResult {
    /// Transport cost ⟨P, C⟩ (entropy term excluded).
    pub cost: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SinkhornConfig {
    pub reg: f64,
    pub max_iters: usize,
    pub tol: f64,
    /// Clouds larger than this are thinned by an even stride per side.
    pub max_points: usize,
}

impl SinkhornConfig {
    pub fn new(reg: f64) -> Self {
        SinkhornConfig {
            reg,
            max_iters: 5000,
            tol: 1e-6,
            max_points: 2000,
        }
    }
}

fn cloud_less(a: &[Vec<f64>], b: &[Vec<f64>]) -> bool {
    if a.len() != b.len() {
        return a.len() < b.len();
    }
    for (ra, rb) in a.iter().zip(b) {
        for (va, vb) in ra.iter().zip(rb) {
            match va.total_cmp(vb) {
                std::cmp::Ordering::Less => return true,
                std::cmp::Ordering::Greater => return false,
                std::cmp::Ordering::Equal => {}
            }
        }
    }
    false
}

fn thin(s: &SampleSet, max_points: usize) -> Vec<Vec<f64>> {
    let n = s.len();
    if n <= max_points {
        return s.rows().map(|r| r.to_vec()).collect();
    }
    (0..max_points)
        .map(|i| s.row(i * n / max_points).to_vec())
        .collect()
}

/// Entropic OT with squared-Euclidean cost and uniform marginals, solved
/// by log-domain Sinkhorn iterations on the dual potentials.
pub fn sinkhorn(a: &SampleSet, b: &SampleSet, cfg: &SinkhornConfig) -> Result<SinkhornResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("sinkhorn needs non-empty sample sets"));
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    if !(cfg.reg > 0.0) {
        return Err(Error::invalid("sinkhorn regularization must be positive"));
    }
    let mut xa = thin(a, cfg.max_points);
    let mut xb = thin(b, cfg.max_points);
    // the cost is symmetric, so fix a canonical argument order to make
    // sinkhorn(a, b) and sinkhorn(b, a) run identical arithmetic
    if cloud_less(&xb, &xa) {
        std::mem::swap(&mut xa, &mut xb);
    }
    let (n, m) = (xa.len(), xb.len());
    let eps = cfg.reg;
    let mut cost = vec![0.0f64; n * m];
    for i in 0..n {
        for j in 0..m {
            cost[i * m + j] = xa[i]
                .iter()
                .zip(&xb[j])
                .map(|(p, q)| (p - q) * (p - q))
                .sum();
        }
    }
    let log_mu = -(n as f64).ln();
    let log_nu = -(m as f64).ln();
    let mut f = vec![0.0f64; n];
    let mut g = vec![0.0f64; m];
    let mut buf = vec![0.0f64; n.max(m)];
    let mut converged = false;
    let mut iterations = 0;
    let check_every = 10usize;
    let mut f_prev = f.clone();
    for it in 0..cfg.max_iters {
        iterations = it + 1;
        for i in 0..n {
            for j in 0..m {
                buf[j] = log_nu + (g[j] - cost[i * m + j]) / eps;
            }
            f[i] = -eps * log_sum_exp(&buf[..m]);
        }
        for j in 0..m {
            for i in 0..n {
                buf[i] = log_mu + (f[i] - cost[i * m + j]) / eps;
            }
            g[j] = -eps * log_sum_exp(&buf[..n]);
        }
        // column marginals are exact right after the g update; convergence
        // shows up as vanishing row-marginal violation
        if (it + 1) % check_every != 0 && it + 1 != cfg.max_iters {
            continue;
        }
        let mut violation = 0.0f64;
        for i in 0..n {
            for j in 0..m {
                buf[j] = log_mu + log_nu + (f[i] + g[j] - cost[i * m + j]) / eps;
            }
            violation = violation.max((log_sum_exp(&buf[..m]).exp() - log_mu.exp()).abs());
        }
        // a stalled potential vector means the numeric fixed point was
        // reached even if the marginal target is below what doubles allow
        let stall = f
            .iter()
            .zip(&f_prev)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max)
            < 1e-14 * (1.0 + f.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        if violation < cfg.tol || stall {
            converged = true;
            break;
        }
        f_prev.copy_from_slice(&f);
    }
    let mut transport = 0.0;
    for i in 0..n {
        for j in 0..m {
            let lp = log_mu + log_nu + (f[i] + g[j] - cost[i * m + j]) / eps;
            transport += lp.exp() * cost[i * m + j];
        }
    }
    Ok(SinkhornResult {
        cost: transport,
        converged,
        iterations,
    })
}

/// Two-sample Kolmogorov–Smirnov statistic sup|F_a − F_b|.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let (n, m) = (sa.len(), sb.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < n && j < m {
        let x = sa[i].min(sb[j]);
        while i < n && sa[i] <= x {
            i += 1;
        }
        while j < m && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

/// Asymptotic two-sample KS p-value (Kolmogorov distribution tail).
pub fn ks_p_value(d: f64, n: usize, m: usize) -> f64 {
    let ne = (n * m) as f64 / (n + m) as f64;
    let sqrt_ne = ne.sqrt();
    let lambda = (sqrt_ne + 0.12 + 0.11 / sqrt_ne) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let term = 2.0 * (-1.0f64).powi(k - 1) * (-2.0 * (k as f64 * lambda).powi(2)).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}
