//! Step 3: training-free score-based diffusion. The forward process
//! Z_t = α_t Z_0 + β_t W with α_t = 1−t, β_t² = t admits a Monte Carlo
//! score estimator over a finite dataset, and labeled (y, x) pairs come
//! from integrating the reverse probability-flow ODE
//!     dZ_t = [b(t) Z_t − ½ σ²(t) S(Z_t, t)] dt
//! backwards from t = 1−ε to t = ε with explicit Euler.

use crate::error::{Error, Result};
use crate::rng::{stream, tag};
use crate::sample::SampleSet;
use crate::special::log_sum_exp;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy)]
pub struct DiffusionSchedule {
    /// Endpoint clip: the grid lives on [ε, 1−ε] to keep b(t) bounded.
    pub eps: f64,
    pub n_steps: usize,
}

impl DiffusionSchedule {
    pub fn new(eps: f64, n_steps: usize) -> Result<Self> {
        if !(eps > 0.0 && eps < 0.1) {
            return Err(Error::invalid("eps must lie in (0, 0.1)"));
        }
        if n_steps == 0 {
            return Err(Error::invalid("n_steps must be positive"));
        }
        Ok(DiffusionSchedule { eps, n_steps })
    }

    /// (α, β², b, σ²) at time t. α = 1−t, β² = t, b = −1/(1−t),
    /// σ² = dβ²/dt − 2bβ² = 1 + 2t/(1−t).
    pub fn coeffs(&self, t: f64) -> Result<(f64, f64, f64, f64)> {
        if !(self.eps..=1.0 - self.eps).contains(&t) {
            return Err(Error::invalid(format!(
                "t = {t} outside clipped range [{}, {}]",
                self.eps,
                1.0 - self.eps
            )));
        }
        let alpha = 1.0 - t;
        let beta2 = t;
        let b = -1.0 / (1.0 - t);
        let sigma2 = 1.0 + 2.0 * t / (1.0 - t);
        Ok((alpha, beta2, b, sigma2))
    }
}

impl Default for DiffusionSchedule {
    fn default() -> Self {
        DiffusionSchedule {
            eps: 1e-3,
            n_steps: 100,
        }
    }
}

/// Weighted point cloud backing the score estimator. Langevin samples use
/// zero log-weights; uniform-proposal points carry log ρ(x_m). Weights
/// enter only through a softmax, so common shifts are irrelevant.
#[derive(Debug, Clone)]
pub struct ScoreDataset {
    pub dim: usize,
    pub points: Vec<f64>,
    pub log_weights: Vec<f64>,
}

impl ScoreDataset {
    pub fn from_samples(samples: &SampleSet) -> Result<Self> {
        Self::new(
            samples.dim(),
            samples.flat().to_vec(),
            vec![0.0; samples.len()],
        )
    }

    pub fn new(dim: usize, points: Vec<f64>, log_weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(Error::invalid("score dataset points malformed"));
        }
        if points.len() / dim != log_weights.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len() / dim,
                got: log_weights.len(),
            });
        }
        if !log_weights.iter().any(|w| w.is_finite()) {
            return Err(Error::EstimationFailure(
                "all score-dataset log-weights are non-finite".into(),
            ));
        }
        Ok(ScoreDataset {
            dim,
            points,
            log_weights,
        })
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    fn row(&self, m: usize) -> &[f64] {
        &self.points[m * self.dim..(m + 1) * self.dim]
    }

    /// Systematic importance resampling down to `m` equal-weight points.
    /// Shrinks a big weighted uniform-proposal cloud so score queries cost
    /// O(m) instead of O(M) without spending further density calls.
    pub fn resample(&self, m: usize, seed: u64) -> Result<ScoreDataset> {
        if m == 0 {
            return Err(Error::invalid("resample size must be positive"));
        }
        let n = self.len();
        let max = self.log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.log_weights.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = w.iter().sum();
        let mut rng = stream(seed, &[tag::SCORE_POINTS, 1]);
        let u0: f64 = rng.gen_range(0.0..1.0);
        let mut points = Vec::with_capacity(m * self.dim);
        let mut acc = 0.0;
        let mut i = 0;
        for j in 0..m {
            let target = (j as f64 + u0) / m as f64 * total;
            while acc + w[i] < target && i + 1 < n {
                acc += w[i];
                i += 1;
            }
            points.extend_from_slice(self.row(i));
        }
        ScoreDataset::new(self.dim, points, vec![0.0; m])
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "# dim={}", self.dim)?;
        for m in 0..self.len() {
            for v in self.row(m) {
                write!(f, "{v:.17e},")?;
            }
            writeln!(f, "{:.17e}", self.log_weights[m])?;
        }
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut lines = f.lines();
        let head = lines
            .next()
            .ok_or_else(|| Error::invalid("empty score artifact"))??;
        let dim: usize = head
            .trim_start_matches('#')
            .split_whitespace()
            .find_map(|tok| tok.strip_prefix("dim=").and_then(|v| v.parse().ok()))
            .ok_or_else(|| Error::invalid("score artifact missing dim"))?;
        let mut points = Vec::new();
        let mut log_weights = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::invalid("bad score row"))?;
            if vals.len() != dim + 1 {
                return Err(Error::DimensionMismatch {
                    expected: dim + 1,
                    got: vals.len(),
                });
            }
            points.extend_from_slice(&vals[..dim]);
            log_weights.push(vals[dim]);
        }
        ScoreDataset::new(dim, points, log_weights)
    }
}

/// S̄(z, t) = Σ_m −(z − α_t x_m)/β_t² · w̄_m with
/// w̄ = softmax_m[log_weight_m − ‖z − α_t x_m‖²/(2β_t²)].
pub fn mc_score(
    data: &ScoreDataset,
    z: &[f64],
    t: f64,
    sched: &DiffusionSchedule,
    out: &mut [f64],
) -> Result<()> {
    let d = data.dim;
    if z.len() != d || out.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: z.len(),
        });
    }
    let (alpha, beta2, _, _) = sched.coeffs(t)?;
    let m = data.len();
    let mut logits = vec![f64::NEG_INFINITY; m];
    for (i, lg) in logits.iter_mut().enumerate() {
        let x = data.row(i);
        let mut d2 = 0.0;
        for j in 0..d {
            let r = z[j] - alpha * x[j];
            d2 += r * r;
        }
        *lg = data.log_weights[i] - d2 / (2.0 * beta2);
    }
    let lse = log_sum_exp(&logits);
    if !lse.is_finite() {
        return Err(Error::EstimationFailure(
            "score softmax underflowed to zero total weight".into(),
        ));
    }
    out.fill(0.0);
    for i in 0..m {
        let w = (logits[i] - lse).exp();
        if w == 0.0 {
            continue;
        }
        let x = data.row(i);
        for j in 0..d {
            out[j] += w * (-(z[j] - alpha * x[j]) / beta2);
        }
    }
    Ok(())
}

/// Explicit Euler on the reverse probability-flow ODE from t = 1−ε down to
/// t = ε over `n_steps` uniform steps, starting at state `y`.
pub fn reverse_ode_solve(
    data: &ScoreDataset,
    y: &[f64],
    sched: &DiffusionSchedule,
) -> Result<Vec<f64>> {
    if y.len() != data.dim {
        return Err(Error::DimensionMismatch {
            expected: data.dim,
            got: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("terminal condition must be finite"));
    }
    let t_hi = 1.0 - sched.eps;
    let t_lo = sched.eps;
    let dt = (t_hi - t_lo) / sched.n_steps as f64;
    let mut z = y.to_vec();
    let mut score = vec![0.0; data.dim];
    for step in 0..sched.n_steps {
        let t = t_hi - step as f64 * dt;
        let (_, _, b, sigma2) = sched.coeffs(t)?;
        mc_score(data, &z, t, sched, &mut score)?;
        for j in 0..data.dim {
            z[j] -= dt * (b * z[j] - 0.5 * sigma2 * score[j]);
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegrationFailure { step });
        }
    }
    Ok(z)
}

/// J labeled pairs (y_j, x_j): y_j a stored standard-normal draw, x_j the
/// reverse-ODE terminal point.
#[derive(Debug, Clone)]
pub struct LabeledPairSet {
    pub dim: usize,
    pub ys: Vec<f64>,
    pub xs: Vec<f64>,
    pub component_label: u32,
}

impl LabeledPairSet {
    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.ys.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn y(&self, j: usize) -> &[f64] {
        &self.ys[j * self.dim..(j + 1) * self.dim]
    }

    pub fn x(&self, j: usize) -> &[f64] {
        &self.xs[j * self.dim..(j + 1) * self.dim]
    }

    pub fn write_csv(&self, path: &Path, sched: &DiffusionSchedule) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            f,
            "# dim={} component={} eps={:.17e} n_steps={}",
            self.dim, self.component_label, sched.eps, sched.n_steps
        )?;
        for j in 0..self.len() {
            let mut first = true;
            for v in self.y(j).iter().chain(self.x(j)) {
                if !first {
                    write!(f, ",")?;
                }
                write!(f, "{v:.17e}")?;
                first = false;
            }
            writeln!(f)?;
        }
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut lines = f.lines();
        let head = lines
            .next()
            .ok_or_else(|| Error::invalid("empty label artifact"))??;
        let mut dim = 0usize;
        let mut component = 0u32;
        for tok in head.trim_start_matches('#').split_whitespace() {
            if let Some((k, v)) = tok.split_once('=') {
                match k {
                    "dim" => dim = v.parse().map_err(|_| Error::invalid("bad dim"))?,
                    "component" => {
                        component = v.parse().map_err(|_| Error::invalid("bad component"))?
                    }
                    _ => {}
                }
            }
        }
        if dim == 0 {
            return Err(Error::invalid("label artifact missing dim"));
        }
        let mut ys = Vec::new();
        let mut xs = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::invalid("bad label row"))?;
            if vals.len() != 2 * dim {
                return Err(Error::DimensionMismatch {
                    expected: 2 * dim,
                    got: vals.len(),
                });
            }
            ys.extend_from_slice(&vals[..dim]);
            xs.extend_from_slice(&vals[dim..]);
        }
        Ok(LabeledPairSet {
            dim,
            ys,
            xs,
            component_label: component,
        })
    }
}

/// Draw J standard-normal terminal conditions and map each through the
/// reverse ODE. Per-pair RNG streams keep the output independent of the
/// rayon scheduling.
pub fn generate_labels(
    data: &ScoreDataset,
    j_count: usize,
    sched: &DiffusionSchedule,
    seed: u64,
    component_label: u32,
) -> Result<LabeledPairSet> {
    let d = data.dim;
    let pairs: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..j_count)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream(seed, &[tag::LABELS, j as u64]);
            let y: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let x = reverse_ode_solve(data, &y, sched).map_err(|e| match e {
                Error::IntegrationFailure { step } => Error::EstimationFailure(format!(
                    "reverse ODE diverged at step {step} for pair {j}"
                )),
                other => other,
            })?;
            Ok((y, x))
        })
        .collect();
    let mut out = LabeledPairSet {
        dim: d,
        ys: Vec::with_capacity(j_count * d),
        xs: Vec::with_capacity(j_count * d),
        component_label,
    };
    for p in pairs {
        let (y, x) = p?;
        out.ys.extend_from_slice(&y);
        out.xs.extend_from_slice(&x);
    }
    Ok(out)
}
