//! Step 1a: multi-start fixed-step gradient descent on the energy
//! E(x) = −log ρ(x), plus greedy deduplication of the terminal points.

use crate::error::{Error, Result};
use crate::rng::{stream, tag};
use crate::targets::Target;
use rand::Rng;
use rayon::prelude::*;
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Debug, Clone)]
pub struct MultiStartConfig {
    pub n_starts: usize,
    pub prior_box: Vec<(f64, f64)>,
    pub step_size: f64,
    pub n_iters: usize,
    pub dedup_radius: f64,
    pub seed: u64,
}

impl MultiStartConfig {
    fn validate(&self) -> Result<()> {
        if self.n_starts == 0 {
            return Err(Error::invalid("n_starts must be positive"));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::invalid("step_size must be positive"));
        }
        if !(self.dedup_radius > 0.0) {
            return Err(Error::invalid("dedup_radius must be positive"));
        }
        Ok(())
    }
}

/// Raw multi-start output before deduplication. Runs whose gradient went
/// non-finite are dropped from both lists and counted in `n_failed`.
#[derive(Debug, Clone)]
pub struct DescentOutput {
    pub start_points: Vec<Vec<f64>>,
    pub optima: Vec<Vec<f64>>,
    pub energies: Vec<f64>,
    pub n_failed: usize,
}

#[derive(Debug, Clone)]
pub struct ModeSet {
    pub peaks: Vec<Vec<f64>>,
    pub energies_at_peaks: Vec<f64>,
    pub start_points: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
}

impl ModeSet {
    pub fn n_modes(&self) -> usize {
        self.peaks.len()
    }
}

/// Fixed-step gradient descent from `n_starts` uniform draws over the
/// configured box. Each run owns a counter-derived RNG stream, so parallel
/// and serial execution agree bit-for-bit.
pub fn multi_start_descent(target: &dyn Target, cfg: &MultiStartConfig) -> Result<DescentOutput> {
    cfg.validate()?;
    if !target.gradient_available() {
        return Err(Error::UnsupportedTarget(
            "multi-start descent needs an analytic gradient".into(),
        ));
    }
    let d = target.dim();
    let runs: Vec<Option<(Vec<f64>, Vec<f64>, f64)>> = (0..cfg.n_starts)
        .into_par_iter()
        .map(|n| {
            let mut rng = stream(cfg.seed, &[tag::MODEFIND, n as u64]);
            let start: Vec<f64> = cfg
                .prior_box
                .iter()
                .map(|&(lo, hi)| rng.gen_range(lo..hi))
                .collect();
            let mut x = start.clone();
            let mut grad = vec![0.0; d];
            for _ in 0..cfg.n_iters {
                if target.grad_log_density(&x, &mut grad).is_err() {
                    return None;
                }
                if grad.iter().any(|g| !g.is_finite()) {
                    return None;
                }
                // ∇E = −∇log ρ
                for i in 0..d {
                    x[i] += cfg.step_size * grad[i];
                }
            }
            if x.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let energy = -target.log_density(&x);
            if !energy.is_finite() {
                return None;
            }
            Some((start, x, energy))
        })
        .collect();
    let n_failed = runs.iter().filter(|r| r.is_none()).count();
    let mut out = DescentOutput {
        start_points: Vec::new(),
        optima: Vec::new(),
        energies: Vec::new(),
        n_failed,
    };
    for run in runs.into_iter().flatten() {
        out.start_points.push(run.0);
        out.optima.push(run.1);
        out.energies.push(run.2);
    }
    if out.optima.is_empty() {
        return Err(Error::EstimationFailure(
            "all descent runs diverged; no optima found".into(),
        ));
    }
    Ok(out)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Greedy radius clustering of the raw optima, processed in ascending
/// energy order. A point joins the first cluster whose nearest member is
/// within `tau` (single-linkage style, so close optima chain together);
/// otherwise it founds a new cluster. The representative of each cluster
/// is its lowest-energy member — the founder, given the processing order.
pub fn dedup_optima(output: &DescentOutput, tau: f64) -> ModeSet {
    let n = output.optima.len();
    assert!(n > 0, "dedup_optima needs at least one optimum");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| output.energies[a].total_cmp(&output.energies[b]));

    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut assignments = vec![usize::MAX; n];
    for &i in &order {
        let p = &output.optima[i];
        let mut joined = false;
        for (k, members) in clusters.iter_mut().enumerate() {
            if members
                .iter()
                .any(|&m| dist(p, &output.optima[m]) <= tau)
            {
                members.push(i);
                assignments[i] = k;
                joined = true;
                break;
            }
        }
        if !joined {
            assignments[i] = clusters.len();
            clusters.push(vec![i]);
        }
    }
    let peaks: Vec<Vec<f64>> = clusters
        .iter()
        .map(|members| output.optima[members[0]].clone())
        .collect();
    let energies_at_peaks: Vec<f64> = clusters
        .iter()
        .map(|members| output.energies[members[0]])
        .collect();
    ModeSet {
        peaks,
        energies_at_peaks,
        start_points: output.start_points.clone(),
        assignments,
    }
}

/// Convenience wrapper: descent followed by dedup.
pub fn find_modes(target: &dyn Target, cfg: &MultiStartConfig) -> Result<ModeSet> {
    let out = multi_start_descent(target, cfg)?;
    Ok(dedup_optima(&out, cfg.dedup_radius))
}

impl ModeSet {
    /// Text artifact consumed by the segmentation step and the CLI log.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "modes {}", self.peaks.len())?;
        for (p, e) in self.peaks.iter().zip(&self.energies_at_peaks) {
            write!(f, "peak {e:.17e}")?;
            for v in p {
                write!(f, " {v:.17e}")?;
            }
            writeln!(f)?;
        }
        for (s, a) in self.start_points.iter().zip(&self.assignments) {
            write!(f, "start {a}")?;
            for v in s {
                write!(f, " {v:.17e}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut peaks = Vec::new();
        let mut energies = Vec::new();
        let mut starts = Vec::new();
        let mut assignments = Vec::new();
        for line in f.lines() {
            let line = line?;
            let mut tokens = line.split_whitespace();
            match tokens.next() {
                Some("modes") | None => {}
                Some("peak") => {
                    let e: f64 = tokens
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| Error::invalid("bad peak line"))?;
                    energies.push(e);
                    peaks.push(
                        tokens
                            .map(|t| t.parse::<f64>())
                            .collect::<std::result::Result<Vec<f64>, _>>()
                            .map_err(|_| Error::invalid("bad peak coordinates"))?,
                    );
                }
                Some("start") => {
                    let a: usize = tokens
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| Error::invalid("bad start line"))?;
                    assignments.push(a);
                    starts.push(
                        tokens
                            .map(|t| t.parse::<f64>())
                            .collect::<std::result::Result<Vec<f64>, _>>()
                            .map_err(|_| Error::invalid("bad start coordinates"))?,
                    );
                }
                Some(other) => return Err(Error::invalid(format!("bad mode line `{other}`"))),
            }
        }
        if peaks.is_empty() {
            return Err(Error::invalid("mode artifact has no peaks"));
        }
        Ok(ModeSet {
            peaks,
            energies_at_peaks: energies,
            start_points: starts,
            assignments,
        })
    }
}
