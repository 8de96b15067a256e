//! Step 1b: domain segmentation. A C-SVC with an RBF kernel is trained on
//! the descent start points labelled by the basin they converged to; the
//! resulting classifier partitions the prior box into one region per mode.
//!
//! The solver is a from-scratch SMO with maximal-violating-pair working-set
//! selection on the standard dual
//!     min ½ αᵀQα − eᵀα,  0 ≤ α ≤ C,  yᵀα = 0,   Q_ij = y_i y_j k(x_i, x_j),
//! stopping when the KKT violation m(α) − M(α) drops below `tol`.
//! Multiclass is one-vs-one with majority voting.

use crate::error::{Error, Result};
use crate::modefind::ModeSet;
use crate::rng::{stream, tag};
use rand::seq::SliceRandom;
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Debug, Clone)]
pub struct SvcConfig {
    pub c: f64,
    pub tol: f64,
    /// RBF width; `None` picks 1/(d · mean feature variance) from the data.
    pub gamma: Option<f64>,
    pub max_train: usize,
    pub seed: u64,
}

impl Default for SvcConfig {
    fn default() -> Self {
        SvcConfig {
            c: 1.0,
            tol: 1e-3,
            gamma: None,
            max_train: 5000,
            seed: 0,
        }
    }
}

fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// One binary one-vs-one problem: sign(+1) = class `pos`, sign(−1) = `neg`.
#[derive(Debug, Clone)]
struct BinarySvc {
    pos: usize,
    neg: usize,
    sv: Vec<Vec<f64>>,
    /// α_i y_i for each support vector.
    coef: Vec<f64>,
    bias: f64,
}

impl BinarySvc {
    fn decision(&self, gamma: f64, x: &[f64]) -> f64 {
        let mut u = self.bias;
        for (s, c) in self.sv.iter().zip(&self.coef) {
            u += c * rbf(gamma, s, x);
        }
        u
    }
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    pub dim: usize,
    pub n_classes: usize,
    gamma: f64,
    machines: Vec<BinarySvc>,
}

/// SMO on one binary subproblem. `x` holds the rows, `y` is ±1.
/// Returns (alpha, bias).
fn smo(x: &[&[f64]], y: &[f64], gamma: f64, c: f64, tol: f64) -> (Vec<f64>, f64) {
    let n = x.len();
    // dense kernel cache; binary subproblems are capped by `max_train`
    let mut k = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i..n {
            let v = rbf(gamma, x[i], x[j]);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let mut alpha = vec![0.0f64; n];
    // G_i = y_i Σ_j α_j y_j K_ij − 1; starts at −1 with α = 0
    let mut g = vec![-1.0f64; n];
    let max_iter = (100 * n).max(100_000);
    let mut bias = 0.0;
    for _ in 0..max_iter {
        // maximal violating pair
        let mut i_up = usize::MAX;
        let mut m_val = f64::NEG_INFINITY;
        let mut j_low = usize::MAX;
        let mut mm_val = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * g[t];
            let in_up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
            let in_low = (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c);
            if in_up && v > m_val {
                m_val = v;
                i_up = t;
            }
            if in_low && v < mm_val {
                mm_val = v;
                j_low = t;
            }
        }
        if i_up == usize::MAX || j_low == usize::MAX || m_val - mm_val < tol {
            bias = if i_up != usize::MAX && j_low != usize::MAX {
                (m_val + mm_val) / 2.0
            } else {
                0.0
            };
            break;
        }
        let (i, j) = (i_up, j_low);
        // direction α_i += y_i t, α_j −= y_j t keeps yᵀα = 0
        let quad = (k[i * n + i] + k[j * n + j] - 2.0 * k[i * n + j]).max(1e-12);
        let mut step = (m_val - mm_val) / quad;
        // box clipping
        let (lo_i, hi_i) = if y[i] > 0.0 {
            (-alpha[i], c - alpha[i])
        } else {
            (alpha[i] - c, alpha[i])
        };
        let (lo_j, hi_j) = if y[j] > 0.0 {
            (alpha[j] - c, alpha[j])
        } else {
            (-alpha[j], c - alpha[j])
        };
        step = step.min(hi_i).min(hi_j).max(lo_i).max(lo_j);
        let dai = y[i] * step;
        let daj = -y[j] * step;
        alpha[i] += dai;
        alpha[j] += daj;
        let ci = y[i] * dai;
        let cj = y[j] * daj;
        for t in 0..n {
            g[t] += y[t] * (ci * k[t * n + i] + cj * k[t * n + j]);
        }
    }
    // prefer the free-SV average for the bias when any exist
    let mut sum = 0.0;
    let mut cnt = 0usize;
    for t in 0..n {
        if alpha[t] > 1e-8 && alpha[t] < c - 1e-8 {
            sum += -y[t] * g[t];
            cnt += 1;
        }
    }
    if cnt > 0 {
        bias = sum / cnt as f64;
    }
    (alpha, bias)
}

impl Segmentation {
    /// Degenerate segmentation used when only one mode was found: every
    /// point in the box belongs to class 0.
    pub fn trivial(dim: usize) -> Self {
        Segmentation {
            dim,
            n_classes: 1,
            gamma: 1.0,
            machines: Vec::new(),
        }
    }

    pub fn train(modes: &ModeSet, cfg: &SvcConfig) -> Result<Self> {
        let n_classes = modes.n_modes();
        if modes.start_points.is_empty() {
            return Err(Error::invalid("no labelled start points to train on"));
        }
        let dim = modes.start_points[0].len();
        if n_classes < 2 {
            return Ok(Segmentation::trivial(dim));
        }
        // stratified subsample when the training set is too large
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
        for (i, &a) in modes.assignments.iter().enumerate() {
            by_class[a].push(i);
        }
        let total = modes.start_points.len();
        if total > cfg.max_train {
            let mut rng = stream(cfg.seed, &[tag::MODEFIND, u64::MAX]);
            let frac = cfg.max_train as f64 / total as f64;
            for ids in by_class.iter_mut() {
                ids.shuffle(&mut rng);
                let keep = ((ids.len() as f64 * frac).ceil() as usize).max(1).min(ids.len());
                ids.truncate(keep);
                ids.sort_unstable();
            }
        }
        if by_class.iter().filter(|c| !c.is_empty()).count() < 2 {
            return Err(Error::SingleClass);
        }
        let gamma = match cfg.gamma {
            Some(g) if g > 0.0 => g,
            Some(_) => return Err(Error::invalid("gamma must be positive")),
            None => {
                let used: Vec<usize> = by_class.iter().flatten().copied().collect();
                let n = used.len() as f64;
                let mut var_sum = 0.0;
                for d in 0..dim {
                    let mean: f64 =
                        used.iter().map(|&i| modes.start_points[i][d]).sum::<f64>() / n;
                    var_sum += used
                        .iter()
                        .map(|&i| (modes.start_points[i][d] - mean).powi(2))
                        .sum::<f64>()
                        / n;
                }
                let avg_var = (var_sum / dim as f64).max(1e-12);
                1.0 / (dim as f64 * avg_var)
            }
        };
        let mut machines = Vec::new();
        for a in 0..n_classes {
            for b in (a + 1)..n_classes {
                if by_class[a].is_empty() || by_class[b].is_empty() {
                    continue;
                }
                let mut xs: Vec<&[f64]> = Vec::new();
                let mut ys: Vec<f64> = Vec::new();
                for &i in &by_class[a] {
                    xs.push(&modes.start_points[i]);
                    ys.push(1.0);
                }
                for &i in &by_class[b] {
                    xs.push(&modes.start_points[i]);
                    ys.push(-1.0);
                }
                let (alpha, bias) = smo(&xs, &ys, gamma, cfg.c, cfg.tol);
                let mut sv = Vec::new();
                let mut coef = Vec::new();
                for (i, &al) in alpha.iter().enumerate() {
                    if al > 1e-10 {
                        sv.push(xs[i].to_vec());
                        coef.push(al * ys[i]);
                    }
                }
                machines.push(BinarySvc {
                    pos: a,
                    neg: b,
                    sv,
                    coef,
                    bias,
                });
            }
        }
        Ok(Segmentation {
            dim,
            n_classes,
            gamma,
            machines,
        })
    }

    /// One-vs-one majority vote; ties go to the larger summed |decision|.
    pub fn classify(&self, x: &[f64]) -> usize {
        if self.n_classes == 1 {
            return 0;
        }
        let mut votes = vec![0u32; self.n_classes];
        let mut score = vec![0.0f64; self.n_classes];
        for m in &self.machines {
            let u = m.decision(self.gamma, x);
            let w = if u >= 0.0 { m.pos } else { m.neg };
            votes[w] += 1;
            score[w] += u.abs();
        }
        let best = votes.iter().max().copied().unwrap_or(0);
        (0..self.n_classes)
            .filter(|&k| votes[k] == best)
            .max_by(|&a, &b| score[a].total_cmp(&score[b]))
            .unwrap_or(0)
    }

    pub fn n_support_vectors(&self) -> usize {
        self.machines.iter().map(|m| m.sv.len()).sum()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            f,
            "svc dim={} classes={} gamma={:.17e} machines={}",
            self.dim,
            self.n_classes,
            self.gamma,
            self.machines.len()
        )?;
        for m in &self.machines {
            writeln!(
                f,
                "machine {} {} {:.17e} {}",
                m.pos,
                m.neg,
                m.bias,
                m.sv.len()
            )?;
            for (s, c) in m.sv.iter().zip(&m.coef) {
                write!(f, "sv {c:.17e}")?;
                for v in s {
                    write!(f, " {v:.17e}")?;
                }
                writeln!(f)?;
            }
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut lines = f.lines();
        let head = lines
            .next()
            .ok_or_else(|| Error::invalid("empty svc artifact"))??;
        let mut dim = 0usize;
        let mut n_classes = 0usize;
        let mut gamma = 0.0f64;
        for tok in head.split_whitespace().skip(1) {
            let (key, val) = tok
                .split_once('=')
                .ok_or_else(|| Error::invalid("bad svc header"))?;
            match key {
                "dim" => dim = val.parse().map_err(|_| Error::invalid("bad dim"))?,
                "classes" => {
                    n_classes = val.parse().map_err(|_| Error::invalid("bad classes"))?
                }
                "gamma" => gamma = val.parse().map_err(|_| Error::invalid("bad gamma"))?,
                _ => {}
            }
        }
        let mut machines = Vec::new();
        for line in lines {
            let line = line?;
            let mut toks = line.split_whitespace();
            match toks.next() {
                Some("machine") => {
                    let pos = toks.next().and_then(|t| t.parse().ok());
                    let neg = toks.next().and_then(|t| t.parse().ok());
                    let bias = toks.next().and_then(|t| t.parse().ok());
                    match (pos, neg, bias) {
                        (Some(pos), Some(neg), Some(bias)) => machines.push(BinarySvc {
                            pos,
                            neg,
                            sv: Vec::new(),
                            coef: Vec::new(),
                            bias,
                        }),
                        _ => return Err(Error::invalid("bad machine line")),
                    }
                }
                Some("sv") => {
                    let m = machines
                        .last_mut()
                        .ok_or_else(|| Error::invalid("sv before machine"))?;
                    let c: f64 = toks
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| Error::invalid("bad sv coef"))?;
                    m.coef.push(c);
                    m.sv.push(
                        toks.map(|t| t.parse::<f64>())
                            .collect::<std::result::Result<Vec<f64>, _>>()
                            .map_err(|_| Error::invalid("bad sv coords"))?,
                    );
                }
                Some(other) => return Err(Error::invalid(format!("bad svc line `{other}`"))),
                None => {}
            }
        }
        if dim == 0 || n_classes == 0 {
            return Err(Error::invalid("svc artifact missing header fields"));
        }
        Ok(Segmentation {
            dim,
            n_classes,
            gamma,
            machines,
        })
    }
}
