//! Step 6: the assembled mixture generator F(Y) = T_λ(Y), λ ~ r̂. Sampling
//! draws per-index RNG streams (categorical pick, then the Gaussian input)
//! and pushes inputs through each component's net in one batched pass, so
//! output is independent of any work partition.

use crate::error::{Error, Result};
use crate::nnet::MlpModel;
use crate::rng::{stream, tag};
use crate::sample::{Provenance, SampleSet};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"MMGENART";
const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct AssembledGenerator {
    pub components: Vec<MlpModel>,
    pub ratios: Vec<f64>,
    pub dim: usize,
    /// Diffusion schedule the labels were generated with.
    pub eps: f64,
    pub n_steps: usize,
    /// Free-form provenance block (seeds, config digest).
    pub metadata: String,
}

pub fn assemble(
    models: Vec<MlpModel>,
    ratios: Vec<f64>,
    eps: f64,
    n_steps: usize,
    metadata: String,
) -> Result<AssembledGenerator> {
    if models.is_empty() || models.len() != ratios.len() {
        return Err(Error::invalid("need equally many models and ratios"));
    }
    let dim = models[0].input_dim();
    for m in &models {
        if m.input_dim() != dim || m.output_dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: m.input_dim().max(m.output_dim()),
            });
        }
    }
    if ratios.iter().any(|&r| r < 0.0 || !r.is_finite()) {
        return Err(Error::invalid("ratios must be non-negative and finite"));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!("ratios sum to {total}, not 1")));
    }
    let ratios = ratios.iter().map(|r| r / total).collect();
    Ok(AssembledGenerator {
        components: models,
        ratios,
        dim,
        eps,
        n_steps,
        metadata,
    })
}

impl AssembledGenerator {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn sample(&self, n: usize, seed: u64) -> SampleSet {
        let d = self.dim;
        let k = self.n_components();
        // per-draw streams: categorical pick + Gaussian input
        let mut labels = vec![0u32; n];
        let mut inputs = Array2::zeros((n, d));
        for i in 0..n {
            let mut rng = stream(seed, &[tag::SAMPLE, i as u64]);
            let u: f64 = rng.gen_range(0.0..1.0);
            let mut acc = 0.0;
            let mut lam = k - 1;
            for (c, &r) in self.ratios.iter().enumerate() {
                acc += r;
                if u < acc {
                    lam = c;
                    break;
                }
            }
            labels[i] = lam as u32;
            for j in 0..d {
                inputs[(i, j)] = StandardNormal.sample(&mut rng);
            }
        }
        // batch per component, scatter back in order
        let mut points = vec![0.0f64; n * d];
        for c in 0..k {
            let ids: Vec<usize> = (0..n).filter(|&i| labels[i] == c as u32).collect();
            if ids.is_empty() {
                continue;
            }
            let mut batch = Array2::zeros((ids.len(), d));
            for (r, &i) in ids.iter().enumerate() {
                batch.row_mut(r).assign(&inputs.row(i));
            }
            let out = self.components[c].forward_batch(batch.view());
            for (r, &i) in ids.iter().enumerate() {
                for j in 0..d {
                    points[i * d + j] = out[(r, j)];
                }
            }
        }
        SampleSet::from_parts(d, points, labels, Provenance::Generator)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(MAGIC)?;
        f.write_all(&VERSION.to_le_bytes())?;
        f.write_all(&(self.dim as u32).to_le_bytes())?;
        f.write_all(&(self.n_components() as u32).to_le_bytes())?;
        for &r in &self.ratios {
            f.write_all(&r.to_le_bytes())?;
        }
        f.write_all(&self.eps.to_le_bytes())?;
        f.write_all(&(self.n_steps as u64).to_le_bytes())?;
        let meta = self.metadata.as_bytes();
        f.write_all(&(meta.len() as u32).to_le_bytes())?;
        f.write_all(meta)?;
        for m in &self.components {
            f.write_all(&(m.layer_dims.len() as u32).to_le_bytes())?;
            for &d in &m.layer_dims {
                f.write_all(&(d as u32).to_le_bytes())?;
            }
            for l in 0..m.weights.len() {
                for v in m.weights[l].iter() {
                    f.write_all(&v.to_le_bytes())?;
                }
                for v in m.biases[l].iter() {
                    f.write_all(&v.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let bad = |what: &str| Error::Artifact(format!("generator artifact: {what}"));
        let mut magic = [0u8; 8];
        f.read_exact(&mut magic)
            .map_err(|_| bad("truncated header"))?;
        if &magic != MAGIC {
            return Err(bad("not a generator artifact (bad magic)"));
        }
        let version = read_u32(&mut f).map_err(|_| bad("truncated version"))?;
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let dim = read_u32(&mut f).map_err(|_| bad("truncated dim"))? as usize;
        let k = read_u32(&mut f).map_err(|_| bad("truncated component count"))? as usize;
        if dim == 0 || k == 0 {
            return Err(bad("degenerate dims"));
        }
        let mut ratios = Vec::with_capacity(k);
        for _ in 0..k {
            ratios.push(read_f64(&mut f).map_err(|_| bad("truncated ratios"))?);
        }
        let eps = read_f64(&mut f).map_err(|_| bad("truncated eps"))?;
        let n_steps = read_u64(&mut f).map_err(|_| bad("truncated n_steps"))? as usize;
        let meta_len = read_u32(&mut f).map_err(|_| bad("truncated metadata length"))? as usize;
        let mut meta = vec![0u8; meta_len];
        f.read_exact(&mut meta).map_err(|_| bad("truncated metadata"))?;
        let metadata =
            String::from_utf8(meta).map_err(|_| bad("metadata is not valid UTF-8"))?;
        let mut components = Vec::with_capacity(k);
        for _ in 0..k {
            let nl = read_u32(&mut f).map_err(|_| bad("truncated layer count"))? as usize;
            if nl < 2 {
                return Err(bad("component has fewer than two layers"));
            }
            let mut dims = Vec::with_capacity(nl);
            for _ in 0..nl {
                dims.push(read_u32(&mut f).map_err(|_| bad("truncated layer dims"))? as usize);
            }
            let mut weights = Vec::new();
            let mut biases = Vec::new();
            for w in dims.windows(2) {
                let mut mat = Array2::zeros((w[0], w[1]));
                for v in mat.iter_mut() {
                    *v = read_f64(&mut f).map_err(|_| bad("truncated weights"))?;
                }
                let mut b = Array1::zeros(w[1]);
                for v in b.iter_mut() {
                    *v = read_f64(&mut f).map_err(|_| bad("truncated biases"))?;
                }
                weights.push(mat);
                biases.push(b);
            }
            components.push(MlpModel {
                layer_dims: dims,
                weights,
                biases,
            });
        }
        assemble(components, ratios, eps, n_steps, metadata)
    }
}

fn read_u32(f: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    f.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(f: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    f.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(f: &mut impl Read) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    f.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
