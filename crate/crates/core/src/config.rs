//! Pipeline configuration: a flat `key = value` text format with
//! `[section]` headers. A key suffixed `@paper` shadows its base key when
//! the run is started with `--paper-scale`, so one file carries both the
//! desk-scale defaults and the full-size experiment setup.

use crate::error::{Error, Result};
use crate::targets::{
    GaussianComponent, GaussianMixture, ImageDensity, PdePosterior, SkewNormalMixture, Target,
};
use nalgebra::DMatrix;
use std::path::{Path, PathBuf};

/// Named configs shipped with the binary. `load` falls back to these when
/// the `--config` argument is not an existing file.
pub const PRESETS: &[(&str, &str)] = &[
    ("gmm2d-separated", include_str!("../../../presets/gmm2d-separated.conf")),
    ("gmm2d-weak", include_str!("../../../presets/gmm2d-weak.conf")),
    ("gmm2d-overlap", include_str!("../../../presets/gmm2d-overlap.conf")),
    ("gmm100d", include_str!("../../../presets/gmm100d.conf")),
    ("sn6d", include_str!("../../../presets/sn6d.conf")),
    ("sn20d", include_str!("../../../presets/sn20d.conf")),
    ("image", include_str!("../../../presets/image.conf")),
    ("pde-case-i", include_str!("../../../presets/pde-case-i.conf")),
    ("pde-case-ii", include_str!("../../../presets/pde-case-ii.conf")),
];

/// Parsed but untyped config text: ordered sections of ordered key/value
/// pairs, duplicates resolved last-wins.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    sections: Vec<(String, Vec<(String, String)>)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: Vec<(String, Vec<(String, String)>)> = Vec::new();
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = match raw_line.find('#') {
                Some(i) => &raw_line[..i],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {}: unterminated section header", lineno + 1)))?
                    .trim();
                sections.push((name.to_string(), Vec::new()));
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let section = sections
                .last_mut()
                .ok_or_else(|| Error::Config(format!("line {}: key before any [section]", lineno + 1)))?;
            section.1.push((key.trim().to_string(), value.trim().to_string()));
        }
        Ok(RawConfig { sections })
    }

    fn section(&self, name: &str) -> Option<&[(String, String)]> {
        self.sections
            .iter()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, kv)| kv.as_slice())
    }

    pub fn has_section(&self, name: &str) -> bool {
        self.section(name).is_some()
    }

    /// Look a key up in a section; with `paper_scale` the `key@paper`
    /// variant wins if present.
    pub fn get(&self, section: &str, key: &str, paper_scale: bool) -> Option<&str> {
        let kv = self.section(section)?;
        let find = |k: &str| kv.iter().rev().find(|(n, _)| n == k).map(|(_, v)| v.as_str());
        if paper_scale {
            if let Some(v) = find(&format!("{key}@paper")) {
                return Some(v);
            }
        }
        find(key)
    }
}

fn parse_num<T: std::str::FromStr>(section: &str, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{section}.{key}: cannot parse {v:?}")))
}

fn require<'a>(raw: &'a RawConfig, section: &str, key: &str, paper: bool) -> Result<&'a str> {
    raw.get(section, key, paper)
        .ok_or_else(|| Error::Config(format!("missing {section}.{key}")))
}

fn num<T: std::str::FromStr>(raw: &RawConfig, section: &str, key: &str, paper: bool) -> Result<T> {
    parse_num(section, key, require(raw, section, key, paper)?)
}

fn num_or<T: std::str::FromStr>(
    raw: &RawConfig,
    section: &str,
    key: &str,
    paper: bool,
    default: T,
) -> Result<T> {
    match raw.get(section, key, paper) {
        Some(v) => parse_num(section, key, v),
        None => Ok(default),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineMode {
    /// Steps 1–6: mode finding, segmentation, Langevin, diffusion labels,
    /// distillation, bridge-sampled mixing ratios.
    Full,
    /// Steps 3–4 only, with the score dataset built from uniform
    /// density-weighted points; for gradient-free targets.
    DirectDiffusion,
}

/// Target family plus parameters, buildable into a [`Target`].
#[derive(Debug, Clone)]
pub enum TargetSpec {
    /// The 2d two-Gaussian benchmark; `a` is the second mode's first
    /// coordinate (−6 separated, 2 weak, 6 overlapped).
    Gmm2d { a: f64 },
    /// Two-Gaussian mixture embedded in `dim` dimensions: weights
    /// (0.6, 0.4), means (6,0,…) and (a,0,…), first covariance
    /// diag(1.2, 0.8, 1, 0.5, 1, …).
    GmmTwoMode { dim: usize, a: f64 },
    /// Four-mode skew-normal benchmark embedded in `dim ≥ 3` dimensions.
    SkewBenchmark { dim: usize },
    /// Grayscale PGM file interpreted as an unnormalized density.
    Image { path: PathBuf, domain_box: [(f64, f64); 2] },
    /// Source-localization posterior with ring-consistent observations at
    /// distance `radius` from each sensor.
    PdeRing { sensors: Vec<[f64; 2]>, radius: f64, noise_sigma: f64 },
}

impl TargetSpec {
    pub fn from_raw(raw: &RawConfig, paper: bool) -> Result<Self> {
        let fam = require(raw, "target", "family", paper)?;
        Ok(match fam {
            "gmm-2d" => TargetSpec::Gmm2d { a: num(raw, "target", "a", paper)? },
            "gmm-two-mode" => TargetSpec::GmmTwoMode {
                dim: num(raw, "target", "dim", paper)?,
                a: num(raw, "target", "a", paper)?,
            },
            "skew-benchmark" => TargetSpec::SkewBenchmark { dim: num(raw, "target", "dim", paper)? },
            "image" => {
                let b: Vec<f64> = require(raw, "target", "box", paper)?
                    .split_whitespace()
                    .map(|v| parse_num("target", "box", v))
                    .collect::<Result<_>>()?;
                if b.len() != 4 {
                    return Err(Error::Config("target.box needs 4 numbers: x0 x1 y0 y1".into()));
                }
                TargetSpec::Image {
                    path: PathBuf::from(require(raw, "target", "path", paper)?),
                    domain_box: [(b[0], b[1]), (b[2], b[3])],
                }
            }
            "pde" => {
                let mut sensors = Vec::new();
                for pair in require(raw, "target", "sensors", paper)?.split(';') {
                    let xy: Vec<f64> = pair
                        .split_whitespace()
                        .map(|v| parse_num("target", "sensors", v))
                        .collect::<Result<_>>()?;
                    if xy.len() != 2 {
                        return Err(Error::Config("target.sensors: each entry is `x y`".into()));
                    }
                    sensors.push([xy[0], xy[1]]);
                }
                TargetSpec::PdeRing {
                    sensors,
                    radius: num(raw, "target", "radius", paper)?,
                    noise_sigma: num(raw, "target", "noise_sigma", paper)?,
                }
            }
            other => return Err(Error::Config(format!("unknown target family {other:?}"))),
        })
    }

    pub fn build(&self) -> Result<Box<dyn Target>> {
        Ok(match self {
            TargetSpec::Gmm2d { a } => Box::new(GaussianMixture::benchmark_2d(*a)),
            TargetSpec::GmmTwoMode { dim, a } => Box::new(gmm_two_mode(*dim, *a)?),
            TargetSpec::SkewBenchmark { dim } => {
                if *dim < 3 {
                    return Err(Error::Config("skew-benchmark needs dim >= 3".into()));
                }
                Box::new(SkewNormalMixture::benchmark(*dim))
            }
            TargetSpec::Image { path, domain_box } => {
                Box::new(ImageDensity::from_pgm(path, *domain_box)?)
            }
            TargetSpec::PdeRing { sensors, radius, noise_sigma } => Box::new(
                PdePosterior::with_ring_observations(sensors.clone(), *radius, *noise_sigma)?,
            ),
        })
    }
}

/// Two-Gaussian mixture in `dim` dimensions: r = (0.6, 0.4), μ₁ = (6,0,…)
/// with leading covariance block diag(1.2, 0.8, 1, 0.5), μ₂ = (a,0,…), I.
pub fn gmm_two_mode(dim: usize, a: f64) -> Result<GaussianMixture> {
    if dim < 4 {
        return Err(Error::Config("gmm-two-mode needs dim >= 4".into()));
    }
    let mut mu1 = vec![0.0; dim];
    mu1[0] = 6.0;
    let mut cov1 = DMatrix::identity(dim, dim);
    for (i, v) in [1.2, 0.8, 1.0, 0.5].into_iter().enumerate() {
        cov1[(i, i)] = v;
    }
    let mut mu2 = vec![0.0; dim];
    mu2[0] = a;
    let c1 = GaussianComponent::new(0.6, mu1, cov1)?;
    let c2 = GaussianComponent::new(0.4, mu2, DMatrix::identity(dim, dim))?;
    GaussianMixture::new(vec![c1, c2], vec![(-15.0, 15.0); dim])
}

#[derive(Debug, Clone)]
pub struct ModefindBlock {
    pub n_starts: usize,
    pub step_size: f64,
    pub n_iters: usize,
    pub dedup_radius: f64,
}

#[derive(Debug, Clone)]
pub struct LangevinBlock {
    pub n_chains: usize,
    pub n_iters: usize,
    pub step_size: f64,
    pub init_noise_scale: f64,
}

#[derive(Debug, Clone)]
pub struct DiffusionBlock {
    pub eps: f64,
    pub n_steps: usize,
    pub n_labels: usize,
}

#[derive(Debug, Clone)]
pub struct NnetBlock {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    pub lr_halving_period: usize,
    pub train_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct BridgeBlock {
    pub n_proposal: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub covariance_ridge: f64,
}

/// Fully resolved experiment description.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub mode: PipelineMode,
    pub target: TargetSpec,
    pub seed: u64,
    pub n_final_samples: usize,
    pub modefind: Option<ModefindBlock>,
    pub svc_c: f64,
    pub langevin: Option<LangevinBlock>,
    /// Uniform-proposal score dataset size (direct-diffusion mode); this
    /// is exactly the density-call budget of the run.
    pub score_points: Option<usize>,
    /// If set, importance-resample the weighted score cloud down to this
    /// many equal-weight points before label generation.
    pub score_max_points: Option<usize>,
    pub diffusion: DiffusionBlock,
    pub nnet: NnetBlock,
    pub bridge: BridgeBlock,
    /// SHA-256 of the config text, recorded in run manifests.
    pub digest: String,
}

impl PipelineConfig {
    /// Read a config from a file path or, failing that, a preset name.
    pub fn load(name_or_path: &str, paper_scale: bool) -> Result<Self> {
        let text = if Path::new(name_or_path).is_file() {
            std::fs::read_to_string(name_or_path)?
        } else if let Some((_, t)) = PRESETS.iter().find(|(n, _)| *n == name_or_path) {
            t.to_string()
        } else {
            return Err(Error::Config(format!(
                "{name_or_path}: not a file and not a preset (presets: {})",
                PRESETS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
            )));
        };
        Self::from_text(&text, paper_scale)
    }

    pub fn from_text(text: &str, paper: bool) -> Result<Self> {
        let raw = RawConfig::parse(text)?;
        let mode = match require(&raw, "pipeline", "mode", paper)? {
            "full" => PipelineMode::Full,
            "direct-diffusion" => PipelineMode::DirectDiffusion,
            other => return Err(Error::Config(format!("unknown pipeline mode {other:?}"))),
        };
        let target = TargetSpec::from_raw(&raw, paper)?;
        if mode == PipelineMode::Full && !target.build()?.gradient_available() {
            return Err(Error::UnsupportedTarget(
                "mode = full needs a target with an analytic gradient; use direct-diffusion".into(),
            ));
        }

        let modefind = if mode == PipelineMode::Full {
            Some(ModefindBlock {
                n_starts: num(&raw, "modefind", "n_starts", paper)?,
                step_size: num(&raw, "modefind", "step_size", paper)?,
                n_iters: num(&raw, "modefind", "n_iters", paper)?,
                dedup_radius: num_or(&raw, "modefind", "dedup_radius", paper, 0.5)?,
            })
        } else {
            None
        };
        let langevin = if mode == PipelineMode::Full {
            Some(LangevinBlock {
                n_chains: num(&raw, "langevin", "n_chains", paper)?,
                n_iters: num(&raw, "langevin", "n_iters", paper)?,
                step_size: num(&raw, "langevin", "step_size", paper)?,
                init_noise_scale: num_or(&raw, "langevin", "init_noise_scale", paper, 1.0)?,
            })
        } else {
            None
        };
        let score_points = if mode == PipelineMode::DirectDiffusion {
            Some(num(&raw, "score", "n_points", paper)?)
        } else {
            None
        };

        let hidden: Vec<usize> = require(&raw, "nnet", "hidden", paper)?
            .split_whitespace()
            .map(|v| parse_num("nnet", "hidden", v))
            .collect::<Result<_>>()?;
        if hidden.is_empty() {
            return Err(Error::Config("nnet.hidden needs at least one layer width".into()));
        }

        let digest = {
            use sha2::{Digest, Sha256};
            let mut h = Sha256::new();
            h.update(text.as_bytes());
            h.update([paper as u8]);
            format!("{:x}", h.finalize())
        };

        Ok(PipelineConfig {
            mode,
            target,
            seed: num_or(&raw, "pipeline", "seed", paper, 0)?,
            n_final_samples: num(&raw, "pipeline", "n_final_samples", paper)?,
            modefind,
            svc_c: num_or(&raw, "segment", "c", paper, 1.0)?,
            langevin,
            score_points,
            score_max_points: match raw.get("score", "max_points", paper) {
                Some(v) => Some(parse_num("score", "max_points", v)?),
                None => None,
            },
            diffusion: DiffusionBlock {
                eps: num_or(&raw, "diffusion", "eps", paper, 1e-3)?,
                n_steps: num_or(&raw, "diffusion", "n_steps", paper, 100)?,
                n_labels: num(&raw, "diffusion", "n_labels", paper)?,
            },
            nnet: NnetBlock {
                hidden,
                epochs: num(&raw, "nnet", "epochs", paper)?,
                batch_size: num(&raw, "nnet", "batch_size", paper)?,
                initial_lr: num_or(&raw, "nnet", "initial_lr", paper, 1e-3)?,
                lr_halving_period: num_or(&raw, "nnet", "lr_halving_period", paper, 500)?,
                train_fraction: num_or(&raw, "nnet", "train_fraction", paper, 0.8)?,
            },
            bridge: BridgeBlock {
                n_proposal: num_or(&raw, "bridge", "n_proposal", paper, 10000)?,
                max_iters: num_or(&raw, "bridge", "max_iters", paper, 50)?,
                rel_tol: num_or(&raw, "bridge", "rel_tol", paper, 1e-6)?,
                covariance_ridge: num_or(&raw, "bridge", "covariance_ridge", paper, 1e-6)?,
            },
            digest,
        })
    }
}
