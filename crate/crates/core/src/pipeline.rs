//! Orchestration: runs the pipeline steps in order, persists one artifact
//! per step under the output directory, and records a manifest with seeds,
//! config digest, per-step wall time, and SHA-256 of every artifact.
//!
//! Full mode (Steps 1–6):   modefind → segment → langevin → labels →
//! train → bridge → assemble. Direct-diffusion mode (gradient-free
//! targets): score → labels → train → assemble.

use crate::bridge::{bridge_iterate, fit_proposal, mixing_ratios_from_log, BridgeConfig};
use crate::config::{PipelineConfig, PipelineMode};
use crate::diffusion::{generate_labels, DiffusionSchedule, LabeledPairSet, ScoreDataset};
use crate::error::{Error, Result};
use crate::generator::{assemble, AssembledGenerator};
use crate::langevin::{langevin_run, LangevinConfig};
use crate::modefind::{find_modes, ModeSet, MultiStartConfig};
use crate::nnet::{mlp_init, mlp_train, TrainConfig};
use crate::rng::{derive_seed, stream, tag};
use crate::sample::SampleSet;
use crate::segment::{Segmentation, SvcConfig};
use crate::targets::{Target, LOG_FLOOR};
use rand::Rng;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const FULL_STEPS: &[&str] = &[
    "modefind", "segment", "langevin", "labels", "train", "bridge", "assemble",
];
pub const DIRECT_STEPS: &[&str] = &["score", "labels", "train", "assemble"];

pub fn step_names(mode: PipelineMode) -> &'static [&'static str] {
    match mode {
        PipelineMode::Full => FULL_STEPS,
        PipelineMode::DirectDiffusion => DIRECT_STEPS,
    }
}

pub struct Pipeline {
    cfg: PipelineConfig,
    target: Box<dyn Target>,
    out: PathBuf,
    manifest: Vec<(String, String)>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, out: &Path) -> Result<Self> {
        let target = cfg.target.build()?;
        std::fs::create_dir_all(out)?;
        Ok(Pipeline {
            cfg,
            target,
            out: out.to_path_buf(),
            manifest: Vec::new(),
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn record_artifact(&mut self, name: &str) -> Result<()> {
        let digest = sha256_file(&self.path(name))?;
        self.manifest.push((format!("artifact.{name}"), digest));
        Ok(())
    }

    /// Run all steps, or everything from `resume_from` onward, reusing the
    /// artifacts earlier steps left in the output directory.
    pub fn run(&mut self, resume_from: Option<&str>) -> Result<()> {
        let steps = step_names(self.cfg.mode);
        let start = match resume_from {
            Some(name) => steps
                .iter()
                .position(|s| *s == name)
                .ok_or_else(|| {
                    Error::Config(format!(
                        "unknown step {name:?}; this mode has: {}",
                        steps.join(", ")
                    ))
                })?,
            None => 0,
        };
        self.manifest.clear();
        self.manifest.push(("mode".into(), mode_name(self.cfg.mode).into()));
        self.manifest.push(("seed".into(), self.cfg.seed.to_string()));
        self.manifest.push(("config_digest".into(), self.cfg.digest.clone()));
        if let Some(name) = resume_from {
            self.manifest.push(("resumed_from".into(), name.into()));
        }
        for step in &steps[start..] {
            self.run_step(step)?;
        }
        self.write_manifest()
    }

    /// Run one named step against whatever artifacts already exist.
    pub fn run_step(&mut self, name: &str) -> Result<()> {
        let t0 = Instant::now();
        match name {
            "modefind" => self.step_modefind()?,
            "segment" => self.step_segment()?,
            "langevin" => self.step_langevin()?,
            "score" => self.step_score()?,
            "labels" => self.step_labels()?,
            "train" => self.step_train()?,
            "bridge" => self.step_bridge()?,
            "assemble" => self.step_assemble()?,
            other => {
                return Err(Error::Config(format!(
                    "unknown step {other:?}; steps are: {} / {}",
                    FULL_STEPS.join(", "),
                    DIRECT_STEPS.join(", ")
                )))
            }
        }
        self.manifest
            .push((format!("seconds.{name}"), format!("{:.3}", t0.elapsed().as_secs_f64())));
        Ok(())
    }

    fn step_modefind(&mut self) -> Result<()> {
        let block = self
            .cfg
            .modefind
            .as_ref()
            .ok_or_else(|| Error::Config("modefind block missing (direct-diffusion mode?)".into()))?;
        let ms = find_modes(
            self.target.as_ref(),
            &MultiStartConfig {
                n_starts: block.n_starts,
                prior_box: self.target.prior_box().to_vec(),
                step_size: block.step_size,
                n_iters: block.n_iters,
                dedup_radius: block.dedup_radius,
                seed: derive_seed(self.cfg.seed, &[tag::MODEFIND]),
            },
        )?;
        self.manifest.push(("n_modes".into(), ms.n_modes().to_string()));
        ms.write(&self.path("modes.txt"))?;
        self.record_artifact("modes.txt")
    }

    fn step_segment(&mut self) -> Result<()> {
        let ms = ModeSet::read(&self.path("modes.txt"))?;
        let svc = if ms.n_modes() == 1 {
            Segmentation::trivial(self.target.dim())
        } else {
            Segmentation::train(
                &ms,
                &SvcConfig {
                    c: self.cfg.svc_c,
                    seed: derive_seed(self.cfg.seed, &[tag::MODEFIND, 1]),
                    ..SvcConfig::default()
                },
            )?
        };
        svc.write(&self.path("svc.txt"))?;
        self.record_artifact("svc.txt")
    }

    fn step_langevin(&mut self) -> Result<()> {
        let block = self
            .cfg
            .langevin
            .clone()
            .ok_or_else(|| Error::Config("langevin block missing (direct-diffusion mode?)".into()))?;
        let ms = ModeSet::read(&self.path("modes.txt"))?;
        let svc = Segmentation::read(&self.path("svc.txt"))?;
        for k in 0..ms.n_modes() {
            let samples = langevin_run(
                self.target.as_ref(),
                Some((&svc, k)),
                &LangevinConfig {
                    step_size: block.step_size,
                    n_iters: block.n_iters,
                    n_chains: block.n_chains,
                    init: ms.peaks[k].clone(),
                    init_noise_scale: block.init_noise_scale,
                    seed: derive_seed(self.cfg.seed, &[tag::LANGEVIN, k as u64]),
                },
            )?;
            let name = format!("langevin_{k}.csv");
            samples.write_csv(&self.path(&name))?;
            self.record_artifact(&name)?;
        }
        Ok(())
    }

    /// Direct-diffusion Step 3 input: uniform points over the prior box
    /// with self-normalized importance weights log ρ(x). The density is
    /// evaluated exactly once per point, so this step's size is the
    /// density-call budget of the whole run.
    fn step_score(&mut self) -> Result<()> {
        let n = self
            .cfg
            .score_points
            .ok_or_else(|| Error::Config("score block missing (full mode?)".into()))?;
        let d = self.target.dim();
        let mut rng = stream(derive_seed(self.cfg.seed, &[tag::SCORE_POINTS]), &[tag::SCORE_POINTS]);
        let mut points = Vec::with_capacity(n * d);
        let mut log_w = Vec::with_capacity(n);
        let box_ = self.target.prior_box().to_vec();
        for _ in 0..n {
            let start = points.len();
            for &(lo, hi) in &box_ {
                points.push(rng.gen_range(lo..hi));
            }
            log_w.push(self.target.log_density(&points[start..]));
        }
        let data = ScoreDataset::new(d, points, log_w)?;
        data.write_csv(&self.path("score.csv"))?;
        self.manifest.push(("density_calls".into(), n.to_string()));
        self.record_artifact("score.csv")
    }

    fn score_datasets(&self) -> Result<Vec<ScoreDataset>> {
        match self.cfg.mode {
            PipelineMode::Full => {
                let ms = ModeSet::read(&self.path("modes.txt"))?;
                (0..ms.n_modes())
                    .map(|k| {
                        let s = SampleSet::read_csv(&self.path(&format!("langevin_{k}.csv")))?;
                        ScoreDataset::from_samples(&s)
                    })
                    .collect()
            }
            PipelineMode::DirectDiffusion => {
                let mut data = ScoreDataset::read_csv(&self.path("score.csv"))?;
                if let Some(m) = self.cfg.score_max_points {
                    if m < data.len() {
                        data = data.resample(m, derive_seed(self.cfg.seed, &[tag::SCORE_POINTS, 1]))?;
                    }
                }
                Ok(vec![data])
            }
        }
    }

    fn step_labels(&mut self) -> Result<()> {
        let sched = DiffusionSchedule::new(self.cfg.diffusion.eps, self.cfg.diffusion.n_steps)?;
        for (k, data) in self.score_datasets()?.into_iter().enumerate() {
            let pairs = generate_labels(
                &data,
                self.cfg.diffusion.n_labels,
                &sched,
                derive_seed(self.cfg.seed, &[tag::LABELS, k as u64]),
                k as u32,
            )?;
            let name = format!("labels_{k}.csv");
            pairs.write_csv(&self.path(&name), &sched)?;
            self.record_artifact(&name)?;
        }
        Ok(())
    }

    fn n_components(&self) -> Result<usize> {
        match self.cfg.mode {
            PipelineMode::Full => Ok(ModeSet::read(&self.path("modes.txt"))?.n_modes()),
            PipelineMode::DirectDiffusion => Ok(1),
        }
    }

    fn step_train(&mut self) -> Result<()> {
        let n_comp = self.n_components()?;
        let d = self.target.dim();
        let mut dims = vec![d];
        dims.extend_from_slice(&self.cfg.nnet.hidden);
        dims.push(d);
        let mut models = Vec::with_capacity(n_comp);
        for k in 0..n_comp {
            let pairs = LabeledPairSet::read_csv(&self.path(&format!("labels_{k}.csv")))?;
            let seed = derive_seed(self.cfg.seed, &[tag::TRAIN, k as u64]);
            let model = mlp_init(&dims, seed)?;
            let (trained, report) = mlp_train(
                &model,
                &pairs,
                &TrainConfig {
                    initial_lr: self.cfg.nnet.initial_lr,
                    lr_halving_period: self.cfg.nnet.lr_halving_period,
                    epochs: self.cfg.nnet.epochs,
                    batch_size: self.cfg.nnet.batch_size,
                    train_fraction: self.cfg.nnet.train_fraction,
                    seed,
                },
            )?;
            let name = format!("curves_{k}.csv");
            let mut f = std::io::BufWriter::new(std::fs::File::create(self.path(&name))?);
            writeln!(f, "epoch,train_mse,val_mse")?;
            for (e, (tr, va)) in report.train_mse.iter().zip(&report.val_mse).enumerate() {
                writeln!(f, "{e},{tr:.17e},{va:.17e}")?;
            }
            drop(f);
            self.manifest.push((
                format!("final_train_mse.{k}"),
                format!("{:.6e}", report.train_mse.last().copied().unwrap_or(f64::NAN)),
            ));
            self.record_artifact(&name)?;
            models.push(trained);
        }
        // intermediate artifact: trained nets with uniform placeholder
        // ratios, replaced by the bridge estimates at assembly
        let n = models.len();
        let staged = assemble(
            models,
            vec![1.0 / n as f64; n],
            self.cfg.diffusion.eps,
            self.cfg.diffusion.n_steps,
            "staged models; ratios not final".into(),
        )?;
        staged.save(&self.path("models.bin"))?;
        self.record_artifact("models.bin")
    }

    fn step_bridge(&mut self) -> Result<()> {
        let ms = ModeSet::read(&self.path("modes.txt"))?;
        let svc = Segmentation::read(&self.path("svc.txt"))?;
        let k_total = ms.n_modes();
        let mut trace = std::io::BufWriter::new(std::fs::File::create(self.path("bridge.csv"))?);
        writeln!(trace, "component,iteration,lambda_ratio")?;
        let mut log_lambdas = Vec::with_capacity(k_total);
        for k in 0..k_total {
            if k_total == 1 {
                log_lambdas.push(0.0);
                writeln!(trace, "0,0,1.0")?;
                break;
            }
            let samples = SampleSet::read_csv(&self.path(&format!("langevin_{k}.csv")))?;
            let proposal = fit_proposal(&samples, self.cfg.bridge.covariance_ridge)?;
            let target = self.target.as_ref();
            let svc_ref = &svc;
            let log_rho_hat = move |x: &[f64]| {
                if svc_ref.classify(x) == k {
                    target.log_density(x)
                } else {
                    LOG_FLOOR
                }
            };
            let est = bridge_iterate(
                &log_rho_hat,
                &samples,
                &proposal,
                &BridgeConfig {
                    n_proposal: self.cfg.bridge.n_proposal,
                    max_iters: self.cfg.bridge.max_iters,
                    rel_tol: self.cfg.bridge.rel_tol,
                    covariance_ridge: self.cfg.bridge.covariance_ridge,
                    seed: derive_seed(self.cfg.seed, &[tag::BRIDGE, k as u64]),
                },
            )?;
            for (i, v) in est.iterates.iter().enumerate() {
                writeln!(trace, "{k},{i},{v:.17e}")?;
            }
            self.manifest
                .push((format!("bridge_converged.{k}"), est.converged.to_string()));
            log_lambdas.push(est.log_lambda_ratio);
        }
        drop(trace);
        let ratios = mixing_ratios_from_log(&log_lambdas)?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(self.path("ratios.txt"))?);
        for r in &ratios {
            writeln!(f, "{r:.17e}")?;
        }
        drop(f);
        self.record_artifact("bridge.csv")?;
        self.record_artifact("ratios.txt")
    }

    fn step_assemble(&mut self) -> Result<()> {
        let staged = AssembledGenerator::load(&self.path("models.bin"))?;
        let ratios = match self.cfg.mode {
            PipelineMode::Full => read_ratios(&self.path("ratios.txt"))?,
            PipelineMode::DirectDiffusion => vec![1.0],
        };
        let generator = assemble(
            staged.components,
            ratios.clone(),
            self.cfg.diffusion.eps,
            self.cfg.diffusion.n_steps,
            format!(
                "mode={} seed={} config_digest={}",
                mode_name(self.cfg.mode),
                self.cfg.seed,
                self.cfg.digest
            ),
        )?;
        generator.save(&self.path("generator.bin"))?;
        for (k, r) in ratios.iter().enumerate() {
            self.manifest.push((format!("ratio.{k}"), format!("{r:.6}")));
        }
        let samples = generator.sample(
            self.cfg.n_final_samples,
            derive_seed(self.cfg.seed, &[tag::SAMPLE]),
        );
        samples.write_csv(&self.path("samples.csv"))?;
        self.record_artifact("generator.bin")?;
        self.record_artifact("samples.csv")
    }

    fn write_manifest(&self) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(self.path("manifest.txt"))?);
        for (k, v) in &self.manifest {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

fn mode_name(mode: PipelineMode) -> &'static str {
    match mode {
        PipelineMode::Full => "full",
        PipelineMode::DirectDiffusion => "direct-diffusion",
    }
}

fn read_ratios(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let ratios: Vec<f64> = text
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::invalid("bad ratios artifact"))?;
    if ratios.is_empty() {
        return Err(Error::invalid("empty ratios artifact"));
    }
    Ok(ratios)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(format!("{:x}", h.finalize()))
}

/// Parse a manifest back into key/value pairs (for verification tools).
pub fn read_manifest(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    Ok(out)
}
