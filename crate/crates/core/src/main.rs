use clap::{Parser, Subcommand};
use mmgen::config::{PipelineConfig, TargetSpec};
use mmgen::error::{Error, Result};
use mmgen::generator::AssembledGenerator;
use mmgen::metrics::{marginal_kl, sinkhorn, wasserstein_1d, HistogramSpec, SinkhornConfig};
use mmgen::pipeline::Pipeline;
use mmgen::rng::{stream, tag};
use mmgen::sample::{Provenance, SampleSet};
use std::io::Write;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "mmgen",
    about = "Divide-and-conquer generative sampler for unnormalized multimodal densities",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the configured pipeline end to end.
    Run {
        /// Config file path or preset name (e.g. gmm2d-separated).
        #[arg(long)]
        config: String,
        /// Override the config's global seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for artifacts.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Use the full-size experiment values (keys suffixed @paper).
        #[arg(long)]
        paper_scale: bool,
        /// Start at this step, reusing earlier artifacts in --out.
        #[arg(long)]
        resume_from: Option<String>,
    },
    /// Run a single pipeline step against existing artifacts in --out.
    Step {
        /// Step name (modefind, segment, langevin, score, labels, train,
        /// bridge, assemble).
        name: String,
        #[arg(long)]
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        paper_scale: bool,
    },
    /// Draw fresh samples from a saved generator artifact.
    Sample {
        /// Directory holding generator.bin (a `run` output).
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(short, long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare two sample CSVs with the requested metrics.
    Evaluate {
        file_a: PathBuf,
        file_b: PathBuf,
        /// Per-dimension marginal KL divergence.
        #[arg(long)]
        kl: bool,
        /// Per-dimension 1d Wasserstein distance.
        #[arg(long)]
        w1: bool,
        /// Sinkhorn distance with this regularization.
        #[arg(long, value_name = "REG")]
        sinkhorn: Option<f64>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw exact samples from an analytically samplable target family.
    GroundTruth {
        #[arg(long)]
        config: String,
        #[arg(short, long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "ground_truth.csv")]
        out: PathBuf,
        #[arg(long)]
        paper_scale: bool,
    },
}

fn main() {
    mmgen::init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn load_config(path: &str, paper: bool, seed: Option<u64>) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(path, paper)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Run { config, seed, out, paper_scale, resume_from } => {
            let cfg = load_config(&config, paper_scale, seed)?;
            let mut p = Pipeline::new(cfg, &out)?;
            p.run(resume_from.as_deref())?;
            println!("run complete; artifacts and manifest in {}", out.display());
        }
        Cmd::Step { name, config, seed, out, paper_scale } => {
            let cfg = load_config(&config, paper_scale, seed)?;
            let mut p = Pipeline::new(cfg, &out)?;
            p.run_step(&name)?;
            println!("step {name} complete; artifacts in {}", out.display());
        }
        Cmd::Sample { out, n, seed } => {
            let generator = AssembledGenerator::load(&out.join("generator.bin"))?;
            let samples = generator.sample(n, seed);
            let path = out.join(format!("samples_seed{seed}.csv"));
            samples.write_csv(&path)?;
            println!("wrote {n} samples to {}", path.display());
        }
        Cmd::Evaluate { file_a, file_b, kl, w1, sinkhorn: sink, out } => {
            let a = SampleSet::read_csv(&file_a)?;
            let b = SampleSet::read_csv(&file_b)?;
            if a.dim() != b.dim() {
                return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
            }
            if !(kl || w1 || sink.is_some()) {
                return Err(Error::invalid("pick at least one of --kl, --w1, --sinkhorn"));
            }
            let mut report = String::from("metric,dim,value\n");
            if kl {
                let spec = HistogramSpec::default();
                for d in 0..a.dim() {
                    report += &format!("kl,{d},{:.6e}\n", marginal_kl(&a, &b, d, &spec)?);
                }
            }
            if w1 {
                for d in 0..a.dim() {
                    report += &format!("w1,{d},{:.6e}\n", wasserstein_1d(&a.column(d), &b.column(d))?);
                }
            }
            if let Some(reg) = sink {
                let r = sinkhorn(&a, &b, &SinkhornConfig::new(reg))?;
                report += &format!("sinkhorn_reg_{reg},all,{:.6e}\n", r.cost);
            }
            match out {
                Some(path) => std::fs::write(&path, report)?,
                None => {
                    std::io::stdout().write_all(report.as_bytes())?;
                }
            }
        }
        Cmd::GroundTruth { config, n, seed, out, paper_scale } => {
            let cfg = load_config(&config, paper_scale, None)?;
            let samples = ground_truth_sample(&cfg.target, n, seed)?;
            samples.write_csv(&out)?;
            println!("wrote {n} ground-truth samples to {}", out.display());
        }
    }
    Ok(())
}

fn ground_truth_sample(spec: &TargetSpec, n: usize, seed: u64) -> Result<SampleSet> {
    let mut rng = stream(seed, &[tag::GROUND_TRUTH]);
    let (dim, rows) = match spec {
        TargetSpec::Gmm2d { a } => {
            let g = mmgen::targets::GaussianMixture::benchmark_2d(*a);
            (2, g.sample(n, &mut rng))
        }
        TargetSpec::GmmTwoMode { dim, a } => {
            let g = mmgen::config::gmm_two_mode(*dim, *a)?;
            (*dim, g.sample(n, &mut rng))
        }
        TargetSpec::SkewBenchmark { dim } => {
            let g = mmgen::targets::SkewNormalMixture::benchmark(*dim);
            (*dim, g.sample(n, &mut rng))
        }
        TargetSpec::Image { .. } | TargetSpec::PdeRing { .. } => {
            return Err(Error::UnsupportedTarget(
                "ground-truth sampling needs an analytic mixture family".into(),
            ))
        }
    };
    let mut set = SampleSet::with_capacity(dim, n, Provenance::GroundTruth);
    for row in rows {
        set.push(&row, 0);
    }
    Ok(set)
}
