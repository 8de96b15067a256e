//! Divide-and-conquer generative sampling: mode finding, domain
//! segmentation, constrained Langevin sampling, training-free diffusion
//! labeling, MLP distillation, bridge-sampled mixing ratios, and the
//! assembled mixture generator, plus evaluation metrics and a Metropolis
//! baseline.

pub mod baselines;
pub mod bridge;
pub mod config;
pub mod diffusion;
pub mod error;
pub mod generator;
pub mod langevin;
pub mod metrics;
pub mod modefind;
pub mod nnet;
pub mod pipeline;
pub mod rng;
pub mod sample;
pub mod segment;
pub mod special;
pub mod targets;

pub use error::{Error, Result};

/// Process-wide numeric setup. OpenBLAS mis-detects the kernel on some
/// virtualized CPUs and falls back to a slow generic path; pin a modern
/// one unless the user already chose. Must run before the first BLAS call.
pub fn init() {
    if std::env::var_os("OPENBLAS_CORETYPE").is_none() {
        std::env::set_var("OPENBLAS_CORETYPE", "SKYLAKEX");
    }
}
