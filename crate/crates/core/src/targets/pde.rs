//! Posterior for the contamination source-localization inverse problem.
//!
//! The forward model is the manufactured solution
//! u(x, t) = β exp(−‖x − x0‖² / α) exp(−t) of the parabolic equation, so no
//! numerical PDE solve is needed. The likelihood is an isotropic Gaussian on
//! the sensor residuals at the terminal time.

use super::{Target, LOG_FLOOR};
use crate::error::{Error, Result};
use std::sync::atomic::{AtomicU64, Ordering};

pub struct PdePosterior {
    pub sensors: Vec<[f64; 2]>,
    pub observations: Vec<f64>,
    pub terminal_time: f64,
    pub source_radius: f64,
    pub source_strength: f64,
    pub alpha: f64,
    pub beta: f64,
    pub noise_sigma: f64,
    prior_box: Vec<(f64, f64)>,
    calls: AtomicU64,
}

impl PdePosterior {
    pub fn new(
        sensors: Vec<[f64; 2]>,
        observations: Vec<f64>,
        noise_sigma: f64,
        prior_box: [(f64, f64); 2],
    ) -> Result<Self> {
        if sensors.len() != observations.len() || sensors.is_empty() {
            return Err(Error::invalid("sensors/observations length mismatch"));
        }
        if noise_sigma <= 0.0 {
            return Err(Error::invalid("noise_sigma must be positive"));
        }
        let h: f64 = 0.1;
        let m = 1.0;
        Ok(PdePosterior {
            sensors,
            observations,
            terminal_time: 0.03,
            source_radius: h,
            source_strength: m,
            alpha: 2.0 * h * h,
            beta: m / (2.0 * std::f64::consts::PI * h * h),
            noise_sigma,
            prior_box: prior_box.to_vec(),
            calls: AtomicU64::new(0),
        })
    }

    /// Observations consistent with every true source lying at distance
    /// `radius` from its sensor, so the zero-residual set per sensor is a
    /// circle of that radius.
    pub fn with_ring_observations(
        sensors: Vec<[f64; 2]>,
        radius: f64,
        noise_sigma: f64,
    ) -> Result<Self> {
        let h: f64 = 0.1;
        let alpha = 2.0 * h * h;
        let beta = 1.0 / (2.0 * std::f64::consts::PI * h * h);
        let t = 0.03;
        let obs = vec![beta * (-radius * radius / alpha).exp() * (-t as f64).exp(); sensors.len()];
        PdePosterior::new(sensors, obs, noise_sigma, [(0.0, 0.8), (0.0, 0.8)])
    }

    /// Simulated concentration at a sensor for source position `x0`,
    /// evaluated at the terminal time.
    pub fn simulate(&self, sensor: &[f64; 2], x0: &[f64]) -> f64 {
        let dx = sensor[0] - x0[0];
        let dy = sensor[1] - x0[1];
        self.beta * (-(dx * dx + dy * dy) / self.alpha).exp() * (-self.terminal_time).exp()
    }

    /// Total density-call count (one per log_density evaluation).
    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset_call_count(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }
}

impl Target for PdePosterior {
    fn dim(&self) -> usize {
        2
    }

    fn prior_box(&self) -> &[(f64, f64)] {
        &self.prior_box
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), 2);
        self.calls.fetch_add(1, Ordering::Relaxed);
        let mut sq = 0.0;
        for (s, &o) in self.sensors.iter().zip(&self.observations) {
            let r = o - self.simulate(s, x);
            sq += r * r;
        }
        (-sq / (2.0 * self.noise_sigma * self.noise_sigma)).max(LOG_FLOOR)
    }
}
