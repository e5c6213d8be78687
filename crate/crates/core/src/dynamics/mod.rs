//! Initial-state preparation and time evolution: exact unitary propagation
//! for closed systems and the Haken-Strobl master equation for open ones.
//!
//! `hbar = 1`; energies in units of `J`, times in units of `1/J`.

mod closed;
mod lindblad;
mod state;
mod symmetric;

use serde::{Deserialize, Serialize};

pub use closed::{evolve_closed, ClosedPropagator};
pub use lindblad::{
    default_time_step, evolve_lindblad, evolve_lindblad_with, lindblad_site_populations, LindbladOptions,
};
pub use state::{delocalized_state, localized_state, DensityMatrix, InitialStateKind, QuantumState};
pub use symmetric::{RingSymmetricSystem, SectorState};

use crate::error::{Error, Result};

/// Dephasing rate `gamma` and recombination rate `kappa`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OpenSystemParams {
    pub gamma: f64,
    pub kappa: f64,
}

impl OpenSystemParams {
    pub fn new(gamma: f64, kappa: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::invalid("gamma", format!("must be >= 0, got {gamma}")));
        }
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(Error::invalid("kappa", format!("must be >= 0, got {kappa}")));
        }
        Ok(OpenSystemParams { gamma, kappa })
    }

    pub fn closed() -> Self {
        OpenSystemParams::default()
    }

    pub fn is_closed(&self) -> bool {
        self.gamma == 0.0 && self.kappa == 0.0
    }

    /// Trace remaining at time `t`, `exp(-2 kappa t)`.
    pub fn decay_factor(&self, t: f64) -> f64 {
        (-2.0 * self.kappa * t).exp()
    }
}

/// States sampled at increasing times.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<QuantumState>,
}

pub(crate) fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::invalid("times", "at least one sample time is required"));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::invalid("times", "sample times must be finite and non-negative"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("times", "sample times must be strictly increasing"));
    }
    Ok(())
}

/// `n_samples` evenly spaced times on `[0, t_max]`.
pub fn linear_times(t_max: f64, n_samples: usize) -> Vec<f64> {
    match n_samples {
        0 => Vec::new(),
        1 => vec![t_max],
        _ => (0..n_samples)
            .map(|i| t_max * i as f64 / (n_samples - 1) as f64)
            .collect(),
    }
}

/// `n_samples` log-spaced times on `[t_min, t_max]`.
pub fn log_times(t_min: f64, t_max: f64, n_samples: usize) -> Vec<f64> {
    match n_samples {
        0 => Vec::new(),
        1 => vec![t_max],
        _ => {
            let (a, b) = (t_min.ln(), t_max.ln());
            (0..n_samples)
                .map(|i| (a + (b - a) * i as f64 / (n_samples - 1) as f64).exp())
                .collect()
        }
    }
}
