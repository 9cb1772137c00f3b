//! Monte Carlo for the stochastic flow and the transport solution it carries.
//!
//! Paths follow `X_t = x − ∫₀ᵗ b(X_r) dr + σB_t` by Euler–Maruyama (Itô and
//! Stratonovich agree for additive noise). The transport equation
//! `du + μu dt + b·∇u dt + σ∇u∘dB = 0` is constant along the characteristics
//! `dX = +b dt + σ dB`, which is the flow above for the drift `−b`; the
//! transport helpers build that flow themselves, so callers pass the
//! transport drift `b`.

mod flow;
mod linalg;
mod paths;
mod probe;
mod transport;

use serde::{Deserialize, Serialize};

use crate::drift::CapRule;
use crate::error::{invalid, Result};

pub use flow::{
    invert_flow, refine_inverse, simulate_flow, start_grid, FlowEnsemble, Inversion, RefinedInverse,
};
pub use paths::{simulate_paths, Trajectories};
pub use probe::{
    criticality_probe, hit_fraction_is_monotone, transition_bracket, ProbeConfig, ProbeRow,
    TransitionBracket,
};
pub use transport::{
    mc_gradient_moment, mc_gradient_moment_ensemble, mc_second_moment, mc_second_moment_ensemble,
    simulate_transport_flow,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub sigma: f64,
    #[serde(default)]
    pub mu: f64,
    pub dt: f64,
    pub t_final: f64,
    pub n_paths: usize,
    #[serde(default)]
    pub cap: CapRule,
    pub seed: u64,
    /// Store positions every this many steps (0: only start and end).
    #[serde(default)]
    pub snapshot_every: usize,
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(invalid("sigma", format!("must be positive, got {}", self.sigma)));
        }
        if !(self.mu >= 0.0) {
            return Err(invalid("mu", format!("must be >= 0, got {}", self.mu)));
        }
        if !(self.dt > 0.0) {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(invalid("t_final", format!("must be finite and >= 0, got {}", self.t_final)));
        }
        Ok(())
    }

    /// Step count and the step actually used, `T / ⌈T/dt⌉`.
    pub fn steps(&self) -> (usize, f64) {
        if self.t_final == 0.0 {
            return (0, 0.0);
        }
        let n = (self.t_final / self.dt - 1e-9).ceil().max(1.0) as usize;
        (n, self.t_final / n as f64)
    }

    /// Step indices at which snapshots are stored, always including 0 and
    /// the last step.
    pub fn snapshot_steps(&self) -> Vec<usize> {
        let (n, _) = self.steps();
        let mut s: Vec<usize> = if self.snapshot_every > 0 {
            (0..=n).step_by(self.snapshot_every).collect()
        } else {
            vec![0]
        };
        if *s.last().unwrap() != n {
            s.push(n);
        }
        s
    }
}

/// Sample mean with its standard error `std/√n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MCEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                stderr: f64::NAN,
                n: 0,
            };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr, n }
    }
}
