//! Initial data `f` for the transport equation.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{BoxGrid, MatrixField, ScalarField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialProfile {
    Zero,
    /// `A exp(−|x − c|² / (2w²))`.
    Gaussian {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
}

impl InitialProfile {
    pub fn gaussian(amplitude: f64, width: f64, center: Option<Vec<f64>>) -> Result<Self> {
        if !(width > 0.0) {
            return Err(invalid("width", format!("must be positive, got {width}")));
        }
        Ok(InitialProfile::Gaussian {
            amplitude,
            width,
            center,
        })
    }

    fn offset(center: &Option<Vec<f64>>, x: &[f64], k: usize) -> f64 {
        x[k] - center.as_ref().map_or(0.0, |c| c[k])
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            InitialProfile::Zero => 0.0,
            InitialProfile::Gaussian {
                amplitude,
                width,
                center,
            } => {
                let r2: f64 = (0..x.len())
                    .map(|k| Self::offset(center, x, k).powi(2))
                    .sum();
                amplitude * (-r2 / (2.0 * width * width)).exp()
            }
        }
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            InitialProfile::Zero => out.fill(0.0),
            InitialProfile::Gaussian { width, center, .. } => {
                let f = self.eval(x);
                for (k, o) in out.iter_mut().enumerate() {
                    *o = -f * Self::offset(center, x, k) / (width * width);
                }
            }
        }
    }

    pub fn sample(&self, grid: &BoxGrid) -> ScalarField {
        ScalarField::from_fn(grid, |x| self.eval(x))
    }

    /// `v(0) = f²`.
    pub fn squared(&self, grid: &BoxGrid) -> ScalarField {
        ScalarField::from_fn(grid, |x| self.eval(x).powi(2))
    }

    /// `V(0)_ij = ∂_i f ∂_j f`.
    pub fn gradient_outer(&self, grid: &BoxGrid) -> MatrixField {
        let d = grid.dim();
        let mut out = MatrixField::zeros(grid);
        let mut x = vec![0.0; d];
        let mut g = vec![0.0; d];
        for flat in 0..grid.len() {
            grid.position_into(flat, &mut x);
            self.gradient_into(&x, &mut g);
            for i in 0..d {
                for j in i..d {
                    out.entry_mut(i, j)[flat] = g[i] * g[j];
                }
            }
        }
        out
    }

    /// `‖f‖_q` on ℝ^d in closed form.
    pub fn exact_lq_norm(&self, d: usize, q: f64) -> f64 {
        match self {
            InitialProfile::Zero => 0.0,
            InitialProfile::Gaussian {
                amplitude, width, ..
            } => {
                // ∫ exp(−q r²/(2w²)) = (2π w²/q)^{d/2}
                let integral = (2.0 * std::f64::consts::PI * width * width / q).powf(d as f64 / 2.0);
                amplitude.abs() * integral.powf(1.0 / q)
            }
        }
    }

    /// `E[f(x + σB_t)²]` for the Gaussian profile: heat flow of `f²` at
    /// time `σ²t/2`.
    pub fn heat_of_square(&self, x: &[f64], sigma: f64, t: f64) -> f64 {
        match self {
            InitialProfile::Zero => 0.0,
            InitialProfile::Gaussian {
                amplitude,
                width,
                center,
            } => {
                let d = x.len() as f64;
                let s0 = width * width / 2.0;
                let s = s0 + sigma * sigma * t;
                let r2: f64 = (0..x.len())
                    .map(|k| Self::offset(center, x, k).powi(2))
                    .sum();
                amplitude * amplitude * (s0 / s).powf(d / 2.0) * (-r2 / (2.0 * s)).exp()
            }
        }
    }

    /// Heat flow of `∂_i f ∂_j f` at time `σ²t/2`, evaluated at `x`.
    pub fn heat_of_gradient_outer(&self, x: &[f64], sigma: f64, t: f64, i: usize, j: usize) -> f64 {
        match self {
            InitialProfile::Zero => 0.0,
            InitialProfile::Gaussian {
                amplitude,
                width,
                center,
            } => {
                // ∂_i f ∂_j f = A² y_i y_j / w⁴ · exp(−|y|²/w²): a Gaussian of
                // variance s0 = w²/2 times y_i y_j. Convolving with variance
                // τ = σ²t gives mean shrinkage a = s0/s and covariance a τ.
                let d = x.len() as f64;
                let w2 = width * width;
                let s0 = w2 / 2.0;
                let tau = sigma * sigma * t;
                let s = s0 + tau;
                let a = s0 / s;
                let y: Vec<f64> = (0..x.len()).map(|k| Self::offset(center, x, k)).collect();
                let r2: f64 = y.iter().map(|v| v * v).sum();
                let gauss = (s0 / s).powf(d / 2.0) * (-r2 / (2.0 * s)).exp();
                let second = a * a * y[i] * y[j] + if i == j { a * tau } else { 0.0 };
                amplitude * amplitude / (w2 * w2) * gauss * second
            }
        }
    }
}
