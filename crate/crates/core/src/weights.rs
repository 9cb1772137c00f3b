//! The weight `ρ(x) = (1 + κ|x|²)^{-θ}` and weighted norms.
//!
//! The ratio `|∇ρ|/ρ = 2κθ|x| / (1 + κ|x|²)` peaks at `|x| = 1/√κ` with value
//! `θ√κ`, so `|∇ρ| ≤ θ√κ ρ` everywhere.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::BoxGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    pub kappa: f64,
    pub theta: f64,
    pub dim: usize,
}

impl WeightParams {
    /// Requires `κ > 0` and `θ > d/2`.
    pub fn new(kappa: f64, theta: f64, dim: usize) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(invalid("kappa", format!("must be positive, got {kappa}")));
        }
        if !(theta > dim as f64 / 2.0) {
            return Err(invalid("theta", format!("must exceed d/2 = {}, got {theta}", dim as f64 / 2.0)));
        }
        Ok(Self { kappa, theta, dim })
    }
}

pub fn rho(params: &WeightParams, x: &[f64]) -> f64 {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    (1.0 + params.kappa * r2).powf(-params.theta)
}

pub fn grad_rho_into(params: &WeightParams, x: &[f64], out: &mut [f64]) {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let s = 1.0 + params.kappa * r2;
    let c = -2.0 * params.kappa * params.theta * s.powf(-params.theta - 1.0);
    for (o, xi) in out.iter_mut().zip(x) {
        *o = c * xi;
    }
}

/// `|∇ρ|/ρ` at radius `r`.
pub fn grad_rho_ratio(params: &WeightParams, r: f64) -> f64 {
    2.0 * params.kappa * params.theta * r / (1.0 + params.kappa * r * r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioBoundReport {
    /// `θ√κ`.
    pub bound: f64,
    /// `1/√κ`.
    pub maximizer: f64,
    pub scanned_max: f64,
    pub scanned_argmax: f64,
    pub scan_points: usize,
    /// `|scanned_max − bound|` at the analytic maximizer (always included
    /// in the scan).
    pub gap_at_maximizer: f64,
    pub holds: bool,
}

/// `θ√κ` with a radial scan over `[0, r_max]` confirming it bounds the ratio
/// and is attained at `1/√κ`.
pub fn grad_rho_ratio_bound(params: &WeightParams, scan_points: usize, r_max: f64) -> RatioBoundReport {
    let bound = params.theta * params.kappa.sqrt();
    let maximizer = 1.0 / params.kappa.sqrt();
    let n = scan_points.max(2);
    let mut best = (f64::NEG_INFINITY, 0.0);
    let mut exceeded = false;
    let mut consider = |r: f64| {
        let v = grad_rho_ratio(params, r);
        if v > bound * (1.0 + 1e-14) {
            exceeded = true;
        }
        if v > best.0 {
            best = (v, r);
        }
    };
    for k in 0..n {
        consider(r_max * k as f64 / (n - 1) as f64);
    }
    consider(maximizer);
    let gap = (grad_rho_ratio(params, maximizer) - bound).abs();
    RatioBoundReport {
        bound,
        maximizer,
        scanned_max: best.0,
        scanned_argmax: best.1,
        scan_points: n,
        gap_at_maximizer: gap,
        holds: !exceeded && gap <= 1e-10,
    }
}

/// `ρ` at every cell centre.
pub fn rho_samples(params: &WeightParams, grid: &BoxGrid) -> Vec<f64> {
    let mut x = vec![0.0; grid.dim()];
    (0..grid.len())
        .map(|i| {
            grid.position_into(i, &mut x);
            rho(params, &x)
        })
        .collect()
}

/// `∫ |f|^p ρ dx` by the midpoint rule.
pub fn weighted_lp_integral(field: &[f64], p: f64, params: &WeightParams, grid: &BoxGrid) -> f64 {
    let w = rho_samples(params, grid);
    let s: f64 = field.iter().zip(&w).map(|(f, r)| f.abs().powf(p) * r).sum();
    s * grid.cell_volume()
}

/// `(∫ |f|^p ρ dx)^{1/p}`.
pub fn weighted_lp_norm(field: &[f64], p: f64, params: &WeightParams, grid: &BoxGrid) -> f64 {
    weighted_lp_integral(field, p, params, grid).powf(1.0 / p)
}

/// `∫ f g ρ dx`.
pub fn weighted_inner(f: &[f64], g: &[f64], params: &WeightParams, grid: &BoxGrid) -> f64 {
    let w = rho_samples(params, grid);
    let s: f64 = f.iter().zip(g).zip(&w).map(|((a, b), r)| a * b * r).sum();
    s * grid.cell_volume()
}

/// `⟨ρ⟩ = ∫_{ℝ^d} ρ dx` by adaptive-free radial quadrature:
/// `|S^{d-1}| ∫_0^∞ r^{d-1} (1+κr²)^{-θ} dr` after the substitution
/// `r = tan(φ)/√κ`.
pub fn rho_total_mass(params: &WeightParams, nodes: usize) -> f64 {
    let d = params.dim as f64;
    let sphere = d * crate::drift::unit_ball_volume(params.dim);
    // r = tan φ / √κ, dr = sec²φ dφ / √κ, 1+κr² = sec²φ
    let half_pi = std::f64::consts::FRAC_PI_2;
    let h = half_pi / nodes as f64;
    let s: f64 = (0..nodes)
        .map(|k| {
            let phi = (k as f64 + 0.5) * h;
            let sec2 = 1.0 / phi.cos().powi(2);
            phi.tan().powf(d - 1.0) * sec2.powf(1.0 - params.theta)
        })
        .sum();
    sphere * s * h / params.kappa.powf(d / 2.0)
}
