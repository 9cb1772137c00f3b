//! Grid estimators: the weak `L^d` norm and the relative form bound by power
//! iteration on `(λ−Δ)^{-1/2} |b|² (λ−Δ)^{-1/2}`.

use serde::{Deserialize, Serialize};

use super::field::{CapRule, DriftField};
use crate::error::{invalid, Error, Result};
use crate::grid::{BoundaryMode, BoxGrid};
use crate::spectral::Spectral;

/// Super-level sets with fewer cells than this are too coarse to measure.
const RESOLVED_CELLS: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakLdEstimate {
    /// `max_s s |{|b| ≥ s}|^{1/d}` over the sampled levels.
    pub value: f64,
    pub argmax_s: f64,
    pub s_samples: usize,
    pub grid: BoxGrid,
    /// Same estimate on the grid with half as many points per axis.
    pub coarse_value: f64,
    /// False when the coarse and fine estimates differ by more than 10%.
    pub stable: bool,
}

fn sampled_magnitudes(field: &DriftField, grid: &BoxGrid) -> Result<Vec<f64>> {
    let cap = CapRule::Magnitude(1.0 / grid.spacing());
    let sampled = field.sample(grid, cap, false)?;
    Ok(sampled.values.magnitudes())
}

fn weak_norm_of_samples(mags: &[f64], grid: &BoxGrid, s_samples: usize) -> (f64, f64) {
    let d = grid.dim() as f64;
    let mut sorted: Vec<f64> = mags.iter().copied().filter(|v| *v > 0.0).collect();
    if sorted.is_empty() {
        return (0.0, 0.0);
    }
    sorted.sort_by(|a, b| a.total_cmp(b));
    let lo = sorted[0];
    let hi = *sorted.last().unwrap();
    let levels: Vec<f64> = (0..s_samples)
        .map(|k| {
            if s_samples == 1 || hi == lo {
                hi
            } else {
                lo * (hi / lo).powf(k as f64 / (s_samples - 1) as f64)
            }
        })
        .collect();
    let count_at = |s: f64| sorted.len() - sorted.partition_point(|v| *v < s);
    let measure = |resolved_only: bool| {
        let mut best = (0.0, 0.0);
        for &s in &levels {
            let count = count_at(s);
            if resolved_only && count < RESOLVED_CELLS {
                continue;
            }
            let v = s * (count as f64 * grid.cell_volume()).powf(1.0 / d);
            if v > best.0 {
                best = (v, s);
            }
        }
        best
    };
    let best = measure(true);
    if best.0 > 0.0 {
        best
    } else {
        measure(false)
    }
}

/// Weak `L^d` norm of `|b|` sampled on `grid` with the `1/h` magnitude cap.
pub fn weak_ld_norm(field: &DriftField, grid: &BoxGrid, s_samples: usize) -> Result<WeakLdEstimate> {
    if s_samples < 2 {
        return Err(invalid("s_samples", "need at least 2 levels"));
    }
    let mags = sampled_magnitudes(field, grid)?;
    let (value, argmax_s) = weak_norm_of_samples(&mags, grid, s_samples);
    let coarse_value = if grid.points() >= 4 && grid.points() % 4 == 0 {
        let coarse = BoxGrid::with_boundary(
            grid.dim(),
            grid.half_width(),
            grid.points() / 2,
            grid.boundary(),
        )?;
        let mags = sampled_magnitudes(field, &coarse)?;
        weak_norm_of_samples(&mags, &coarse, s_samples).0
    } else {
        value
    };
    let stable = value == 0.0 || ((coarse_value - value) / value).abs() <= 0.1;
    Ok(WeakLdEstimate {
        value,
        argmax_s,
        s_samples,
        grid: grid.clone(),
        coarse_value,
        stable,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericFormBound {
    pub delta_est: f64,
    /// Relative change of the eigenvalue in the last iteration.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Relative change below which the power iteration stops.
const POWER_TOL: f64 = 1e-7;

/// Largest eigenvalue of `(λ−Δ)^{-1/2} |b|² (λ−Δ)^{-1/2}` on the periodic box,
/// with `|b|` capped at `1/h`.
pub fn estimate_form_bound_numeric(
    field: &DriftField,
    lambda: f64,
    grid: &BoxGrid,
    iters: usize,
) -> Result<NumericFormBound> {
    if grid.boundary() != BoundaryMode::Periodic {
        return Err(Error::Unsupported("form-bound estimation needs a periodic box".into()));
    }
    if !(lambda > 0.0) {
        return Err(invalid("lambda", "must be positive on a periodic box (zero mode)"));
    }
    let mags = sampled_magnitudes(field, grid)?;
    let b2: Vec<f64> = mags.iter().map(|m| m * m).collect();
    if b2.iter().all(|v| *v == 0.0) {
        return Ok(NumericFormBound {
            delta_est: 0.0,
            residual: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let sp = Spectral::new(grid);
    let half_resolvent = |k2: f64| 1.0 / (lambda + k2).sqrt();
    let apply = |x: &[f64]| -> Vec<f64> {
        let y = sp.apply_radial(x, half_resolvent);
        let z: Vec<f64> = y.iter().zip(&b2).map(|(a, w)| a * w).collect();
        sp.apply_radial(&z, half_resolvent)
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let mut x = mags;
    let n0 = dot(&x, &x).sqrt();
    x.iter_mut().for_each(|v| *v /= n0);
    let mut eig = 0.0;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    for it in 1..=iters {
        let y = apply(&x);
        let new_eig = dot(&x, &y);
        let ny = dot(&y, &y).sqrt();
        if ny == 0.0 || !ny.is_finite() {
            break;
        }
        residual = if new_eig == 0.0 {
            0.0
        } else {
            ((new_eig - eig) / new_eig).abs()
        };
        eig = new_eig;
        iterations = it;
        x = y.into_iter().map(|v| v / ny).collect();
        if residual < POWER_TOL {
            break;
        }
    }
    Ok(NumericFormBound {
        delta_est: eig,
        residual,
        iterations,
        converged: residual < POWER_TOL,
    })
}
