//! Hitting of a small ball around the singularity of the Hardy drift.
//!
//! The drift `β x/|x|²` enters as `X = x − ∫b + σB`, so `β > 0` pulls paths
//! toward the origin. The radial part is a Bessel-type process and the
//! hitting probability jumps from near zero to near one around `β = 1` for
//! `σ² = 2`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::paths::em_step;
use crate::drift::{make_hardy_drift, make_zero_drift, CapRule};
use crate::error::{invalid, Result};
use crate::rng::{fill_normal, path_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub betas: Vec<f64>,
    /// Paths start at `x0_radius · e₁`.
    pub x0_radius: f64,
    pub eps: f64,
    pub t_final: f64,
    pub sigma: f64,
    /// Largest step; near the origin `dt = dt0·min(1, |X|²/max(β, 1))`.
    pub dt0: f64,
    pub n_paths: usize,
    /// Drift cap radius; defaults to `eps/4`.
    #[serde(default)]
    pub r_cap: Option<f64>,
    pub seed: u64,
}

fn default_dim() -> usize {
    3
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 3 {
            return Err(crate::error::Error::Dimension(self.dim));
        }
        if self.betas.is_empty() {
            return Err(invalid("betas", "at least one β is required"));
        }
        if !(self.eps > 0.0 && self.eps < self.x0_radius) {
            return Err(invalid("eps", "must satisfy 0 < eps < x0_radius"));
        }
        for (name, v) in [("t_final", self.t_final), ("sigma", self.sigma), ("dt0", self.dt0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        if self.n_paths == 0 {
            return Err(invalid("n_paths", "must be positive"));
        }
        let rc = self.cap_radius();
        if !(rc > 0.0 && rc < self.eps) {
            return Err(invalid("r_cap", "must satisfy 0 < r_cap < eps"));
        }
        Ok(())
    }

    pub fn cap_radius(&self) -> f64 {
        self.r_cap.unwrap_or(self.eps / 4.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub beta: f64,
    pub hit_fraction: f64,
    pub stderr: f64,
    pub n_paths: usize,
    /// Quantiles of `min_{t ≤ T} |X_t|` over the paths.
    pub min_distance_q05: f64,
    pub min_distance_q50: f64,
    pub mean_steps: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Simulates `n_paths` paths per β. Path `p` of the `k`-th β uses stream
/// `k·2³² + p`.
pub fn criticality_probe(cfg: &ProbeConfig) -> Result<Vec<ProbeRow>> {
    cfg.validate()?;
    let d = cfg.dim;
    let cap = CapRule::Radius(cfg.cap_radius());
    cfg.betas
        .iter()
        .enumerate()
        .map(|(k, &beta)| {
            let b = if beta == 0.0 {
                make_zero_drift(d)?
            } else {
                make_hardy_drift(d, beta, 1)?
            };
            let runs: Vec<(bool, f64, usize)> = (0..cfg.n_paths)
                .into_par_iter()
                .map(|p| {
                    let mut rng = path_rng(cfg.seed, ((k as u64) << 32) | p as u64);
                    let mut x = vec![0.0; d];
                    x[0] = cfg.x0_radius;
                    let mut xi = vec![0.0; d];
                    let mut scratch = vec![0.0; d];
                    let mut t = 0.0;
                    let mut min_r = cfg.x0_radius;
                    let mut steps = 0;
                    while t < cfg.t_final {
                        let r2: f64 = x.iter().map(|v| v * v).sum();
                        let dt = (cfg.dt0 * (r2 / beta.max(1.0)).min(1.0)).min(cfg.t_final - t);
                        fill_normal(&mut rng, &mut xi);
                        em_step(&b, cap, &mut x, dt, cfg.sigma * dt.sqrt(), &xi, &mut scratch);
                        t += dt;
                        steps += 1;
                        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                        min_r = min_r.min(r);
                        if r < cfg.eps {
                            return (true, min_r, steps);
                        }
                    }
                    (false, min_r, steps)
                })
                .collect();
            let n = runs.len();
            let hits = runs.iter().filter(|r| r.0).count();
            let pf = hits as f64 / n as f64;
            let mut mins: Vec<f64> = runs.iter().map(|r| r.1).collect();
            mins.sort_by(f64::total_cmp);
            Ok(ProbeRow {
                beta,
                hit_fraction: pf,
                stderr: (pf * (1.0 - pf) / n as f64).sqrt(),
                n_paths: n,
                min_distance_q05: quantile(&mins, 0.05),
                min_distance_q50: quantile(&mins, 0.5),
                mean_steps: runs.iter().map(|r| r.2 as f64).sum::<f64>() / n as f64,
            })
        })
        .collect()
}

/// Hit fractions are nondecreasing in β up to `n_sigma` combined standard
/// errors between consecutive rows (rows sorted by β).
pub fn hit_fraction_is_monotone(rows: &[ProbeRow], n_sigma: f64) -> bool {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| a.beta.total_cmp(&b.beta));
    sorted.windows(2).all(|w| {
        let se = (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
        w[1].hit_fraction >= w[0].hit_fraction - n_sigma * se
    })
}

/// β range over which the hit fraction rises from 10% to 90%, by linear
/// interpolation at the first crossings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionBracket {
    pub beta_10: Option<f64>,
    pub beta_90: Option<f64>,
    pub half_width: Option<f64>,
    pub contains_one: bool,
}

pub fn transition_bracket(rows: &[ProbeRow]) -> TransitionBracket {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| a.beta.total_cmp(&b.beta));
    let crossing = |level: f64| -> Option<f64> {
        if let Some(first) = sorted.first() {
            if first.hit_fraction >= level {
                return Some(first.beta);
            }
        }
        sorted.windows(2).find_map(|w| {
            let (a, b) = (&w[0], &w[1]);
            (a.hit_fraction < level && b.hit_fraction >= level).then(|| {
                a.beta + (level - a.hit_fraction) / (b.hit_fraction - a.hit_fraction) * (b.beta - a.beta)
            })
        })
    };
    let lo = crossing(0.1);
    let hi = crossing(0.9);
    let half_width = match (lo, hi) {
        (Some(l), Some(h)) => Some(0.5 * (h - l)),
        _ => None,
    };
    TransitionBracket {
        beta_10: lo,
        beta_90: hi,
        half_width,
        contains_one: matches!((lo, hi), (Some(l), Some(h)) if l <= 1.0 && 1.0 <= h),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn erfc(x: f64) -> f64 {
        // Abramowitz–Stegun 7.1.26, |error| < 1.5e-7
        let t = 1.0 / (1.0 + 0.3275911 * x);
        let poly = t * (0.254829592 + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
        poly * (-x * x).exp()
    }

    #[test]
    fn brownian_hitting_probability() {
        // P(τ_ε ≤ T) = (ε/r₀) erfc((r₀ − ε)/(σ√(2T))) for β = 0 in 3d.
        let cfg = ProbeConfig {
            dim: 3,
            betas: vec![0.0],
            x0_radius: 0.5,
            eps: 0.1,
            t_final: 1.0,
            sigma: 2f64.sqrt(),
            dt0: 1e-3,
            n_paths: 4000,
            r_cap: None,
            seed: 3,
        };
        let row = criticality_probe(&cfg).unwrap()[0];
        let exact = 0.2 * erfc(0.4 / (2f64.sqrt() * 2f64.sqrt()));
        assert!(
            (row.hit_fraction - exact).abs() < 4.0 * row.stderr + 0.01,
            "{} vs {exact}",
            row.hit_fraction
        );
    }

    #[test]
    fn bracket_interpolation() {
        let row = |beta, p: f64| ProbeRow {
            beta,
            hit_fraction: p,
            stderr: 0.01,
            n_paths: 100,
            min_distance_q05: 0.0,
            min_distance_q50: 0.0,
            mean_steps: 0.0,
        };
        let rows = vec![row(0.0, 0.0), row(1.0, 0.2), row(2.0, 1.0)];
        let b = transition_bracket(&rows);
        assert!((b.beta_10.unwrap() - 0.5).abs() < 1e-12);
        assert!((b.beta_90.unwrap() - 1.875).abs() < 1e-12);
        assert!(b.contains_one);
        assert!(hit_fraction_is_monotone(&rows, 2.0));
        assert!(!hit_fraction_is_monotone(&[row(0.0, 0.5), row(1.0, 0.3)], 2.0));
        assert_eq!(transition_bracket(&[row(0.0, 0.0), row(1.0, 0.05)]).half_width, None);
    }

    #[test]
    fn rejects_bad_radii() {
        let mut cfg = ProbeConfig {
            dim: 3,
            betas: vec![1.0],
            x0_radius: 0.5,
            eps: 0.6,
            t_final: 1.0,
            sigma: 1.0,
            dt0: 1e-2,
            n_paths: 1,
            r_cap: None,
            seed: 0,
        };
        assert!(criticality_probe(&cfg).is_err());
        cfg.eps = 0.1;
        cfg.r_cap = Some(0.2);
        assert!(criticality_probe(&cfg).is_err());
    }
}
