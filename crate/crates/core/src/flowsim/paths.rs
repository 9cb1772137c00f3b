use rayon::prelude::*;

use super::PathConfig;
use crate::drift::{CapRule, DriftField};
use crate::error::{Error, Result};
use crate::rng::{fill_normal, path_rng};

/// Independent Euler–Maruyama paths. Path `p` of start `s` has global index
/// `s·n_paths + p`, which is also its random stream.
#[derive(Debug, Clone)]
pub struct Trajectories {
    pub dim: usize,
    pub times: Vec<f64>,
    pub starts: Vec<Vec<f64>>,
    pub n_paths: usize,
    /// `positions[global][snapshot·d + k]`.
    pub positions: Vec<Vec<f64>>,
}

impl Trajectories {
    pub fn position(&self, start: usize, path: usize, snapshot: usize) -> &[f64] {
        let d = self.dim;
        &self.positions[start * self.n_paths + path][snapshot * d..(snapshot + 1) * d]
    }

    /// Final positions of all paths from `start`.
    pub fn finals(&self, start: usize) -> impl Iterator<Item = &[f64]> {
        let last = self.times.len() - 1;
        (0..self.n_paths).map(move |p| self.position(start, p, last))
    }
}

/// One step `x ← x − b(x) dt + σ√dt ξ`.
#[inline]
pub(crate) fn em_step(
    b: &DriftField,
    cap: CapRule,
    x: &mut [f64],
    dt: f64,
    noise_scale: f64,
    xi: &[f64],
    scratch: &mut [f64],
) {
    b.eval_capped_into(x, cap, scratch);
    for k in 0..x.len() {
        x[k] += -scratch[k] * dt + noise_scale * xi[k];
    }
}

pub fn simulate_paths(b: &DriftField, x0s: &[Vec<f64>], cfg: &PathConfig) -> Result<Trajectories> {
    cfg.validate()?;
    let d = b.dim();
    for x in x0s {
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
    }
    let (steps, dt) = cfg.steps();
    let snaps = cfg.snapshot_steps();
    let noise_scale = cfg.sigma * dt.sqrt();
    let total = x0s.len() * cfg.n_paths;
    let positions: Vec<Vec<f64>> = (0..total)
        .into_par_iter()
        .map(|g| {
            let mut rng = path_rng(cfg.seed, g as u64);
            let mut x = x0s[g / cfg.n_paths.max(1)].clone();
            let mut xi = vec![0.0; d];
            let mut scratch = vec![0.0; d];
            let mut out = Vec::with_capacity(snaps.len() * d);
            out.extend_from_slice(&x);
            let mut next = 1;
            for step in 1..=steps {
                fill_normal(&mut rng, &mut xi);
                em_step(b, cfg.cap, &mut x, dt, noise_scale, &xi, &mut scratch);
                if next < snaps.len() && snaps[next] == step {
                    out.extend_from_slice(&x);
                    next += 1;
                }
            }
            out
        })
        .collect();
    for (g, p) in positions.iter().enumerate() {
        if let Some(k) = p.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step: snaps[k / d],
                location: format!(" on path {g}"),
            });
        }
    }
    Ok(Trajectories {
        dim: d,
        times: snaps.iter().map(|&s| s as f64 * dt).collect(),
        starts: x0s.to_vec(),
        n_paths: cfg.n_paths,
        positions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{make_affine_drift, make_zero_drift};

    fn cfg(n_paths: usize, t: f64, dt: f64) -> PathConfig {
        PathConfig {
            sigma: 2f64.sqrt(),
            mu: 0.0,
            dt,
            t_final: t,
            n_paths,
            cap: CapRule::None,
            seed: 11,
            snapshot_every: 0,
        }
    }

    #[test]
    fn brownian_variance() {
        let b = make_zero_drift(3).unwrap();
        let tr = simulate_paths(&b, &[vec![0.0; 3]], &cfg(20000, 0.5, 0.05)).unwrap();
        let mean_sq: f64 = tr.finals(0).map(|x| x.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / 20000.0;
        // E|σB_t|² = dσ²t = 3
        assert!((mean_sq - 3.0).abs() < 0.1, "{mean_sq}");
    }

    #[test]
    fn constant_drift_moves_against_its_sign() {
        let b = make_affine_drift(vec![0.0; 9], vec![1.0, 0.0, 0.0]).unwrap();
        let tr = simulate_paths(&b, &[vec![0.0; 3]], &cfg(4000, 1.0, 0.1)).unwrap();
        let m: f64 = tr.finals(0).map(|x| x[0]).sum::<f64>() / 4000.0;
        assert!((m + 1.0).abs() < 0.1, "{m}");
    }

    #[test]
    fn reproducible_under_thread_counts() {
        let b = make_affine_drift(vec![0.3, 0.1, 0.0, 0.0, 0.2, 0.0, 0.0, 0.0, 0.1], vec![0.0; 3]).unwrap();
        let c = cfg(64, 0.3, 0.01);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| simulate_paths(&b, &[vec![0.5; 3], vec![-1.0; 3]], &c).unwrap());
        let z = many.install(|| simulate_paths(&b, &[vec![0.5; 3], vec![-1.0; 3]], &c).unwrap());
        assert_eq!(a.positions, z.positions);
    }
}
