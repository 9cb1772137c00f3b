use rayon::prelude::*;

use super::linalg::{determinant, identity, matmul, solve};
use super::paths::em_step;
use super::PathConfig;
use crate::drift::{CapRule, DriftField};
use crate::error::{invalid, Error, Result};
use crate::rng::{fill_normal, path_rng};

/// Cell centres of the cube `[−a, a]^d` with `n` points per axis, in
/// row-major order.
pub fn start_grid(dim: usize, half_width: f64, n: usize) -> Vec<Vec<f64>> {
    let h = 2.0 * half_width / n as f64;
    let total = n.pow(dim as u32);
    (0..total)
        .map(|flat| {
            let mut x = vec![0.0; dim];
            let mut rest = flat;
            for k in (0..dim).rev() {
                x[k] = -half_width + (rest % n) as f64 * h + 0.5 * h;
                rest /= n;
            }
            x
        })
        .collect()
}

/// Forward images of a set of starting points under common noise, one
/// realization per random stream.
#[derive(Debug, Clone)]
pub struct FlowEnsemble {
    pub dim: usize,
    /// The drift in `X = x − ∫b + σB`.
    pub drift: DriftField,
    pub starts: Vec<Vec<f64>>,
    pub sigma: f64,
    pub cap: CapRule,
    pub dt: f64,
    pub steps: usize,
    pub snapshot_steps: Vec<usize>,
    pub times: Vec<f64>,
    /// `positions[realization][snapshot][start·d + k]`.
    pub positions: Vec<Vec<Vec<f64>>>,
    /// `jacobians[realization][snapshot][start·d² + k·d + i] = ∂X_k/∂x_i`;
    /// `None` for drifts without derivative information.
    pub jacobians: Option<Vec<Vec<Vec<f64>>>>,
    /// Standard normal increments `noise[realization][step·d + k]`, shared
    /// by every starting point.
    pub noise: Vec<Vec<f64>>,
    /// Number of (realization, start) pairs whose `det J` left `(0, ∞)`.
    pub nonpositive_det: usize,
    pub min_det: f64,
}

impl FlowEnsemble {
    pub fn realizations(&self) -> usize {
        self.positions.len()
    }

    pub fn image(&self, realization: usize, snapshot: usize, start: usize) -> &[f64] {
        let d = self.dim;
        &self.positions[realization][snapshot][start * d..(start + 1) * d]
    }

    pub fn jacobian(&self, realization: usize, snapshot: usize, start: usize) -> Option<&[f64]> {
        let dd = self.dim * self.dim;
        self.jacobians
            .as_ref()
            .map(|j| &j[realization][snapshot][start * dd..(start + 1) * dd])
    }

    /// Re-integrates realization `r` from `y` up to snapshot `snapshot`,
    /// returning the image and, when available, its Jacobian.
    pub fn integrate_from(&self, realization: usize, snapshot: usize, y: &[f64]) -> (Vec<f64>, Option<Vec<f64>>) {
        let (x, j, _) = integrate(
            &self.drift,
            self.cap,
            y,
            &self.noise[realization],
            self.dt,
            self.sigma,
            self.snapshot_steps[snapshot],
            self.jacobians.is_some(),
        );
        (x, j)
    }
}

/// Integrates one start with the given noise. Returns the end point, the
/// Jacobian (if requested) and the smallest `det J` seen.
#[allow(clippy::too_many_arguments)]
fn integrate(
    b: &DriftField,
    cap: CapRule,
    x0: &[f64],
    noise: &[f64],
    dt: f64,
    sigma: f64,
    upto: usize,
    with_jacobian: bool,
) -> (Vec<f64>, Option<Vec<f64>>, f64) {
    let d = x0.len();
    let mut x = x0.to_vec();
    let mut scratch = vec![0.0; d];
    let mut jac = with_jacobian.then(|| identity(d));
    let mut grad = vec![0.0; d * d];
    let mut tmp = vec![0.0; d * d];
    let mut min_det = 1.0f64;
    let ns = sigma * dt.sqrt();
    for step in 0..upto {
        if let Some(j) = jac.as_mut() {
            // J ← (I − ∇b(X) dt) J, with ∇b at the pre-step position
            b.jacobian_capped_into(&x, cap, &mut grad);
            matmul(d, &grad, j, &mut tmp);
            for (jv, t) in j.iter_mut().zip(&tmp) {
                *jv -= dt * t;
            }
            min_det = min_det.min(determinant(d, j));
        }
        em_step(b, cap, &mut x, dt, ns, &noise[step * d..(step + 1) * d], &mut scratch);
    }
    (x, jac, min_det)
}

/// Simulates the flow of `X = x − ∫b + σB` from every start under
/// `cfg.n_paths` independent noise realizations; realization `r` uses
/// stream `r` of `cfg.seed`.
pub fn simulate_flow(b: &DriftField, starts: &[Vec<f64>], cfg: &PathConfig) -> Result<FlowEnsemble> {
    cfg.validate()?;
    let d = b.dim();
    if starts.is_empty() {
        return Err(invalid("starts", "at least one starting point is required"));
    }
    for x in starts {
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
    }
    let with_jacobian = b.is_differentiable();
    let (steps, dt) = cfg.steps();
    let snaps = cfg.snapshot_steps();
    let n = starts.len();

    type Realization = (Vec<f64>, Vec<Vec<f64>>, Option<Vec<Vec<f64>>>, usize, f64);
    let runs: Vec<Realization> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|r| {
            let mut rng = path_rng(cfg.seed, r as u64);
            let mut noise = vec![0.0; steps * d];
            fill_normal(&mut rng, &mut noise);
            let mut pos = vec![Vec::with_capacity(n * d); snaps.len()];
            let mut jacs = with_jacobian.then(|| vec![Vec::with_capacity(n * d * d); snaps.len()]);
            let mut bad = 0;
            let mut min_det = f64::INFINITY;
            for x0 in starts {
                let mut x = x0.clone();
                let mut j = with_jacobian.then(|| identity(d));
                let mut start_min = 1.0f64;
                let mut from = 0;
                for (s, &to) in snaps.iter().enumerate() {
                    // Continue from the previous snapshot with the matching
                    // slice of noise.
                    let (xn, jn, md) = integrate(b, cfg.cap, &x, &noise[from * d..], dt, cfg.sigma, to - from, with_jacobian);
                    x = xn;
                    if let (Some(j), Some(jn)) = (j.as_mut(), jn) {
                        let mut prod = vec![0.0; d * d];
                        matmul(d, &jn, j, &mut prod);
                        *j = prod;
                        start_min = start_min.min(md.min(determinant(d, j)));
                    }
                    from = to;
                    pos[s].extend_from_slice(&x);
                    if let (Some(js), Some(j)) = (jacs.as_mut(), j.as_ref()) {
                        js[s].extend_from_slice(j);
                    }
                }
                if !(start_min > 0.0) {
                    bad += 1;
                }
                min_det = min_det.min(start_min);
            }
            (noise, pos, jacs, bad, min_det)
        })
        .collect();

    let mut positions = Vec::with_capacity(runs.len());
    let mut jacobians = with_jacobian.then(Vec::new);
    let mut noise = Vec::with_capacity(runs.len());
    let mut nonpositive_det = 0;
    let mut min_det = f64::INFINITY;
    for (r, (nz, pos, jac, bad, md)) in runs.into_iter().enumerate() {
        if let Some(k) = pos.iter().flatten().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step: snaps[k / (n * d)],
                location: format!(" in flow realization {r}"),
            });
        }
        noise.push(nz);
        positions.push(pos);
        if let (Some(all), Some(j)) = (jacobians.as_mut(), jac) {
            all.push(j);
        }
        nonpositive_det += bad;
        min_det = min_det.min(md);
    }
    Ok(FlowEnsemble {
        dim: d,
        drift: b.clone(),
        starts: starts.to_vec(),
        sigma: cfg.sigma,
        cap: cfg.cap,
        dt,
        steps,
        times: snaps.iter().map(|&s| s as f64 * dt).collect(),
        snapshot_steps: snaps,
        positions,
        jacobians,
        noise,
        nonpositive_det,
        min_det: if with_jacobian { min_det } else { f64::NAN },
    })
}

/// Linearized inverse of one realization at one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Inversion {
    pub y: Vec<f64>,
    /// Start whose image is nearest to the query.
    pub nearest: usize,
    /// Distance from the query to that image.
    pub image_distance: f64,
    /// Quadratic extrapolation of the linearization error from the second
    /// nearest image.
    pub residual_estimate: f64,
    /// Query lies outside the bounding box of the images.
    pub extrapolated: bool,
    /// `J` at the nearest start was numerically singular; `y` is that start.
    pub singular: bool,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum()
}

/// Inverts `x ↦ Ψ_t(x)` at `x` from the nearest forward image and one
/// Newton step with the stored Jacobian, `y = x_i + J_i^{-1}(x − Ψ_t(x_i))`.
pub fn invert_flow(ens: &FlowEnsemble, realization: usize, snapshot: usize, x: &[f64]) -> Result<Inversion> {
    let d = ens.dim;
    if x.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x.len() });
    }
    if ens.jacobians.is_none() {
        return Err(Error::NotDifferentiable("flow inversion"));
    }
    let images = &ens.positions[realization][snapshot];
    let n = ens.starts.len();
    let (mut i1, mut i2) = (0usize, usize::MAX);
    let (mut d1, mut d2) = (f64::INFINITY, f64::INFINITY);
    let mut extrapolated = false;
    for k in 0..d {
        let (lo, hi) = (0..n).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
            let v = images[i * d + k];
            (lo.min(v), hi.max(v))
        });
        extrapolated |= x[k] < lo || x[k] > hi;
    }
    for i in 0..n {
        let di = dist2(&images[i * d..(i + 1) * d], x);
        if di < d1 {
            (i2, d2) = (i1, d1);
            (i1, d1) = (i, di);
        } else if di < d2 {
            (i2, d2) = (i, di);
        }
    }
    let img = &images[i1 * d..(i1 + 1) * d];
    let jac = ens.jacobian(realization, snapshot, i1).unwrap();
    let rhs: Vec<f64> = x.iter().zip(img).map(|(a, b)| a - b).collect();
    let start = &ens.starts[i1];
    let (y, singular) = match solve(d, jac, &rhs) {
        Some(delta) => (start.iter().zip(&delta).map(|(s, v)| s + v).collect::<Vec<_>>(), false),
        None => (start.clone(), true),
    };
    let residual_estimate = if i2 != usize::MAX && i2 != i1 {
        let s2 = &ens.starts[i2];
        let ds: Vec<f64> = s2.iter().zip(start).map(|(a, b)| a - b).collect();
        let step = dist2(s2, start).sqrt();
        let err2: f64 = (0..d)
            .map(|k| {
                let pred = img[k] + (0..d).map(|i| jac[k * d + i] * ds[i]).sum::<f64>();
                (images[i2 * d + k] - pred).powi(2)
            })
            .sum();
        let reach = dist2(&y, start).sqrt();
        if step > 0.0 {
            err2.sqrt() * (reach / step).powi(2)
        } else {
            0.0
        }
    } else {
        0.0
    };
    Ok(Inversion {
        y,
        nearest: i1,
        image_distance: d1.sqrt(),
        residual_estimate,
        extrapolated,
        singular,
    })
}

/// Newton refinement of an inverse by re-integrating the stored noise.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedInverse {
    pub y: Vec<f64>,
    pub image: Vec<f64>,
    /// `∂Ψ_t/∂x` at `y`, row-major.
    pub jacobian: Vec<f64>,
    /// `|Ψ_t(y) − x|`.
    pub residual: f64,
    pub iterations: usize,
    pub singular: bool,
}

/// Applies up to `max_iter` Newton steps `y ← y + J(y)^{-1}(x − Ψ_t(y))`,
/// stopping early once the residual is below `1e-13(1 + |x|)`.
pub fn refine_inverse(
    ens: &FlowEnsemble,
    realization: usize,
    snapshot: usize,
    x: &[f64],
    y0: &[f64],
    max_iter: usize,
) -> Result<RefinedInverse> {
    let d = ens.dim;
    if ens.jacobians.is_none() {
        return Err(Error::NotDifferentiable("flow inversion"));
    }
    let scale = 1e-13 * (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt());
    let mut y = y0.to_vec();
    let mut iterations = 0;
    loop {
        let (image, jac) = ens.integrate_from(realization, snapshot, &y);
        let jac = jac.unwrap();
        let r: Vec<f64> = x.iter().zip(&image).map(|(a, b)| a - b).collect();
        let residual = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if residual <= scale || iterations == max_iter {
            return Ok(RefinedInverse {
                y,
                image,
                jacobian: jac,
                residual,
                iterations,
                singular: false,
            });
        }
        match solve(d, &jac, &r) {
            Some(delta) => y.iter_mut().zip(&delta).for_each(|(a, b)| *a += b),
            None => {
                return Ok(RefinedInverse {
                    y,
                    image,
                    jacobian: jac,
                    residual,
                    iterations,
                    singular: true,
                })
            }
        }
        iterations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{make_affine_drift, make_hardy_drift, make_zero_drift};

    fn cfg(n: usize, t: f64, dt: f64) -> PathConfig {
        PathConfig {
            sigma: 1.0,
            mu: 0.0,
            dt,
            t_final: t,
            n_paths: n,
            cap: CapRule::None,
            seed: 5,
            snapshot_every: 5,
        }
    }

    /// `M^N` for `M = I − A dt`.
    fn discrete_propagator(a: &[f64], dt: f64, n: usize) -> Vec<f64> {
        let m: Vec<f64> = (0..9).map(|k| if k % 4 == 0 { 1.0 } else { 0.0 } - dt * a[k]).collect();
        let mut p = identity(3);
        let mut tmp = vec![0.0; 9];
        for _ in 0..n {
            matmul(3, &m, &p, &mut tmp);
            p.copy_from_slice(&tmp);
        }
        p
    }

    #[test]
    fn linear_flow_jacobian_and_inverse() {
        let a = vec![0.5, 0.2, 0.0, -0.1, 0.3, 0.0, 0.0, 0.4, -0.2];
        let b = make_affine_drift(a.clone(), vec![0.0; 3]).unwrap();
        let starts = start_grid(3, 1.0, 4);
        let ens = simulate_flow(&b, &starts, &cfg(3, 0.5, 0.01)).unwrap();
        let last = ens.times.len() - 1;
        let p = discrete_propagator(&a, ens.dt, ens.steps);
        for r in 0..3 {
            let j = ens.jacobian(r, last, 7).unwrap();
            for k in 0..9 {
                assert!((j[k] - p[k]).abs() < 1e-12);
            }
            // The flow is affine, so one linearized step inverts it exactly.
            let target = vec![0.1, -0.2, 0.3];
            let inv = invert_flow(&ens, r, last, &target).unwrap();
            let (img, _) = ens.integrate_from(r, last, &inv.y);
            for k in 0..3 {
                assert!((img[k] - target[k]).abs() < 1e-12);
            }
            assert!(inv.residual_estimate < 1e-10);
        }
        // continuous limit e^{−At}
        let e = matrix_exp(&a.iter().map(|v| -v * 0.5).collect::<Vec<_>>());
        for k in 0..9 {
            assert!((p[k] - e[k]).abs() < 1e-2 * e.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        }
    }

    fn matrix_exp(m: &[f64]) -> Vec<f64> {
        let mut sum = identity(3);
        let mut term = identity(3);
        let mut tmp = vec![0.0; 9];
        for k in 1..30 {
            matmul(3, m, &term, &mut tmp);
            term = tmp.iter().map(|v| v / k as f64).collect();
            sum.iter_mut().zip(&term).for_each(|(s, t)| *s += t);
        }
        sum
    }

    #[test]
    fn zero_drift_is_a_common_translation() {
        let b = make_zero_drift(3).unwrap();
        let starts = start_grid(3, 1.0, 3);
        let ens = simulate_flow(&b, &starts, &cfg(2, 0.2, 0.02)).unwrap();
        let last = ens.times.len() - 1;
        let shift: Vec<f64> = (0..3).map(|k| ens.image(1, last, 0)[k] - starts[0][k]).collect();
        for (i, s) in starts.iter().enumerate() {
            for k in 0..3 {
                assert!((ens.image(1, last, i)[k] - s[k] - shift[k]).abs() < 1e-14);
            }
        }
        assert_eq!(ens.nonpositive_det, 0);
        assert_eq!(ens.min_det, 1.0);
    }

    #[test]
    fn snapshots_match_a_single_long_integration() {
        let b = make_affine_drift(vec![0.2, 0.0, 0.1, 0.0, -0.3, 0.0, 0.0, 0.0, 0.1], vec![0.1, 0.0, 0.0]).unwrap();
        let starts = vec![vec![0.3, 0.1, -0.2]];
        let ens = simulate_flow(&b, &starts, &cfg(1, 0.3, 0.01)).unwrap();
        for s in 0..ens.times.len() {
            let (x, j) = ens.integrate_from(0, s, &starts[0]);
            assert_eq!(x, ens.image(0, s, 0));
            let j = j.unwrap();
            for k in 0..9 {
                assert!((j[k] - ens.jacobian(0, s, 0).unwrap()[k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn newton_refinement_on_a_nonlinear_flow() {
        let b = make_hardy_drift(3, 0.1, 1).unwrap();
        let mut c = cfg(2, 0.2, 0.005);
        c.cap = CapRule::Radius(0.05);
        let starts = start_grid(3, 1.5, 6);
        let ens = simulate_flow(&b, &starts, &c).unwrap();
        let last = ens.times.len() - 1;
        let x = vec![0.4, 0.3, -0.5];
        let inv = invert_flow(&ens, 0, last, &x).unwrap();
        let refined = refine_inverse(&ens, 0, last, &x, &inv.y, 8).unwrap();
        assert!(refined.residual < 1e-10, "{}", refined.residual);
        assert!(refined.iterations >= 1);
    }

    #[test]
    fn inversion_needs_derivatives() {
        let b = make_zero_drift(3).unwrap();
        let mut ens = simulate_flow(&b, &start_grid(3, 1.0, 2), &cfg(1, 0.1, 0.05)).unwrap();
        ens.jacobians = None;
        assert!(matches!(invert_flow(&ens, 0, 0, &[0.0; 3]), Err(Error::NotDifferentiable(_))));
    }
}
