use rayon::prelude::*;

use super::flow::{invert_flow, refine_inverse, simulate_flow, FlowEnsemble};
use super::linalg::solve_transposed;
use super::{MCEstimate, PathConfig};
use crate::drift::DriftField;
use crate::error::{invalid, Result};
use crate::initial::InitialProfile;

/// Refined inverses with a larger residual are dropped.
const REFINE_TOLERANCE: f64 = 1e-8;

/// Flow of the characteristics `dX = +b dt + σ dB` of the transport
/// equation with drift `b`.
pub fn simulate_transport_flow(b: &DriftField, starts: &[Vec<f64>], cfg: &PathConfig) -> Result<FlowEnsemble> {
    simulate_flow(&b.negated(), starts, cfg)
}

/// Preimage `y` and Jacobian `∂Ψ/∂x (y)` for one realization, or `None`
/// when the inversion is flagged.
fn preimage(
    ens: &FlowEnsemble,
    r: usize,
    snapshot: usize,
    x: &[f64],
    refine_iters: usize,
) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    let inv = invert_flow(ens, r, snapshot, x)?;
    if inv.singular {
        return Ok(None);
    }
    if refine_iters == 0 {
        if inv.extrapolated {
            return Ok(None);
        }
        let j = ens.jacobian(r, snapshot, inv.nearest).unwrap().to_vec();
        return Ok(Some((inv.y, j)));
    }
    let rf = refine_inverse(ens, r, snapshot, x, &inv.y, refine_iters)?;
    let tol = REFINE_TOLERANCE * (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt());
    if rf.singular || !(rf.residual <= tol) {
        return Ok(None);
    }
    Ok(Some((rf.y, rf.jacobian)))
}

fn per_realization<F>(ens: &FlowEnsemble, snapshot: usize, x: &[f64], refine_iters: usize, g: F) -> Result<MCEstimate>
where
    F: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    if snapshot >= ens.times.len() {
        return Err(invalid("snapshot", format!("{snapshot} out of range")));
    }
    let samples: Vec<Option<f64>> = (0..ens.realizations())
        .into_par_iter()
        .map(|r| preimage(ens, r, snapshot, x, refine_iters).map(|o| o.map(|(y, j)| g(&y, &j))))
        .collect::<Result<_>>()?;
    let kept: Vec<f64> = samples.into_iter().flatten().collect();
    Ok(MCEstimate::from_samples(&kept))
}

/// `E[u(t,x)²]` with `u(t,x) = e^{−μt} f(Ψ_t^{-1}(x))`, where `ens` is a
/// transport flow. Flagged inversions are dropped, lowering `n`.
pub fn mc_second_moment_ensemble(
    ens: &FlowEnsemble,
    f: &InitialProfile,
    probes: &[Vec<f64>],
    snapshot: usize,
    mu: f64,
    refine_iters: usize,
) -> Result<Vec<MCEstimate>> {
    let decay = (-2.0 * mu * ens.times.get(snapshot).copied().unwrap_or(0.0)).exp();
    probes
        .iter()
        .map(|x| per_realization(ens, snapshot, x, refine_iters, |y, _| decay * f.eval(y).powi(2)))
        .collect()
}

/// `E|∇u(t,x)|^{2q}` with `∇u(t,x) = e^{−μt} ∇f(y) J(y)^{-1}`, `Ψ_t(y) = x`.
pub fn mc_gradient_moment_ensemble(
    ens: &FlowEnsemble,
    f: &InitialProfile,
    probes: &[Vec<f64>],
    snapshot: usize,
    mu: f64,
    q: u32,
    refine_iters: usize,
) -> Result<Vec<MCEstimate>> {
    if q == 0 {
        return Err(invalid("q", "must be >= 1"));
    }
    let d = ens.dim;
    let decay = (-2.0 * q as f64 * mu * ens.times.get(snapshot).copied().unwrap_or(0.0)).exp();
    probes
        .iter()
        .map(|x| {
            per_realization(ens, snapshot, x, refine_iters, |y, j| {
                let mut gf = vec![0.0; d];
                f.gradient_into(y, &mut gf);
                match solve_transposed(d, j, &gf) {
                    Some(g) => decay * g.iter().map(|v| v * v).sum::<f64>().powi(q as i32),
                    None => f64::NAN,
                }
            })
        })
        .collect()
}

/// Convenience wrapper: simulates the transport flow of `b` to
/// `cfg.t_final` and estimates `E[u²]` at each probe.
pub fn mc_second_moment(
    f: &InitialProfile,
    b: &DriftField,
    probes: &[Vec<f64>],
    starts: &[Vec<f64>],
    cfg: &PathConfig,
    refine_iters: usize,
) -> Result<Vec<MCEstimate>> {
    let ens = simulate_transport_flow(b, starts, cfg)?;
    mc_second_moment_ensemble(&ens, f, probes, ens.times.len() - 1, cfg.mu, refine_iters)
}

/// Convenience wrapper for `E|∇u|^{2q}` at `cfg.t_final`.
pub fn mc_gradient_moment(
    f: &InitialProfile,
    b: &DriftField,
    probes: &[Vec<f64>],
    starts: &[Vec<f64>],
    cfg: &PathConfig,
    q: u32,
    refine_iters: usize,
) -> Result<Vec<MCEstimate>> {
    let ens = simulate_transport_flow(b, starts, cfg)?;
    mc_gradient_moment_ensemble(&ens, f, probes, ens.times.len() - 1, cfg.mu, q, refine_iters)
}
