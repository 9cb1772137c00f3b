//! IMEX time stepping for the moment equations on a periodic box.
//!
//! One step of size `τ`: explicit first-order upwind transport (and, for
//! the gradient system, the explicit `∇b` coupling), then the exact decay
//! factor `e^{-2μτ}`, then the exact spectral heat factor
//! `exp(−τ σ²/2 |ξ|²)`. Nonnegative moments are clipped at zero after the
//! step and the most negative pre-clip value is recorded.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drift::{CapRule, DriftField, SampledDrift};
use crate::error::{invalid, Error, Result};
use crate::grid::{packed_index, BoundaryMode, BoxGrid, MatrixField, ScalarField};
use crate::spectral::Spectral;
use crate::weights::{rho_samples, WeightParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub sigma: f64,
    pub mu: f64,
    /// Requested step; the solver uses `T / ⌈T/dt⌉`.
    pub dt: f64,
    pub t_final: f64,
    /// Cap applied when sampling the drift; `None` means `|b| ≤ 1/h`.
    #[serde(default)]
    pub cap: Option<CapRule>,
}

impl SolverConfig {
    pub fn new(sigma: f64, mu: f64, dt: f64, t_final: f64) -> Self {
        Self {
            sigma,
            mu,
            dt,
            t_final,
            cap: None,
        }
    }

    fn validate(&self) -> Result<()> {
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

    fn cap_for(&self, grid: &BoxGrid) -> CapRule {
        self.cap.unwrap_or(CapRule::Magnitude(1.0 / grid.spacing()))
    }

    fn steps(&self) -> (usize, f64) {
        if self.t_final == 0.0 {
            return (0, 0.0);
        }
        let n = (self.t_final / self.dt - 1e-9).ceil().max(1.0) as usize;
        (n, self.t_final / n as f64)
    }
}

/// What to record along the way.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// Exponents `p` for `‖state‖_p` and, for the second moment,
    /// `‖∇v^{p/2}‖₂²`.
    pub lp: Vec<f64>,
    /// Weights for `‖ρ^{-1} state‖₂`.
    pub weights: Vec<WeightParams>,
    /// Keep the full state every this many steps (0: only initial and final).
    pub snapshot_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentKind {
    SecondMoment,
    GradientQ1,
    Dual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    /// `‖state‖_p` for each requested `p` (trace of `V` for the gradient
    /// system).
    pub lp: Vec<f64>,
    /// Second moment: `‖∇v^{p/2}‖₂²` per `p`. Gradient system:
    /// `[Σ_{ij} ⟨|∇V_ij|²⟩]`. Dual: `[⟨|∇w|²⟩]`.
    pub dissipation: Vec<f64>,
    /// `Σ_{ij} ⟨V_ij²⟩`, or `⟨state²⟩` for scalar moments.
    pub sum_sq: f64,
    /// `‖ρ^{-1} state‖₂` per weight.
    pub weighted: Vec<f64>,
    /// Most negative value before clipping, relative to the initial sup.
    pub min_before_clip: f64,
    /// Share of `Σ|state|` in the two outermost cell layers.
    pub boundary_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct MomentSeries {
    pub kind: MomentKind,
    pub grid: BoxGrid,
    pub config: SolverConfig,
    pub dt_used: f64,
    pub cfl_limit: f64,
    pub lp_exponents: Vec<f64>,
    pub weights: Vec<WeightParams>,
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<(f64, Vec<Vec<f64>>)>,
    pub initial: Vec<Vec<f64>>,
    pub final_state: Vec<Vec<f64>>,
}

impl MomentSeries {
    pub fn final_scalar(&self) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            data: self.final_state[0].clone(),
        }
    }

    pub fn final_matrix(&self) -> MatrixField {
        MatrixField {
            grid: self.grid.clone(),
            entries: self.final_state.clone(),
        }
    }

    pub fn max_boundary_fraction(&self) -> f64 {
        self.records.iter().map(|r| r.boundary_fraction).fold(0.0, f64::max)
    }

    pub fn min_before_clip(&self) -> f64 {
        self.records.iter().map(|r| r.min_before_clip).fold(0.0, f64::min)
    }

    pub fn lp_index(&self, p: f64) -> Option<usize> {
        self.lp_exponents.iter().position(|q| (q - p).abs() < 1e-12)
    }

    pub fn weight_index(&self, w: &WeightParams) -> Option<usize> {
        self.weights.iter().position(|v| v == w)
    }
}

/// Upwind `−b·∇s`, added into `out`.
fn add_advection(grid: &BoxGrid, b: &[Vec<f64>], s: &[f64], out: &mut [f64]) {
    let n = grid.points();
    let inv_h = 1.0 / grid.spacing();
    let strides: Vec<usize> = (0..grid.dim()).map(|a| grid.stride(a)).collect();
    out.par_iter_mut().enumerate().for_each(|(flat, o)| {
        let mut acc = 0.0;
        for (axis, &stride) in strides.iter().enumerate() {
            let bk = b[axis][flat];
            if bk == 0.0 {
                continue;
            }
            let i = (flat / stride) % n;
            if bk > 0.0 {
                let back = if i == 0 { flat + (n - 1) * stride } else { flat - stride };
                acc -= bk * (s[flat] - s[back]) * inv_h;
            } else {
                let fwd = if i == n - 1 { flat - (n - 1) * stride } else { flat + stride };
                acc -= bk * (s[fwd] - s[flat]) * inv_h;
            }
        }
        *o += acc;
    });
}

/// Conservative upwind `−∇·(c s)` with `c = scale · b` and face velocities
/// averaged from the neighbouring cells, added into `out`.
fn add_flux_divergence(grid: &BoxGrid, b: &[Vec<f64>], scale: f64, s: &[f64], out: &mut [f64]) {
    let n = grid.points();
    let inv_h = 1.0 / grid.spacing();
    let strides: Vec<usize> = (0..grid.dim()).map(|a| grid.stride(a)).collect();
    out.par_iter_mut().enumerate().for_each(|(flat, o)| {
        let mut acc = 0.0;
        for (axis, &stride) in strides.iter().enumerate() {
            let i = (flat / stride) % n;
            let back = if i == 0 { flat + (n - 1) * stride } else { flat - stride };
            let fwd = if i == n - 1 { flat - (n - 1) * stride } else { flat + stride };
            let c = &b[axis];
            let cr = 0.5 * scale * (c[flat] + c[fwd]);
            let cl = 0.5 * scale * (c[back] + c[flat]);
            let fr = cr.max(0.0) * s[flat] + cr.min(0.0) * s[fwd];
            let fl = cl.max(0.0) * s[back] + cl.min(0.0) * s[flat];
            acc -= (fr - fl) * inv_h;
        }
        *o += acc;
    });
}

/// `−Σ_k (∂_i b^k V_kj + ∂_j b^k V_ik)` for every packed `(i, j)`.
fn add_gradient_coupling(d: usize, jac: &[Vec<f64>], v: &[Vec<f64>], out: &mut [Vec<f64>]) {
    for i in 0..d {
        for j in i..d {
            let target = &mut out[packed_index(d, i, j)];
            target.par_iter_mut().enumerate().for_each(|(flat, o)| {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += jac[k * d + i][flat] * v[packed_index(d, k, j)][flat]
                        + jac[k * d + j][flat] * v[packed_index(d, i, k)][flat];
                }
                *o -= acc;
            });
        }
    }
}

struct Recorder {
    kind: MomentKind,
    grid: BoxGrid,
    lp: Vec<f64>,
    inv_rho: Vec<Vec<f64>>,
    boundary: Vec<bool>,
    initial_sup: f64,
}

impl Recorder {
    fn new(kind: MomentKind, grid: &BoxGrid, diag: &Diagnostics, initial: &[Vec<f64>]) -> Self {
        let n = grid.points();
        let boundary = (0..grid.len())
            .map(|f| {
                (0..grid.dim()).any(|a| {
                    let i = grid.axis_index(f, a);
                    i < 2 || i + 2 >= n
                })
            })
            .collect();
        let initial_sup = initial
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        Self {
            kind,
            grid: grid.clone(),
            lp: diag.lp.clone(),
            inv_rho: diag
                .weights
                .iter()
                .map(|w| rho_samples(w, grid).into_iter().map(|r| 1.0 / r).collect())
                .collect(),
            boundary,
            initial_sup,
        }
    }

    fn record(&self, sp: &Spectral, step: usize, t: f64, state: &[Vec<f64>], min_before_clip: f64) -> StepRecord {
        let g = &self.grid;
        let d = g.dim();
        let cv = g.cell_volume();
        let scalar: Vec<f64> = match self.kind {
            MomentKind::GradientQ1 => (0..g.len())
                .map(|f| (0..d).map(|i| state[packed_index(d, i, i)][f]).sum())
                .collect(),
            _ => state[0].clone(),
        };
        let field = ScalarField {
            grid: g.clone(),
            data: scalar,
        };
        let lp = self.lp.iter().map(|&p| field.lp_norm(p)).collect();
        let (dissipation, sum_sq) = match self.kind {
            MomentKind::SecondMoment => (
                self.lp
                    .iter()
                    .map(|&p| {
                        let vp: Vec<f64> = field.data.iter().map(|v| v.max(0.0).powf(p / 2.0)).collect();
                        sp.dirichlet_energy(&vp)
                    })
                    .collect(),
                field.data.iter().map(|v| v * v).sum::<f64>() * cv,
            ),
            MomentKind::Dual => (
                vec![sp.dirichlet_energy(&field.data)],
                field.data.iter().map(|v| v * v).sum::<f64>() * cv,
            ),
            MomentKind::GradientQ1 => {
                let mut dis = 0.0;
                let mut sq = 0.0;
                for i in 0..d {
                    for j in i..d {
                        let mult = if i == j { 1.0 } else { 2.0 };
                        let c = &state[packed_index(d, i, j)];
                        dis += mult * sp.dirichlet_energy(c);
                        sq += mult * c.iter().map(|v| v * v).sum::<f64>() * cv;
                    }
                }
                (vec![dis], sq)
            }
        };
        let weighted = self
            .inv_rho
            .iter()
            .map(|ir| {
                (field.data.iter().zip(ir).map(|(v, r)| (v * r).powi(2)).sum::<f64>() * cv).sqrt()
            })
            .collect();
        let (mut edge, mut total) = (0.0, 0.0);
        for c in state {
            for (v, &b) in c.iter().zip(&self.boundary) {
                total += v.abs();
                if b {
                    edge += v.abs();
                }
            }
        }
        StepRecord {
            step,
            t,
            lp,
            dissipation,
            sum_sq,
            weighted,
            min_before_clip: if self.initial_sup > 0.0 {
                min_before_clip / self.initial_sup
            } else {
                0.0
            },
            boundary_fraction: if total > 0.0 { edge / total } else { 0.0 },
        }
    }
}

fn sample_drift(
    b: &DriftField,
    grid: &BoxGrid,
    cfg: &SolverConfig,
    with_jacobian: bool,
) -> Result<SampledDrift> {
    if grid.boundary() != BoundaryMode::Periodic {
        return Err(Error::Unsupported("moment solvers need a periodic box".into()));
    }
    b.sample(grid, cfg.cap_for(grid), with_jacobian)
}

/// `h / (factor · max_x max(2|b|, |b|_1))`, so `h/(2 max|b|)` for `d ≤ 4`.
fn advective_limit(grid: &BoxGrid, drift: &SampledDrift, factor: f64) -> f64 {
    let d = grid.dim();
    let speed = (0..grid.len())
        .map(|f| {
            let l1: f64 = (0..d).map(|k| drift.values.components[k][f].abs()).sum();
            (2.0 * drift.values.magnitude_at(f)).max(l1)
        })
        .fold(0.0, f64::max);
    if speed == 0.0 {
        f64::INFINITY
    } else {
        grid.spacing() / (factor * speed)
    }
}

/// `1 / (2 max_x ‖∇b‖_∞)` for the explicit coupling of the gradient system.
fn coupling_limit(d: usize, jac: &[Vec<f64>], len: usize) -> f64 {
    let norm = (0..len)
        .map(|f| {
            (0..d)
                .map(|k| (0..d).map(|i| jac[k * d + i][f].abs()).sum::<f64>())
                .fold(0.0, f64::max)
                .max((0..d).map(|i| (0..d).map(|k| jac[k * d + i][f].abs()).sum::<f64>()).fold(0.0, f64::max))
        })
        .fold(0.0, f64::max);
    if norm == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (2.0 * norm)
    }
}

fn check_finite(step: usize, state: &[Vec<f64>], grid: &BoxGrid) -> Result<()> {
    for (c, comp) in state.iter().enumerate() {
        if let Some(f) = comp.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step,
                location: format!(" (component {c}, x = {:?})", grid.position(f)),
            });
        }
    }
    Ok(())
}

fn run(
    kind: MomentKind,
    grid: &BoxGrid,
    drift: &SampledDrift,
    initial: Vec<Vec<f64>>,
    cfg: &SolverConfig,
    diag: &Diagnostics,
) -> Result<MomentSeries> {
    let d = grid.dim();
    let (steps, tau) = cfg.steps();
    let factor = if kind == MomentKind::Dual { 3.0 } else { 1.0 };
    let mut limit = advective_limit(grid, drift, factor);
    if kind == MomentKind::GradientQ1 {
        let jac = drift.jacobian.as_ref().ok_or(Error::NotDifferentiable("the gradient-moment system"))?;
        limit = limit.min(coupling_limit(d, jac, grid.len()));
    }
    if steps > 0 && tau > limit {
        return Err(Error::Cfl { dt: tau, limit });
    }
    let sp = Spectral::new(grid);
    let recorder = Recorder::new(kind, grid, diag, &initial);
    let clip = kind != MomentKind::GradientQ1;
    let decay = (-2.0 * cfg.mu * tau).exp();
    let heat_time = tau * cfg.sigma * cfg.sigma / 2.0;
    let b = &drift.values.components;

    let mut state = initial.clone();
    let mut records = vec![recorder.record(&sp, 0, 0.0, &state, 0.0)];
    let mut snapshots = vec![(0.0, state.clone())];
    let mut rate: Vec<Vec<f64>> = vec![vec![0.0; grid.len()]; state.len()];
    for step in 1..=steps {
        for r in rate.iter_mut() {
            r.iter_mut().for_each(|v| *v = 0.0);
        }
        for (r, s) in rate.iter_mut().zip(&state) {
            add_advection(grid, b, s, r);
        }
        match kind {
            MomentKind::SecondMoment => {}
            MomentKind::GradientQ1 => {
                add_gradient_coupling(d, drift.jacobian.as_ref().unwrap(), &state, &mut rate)
            }
            // +2∇·(b w) = −∇·((−2b) w)
            MomentKind::Dual => add_flux_divergence(grid, b, -2.0, &state[0], &mut rate[0]),
        }
        let mut min_val = 0.0f64;
        for (s, r) in state.iter_mut().zip(&rate) {
            let explicit: Vec<f64> = s
                .par_iter()
                .zip(r.par_iter())
                .map(|(v, dv)| (v + tau * dv) * decay)
                .collect();
            *s = sp.discrete_heat(&explicit, heat_time);
            if clip {
                min_val = min_val.min(s.iter().copied().fold(0.0, f64::min));
                s.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        check_finite(step, &state, grid)?;
        let t = if step == steps { cfg.t_final } else { step as f64 * tau };
        records.push(recorder.record(&sp, step, t, &state, min_val));
        if diag.snapshot_every > 0 && step % diag.snapshot_every == 0 && step != steps {
            snapshots.push((t, state.clone()));
        }
    }
    if steps > 0 {
        snapshots.push((cfg.t_final, state.clone()));
    }
    Ok(MomentSeries {
        kind,
        grid: grid.clone(),
        config: cfg.clone(),
        dt_used: tau,
        cfl_limit: limit,
        lp_exponents: diag.lp.clone(),
        weights: diag.weights.clone(),
        records,
        snapshots,
        initial,
        final_state: state,
    })
}

/// `∂_t v = −2μv − b·∇v + (σ²/2)Δv`, `v(0) = f²`.
pub fn solve_second_moment(
    b: &DriftField,
    f: &ScalarField,
    cfg: &SolverConfig,
    diag: &Diagnostics,
) -> Result<MomentSeries> {
    cfg.validate()?;
    let drift = sample_drift(b, &f.grid, cfg, false)?;
    let v0 = f.data.iter().map(|u| u * u).collect();
    run(MomentKind::SecondMoment, &f.grid, &drift, vec![v0], cfg, diag)
}

/// `V_ij = E[∂_i u ∂_j u]`:
/// `∂_t V_ij = (σ²/2)ΔV_ij − b·∇V_ij − Σ_k(∂_i b^k V_kj + ∂_j b^k V_ik) − 2μV_ij`.
pub fn solve_gradient_moment_system_q1(
    b: &DriftField,
    v0: &MatrixField,
    cfg: &SolverConfig,
    diag: &Diagnostics,
) -> Result<MomentSeries> {
    cfg.validate()?;
    if !b.is_differentiable() {
        return Err(Error::NotDifferentiable("the gradient-moment system"));
    }
    let drift = sample_drift(b, &v0.grid, cfg, true)?;
    run(MomentKind::GradientQ1, &v0.grid, &drift, v0.entries.clone(), cfg, diag)
}

/// `∂_t w = −2μw + (σ²/2)Δw + 2∇·(bw) − b·∇w`, `w(0) = v₀²`, with the
/// divergence term in conservative flux form.
pub fn solve_dual_continuity_moment(
    b: &DriftField,
    v0: &ScalarField,
    cfg: &SolverConfig,
    diag: &Diagnostics,
) -> Result<MomentSeries> {
    cfg.validate()?;
    let drift = sample_drift(b, &v0.grid, cfg, false)?;
    let w0 = v0.data.iter().map(|v| v * v).collect();
    run(MomentKind::Dual, &v0.grid, &drift, vec![w0], cfg, diag)
}

/// `∂_i f ∂_j f` from spectral derivatives of grid samples.
pub fn gradient_outer_from_samples(f: &ScalarField) -> MatrixField {
    let sp = Spectral::new(&f.grid);
    let d = f.grid.dim();
    let grads: Vec<Vec<f64>> = (0..d).map(|a| sp.derivative(&f.data, a)).collect();
    let mut out = MatrixField::zeros(&f.grid);
    for i in 0..d {
        for j in i..d {
            let e = out.entry_mut(i, j);
            for (flat, v) in e.iter_mut().enumerate() {
                *v = grads[i][flat] * grads[j][flat];
            }
        }
    }
    out
}
