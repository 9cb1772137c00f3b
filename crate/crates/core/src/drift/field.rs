use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{BoxGrid, VectorField};

/// Where a drift is infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularSet {
    None,
    Origin,
    Sphere { radius: f64 },
    Union(Vec<SingularSet>),
}

/// How a singular drift is made finite before it is evaluated numerically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum CapRule {
    #[default]
    None,
    /// `|b|` is clipped to the given magnitude, direction preserved.
    Magnitude(f64),
    /// Points with `|x| < r` are evaluated at their radial projection onto
    /// the sphere of radius `r`.
    Radius(f64),
}

/// A piecewise-linear profile `h: ℝ → ℝ` sampled uniformly on `[lo, hi]`,
/// zero outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile1d {
    pub lo: f64,
    pub hi: f64,
    pub samples: Vec<f64>,
}

impl Profile1d {
    pub fn eval(&self, s: f64) -> f64 {
        self.locate(s).map_or(0.0, |(i, t)| {
            self.samples[i] * (1.0 - t) + self.samples[i + 1] * t
        })
    }

    pub fn slope(&self, s: f64) -> f64 {
        let dx = (self.hi - self.lo) / (self.samples.len() - 1) as f64;
        self.locate(s)
            .map_or(0.0, |(i, _)| (self.samples[i + 1] - self.samples[i]) / dx)
    }

    fn locate(&self, s: f64) -> Option<(usize, f64)> {
        if !(self.lo..=self.hi).contains(&s) {
            return None;
        }
        let n = self.samples.len() - 1;
        let u = (s - self.lo) / (self.hi - self.lo) * n as f64;
        let i = (u.floor() as usize).min(n - 1);
        Some((i, u - i as f64))
    }
}

/// Samples of a vector field on a grid, with optional Jacobian samples
/// (`∂_i b^k` at index `k * d + i`). Outside the box the field is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDrift {
    pub values: VectorField,
    pub jacobian: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DriftKind {
    Zero,
    /// `sign · β · x / |x|²`.
    Hardy { beta: f64, sign: f64 },
    /// Radial field with `|b|² = C / (t (−ln t)^β)`, `t = ||x| − 1|`, on the
    /// shell `1 − α < |x| < 1 + α`.
    AnnulusLog { c: f64, alpha: f64, beta_exp: f64 },
    /// `h(⟨T, x⟩) e`.
    Separable {
        profile: Profile1d,
        map: Vec<f64>,
        direction: Vec<f64>,
    },
    /// `A x + c`, with `A` row-major.
    Affine { matrix: Vec<f64>, offset: Vec<f64> },
    GridSampled(Arc<GridDrift>),
    Scaled { factor: f64, inner: Box<DriftField> },
    Sum(Vec<DriftField>),
}

/// An evaluable vector field `b: ℝ^d → ℝ^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftField {
    dim: usize,
    kind: DriftKind,
}

fn check_dim(d: usize) -> Result<()> {
    if d < 3 {
        Err(Error::Dimension(d))
    } else {
        Ok(())
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `b(x) = sign · β · |x|^{-2} x`.
pub fn make_hardy_drift(d: usize, beta: f64, sign: i32) -> Result<DriftField> {
    check_dim(d)?;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(invalid("beta", format!("must be positive, got {beta}")));
    }
    if sign != 1 && sign != -1 {
        return Err(invalid("sign", format!("must be ±1, got {sign}")));
    }
    Ok(DriftField {
        dim: d,
        kind: DriftKind::Hardy {
            beta,
            sign: sign as f64,
        },
    })
}

/// Radial drift whose squared magnitude is `C / (t (−ln t)^{β_exp})` on the
/// shell `||x| − 1| < α` and zero elsewhere.
pub fn make_annulus_log_drift(d: usize, c: f64, alpha: f64, beta_exp: f64) -> Result<DriftField> {
    check_dim(d)?;
    if !(c > 0.0) {
        return Err(invalid("C", format!("must be positive, got {c}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    if !(beta_exp > 1.0) {
        return Err(invalid("beta_exp", format!("must exceed 1, got {beta_exp}")));
    }
    Ok(DriftField {
        dim: d,
        kind: DriftKind::AnnulusLog { c, alpha, beta_exp },
    })
}

/// `b(x) = h(⟨T, x⟩) e` for a 1-D profile `h`, a linear functional `T` and
/// a unit direction `e`.
pub fn make_separable_drift(
    profile: Profile1d,
    map: Vec<f64>,
    direction: Vec<f64>,
) -> Result<DriftField> {
    let d = map.len();
    check_dim(d)?;
    if direction.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: direction.len(),
        });
    }
    if profile.samples.len() < 2 || !(profile.hi > profile.lo) {
        return Err(invalid("profile", "need at least two samples on a non-empty interval"));
    }
    let n = norm(&direction);
    if (n - 1.0).abs() > 1e-12 {
        return Err(invalid("direction", format!("must be a unit vector, |e| = {n}")));
    }
    Ok(DriftField {
        dim: d,
        kind: DriftKind::Separable {
            profile,
            map,
            direction,
        },
    })
}

pub fn make_zero_drift(d: usize) -> Result<DriftField> {
    check_dim(d)?;
    Ok(DriftField {
        dim: d,
        kind: DriftKind::Zero,
    })
}

/// `b(x) = A x + c`; covers constant, linear and rotational test fields.
pub fn make_affine_drift(matrix: Vec<f64>, offset: Vec<f64>) -> Result<DriftField> {
    let d = offset.len();
    check_dim(d)?;
    if matrix.len() != d * d {
        return Err(Error::DimensionMismatch {
            expected: d * d,
            got: matrix.len(),
        });
    }
    Ok(DriftField {
        dim: d,
        kind: DriftKind::Affine { matrix, offset },
    })
}

pub fn make_grid_drift(values: VectorField, jacobian: Option<Vec<Vec<f64>>>) -> Result<DriftField> {
    let d = values.grid.dim();
    check_dim(d)?;
    if values.components.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: values.components.len(),
        });
    }
    if let Some(j) = &jacobian {
        if j.len() != d * d || j.iter().any(|c| c.len() != values.grid.len()) {
            return Err(invalid("jacobian", "expected d² components of grid length"));
        }
    }
    Ok(DriftField {
        dim: d,
        kind: DriftKind::GridSampled(Arc::new(GridDrift { values, jacobian })),
    })
}

pub fn make_sum_drift(parts: Vec<DriftField>) -> Result<DriftField> {
    let d = parts
        .first()
        .map(|p| p.dim)
        .ok_or_else(|| invalid("parts", "sum of no drifts"))?;
    if let Some(p) = parts.iter().find(|p| p.dim != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: p.dim,
        });
    }
    Ok(DriftField {
        dim: d,
        kind: DriftKind::Sum(parts),
    })
}

impl DriftField {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &DriftKind {
        &self.kind
    }

    /// `c · b`.
    pub fn scaled(&self, factor: f64) -> DriftField {
        DriftField {
            dim: self.dim,
            kind: DriftKind::Scaled {
                factor,
                inner: Box::new(self.clone()),
            },
        }
    }

    pub fn negated(&self) -> DriftField {
        self.scaled(-1.0)
    }

    pub fn is_zero(&self) -> bool {
        match &self.kind {
            DriftKind::Zero => true,
            DriftKind::Scaled { factor, inner } => *factor == 0.0 || inner.is_zero(),
            DriftKind::Sum(parts) => parts.iter().all(|p| p.is_zero()),
            _ => false,
        }
    }

    pub fn singular_set(&self) -> SingularSet {
        match &self.kind {
            DriftKind::Hardy { .. } => SingularSet::Origin,
            DriftKind::AnnulusLog { .. } => SingularSet::Sphere { radius: 1.0 },
            DriftKind::Scaled { inner, .. } => inner.singular_set(),
            DriftKind::Sum(parts) => {
                let sets: Vec<_> = parts
                    .iter()
                    .map(|p| p.singular_set())
                    .filter(|s| *s != SingularSet::None)
                    .collect();
                match sets.len() {
                    0 => SingularSet::None,
                    1 => sets.into_iter().next().unwrap(),
                    _ => SingularSet::Union(sets),
                }
            }
            _ => SingularSet::None,
        }
    }

    /// Whether `∇b` is available away from the singular set.
    pub fn is_differentiable(&self) -> bool {
        match &self.kind {
            DriftKind::Zero | DriftKind::Hardy { .. } | DriftKind::Affine { .. } => true,
            DriftKind::AnnulusLog { .. } | DriftKind::Separable { .. } => false,
            DriftKind::GridSampled(g) => g.jacobian.is_some(),
            DriftKind::Scaled { inner, .. } => inner.is_differentiable(),
            DriftKind::Sum(parts) => parts.iter().all(|p| p.is_differentiable()),
        }
    }

    /// Writes `b(x)` into `out`.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        match &self.kind {
            DriftKind::Zero => out[..d].fill(0.0),
            DriftKind::Hardy { beta, sign } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let s = sign * beta / r2;
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = s * xi;
                }
            }
            DriftKind::AnnulusLog { c, alpha, beta_exp } => {
                let r = norm(x);
                let t = (r - 1.0).abs();
                if t >= *alpha || r == 0.0 {
                    out[..d].fill(0.0);
                    return;
                }
                let mag = if t == 0.0 {
                    f64::INFINITY
                } else {
                    (c / (t * (-t.ln()).powf(*beta_exp))).sqrt()
                };
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = mag * xi / r;
                }
            }
            DriftKind::Separable {
                profile,
                map,
                direction,
            } => {
                let s: f64 = map.iter().zip(x).map(|(a, b)| a * b).sum();
                let h = profile.eval(s);
                for (o, e) in out.iter_mut().zip(direction) {
                    *o = h * e;
                }
            }
            DriftKind::Affine { matrix, offset } => {
                for k in 0..d {
                    out[k] = offset[k]
                        + (0..d).map(|i| matrix[k * d + i] * x[i]).sum::<f64>();
                }
            }
            DriftKind::GridSampled(g) => {
                let l = g.values.grid.half_width();
                if x.iter().any(|v| v.abs() > l) {
                    out[..d].fill(0.0);
                } else {
                    g.values.interpolate_into(x, out);
                }
            }
            DriftKind::Scaled { factor, inner } => {
                inner.eval_into(x, out);
                out[..d].iter_mut().for_each(|v| *v *= factor);
            }
            DriftKind::Sum(parts) => {
                let mut tmp = vec![0.0; d];
                out[..d].fill(0.0);
                for p in parts {
                    p.eval_into(x, &mut tmp);
                    for (o, t) in out.iter_mut().zip(&tmp) {
                        *o += t;
                    }
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut out);
        out
    }

    pub fn magnitude(&self, x: &[f64]) -> f64 {
        norm(&self.eval(x))
    }

    /// Writes the Jacobian `∂_i b^k` at index `k * d + i`. Returns `false`
    /// when no derivative is available.
    pub fn jacobian_into(&self, x: &[f64], out: &mut [f64]) -> bool {
        let d = self.dim;
        match &self.kind {
            DriftKind::Zero => {
                out[..d * d].fill(0.0);
                true
            }
            DriftKind::Hardy { beta, sign } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let s = sign * beta;
                for k in 0..d {
                    for i in 0..d {
                        let delta = if i == k { 1.0 } else { 0.0 };
                        out[k * d + i] = s * (delta / r2 - 2.0 * x[k] * x[i] / (r2 * r2));
                    }
                }
                true
            }
            DriftKind::Affine { matrix, .. } => {
                out[..d * d].copy_from_slice(matrix);
                true
            }
            DriftKind::GridSampled(g) => match &g.jacobian {
                Some(jac) => {
                    let l = g.values.grid.half_width();
                    let outside = x.iter().any(|v| v.abs() > l);
                    for (o, c) in out.iter_mut().zip(jac) {
                        *o = if outside {
                            0.0
                        } else {
                            g.values.grid.interpolate(c, x)
                        };
                    }
                    true
                }
                None => false,
            },
            DriftKind::Scaled { factor, inner } => {
                if !inner.jacobian_into(x, out) {
                    return false;
                }
                out[..d * d].iter_mut().for_each(|v| *v *= factor);
                true
            }
            DriftKind::Sum(parts) => {
                let mut tmp = vec![0.0; d * d];
                out[..d * d].fill(0.0);
                for p in parts {
                    if !p.jacobian_into(x, &mut tmp) {
                        return false;
                    }
                    for (o, t) in out.iter_mut().zip(&tmp) {
                        *o += t;
                    }
                }
                true
            }
            DriftKind::AnnulusLog { .. } | DriftKind::Separable { .. } => false,
        }
    }

    /// Evaluates `b` under a cap rule. Non-finite values are replaced by the
    /// cap (magnitude rule) or by zero (no cap).
    pub fn eval_capped_into(&self, x: &[f64], cap: CapRule, out: &mut [f64]) {
        let d = self.dim;
        match cap {
            CapRule::None => {
                self.eval_into(x, out);
                if out[..d].iter().any(|v| !v.is_finite()) {
                    out[..d].fill(0.0);
                }
            }
            CapRule::Magnitude(m) => {
                self.eval_into(x, out);
                let mag = norm(&out[..d]);
                if !mag.is_finite() {
                    // Direction of an infinite value: radial if possible.
                    let r = norm(x);
                    let finite_dir = out[..d].iter().all(|v| !v.is_nan());
                    if finite_dir && r > 0.0 {
                        for k in 0..d {
                            out[k] = if out[k].is_infinite() {
                                out[k].signum()
                            } else {
                                0.0
                            };
                        }
                        let n = norm(&out[..d]).max(f64::MIN_POSITIVE);
                        out[..d].iter_mut().for_each(|v| *v *= m / n);
                    } else {
                        out[..d].fill(0.0);
                    }
                } else if mag > m {
                    out[..d].iter_mut().for_each(|v| *v *= m / mag);
                }
            }
            CapRule::Radius(rc) => {
                let r = norm(x);
                if r >= rc {
                    self.eval_into(x, out);
                } else if r == 0.0 {
                    out[..d].fill(0.0);
                } else {
                    let proj: Vec<f64> = x.iter().map(|v| v * rc / r).collect();
                    self.eval_into(&proj, out);
                }
                if out[..d].iter().any(|v| !v.is_finite()) {
                    out[..d].fill(0.0);
                }
            }
        }
    }

    /// Jacobian of the capped field. Returns `false` when unavailable.
    pub fn jacobian_capped_into(&self, x: &[f64], cap: CapRule, out: &mut [f64]) -> bool {
        let d = self.dim;
        match cap {
            CapRule::None => {
                let ok = self.jacobian_into(x, out);
                if ok && out[..d * d].iter().any(|v| !v.is_finite()) {
                    out[..d * d].fill(0.0);
                }
                ok
            }
            CapRule::Magnitude(m) => {
                if !self.jacobian_into(x, out) {
                    return false;
                }
                let b = self.eval(x);
                let mag = norm(&b);
                if !mag.is_finite() || out[..d * d].iter().any(|v| !v.is_finite()) {
                    out[..d * d].fill(0.0);
                } else if mag > m {
                    // d(m b/|b|) = (m/|b|)(I − b̂ b̂ᵀ) ∇b
                    let bh: Vec<f64> = b.iter().map(|v| v / mag).collect();
                    let jac = out[..d * d].to_vec();
                    for i in 0..d {
                        let proj: f64 = (0..d).map(|k| bh[k] * jac[k * d + i]).sum();
                        for k in 0..d {
                            out[k * d + i] = m / mag * (jac[k * d + i] - bh[k] * proj);
                        }
                    }
                }
                true
            }
            CapRule::Radius(rc) => {
                let r = norm(x);
                if r >= rc {
                    return self.jacobian_capped_into(x, CapRule::None, out);
                }
                if r == 0.0 {
                    out[..d * d].fill(0.0);
                    return self.is_differentiable();
                }
                let proj: Vec<f64> = x.iter().map(|v| v * rc / r).collect();
                let mut jac = vec![0.0; d * d];
                if !self.jacobian_into(&proj, &mut jac) {
                    return false;
                }
                // chain rule with D(rc x/|x|) = (rc/r)(I − x̂ x̂ᵀ)
                let xh: Vec<f64> = x.iter().map(|v| v / r).collect();
                for k in 0..d {
                    for i in 0..d {
                        let mut s = 0.0;
                        for j in 0..d {
                            let delta = if i == j { 1.0 } else { 0.0 };
                            s += jac[k * d + j] * (delta - xh[j] * xh[i]);
                        }
                        out[k * d + i] = rc / r * s;
                    }
                }
                true
            }
        }
    }

    /// Samples `b` (and `∇b` if `with_jacobian`) at the cell centres of
    /// `grid`. A grid-sampled drift on the same grid is copied verbatim.
    pub fn sample(&self, grid: &BoxGrid, cap: CapRule, with_jacobian: bool) -> Result<SampledDrift> {
        if grid.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: grid.dim(),
            });
        }
        let d = self.dim;
        if let DriftKind::GridSampled(g) = &self.kind {
            if g.values.grid == *grid && cap == CapRule::None {
                let jacobian = if with_jacobian {
                    Some(
                        g.jacobian
                            .clone()
                            .ok_or(Error::NotDifferentiable("grid sampling"))?,
                    )
                } else {
                    None
                };
                return Ok(SampledDrift::new(g.values.clone(), jacobian));
            }
        }
        if with_jacobian && !self.is_differentiable() {
            return Err(Error::NotDifferentiable("grid sampling"));
        }
        let mut values = VectorField::zeros(grid);
        let mut jac = if with_jacobian {
            Some(vec![vec![0.0; grid.len()]; d * d])
        } else {
            None
        };
        let mut x = vec![0.0; d];
        let mut b = vec![0.0; d];
        let mut j = vec![0.0; d * d];
        for flat in 0..grid.len() {
            grid.position_into(flat, &mut x);
            self.eval_capped_into(&x, cap, &mut b);
            for k in 0..d {
                values.components[k][flat] = b[k];
            }
            if let Some(jac) = jac.as_mut() {
                self.jacobian_capped_into(&x, cap, &mut j);
                for (c, v) in jac.iter_mut().zip(&j) {
                    c[flat] = *v;
                }
            }
        }
        Ok(SampledDrift::new(values, jac))
    }
}

/// A drift sampled on a grid for the finite-difference solvers.
#[derive(Debug, Clone)]
pub struct SampledDrift {
    pub values: VectorField,
    pub jacobian: Option<Vec<Vec<f64>>>,
    pub max_magnitude: f64,
}

impl SampledDrift {
    pub fn new(values: VectorField, jacobian: Option<Vec<Vec<f64>>>) -> Self {
        let max_magnitude = (0..values.grid.len())
            .map(|i| values.magnitude_at(i))
            .fold(0.0f64, f64::max);
        Self {
            values,
            jacobian,
            max_magnitude,
        }
    }

    /// Pointwise divergence from the Jacobian samples.
    pub fn divergence(&self) -> Option<Vec<f64>> {
        let jac = self.jacobian.as_ref()?;
        let d = self.values.grid.dim();
        let n = self.values.grid.len();
        Some(
            (0..n)
                .map(|f| (0..d).map(|k| jac[k * d + k][f]).sum())
                .collect(),
        )
    }
}

/// Volume of the unit ball in `ℝ^d`, `π^{d/2} / Γ(d/2 + 1)`.
pub fn unit_ball_volume(d: usize) -> f64 {
    std::f64::consts::PI.powf(d as f64 / 2.0) / gamma_half_integer(d + 2)
}

/// `Γ(k / 2)` for positive integer `k`.
pub(crate) fn gamma_half_integer(k: usize) -> f64 {
    assert!(k > 0);
    let (mut g, mut x) = if k % 2 == 0 {
        (1.0, 1.0)
    } else {
        (std::f64::consts::PI.sqrt(), 0.5)
    };
    while 2.0 * x < k as f64 - 0.5 {
        g *= x;
        x += 1.0;
    }
    g
}
