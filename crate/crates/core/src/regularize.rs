//! Smooth compactly supported approximations `b_m = η_m e^{ε_mΔ}(1_m b)`.
//!
//! `1_m` keeps `b` where `|x| ≤ m` and `|b(x)| ≤ m`. If the smoothing time is
//! small enough that `‖b_m − 1_m b‖_d ≤ γ_m / c_sob`, Hölder and Sobolev give
//! `‖|b_m − 1_m b|(λ−Δ)^{-1/2}‖ ≤ γ_m ≤ √γ_m` for `γ_m ≤ 1`, hence
//! `b_m ∈ F_{δ_m}` with `δ_m = (√δ + √γ_m)²`.

use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drift::{gamma_half_integer, io, make_grid_drift, DriftField};
use crate::error::{invalid, Error, Result};
use crate::grid::{BoxGrid, VectorField};
use crate::spectral::Spectral;

/// Dyadic search floor for the smoothing time.
pub const EPSILON_FLOOR: f64 = 1.0 / (1u64 << 40) as f64;

/// Sharp constant in `‖u‖_{2d/(d−2)} ≤ S_d ‖∇u‖₂`:
/// `S_d = (π d (d−2))^{-1/2} (Γ(d)/Γ(d/2))^{1/d}`.
pub fn sobolev_constant(d: usize) -> f64 {
    let df = d as f64;
    let ratio = gamma_half_integer(2 * d) / gamma_half_integer(d);
    (std::f64::consts::PI * df * (df - 2.0)).powf(-0.5) * ratio.powf(1.0 / df)
}

/// Radial cutoff: 1 on `B(0, m)`, 0 off `B(0, m+1)`, quintic smoothstep in
/// between (`|∇η| ≤ 15/8`).
pub fn cutoff(m: f64, r: f64) -> f64 {
    let s = (r - m).clamp(0.0, 1.0);
    1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

/// Samples of `1_m b`: zero where `|x| > m` or `|b(x)| > m` (including
/// infinite values).
pub fn truncate_drift(b: &DriftField, m: f64, grid: &BoxGrid) -> Result<VectorField> {
    if grid.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: b.dim(),
            got: grid.dim(),
        });
    }
    if !grid.covers_ball(m + 1.0) {
        return Err(Error::GridTooSmall(format!(
            "half-width {} does not cover B(0, {})",
            grid.half_width(),
            m + 1.0
        )));
    }
    let d = grid.dim();
    let mut out = VectorField::zeros(grid);
    let mut x = vec![0.0; d];
    let mut v = vec![0.0; d];
    for flat in 0..grid.len() {
        grid.position_into(flat, &mut x);
        if x.iter().map(|c| c * c).sum::<f64>().sqrt() > m {
            continue;
        }
        b.eval_into(&x, &mut v);
        let mag = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if mag <= m {
            for k in 0..d {
                out.components[k][flat] = v[k];
            }
        }
    }
    Ok(out)
}

/// Componentwise `e^{εΔ}` on the periodic box.
pub fn heat_smooth(field: &VectorField, eps: f64) -> Result<VectorField> {
    if !(eps > 0.0) {
        return Err(invalid("eps", format!("must be positive, got {eps}")));
    }
    Ok(Spectral::new(&field.grid).heat_vector(field, eps))
}

/// Spectra of a truncated field, reused across smoothing times.
struct TruncatedSpectrum<'a> {
    sp: Spectral,
    truncated: &'a VectorField,
    spectra: Vec<Vec<Complex64>>,
    eta: Vec<f64>,
}

impl<'a> TruncatedSpectrum<'a> {
    fn new(truncated: &'a VectorField, m: f64) -> Self {
        let grid = &truncated.grid;
        let sp = Spectral::new(grid);
        let spectra = truncated.components.iter().map(|c| sp.to_spectrum(c)).collect();
        let eta = (0..grid.len())
            .map(|f| {
                let r = grid.position(f).iter().map(|c| c * c).sum::<f64>().sqrt();
                cutoff(m, r)
            })
            .collect();
        Self {
            sp,
            truncated,
            spectra,
            eta,
        }
    }

    /// `η_m e^{εΔ}(1_m b)`.
    fn smoothed(&self, eps: f64) -> VectorField {
        let components = self
            .spectra
            .iter()
            .map(|s| {
                let mut s = s.clone();
                self.sp.multiply_radial(&mut s, |k2| (-eps * k2).exp());
                let mut c = self.sp.from_spectrum(s);
                c.par_iter_mut().zip(&self.eta).for_each(|(v, e)| *v *= e);
                c
            })
            .collect();
        VectorField {
            grid: self.truncated.grid.clone(),
            components,
        }
    }

    fn defect(&self, eps: f64) -> f64 {
        let d = self.truncated.grid.dim() as f64;
        self.smoothed(eps).sub(self.truncated).lp_norm(d)
    }
}

/// `‖η_m e^{εΔ}(1_m b) − 1_m b‖_{L^d}` on the grid of `truncated`.
pub fn ld_defect(truncated: &VectorField, m: f64, eps: f64) -> f64 {
    TruncatedSpectrum::new(truncated, m).defect(eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonChoice {
    pub epsilon: f64,
    pub defect: f64,
    pub target: f64,
}

/// Largest `ε = 2^{-k}`, `k = 0, 1, …`, with `L^d` defect at most
/// `γ_m / c_sob`.
pub fn choose_epsilon(
    b: &DriftField,
    m: f64,
    gamma_m: f64,
    c_sob: f64,
    grid: &BoxGrid,
) -> Result<EpsilonChoice> {
    let truncated = truncate_drift(b, m, grid)?;
    choose_epsilon_truncated(&truncated, m, gamma_m, c_sob)
}

fn choose_epsilon_truncated(
    truncated: &VectorField,
    m: f64,
    gamma_m: f64,
    c_sob: f64,
) -> Result<EpsilonChoice> {
    if !(gamma_m > 0.0) {
        return Err(invalid("gamma_m", format!("must be positive, got {gamma_m}")));
    }
    if !(c_sob > 0.0) {
        return Err(invalid("c_sob", format!("must be positive, got {c_sob}")));
    }
    let target = gamma_m / c_sob;
    let ts = TruncatedSpectrum::new(truncated, m);
    let mut best = f64::INFINITY;
    let mut eps = 1.0;
    while eps >= EPSILON_FLOOR {
        let defect = ts.defect(eps);
        if defect <= target {
            return Ok(EpsilonChoice {
                epsilon: eps,
                defect,
                target,
            });
        }
        best = best.min(defect);
        eps *= 0.5;
    }
    Err(Error::EpsilonSearch {
        floor: EPSILON_FLOOR,
        achieved: best,
        target,
    })
}

/// Metadata stored next to a mollified drift file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MollifiedMeta {
    pub m: usize,
    pub epsilon_m: f64,
    pub gamma_m: f64,
    pub delta_m: f64,
    pub delta: f64,
    pub c_sob: f64,
    pub ld_defect: f64,
    pub ball_radius: f64,
    /// `‖b_m − b‖_{L²(B(0, ball_radius))}` on the grid.
    pub l2_distance: f64,
}

#[derive(Debug, Clone)]
pub struct MollifiedDrift {
    pub meta: MollifiedMeta,
    pub values: VectorField,
    pub jacobian: Vec<Vec<f64>>,
    pub field: DriftField,
}

impl MollifiedDrift {
    pub fn cutoff_radius(&self) -> f64 {
        self.meta.m as f64
    }

    /// Writes `<stem>.fbg` (samples with Jacobian) and `<stem>.json`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        io::write_grid_binary(&dir.join(format!("{stem}.fbg")), &self.values, Some(&self.jacobian))?;
        let json = serde_json::to_string_pretty(&self.meta)?;
        std::fs::write(dir.join(format!("{stem}.json")), json + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let (values, jac) = io::read_grid_binary(&dir.join(format!("{stem}.fbg")))?;
        let jacobian = jac.ok_or_else(|| Error::Format(format!("{stem}.fbg has no Jacobian")))?;
        let meta: MollifiedMeta =
            serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        let field = make_grid_drift(values.clone(), Some(jacobian.clone()))?;
        Ok(Self {
            meta,
            values,
            jacobian,
            field,
        })
    }
}

/// Sub-cell points per axis in [`l2_distance_on_ball`].
pub const BALL_QUADRATURE_SUBDIVISIONS: usize = 4;

/// `‖a − b‖_{L²(B(0, R))}` by midpoint quadrature on cells refined
/// [`BALL_QUADRATURE_SUBDIVISIONS`] times per axis, with `a` interpolated
/// and `b` evaluated exactly, so that the truncation radius of `1_m b` is
/// resolved below the grid spacing.
pub fn l2_distance_on_ball(values: &VectorField, b: &DriftField, radius: f64) -> f64 {
    let grid = &values.grid;
    let d = grid.dim();
    let h = grid.spacing();
    let s = BALL_QUADRATURE_SUBDIVISIONS;
    let reach = radius + h * (d as f64).sqrt();
    let sub = s.pow(d as u32);
    let per_cell: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|flat| {
            let mut c = vec![0.0; d];
            grid.position_into(flat, &mut c);
            if c.iter().map(|v| v * v).sum::<f64>() > reach * reach {
                return 0.0;
            }
            let mut x = vec![0.0; d];
            let mut v = vec![0.0; d];
            let mut acc = 0.0;
            for j in 0..sub {
                let mut rem = j;
                for k in 0..d {
                    let i = rem % s;
                    rem /= s;
                    x[k] = c[k] + h * ((i as f64 + 0.5) / s as f64 - 0.5);
                }
                if x.iter().map(|v| v * v).sum::<f64>() > radius * radius {
                    continue;
                }
                b.eval_into(&x, &mut v);
                acc += (0..d)
                    .map(|k| (grid.interpolate(&values.components[k], &x) - v[k]).powi(2))
                    .sum::<f64>();
            }
            acc
        })
        .collect();
    // Sequential sum keeps the value independent of the worker count.
    let total: f64 = per_cell.iter().sum();
    (total * grid.cell_volume() / sub as f64).sqrt()
}

/// One mollified drift `b_m` on `grid`.
pub fn mollify(
    b: &DriftField,
    delta: f64,
    m: usize,
    gamma_m: f64,
    c_sob: f64,
    grid: &BoxGrid,
    ball_radius: f64,
) -> Result<MollifiedDrift> {
    if !(gamma_m > 0.0 && gamma_m <= 1.0) {
        return Err(invalid("gamma_m", format!("must lie in (0, 1], got {gamma_m}")));
    }
    if !(delta >= 0.0) {
        return Err(invalid("delta", format!("must be >= 0, got {delta}")));
    }
    let mf = m as f64;
    let truncated = truncate_drift(b, mf, grid)?;
    let choice = choose_epsilon_truncated(&truncated, mf, gamma_m, c_sob)?;
    let values = TruncatedSpectrum::new(&truncated, mf).smoothed(choice.epsilon);
    let jacobian = Spectral::new(grid).jacobian(&values);
    let l2_distance = l2_distance_on_ball(&values, b, ball_radius);
    let field = make_grid_drift(values.clone(), Some(jacobian.clone()))?;
    let s = delta.sqrt() + gamma_m.sqrt();
    Ok(MollifiedDrift {
        meta: MollifiedMeta {
            m,
            epsilon_m: choice.epsilon,
            gamma_m,
            delta_m: s * s,
            delta,
            c_sob,
            ld_defect: choice.defect,
            ball_radius,
            l2_distance,
        },
        values,
        jacobian,
        field,
    })
}

/// `b_1, …, b_M` for a strictly decreasing schedule `γ_1 > … > γ_M` in `(0, 1]`.
pub fn build_mollified_sequence(
    b: &DriftField,
    delta: f64,
    schedule: &[f64],
    c_sob: f64,
    grid: &BoxGrid,
    ball_radius: f64,
) -> Result<Vec<MollifiedDrift>> {
    if schedule.is_empty() {
        return Err(invalid("schedule", "empty"));
    }
    if schedule.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("schedule", "must be strictly decreasing"));
    }
    schedule
        .iter()
        .enumerate()
        .map(|(i, &g)| mollify(b, delta, i + 1, g, c_sob, grid, ball_radius))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{make_affine_drift, make_hardy_drift, make_zero_drift};

    #[test]
    fn sobolev_constant_in_three_dimensions() {
        // (3π)^{-1/2} (Γ(3)/Γ(3/2))^{1/3} = (3π)^{-1/2} (4/√π)^{1/3}
        let exact = (3.0 * std::f64::consts::PI).powf(-0.5)
            * (4.0 / std::f64::consts::PI.sqrt()).powf(1.0 / 3.0);
        assert!((sobolev_constant(3) - exact).abs() < 1e-14);
        assert!((sobolev_constant(3) - 0.4272).abs() < 1e-4);
    }

    #[test]
    fn cutoff_profile() {
        assert_eq!(cutoff(2.0, 1.5), 1.0);
        assert_eq!(cutoff(2.0, 2.0), 1.0);
        assert_eq!(cutoff(2.0, 3.0), 0.0);
        assert_eq!(cutoff(2.0, 3.5), 0.0);
        assert!((cutoff(2.0, 2.5) - 0.5).abs() < 1e-15);
        let h = 1e-6;
        let max_slope = (0..=1000)
            .map(|k| 2.0 + k as f64 / 1000.0)
            .map(|r| ((cutoff(2.0, r + h) - cutoff(2.0, r - h)) / (2.0 * h)).abs())
            .fold(0.0, f64::max);
        assert!(max_slope <= 2.0 && (max_slope - 1.875).abs() < 1e-6);
    }

    #[test]
    fn truncation_of_hardy_drift() {
        let g = BoxGrid::new(3, 3.0, 32).unwrap();
        let b = make_hardy_drift(3, 1.0, 1).unwrap();
        let t = truncate_drift(&b, 2.0, &g).unwrap();
        for flat in 0..g.len() {
            let r = g.position(flat).iter().map(|c| c * c).sum::<f64>().sqrt();
            let mag = t.magnitude_at(flat);
            if r < 0.5 || r > 2.0 {
                assert_eq!(mag, 0.0);
            } else {
                assert!((mag - 1.0 / r).abs() < 1e-12);
            }
        }
        assert!(matches!(truncate_drift(&b, 3.0, &g), Err(Error::GridTooSmall(_))));
    }

    #[test]
    fn truncation_keeps_bounded_compact_fields() {
        let g = BoxGrid::new(3, 4.0, 16).unwrap();
        let b = make_affine_drift(vec![0.1, 0.0, 0.0, 0.0, 0.2, 0.0, 0.0, 0.0, 0.3], vec![0.0; 3])
            .unwrap();
        let t = truncate_drift(&b, 3.0, &g).unwrap();
        for flat in 0..g.len() {
            let x = g.position(flat);
            let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
            if r <= 3.0 {
                assert!((t.components[2][flat] - 0.3 * x[2]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn heat_smoothing_limits() {
        let g = BoxGrid::new(3, std::f64::consts::PI, 16).unwrap();
        let mut v = VectorField::zeros(&g);
        v.components[0].iter_mut().for_each(|c| *c = 2.5);
        let s = heat_smooth(&v, 0.3).unwrap();
        assert!(s.components[0].iter().all(|c| (c - 2.5).abs() < 1e-12));
        for (k, comp) in v.components[1].iter_mut().enumerate() {
            *comp = g.position(k)[0].sin();
        }
        let mut prev = f64::INFINITY;
        for eps in [1e-2, 1e-3, 1e-4] {
            let diff = heat_smooth(&v, eps).unwrap().sub(&v).lp_norm(2.0);
            assert!(diff <= 1.01 * eps * v.lp_norm(2.0));
            assert!(diff < prev);
            prev = diff;
        }
        assert!(heat_smooth(&v, 0.0).is_err());
    }

    #[test]
    fn heat_spreads_a_spike_with_variance_two_eps_d() {
        let g = BoxGrid::new(3, 4.0, 64).unwrap();
        let mut v = VectorField::zeros(&g);
        // mass on the 8 cells around the origin
        for flat in 0..g.len() {
            if g.position(flat).iter().all(|c| c.abs() < g.spacing()) {
                v.components[0][flat] = 1.0;
            }
        }
        let eps = 0.2;
        let s = heat_smooth(&v, eps).unwrap();
        let mass = g.integrate(&s.components[0]);
        let m2: f64 = (0..g.len())
            .map(|f| s.components[0][f] * g.position(f).iter().map(|c| c * c).sum::<f64>())
            .sum::<f64>()
            * g.cell_volume()
            / mass;
        let initial = 3.0 * (g.spacing() / 2.0).powi(2);
        assert!((m2 - initial - 2.0 * eps * 3.0).abs() < 1e-3, "{m2}");
    }

    #[test]
    fn epsilon_search_ceiling_and_trend() {
        let g = BoxGrid::new(3, 4.0, 32).unwrap();
        let b = make_affine_drift(vec![0.0; 9], vec![0.3, 0.0, 0.0]).unwrap();
        let c = choose_epsilon(&b, 2.0, 1e6, sobolev_constant(3), &g).unwrap();
        assert_eq!(c.epsilon, 1.0);
        let t = truncate_drift(&b, 2.0, &g).unwrap();
        let defects: Vec<f64> = (0..8).map(|k| ld_defect(&t, 2.0, 0.5f64.powi(k))).collect();
        assert!(defects.windows(2).all(|w| w[1] < w[0]), "{defects:?}");
        let c = choose_epsilon(&b, 2.0, 0.05, sobolev_constant(3), &g).unwrap();
        assert!(c.defect <= c.target && c.epsilon < 1.0);
        assert!(ld_defect(&t, 2.0, 2.0 * c.epsilon) > c.target);
    }

    #[test]
    fn zero_drift_sequence() {
        let g = BoxGrid::new(3, 4.0, 16).unwrap();
        let b = make_zero_drift(3).unwrap();
        let seq = build_mollified_sequence(&b, 0.0, &[0.25, 0.0625], 0.4, &g, 1.0).unwrap();
        for bm in &seq {
            assert!(bm.values.components.iter().flatten().all(|v| *v == 0.0));
            assert!((bm.meta.delta_m - bm.meta.gamma_m).abs() < 1e-15);
        }
        assert!(build_mollified_sequence(&b, 0.0, &[0.1, 0.2], 0.4, &g, 1.0).is_err());
    }

    #[test]
    fn support_is_inside_the_cutoff_ball() {
        let g = BoxGrid::new(3, 4.0, 32).unwrap();
        let b = make_hardy_drift(3, 0.5, 1).unwrap();
        let bm = mollify(&b, 1.0, 2, 0.25, sobolev_constant(3), &g, 1.0).unwrap();
        for flat in 0..g.len() {
            let r = g.position(flat).iter().map(|c| c * c).sum::<f64>().sqrt();
            if r >= 3.0 {
                assert_eq!(bm.values.magnitude_at(flat), 0.0);
            }
        }
        assert!((bm.meta.delta_m - 2.25).abs() < 1e-14);
    }

    #[test]
    fn save_and_load_round_trip() {
        let g = BoxGrid::new(3, 3.0, 8).unwrap();
        let b = make_hardy_drift(3, 0.3, 1).unwrap();
        let bm = mollify(&b, 0.36, 1, 0.5, sobolev_constant(3), &g, 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        bm.save(dir.path(), "b_1").unwrap();
        let back = MollifiedDrift::load(dir.path(), "b_1").unwrap();
        assert_eq!(back.meta, bm.meta);
        assert_eq!(back.values, bm.values);
    }
}
