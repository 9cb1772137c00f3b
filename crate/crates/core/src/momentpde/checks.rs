use super::solver::{MomentKind, MomentSeries};
use super::thresholds::{dual_weight_bracket, ThresholdSet};
use crate::error::{invalid, Error, Result};
use crate::grid::ScalarField;
use crate::report::{CheckReport, CheckTag};
use crate::weights::{rho_samples, WeightParams};

fn expect_kind(series: &MomentSeries, kind: MomentKind) -> Result<()> {
    if series.kind != kind {
        return Err(invalid("series", format!("expected a {kind:?} series, got {:?}", series.kind)));
    }
    Ok(())
}

/// Trapezoidal `∫ g dt` over the recorded times.
fn time_integral(series: &MomentSeries, g: impl Fn(usize) -> f64) -> f64 {
    series
        .records
        .windows(2)
        .enumerate()
        .map(|(k, w)| 0.5 * (w[1].t - w[0].t) * (g(k) + g(k + 1)))
        .sum()
}

/// Largest `lhs(t)/bound − 1` over `t > 0`.
fn excess_after_start(values: impl Iterator<Item = f64>, bound: f64) -> f64 {
    let m = values.skip(1).fold(f64::NEG_INFINITY, f64::max);
    if bound > 0.0 {
        m / bound - 1.0
    } else {
        0.0
    }
}

/// Conditions under which the second-moment bound holds with constant one.
pub fn e1_gate(th: &ThresholdSet, p: f64, mu: f64) -> Result<()> {
    let sd = th.delta.sqrt();
    let s2 = th.sigma * th.sigma;
    if (th.p - p).abs() > 1e-12 {
        return Err(invalid("p", format!("thresholds were computed for p = {}, not {p}", th.p)));
    }
    if !(sd < s2) {
        return Err(Error::Gate(format!("√δ = {sd} is not below σ² = {s2}")));
    }
    if !(p > th.p_c) {
        return Err(Error::Gate(format!("p = {p} is not above p_c = {}", th.p_c)));
    }
    if mu < th.mu_e1 {
        return Err(Error::Gate(format!("μ = {mu} is below μ_E1 = {}", th.mu_e1)));
    }
    Ok(())
}

/// Conditions of the `q = 1` gradient-moment bound.
pub fn gradient_gate(th: &ThresholdSet, mu: f64) -> Result<()> {
    if th.q != 1 {
        return Err(Error::Unsupported(format!("gradient moments for q = {}", th.q)));
    }
    if !th.admissible_gradient || th.kappa_star <= 0.0 {
        return Err(Error::Gate(format!(
            "√δ = {} is not below σ²/(2β_2q) = {} (ϰ_* = {})",
            th.delta.sqrt(),
            th.sigma * th.sigma / (2.0 * th.beta_2q),
            th.kappa_star
        )));
    }
    if mu < th.c_hat {
        return Err(Error::Gate(format!("μ = {mu} is below ĉ = {}", th.c_hat)));
    }
    Ok(())
}

/// Conditions of the weighted dual bound; returns the positivity bracket.
pub fn dual_gate(th: &ThresholdSet, mu: f64, params: &WeightParams) -> Result<f64> {
    let sd = th.delta.sqrt();
    if !th.admissible_dual {
        return Err(Error::Gate(format!(
            "√δ = {sd} is not below σ²/6 = {}",
            th.sigma * th.sigma / 6.0
        )));
    }
    if mu < th.mu_dual {
        return Err(Error::Gate(format!("μ = {mu} is below μ_dual = {}", th.mu_dual)));
    }
    let bracket = dual_weight_bracket(th.delta, th.sigma, params.kappa, params.theta);
    if !(bracket > 0.0) {
        return Err(Error::Gate(format!(
            "weighted bracket σ²/2(1−θ√κ)² − 3√δ − 3.5θ√κ δ = {bracket} is not positive (κ too large)"
        )));
    }
    Ok(bracket)
}

/// `sup_t ‖v(t)‖_p ≤ ‖f‖²_{2p}` with constant 1, plus the dissipation
/// integral `∫ ‖∇v_p‖₂² dt`.
pub fn check_e1(
    series: &MomentSeries,
    p: f64,
    f: &ScalarField,
    th: &ThresholdSet,
    tolerance: f64,
) -> Result<CheckReport> {
    expect_kind(series, MomentKind::SecondMoment)?;
    e1_gate(th, p, series.config.mu)?;
    let k = series
        .lp_index(p)
        .ok_or_else(|| Error::MissingDiagnostic(format!("‖v‖_{p} was not recorded")))?;
    let lhs = series.records.iter().map(|r| r.lp[k]).fold(0.0, f64::max);
    let bound = f.lp_norm(2.0 * p).powi(2);
    let dissipation = time_integral(series, |i| series.records[i].dissipation[k]);
    let fp = f.lp_norm(2.0 * p);
    Ok(CheckReport::inequality("E1 second-moment bound", CheckTag::E1, lhs, bound, 1.0, tolerance)
        .with_detail("p", p)
        .with_detail("p_c", th.p_c)
        .with_detail("mu", series.config.mu)
        .with_detail("mu_E1", th.mu_e1)
        .with_detail(
            "excess_after_start",
            excess_after_start(series.records.iter().map(|r| r.lp[k]), bound),
        )
        .with_detail("dissipation_integral", dissipation)
        .with_detail("implied_C1", dissipation / fp.powf(p))
        .with_detail("implied_C1_homogeneous", dissipation / fp.powf(2.0 * p))
        .with_detail("max_boundary_fraction", series.max_boundary_fraction())
        .with_detail("min_before_clip", series.min_before_clip()))
}

/// `sup_t Σ_I ⟨V_I(t)²⟩ ≤ Σ_I ⟨V_I(0)²⟩` for `q = 1`.
pub fn check_gradient_bound(series: &MomentSeries, th: &ThresholdSet, tolerance: f64) -> Result<CheckReport> {
    expect_kind(series, MomentKind::GradientQ1)?;
    gradient_gate(th, series.config.mu)?;
    let bound = series.records[0].sum_sq;
    let lhs = series.records.iter().map(|r| r.sum_sq).fold(0.0, f64::max);
    let dissipation = time_integral(series, |i| series.records[i].dissipation[0]);
    Ok(CheckReport::inequality("gradient-moment energy bound", CheckTag::GradL2, lhs, bound, 1.0, tolerance)
        .with_detail("kappa_star", th.kappa_star)
        .with_detail("c_hat", th.c_hat)
        .with_detail("mu", series.config.mu)
        .with_detail(
            "excess_after_start",
            excess_after_start(series.records.iter().map(|r| r.sum_sq), bound),
        )
        .with_detail("dissipation_integral", dissipation)
        .with_detail("implied_constant", if bound > 0.0 { dissipation / bound } else { 0.0 })
        .with_detail("max_boundary_fraction", series.max_boundary_fraction()))
}

/// `sup_t ‖ρ^{-1} w(t)‖₂ ≤ ‖ρ^{-1} v₀‖₄²`.
pub fn check_dual_weighted_bound(
    series: &MomentSeries,
    v0: &ScalarField,
    params: &WeightParams,
    th: &ThresholdSet,
    tolerance: f64,
) -> Result<CheckReport> {
    expect_kind(series, MomentKind::Dual)?;
    let bracket = dual_gate(th, series.config.mu, params)?;
    let k = series
        .weight_index(params)
        .ok_or_else(|| Error::MissingDiagnostic("‖ρ^{-1}w‖₂ for this weight was not recorded".into()))?;
    let lhs = series.records.iter().map(|r| r.weighted[k]).fold(0.0, f64::max);
    let inv: Vec<f64> = {
        let rho = rho_samples(params, &v0.grid);
        v0.data.iter().zip(&rho).map(|(v, r)| v / r).collect()
    };
    let bound = ScalarField {
        grid: v0.grid.clone(),
        data: inv,
    }
    .lp_norm(4.0)
    .powi(2);
    Ok(CheckReport::inequality("dual weighted bound", CheckTag::Dual, lhs, bound, 1.0, tolerance)
        .with_detail("kappa", params.kappa)
        .with_detail("theta", params.theta)
        .with_detail("weight_bracket", bracket)
        .with_detail("mu", series.config.mu)
        .with_detail("mu_dual", th.mu_dual)
        .with_detail(
            "excess_after_start",
            excess_after_start(series.records.iter().map(|r| r.weighted[k]), bound),
        )
        .with_detail("max_boundary_fraction", series.max_boundary_fraction()))
}
