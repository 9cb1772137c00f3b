use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Explicit constants and admissibility gates of the moment estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub d: usize,
    pub q: usize,
    pub p: f64,
    pub delta: f64,
    pub c_delta: f64,
    pub sigma: f64,
    /// `1 + 4qd`.
    pub beta_2q: f64,
    /// `(1 − √δ/σ²)^{-1}`; infinite when `√δ ≥ σ²`.
    pub p_c: f64,
    /// `c_δ / (4√δ p)`.
    pub mu_e1: f64,
    /// `2qd c_δ/√δ + c_δ/(2√δ)`.
    pub c_hat: f64,
    /// `3c_δ / (4√δ)`.
    pub mu_dual: f64,
    /// `σ²/2 − β_{2q}√δ`.
    pub kappa_star: f64,
    /// `δ = 0`: the μ-thresholds are set to 0, no lower-order term is needed.
    pub delta_zero: bool,
    /// `√δ < σ²` and `p > p_c`.
    pub admissible_e1: bool,
    /// `√δ < σ²/(2β_{2q})`.
    pub admissible_gradient: bool,
    /// `√δ < σ²/6`.
    pub admissible_dual: bool,
}

pub fn thresholds(d: usize, q: usize, p: f64, delta: f64, c_delta: f64, sigma: f64) -> Result<ThresholdSet> {
    if !(sigma > 0.0) {
        return Err(invalid("sigma", format!("must be positive, got {sigma}")));
    }
    if !(delta >= 0.0 && c_delta >= 0.0) {
        return Err(invalid("delta", "δ and c_δ must be >= 0"));
    }
    if q == 0 {
        return Err(invalid("q", "must be >= 1"));
    }
    let s2 = sigma * sigma;
    let sd = delta.sqrt();
    let beta_2q = 1.0 + 4.0 * q as f64 * d as f64;
    let p_c = if sd < s2 {
        1.0 / (1.0 - sd / s2)
    } else {
        f64::INFINITY
    };
    let delta_zero = delta == 0.0;
    let (mu_e1, c_hat, mu_dual) = if delta_zero {
        (0.0, 0.0, 0.0)
    } else {
        (
            c_delta / (4.0 * sd * p),
            2.0 * q as f64 * d as f64 * c_delta / sd + c_delta / (2.0 * sd),
            3.0 * c_delta / (4.0 * sd),
        )
    };
    Ok(ThresholdSet {
        d,
        q,
        p,
        delta,
        c_delta,
        sigma,
        beta_2q,
        p_c,
        mu_e1,
        c_hat,
        mu_dual,
        kappa_star: s2 / 2.0 - beta_2q * sd,
        delta_zero,
        admissible_e1: sd < s2 && p > p_c,
        admissible_gradient: sd < s2 / (2.0 * beta_2q),
        admissible_dual: sd < s2 / 6.0,
    })
}

/// Positivity bracket of the weighted dual estimate with `k = θ√κ` at
/// `γ = 1/(2√δ)`: `σ²/2 (1−k)² − 3√δ − 3.5 k δ`. Reduces to the unweighted
/// `σ²/2 − 3√δ` at `k = 0`.
pub fn dual_weight_bracket(delta: f64, sigma: f64, kappa: f64, theta: f64) -> f64 {
    let k = theta * kappa.sqrt();
    sigma * sigma / 2.0 * (1.0 - k).powi(2) - 3.0 * delta.sqrt() - 3.5 * k * delta
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_two_in_three_dimensions() {
        let t = thresholds(3, 1, 2.0, 0.01, 0.0, 2f64.sqrt()).unwrap();
        assert_eq!(t.beta_2q, 13.0);
    }

    #[test]
    fn critical_exponent_limits() {
        let s = 2f64.sqrt();
        let t = thresholds(3, 1, 2.0, 1e-30, 0.0, s).unwrap();
        assert!((t.p_c - 1.0).abs() < 1e-12);
        // √δ = σ²/2 = 1
        let t = thresholds(3, 1, 3.0, 1.0, 0.0, s).unwrap();
        assert!((t.p_c - 2.0).abs() < 1e-14);
        assert!(t.admissible_e1);
        let t = thresholds(3, 1, 1.5, 1.0, 0.0, s).unwrap();
        assert!(!t.admissible_e1);
        let t = thresholds(3, 1, 2.0, 4.5, 0.0, s).unwrap();
        assert!(t.p_c.is_infinite() && !t.admissible_e1);
    }

    #[test]
    fn mu_thresholds() {
        let t = thresholds(3, 1, 2.0, 0.04, 0.4, 1.0).unwrap();
        assert!((t.mu_e1 - 0.4 / (4.0 * 0.2 * 2.0)).abs() < 1e-15);
        assert!((t.c_hat - (6.0 * 0.4 / 0.2 + 0.4 / 0.4)).abs() < 1e-14);
        assert!((t.mu_dual - 3.0 * 0.4 / 0.8).abs() < 1e-15);
        let t = thresholds(3, 1, 2.0, 0.0, 0.4, 1.0).unwrap();
        assert!(t.delta_zero && t.mu_e1 == 0.0 && t.c_hat == 0.0 && t.mu_dual == 0.0);
    }

    #[test]
    fn gates() {
        let s = 2f64.sqrt();
        let t = thresholds(3, 1, 2.0, 0.002, 0.0, s).unwrap();
        assert!(t.admissible_gradient && t.kappa_star > 0.0);
        let t = thresholds(3, 1, 2.0, 0.01, 0.0, s).unwrap();
        assert!(!t.admissible_gradient && t.kappa_star < 0.0);
        assert!(t.admissible_dual);
        assert!(dual_weight_bracket(0.01 * 4.0 / 36.0, s, 1e-4, 2.0) > 0.0);
        assert!((dual_weight_bracket(0.04, s, 0.0, 2.0) - (1.0 - 0.6)).abs() < 1e-15);
    }
}
