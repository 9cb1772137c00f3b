//! Property tests for certificates and weights.

use formbound_core::drift::{
    certificate_sum, estimate_form_bound_numeric, hardy_certificate, make_hardy_drift,
    strichartz_certificate, unit_ball_volume, CertificateMethod, FormBoundCertificate,
};
use formbound_core::weights::{grad_rho_into, rho, rho_total_mass, weighted_inner, weighted_lp_norm};
use formbound_core::{BoxGrid, WeightParams};
use proptest::prelude::*;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn scaling_multiplies_delta_by_c_squared(beta in 1e-3f64..2.0, c in 0.05f64..20.0, d in 3usize..7) {
        let base = hardy_certificate(d, beta).unwrap();
        let scaled = hardy_certificate(d, c * beta).unwrap();
        prop_assert!(close(scaled.delta, c * c * base.delta, 1e-12));
        prop_assert!(close(base.scaled(c).delta, scaled.delta, 1e-12));
        let w = beta * unit_ball_volume(d).powf(1.0 / d as f64);
        let s1 = strichartz_certificate(d, w).unwrap();
        let s2 = strichartz_certificate(d, c * w).unwrap();
        prop_assert!(close(s2.delta, c * c * s1.delta, 1e-12));
    }

    #[test]
    fn sum_with_zero_preserves_delta(beta in 1e-3f64..2.0, d in 3usize..7) {
        let h = hardy_certificate(d, beta).unwrap();
        let zero = FormBoundCertificate::new(0.0, 0.0, 0.0, CertificateMethod::HardyAnalytic).unwrap();
        let s = certificate_sum(&h, &zero);
        prop_assert!(close(s.delta, h.delta, 1e-15));
        prop_assert_eq!(s.c_delta, h.c_delta);
    }

    #[test]
    fn weight_gradient_is_bounded_pointwise(
        kappa in 1e-6f64..10.0,
        theta in 1.51f64..6.0,
        x in prop::collection::vec(-1e3f64..1e3, 3),
    ) {
        let p = WeightParams::new(kappa, theta, 3).unwrap();
        let mut g = vec![0.0; 3];
        grad_rho_into(&p, &x, &mut g);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(norm <= theta * kappa.sqrt() * rho(&p, &x) * (1.0 + 1e-12));
    }

    #[test]
    fn total_weight_decreases_in_theta(kappa in 1e-3f64..10.0, theta in 1.6f64..5.0, step in 0.1f64..2.0) {
        let a = rho_total_mass(&WeightParams::new(kappa, theta, 3).unwrap(), 20_000);
        let b = rho_total_mass(&WeightParams::new(kappa, theta + step, 3).unwrap(), 20_000);
        let c = rho_total_mass(&WeightParams::new(kappa, theta + 2.0 * step, 3).unwrap(), 20_000);
        prop_assert!(a.is_finite() && a > b && b > c);
    }

    #[test]
    fn weighted_cauchy_schwarz(
        f in prop::collection::vec(-5.0f64..5.0, 512),
        g in prop::collection::vec(-5.0f64..5.0, 512),
        kappa in 1e-3f64..1.0,
    ) {
        let grid = BoxGrid::new(3, 2.0, 8).unwrap();
        let p = WeightParams::new(kappa, 2.0, 3).unwrap();
        let lhs = weighted_inner(&f, &g, &p, &grid).powi(2);
        let rhs = weighted_lp_norm(&f, 2.0, &p, &grid).powi(2) * weighted_lp_norm(&g, 2.0, &p, &grid).powi(2);
        prop_assert!(lhs <= rhs * (1.0 + 1e-12));
    }
}

#[test]
fn numeric_form_bound_is_quadratic_in_the_drift() {
    let grid = BoxGrid::new(3, 4.0, 32).unwrap();
    let one = estimate_form_bound_numeric(&make_hardy_drift(3, 0.2, 1).unwrap(), 1.0, &grid, 200).unwrap();
    let two = estimate_form_bound_numeric(&make_hardy_drift(3, 0.4, 1).unwrap(), 1.0, &grid, 200).unwrap();
    let ratio = two.delta_est / one.delta_est;
    assert!((ratio - 4.0).abs() < 0.04, "ratio {ratio}");
}
