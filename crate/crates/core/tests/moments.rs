use formbound_core::drift::{hardy_certificate, make_hardy_drift, make_zero_drift};
use formbound_core::initial::InitialProfile;
use formbound_core::momentpde::{
    check_e1, solve_dual_continuity_moment, solve_gradient_moment_system_q1, solve_second_moment, thresholds,
    Diagnostics, SolverConfig,
};
use formbound_core::regularize::{mollify, sobolev_constant};
use formbound_core::{BoxGrid, DriftField, ScalarField};
use proptest::prelude::*;

const SIGMA: f64 = std::f64::consts::SQRT_2;

fn bump(amplitude: f64) -> InitialProfile {
    InitialProfile::gaussian(amplitude, 0.6, Some(vec![0.3, 0.0, -0.2])).unwrap()
}

fn mollified_hardy(beta: f64, grid: &BoxGrid) -> (DriftField, f64) {
    let delta = hardy_certificate(3, beta).unwrap().delta;
    let m = mollify(&make_hardy_drift(3, beta, 1).unwrap(), delta, 2, 1e-3, sobolev_constant(3), grid, 1.0).unwrap();
    (m.field, m.meta.delta_m)
}

fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

#[test]
fn zero_drift_solvers_follow_the_heat_kernel() {
    let grid = BoxGrid::new(3, 4.0, 64).unwrap();
    let f = bump(1.0);
    let b = make_zero_drift(3).unwrap();
    let t = 0.2;
    let cfg = SolverConfig::new(SIGMA, 0.0, 0.02, t);
    let diag = Diagnostics::default();
    let exact = ScalarField::from_fn(&grid, |x| f.heat_of_square(x, SIGMA, t));

    let v = solve_second_moment(&b, &f.sample(&grid), &cfg, &diag).unwrap();
    assert!(relative_l2(&v.final_state[0], &exact.data) < 0.01);
    let w = solve_dual_continuity_moment(&b, &f.sample(&grid), &cfg, &diag).unwrap();
    assert!(relative_l2(&w.final_state[0], &exact.data) < 0.01);

    let vv = solve_gradient_moment_system_q1(&b, &f.gradient_outer(&grid), &cfg, &diag).unwrap();
    let fin = vv.final_matrix();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..3 {
        for j in 0..3 {
            let e = ScalarField::from_fn(&grid, |x| f.heat_of_gradient_outer(x, SIGMA, t, i, j));
            num += fin.entry(i, j).iter().zip(&e.data).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            den += e.data.iter().map(|b| b * b).sum::<f64>();
        }
    }
    let err = (num / den).sqrt();
    assert!(err < 0.01, "V relative L² error {err}");
}

#[test]
fn second_moment_stays_nonnegative_before_clipping() {
    let grid = BoxGrid::new(3, 4.0, 64).unwrap();
    let (b, _) = mollified_hardy(0.1, &grid);
    let cfg = SolverConfig::new(SIGMA, 0.0, 1e-3, 0.05);
    let s = solve_second_moment(&b, &bump(1.0).sample(&grid), &cfg, &Diagnostics::default()).unwrap();
    for r in &s.records {
        assert!(r.min_before_clip >= -1e-12, "step {}: {}", r.step, r.min_before_clip);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn moments_are_homogeneous_of_degree_two(c in 0.1f64..10.0) {
        let grid = BoxGrid::new(3, 4.0, 16).unwrap();
        let (b, delta_m) = mollified_hardy(0.1, &grid);
        let cfg = SolverConfig::new(SIGMA, 0.0, 0.01, 0.05);
        let diag = Diagnostics { lp: vec![2.0], ..Default::default() };
        let f1 = bump(1.0);
        let fc = bump(c);

        let v1 = solve_second_moment(&b, &f1.sample(&grid), &cfg, &diag).unwrap();
        let vc = solve_second_moment(&b, &fc.sample(&grid), &cfg, &diag).unwrap();
        for (a, b) in v1.final_state[0].iter().zip(&vc.final_state[0]) {
            prop_assert!((c * c * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        let th = thresholds(3, 1, 2.0, delta_m, 0.0, SIGMA).unwrap();
        let r1 = check_e1(&v1, 2.0, &f1.sample(&grid), &th, 0.02).unwrap();
        let rc = check_e1(&vc, 2.0, &fc.sample(&grid), &th, 0.02).unwrap();
        prop_assert_eq!(r1.passed, rc.passed);
        prop_assert!((r1.margin - rc.margin).abs() < 1e-10);

        let g1 = solve_gradient_moment_system_q1(&b, &f1.gradient_outer(&grid), &cfg, &Diagnostics::default()).unwrap();
        let gc = solve_gradient_moment_system_q1(&b, &fc.gradient_outer(&grid), &cfg, &Diagnostics::default()).unwrap();
        for (s1, sc) in g1.final_state.iter().zip(&gc.final_state) {
            for (a, b) in s1.iter().zip(sc) {
                prop_assert!((c * c * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }
}
