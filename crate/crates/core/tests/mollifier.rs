use formbound_core::drift::{make_affine_drift, make_annulus_log_drift, make_hardy_drift};
use formbound_core::regularize::{
    build_mollified_sequence, choose_epsilon, ld_defect, mollify, sobolev_constant, truncate_drift,
};
use formbound_core::BoxGrid;

#[test]
fn epsilon_choice_survives_grid_refinement() {
    // Only an ε the coarse grid resolves (ε ≥ h²) can be re-measured
    // consistently; below that the truncation jump is invisible to it.
    let b = make_hardy_drift(3, 0.5, 1).unwrap();
    let coarse = BoxGrid::new(3, 4.0, 64).unwrap();
    let fine = BoxGrid::new(3, 4.0, 128).unwrap();
    let choice = choose_epsilon(&b, 2.0, 0.25, sobolev_constant(3), &coarse).unwrap();
    assert!(choice.epsilon >= coarse.spacing().powi(2), "{}", choice.epsilon);
    let remeasured = ld_defect(&truncate_drift(&b, 2.0, &fine).unwrap(), 2.0, choice.epsilon);
    assert!(remeasured <= 1.1 * choice.target, "{remeasured} vs target {}", choice.target);
}

#[test]
fn second_differences_scale_like_inverse_epsilon() {
    let grid = BoxGrid::new(3, 4.0, 32).unwrap();
    let h = grid.spacing();
    let b = make_hardy_drift(3, 0.5, 1).unwrap();
    for (m, gamma) in [(1usize, 0.5), (2, 0.1)] {
        let bm = mollify(&b, 1.0, m, gamma, sobolev_constant(3), &grid, 1.0).unwrap();
        let sup_trunc = truncate_drift(&b, m as f64, &grid)
            .unwrap()
            .components
            .iter()
            .flatten()
            .fold(0.0f64, |a, v| a.max(v.abs()));
        let n = grid.points();
        let mut worst: f64 = 0.0;
        for c in &bm.values.components {
            for flat in 0..grid.len() {
                for axis in 0..3 {
                    let stride = n.pow(axis as u32);
                    let i = (flat / stride) % n;
                    let up = flat - i * stride + ((i + 1) % n) * stride;
                    let down = flat - i * stride + ((i + n - 1) % n) * stride;
                    worst = worst.max((c[up] - 2.0 * c[flat] + c[down]).abs() / (h * h));
                }
            }
        }
        let scaled = worst * bm.meta.epsilon_m.max(h * h) / sup_trunc;
        assert!(scaled < 10.0, "m = {m}: ε·|D²b_m|/|b| = {scaled}");
    }
}

#[test]
fn annulus_sequence_approaches_the_drift() {
    let grid = BoxGrid::new(3, 4.5, 64).unwrap();
    let b = make_annulus_log_drift(3, 0.05, 0.5, 2.0).unwrap();
    let seq = build_mollified_sequence(&b, 0.2, &[0.25, 0.0625, 0.015625], sobolev_constant(3), &grid, 2.0).unwrap();
    let dist: Vec<f64> = seq.iter().map(|s| s.meta.l2_distance).collect();
    assert!(dist.windows(2).all(|w| w[1] <= w[0]), "{dist:?}");
}

#[test]
fn smooth_compact_field_is_recovered() {
    // A constant field on B(0, 1) is unchanged by the truncation for m ≥ 1;
    // the mollified field then differs from it only by the heat smoothing.
    let grid = BoxGrid::new(3, 4.0, 32).unwrap();
    let b = make_affine_drift(vec![0.0; 9], vec![0.2, -0.1, 0.05]).unwrap();
    let seq = build_mollified_sequence(&b, 0.0, &[0.2, 0.05], sobolev_constant(3), &grid, 1.0).unwrap();
    for s in &seq {
        assert!(s.meta.l2_distance <= 10.0 * s.meta.gamma_m, "{} vs γ {}", s.meta.l2_distance, s.meta.gamma_m);
    }
}
