use formbound_core::experiment::{run_experiment, verify_output};
use formbound_core::{CheckTag, ExperimentConfig};

// β = √0.002 / 2, so that δ = 0.002.
const HARDY_PIPELINE: &str = r#"
name = "hardy-small-delta"
seed = 2024
checks = ["certificate", "mollifier", "E1", "gradL2", "mc_pde_xval"]

[drift]
kind = "hardy"
beta = 0.022360679774997897

[grid]
points = 32
half_width = 4.0

[mollify]
gammas = [1e-4]
first_m = 2
numeric_iterations = 100

[certificate]
iterations = 100

[solver]
dt = 2e-3
t_final = 0.1

[mc]
realizations = 100
dt = 2e-3
start_points = 8
start_half_width = 2.5
probes = [[0.125, 0.125, 0.125], [0.375, -0.125, 0.125], [-0.375, 0.375, -0.125]]
"#;

#[test]
fn hardy_pipeline_passes_and_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig::from_toml_str(HARDY_PIPELINE).unwrap();
    let report = run_experiment(&config, None, dir.path()).unwrap();
    for tag in [CheckTag::E1, CheckTag::GradL2, CheckTag::McPdeXval] {
        let c = report.checks.iter().find(|c| c.tag == tag).unwrap();
        assert!(c.passed, "{}", report.to_text());
    }
    assert!(report.all_passed(), "{}", report.to_text());
    assert_eq!(verify_output(dir.path()).unwrap(), report);
    for name in ["xval.csv", "moments_e1.csv", "moments_gradient.csv", "mollifier.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn refused_gate_leaves_no_solver_output() {
    let dir = tempfile::tempdir().unwrap();
    // σ² = 0.01 puts √δ above σ²: every moment gate refuses.
    let text = HARDY_PIPELINE.replace("dt = 2e-3\nt_final", "sigma = 0.1\ndt = 2e-3\nt_final");
    let config = ExperimentConfig::from_toml_str(&text).unwrap();
    let report = run_experiment(&config, None, dir.path()).unwrap();
    for tag in [CheckTag::E1, CheckTag::GradL2] {
        let c = report.checks.iter().find(|c| c.tag == tag).unwrap();
        assert!(!c.passed && c.gate.is_some(), "{}", report.to_text());
    }
    assert!(!dir.path().join("moments_e1.csv").exists());
    assert!(!dir.path().join("moments_gradient.csv").exists());
}
