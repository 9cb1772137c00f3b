use formbound_core::drift::{hardy_certificate, make_hardy_drift, make_zero_drift, CapRule};
use formbound_core::flowsim::{criticality_probe, simulate_flow, simulate_paths, start_grid, PathConfig, ProbeConfig};
use formbound_core::regularize::{mollify, sobolev_constant};
use formbound_core::BoxGrid;

const SIGMA: f64 = std::f64::consts::SQRT_2;

fn cfg(n_paths: usize, dt: f64, t_final: f64, seed: u64) -> PathConfig {
    PathConfig {
        sigma: SIGMA,
        mu: 0.0,
        dt,
        t_final,
        n_paths,
        cap: CapRule::None,
        seed,
        snapshot_every: 0,
    }
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap().install(f)
}

#[test]
fn flows_are_bit_identical_across_worker_counts() {
    let b = make_hardy_drift(3, 0.2, 1).unwrap();
    let mut c = cfg(6, 0.01, 0.2, 41);
    c.cap = CapRule::Radius(0.05);
    c.snapshot_every = 5;
    let starts = start_grid(3, 1.0, 3);
    let one = in_pool(1, || simulate_flow(&b, &starts, &c).unwrap());
    let three = in_pool(3, || simulate_flow(&b, &starts, &c).unwrap());
    assert_eq!(one.positions, three.positions);
    assert_eq!(one.jacobians, three.jacobians);
    let p1 = in_pool(1, || simulate_paths(&b, &starts, &c).unwrap());
    let p3 = in_pool(3, || simulate_paths(&b, &starts, &c).unwrap());
    assert_eq!(p1.positions, p3.positions);
}

#[test]
fn driftless_flow_composes_from_its_own_increments() {
    let b = make_zero_drift(3).unwrap();
    let mut c = cfg(3, 0.01, 0.4, 8);
    c.snapshot_every = 10;
    let starts = start_grid(3, 1.0, 2);
    let ens = simulate_flow(&b, &starts, &c).unwrap();
    let ns = SIGMA * c.dt.sqrt();
    for r in 0..ens.realizations() {
        for s in 0..ens.times.len() - 1 {
            for (i, _) in starts.iter().enumerate() {
                let mut x = ens.image(r, s, i).to_vec();
                for step in ens.snapshot_steps[s]..ens.snapshot_steps[s + 1] {
                    for k in 0..3 {
                        x[k] += -0.0 * c.dt + ns * ens.noise[r][step * 3 + k];
                    }
                }
                assert_eq!(x, ens.image(r, s + 1, i));
            }
        }
    }
}

#[test]
fn variational_jacobian_matches_finite_differences_at_first_order() {
    let b = make_hardy_drift(3, 0.2, 1).unwrap();
    let mut c = cfg(1, 1e-3, 0.1, 5);
    c.cap = CapRule::Radius(0.05);
    let x = vec![0.8, -0.3, 0.4];
    let error = |h: f64| {
        let mut starts = vec![x.clone()];
        for j in 0..3 {
            let mut y = x.clone();
            y[j] += h;
            starts.push(y);
        }
        let ens = simulate_flow(&b, &starts, &c).unwrap();
        let last = ens.times.len() - 1;
        let jac = ens.jacobian(0, last, 0).unwrap();
        let mut worst: f64 = 0.0;
        for j in 0..3 {
            for k in 0..3 {
                let fd = (ens.image(0, last, j + 1)[k] - ens.image(0, last, 0)[k]) / h;
                worst = worst.max((fd - jac[k * 3 + j]).abs());
            }
        }
        worst
    };
    let (e1, e2) = (error(1e-3), error(5e-4));
    let ratio = e1 / e2;
    assert!(e1 < 1e-2, "{e1}");
    assert!((1.6..2.4).contains(&ratio), "error ratio {ratio} ({e1}, {e2})");
}

#[test]
fn hardy_second_moment_agrees_with_a_fine_step_reference() {
    let b = make_hardy_drift(3, 0.2, 1).unwrap();
    let x0 = vec![vec![1.0, 0.0, 0.0]];
    let stats = |dt: f64, seed: u64| {
        let mut c = cfg(4000, dt, 0.5, seed);
        c.cap = CapRule::Radius(1e-3);
        let tr = simulate_paths(&b, &x0, &c).unwrap();
        let last = tr.times.len() - 1;
        let r2: Vec<f64> = (0..tr.n_paths)
            .map(|p| tr.position(0, p, last).iter().map(|v| v * v).sum())
            .collect();
        let n = r2.len() as f64;
        let mean = r2.iter().sum::<f64>() / n;
        let var = r2.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    };
    let (coarse, se_c) = stats(1.6e-2, 1);
    let (fine, se_f) = stats(1e-3, 2);
    let se = (se_c * se_c + se_f * se_f).sqrt();
    assert!((coarse - fine).abs() <= 3.0 * se, "{coarse} vs {fine} ± {se}");
}

#[test]
fn mollified_hardy_flow_keeps_the_order_along_a_ray() {
    let grid = BoxGrid::new(3, 4.0, 32).unwrap();
    let delta = hardy_certificate(3, 0.2).unwrap().delta;
    let m = mollify(&make_hardy_drift(3, 0.2, 1).unwrap(), delta, 2, 1e-2, sobolev_constant(3), &grid, 1.0).unwrap();
    let dir = [2f64.sqrt().recip(), 0.5, 0.5];
    let starts: Vec<Vec<f64>> = (0..41)
        .map(|i| {
            let r = -1.5 + 3.0 * i as f64 / 40.0;
            dir.iter().map(|e| r * e).collect()
        })
        .collect();
    let ens = simulate_flow(&m.field, &starts, &cfg(4, 1e-3, 0.2, 13)).unwrap();
    let last = ens.times.len() - 1;
    assert_eq!(ens.nonpositive_det, 0);
    for r in 0..ens.realizations() {
        for i in 0..starts.len() - 1 {
            let a = ens.image(r, last, i);
            let b = ens.image(r, last, i + 1);
            let j = ens.jacobian(r, last, i).unwrap();
            let tangent: Vec<f64> = (0..3).map(|k| (0..3).map(|l| j[k * 3 + l] * dir[l]).sum()).collect();
            let step: f64 = (0..3).map(|k| (b[k] - a[k]) * tangent[k]).sum();
            assert!(step > 0.0, "realization {r}: images {i} and {} cross", i + 1);
        }
    }
}

fn probe(betas: Vec<f64>, x0_radius: f64, eps: f64, t_final: f64) -> ProbeConfig {
    ProbeConfig {
        dim: 3,
        betas,
        x0_radius,
        eps,
        t_final,
        sigma: SIGMA,
        dt0: 2e-3,
        n_paths: 400,
        r_cap: None,
        seed: 21,
    }
}

#[test]
fn brownian_paths_rarely_reach_a_tiny_ball() {
    // P(hit B(0, ε) ever) = ε/|x0| for the three-dimensional Bessel process.
    let rows = criticality_probe(&probe(vec![0.0], 1.0, 1e-3, 2.0)).unwrap();
    assert!(rows[0].hit_fraction <= 0.01, "{}", rows[0].hit_fraction);
}

#[test]
fn supercritical_attraction_hits_with_growing_probability() {
    // Radial dimension d − β = 0: the hitting time of 0 from r₀ is r₀²/(4G)
    // with G ~ Exp(1), so P(τ ≤ T) = exp(−r₀²/(4T)).
    let short = criticality_probe(&probe(vec![3.0], 0.5, 1e-2, 0.05)).unwrap()[0];
    let long = criticality_probe(&probe(vec![3.0], 0.5, 1e-2, 5.0)).unwrap()[0];
    assert!(long.hit_fraction > short.hit_fraction);
    assert!(long.hit_fraction > 0.96, "{}", long.hit_fraction);
}
