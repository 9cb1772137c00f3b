use std::path::Path;

use super::config::ExperimentConfig;
use super::output::{fmt_f64, probe_rows, ArtifactWriter, PROBE_COLUMNS};
use crate::drift::{estimate_form_bound_numeric, weak_ld_norm, strichartz_certificate, DriftField, FormBoundCertificate};
use crate::error::{Error, Result};
use crate::flowsim::{
    criticality_probe, hit_fraction_is_monotone, mc_gradient_moment_ensemble, mc_second_moment_ensemble,
    simulate_transport_flow, start_grid, transition_bracket, PathConfig, ProbeConfig,
};
use crate::grid::BoxGrid;
use crate::momentpde::{
    check_dual_weighted_bound, check_e1, check_gradient_bound, dual_gate, e1_gate, gradient_gate,
    solve_dual_continuity_moment, solve_gradient_moment_system_q1, solve_second_moment, thresholds,
    Diagnostics, MomentSeries, SolverConfig, ThresholdSet,
};
use crate::regularize::{mollify, sobolev_constant, MollifiedDrift};
use crate::report::{CheckReport, CheckTag, VerificationReport};
use crate::weights::{grad_rho_ratio_bound, WeightParams};

/// What a subcommand asks the pipeline to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Certify,
    Mollify,
    Moments,
    Flow,
    Probe,
    Xval,
    /// Every check listed in the configuration.
    Run,
}

impl Command {
    /// Checks the command runs for `config`.
    pub fn checks(&self, config: &ExperimentConfig) -> Vec<CheckTag> {
        match self {
            Command::Certify => vec![CheckTag::Certificate],
            Command::Mollify => vec![CheckTag::Mollifier],
            Command::Moments => {
                let m: Vec<CheckTag> = config
                    .checks
                    .iter()
                    .copied()
                    .filter(|t| matches!(t, CheckTag::E1 | CheckTag::GradL2 | CheckTag::Dual))
                    .collect();
                if m.is_empty() {
                    vec![CheckTag::E1]
                } else {
                    m
                }
            }
            Command::Flow => Vec::new(),
            Command::Probe => vec![CheckTag::Criticality],
            Command::Xval => vec![CheckTag::McPdeXval],
            Command::Run => config.checks.clone(),
        }
    }
}

/// Runs every check listed in the configuration.
pub fn run_experiment(config: &ExperimentConfig, seed: Option<u64>, out: &Path) -> Result<VerificationReport> {
    run_command(config, Command::Run, seed, out)
}

/// Drift the solvers and the Monte Carlo use, with its form bound.
struct Working {
    field: DriftField,
    delta: f64,
    c_delta: f64,
}

struct Pipeline<'a> {
    cfg: &'a ExperimentConfig,
    grid: BoxGrid,
    writer: ArtifactWriter,
    checks: Vec<CheckReport>,
}

pub fn run_command(config: &ExperimentConfig, command: Command, seed: Option<u64>, out: &Path) -> Result<VerificationReport> {
    let cfg = config.with_seed(seed);
    let wanted = command.checks(&cfg);
    let mut selected = cfg.clone();
    selected.checks = wanted.clone();
    selected.validate_blocks()?;
    if command == Command::Flow && cfg.mc.is_none() {
        return Err(Error::Config("`flow` needs an [mc] block".into()));
    }
    let grid = BoxGrid::new(cfg.dim, cfg.grid.half_width, cfg.grid.points).map_err(|e| e.in_stage("grid"))?;
    let writer = ArtifactWriter::create(out, &cfg)?;
    let mut p = Pipeline {
        cfg: &cfg,
        grid,
        writer,
        checks: Vec::new(),
    };

    let b = cfg.drift.build(cfg.dim, &cfg.base_dir).map_err(|e| e.in_stage("certify"))?;
    let cert = p.certify(&b, wanted.contains(&CheckTag::Certificate)).map_err(|e| e.in_stage("certify"))?;

    let needs_drift = command == Command::Flow
        || wanted.iter().any(|t| matches!(t, CheckTag::E1 | CheckTag::GradL2 | CheckTag::Dual | CheckTag::McPdeXval | CheckTag::Mollifier));
    let working = if needs_drift {
        p.mollify(&b, &cert, wanted.contains(&CheckTag::Mollifier)).map_err(|e| e.in_stage("mollify"))?
    } else {
        Working {
            field: b.clone(),
            delta: cert.delta,
            c_delta: cert.c_delta,
        }
    };

    for tag in &wanted {
        match tag {
            CheckTag::E1 => p.e1(&working).map_err(|e| e.in_stage("moments"))?,
            CheckTag::GradL2 => p.gradient(&working).map_err(|e| e.in_stage("moments"))?,
            CheckTag::Dual => p.dual(&working).map_err(|e| e.in_stage("moments"))?,
            CheckTag::TwoEst => p.two_est()?,
            CheckTag::McPdeXval => p.xval(&working).map_err(|e| e.in_stage("xval"))?,
            CheckTag::Criticality => p.probe().map_err(|e| e.in_stage("probe"))?,
            CheckTag::Certificate | CheckTag::Mollifier => {}
        }
    }
    if command == Command::Flow {
        p.flow(&working).map_err(|e| e.in_stage("flow"))?;
    }

    let report = VerificationReport {
        config_hash: p.writer.config_hash().to_string(),
        seed: cfg.seed,
        checks: p.checks,
    };
    p.writer.finish(&report)?;
    Ok(report)
}

fn refusal(name: &str, tag: CheckTag, e: Error) -> Result<CheckReport> {
    match e {
        Error::Gate(g) => Ok(CheckReport::refused(name, tag, g)),
        Error::Unsupported(g) => Ok(CheckReport::refused(name, tag, format!("unsupported: {g}"))),
        Error::NotDifferentiable(what) => Ok(CheckReport::refused(
            name,
            tag,
            format!("{what} needs a differentiable drift (add a [mollify] block)"),
        )),
        other => Err(other),
    }
}

impl Pipeline<'_> {
    fn solver(&self) -> &super::config::SolverBlock {
        self.cfg.solver.as_ref().expect("validated")
    }

    fn thresholds(&self, w: &Working) -> Result<ThresholdSet> {
        let s = self.solver();
        thresholds(self.cfg.dim, s.q, s.p, w.delta, w.c_delta, s.sigma)
    }

    fn solver_config(&self, mu: f64) -> SolverConfig {
        let s = self.solver();
        SolverConfig::new(s.sigma, mu, s.dt, s.t_final)
    }

    fn certify(&mut self, b: &DriftField, check: bool) -> Result<FormBoundCertificate> {
        let analytic = self.cfg.drift.analytic_certificate(self.cfg.dim);
        let block = self.cfg.certificate.clone().unwrap_or_default();
        let needs_weak = check || analytic.is_none();
        let weak = if needs_weak {
            Some(weak_ld_norm(b, &self.grid, block.weak_levels)?)
        } else {
            None
        };
        let from_weak = weak.as_ref().map(|w| strichartz_certificate(self.cfg.dim, w.value)).transpose()?;
        let cert = analytic.or(from_weak).expect("one certificate exists");
        let mut record = serde_json::json!({
            "delta": cert.delta,
            "c_delta": cert.c_delta,
            "method": cert.method,
        });
        if let (Some(w), Some(s)) = (&weak, &from_weak) {
            record["weak_ld_norm"] = w.value.into();
            record["weak_ld_stable"] = w.stable.into();
            record["strichartz_delta"] = s.delta.into();
        }
        if check {
            let est = estimate_form_bound_numeric(b, block.lambda, &self.grid, block.iterations)?;
            record["numeric_delta"] = est.delta_est.into();
            let s = from_weak.expect("computed for the check");
            let mut report = CheckReport::inequality(
                "form-bound certificate",
                CheckTag::Certificate,
                est.delta_est,
                cert.delta,
                1.0,
                block.tolerance,
            )
            .with_detail("delta", cert.delta)
            .with_detail("c_delta", cert.c_delta)
            .with_detail("strichartz_delta", s.delta)
            .with_detail("power_iterations", est.iterations as f64)
            .with_detail("power_converged", if est.converged { 1.0 } else { 0.0 });
            if cert.delta > 0.0 {
                report = report.with_detail("strichartz_relative_gap", s.delta / cert.delta - 1.0);
            }
            self.checks.push(report);
        }
        self.writer.write_json("certificate.json", &record)?;
        Ok(cert)
    }

    fn mollify(&mut self, b: &DriftField, cert: &FormBoundCertificate, check: bool) -> Result<Working> {
        let Some(block) = self.cfg.mollify.clone() else {
            return Ok(Working {
                field: b.clone(),
                delta: cert.delta,
                c_delta: cert.c_delta,
            });
        };
        if block.gammas.is_empty() || block.gammas.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Config("mollify.gammas must be non-empty and strictly decreasing".into()));
        }
        let c_sob = sobolev_constant(self.cfg.dim);
        let seq: Vec<MollifiedDrift> = block
            .gammas
            .iter()
            .enumerate()
            .map(|(i, &g)| mollify(b, cert.delta, block.first_m + i, g, c_sob, &self.grid, block.ball_radius))
            .collect::<Result<_>>()?;
        let mut rows = Vec::new();
        let mut worst_ratio: f64 = 0.0;
        for s in &seq {
            let stem = format!("mollified_m{}", s.meta.m);
            s.save(self.writer.dir(), &stem)?;
            self.writer.register(&format!("{stem}.fbg"))?;
            self.writer.register(&format!("{stem}.json"))?;
            let est = if check {
                let e = estimate_form_bound_numeric(&s.field, 1.0, &self.grid, block.numeric_iterations)?.delta_est;
                worst_ratio = worst_ratio.max(e / s.meta.delta_m);
                e
            } else {
                f64::NAN
            };
            rows.push(vec![
                s.meta.m.to_string(),
                fmt_f64(s.meta.gamma_m),
                fmt_f64(s.meta.epsilon_m),
                fmt_f64(s.meta.delta_m),
                fmt_f64(s.meta.ld_defect),
                fmt_f64(s.meta.l2_distance),
                fmt_f64(est),
            ]);
        }
        self.writer.write_csv(
            "mollifier.csv",
            &["m", "gamma_m", "epsilon_m", "delta_m", "ld_defect", "l2_distance_ball", "numeric_delta"],
            &rows,
        )?;
        if check {
            let decreasing = seq.windows(2).all(|w| w[1].meta.l2_distance < w[0].meta.l2_distance);
            let mut report = CheckReport::inequality(
                "mollified form bound",
                CheckTag::Mollifier,
                worst_ratio,
                1.0,
                1.0,
                block.tolerance,
            )
            .with_detail("l2_distance_decreasing", if decreasing { 1.0 } else { 0.0 });
            report.passed &= decreasing;
            self.checks.push(report);
        }
        let last = seq.into_iter().last().expect("non-empty schedule");
        Ok(Working {
            field: last.field,
            delta: last.meta.delta_m,
            c_delta: cert.c_delta,
        })
    }

    fn series_rows(series: &MomentSeries, pick: impl Fn(&crate::momentpde::StepRecord) -> Vec<f64>) -> Vec<Vec<String>> {
        series
            .records
            .iter()
            .map(|r| {
                let mut row = vec![r.step.to_string(), fmt_f64(r.t)];
                row.extend(pick(r).into_iter().map(fmt_f64));
                row
            })
            .collect()
    }

    fn e1(&mut self, w: &Working) -> Result<()> {
        let name = "E1 second-moment bound";
        let s = self.solver().clone();
        let th = self.thresholds(w)?;
        let mu = s.mu.unwrap_or(th.mu_e1);
        if let Err(e) = e1_gate(&th, s.p, mu) {
            self.checks.push(refusal(name, CheckTag::E1, e)?);
            return Ok(());
        }
        let f = self.cfg.initial.sample(&self.grid);
        let diag = Diagnostics {
            lp: vec![s.p],
            ..Default::default()
        };
        let series = solve_second_moment(&w.field, &f, &self.solver_config(mu), &diag)?;
        let report = check_e1(&series, s.p, &f, &th, s.tolerance)?;
        let rows = Self::series_rows(&series, |r| vec![r.lp[0], r.dissipation[0], r.boundary_fraction, r.min_before_clip]);
        self.writer.write_csv(
            "moments_e1.csv",
            &["step", "t", "lp_norm", "dissipation", "boundary_fraction", "min_before_clip"],
            &rows,
        )?;
        self.checks.push(report);
        Ok(())
    }

    fn gradient(&mut self, w: &Working) -> Result<()> {
        let name = "gradient-moment energy bound";
        let s = self.solver().clone();
        let th = self.thresholds(w)?;
        let mu = s.mu.unwrap_or(th.c_hat);
        let gate = gradient_gate(&th, mu).and_then(|_| {
            if w.field.is_differentiable() {
                Ok(())
            } else {
                Err(Error::NotDifferentiable("the gradient-moment system"))
            }
        });
        if let Err(e) = gate {
            self.checks.push(refusal(name, CheckTag::GradL2, e)?);
            return Ok(());
        }
        let v0 = self.cfg.initial.gradient_outer(&self.grid);
        let series = solve_gradient_moment_system_q1(&w.field, &v0, &self.solver_config(mu), &Diagnostics::default())?;
        let report = check_gradient_bound(&series, &th, s.tolerance)?;
        let rows = Self::series_rows(&series, |r| vec![r.sum_sq, r.lp.first().copied().unwrap_or(f64::NAN), r.dissipation[0], r.boundary_fraction]);
        self.writer.write_csv(
            "moments_gradient.csv",
            &["step", "t", "sum_of_squares", "trace_l1", "dissipation", "boundary_fraction"],
            &rows,
        )?;
        self.checks.push(report);
        Ok(())
    }

    fn weight_params(&self) -> Result<WeightParams> {
        let wb = self.cfg.weights.as_ref().expect("validated");
        WeightParams::new(wb.kappa, wb.theta, self.cfg.dim)
    }

    fn dual(&mut self, w: &Working) -> Result<()> {
        let name = "dual weighted bound";
        let s = self.solver().clone();
        let th = self.thresholds(w)?;
        let params = self.weight_params()?;
        let mu = s.mu.unwrap_or(th.mu_dual);
        if let Err(e) = dual_gate(&th, mu, &params) {
            self.checks.push(refusal(name, CheckTag::Dual, e)?);
            return Ok(());
        }
        let v0 = self.cfg.initial.sample(&self.grid);
        let diag = Diagnostics {
            weights: vec![params],
            ..Default::default()
        };
        let series = solve_dual_continuity_moment(&w.field, &v0, &self.solver_config(mu), &diag)?;
        let report = check_dual_weighted_bound(&series, &v0, &params, &th, s.tolerance)?;
        let rows = Self::series_rows(&series, |r| vec![r.weighted[0], r.sum_sq, r.boundary_fraction]);
        self.writer.write_csv("moments_dual.csv", &["step", "t", "weighted_l2", "sum_of_squares", "boundary_fraction"], &rows)?;
        self.checks.push(report);
        Ok(())
    }

    fn two_est(&mut self) -> Result<()> {
        let params = self.weight_params()?;
        let scan = self.cfg.weights.as_ref().expect("validated").scan_points;
        let r = grad_rho_ratio_bound(&params, scan, 10.0 / params.kappa.sqrt());
        let mut report = CheckReport::inequality("weight gradient ratio", CheckTag::TwoEst, r.scanned_max, r.bound, 1.0, 1e-10)
            .with_detail("maximizer", r.maximizer)
            .with_detail("scanned_argmax", r.scanned_argmax)
            .with_detail("gap_at_maximizer", r.gap_at_maximizer);
        report.passed &= r.holds;
        self.checks.push(report);
        Ok(())
    }

    fn path_config(&self) -> PathConfig {
        let s = self.solver();
        let mc = self.cfg.mc.as_ref().expect("validated");
        PathConfig {
            sigma: s.sigma,
            mu: s.mu.unwrap_or(0.0),
            dt: mc.dt,
            t_final: s.t_final,
            n_paths: mc.realizations,
            cap: Default::default(),
            seed: self.cfg.seed,
            snapshot_every: mc.snapshot_every,
        }
    }

    fn xval(&mut self, w: &Working) -> Result<()> {
        let name = "Monte Carlo against the moment PDEs";
        if !w.field.is_differentiable() {
            self.checks.push(refusal(name, CheckTag::McPdeXval, Error::NotDifferentiable("flow inversion"))?);
            return Ok(());
        }
        let mc = self.cfg.mc.clone().expect("validated");
        let path_cfg = self.path_config();
        let cfg = self.solver_config(path_cfg.mu);
        let f = &self.cfg.initial;
        let v = solve_second_moment(&w.field, &f.sample(&self.grid), &cfg, &Diagnostics::default())?;
        let vv = solve_gradient_moment_system_q1(&w.field, &f.gradient_outer(&self.grid), &cfg, &Diagnostics::default())?;
        let v_final = v.final_scalar();
        let trace = vv.final_matrix().trace();

        let ens = simulate_transport_flow(&w.field, &start_grid(self.cfg.dim, mc.start_half_width, mc.start_points), &path_cfg)?;
        let last = ens.times.len() - 1;
        let mc_v = mc_second_moment_ensemble(&ens, f, &mc.probes, last, path_cfg.mu, mc.refine_iters)?;
        let mc_g = mc_gradient_moment_ensemble(&ens, f, &mc.probes, last, path_cfg.mu, 1, mc.refine_iters)?;

        let mut worst: f64 = 0.0;
        let mut min_n = usize::MAX;
        let mut rows = Vec::new();
        for (k, x) in mc.probes.iter().enumerate() {
            let pv = self.grid.interpolate(&v_final.data, x);
            let pg = self.grid.interpolate(&trace.data, x);
            for (pde, est) in [(pv, mc_v[k]), (pg, mc_g[k])] {
                let allowed = (3.0 * est.stderr).max(mc.relative_tolerance * pde.abs());
                let ratio = if allowed > 0.0 {
                    (est.mean - pde).abs() / allowed
                } else if est.mean == pde {
                    0.0
                } else {
                    f64::INFINITY
                };
                worst = worst.max(if ratio.is_nan() { f64::INFINITY } else { ratio });
                min_n = min_n.min(est.n);
            }
            let mut row = vec![k.to_string()];
            row.extend(x.iter().map(|c| fmt_f64(*c)));
            row.extend([pv, mc_v[k].mean, mc_v[k].stderr].map(fmt_f64));
            row.push(mc_v[k].n.to_string());
            row.extend([pg, mc_g[k].mean, mc_g[k].stderr].map(fmt_f64));
            row.push(mc_g[k].n.to_string());
            rows.push(row);
        }
        let coords: Vec<String> = (0..self.cfg.dim).map(|k| format!("x{k}")).collect();
        let mut columns: Vec<&str> = vec!["probe"];
        columns.extend(coords.iter().map(String::as_str));
        columns.extend(["pde_v", "mc_v", "mc_v_stderr", "mc_v_n", "pde_trace_v", "mc_grad_sq", "mc_grad_sq_stderr", "mc_grad_sq_n"]);
        self.writer.write_csv("xval.csv", &columns, &rows)?;
        self.checks.push(
            CheckReport::inequality(name, CheckTag::McPdeXval, worst, 1.0, 1.0, 0.0)
                .with_detail("realizations", mc.realizations as f64)
                .with_detail("min_kept_samples", min_n as f64)
                .with_detail("nonpositive_jacobian_det", ens.nonpositive_det as f64),
        );
        Ok(())
    }

    fn probe(&mut self) -> Result<()> {
        let pb = self.cfg.probe.clone().expect("validated");
        let pc = ProbeConfig {
            dim: self.cfg.dim,
            betas: pb.betas.clone(),
            x0_radius: pb.x0_radius,
            eps: pb.eps,
            t_final: pb.t_final,
            sigma: pb.sigma,
            dt0: pb.dt0,
            n_paths: pb.n_paths,
            r_cap: pb.r_cap,
            seed: self.cfg.seed,
        };
        let rows = criticality_probe(&pc)?;
        self.writer.write_csv("probe.csv", &PROBE_COLUMNS, &probe_rows(&rows))?;
        let monotone = hit_fraction_is_monotone(&rows, 2.0);
        let b = transition_bracket(&rows);
        let half = b.half_width.unwrap_or(f64::INFINITY);
        let mut report = CheckReport::inequality("criticality bracket", CheckTag::Criticality, half, pb.max_half_width, 1.0, 0.0)
            .with_detail("beta_10", b.beta_10.unwrap_or(f64::NAN))
            .with_detail("beta_90", b.beta_90.unwrap_or(f64::NAN))
            .with_detail("monotone", if monotone { 1.0 } else { 0.0 })
            .with_detail("contains_critical", if b.contains_one { 1.0 } else { 0.0 });
        report.passed &= monotone && b.contains_one;
        self.checks.push(report);
        Ok(())
    }

    fn flow(&mut self, w: &Working) -> Result<()> {
        let mc = self.cfg.mc.clone().expect("checked");
        let path_cfg = self.path_config();
        let ens = simulate_transport_flow(&w.field, &start_grid(self.cfg.dim, mc.start_half_width, mc.start_points), &path_cfg)?;
        let d = self.cfg.dim;
        let mut rows = Vec::new();
        for r in 0..ens.realizations() {
            for (s, &t) in ens.times.iter().enumerate() {
                for (i, x0) in ens.starts.iter().enumerate() {
                    let mut row = vec![r.to_string(), i.to_string(), fmt_f64(t)];
                    row.extend(x0.iter().map(|v| fmt_f64(*v)));
                    row.extend(ens.image(r, s, i).iter().map(|v| fmt_f64(*v)));
                    if let Some(j) = ens.jacobian(r, s, i) {
                        row.extend(j.iter().map(|v| fmt_f64(*v)));
                    }
                    rows.push(row);
                }
            }
        }
        let mut names = vec!["realization".to_string(), "start".into(), "t".into()];
        names.extend((0..d).map(|k| format!("x0_{k}")));
        names.extend((0..d).map(|k| format!("x_{k}")));
        if ens.jacobians.is_some() {
            names.extend((0..d * d).map(|k| format!("j_{}{}", k / d, k % d)));
        }
        let columns: Vec<&str> = names.iter().map(String::as_str).collect();
        self.writer.write_csv("flow.csv", &columns, &rows)
    }
}
