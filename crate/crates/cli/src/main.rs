use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use formbound_core::experiment::{run_command, verify_output, Command, ExperimentConfig};
use formbound_core::{Error, VerificationReport};

/// Reproducible experiments on transport equations with form-bounded drift.
#[derive(Debug, Parser)]
#[command(name = "formbound-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Form-bound certificate of the configured drift.
    Certify(RunArgs),
    /// Mollified drift sequence and its contract.
    Mollify(RunArgs),
    /// Moment PDE checks listed in the configuration (E1 when none is).
    Moments(RunArgs),
    /// Stochastic flow snapshots with Jacobians.
    Flow(RunArgs),
    /// Hitting fractions across the Hardy strength.
    Probe(RunArgs),
    /// Monte Carlo against the moment PDEs.
    Xval(RunArgs),
    /// Every check listed in the configuration.
    Run(RunArgs),
    /// Re-checks an existing output directory against its manifest.
    Verify(VerifyArgs),
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir` of the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; all counts give identical outputs.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, clap::Args)]
struct VerifyArgs {
    /// When given, the stored configuration must hash like this one.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output_dir(config: &ExperimentConfig, out: Option<&Path>) -> PathBuf {
    match (out, &config.output_dir) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(d)) => config.base_dir.join(d),
        (None, None) => config.base_dir.join("out").join(&config.name),
    }
}

fn run(args: &RunArgs, command: Command) -> Result<(VerificationReport, PathBuf), Error> {
    let config = ExperimentConfig::load(&args.config)?;
    let out = output_dir(&config, args.out.as_deref());
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.workers {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let report = pool.install(|| run_command(&config, command, args.seed, &out))?;
    Ok((report, out))
}

fn verify(args: &VerifyArgs) -> Result<(VerificationReport, PathBuf), Error> {
    let config = args.config.as_deref().map(ExperimentConfig::load).transpose()?;
    let out = match (&args.out, &config) {
        (Some(o), _) => o.clone(),
        (None, Some(c)) => output_dir(c, None),
        (None, None) => return Err(Error::Config("verify needs --out or --config".into())),
    };
    let report = verify_output(&out)?;
    if let Some(c) = config {
        let expected = c.with_seed(args.seed).hash()?;
        if expected != report.config_hash {
            return Err(Error::HashMismatch {
                path: args.config.as_ref().expect("loaded").display().to_string(),
                expected,
                found: report.config_hash,
            });
        }
    }
    Ok((report, out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Sub::Certify(a) => run(a, Command::Certify),
        Sub::Mollify(a) => run(a, Command::Mollify),
        Sub::Moments(a) => run(a, Command::Moments),
        Sub::Flow(a) => run(a, Command::Flow),
        Sub::Probe(a) => run(a, Command::Probe),
        Sub::Xval(a) => run(a, Command::Xval),
        Sub::Run(a) => run(a, Command::Run),
        Sub::Verify(a) => verify(a),
    };
    match result {
        Ok((report, out)) => {
            print!("{}", report.to_text());
            eprintln!("outputs in {}", out.display());
            if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
