//! Experiment files, the staged pipeline and its on-disk artifacts.
//!
//! A run evaluates every admissibility gate before it starts a solver or a
//! Monte Carlo batch. Every CSV starts with `# config_hash=<sha256> seed=<n>`
//! and `manifest.json` lists the SHA-256 of each artifact so that
//! [`verify_output`] can re-check a directory later.

mod config;
mod output;
mod runner;

pub use config::{
    CertificateBlock, ExperimentConfig, GridBlock, McBlock, MollifyBlock, ProbeBlock, SolverBlock,
    WeightBlock,
};
pub use output::{
    csv_header, csv_text, fmt_f64, verify_output, write_probe_csv, ArtifactWriter, Manifest,
    CONFIG_JSON, MANIFEST, REPORT_JSON, REPORT_TEXT,
};
pub use runner::{run_command, run_experiment, Command};
