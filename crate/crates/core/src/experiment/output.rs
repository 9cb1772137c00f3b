use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::flowsim::ProbeRow;
use crate::report::VerificationReport;

pub const MANIFEST: &str = "manifest.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const CONFIG_JSON: &str = "config.json";

/// Hashes of every artifact a run wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    /// File name → SHA-256 of its bytes.
    pub files: BTreeMap<String, String>,
}

/// Shortest round-trip form.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

pub fn csv_header(config_hash: &str, seed: u64) -> String {
    format!("# config_hash={config_hash} seed={seed}\n")
}

/// CSV text with the provenance comment, a column line and one line per row.
pub fn csv_text(config_hash: &str, seed: u64, columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = csv_header(config_hash, seed);
    s.push_str(&columns.join(","));
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

pub(crate) fn probe_rows(rows: &[ProbeRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                fmt_f64(r.beta),
                fmt_f64(r.hit_fraction),
                fmt_f64(r.stderr),
                r.n_paths.to_string(),
                fmt_f64(r.min_distance_q05),
                fmt_f64(r.min_distance_q50),
            ]
        })
        .collect()
}

pub const PROBE_COLUMNS: [&str; 6] = ["beta", "hit_fraction", "stderr", "n_paths", "q05_min_distance", "q50_min_distance"];

/// Criticality table as CSV.
pub fn write_probe_csv(path: &Path, rows: &[ProbeRow], config_hash: &str, seed: u64) -> Result<()> {
    std::fs::write(path, csv_text(config_hash, seed, &PROBE_COLUMNS, &probe_rows(rows)))?;
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes artifacts into one directory and records their hashes.
pub struct ArtifactWriter {
    dir: PathBuf,
    config_hash: String,
    seed: u64,
    files: BTreeMap<String, String>,
}

impl ArtifactWriter {
    pub fn create(dir: &Path, config: &ExperimentConfig) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut w = Self {
            dir: dir.to_path_buf(),
            config_hash: config.hash()?,
            seed: config.seed,
            files: BTreeMap::new(),
        };
        w.write_bytes(CONFIG_JSON, config.canonical_json()?.as_bytes())?;
        Ok(w)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_csv(&mut self, name: &str, columns: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let text = csv_text(&self.config_hash, self.seed, columns, rows);
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.write_bytes(name, text.as_bytes())
    }

    /// Records a file written by other code (binary grids).
    pub fn register(&mut self, name: &str) -> Result<()> {
        let bytes = std::fs::read(self.dir.join(name))?;
        self.files.insert(name.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    /// Writes the report (JSON and text) and the manifest.
    pub fn finish(mut self, report: &VerificationReport) -> Result<()> {
        self.write_json(REPORT_JSON, report)?;
        self.write_bytes(REPORT_TEXT, report.to_text().as_bytes())?;
        let manifest = Manifest {
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            files: self.files.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        std::fs::write(self.dir.join(MANIFEST), text)?;
        Ok(())
    }
}

fn read(dir: &Path, name: &str) -> Result<Vec<u8>> {
    std::fs::read(dir.join(name)).map_err(|e| Error::Config(format!("cannot read {}: {e}", dir.join(name).display())))
}

/// Re-checks an output directory: the stored configuration must hash to the
/// recorded value, every listed file must match its hash and every CSV must
/// carry the configuration hash. Returns the stored report.
pub fn verify_output(dir: &Path) -> Result<VerificationReport> {
    let manifest: Manifest = serde_json::from_slice(&read(dir, MANIFEST)?)?;
    let config: ExperimentConfig = serde_json::from_slice(&read(dir, CONFIG_JSON)?)?;
    let hash = config.hash()?;
    if hash != manifest.config_hash {
        return Err(Error::HashMismatch {
            path: CONFIG_JSON.into(),
            expected: manifest.config_hash,
            found: hash,
        });
    }
    let header = csv_header(&hash, manifest.seed);
    for (name, expected) in &manifest.files {
        let bytes = read(dir, name)?;
        let found = sha256_hex(&bytes);
        if &found != expected {
            return Err(Error::HashMismatch {
                path: name.clone(),
                expected: expected.clone(),
                found,
            });
        }
        if name.ends_with(".csv") && !bytes.starts_with(header.as_bytes()) {
            return Err(Error::Format(format!("{name} does not carry the configuration hash header")));
        }
    }
    let report: VerificationReport = serde_json::from_slice(&read(dir, REPORT_JSON)?)?;
    if report.config_hash != hash || report.seed != manifest.seed {
        return Err(Error::HashMismatch {
            path: REPORT_JSON.into(),
            expected: hash,
            found: report.config_hash,
        });
    }
    Ok(report)
}
