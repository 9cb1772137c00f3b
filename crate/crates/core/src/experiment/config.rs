use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::drift::DriftConfig;
use crate::error::{Error, Result};
use crate::initial::InitialProfile;
use crate::report::CheckTag;

/// One experiment, read from a TOML file.
///
/// ```toml
/// name = "hardy"
/// seed = 7
/// checks = ["certificate", "E1", "mc_pde_xval"]
///
/// [drift]
/// kind = "hardy"
/// beta = 0.1
///
/// [grid]
/// points = 64
/// half_width = 4.0
///
/// [solver]
/// sigma = 1.4142135623730951
/// dt = 1e-3
/// t_final = 0.2
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub checks: Vec<CheckTag>,
    pub drift: DriftConfig,
    pub grid: GridBlock,
    #[serde(default)]
    pub mollify: Option<MollifyBlock>,
    #[serde(default = "default_initial")]
    pub initial: InitialProfile,
    #[serde(default)]
    pub solver: Option<SolverBlock>,
    #[serde(default)]
    pub weights: Option<WeightBlock>,
    #[serde(default)]
    pub certificate: Option<CertificateBlock>,
    #[serde(default)]
    pub mc: Option<McBlock>,
    #[serde(default)]
    pub probe: Option<ProbeBlock>,
    /// Relative to the config file; the CLI `--out` flag overrides it.
    #[serde(default)]
    pub output_dir: Option<String>,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_dim() -> usize {
    3
}

fn default_initial() -> InitialProfile {
    InitialProfile::Gaussian {
        amplitude: 1.0,
        width: 0.6,
        center: None,
    }
}

fn default_sigma() -> f64 {
    std::f64::consts::SQRT_2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub points: usize,
    pub half_width: f64,
}

/// Mollified sequence `b_m` for `m = first_m, first_m + 1, …`, one per
/// `γ`. The last member drives the solvers and the Monte Carlo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollifyBlock {
    pub gammas: Vec<f64>,
    #[serde(default = "one")]
    pub first_m: usize,
    #[serde(default = "unit")]
    pub ball_radius: f64,
    /// Power iterations for the numeric bound of each `b_m`.
    #[serde(default = "default_iters")]
    pub numeric_iterations: usize,
    #[serde(default = "tenth")]
    pub tolerance: f64,
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

fn tenth() -> f64 {
    0.1
}

fn default_iters() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Fixed `μ`; when absent each check runs at its own threshold.
    #[serde(default)]
    pub mu: Option<f64>,
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default = "one")]
    pub q: usize,
    #[serde(default = "fiftieth")]
    pub tolerance: f64,
}

fn two() -> f64 {
    2.0
}

fn fiftieth() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightBlock {
    pub kappa: f64,
    pub theta: f64,
    #[serde(default = "default_scan")]
    pub scan_points: usize,
}

fn default_scan() -> usize {
    1_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateBlock {
    /// `λ` of the numeric form-bound estimate.
    #[serde(default = "unit")]
    pub lambda: f64,
    #[serde(default = "default_iters")]
    pub iterations: usize,
    #[serde(default = "default_levels")]
    pub weak_levels: usize,
    /// Allowed excess of the numeric estimate over the certified `δ`.
    #[serde(default = "tenth")]
    pub tolerance: f64,
}

fn default_levels() -> usize {
    64
}

impl Default for CertificateBlock {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            iterations: default_iters(),
            weak_levels: default_levels(),
            tolerance: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McBlock {
    pub realizations: usize,
    pub dt: f64,
    /// Starting points per axis of the forward grid.
    pub start_points: usize,
    pub start_half_width: f64,
    pub probes: Vec<Vec<f64>>,
    #[serde(default = "default_refine")]
    pub refine_iters: usize,
    /// Relative tolerance; the allowance is `max(3·stderr, rel·|PDE|)`.
    #[serde(default = "twentieth")]
    pub relative_tolerance: f64,
    /// Keep positions every this many steps in the `flow` snapshot file.
    #[serde(default)]
    pub snapshot_every: usize,
}

fn default_refine() -> usize {
    4
}

fn twentieth() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeBlock {
    pub betas: Vec<f64>,
    pub x0_radius: f64,
    pub eps: f64,
    pub t_final: f64,
    pub dt0: f64,
    pub n_paths: usize,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub r_cap: Option<f64>,
    #[serde(default = "default_half_width")]
    pub max_half_width: f64,
}

fn default_half_width() -> f64 {
    0.3
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate_blocks()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Every requested check has the blocks it needs.
    pub fn validate_blocks(&self) -> Result<()> {
        if self.dim < 3 {
            return Err(Error::Dimension(self.dim));
        }
        let need = |present: bool, block: &str, tag: CheckTag| {
            if present {
                Ok(())
            } else {
                Err(Error::Config(format!("check `{}` needs a [{block}] block", tag.as_str())))
            }
        };
        for tag in &self.checks {
            match tag {
                CheckTag::E1 | CheckTag::GradL2 => need(self.solver.is_some(), "solver", *tag)?,
                CheckTag::Dual => {
                    need(self.solver.is_some(), "solver", *tag)?;
                    need(self.weights.is_some(), "weights", *tag)?;
                }
                CheckTag::TwoEst => need(self.weights.is_some(), "weights", *tag)?,
                CheckTag::McPdeXval => {
                    need(self.solver.is_some(), "solver", *tag)?;
                    need(self.mc.is_some(), "mc", *tag)?;
                }
                CheckTag::Criticality => need(self.probe.is_some(), "probe", *tag)?,
                CheckTag::Mollifier => need(self.mollify.is_some(), "mollify", *tag)?,
                CheckTag::Certificate => {}
            }
        }
        if let Some(mc) = &self.mc {
            if let Some(p) = mc.probes.iter().find(|p| p.len() != self.dim) {
                return Err(Error::Config(format!("probe {p:?} does not have {} coordinates", self.dim)));
            }
        }
        Ok(())
    }

    /// The configuration with `seed` applied.
    pub fn with_seed(&self, seed: Option<u64>) -> Self {
        let mut c = self.clone();
        if let Some(s) = seed {
            c.seed = s;
        }
        c
    }

    /// Canonical JSON of the configuration, the input of [`Self::hash`].
    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.canonical_json()?.as_bytes())))
    }

    pub fn requests(&self, tag: CheckTag) -> bool {
        self.checks.contains(&tag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "zero"
checks = ["E1"]
[drift]
kind = "zero"
[grid]
points = 8
half_width = 2.0
[solver]
dt = 0.01
t_final = 0.1
"#;

    #[test]
    fn defaults_and_hash() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.dim, 3);
        assert_eq!(c.solver.as_ref().unwrap().p, 2.0);
        let h = c.hash().unwrap();
        assert_eq!(h.len(), 64);
        assert_eq!(h, c.with_seed(None).hash().unwrap());
        assert_ne!(h, c.with_seed(Some(5)).hash().unwrap());
    }

    #[test]
    fn unknown_kind_and_missing_blocks_are_rejected() {
        let bad = MINIMAL.replace("kind = \"zero\"", "kind = \"vortex\"");
        assert!(matches!(ExperimentConfig::from_toml_str(&bad), Err(Error::Config(_))));
        let bad = MINIMAL.replace("checks = [\"E1\"]", "checks = [\"dual\"]");
        let err = ExperimentConfig::from_toml_str(&bad).unwrap_err().to_string();
        assert!(err.contains("[weights]"), "{err}");
    }
}
