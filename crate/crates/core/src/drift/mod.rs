//! Singular drift fields, their form-bound certificates and grid estimators.
//!
//! A drift `b` is form-bounded with relative bound `δ` when
//! `‖bφ‖₂² ≤ δ‖∇φ‖₂² + c_δ‖φ‖₂²` for all test functions `φ`. The analytic
//! certificates cover the Hardy drift and drifts of known weak `L^d` norm;
//! arbitrary sampled fields only get a numerical estimate.

mod certificate;
mod field;
pub mod io;
mod numeric;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use certificate::{
    certificate_sum, hardy_certificate, strichartz_certificate, CertificateMethod,
    FormBoundCertificate,
};
pub use field::{
    make_affine_drift, make_annulus_log_drift, make_grid_drift, make_hardy_drift,
    make_separable_drift, make_sum_drift, make_zero_drift, unit_ball_volume, CapRule, DriftField,
    DriftKind, GridDrift, Profile1d, SampledDrift, SingularSet,
};
pub(crate) use field::gamma_half_integer;
pub use numeric::{estimate_form_bound_numeric, weak_ld_norm, NumericFormBound, WeakLdEstimate};

use crate::error::{Error, Result};
use crate::spectral::Spectral;

/// Serializable description of a drift, as it appears in experiment files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftConfig {
    Zero,
    Hardy {
        beta: f64,
        #[serde(default = "plus_one")]
        sign: i32,
    },
    AnnulusLog {
        c: f64,
        alpha: f64,
        beta_exp: f64,
    },
    Separable {
        profile: Profile1d,
        map: Vec<f64>,
        direction: Vec<f64>,
    },
    Affine {
        matrix: Vec<f64>,
        offset: Vec<f64>,
    },
    /// Samples read from a `.fbg` or `.csv` file; relative paths resolve
    /// against the config file's directory.
    GridSampled { path: String },
    Sum { parts: Vec<DriftConfig> },
}

fn plus_one() -> i32 {
    1
}

impl DriftConfig {
    pub fn build(&self, d: usize, base_dir: &Path) -> Result<DriftField> {
        match self {
            DriftConfig::Zero => make_zero_drift(d),
            DriftConfig::Hardy { beta, sign } => make_hardy_drift(d, *beta, *sign),
            DriftConfig::AnnulusLog { c, alpha, beta_exp } => {
                make_annulus_log_drift(d, *c, *alpha, *beta_exp)
            }
            DriftConfig::Separable {
                profile,
                map,
                direction,
            } => make_separable_drift(profile.clone(), map.clone(), direction.clone()),
            DriftConfig::Affine { matrix, offset } => {
                make_affine_drift(matrix.clone(), offset.clone())
            }
            DriftConfig::GridSampled { path } => {
                let p = base_dir.join(path);
                let (values, jac) = if p.extension().is_some_and(|e| e == "csv") {
                    (io::read_grid_csv(&p)?, None)
                } else {
                    io::read_grid_binary(&p)?
                };
                if values.grid.dim() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: values.grid.dim(),
                    });
                }
                let jac = jac.or_else(|| Some(Spectral::new(&values.grid).jacobian(&values)));
                make_grid_drift(values, jac)
            }
            DriftConfig::Sum { parts } => make_sum_drift(
                parts
                    .iter()
                    .map(|p| p.build(d, base_dir))
                    .collect::<Result<_>>()?,
            ),
        }
    }

    /// Analytic certificate where one is known.
    pub fn analytic_certificate(&self, d: usize) -> Option<FormBoundCertificate> {
        match self {
            DriftConfig::Zero => {
                FormBoundCertificate::new(0.0, 0.0, 0.0, CertificateMethod::HardyAnalytic).ok()
            }
            DriftConfig::Hardy { beta, .. } => hardy_certificate(d, *beta).ok(),
            DriftConfig::Sum { parts } => {
                let mut certs = parts.iter().map(|p| p.analytic_certificate(d));
                let first = certs.next()??;
                certs.try_fold(first, |acc, c| Some(certificate_sum(&acc, &c?)))
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = DriftConfig::Sum {
            parts: vec![
                DriftConfig::Hardy { beta: 0.2, sign: -1 },
                DriftConfig::Zero,
            ],
        };
        let text = toml::to_string(&toml::Value::try_from(&cfg).unwrap()).unwrap();
        let back: DriftConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let c = cfg.analytic_certificate(3).unwrap();
        assert!((c.delta - 0.16).abs() < 1e-15);
    }

    #[test]
    fn unknown_kind_is_rejected() {
        let r: std::result::Result<DriftConfig, _> = toml::from_str("kind = \"vortex\"\nbeta = 1.0");
        assert!(r.is_err());
    }

    #[test]
    fn scaling_multiplies_analytic_delta_by_c_squared() {
        for c in [0.5, 2.0, 3.0] {
            let base = hardy_certificate(3, 0.3).unwrap();
            let scaled = hardy_certificate(3, 0.3 * c).unwrap();
            assert!((scaled.delta - c * c * base.delta).abs() < 1e-14);
            assert!((base.scaled(c).delta - scaled.delta).abs() < 1e-14);
            let w = 0.3 * unit_ball_volume(3).cbrt();
            let s1 = strichartz_certificate(3, w).unwrap();
            let s2 = strichartz_certificate(3, c * w).unwrap();
            assert!((s2.delta - c * c * s1.delta).abs() < 1e-14);
        }
    }
}
