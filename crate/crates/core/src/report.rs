//! Pass/fail records for individual checks and the reports that collect them.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CheckTag {
    #[serde(rename = "E1")]
    E1,
    #[serde(rename = "gradL2")]
    GradL2,
    #[serde(rename = "dual")]
    Dual,
    #[serde(rename = "two_est")]
    TwoEst,
    #[serde(rename = "criticality")]
    Criticality,
    #[serde(rename = "mc_pde_xval")]
    McPdeXval,
    #[serde(rename = "certificate")]
    Certificate,
    #[serde(rename = "mollifier")]
    Mollifier,
}

impl CheckTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            CheckTag::E1 => "E1",
            CheckTag::GradL2 => "gradL2",
            CheckTag::Dual => "dual",
            CheckTag::TwoEst => "two_est",
            CheckTag::Criticality => "criticality",
            CheckTag::McPdeXval => "mc_pde_xval",
            CheckTag::Certificate => "certificate",
            CheckTag::Mollifier => "mollifier",
        }
    }
}

/// One verified inequality `lhs ≤ constant · bound · (1 + tolerance)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub tag: CheckTag,
    #[serde(with = "lenient_f64")]
    pub lhs: f64,
    #[serde(with = "lenient_f64")]
    pub bound: f64,
    #[serde(with = "lenient_f64")]
    pub constant: f64,
    #[serde(with = "lenient_f64")]
    pub tolerance: f64,
    pub passed: bool,
    /// `lhs / (constant · bound) − 1`; negative when there is room.
    #[serde(with = "lenient_f64")]
    pub margin: f64,
    /// Violated admissibility condition, when the check was refused.
    pub gate: Option<String>,
    #[serde(with = "lenient_map")]
    pub details: BTreeMap<String, f64>,
}

impl CheckReport {
    pub fn inequality(name: impl Into<String>, tag: CheckTag, lhs: f64, bound: f64, constant: f64, tolerance: f64) -> Self {
        let rhs = constant * bound;
        let margin = if rhs > 0.0 {
            lhs / rhs - 1.0
        } else if lhs <= 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Self {
            name: name.into(),
            tag,
            lhs,
            bound,
            constant,
            tolerance,
            passed: lhs <= rhs * (1.0 + tolerance) || (lhs <= 0.0 && rhs >= 0.0),
            margin,
            gate: None,
            details: BTreeMap::new(),
        }
    }

    /// A check that was not run because `gate` failed.
    pub fn refused(name: impl Into<String>, tag: CheckTag, gate: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            tag,
            lhs: f64::NAN,
            bound: f64::NAN,
            constant: 1.0,
            tolerance: 0.0,
            passed: false,
            margin: f64::NAN,
            gate: Some(gate.into()),
            details: BTreeMap::new(),
        }
    }

    pub fn with_detail(mut self, key: &str, value: f64) -> Self {
        self.details.insert(key.to_string(), value);
        self
    }

    pub fn summary_line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        match &self.gate {
            Some(g) => format!("[{status}] {} ({}): refused, {g}", self.name, self.tag.as_str()),
            None => format!(
                "[{status}] {} ({}): lhs = {:.6e}, bound = {:.6e} x {}, tol = {}, margin = {:+.3e}",
                self.name,
                self.tag.as_str(),
                self.lhs,
                self.bound,
                self.constant,
                self.tolerance,
                self.margin
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub config_hash: String,
    pub seed: u64,
    pub checks: Vec<CheckReport>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "config_hash = {}", self.config_hash);
        let _ = writeln!(s, "seed = {}", self.seed);
        for c in &self.checks {
            let _ = writeln!(s, "{}", c.summary_line());
            for (k, v) in &c.details {
                let _ = writeln!(s, "    {k} = {v:.6e}");
            }
        }
        let passed = self.checks.iter().filter(|c| c.passed).count();
        let _ = writeln!(s, "{passed}/{} checks passed", self.checks.len());
        s
    }
}

/// JSON has no NaN or infinity; those are written as strings.
mod lenient_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    pub(super) enum Repr {
        Number(f64),
        Text(String),
    }

    pub(super) fn to_repr_str(v: f64) -> Option<&'static str> {
        if v.is_nan() {
            Some("NaN")
        } else if v == f64::INFINITY {
            Some("inf")
        } else if v == f64::NEG_INFINITY {
            Some("-inf")
        } else {
            None
        }
    }

    pub(super) fn from_repr<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "NaN" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(E::custom(format!("not a number: {other}"))),
            },
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        match to_repr_str(*v) {
            Some(t) => s.serialize_str(t),
            None => s.serialize_f64(*v),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }
}

mod lenient_map {
    use std::collections::BTreeMap;

    use serde::ser::SerializeMap;
    use serde::{Deserialize, Deserializer, Serializer};

    use super::lenient_f64::{from_repr, to_repr_str, Repr};

    pub fn serialize<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(m.len()))?;
        for (k, v) in m {
            match to_repr_str(*v) {
                Some(t) => map.serialize_entry(k, t)?,
                None => map.serialize_entry(k, v)?,
            }
        }
        map.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
        BTreeMap::<String, Repr>::deserialize(d)?
            .into_iter()
            .map(|(k, r)| from_repr(r).map(|v| (k, v)))
            .collect()
    }
}
