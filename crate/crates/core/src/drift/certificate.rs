use serde::{Deserialize, Serialize};

use super::field::unit_ball_volume;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateMethod {
    HardyAnalytic,
    Strichartz,
    LdSplit,
    Sum,
    NumericEstimate,
}

/// Witness for `‖bφ‖₂² ≤ δ‖∇φ‖₂² + c_δ‖φ‖₂²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormBoundCertificate {
    pub delta: f64,
    pub c_delta: f64,
    pub lambda: f64,
    pub method: CertificateMethod,
}

impl FormBoundCertificate {
    pub fn new(delta: f64, c_delta: f64, lambda: f64, method: CertificateMethod) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(invalid("delta", format!("must be finite and >= 0, got {delta}")));
        }
        if !(c_delta >= 0.0 && c_delta.is_finite()) {
            return Err(invalid("c_delta", format!("must be finite and >= 0, got {c_delta}")));
        }
        if !(lambda >= 0.0) {
            return Err(invalid("lambda", format!("must be >= 0, got {lambda}")));
        }
        Ok(Self {
            delta,
            c_delta,
            lambda,
            method,
        })
    }

    pub fn sqrt_delta(&self) -> f64 {
        self.delta.sqrt()
    }

    /// Certificate for `c · b`: both constants scale by `c²`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            delta: self.delta * c * c,
            c_delta: self.c_delta * c * c,
            ..*self
        }
    }
}

/// Hardy's inequality with constant `(d−2)²/4`: `δ = (2β/(d−2))²`, `c_δ = 0`.
pub fn hardy_certificate(d: usize, beta: f64) -> Result<FormBoundCertificate> {
    if d < 3 {
        return Err(Error::Dimension(d));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(invalid("beta", format!("must be positive, got {beta}")));
    }
    let s = 2.0 * beta / (d as f64 - 2.0);
    FormBoundCertificate::new(s * s, 0.0, 0.0, CertificateMethod::HardyAnalytic)
}

/// Sharp Strichartz bound from the weak `L^d` norm:
/// `√δ = ‖b‖_{d,w} Ω_d^{-1/d} · 2/(d−2)`, uniform in `λ`.
pub fn strichartz_certificate(d: usize, weak_norm: f64) -> Result<FormBoundCertificate> {
    if d < 3 {
        return Err(Error::Dimension(d));
    }
    if !(weak_norm >= 0.0 && weak_norm.is_finite()) {
        return Err(invalid("weak_norm", format!("must be finite and >= 0, got {weak_norm}")));
    }
    let s = weak_norm * unit_ball_volume(d).powf(-1.0 / d as f64) * 2.0 / (d as f64 - 2.0);
    FormBoundCertificate::new(s * s, 0.0, 0.0, CertificateMethod::Strichartz)
}

/// `√δ = √δ₁ + √δ₂`, `c_δ = 2(c₁ + c₂)`.
pub fn certificate_sum(a: &FormBoundCertificate, b: &FormBoundCertificate) -> FormBoundCertificate {
    let s = a.sqrt_delta() + b.sqrt_delta();
    FormBoundCertificate {
        delta: s * s,
        c_delta: 2.0 * (a.c_delta + b.c_delta),
        lambda: a.lambda.max(b.lambda),
        method: CertificateMethod::Sum,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hardy_values() {
        assert!((hardy_certificate(4, 1.0).unwrap().delta - 1.0).abs() < 1e-15);
        assert!((hardy_certificate(5, 1.5).unwrap().delta - 1.0).abs() < 1e-15);
        assert!(hardy_certificate(3, 1e-9).unwrap().delta < 1e-17);
        assert_eq!(hardy_certificate(3, 0.3).unwrap().c_delta, 0.0);
    }

    #[test]
    fn strichartz_values() {
        assert_eq!(strichartz_certificate(3, 0.0).unwrap().delta, 0.0);
        let w = unit_ball_volume(4).powf(0.25);
        assert!((strichartz_certificate(4, w).unwrap().delta - 1.0).abs() < 1e-14);
        // Hardy weak norm β Ω_d^{1/d} reproduces the Hardy constant exactly
        let w = 0.4 * unit_ball_volume(3).cbrt();
        let c = strichartz_certificate(3, w).unwrap();
        assert!((c.sqrt_delta() - 0.8).abs() < 1e-14);
    }

    #[test]
    fn sum_rule() {
        let zero = FormBoundCertificate::new(0.0, 0.0, 0.0, CertificateMethod::HardyAnalytic).unwrap();
        let c = FormBoundCertificate::new(0.3, 0.7, 1.0, CertificateMethod::NumericEstimate).unwrap();
        let s = certificate_sum(&zero, &c);
        assert!((s.delta - 0.3).abs() < 1e-15);
        assert!((s.c_delta - 1.4).abs() < 1e-15);
        let one = FormBoundCertificate::new(1.0, 0.0, 0.0, CertificateMethod::HardyAnalytic).unwrap();
        assert!((certificate_sum(&one, &one).delta - 4.0).abs() < 1e-15);
        let q = FormBoundCertificate::new(0.25, 0.0, 0.0, CertificateMethod::HardyAnalytic).unwrap();
        assert!((certificate_sum(&q, &q).delta - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_negative_constants() {
        assert!(FormBoundCertificate::new(-0.1, 0.0, 0.0, CertificateMethod::Sum).is_err());
        assert!(FormBoundCertificate::new(0.1, -1.0, 0.0, CertificateMethod::Sum).is_err());
    }
}
