//! Kernel functions for the density estimator.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// `0.5·exp(−u)`, convex on `u ≥ 0`.
    Exponential,
    /// `exp(−u²/2) / 2π`, the standard bivariate normal profile.
    Gaussian,
}

/// Kernel shape plus its width `h` in kilometres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    kind: KernelKind,
    width_km: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, width_km: f64) -> Result<Self> {
        if !(width_km.is_finite() && width_km > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "kernel width must be positive and finite, got {width_km}"
            )));
        }
        Ok(Self { kind, width_km })
    }

    pub fn exponential(width_km: f64) -> Result<Self> {
        Self::new(KernelKind::Exponential, width_km)
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn width_km(&self) -> f64 {
        self.width_km
    }

    /// Kernel value at the scaled distance `u = d / h`.
    pub fn eval(&self, u: f64) -> Result<f64> {
        if u.is_nan() || u < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "kernel argument must be non-negative, got {u}"
            )));
        }
        Ok(self.value(u))
    }

    #[inline]
    pub(crate) fn value(&self, u: f64) -> f64 {
        match self.kind {
            KernelKind::Exponential => 0.5 * (-u).exp(),
            KernelKind::Gaussian => (-0.5 * u * u).exp() / (2.0 * PI),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_values() {
        let k = KernelSpec::exponential(100.0).unwrap();
        assert_eq!(k.eval(0.0).unwrap(), 0.5);
        assert_eq!(k.eval(1.0).unwrap(), 0.5 * (-1.0f64).exp());
        assert!((k.eval(1.0).unwrap() - 0.183_940).abs() < 1e-6);
        assert_eq!(k.eval(f64::INFINITY).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_at_zero() {
        let k = KernelSpec::new(KernelKind::Gaussian, 100.0).unwrap();
        assert_eq!(k.eval(0.0).unwrap(), 1.0 / (2.0 * PI));
        assert!((k.eval(0.0).unwrap() - 0.159_155).abs() < 1e-6);
    }

    #[test]
    fn negative_argument_is_rejected() {
        let k = KernelSpec::exponential(100.0).unwrap();
        assert!(k.eval(-0.1).is_err());
        assert!(k.eval(f64::NAN).is_err());
    }

    #[test]
    fn width_must_be_positive() {
        assert!(KernelSpec::exponential(0.0).is_err());
        assert!(KernelSpec::exponential(-5.0).is_err());
        assert!(KernelSpec::exponential(f64::INFINITY).is_err());
    }

    #[test]
    fn strictly_decreasing() {
        for kind in [KernelKind::Exponential, KernelKind::Gaussian] {
            let k = KernelSpec::new(kind, 1.0).unwrap();
            let mut prev = k.eval(0.0).unwrap();
            for n in 1..200 {
                let v = k.eval(n as f64 * 0.05).unwrap();
                assert!(v > 0.0 && v < prev, "{kind:?} at step {n}");
                prev = v;
            }
        }
    }

    #[test]
    fn exponential_is_convex_gaussian_is_not() {
        let second_diff =
            |k: &KernelSpec, u: f64, du: f64| k.value(u + du) - 2.0 * k.value(u) + k.value(u - du);
        let exp = KernelSpec::exponential(1.0).unwrap();
        let gauss = KernelSpec::new(KernelKind::Gaussian, 1.0).unwrap();
        let du = 1e-3;
        for n in 1..5000 {
            let u = n as f64 * 2e-3;
            assert!(second_diff(&exp, u, du) > 0.0, "exponential at u={u}");
        }
        // The normal profile has an inflection at u = 1.
        assert!(second_diff(&gauss, 0.5, du) < 0.0);
    }
}
