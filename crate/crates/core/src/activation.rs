//! Sigmoidal activations and their inverses.
//!
//! The inverse clamps its argument into `[clamp_eps, 1 − clamp_eps]` first, so
//! any finite response maps to a finite pre-activation.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_CLAMP_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sigmoid {
    /// `1 / (1 + e^{-x})`
    Logistic,
    /// `(1 + erf x) / 2`
    Erf,
}

impl std::str::FromStr for Sigmoid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(Sigmoid::Logistic),
            "erf" => Ok(Sigmoid::Erf),
            _ => Err(Error::InvalidArgument(format!("unknown activation `{s}`"))),
        }
    }
}

impl std::fmt::Display for Sigmoid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Sigmoid::Logistic => "logistic",
            Sigmoid::Erf => "erf",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ActivationKind {
    pub kind: Sigmoid,
    pub clamp_eps: f64,
}

impl Default for ActivationKind {
    fn default() -> Self {
        ActivationKind { kind: Sigmoid::Logistic, clamp_eps: DEFAULT_CLAMP_EPS }
    }
}

impl ActivationKind {
    pub fn new(kind: Sigmoid, clamp_eps: f64) -> Result<Self> {
        if !(clamp_eps > 0.0 && clamp_eps < 0.5) {
            return Err(Error::InvalidArgument(format!("clamp_eps must lie in (0, 0.5), got {clamp_eps}")));
        }
        Ok(ActivationKind { kind, clamp_eps })
    }

    pub fn logistic() -> Self {
        ActivationKind::default()
    }

    pub fn erf() -> Self {
        ActivationKind { kind: Sigmoid::Erf, clamp_eps: DEFAULT_CLAMP_EPS }
    }

    #[inline]
    pub fn forward(&self, x: f64) -> f64 {
        match self.kind {
            Sigmoid::Logistic => logistic(x),
            Sigmoid::Erf => erf_sigmoid(x),
        }
    }

    pub fn inverse(&self, y: f64) -> f64 {
        let y = y.clamp(self.clamp_eps, 1.0 - self.clamp_eps);
        match self.kind {
            Sigmoid::Logistic => y.ln() - (-y).ln_1p(),
            Sigmoid::Erf => erf_sigmoid_inverse(y),
        }
    }
}

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn erf_sigmoid(x: f64) -> f64 {
    // erfc keeps full relative precision in both tails
    if x < 0.0 {
        0.5 * libm::erfc(-x)
    } else {
        1.0 - 0.5 * libm::erfc(x)
    }
}

fn erf_sigmoid_inverse(y: f64) -> f64 {
    let mut x = erf_inv_approx(2.0 * y - 1.0);
    for _ in 0..3 {
        let slope = (-x * x).exp() / PI.sqrt();
        if slope == 0.0 {
            break;
        }
        x -= (erf_sigmoid(x) - y) / slope;
    }
    x
}

/// Inverse error function on `(-1, 1)`: a rational starting guess polished by
/// Newton steps on `erf(x) = z`.
pub fn erf_inv(z: f64) -> f64 {
    if z <= -1.0 {
        return f64::NEG_INFINITY;
    }
    if z >= 1.0 {
        return f64::INFINITY;
    }
    let mut x = erf_inv_approx(z);
    for _ in 0..3 {
        let slope = 2.0 / PI.sqrt() * (-x * x).exp();
        if slope == 0.0 {
            break;
        }
        x -= (libm::erf(x) - z) / slope;
    }
    x
}

/// Giles' single-precision approximation (relative error about 1e-7).
fn erf_inv_approx(z: f64) -> f64 {
    let mut w = -((1.0 - z) * (1.0 + z)).ln();
    let p = if w < 5.0 {
        w -= 2.5;
        [
            2.810_226_36e-08,
            3.432_739_39e-07,
            -3.523_387_7e-06,
            -4.391_506_54e-06,
            0.000_218_580_87,
            -0.001_253_725_03,
            -0.004_177_681_64,
            0.246_640_727,
            1.501_409_41,
        ]
        .iter()
        .fold(0.0, |p, &c| c + p * w)
    } else {
        w = w.sqrt() - 3.0;
        [
            -0.000_200_214_257,
            0.000_100_950_558,
            0.001_349_343_22,
            -0.003_673_428_44,
            0.005_739_507_73,
            -0.007_622_461_3,
            0.009_438_870_47,
            1.001_674_06,
            2.832_976_82,
        ]
        .iter()
        .fold(0.0, |p, &c| c + p * w)
    };
    p * z
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn logistic_symmetry_point() {
        let a = ActivationKind::logistic();
        assert_eq!(a.forward(0.0), 0.5);
        assert_eq!(a.inverse(0.5), 0.0);
    }

    #[test]
    fn inverse_clamps() {
        let a = ActivationKind::new(Sigmoid::Logistic, 0.01).unwrap();
        let expected = (0.99f64 / 0.01).ln();
        assert!((a.inverse(1.0) - expected).abs() < 1e-12);
        assert!((a.inverse(1.0) - 4.59512).abs() < 1e-5);
        assert!((a.inverse(-3.0) + expected).abs() < 1e-12);
    }

    #[test]
    fn erf_round_trip_at_point_three() {
        let a = ActivationKind::erf();
        assert!((a.inverse(a.forward(0.3)) - 0.3).abs() < 1e-9);
        assert_eq!(a.forward(0.0), 0.5);
    }

    #[test]
    fn erf_inv_known_values() {
        assert_eq!(erf_inv(0.0), 0.0);
        for &x in &[1e-8, 0.1, 0.5, 1.0, 2.0, 3.5, -0.7] {
            let z = libm::erf(x);
            // z carries a relative rounding error of about 1 ulp, which moves the
            // exact inverse by ulp(z) / erf'(x)
            let slope = 2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp();
            let tol = 1e-12 * x.abs().max(1.0) + 4.0 * f64::EPSILON * z.abs() / slope;
            assert!((erf_inv(z) - x).abs() <= tol, "x = {x}");
        }
    }

    #[test]
    fn bad_clamp_rejected() {
        assert!(ActivationKind::new(Sigmoid::Erf, 0.0).is_err());
        assert!(ActivationKind::new(Sigmoid::Erf, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn inverse_undoes_forward(x in -10.0f64..10.0, erf in any::<bool>()) {
            let a = if erf { ActivationKind::erf() } else { ActivationKind::logistic() };
            let y = a.forward(x);
            prop_assume!(y >= a.clamp_eps && y <= 1.0 - a.clamp_eps);
            prop_assert!((a.inverse(y) - x).abs() <= 1e-9);
        }

        #[test]
        fn forward_is_monotone_and_bounded(x in -50.0f64..50.0, dx in 1e-3f64..1.0, erf in any::<bool>()) {
            let a = if erf { ActivationKind::erf() } else { ActivationKind::logistic() };
            let (lo, hi) = (a.forward(x), a.forward(x + dx));
            prop_assert!((0.0..=1.0).contains(&lo));
            prop_assert!(lo <= hi);
        }
    }
}
