//! One-dimensional Schrödinger operators `H = -k d²/dx² + a x² + λ x⁴`.
//!
//! Two normalizations are in common use for the quartic oscillator. The
//! "half" convention `-½ψ'' + ½x²ψ` has the textbook spectrum `n + ½`; the
//! table convention `-ψ'' + x²ψ + λx⁴ψ` has spectrum `2n + 1` at `λ = 0` and
//! is the one the published anharmonic eigenvalue tables are quoted in.
//! [`PotentialSpec`] carries all three coefficients so either can be solved.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients of `-kinetic·d²/dx² + quad·x² + lambda·x⁴`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    kinetic_coeff: f64,
    quad_coeff: f64,
    lambda: f64,
}

impl PotentialSpec {
    pub fn new(kinetic_coeff: f64, quad_coeff: f64, lambda: f64) -> Result<Self> {
        if !(kinetic_coeff.is_finite() && kinetic_coeff > 0.0) {
            return Err(Error::InvalidPotential(format!(
                "kinetic coefficient must be finite and > 0, got {kinetic_coeff}"
            )));
        }
        if !(quad_coeff.is_finite() && quad_coeff >= 0.0) {
            return Err(Error::InvalidPotential(format!(
                "quadratic coefficient must be finite and >= 0, got {quad_coeff}"
            )));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidPotential(format!(
                "quartic coupling must be finite and >= 0 (spectrum is unbounded below otherwise), got {lambda}"
            )));
        }
        Ok(Self {
            kinetic_coeff,
            quad_coeff,
            lambda,
        })
    }

    /// `-½ψ'' + ½x²ψ`, the ħ = m = ω = 1 harmonic oscillator.
    pub fn harmonic_half() -> Self {
        Self {
            kinetic_coeff: 0.5,
            quad_coeff: 0.5,
            lambda: 0.0,
        }
    }

    /// `-ψ'' + x²ψ + λx⁴ψ`. Ground state tends to 1 as `λ → 0`.
    pub fn anharmonic_table(lambda: f64) -> Result<Self> {
        Self::new(1.0, 1.0, lambda)
    }

    pub fn kinetic_coeff(&self) -> f64 {
        self.kinetic_coeff
    }

    pub fn quad_coeff(&self) -> f64 {
        self.quad_coeff
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `quad·x² + λ·x⁴`.
    #[inline]
    pub fn potential_value(&self, x: f64) -> f64 {
        let x2 = x * x;
        x2 * (self.quad_coeff + self.lambda * x2)
    }

    /// `(Hψ)(x)` from the value and second derivative of ψ at `x`.
    #[inline]
    pub fn apply_hamiltonian(&self, p: &DifferentiablePoint) -> f64 {
        -self.kinetic_coeff * p.d2 + self.potential_value(p.x) * p.value
    }
}

/// ψ and its first two derivatives at one position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DifferentiablePoint {
    pub x: f64,
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl DifferentiablePoint {
    pub fn new(x: f64, value: f64, d1: f64, d2: f64) -> Self {
        Self { x, value, d1, d2 }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.value.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }

    /// `a·self + b·other` at the same position.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        debug_assert_eq!(self.x, other.x);
        Self {
            x: self.x,
            value: a * self.value + b * other.value,
            d1: a * self.d1 + b * other.d1,
            d2: a * self.d2 + b * other.d2,
        }
    }
}

/// Exact level `n + ½` of the harmonic oscillator in the half convention.
pub fn harmonic_exact_level(n: u32) -> f64 {
    f64::from(n) + 0.5
}

/// Multiplies an eigenvalue by a convention factor, e.g. 2 to go from the
/// half convention to the table convention.
pub fn rescale_convention(energy: f64, factor: f64) -> Result<f64> {
    if factor == 0.0 || !factor.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "convention factor must be finite and non-zero, got {factor}"
        )));
    }
    Ok(energy * factor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gaussian(x: f64) -> DifferentiablePoint {
        let g = (-0.5 * x * x).exp();
        DifferentiablePoint::new(x, g, -x * g, (x * x - 1.0) * g)
    }

    #[test]
    fn potential_examples() {
        assert_eq!(PotentialSpec::anharmonic_table(0.0).unwrap().potential_value(2.0), 4.0);
        let v = PotentialSpec::anharmonic_table(0.1).unwrap().potential_value(1.0);
        assert!((v - 1.1).abs() < 1e-15);
        assert_eq!(PotentialSpec::harmonic_half().potential_value(3.0), 4.5);
    }

    #[test]
    fn gaussian_is_ground_state_in_both_conventions() {
        let table = PotentialSpec::anharmonic_table(0.0).unwrap();
        let half = PotentialSpec::harmonic_half();
        for &x in &[-3.0, -0.4, 0.0, 0.9, 2.5] {
            let p = gaussian(x);
            assert!((table.apply_hamiltonian(&p) - p.value).abs() < 1e-15);
            assert!((half.apply_hamiltonian(&p) - 0.5 * p.value).abs() < 1e-15);
        }
    }

    #[test]
    fn quartic_term_on_gaussian() {
        // -ψ'' + (x² + 0.1x⁴)ψ = (1 + 0.1x⁴)e^{-x²/2}
        let spec = PotentialSpec::anharmonic_table(0.1).unwrap();
        let hv = spec.apply_hamiltonian(&gaussian(1.0));
        assert!((hv - 1.1 * (-0.5f64).exp()).abs() < 1e-15);
        assert!((hv - 0.667_183_726).abs() < 1e-9);
    }

    #[test]
    fn harmonic_levels() {
        assert_eq!(harmonic_exact_level(0), 0.5);
        assert_eq!(harmonic_exact_level(1), 1.5);
        assert_eq!(harmonic_exact_level(5), 5.5);
    }

    #[test]
    fn rescale() {
        assert!((rescale_convention(0.620099, 2.0).unwrap() - 1.240198).abs() < 1e-12);
        assert_eq!(rescale_convention(1.0, 1.0).unwrap(), 1.0);
        let half = 4.958_001_828_2 / 2.0;
        assert!((rescale_convention(half, 2.0).unwrap() - 4.958_001_828_2).abs() < 1e-12);
        assert!(rescale_convention(1.0, 0.0).is_err());
    }

    #[test]
    fn rejects_unbounded_operators() {
        assert!(PotentialSpec::new(0.0, 1.0, 0.0).is_err());
        assert!(PotentialSpec::new(-1.0, 1.0, 0.0).is_err());
        assert!(PotentialSpec::anharmonic_table(-0.1).is_err());
        assert!(PotentialSpec::new(1.0, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn eigen_ratio_is_one_for_gaussian() {
        let spec = PotentialSpec::anharmonic_table(0.0).unwrap();
        let mut x = -7.0;
        while x <= 7.0 {
            let p = gaussian(x);
            if p.value.abs() > 1e-12 {
                assert!((spec.apply_hamiltonian(&p) / p.value - 1.0).abs() < 1e-13, "x={x}");
            }
            x += 0.01;
        }
    }

    proptest! {
        #[test]
        fn potential_is_even(x in -50.0f64..50.0, lambda in 0.0f64..1e4) {
            let spec = PotentialSpec::anharmonic_table(lambda).unwrap();
            prop_assert_eq!(spec.potential_value(x), spec.potential_value(-x));
        }

        #[test]
        fn hamiltonian_is_linear(
            x in -5.0f64..5.0,
            u in prop::array::uniform3(-10.0f64..10.0),
            w in prop::array::uniform3(-10.0f64..10.0),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            lambda in 0.0f64..10.0,
        ) {
            let spec = PotentialSpec::anharmonic_table(lambda).unwrap();
            let p = DifferentiablePoint::new(x, u[0], u[1], u[2]);
            let q = DifferentiablePoint::new(x, w[0], w[1], w[2]);
            let lhs = spec.apply_hamiltonian(&p.combine(a, &q, b));
            let rhs = a * spec.apply_hamiltonian(&p) + b * spec.apply_hamiltonian(&q);
            let scale = 1.0 + lhs.abs() + rhs.abs() + spec.potential_value(x) * 100.0;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
        }
    }
}
