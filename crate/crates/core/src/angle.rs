//! Polarization and analyzer angles.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

/// An angle in radians, kept in `[0, 2π)`.
///
/// All arithmetic wraps modulo 2π. Quantities that depend on polarization
/// (Malus probabilities, delay widths) only ever see differences of angles
/// through `cos 2x`/`sin 2x`, so they have period π.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Angle(f64);

impl Angle {
    pub const ZERO: Angle = Angle(0.0);

    /// Wraps `radians` into `[0, 2π)`. Non-finite input yields NaN, which
    /// config validation rejects.
    pub fn new(radians: f64) -> Self {
        let mut r = radians.rem_euclid(TAU);
        // rem_euclid can round up to exactly 2π for tiny negative inputs
        if r >= TAU {
            r = 0.0;
        }
        Angle(r)
    }

    pub fn from_degrees(degrees: f64) -> Self {
        Angle::new(degrees.to_radians())
    }

    #[inline]
    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    /// Distance to `other` modulo π, in `[0, π/2]`. Two angles that differ
    /// by π describe the same polarizer orientation.
    pub fn axial_distance(self, other: Angle) -> f64 {
        let d = (self.0 - other.0).rem_euclid(PI);
        d.min(PI - d)
    }
}

impl Add for Angle {
    type Output = Angle;
    fn add(self, rhs: Angle) -> Angle {
        Angle::new(self.0 + rhs.0)
    }
}

impl Sub for Angle {
    type Output = Angle;
    fn sub(self, rhs: Angle) -> Angle {
        Angle::new(self.0 - rhs.0)
    }
}

impl Neg for Angle {
    type Output = Angle;
    fn neg(self) -> Angle {
        Angle::new(-self.0)
    }
}

impl From<f64> for Angle {
    fn from(radians: f64) -> Self {
        Angle::new(radians)
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `cos²(ξ−θ)`, the probability that the polarizer sends a particle with
/// polarization `xi` to its +1 channel.
#[inline]
pub fn malus_probability(xi: Angle, theta: Angle) -> f64 {
    let c = (xi.0 - theta.0).cos();
    c * c
}

/// `|sin 2(ξ−θ)|`, the angular factor of the delay window.
#[inline]
pub fn delay_factor(xi: Angle, theta: Angle) -> f64 {
    (2.0 * (xi.0 - theta.0)).sin().abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wraps_into_canonical_range() {
        assert_eq!(Angle::new(TAU).radians(), 0.0);
        assert!((Angle::new(-PI / 2.0).radians() - 1.5 * PI).abs() < 1e-15);
        assert!((Angle::new(5.0 * PI).radians() - PI).abs() < 1e-12);
        assert_eq!(Angle::new(-1e-300).radians(), 0.0);
    }

    #[test]
    fn arithmetic_wraps() {
        let a = Angle::new(1.5 * PI) + Angle::new(PI);
        assert!((a.radians() - 0.5 * PI).abs() < 1e-12);
        let b = Angle::new(0.25) - Angle::new(0.5);
        assert!((b.radians() - (TAU - 0.25)).abs() < 1e-12);
    }

    #[test]
    fn axial_distance_identifies_opposite_orientations() {
        assert!(Angle::new(0.1).axial_distance(Angle::new(0.1 + PI)) < 1e-12);
        assert!((Angle::new(0.0).axial_distance(Angle::new(3.0 * PI / 4.0)) - PI / 4.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn stays_in_range(x in -1e6f64..1e6) {
            let a = Angle::new(x).radians();
            prop_assert!((0.0..TAU).contains(&a));
        }

        #[test]
        fn polarization_functions_have_period_pi(xi in 0.0f64..TAU, theta in 0.0f64..TAU) {
            let (a, b, c) = (Angle::new(xi), Angle::new(theta), Angle::new(theta + PI));
            prop_assert!((malus_probability(a, b) - malus_probability(a, c)).abs() < 1e-12);
            prop_assert!((delay_factor(a, b) - delay_factor(a, c)).abs() < 1e-12);
        }
    }
}
