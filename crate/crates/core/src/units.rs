//! Unit conventions.
//!
//! Every rate is stored as an angular rate in inverse picoseconds. Inputs
//! quoted as ordinary frequencies ("2π × 500 GHz") enter through
//! [`Rate::from_ghz`] / [`Rate::from_thz`], which apply the 2π; lifetimes
//! enter through [`Rate::from_lifetime_ns`], which does not.

use std::f64::consts::TAU;
use std::fmt;
use std::ops::{Add, Div, Mul, Sub};

/// Speed of light in nm/ps.
pub const SPEED_OF_LIGHT_NM_PER_PS: f64 = 299_792.458;

/// An angular rate in ps⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Rate(f64);

impl Rate {
    pub const ZERO: Rate = Rate(0.0);

    /// Wraps a value already expressed in ps⁻¹.
    pub const fn per_ps(value: f64) -> Self {
        Rate(value)
    }

    /// Ordinary frequency in GHz, stored as 2π·f·10⁻³ ps⁻¹.
    pub fn from_ghz(f: f64) -> Self {
        Rate(TAU * f * 1e-3)
    }

    /// Ordinary frequency in THz, stored as 2π·f ps⁻¹.
    pub fn from_thz(f: f64) -> Self {
        Rate(TAU * f)
    }

    /// Decay rate of a lifetime given in ns (no factor 2π).
    pub fn from_lifetime_ns(tau_ns: f64) -> Self {
        Rate(1e-3 / tau_ns)
    }

    /// Optical angular frequency of a vacuum wavelength in nm.
    pub fn from_wavelength_nm(lambda_nm: f64) -> Self {
        Rate(TAU * SPEED_OF_LIGHT_NM_PER_PS / lambda_nm)
    }

    pub const fn value(self) -> f64 {
        self.0
    }

    pub fn to_ghz(self) -> f64 {
        self.0 / (TAU * 1e-3)
    }

    pub fn to_thz(self) -> f64 {
        self.0 / TAU
    }

    pub fn to_lifetime_ns(self) -> f64 {
        1e-3 / self.0
    }

    /// Vacuum wavelength in nm, λ = 2πc/ω.
    pub fn to_wavelength_nm(self) -> f64 {
        TAU * SPEED_OF_LIGHT_NM_PER_PS / self.0
    }

    pub fn sqrt(self) -> f64 {
        self.0.sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ps^-1", self.0)
    }
}

impl Add for Rate {
    type Output = Rate;
    fn add(self, rhs: Rate) -> Rate {
        Rate(self.0 + rhs.0)
    }
}

impl Sub for Rate {
    type Output = Rate;
    fn sub(self, rhs: Rate) -> Rate {
        Rate(self.0 - rhs.0)
    }
}

impl Mul<f64> for Rate {
    type Output = Rate;
    fn mul(self, rhs: f64) -> Rate {
        Rate(self.0 * rhs)
    }
}

impl Mul<Rate> for f64 {
    type Output = Rate;
    fn mul(self, rhs: Rate) -> Rate {
        Rate(self * rhs.0)
    }
}

impl Div<f64> for Rate {
    type Output = Rate;
    fn div(self, rhs: f64) -> Rate {
        Rate(self.0 / rhs)
    }
}

/// Ratio of two rates.
impl Div for Rate {
    type Output = f64;
    fn div(self, rhs: Rate) -> f64 {
        self.0 / rhs.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ghz_convention() {
        let r = Rate::from_ghz(500.0);
        assert!((r.value() - TAU * 0.5).abs() < 1e-15);
        assert!((Rate::from_thz(0.5).value() - r.value()).abs() < 1e-15);
    }

    #[test]
    fn lifetime_has_no_two_pi() {
        let r = Rate::from_lifetime_ns(8.3);
        assert!((r.value() - 1.0 / 8300.0).abs() < 1e-18);
        assert!((r.to_lifetime_ns() - 8.3).abs() < 1e-12);
    }

    #[test]
    fn siv_wavelength() {
        let w = Rate::from_thz(405.0);
        let lambda = w.to_wavelength_nm();
        assert!((lambda - SPEED_OF_LIGHT_NM_PER_PS / 405.0).abs() < 1e-9);
        assert!((lambda - 740.228).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn ghz_round_trip(x in 1e-6f64..1e9) {
            let back = Rate::from_ghz(x).to_ghz();
            prop_assert!(((back - x) / x).abs() < 1e-12);
        }

        #[test]
        fn wavelength_round_trip(lambda in 100.0f64..5000.0) {
            let back = Rate::from_wavelength_nm(lambda).to_wavelength_nm();
            prop_assert!(((back - lambda) / lambda).abs() < 1e-12);
        }
    }
}
