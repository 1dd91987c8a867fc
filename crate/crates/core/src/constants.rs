//! Physical constants and the SI <-> natural-unit conversions.
//!
//! Natural units here mean mu0 = eps0 = hbar = 1 (so c = 1) with the metre
//! kept as the unit of length. The charge unit is then sqrt(eps0 * hbar * c)
//! and the time unit is one light-metre, 1 m / c.

use serde::{Deserialize, Serialize};

/// Vacuum permeability, CODATA 2018 [T m / A].
pub const MU0_SI: f64 = 1.256_637_062_12e-6;
/// Reduced Planck constant [J s].
pub const HBAR_SI: f64 = 1.054_571_817e-34;
/// Speed of light [m / s].
pub const C_SI: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Vacuum permeability.
    pub mu0: f64,
    /// Vacuum permittivity.
    pub eps0: f64,
    /// Reduced Planck constant.
    pub hbar: f64,
}

impl PhysicalConstants {
    /// SI values. `eps0` is derived from `mu0` and the exact speed of light.
    pub fn si() -> Self {
        Self { mu0: MU0_SI, eps0: 1.0 / (MU0_SI * C_SI * C_SI), hbar: HBAR_SI }
    }

    pub const fn natural() -> Self {
        Self { mu0: 1.0, eps0: 1.0, hbar: 1.0 }
    }

    /// Speed of light, 1/sqrt(eps0 mu0).
    pub fn c(&self) -> f64 {
        1.0 / (self.eps0 * self.mu0).sqrt()
    }

    /// 1 / (4 pi eps0), the Coulomb constant.
    pub fn coulomb_k(&self) -> f64 {
        1.0 / (4.0 * std::f64::consts::PI * self.eps0)
    }

    /// mu0 / (4 pi), the Biot-Savart prefactor.
    pub fn biot_savart_k(&self) -> f64 {
        self.mu0 / (4.0 * std::f64::consts::PI)
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::natural()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitSystem {
    #[serde(rename = "si")]
    Si,
    #[default]
    Natural,
}

impl UnitSystem {
    pub fn constants(self) -> PhysicalConstants {
        match self {
            UnitSystem::Si => PhysicalConstants::si(),
            UnitSystem::Natural => PhysicalConstants::natural(),
        }
    }
}

/// Conversion factors from SI quantities to natural units (multiply an SI
/// value by the factor to obtain the natural-unit value). Lengths are unchanged.
pub mod si_to_natural {
    use super::{C_SI, HBAR_SI, MU0_SI};

    /// sqrt(eps0 hbar c) = sqrt(hbar / (mu0 c)) in coulombs.
    pub fn charge_unit() -> f64 {
        (HBAR_SI / (MU0_SI * C_SI)).sqrt()
    }

    pub fn charge() -> f64 {
        1.0 / charge_unit()
    }

    /// Time unit is 1 m / c.
    pub fn time() -> f64 {
        C_SI
    }

    /// Current: charge per time.
    pub fn current() -> f64 {
        charge() / time()
    }

    /// Flux enters the phase as q Phi / hbar, so Phi_nat = Phi_SI * q_unit / hbar.
    pub fn flux() -> f64 {
        charge_unit() / HBAR_SI
    }

    /// Energy unit is hbar c / (1 m).
    pub fn energy() -> f64 {
        1.0 / (HBAR_SI * C_SI)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn speed_of_light_consistent_to_one_ulp() {
        for k in [PhysicalConstants::si(), PhysicalConstants::natural()] {
            let c = k.c();
            let residual = c * c * k.eps0 * k.mu0 - 1.0;
            assert!(residual.abs() <= f64::EPSILON, "residual {residual:e}");
        }
        assert_relative_eq!(PhysicalConstants::si().c(), C_SI, max_relative = 1e-15);
        assert_eq!(PhysicalConstants::natural().c(), 1.0);
    }

    #[test]
    fn si_eps0_matches_codata() {
        assert_relative_eq!(PhysicalConstants::si().eps0, 8.854_187_812_8e-12, max_relative = 1e-10);
    }

    #[test]
    fn phase_is_unit_independent() {
        // One flux quantum h/e with an electron charge gives a phase of 2 pi.
        let e = 1.602_176_634e-19;
        let phi0 = 2.0 * std::f64::consts::PI * HBAR_SI / e;
        let nat = (e * si_to_natural::charge()) * (phi0 * si_to_natural::flux());
        assert_relative_eq!(nat, 2.0 * std::f64::consts::PI, max_relative = 1e-12);
    }

    #[test]
    fn natural_units_fine_structure() {
        // alpha = e^2 / (4 pi eps0 hbar c) must be reproduced by the charge unit.
        let e = 1.602_176_634e-19 * si_to_natural::charge();
        let alpha = e * e / (4.0 * std::f64::consts::PI);
        assert_relative_eq!(alpha, 7.297_352_569_3e-3, max_relative = 1e-9);
    }
}
