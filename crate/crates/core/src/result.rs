use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    WilsonLoop,
    EnclosedFlux,
    FieldOverlap,
    AxisReduction,
    AmpereReduction,
    ShellLinking,
    ElectricPotential,
    ElectricFieldOverlap,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::WilsonLoop,
        Method::EnclosedFlux,
        Method::FieldOverlap,
        Method::AxisReduction,
        Method::AmpereReduction,
        Method::ShellLinking,
        Method::ElectricPotential,
        Method::ElectricFieldOverlap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::WilsonLoop => "wilson-loop",
            Method::EnclosedFlux => "enclosed-flux",
            Method::FieldOverlap => "field-overlap",
            Method::AxisReduction => "axis-reduction",
            Method::AmpereReduction => "ampere-reduction",
            Method::ShellLinking => "shell-linking",
            Method::ElectricPotential => "electric-potential",
            Method::ElectricFieldOverlap => "electric-field-overlap",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A phase in radians (unwrapped) together with its quadrature diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseResult {
    pub phase: f64,
    pub abs_error_estimate: f64,
    pub method: Method,
    pub n_evaluations: u64,
    pub converged: bool,
}

impl PhaseResult {
    /// Result of a closed-form evaluation: error is rounding only.
    pub fn exact(method: Method, phase: f64, n_evaluations: u64) -> Self {
        Self {
            phase,
            abs_error_estimate: 8.0 * f64::EPSILON * phase.abs(),
            method,
            n_evaluations,
            converged: true,
        }
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.phase *= factor;
        self.abs_error_estimate *= factor.abs();
        self
    }
}

/// Express `p` in units of q Phi / hbar, so that the textbook AB phase maps to 1.
pub fn normalized_phase(p: &PhaseResult, charge: f64, flux: f64, hbar: f64) -> Result<f64> {
    if charge == 0.0 {
        return Err(Error::ZeroNormalization("charge"));
    }
    if flux == 0.0 {
        return Err(Error::ZeroNormalization("flux"));
    }
    Ok(p.phase * hbar / (charge * flux))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phase(v: f64) -> PhaseResult {
        PhaseResult::exact(Method::WilsonLoop, v, 1)
    }

    #[test]
    fn normalization_examples() {
        let (q, flux, hbar) = (1.6e-19, 2.5e-15, 1.054_571_817e-34);
        let unit = q * flux / hbar;
        assert!((normalized_phase(&phase(unit), q, flux, hbar).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(normalized_phase(&phase(0.0), q, flux, hbar).unwrap(), 0.0);
        assert!((normalized_phase(&phase(2.0 * unit), q, flux, hbar).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_normalization_rejected() {
        assert_eq!(normalized_phase(&phase(1.0), 0.0, 1.0, 1.0), Err(Error::ZeroNormalization("charge")));
        assert_eq!(normalized_phase(&phase(1.0), 1.0, 0.0, 1.0), Err(Error::ZeroNormalization("flux")));
    }
}
