//! Adaptive integration, field-line tracing, and curve topology.

mod cubature;
mod fieldline;
mod gauss_kronrod;
mod topology;
mod volume;

pub use cubature::{integrate_box, Cubature};
pub use fieldline::{trace_field_line, ClosurePlane, FieldLine, TraceOptions};
pub use gauss_kronrod::{integrate_1d, integrate_1d_points, integrate_1d_scaled};
pub use topology::{circle_linking_number, linking_number, linking_number_with, min_distance, simplify_polyline, winding_number, Linking};
pub use volume::{integrate_3d, integrate_3d_with, Domain3, SingularMode, SingularPoint, VolumeOptions};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::vector::Vec3;

/// Tolerances and limits shared by every adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
    /// Outer radius for infinite 3D domains [m]; `None` lets the caller choose.
    pub truncation_radius: Option<f64>,
    /// Radius of the balls around declared singular points [m]; `None` lets the caller choose.
    pub exclusion_radius: Option<f64>,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-13,
            max_subdivisions: 200_000,
            truncation_radius: None,
            exclusion_radius: None,
        }
    }
}

impl QuadratureSpec {
    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_abs_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(invalid("rel_tol", "must be positive"));
        }
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return Err(invalid("abs_tol", "must be positive"));
        }
        if self.max_subdivisions < 1 {
            return Err(invalid("max_subdivisions", "must be at least 1"));
        }
        if let Some(r) = self.truncation_radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(invalid("truncation_radius", "must be positive"));
            }
        }
        if let Some(r) = self.exclusion_radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(invalid("exclusion_radius", "must be positive"));
            }
        }
        Ok(())
    }

    /// Error target for an integral of magnitude `value`.
    pub fn target(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral<V> {
    pub value: V,
    pub error: f64,
    pub n_evals: u64,
    pub converged: bool,
}

impl<V: Value> Integral<V> {
    pub(crate) fn map<W>(self, f: impl FnOnce(V) -> W) -> Integral<W> {
        Integral { value: f(self.value), error: self.error, n_evals: self.n_evals, converged: self.converged }
    }
}

/// Values an integrand may return: scalars, 3-vectors, or fixed-size arrays.
pub trait Value: Copy + Send + Sync + 'static {
    fn zero() -> Self;
    fn add(self, other: Self) -> Self;
    fn scale(self, s: f64) -> Self;
    /// Component-wise combination.
    fn zip(self, other: Self, f: impl Fn(f64, f64) -> f64) -> Self;
    /// Largest absolute component.
    fn max_abs(self) -> f64;
    fn all_finite(self) -> bool;

    fn sub(self, other: Self) -> Self {
        self.add(other.scale(-1.0))
    }
    fn abs(self) -> Self {
        self.zip(self, |a, _| a.abs())
    }
}

impl Value for f64 {
    fn zero() -> Self {
        0.0
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn zip(self, o: Self, f: impl Fn(f64, f64) -> f64) -> Self {
        f(self, o)
    }
    fn max_abs(self) -> f64 {
        self.abs()
    }
    fn all_finite(self) -> bool {
        self.is_finite()
    }
}

impl Value for Vec3 {
    fn zero() -> Self {
        Vec3::ZERO
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn zip(self, o: Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Vec3::new(f(self.x, o.x), f(self.y, o.y), f(self.z, o.z))
    }
    fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }
    fn all_finite(self) -> bool {
        self.is_finite()
    }
}

impl<const K: usize> Value for [f64; K] {
    fn zero() -> Self {
        [0.0; K]
    }
    fn add(self, o: Self) -> Self {
        std::array::from_fn(|i| self[i] + o[i])
    }
    fn scale(self, s: f64) -> Self {
        self.map(|v| v * s)
    }
    fn zip(self, o: Self, f: impl Fn(f64, f64) -> f64) -> Self {
        std::array::from_fn(|i| f(self[i], o[i]))
    }
    fn max_abs(self) -> f64 {
        self.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
    fn all_finite(self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// Deterministic pairwise sum: the result depends only on the order of `items`.
pub(crate) fn pairwise_sum<V: Value>(items: &[V]) -> V {
    match items.len() {
        0 => V::zero(),
        1 => items[0],
        n => {
            let (a, b) = items.split_at(n / 2);
            pairwise_sum(a).add(pairwise_sum(b))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        assert!(QuadratureSpec::default().validate().is_ok());
        let bad = QuadratureSpec { rel_tol: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = QuadratureSpec { max_subdivisions: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = QuadratureSpec { exclusion_radius: Some(-1.0), ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn pairwise_sum_matches_naive_for_small_inputs() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(pairwise_sum(&v), 15.0);
        assert_eq!(pairwise_sum::<f64>(&[]), 0.0);
    }
}
