//! Aharonov-Bohm phases from vector potentials, enclosed flux, and field overlap integrals.

pub mod constants;
pub mod error;
pub mod fields;
pub mod phases;
pub mod quadrature;
pub mod result;
pub mod scenario;
pub mod sources;
pub mod vector;

pub use constants::{PhysicalConstants, UnitSystem};
pub use error::{Error, Result};
pub use quadrature::QuadratureSpec;
pub use result::{normalized_phase, Method, PhaseResult};
pub use vector::Vec3;
