use thiserror::Error;

use crate::vector::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid {field}: {message}")]
    Invalid { field: &'static str, message: String },

    #[error("field evaluated at {point:?}, within {distance:e} of a singular source (exclusion radius {exclusion:e})")]
    Singular { point: Vec3, distance: f64, exclusion: f64 },

    #[error("time {t} outside trajectory period [0, {period}]")]
    TimeOutOfRange { t: f64, period: f64 },

    #[error("integrand returned a non-finite value at {location:?}")]
    NonFinite { location: Vec<f64> },

    #[error("field magnitude {magnitude:e} below tracing threshold at {point:?}")]
    FieldUnderflow { point: Vec3, magnitude: f64 },

    #[error("linking number did not resolve to an integer (residual {residual:.3})")]
    Linking { residual: f64 },

    #[error("curve passes within {distance:e} of the axis")]
    AxisCrossing { distance: f64 },

    #[error("geometry mismatch: {0}")]
    Geometry(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("trajectory enters the field-support region of the source")]
    TrajectoryInSupport,

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("{0}")]
    Io(String),

    #[error("normalization undefined: {0} is zero")]
    ZeroNormalization(&'static str),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(field: &'static str, message: impl Into<String>) -> Error {
    Error::Invalid { field, message: message.into() }
}
