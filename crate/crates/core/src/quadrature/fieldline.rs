//! Field-line tracing: `dx/ds = B/|B|` with an embedded Dormand-Prince 5(4) pair.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::vector::Vec3;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Plane used to detect that a trace has come back around.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosurePlane {
    pub point: Vec3,
    pub normal: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceOptions {
    /// Local error per step, relative to `char_size`.
    pub tol: f64,
    /// Length scale of the source [m].
    pub char_size: f64,
    /// Closure ball radius relative to `char_size`.
    pub closure_tol: f64,
    /// Give up after this arclength, relative to `char_size`.
    pub max_arclength: f64,
    /// Largest step, relative to `char_size`.
    pub max_step: f64,
    /// Abort when |B| falls below this fraction of |B(seed)|.
    pub min_field_ratio: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            char_size: 1.0,
            closure_tol: 1e-6,
            max_arclength: 2000.0,
            max_step: 0.5,
            min_field_ratio: 1e-12,
        }
    }
}

impl TraceOptions {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tol", self.tol),
            ("char_size", self.char_size),
            ("closure_tol", self.closure_tol),
            ("max_arclength", self.max_arclength),
            ("max_step", self.max_step),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be positive"));
            }
        }
        if !(self.min_field_ratio >= 0.0) {
            return Err(invalid("min_field_ratio", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldLine {
    pub points: Vec<Vec3>,
    pub closed: bool,
    /// Flux coordinate of the shell the line belongs to; set by the caller.
    pub flux_label: f64,
    pub arclength: f64,
    /// Distance from the seed at the closest same-direction return through the closure plane.
    pub closure_gap: Option<f64>,
    pub n_evals: u64,
}

struct Tracer<'a, F> {
    field: &'a F,
    floor: f64,
    n_evals: u64,
}

impl<F: Fn(Vec3) -> Result<Vec3>> Tracer<'_, F> {
    fn direction(&mut self, x: Vec3) -> Result<Vec3> {
        self.n_evals += 1;
        let b = (self.field)(x)?;
        let m = b.norm();
        if !m.is_finite() {
            return Err(Error::NonFinite { location: x.to_array().to_vec() });
        }
        if m <= self.floor {
            return Err(Error::FieldUnderflow { point: x, magnitude: m });
        }
        Ok(b / m)
    }

    /// One step from `x` with slope `k1`; returns (x5, error vector, slope at x5).
    fn step(&mut self, x: Vec3, k1: Vec3, h: f64) -> Result<(Vec3, f64, Vec3)> {
        let mut k = [Vec3::ZERO; 7];
        k[0] = k1;
        for i in 1..7 {
            let mut y = x;
            for j in 0..i {
                if A[i][j] != 0.0 {
                    y += k[j] * (h * A[i][j]);
                }
            }
            debug_assert!(C[i] > 0.0);
            k[i] = self.direction(y)?;
        }
        let mut x5 = x;
        let mut err = Vec3::ZERO;
        for i in 0..7 {
            x5 += k[i] * (h * B5[i]);
            err += k[i] * (h * (B5[i] - B4[i]));
        }
        Ok((x5, err.norm(), k[6]))
    }
}

/// Trace the field line of `field` through `seed` until it closes or the
/// arclength cap is reached.
///
/// Closure: the trace crosses `plane` (by default through the seed, normal to
/// the field there) in the original direction, at a point within
/// `closure_tol * char_size` of the seed, with tangent aligned to the seed
/// tangent (dot product above 0.99). The crossing point is located by
/// re-integrating the final step with a shortened step size.
pub fn trace_field_line(
    field: impl Fn(Vec3) -> Result<Vec3>,
    seed: Vec3,
    plane: Option<ClosurePlane>,
    opts: &TraceOptions,
) -> Result<FieldLine> {
    opts.validate()?;
    let b0 = field(seed)?;
    let m0 = b0.norm();
    if !(m0 > 0.0) || !m0.is_finite() {
        return Err(Error::FieldUnderflow { point: seed, magnitude: m0 });
    }
    let mut tr = Tracer { field: &field, floor: opts.min_field_ratio * m0, n_evals: 1 };
    let t0 = b0 / m0;
    let plane = plane.unwrap_or(ClosurePlane { point: seed, normal: t0 });
    let g = |x: Vec3| (x - plane.point).dot(plane.normal);

    let atol = opts.tol * opts.char_size;
    let hmax = opts.max_step * opts.char_size;
    let smax = opts.max_arclength * opts.char_size;
    let ball = opts.closure_tol * opts.char_size;

    let mut x = seed;
    let mut k1 = t0;
    let mut s = 0.0;
    let mut h = (0.01 * opts.char_size).min(hmax);
    let mut points = vec![seed];
    let mut best_gap: Option<f64> = None;

    while s < smax {
        h = h.min(smax - s).min(hmax);
        let (xn, err, kn) = tr.step(x, k1, h)?;
        if err > atol {
            h *= (0.9 * (atol / err).powf(0.2)).max(0.2);
            if h < 1e-14 * opts.char_size {
                return Err(Error::NonFinite { location: x.to_array().to_vec() });
            }
            continue;
        }
        let (g0, g1) = (g(x), g(xn));
        if g0 < 0.0 && g1 >= 0.0 {
            let (hc, xc) = locate_crossing(&mut tr, x, k1, h, (g0, g1), &g, 1e-13 * opts.char_size)?;
            let gap = xc.distance(seed);
            best_gap = Some(best_gap.map_or(gap, |b: f64| b.min(gap)));
            if gap <= ball && tr.direction(xc)?.dot(t0) > 0.99 {
                points.push(seed);
                return Ok(FieldLine {
                    points,
                    closed: true,
                    flux_label: 0.0,
                    arclength: s + hc,
                    closure_gap: Some(gap),
                    n_evals: tr.n_evals,
                });
            }
        }
        x = xn;
        k1 = kn;
        s += h;
        points.push(x);
        let grow = if err > 0.0 { 0.9 * (atol / err).powf(0.2) } else { 5.0 };
        h *= grow.clamp(0.2, 5.0);
    }
    log::debug!("field line from {seed:?} not closed after arclength {s}");
    Ok(FieldLine { points, closed: false, flux_label: 0.0, arclength: s, closure_gap: best_gap, n_evals: tr.n_evals })
}

/// Step length in (0, h] at which the trace from `x` meets the plane `g = 0`,
/// by Illinois-modified regula falsi on re-integrated single steps.
fn locate_crossing<F: Fn(Vec3) -> Result<Vec3>>(
    tr: &mut Tracer<'_, F>,
    x: Vec3,
    k1: Vec3,
    h: f64,
    (g0, g1): (f64, f64),
    g: &impl Fn(Vec3) -> f64,
    eps: f64,
) -> Result<(f64, Vec3)> {
    let (mut a, mut fa) = (0.0, g0);
    let (mut b, mut fb) = (h, g1);
    let mut side = 0;
    let mut best = (h, x);
    for _ in 0..60 {
        let c = (a * fb - b * fa) / (fb - fa);
        let (xc, _, _) = tr.step(x, k1, c)?;
        let fc = g(xc);
        best = (c, xc);
        if fc.abs() <= eps || (b - a) <= 1e-15 * h {
            break;
        }
        if (fc < 0.0) == (fa < 0.0) {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    Ok(best)
}
