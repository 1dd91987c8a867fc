//! Linking and winding numbers of closed polylines.
//!
//! Polylines are given as vertex lists; the closing segment from the last
//! vertex back to the first is implicit. A repeated final vertex is ignored.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::vector::Vec3;

/// Gauss linking integral of two closed polylines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linking {
    pub number: i64,
    /// Unrounded value of the double sum.
    pub raw: f64,
    /// `|raw - number|`.
    pub residual: f64,
    /// Closest approach between the two curves.
    pub min_distance: f64,
}

fn closed_vertices(c: &[Vec3]) -> &[Vec3] {
    match c {
        [first, .., last] if c.len() > 2 && first == last => &c[..c.len() - 1],
        _ => c,
    }
}

fn segments(c: &[Vec3]) -> impl Iterator<Item = (Vec3, Vec3)> + '_ {
    let v = closed_vertices(c);
    (0..v.len()).map(move |i| (v[i], v[(i + 1) % v.len()]))
}

/// Exact Gauss double integral over the straight segments `a0a1` and `b0b1`, times 4 pi.
fn segment_pair(a0: Vec3, a1: Vec3, b0: Vec3, b1: Vec3) -> f64 {
    let r13 = b0 - a0;
    let r14 = b1 - a0;
    let r23 = b0 - a1;
    let r24 = b1 - a1;
    let faces = [r13.cross(r14), r14.cross(r24), r24.cross(r23), r23.cross(r13)];
    let mut n = [Vec3::ZERO; 4];
    for (k, f) in faces.iter().enumerate() {
        match f.try_normalize() {
            Some(u) => n[k] = u,
            None => return 0.0,
        }
    }
    let omega: f64 = (0..4).map(|k| n[k].dot(n[(k + 1) % 4]).clamp(-1.0, 1.0).asin()).sum();
    let orient = (b1 - b0).cross(a1 - a0).dot(r13);
    if orient > 0.0 {
        omega
    } else if orient < 0.0 {
        -omega
    } else {
        0.0
    }
}

fn validate_curve(c: &[Vec3], name: &'static str) -> Result<()> {
    if closed_vertices(c).len() < 3 {
        return Err(invalid(name, "a closed curve needs at least 3 distinct vertices"));
    }
    if c.iter().any(|p| !p.is_finite()) {
        return Err(invalid(name, "non-finite vertex"));
    }
    Ok(())
}

/// Linking number of two closed polylines.
///
/// The segment-pair kernel is exact for straight segments, so for disjoint
/// polygons the double sum is an integer up to rounding. A residual above 0.1
/// means the curves are degenerate (touching) and is reported as an error.
pub fn linking_number(c1: &[Vec3], c2: &[Vec3]) -> Result<Linking> {
    validate_curve(c1, "curve")?;
    validate_curve(c2, "curve")?;
    let d = min_distance(c1, c2);
    let scale = extent(c1).max(extent(c2));
    if d <= 1e-12 * scale {
        return Err(Error::Geometry(format!("curves intersect (distance {d:e})")));
    }
    let mut total = 0.0;
    for (a0, a1) in segments(c1) {
        for (b0, b1) in segments(c2) {
            total += segment_pair(a0, a1, b0, b1);
        }
    }
    let raw = total / (4.0 * PI);
    let number = raw.round();
    let residual = (raw - number).abs();
    if residual > 0.1 {
        return Err(Error::Linking { residual });
    }
    Ok(Linking { number: number as i64, raw, residual, min_distance: d })
}

/// Linking number of two smooth closed curves given as maps from [0, 1).
///
/// Both curves are sampled with `n` points, doubling until the polygonal
/// approximations are fine compared with the gap between the curves and the
/// sum rounds cleanly, up to `max_points` per curve.
pub fn linking_number_with(
    c1: impl Fn(f64) -> Vec3,
    c2: impl Fn(f64) -> Vec3,
    mut n: usize,
    max_points: usize,
) -> Result<Linking> {
    n = n.max(8);
    let sample = |c: &dyn Fn(f64) -> Vec3, n: usize| -> Vec<Vec3> { (0..n).map(|i| c(i as f64 / n as f64)).collect() };
    let mut last_err = None;
    while n <= max_points {
        let p1 = sample(&c1, n);
        let p2 = sample(&c2, n);
        let longest = max_segment(&p1).max(max_segment(&p2));
        match linking_number(&p1, &p2) {
            Ok(l) if l.min_distance > longest => return Ok(l),
            Ok(l) => last_err = Some(Error::Linking { residual: l.residual.max(longest / l.min_distance - 1.0) }),
            Err(e @ Error::Linking { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
        n *= 2;
    }
    Err(last_err.unwrap_or(Error::Linking { residual: f64::NAN }))
}

fn max_segment(c: &[Vec3]) -> f64 {
    segments(c).map(|(a, b)| a.distance(b)).fold(0.0, f64::max)
}

fn extent(c: &[Vec3]) -> f64 {
    let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut hi = -lo;
    for p in c {
        lo = Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
        hi = Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
    }
    (hi - lo).norm()
}

/// Number of times a closed polyline winds around an oriented axis.
pub fn winding_number(c: &[Vec3], axis_point: Vec3, axis_dir: Vec3) -> Result<i64> {
    validate_curve(c, "loop")?;
    let dir = axis_dir.try_normalize().ok_or_else(|| invalid("axis_dir", "zero vector"))?;
    let (e1, e2) = dir.orthonormal_basis();
    let project = |p: Vec3| {
        let d = p - axis_point;
        (d.dot(e1), d.dot(e2))
    };
    let eps = 1e-9 * extent(c).max(f64::MIN_POSITIVE);
    let mut total = 0.0;
    for (a, b) in segments(c) {
        let (ax, ay) = project(a);
        let (bx, by) = project(b);
        let d = point_segment_distance_2d((ax, ay), (bx, by));
        if d <= eps {
            return Err(Error::AxisCrossing { distance: d });
        }
        total += (ax * by - ay * bx).atan2(ax * bx + ay * by);
    }
    Ok((total / (2.0 * PI)).round() as i64)
}

fn point_segment_distance_2d(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (-(a.0 * dx + a.1 * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (a.0 + t * dx).hypot(a.1 + t * dy)
}

/// Smallest distance between two points on segments `p0p1` and `q0q1`.
pub(crate) fn segment_distance(p0: Vec3, p1: Vec3, q0: Vec3, q1: Vec3) -> f64 {
    let d1 = p1 - p0;
    let d2 = q1 - q0;
    let r = p0 - q0;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(r);
    let (s, t);
    if a <= f64::MIN_POSITIVE && e <= f64::MIN_POSITIVE {
        return r.norm();
    }
    if a <= f64::MIN_POSITIVE {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(r);
        if e <= f64::MIN_POSITIVE {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(d2);
            let denom = a * e - b * b;
            let s0 = if denom > 0.0 { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
            let t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            } else {
                t = t0;
                s = s0;
            }
        }
    }
    ((p0 + d1 * s) - (q0 + d2 * t)).norm()
}

/// Closest approach between two closed polylines.
pub fn min_distance(c1: &[Vec3], c2: &[Vec3]) -> f64 {
    let mut best = f64::INFINITY;
    for (a0, a1) in segments(c1) {
        for (b0, b1) in segments(c2) {
            best = best.min(segment_distance(a0, a1, b0, b1));
        }
    }
    best
}

fn point_segment_distance(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let d = b - a;
    let len2 = d.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(d) / len2).clamp(0.0, 1.0) } else { 0.0 };
    p.distance(a + d * t)
}

/// Douglas-Peucker simplification of a closed polyline.
///
/// Every removed vertex lies within `tol` of the chord replacing it, so the
/// result is homotopic to the input through curves that stay within `tol` of
/// it. Linking with any curve further than `tol` away is therefore preserved.
pub fn simplify_polyline(c: &[Vec3], tol: f64) -> Vec<Vec3> {
    let v = closed_vertices(c);
    if v.len() <= 4 {
        return v.to_vec();
    }
    let far = (1..v.len())
        .max_by(|&i, &j| v[i].distance(v[0]).total_cmp(&v[j].distance(v[0])))
        .unwrap_or(v.len() / 2);
    let mut ring: Vec<Vec3> = v.to_vec();
    ring.push(v[0]);
    let mut keep = vec![false; ring.len()];
    keep[0] = true;
    keep[far] = true;
    keep[ring.len() - 1] = true;
    let mut stack = vec![(0, far), (far, ring.len() - 1)];
    while let Some((i, j)) = stack.pop() {
        if j <= i + 1 {
            continue;
        }
        let (mut worst, mut at) = (0.0, i);
        for k in i + 1..j {
            let d = point_segment_distance(ring[k], ring[i], ring[j]);
            if d > worst {
                worst = d;
                at = k;
            }
        }
        if worst > tol {
            keep[at] = true;
            stack.push((i, at));
            stack.push((at, j));
        }
    }
    let mut out: Vec<Vec3> = ring[..ring.len() - 1].iter().zip(&keep).filter(|(_, k)| **k).map(|(p, _)| *p).collect();
    if out.len() < 3 {
        // Keep a non-degenerate triangle.
        out = vec![v[0], v[far / 2], v[far]];
    }
    out
}

/// Linking number of a closed polyline with an exact circle, counted as
/// signed crossings of the circle's flat disk (positive along `normal`, the
/// circle running counter-clockwise about it).
///
/// Returns `None` when a crossing lands within `margin` of the rim or a
/// segment touches the disk plane edge-on, where the count is not reliable.
pub fn circle_linking_number(c: &[Vec3], center: Vec3, normal: Vec3, radius: f64, margin: f64) -> Option<i64> {
    let mut count = 0;
    for (a, b) in segments(c) {
        let (ha, hb) = ((a - center).dot(normal), (b - center).dot(normal));
        if ha == 0.0 && hb == 0.0 {
            let near = |p: Vec3| ((p - center).norm() - radius).abs() <= margin;
            if near(a) || near(b) {
                return None;
            }
            continue;
        }
        // Half-open test so a vertex on the plane is counted once.
        let up = ha < 0.0 && hb >= 0.0;
        let down = ha >= 0.0 && hb < 0.0;
        if !(up || down) {
            continue;
        }
        let t = ha / (ha - hb);
        let x = a + (b - a) * t;
        let rho = (x - center).norm();
        if (rho - radius).abs() <= margin {
            return None;
        }
        if rho < radius {
            count += if up { 1 } else { -1 };
        }
    }
    Some(count)
}
