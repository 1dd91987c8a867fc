//! Field sources, test-charge trajectories and static charge configurations.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::error::{invalid, Error, Result};
use crate::vector::Vec3;

const UNIT_TOL: f64 = 1e-12;

fn check_unit(v: Vec3, field: &'static str) -> Result<()> {
    if !v.is_finite() || (v.norm() - 1.0).abs() > UNIT_TOL {
        return Err(invalid(field, format!("must be a unit vector, got {v:?}")));
    }
    Ok(())
}

fn check_positive(v: f64, field: &'static str) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(invalid(field, format!("must be positive, got {v}")));
    }
    Ok(())
}

fn check_finite(v: f64, field: &'static str) -> Result<()> {
    if !v.is_finite() {
        return Err(invalid(field, "must be finite"));
    }
    Ok(())
}

fn check_point(v: Vec3, field: &'static str) -> Result<()> {
    if !v.is_finite() {
        return Err(invalid(field, "must be finite"));
    }
    Ok(())
}

/// Infinitely long solenoid with uniform interior field, specified by its flux.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdealSolenoid {
    pub axis_point: Vec3,
    pub axis_dir: Vec3,
    pub radius: f64,
    /// Flux through any cross-section [Wb], positive along `axis_dir`.
    pub total_flux: f64,
}

/// `n_loops` coaxial circular loops spread uniformly over `length`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteSolenoid {
    pub center: Vec3,
    pub axis_dir: Vec3,
    pub radius: f64,
    pub length: f64,
    pub n_loops: usize,
    /// Current in each loop [A], circulating counter-clockwise about `axis_dir`.
    pub current: f64,
}

/// Uniformly wound toroidal coil around the circle of radius `major_radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToroidalCoil {
    pub center: Vec3,
    pub plane_normal: Vec3,
    pub major_radius: f64,
    pub minor_radius: f64,
    pub n_turns: usize,
    /// Positive current drives the interior field counter-clockwise about `plane_normal`.
    pub current: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurrentLoop {
    pub center: Vec3,
    pub normal: Vec3,
    pub radius: f64,
    /// Counter-clockwise about `normal`.
    pub current: f64,
}

/// Straight wire segments through `vertices`; current flows in vertex order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolylineCurrent {
    pub vertices: Vec<Vec3>,
    pub current: f64,
    /// Adds the segment from the last vertex back to the first.
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CurrentSource {
    IdealInfiniteSolenoid(IdealSolenoid),
    FiniteSolenoid(FiniteSolenoid),
    ToroidalCoil(ToroidalCoil),
    CurrentLoop(CurrentLoop),
    PolylineCurrent(PolylineCurrent),
}

impl CurrentSource {
    pub fn validate(&self) -> Result<()> {
        match self {
            CurrentSource::IdealInfiniteSolenoid(s) => {
                check_point(s.axis_point, "axis_point")?;
                check_unit(s.axis_dir, "axis_dir")?;
                check_positive(s.radius, "radius")?;
                check_finite(s.total_flux, "total_flux")
            }
            CurrentSource::FiniteSolenoid(s) => {
                check_point(s.center, "center")?;
                check_unit(s.axis_dir, "axis_dir")?;
                check_positive(s.radius, "radius")?;
                check_positive(s.length, "length")?;
                check_finite(s.current, "current")?;
                if s.n_loops < 2 {
                    return Err(invalid("n_loops", format!("must be at least 2, got {}", s.n_loops)));
                }
                Ok(())
            }
            CurrentSource::ToroidalCoil(c) => {
                check_point(c.center, "center")?;
                check_unit(c.plane_normal, "plane_normal")?;
                check_positive(c.major_radius, "major_radius")?;
                check_positive(c.minor_radius, "minor_radius")?;
                check_finite(c.current, "current")?;
                if c.minor_radius >= c.major_radius {
                    return Err(invalid("minor_radius", "must be smaller than major_radius"));
                }
                if c.n_turns == 0 {
                    return Err(invalid("n_turns", "must be at least 1"));
                }
                Ok(())
            }
            CurrentSource::CurrentLoop(l) => l.validate(),
            CurrentSource::PolylineCurrent(p) => {
                check_finite(p.current, "current")?;
                if p.vertices.len() < 2 || (p.closed && p.vertices.len() < 3) {
                    return Err(invalid("vertices", "too few vertices"));
                }
                for v in &p.vertices {
                    check_point(*v, "vertices")?;
                }
                if p.segments().any(|(a, b)| a == b) {
                    return Err(invalid("vertices", "repeated consecutive vertex"));
                }
                Ok(())
            }
        }
    }

    /// Overall length scale [m] used for exclusion radii and tracer steps.
    pub fn characteristic_size(&self) -> f64 {
        match self {
            CurrentSource::IdealInfiniteSolenoid(s) => s.radius,
            CurrentSource::FiniteSolenoid(s) => s.radius.max(0.5 * s.length),
            CurrentSource::ToroidalCoil(c) => c.major_radius + c.minor_radius,
            CurrentSource::CurrentLoop(l) => l.radius,
            CurrentSource::PolylineCurrent(p) => {
                let c = p.vertices.iter().copied().sum::<Vec3>() / p.vertices.len() as f64;
                p.vertices.iter().map(|v| v.distance(c)).fold(0.0, f64::max)
            }
        }
    }

    /// Scales every current (or the flux of an ideal solenoid) by `k`.
    pub fn scaled(&self, k: f64) -> CurrentSource {
        let mut s = self.clone();
        match &mut s {
            CurrentSource::IdealInfiniteSolenoid(x) => x.total_flux *= k,
            CurrentSource::FiniteSolenoid(x) => x.current *= k,
            CurrentSource::ToroidalCoil(x) => x.current *= k,
            CurrentSource::CurrentLoop(x) => x.current *= k,
            CurrentSource::PolylineCurrent(x) => x.current *= k,
        }
        s
    }
}

impl CurrentLoop {
    pub fn validate(&self) -> Result<()> {
        check_point(self.center, "center")?;
        check_unit(self.normal, "normal")?;
        check_positive(self.radius, "radius")?;
        check_finite(self.current, "current")
    }
}

impl PolylineCurrent {
    pub fn segments(&self) -> impl Iterator<Item = (Vec3, Vec3)> + '_ {
        let n = self.vertices.len();
        let count = if self.closed { n } else { n.saturating_sub(1) };
        (0..count).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }
}

/// Cell-centred loops: loop `k` sits at axial offset `-L/2 + (k + 1/2) L / n`.
pub fn finite_solenoid_loops(s: &FiniteSolenoid) -> Result<Vec<CurrentLoop>> {
    CurrentSource::FiniteSolenoid(s.clone()).validate()?;
    let n = s.n_loops;
    let pitch = s.length / n as f64;
    Ok((0..n)
        .map(|k| {
            // Symmetric indexing keeps the offsets exactly antisymmetric.
            let offset = (k as f64 - 0.5 * (n as f64 - 1.0)) * pitch;
            CurrentLoop { center: s.center + s.axis_dir * offset, normal: s.axis_dir, radius: s.radius, current: s.current }
        })
        .collect())
}

/// Thin-coil flux: `B = mu0 N I / (2 pi R)` at the major radius times the tube cross-section.
pub fn toroid_flux(c: &ToroidalCoil, k: &PhysicalConstants) -> f64 {
    let ratio = c.minor_radius / c.major_radius;
    if ratio > 0.2 {
        log::warn!("thin-coil flux formula used with minor/major radius ratio {ratio:.3}");
    }
    k.mu0 * c.n_turns as f64 * c.current / (2.0 * PI * c.major_radius) * PI * c.minor_radius * c.minor_radius
}

/// Exact flux through the tube cross-section for the `1/rho` interior field.
pub fn toroid_core_flux(c: &ToroidalCoil, k: &PhysicalConstants) -> f64 {
    let (r, a) = (c.major_radius, c.minor_radius);
    // R - sqrt(R^2 - a^2) written without cancellation.
    k.mu0 * c.n_turns as f64 * c.current * a * a / (r + (r * r - a * a).sqrt())
}

/// The coil as `n_turns` planar poloidal loops evenly spaced in azimuth.
pub fn toroid_loops(c: &ToroidalCoil) -> Vec<CurrentLoop> {
    let (e1, e2) = c.plane_normal.orthonormal_basis();
    (0..c.n_turns)
        .map(|k| {
            let phi = 2.0 * PI * k as f64 / c.n_turns as f64;
            let (s, co) = phi.sin_cos();
            let radial = e1 * co + e2 * s;
            CurrentLoop {
                center: c.center + radial * c.major_radius,
                normal: e2 * co - e1 * s,
                radius: c.minor_radius,
                current: c.current,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectoryPath {
    /// Uniform circular motion, counter-clockwise about `normal`, `windings`
    /// times per period (negative reverses the sense, zero stays put).
    CircularOrbit {
        center: Vec3,
        normal: Vec3,
        radius: f64,
        period: f64,
        #[serde(default = "one")]
        windings: i32,
    },
    /// Closed polygon traversed in vertex order; segment `i` runs from vertex
    /// `i` to vertex `i+1` (wrapping) at uniform speed in `durations[i]`.
    PiecewiseLinearLoop { vertices: Vec<Vec3>, durations: Vec<f64> },
}

fn one() -> i32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChargeTrajectory {
    pub charge: f64,
    pub path: TrajectoryPath,
}

impl ChargeTrajectory {
    pub fn circle(charge: f64, center: Vec3, normal: Vec3, radius: f64, period: f64) -> Self {
        Self { charge, path: TrajectoryPath::CircularOrbit { center, normal, radius, period, windings: 1 } }
    }

    pub fn validate(&self) -> Result<()> {
        check_finite(self.charge, "charge")?;
        match &self.path {
            TrajectoryPath::CircularOrbit { center, normal, radius, period, .. } => {
                check_point(*center, "center")?;
                check_unit(*normal, "normal")?;
                check_positive(*radius, "radius")?;
                check_positive(*period, "period")
            }
            TrajectoryPath::PiecewiseLinearLoop { vertices, durations } => {
                if vertices.len() < 3 {
                    return Err(invalid("vertices", "a closed loop needs at least 3 vertices"));
                }
                if durations.len() != vertices.len() {
                    return Err(invalid("durations", format!("expected {} segment durations, got {}", vertices.len(), durations.len())));
                }
                for v in vertices {
                    check_point(*v, "vertices")?;
                }
                for d in durations {
                    check_positive(*d, "durations")?;
                }
                Ok(())
            }
        }
    }

    pub fn period(&self) -> f64 {
        match &self.path {
            TrajectoryPath::CircularOrbit { period, .. } => *period,
            TrajectoryPath::PiecewiseLinearLoop { durations, .. } => durations.iter().sum(),
        }
    }

    /// Times at which the velocity is discontinuous, including 0 and T.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.path {
            TrajectoryPath::CircularOrbit { period, .. } => vec![0.0, *period],
            TrajectoryPath::PiecewiseLinearLoop { durations, .. } => {
                let mut t = vec![0.0];
                let mut acc = 0.0;
                for d in durations {
                    acc += d;
                    t.push(acc);
                }
                t
            }
        }
    }

    /// Same spatial curve traversed backwards.
    pub fn reversed(&self) -> Self {
        let path = match &self.path {
            TrajectoryPath::CircularOrbit { center, normal, radius, period, windings } => {
                TrajectoryPath::CircularOrbit { center: *center, normal: *normal, radius: *radius, period: *period, windings: -windings }
            }
            TrajectoryPath::PiecewiseLinearLoop { vertices, durations } => {
                let n = vertices.len();
                let v: Vec<Vec3> = (0..n).map(|i| vertices[(n - i) % n]).collect();
                let d: Vec<f64> = (0..n).map(|i| durations[n - 1 - i]).collect();
                TrajectoryPath::PiecewiseLinearLoop { vertices: v, durations: d }
            }
        };
        Self { charge: self.charge, path }
    }

    /// Same path with all times multiplied by `k`.
    pub fn time_scaled(&self, k: f64) -> Self {
        let mut s = self.clone();
        match &mut s.path {
            TrajectoryPath::CircularOrbit { period, .. } => *period *= k,
            TrajectoryPath::PiecewiseLinearLoop { durations, .. } => durations.iter_mut().for_each(|d| *d *= k),
        }
        s
    }

    /// Rough length scale of the path [m].
    pub fn size(&self) -> f64 {
        match &self.path {
            TrajectoryPath::CircularOrbit { radius, .. } => *radius,
            TrajectoryPath::PiecewiseLinearLoop { vertices, .. } => {
                let c = vertices.iter().copied().sum::<Vec3>() / vertices.len() as f64;
                vertices.iter().map(|v| v.distance(c)).fold(0.0, f64::max)
            }
        }
    }

    /// Point about which the flux cone is built.
    pub fn centroid(&self) -> Vec3 {
        match &self.path {
            TrajectoryPath::CircularOrbit { center, .. } => *center,
            TrajectoryPath::PiecewiseLinearLoop { vertices, .. } => vertices.iter().copied().sum::<Vec3>() / vertices.len() as f64,
        }
    }

    /// Spatial image as a closed polyline with about `n` points per winding
    /// (every vertex of a polygonal path is kept).
    pub fn polyline(&self, n: usize) -> Vec<Vec3> {
        match &self.path {
            TrajectoryPath::CircularOrbit { windings, period, .. } => {
                let total = n.max(8) * windings.unsigned_abs().max(1) as usize;
                (0..total).map(|i| position_unchecked(self, *period * i as f64 / total as f64)).collect()
            }
            TrajectoryPath::PiecewiseLinearLoop { vertices, .. } => vertices.clone(),
        }
    }
}

/// Position and exact velocity at time `t` in `[0, T]`.
pub fn trajectory_sample(tr: &ChargeTrajectory, t: f64) -> Result<(Vec3, Vec3)> {
    let period = tr.period();
    if !(0.0..=period).contains(&t) {
        return Err(Error::TimeOutOfRange { t, period });
    }
    Ok(sample_unchecked(tr, t))
}

fn position_unchecked(tr: &ChargeTrajectory, t: f64) -> Vec3 {
    sample_unchecked(tr, t).0
}

pub(crate) fn sample_unchecked(tr: &ChargeTrajectory, t: f64) -> (Vec3, Vec3) {
    match &tr.path {
        TrajectoryPath::CircularOrbit { center, normal, radius, period, windings } => {
            let (e1, e2) = normal.orthonormal_basis();
            let omega = 2.0 * PI * *windings as f64 / period;
            let (s, c) = (omega * t).sin_cos();
            (*center + (e1 * c + e2 * s) * *radius, (e2 * c - e1 * s) * (*radius * omega))
        }
        TrajectoryPath::PiecewiseLinearLoop { vertices, durations } => {
            let n = vertices.len();
            let mut start = 0.0;
            for i in 0..n {
                let end = start + durations[i];
                if t <= end || i == n - 1 {
                    let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                    let u = ((t - start) / durations[i]).clamp(0.0, 1.0);
                    return (a + (b - a) * u, (b - a) / durations[i]);
                }
                start = end;
            }
            unreachable!("durations are non-empty")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointCharge {
    pub charge: f64,
    pub position: Vec3,
}

/// External charges held fixed around a test charge for a dwell time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticChargeConfig {
    pub external_charges: Vec<PointCharge>,
    pub test_charge: PointCharge,
    pub dwell_time: f64,
}

impl StaticChargeConfig {
    /// Two charges `big_q` at distance `r` on either side of the test charge along x.
    pub fn symmetric_pair(q: f64, big_q: f64, r: f64, dwell_time: f64) -> Self {
        Self {
            external_charges: vec![
                PointCharge { charge: big_q, position: Vec3::new(-r, 0.0, 0.0) },
                PointCharge { charge: big_q, position: Vec3::new(r, 0.0, 0.0) },
            ],
            test_charge: PointCharge { charge: q, position: Vec3::ZERO },
            dwell_time,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_finite(self.test_charge.charge, "charge")?;
        check_point(self.test_charge.position, "position")?;
        check_positive(self.dwell_time, "dwell_time")?;
        for (i, c) in self.external_charges.iter().enumerate() {
            check_finite(c.charge, "charge")?;
            check_point(c.position, "position")?;
            if c.position == self.test_charge.position {
                return Err(invalid("external_charges", format!("charge {i} sits on the test charge")));
            }
            if self.external_charges[..i].iter().any(|o| o.position == c.position) {
                return Err(invalid("external_charges", format!("charge {i} coincides with another")));
            }
        }
        Ok(())
    }

    /// Largest distance between any two charges.
    pub fn max_separation(&self) -> f64 {
        let all: Vec<Vec3> = self.external_charges.iter().map(|c| c.position).chain([self.test_charge.position]).collect();
        let mut d: f64 = 0.0;
        for (i, a) in all.iter().enumerate() {
            for b in &all[..i] {
                d = d.max(a.distance(*b));
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn solenoid(l: f64, n: usize) -> FiniteSolenoid {
        FiniteSolenoid { center: Vec3::ZERO, axis_dir: Vec3::Z, radius: 1.0, length: l, n_loops: n, current: 1.0 }
    }

    #[test]
    fn two_loop_offsets() {
        let loops = finite_solenoid_loops(&solenoid(1.0, 2)).unwrap();
        assert_eq!(loops.len(), 2);
        assert_eq!(loops[0].center.z, -0.25);
        assert_eq!(loops[1].center.z, 0.25);
        assert!(finite_solenoid_loops(&solenoid(1.0, 1)).is_err());
    }

    #[test]
    fn loops_mirror_through_midplane() {
        for n in [2, 3, 10, 101] {
            let loops = finite_solenoid_loops(&solenoid(7.3, n)).unwrap();
            for (a, b) in loops.iter().zip(loops.iter().rev()) {
                assert_eq!(a.center.z, -b.center.z);
            }
        }
    }

    #[test]
    fn thin_toroid_flux_example() {
        let k = PhysicalConstants::si();
        let c = ToroidalCoil {
            center: Vec3::ZERO,
            plane_normal: Vec3::Z,
            major_radius: 1.0,
            minor_radius: 0.01,
            n_turns: 1000,
            current: 1.0,
        };
        let expected = k.mu0 * 1000.0 / (2.0 * PI) * PI * 1e-4;
        assert_relative_eq!(toroid_flux(&c, &k), expected, max_relative = 1e-15);
        // Exact core flux differs from the thin formula at order (a/R)^2.
        assert_relative_eq!(toroid_core_flux(&c, &k), expected, max_relative = 1e-4);
        let doubled = ToroidalCoil { n_turns: 2000, ..c.clone() };
        assert_relative_eq!(toroid_flux(&doubled, &k), 2.0 * expected, max_relative = 1e-15);
        assert_eq!(toroid_flux(&ToroidalCoil { current: 0.0, ..c }, &k), 0.0);
    }

    #[test]
    fn toroid_loop_frame() {
        let c = ToroidalCoil { center: Vec3::ZERO, plane_normal: Vec3::Z, major_radius: 2.0, minor_radius: 0.5, n_turns: 8, current: 1.0 };
        for l in toroid_loops(&c) {
            assert_relative_eq!(l.center.norm(), 2.0, max_relative = 1e-15);
            // Normal is the counter-clockwise azimuthal direction at the loop.
            let phi_hat = Vec3::Z.cross(l.center / 2.0);
            assert!((l.normal - phi_hat).norm() < 1e-15);
        }
    }

    #[test]
    fn circle_sampling() {
        let tr = ChargeTrajectory::circle(1.0, Vec3::ZERO, Vec3::Z, 1.0, 1.0);
        let (x0, v0) = trajectory_sample(&tr, 0.0).unwrap();
        assert_relative_eq!(x0.norm(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(v0.norm(), 2.0 * PI, max_relative = 1e-15);
        let (x1, _) = trajectory_sample(&tr, 1.0).unwrap();
        assert!(x1.distance(x0) < 1e-12);
        // Counter-clockwise about +z.
        assert!(x0.cross(v0).z > 0.0);
        assert!(matches!(trajectory_sample(&tr, 1.5), Err(Error::TimeOutOfRange { .. })));
        assert!(trajectory_sample(&tr, -1e-9).is_err());
    }

    fn square() -> ChargeTrajectory {
        ChargeTrajectory {
            charge: 1.0,
            path: TrajectoryPath::PiecewiseLinearLoop {
                vertices: vec![Vec3::new(-1.0, -1.0, 0.0), Vec3::new(1.0, -1.0, 0.0), Vec3::new(1.0, 1.0, 0.0), Vec3::new(-1.0, 1.0, 0.0)],
                durations: vec![1.0, 2.0, 0.5, 1.5],
            },
        }
    }

    #[test]
    fn velocity_matches_central_difference() {
        let tilted = Vec3::new(1.0, 2.0, 2.0) / 3.0;
        for tr in [ChargeTrajectory::circle(1.0, Vec3::new(0.3, 0.0, 1.0), tilted, 1.7, 2.3), square()] {
            let t = 0.37 * tr.period();
            let (_, v) = trajectory_sample(&tr, t).unwrap();
            let mut errs = vec![];
            for h in [1e-4, 1e-5] {
                let (a, _) = trajectory_sample(&tr, t + h).unwrap();
                let (b, _) = trajectory_sample(&tr, t - h).unwrap();
                errs.push(((a - b) / (2.0 * h) - v).norm());
            }
            // Central differences are O(h^2); the scale 50 covers |x'''| = (2 pi / T)^3 R.
            assert!(errs[0] <= 50.0 * 1e-8, "{errs:?}");
            assert!(errs[1] <= 50.0 * 1e-10 + 1e-9, "{errs:?}");
        }
    }

    #[test]
    fn piecewise_loop_closes_and_has_breakpoints() {
        let tr = square();
        tr.validate().unwrap();
        assert_eq!(tr.period(), 5.0);
        assert_eq!(tr.breakpoints(), vec![0.0, 1.0, 3.0, 3.5, 5.0]);
        let (a, _) = trajectory_sample(&tr, 0.0).unwrap();
        let (b, _) = trajectory_sample(&tr, 5.0).unwrap();
        assert!(a.distance(b) < 1e-12);
        let (p, v) = trajectory_sample(&tr, 2.0).unwrap();
        assert!(p.distance(Vec3::new(1.0, 0.0, 0.0)) < 1e-15);
        assert_eq!(v, Vec3::new(0.0, 1.0, 0.0));
        let r = tr.reversed();
        let (p, v) = trajectory_sample(&r, 0.25).unwrap();
        assert!(p.distance(Vec3::new(-1.0, -1.0 + 2.0 / 6.0, 0.0)) < 1e-15, "{p:?}");
        assert_eq!(v, Vec3::new(0.0, 2.0 / 1.5, 0.0));
    }

    #[test]
    fn invariants_rejected() {
        let mut s = solenoid(1.0, 5);
        s.axis_dir = Vec3::new(1.0, 1.0, 0.0);
        assert!(CurrentSource::FiniteSolenoid(s).validate().is_err());
        let c = ToroidalCoil { center: Vec3::ZERO, plane_normal: Vec3::Z, major_radius: 1.0, minor_radius: 1.0, n_turns: 4, current: 1.0 };
        assert!(CurrentSource::ToroidalCoil(c).validate().is_err());
        let mut cfg = StaticChargeConfig::symmetric_pair(1.0, 1.0, 1.0, 1.0);
        cfg.validate().unwrap();
        cfg.external_charges[0].position = Vec3::ZERO;
        assert!(cfg.validate().is_err());
        let bad = ChargeTrajectory::circle(1.0, Vec3::ZERO, Vec3::Z, -1.0, 1.0);
        assert_eq!(bad.validate(), Err(invalid("radius", "must be positive, got -1")));
    }

    #[test]
    fn source_round_trips_through_toml() {
        let src = CurrentSource::FiniteSolenoid(solenoid(50.0, 100));
        let text = toml::to_string(&src).unwrap();
        assert!(text.contains("type = \"finite_solenoid\""), "{text}");
        let back: CurrentSource = toml::from_str(&text).unwrap();
        assert_eq!(back, src);
        let unknown = format!("{text}spin = 1\n");
        assert!(toml::from_str::<CurrentSource>(&unknown).is_err());
    }
}
