//! Magnetic and electric fields, vector potentials and fluxes of the sources.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::error::{invalid, Error, Result};
use crate::quadrature::{
    integrate_1d_points, integrate_box, linking_number, trace_field_line, winding_number, ClosurePlane, Domain3,
    FieldLine, Integral, QuadratureSpec, TraceOptions,
};
use crate::sources::{
    finite_solenoid_loops, sample_unchecked, toroid_core_flux, ChargeTrajectory, CurrentLoop, CurrentSource, IdealSolenoid,
    StaticChargeConfig, ToroidalCoil, TrajectoryPath,
};
use crate::vector::Vec3;

/// Accuracy controls for field evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldOptions {
    /// Relative tolerance of the per-filament line integrals.
    pub rel_tol: f64,
    /// Exclusion radius around filaments relative to the source size.
    pub exclusion_ratio: f64,
}

impl Default for FieldOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-10, exclusion_ratio: 1e-9 }
    }
}

/// A source prepared for repeated field evaluation.
#[derive(Debug, Clone)]
pub struct SourceField {
    source: CurrentSource,
    k: PhysicalConstants,
    opts: FieldOptions,
    loops: Vec<CurrentLoop>,
    exclusion: f64,
}

impl SourceField {
    pub fn new(source: &CurrentSource, k: PhysicalConstants) -> Result<Self> {
        Self::with_options(source, k, FieldOptions::default())
    }

    pub fn with_options(source: &CurrentSource, k: PhysicalConstants, opts: FieldOptions) -> Result<Self> {
        source.validate()?;
        if !(opts.rel_tol > 0.0 && opts.exclusion_ratio >= 0.0) {
            return Err(invalid("field_options", "tolerances must be positive"));
        }
        let loops = match source {
            CurrentSource::FiniteSolenoid(s) => finite_solenoid_loops(s)?,
            CurrentSource::CurrentLoop(l) => vec![l.clone()],
            _ => Vec::new(),
        };
        let exclusion = opts.exclusion_ratio * source.characteristic_size();
        Ok(Self { source: source.clone(), k, opts, loops, exclusion })
    }

    pub fn source(&self) -> &CurrentSource {
        &self.source
    }

    pub fn constants(&self) -> &PhysicalConstants {
        &self.k
    }

    pub fn exclusion_radius(&self) -> f64 {
        self.exclusion
    }

    /// Magnetic field [T].
    pub fn b(&self, x: Vec3) -> Result<Vec3> {
        check_point(x)?;
        match &self.source {
            CurrentSource::IdealInfiniteSolenoid(s) => Ok(ideal_solenoid_b(s, x)),
            CurrentSource::ToroidalCoil(c) => self.toroid_b(c, x),
            CurrentSource::PolylineCurrent(p) => {
                let mut b = Vec3::ZERO;
                for (a, e) in p.segments() {
                    b += segment_b(a, e, x, self.exclusion)?;
                }
                Ok(b * (self.k.biot_savart_k() * p.current))
            }
            CurrentSource::FiniteSolenoid(_) | CurrentSource::CurrentLoop(_) => {
                let mut b = Vec3::ZERO;
                for l in &self.loops {
                    b += loop_b(l, x, self.opts.rel_tol, self.exclusion)?;
                }
                Ok(b * self.k.biot_savart_k())
            }
        }
    }

    /// Vector potential [T m], Coulomb gauge for filaments and the symmetric gauge for the ideal solenoid.
    pub fn a(&self, x: Vec3) -> Result<Vec3> {
        check_point(x)?;
        match &self.source {
            CurrentSource::IdealInfiniteSolenoid(s) => Ok(ideal_solenoid_a(s, x)),
            CurrentSource::ToroidalCoil(c) => self.toroid_a(c, x),
            CurrentSource::PolylineCurrent(p) => {
                let mut a = Vec3::ZERO;
                for (s, e) in p.segments() {
                    a += segment_a(s, e, x, self.exclusion)?;
                }
                Ok(a * (self.k.biot_savart_k() * p.current))
            }
            CurrentSource::FiniteSolenoid(_) | CurrentSource::CurrentLoop(_) => {
                let mut a = Vec3::ZERO;
                for l in &self.loops {
                    a += loop_a(l, x, self.opts.rel_tol, self.exclusion)?;
                }
                Ok(a * self.k.biot_savart_k())
            }
        }
    }

    fn toroid_b(&self, c: &ToroidalCoil, x: Vec3) -> Result<Vec3> {
        let (rho, h, e_rho) = cylindrical(c.center, c.plane_normal, x);
        let d = ((rho - c.major_radius).powi(2) + h * h).sqrt();
        if (d - c.minor_radius).abs() <= self.exclusion {
            return Err(Error::Singular { point: x, distance: (d - c.minor_radius).abs(), exclusion: self.exclusion });
        }
        if d >= c.minor_radius {
            return Ok(Vec3::ZERO);
        }
        let phi_hat = c.plane_normal.cross(e_rho);
        Ok(phi_hat * (self.k.mu0 * c.n_turns as f64 * c.current / (2.0 * PI * rho)))
    }

    /// Potential of the winding smeared uniformly in azimuth: the average of
    /// poloidal loop potentials, `N / 2 pi` times the integral over loop angle.
    fn toroid_a(&self, c: &ToroidalCoil, x: Vec3) -> Result<Vec3> {
        let (e1, e2) = c.plane_normal.orthonormal_basis();
        let d = x - c.center;
        let phi0 = d.dot(e2).atan2(d.dot(e1));
        let spec = QuadratureSpec::default().with_rel_tol(self.opts.rel_tol).with_abs_tol(1e-300);
        let tol = self.opts.rel_tol;
        let at = |phi: f64| -> Result<Vec3> {
            let (s, co) = phi.sin_cos();
            let radial = e1 * co + e2 * s;
            let l = CurrentLoop {
                center: c.center + radial * c.major_radius,
                normal: e2 * co - e1 * s,
                radius: c.minor_radius,
                current: c.current,
            };
            loop_a(&l, x, tol, self.exclusion)
        };
        let r = integrate_1d_points(at, &[phi0 - PI, phi0 - 0.25, phi0, phi0 + 0.25, phi0 + PI], &spec)?;
        if !r.converged {
            log::warn!("toroid vector potential at {x:?} did not converge (error {:e})", r.error);
        }
        Ok(r.value * (self.k.biot_savart_k() * c.n_turns as f64 / (2.0 * PI)))
    }

    /// Region outside which B vanishes identically, or inside which the bulk
    /// of the flux is confined (finite solenoid).
    pub fn support(&self) -> Option<Domain3> {
        match &self.source {
            CurrentSource::IdealInfiniteSolenoid(s) => Some(Domain3::Cylinder {
                origin: s.axis_point,
                axis: s.axis_dir,
                radius: s.radius,
                z_min: f64::NEG_INFINITY,
                z_max: f64::INFINITY,
            }),
            CurrentSource::FiniteSolenoid(s) => Some(Domain3::Cylinder {
                origin: s.center,
                axis: s.axis_dir,
                radius: s.radius,
                z_min: -0.5 * s.length,
                z_max: 0.5 * s.length,
            }),
            CurrentSource::ToroidalCoil(c) => Some(Domain3::TorusTube {
                center: c.center,
                normal: c.plane_normal,
                major: c.major_radius,
                minor: c.minor_radius,
            }),
            _ => None,
        }
    }
}

fn check_point(x: Vec3) -> Result<()> {
    if !x.is_finite() {
        return Err(invalid("point", "must be finite"));
    }
    Ok(())
}

/// (rho, height, unit radial) of `x` in the frame of an axis through `origin`.
fn cylindrical(origin: Vec3, axis: Vec3, x: Vec3) -> (f64, f64, Vec3) {
    let d = x - origin;
    let h = d.dot(axis);
    let radial = d - axis * h;
    let rho = radial.norm();
    let e_rho = if rho > 0.0 { radial / rho } else { axis.orthonormal_basis().0 };
    (rho, h, e_rho)
}

fn ideal_solenoid_b(s: &IdealSolenoid, x: Vec3) -> Vec3 {
    let (rho, _, _) = cylindrical(s.axis_point, s.axis_dir, x);
    if rho < s.radius {
        s.axis_dir * (s.total_flux / (PI * s.radius * s.radius))
    } else {
        Vec3::ZERO
    }
}

fn ideal_solenoid_a(s: &IdealSolenoid, x: Vec3) -> Vec3 {
    let (rho, _, e_rho) = cylindrical(s.axis_point, s.axis_dir, x);
    if rho == 0.0 {
        return Vec3::ZERO;
    }
    let phi_hat = s.axis_dir.cross(e_rho);
    let a_phi = if rho < s.radius {
        s.total_flux * rho / (2.0 * PI * s.radius * s.radius)
    } else {
        s.total_flux / (2.0 * PI * rho)
    };
    phi_hat * a_phi
}

/// Periodic trapezoid rule on `[0, pi]` for an even integrand in `theta`,
/// with node doubling until successive estimates agree to
/// `max(abs_tol, rel_tol * |value|)`.
///
/// Nodes are graded towards `theta = 0` through `theta = u - beta sin u`,
/// which keeps the map periodic so the rule stays spectrally accurate.
fn graded_trapezoid<const K: usize>(
    beta: f64,
    rel_tol: f64,
    abs_tol: f64,
    f: impl Fn(f64) -> Result<[f64; K]>,
) -> Result<Integral<[f64; K]>> {
    let eval = |u: f64| -> Result<[f64; K]> {
        let (s, c) = u.sin_cos();
        let jac = 1.0 - beta * c;
        Ok(f(u - beta * s)?.map(|v| v * jac))
    };
    let add = |acc: &mut [f64; K], v: [f64; K], w: f64| {
        for i in 0..K {
            acc[i] += w * v[i];
        }
    };
    let mut n = 8usize;
    let mut sum = [0.0; K];
    add(&mut sum, eval(0.0)?, 0.5);
    add(&mut sum, eval(PI)?, 0.5);
    for j in 1..n {
        add(&mut sum, eval(PI * j as f64 / n as f64)?, 1.0);
    }
    let mut prev = sum.map(|v| v * PI / n as f64);
    loop {
        for j in (1..2 * n).step_by(2) {
            add(&mut sum, eval(PI * j as f64 / (2 * n) as f64)?, 1.0);
        }
        n *= 2;
        let cur = sum.map(|v| v * PI / n as f64);
        if !cur.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { location: vec![] });
        }
        let scale = cur.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = cur.iter().zip(&prev).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let target = abs_tol.max(rel_tol * scale);
        if diff <= target || n >= 1 << 20 {
            if diff > target {
                log::warn!("periodic trapezoid stopped at {n} nodes (difference {diff:e})");
            }
            return Ok(Integral { value: cur, error: diff, n_evals: n as u64 + 1, converged: diff <= target });
        }
        prev = cur;
    }
}

fn loop_frame(l: &CurrentLoop, x: Vec3, exclusion: f64) -> Result<(f64, f64, Vec3, f64)> {
    let (rho, z, e_rho) = cylindrical(l.center, l.normal, x);
    let wire = ((rho - l.radius).powi(2) + z * z).sqrt();
    if wire <= exclusion {
        return Err(Error::Singular { point: x, distance: wire, exclusion });
    }
    // Angular half-width of the near-wire peak of the integrand.
    let width = if rho > 0.0 { wire / (rho * l.radius).sqrt() } else { f64::INFINITY };
    let beta = (1.0 - 2.0 * width).clamp(0.0, 0.999);
    Ok((rho, z, e_rho, beta))
}

/// Complete elliptic integrals `(K(m), E(m))` for complementary parameter
/// `kc2 = 1 - m`, by the arithmetic-geometric mean.
fn elliptic_ke(kc2: f64) -> (f64, f64) {
    let mut a = 1.0;
    let mut b = kc2.sqrt();
    let mut c = (1.0 - kc2).sqrt();
    let mut sum = 0.5 * c * c;
    let mut w = 0.5;
    for _ in 0..64 {
        let an = 0.5 * (a + b);
        c = 0.25 * c * c / an;
        b = (a * b).sqrt();
        a = an;
        w *= 2.0;
        sum += w * c * c;
        if c <= 1e-17 * a {
            break;
        }
    }
    let k = PI / (2.0 * a);
    (k, k * (1.0 - sum))
}

/// Smallest `m` at which the closed forms keep relative accuracy `tol`.
fn elliptic_floor(tol: f64, power: i32) -> f64 {
    (10.0 * f64::EPSILON / tol).powf(1.0 / power as f64)
}

/// Biot-Savart field of a circular loop divided by mu0/4pi.
pub(crate) fn loop_b(l: &CurrentLoop, x: Vec3, tol: f64, exclusion: f64) -> Result<Vec3> {
    let (rho, z, e_rho, beta) = loop_frame(l, x, exclusion)?;
    let r = l.radius;
    let r2 = rho * rho + z * z;
    let b2 = r * r + r2 + 2.0 * r * rho;
    let m = 4.0 * r * rho / b2;
    if m >= elliptic_floor(tol, 1) {
        let a2 = (rho - r).powi(2) + z * z;
        let (kk, ee) = elliptic_ke(a2 / b2);
        let c = 2.0 * l.current / (a2 * b2.sqrt());
        let bz = c * ((r * r - r2) * ee + a2 * kk);
        let br = c * z / rho * ((r * r + r2) * ee - a2 * kk);
        return Ok(e_rho * br + l.normal * bz);
    }
    loop_b_quadrature(l, rho, z, e_rho, beta, tol)
}

fn loop_b_quadrature(l: &CurrentLoop, rho: f64, z: f64, e_rho: Vec3, beta: f64, tol: f64) -> Result<Vec3> {
    let r = l.radius;
    let [i_rho, i_z] = graded_trapezoid(beta, tol, 0.0, |theta| {
        let c = theta.cos();
        let d2 = rho * rho + r * r - 2.0 * rho * r * c + z * z;
        let inv3 = 1.0 / (d2 * d2.sqrt());
        Ok([c * inv3, (r - rho * c) * inv3])
    })?
    .value;
    let k = 2.0 * l.current * r;
    Ok((e_rho * (z * i_rho) + l.normal * i_z) * k)
}

/// Vector potential of a circular loop divided by mu0/4pi.
pub(crate) fn loop_a(l: &CurrentLoop, x: Vec3, tol: f64, exclusion: f64) -> Result<Vec3> {
    let (rho, z, e_rho, beta) = loop_frame(l, x, exclusion)?;
    if rho == 0.0 {
        return Ok(Vec3::ZERO);
    }
    let r = l.radius;
    let b2 = (rho + r).powi(2) + z * z;
    let m = 4.0 * r * rho / b2;
    let a_phi = if m >= elliptic_floor(tol, 2) {
        let (kk, ee) = elliptic_ke(((rho - r).powi(2) + z * z) / b2);
        4.0 * l.current / m.sqrt() * (r / rho).sqrt() * ((1.0 - 0.5 * m) * kk - ee)
    } else {
        let [i_a] = graded_trapezoid(beta, tol, 0.0, |theta| {
            let c = theta.cos();
            Ok([c / (rho * rho + r * r - 2.0 * rho * r * c + z * z).sqrt()])
        })?
        .value;
        2.0 * l.current * r * i_a
    };
    Ok(l.normal.cross(e_rho) * a_phi)
}

struct SegmentGeometry {
    l: Vec3,
    len: f64,
    r1: Vec3,
    d1: f64,
    d2: f64,
    /// `d1 d2 + r1.r2`, which equals `((d1 + d2)^2 - len^2) / 2`.
    gap: f64,
}

fn segment_geometry(a: Vec3, b: Vec3, x: Vec3, exclusion: f64) -> Result<SegmentGeometry> {
    let l = b - a;
    let len = l.norm();
    let r1 = x - a;
    let r2 = x - b;
    let t = (r1.dot(l) / (len * len)).clamp(0.0, 1.0);
    let dist = (r1 - l * t).norm();
    if dist <= exclusion {
        return Err(Error::Singular { point: x, distance: dist, exclusion });
    }
    let (d1, d2) = (r1.norm(), r2.norm());
    let dot = r1.dot(r2);
    // Opposite-pointing arms: rewrite to avoid cancellation next to a long segment.
    let gap = if dot < 0.0 { r1.cross(r2).norm_squared() / (d1 * d2 - dot) } else { d1 * d2 + dot };
    Ok(SegmentGeometry { l, len, r1, d1, d2, gap })
}

/// Exact field of a straight segment carrying unit current from `a` to `b`, divided by mu0/4pi.
fn segment_b(a: Vec3, b: Vec3, x: Vec3, exclusion: f64) -> Result<Vec3> {
    let g = segment_geometry(a, b, x, exclusion)?;
    Ok(g.l.cross(g.r1) * ((g.d1 + g.d2) / (g.d1 * g.d2 * g.gap)))
}

/// Exact potential of a straight unit-current segment, divided by mu0/4pi.
fn segment_a(a: Vec3, b: Vec3, x: Vec3, exclusion: f64) -> Result<Vec3> {
    let g = segment_geometry(a, b, x, exclusion)?;
    let s = g.d1 + g.d2;
    // (s + len) / (s - len) = (s + len)^2 / (2 gap).
    Ok(g.l * ((s + g.len).powi(2) / (2.0 * g.gap)).ln() / g.len)
}

pub fn b_field(source: &CurrentSource, x: Vec3, k: &PhysicalConstants) -> Result<Vec3> {
    SourceField::new(source, *k)?.b(x)
}

pub fn vector_potential(source: &CurrentSource, x: Vec3, k: &PhysicalConstants) -> Result<Vec3> {
    SourceField::new(source, *k)?.a(x)
}

/// Instantaneous magnetic field at `x` of charge `q` at `xp` moving with velocity `v`.
pub fn delta_b_moving_charge(q: f64, xp: Vec3, v: Vec3, x: Vec3, k: &PhysicalConstants) -> Result<Vec3> {
    let r = x - xp;
    let d2 = r.norm_squared();
    if d2 == 0.0 {
        return Err(Error::Singular { point: x, distance: 0.0, exclusion: 0.0 });
    }
    Ok(v.cross(r) * (k.biot_savart_k() * q / (d2 * d2.sqrt())))
}

/// Time integral over one period of the field of the moving test charge at `x`.
pub fn time_integrated_delta_b(tr: &ChargeTrajectory, x: Vec3, k: &PhysicalConstants, rel_tol: f64) -> Result<Vec3> {
    let r = time_integral(tr, rel_tol, 0.0, |p, v| Ok(delta_b_moving_charge(tr.charge, p, v, x, k)?.to_array()))?;
    Ok(Vec3::from(r.value))
}

/// Integral over one period of `f(position, velocity)`.
///
/// Circular orbits give a smooth periodic integrand and use the trapezoid
/// rule; polygonal paths are integrated segment by segment.
pub fn time_integral<const K: usize>(
    tr: &ChargeTrajectory,
    rel_tol: f64,
    abs_tol: f64,
    f: impl Fn(Vec3, Vec3) -> Result<[f64; K]>,
) -> Result<Integral<[f64; K]>> {
    match &tr.path {
        TrajectoryPath::CircularOrbit { period, windings, .. } => {
            if *windings == 0 {
                return Ok(Integral { value: [0.0; K], error: 0.0, n_evals: 0, converged: true });
            }
            let g = |theta: f64| -> Result<[f64; K]> {
                // theta in [0, pi] maps to t and T - t; sum both halves.
                let t = theta / PI * 0.5 * period;
                let (p1, v1) = sample_unchecked(tr, t);
                let (p2, v2) = sample_unchecked(tr, period - t);
                let (a, b) = (f(p1, v1)?, f(p2, v2)?);
                Ok(std::array::from_fn(|i| a[i] + b[i]))
            };
            let w = 0.5 * period / PI;
            let r = graded_trapezoid(0.0, rel_tol, abs_tol / w, g)?;
            Ok(Integral { value: r.value.map(|c| c * w), error: r.error * w, n_evals: 2 * r.n_evals, converged: r.converged })
        }
        TrajectoryPath::PiecewiseLinearLoop { .. } => {
            let spec = QuadratureSpec::default().with_rel_tol(rel_tol).with_abs_tol(abs_tol.max(1e-300));
            integrate_1d_points(
                |t| {
                    let (p, v) = sample_unchecked(tr, t);
                    f(p, v)
                },
                &tr.breakpoints(),
                &spec,
            )
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChargeSelector {
    External,
    Test,
    All,
}

/// Coulomb field [V/m] of the selected charges.
pub fn e_field_point_charges(cfg: &StaticChargeConfig, x: Vec3, which: ChargeSelector, k: &PhysicalConstants) -> Result<Vec3> {
    let ext = cfg.external_charges.iter();
    let test = std::iter::once(&cfg.test_charge);
    let selected: Vec<_> = match which {
        ChargeSelector::External => ext.collect(),
        ChargeSelector::Test => test.collect(),
        ChargeSelector::All => ext.chain(test).collect(),
    };
    let mut e = Vec3::ZERO;
    for c in selected {
        e += coulomb(c.charge, c.position, x, k)?;
    }
    Ok(e)
}

pub(crate) fn coulomb(q: f64, at: Vec3, x: Vec3, k: &PhysicalConstants) -> Result<Vec3> {
    let r = x - at;
    let d2 = r.norm_squared();
    if d2 == 0.0 {
        return Err(Error::Singular { point: x, distance: 0.0, exclusion: 0.0 });
    }
    Ok(r * (k.coulomb_k() * q / (d2 * d2.sqrt())))
}

/// Smooth single-valued gauge function
/// `lambda(x) = amplitude * (c0 + g.y + y^T Q y) * exp(-|y|^2 / 2)` with `y = (x - center) / sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeFunction {
    pub amplitude: f64,
    pub center: Vec3,
    pub sigma: f64,
    pub c0: f64,
    pub g: Vec3,
    /// Symmetrized before use.
    pub q: [[f64; 3]; 3],
}

impl GaugeFunction {
    pub fn zero() -> Self {
        Self { amplitude: 0.0, center: Vec3::ZERO, sigma: 1.0, c0: 0.0, g: Vec3::ZERO, q: [[0.0; 3]; 3] }
    }

    /// Number of built-in gauge functions.
    pub const BUILTIN_COUNT: usize = 5;

    /// Built-in family member `index`, sized to features of length `scale`
    /// around `origin`, with potential shifts of order `amplitude / scale`.
    pub fn builtin(index: usize, origin: Vec3, scale: f64, amplitude: f64) -> Self {
        let base = Self { amplitude, center: origin, sigma: scale, ..Self::zero() };
        match index % Self::BUILTIN_COUNT {
            0 => Self { c0: 1.0, ..base },
            1 => Self { center: origin + Vec3::new(0.3, -0.2, 0.1) * scale, g: Vec3::new(1.0, -0.5, 0.25), ..base },
            2 => Self { c0: 0.2, q: [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 0.5]], ..base },
            3 => Self {
                center: origin + Vec3::new(-0.5, 0.4, 0.0) * scale,
                sigma: 0.7 * scale,
                c0: -0.3,
                g: Vec3::new(0.0, 0.8, -0.6),
                q: [[0.0, 0.5, 0.2], [0.5, 0.3, 0.0], [0.2, 0.0, -0.4]],
                ..base
            },
            _ => Self { sigma: 3.0 * scale, c0: 0.5, g: Vec3::new(-1.0, 1.0, 1.0), ..base },
        }
    }

    fn sym_q(&self, y: Vec3) -> Vec3 {
        let q = |i: usize, j: usize| 0.5 * (self.q[i][j] + self.q[j][i]);
        Vec3::new(
            q(0, 0) * y.x + q(0, 1) * y.y + q(0, 2) * y.z,
            q(1, 0) * y.x + q(1, 1) * y.y + q(1, 2) * y.z,
            q(2, 0) * y.x + q(2, 1) * y.y + q(2, 2) * y.z,
        )
    }

    pub fn value(&self, x: Vec3) -> f64 {
        let y = (x - self.center) / self.sigma;
        let p = self.c0 + self.g.dot(y) + y.dot(self.sym_q(y));
        self.amplitude * p * (-0.5 * y.norm_squared()).exp()
    }

    pub fn gradient(&self, x: Vec3) -> Vec3 {
        let y = (x - self.center) / self.sigma;
        let qy = self.sym_q(y);
        let p = self.c0 + self.g.dot(y) + y.dot(qy);
        let envelope = (-0.5 * y.norm_squared()).exp();
        (self.g + qy * 2.0 - y * p) * (self.amplitude * envelope / self.sigma)
    }
}

/// `A + grad lambda`.
pub fn gauge_shifted_potential(field: &SourceField, x: Vec3, lambda: &GaugeFunction) -> Result<Vec3> {
    Ok(field.a(x)? + lambda.gradient(x))
}

/// Magnetic flux [Wb] through the closed spatial path of `tr`.
///
/// Ideal solenoids and toroids use their topology when the path stays out of
/// the field region: winding number times the solenoid flux, or linking with
/// the core circle times the core flux. Otherwise B is integrated over the
/// cone joining the path to its centroid.
pub fn flux_through_loop(field: &SourceField, tr: &ChargeTrajectory, spec: &QuadratureSpec) -> Result<Integral<f64>> {
    tr.validate()?;
    let path = tr.polyline(256);
    match field.source() {
        CurrentSource::IdealInfiniteSolenoid(s) if stays_outside_cylinder(tr, &path, s) => {
            let n = winding_number(&path, s.axis_point, s.axis_dir)?;
            Ok(Integral { value: n as f64 * s.total_flux, error: 0.0, n_evals: path.len() as u64, converged: true })
        }
        CurrentSource::ToroidalCoil(c) if stays_outside_tube(&path, c) => {
            let core = core_circle(c, 256);
            let n = linking_number(&core, &path)?.number;
            let flux = toroid_core_flux(c, field.constants());
            Ok(Integral { value: n as f64 * flux, error: 0.0, n_evals: (path.len() * core.len()) as u64, converged: true })
        }
        _ => cone_flux(field, tr, spec),
    }
}

fn stays_outside_cylinder(tr: &ChargeTrajectory, path: &[Vec3], s: &IdealSolenoid) -> bool {
    if let TrajectoryPath::CircularOrbit { center, normal, radius, .. } = &tr.path {
        // A circle in a plane normal to the axis: exact distance test.
        if (normal.dot(s.axis_dir).abs() - 1.0).abs() < 1e-12 {
            let (rho, _, _) = cylindrical(s.axis_point, s.axis_dir, *center);
            return rho + s.radius < *radius || rho - radius > s.radius;
        }
    }
    let n = path.len();
    (0..n).all(|i| {
        let (a, b) = (path[i], path[(i + 1) % n]);
        distance_to_line(a, b, s.axis_point, s.axis_dir) > s.radius
    })
}

fn distance_to_line(a: Vec3, b: Vec3, p: Vec3, dir: Vec3) -> f64 {
    // Distance between segment ab and the infinite line through p along dir.
    let (e1, e2) = dir.orthonormal_basis();
    let pa = ((a - p).dot(e1), (a - p).dot(e2));
    let pb = ((b - p).dot(e1), (b - p).dot(e2));
    let (dx, dy) = (pb.0 - pa.0, pb.1 - pa.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (-(pa.0 * dx + pa.1 * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (pa.0 + t * dx).hypot(pa.1 + t * dy)
}

fn stays_outside_tube(path: &[Vec3], c: &ToroidalCoil) -> bool {
    // Sampled check with a margin for the chord sagitta between samples.
    let n = path.len();
    (0..n).all(|i| {
        let (a, b) = (path[i], path[(i + 1) % n]);
        let margin = a.distance(b);
        [a, b, (a + b) * 0.5].iter().all(|p| {
            let (rho, h, _) = cylindrical(c.center, c.plane_normal, *p);
            ((rho - c.major_radius).powi(2) + h * h).sqrt() > c.minor_radius + margin
        })
    })
}

pub(crate) fn core_circle(c: &ToroidalCoil, n: usize) -> Vec<Vec3> {
    let (e1, e2) = c.plane_normal.orthonormal_basis();
    (0..n)
        .map(|i| {
            let phi = 2.0 * PI * i as f64 / n as f64;
            c.center + (e1 * phi.cos() + e2 * phi.sin()) * c.major_radius
        })
        .collect()
}

/// Flux through the ruled cone `c + s (x(t) - c)`, `s` in [0, 1]:
/// `integral dt ds  s B . ((x - c) x v)`.
fn cone_flux(field: &SourceField, tr: &ChargeTrajectory, spec: &QuadratureSpec) -> Result<Integral<f64>> {
    if let TrajectoryPath::CircularOrbit { windings: 0, .. } = tr.path {
        return Ok(Integral { value: 0.0, error: 0.0, n_evals: 0, converged: true });
    }
    let c = tr.centroid();
    let f = |p: &[f64; 2]| -> Result<f64> {
        let (x, v) = sample_unchecked(tr, p[0]);
        let s = p[1];
        let arm = x - c;
        let b = field.b(c + arm * s)?;
        Ok(s * b.dot(arm.cross(v)))
    };
    let times = tr.breakpoints();
    let splits = match &tr.path {
        TrajectoryPath::CircularOrbit { windings, .. } => [8 * windings.unsigned_abs() as usize, 4],
        TrajectoryPath::PiecewiseLinearLoop { .. } => [1, 4],
    };
    let mut total = Integral { value: 0.0, error: 0.0, n_evals: 0, converged: true };
    let piece_spec = QuadratureSpec { abs_tol: spec.abs_tol / (times.len() - 1) as f64, ..*spec };
    for w in times.windows(2) {
        let r = integrate_box(f, [w[0], 0.0], [w[1], 1.0], splits, &piece_spec)?;
        total = Integral {
            value: total.value + r.value,
            error: total.error + r.error,
            n_evals: total.n_evals + r.n_evals,
            converged: total.converged && r.converged,
        };
    }
    Ok(total)
}

/// Trace the field line of `field` through `seed`.
pub fn trace_source_line(field: &SourceField, seed: Vec3, plane: Option<ClosurePlane>, opts: &TraceOptions) -> Result<FieldLine> {
    trace_field_line(|x| field.b(x), seed, plane, opts)
}
