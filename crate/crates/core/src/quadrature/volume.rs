//! 3D integration over physical domains with declared point singularities.
//!
//! Each singular point `p` with radius `eps` gets a smooth cutoff `w(|x-p|/eps)`
//! that is 1 inside `eps/2` and 0 outside `eps`. The main cubature integrates
//! `(1 - sum w) f`, which vanishes near every singular point. In
//! [`SingularMode::Blend`] the remaining `w f` pieces are integrated in
//! spherical coordinates centred on the singular point, where the `r^2`
//! Jacobian absorbs `1/r^2` singularities. The exclusion modes drop those
//! pieces, optionally extrapolating in `eps`.

use std::f64::consts::PI;

use super::cubature::integrate_box;
use super::{Integral, QuadratureSpec, Value};
use crate::error::{invalid, Result};
use crate::vector::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub enum Domain3 {
    Box { lo: Vec3, hi: Vec3 },
    Ball { center: Vec3, radius: f64 },
    /// Solid cylinder. `z_min`/`z_max` may be infinite, in which case the axial
    /// coordinate is compactified with `z = scale * tan(u)`.
    Cylinder { origin: Vec3, axis: Vec3, radius: f64, z_min: f64, z_max: f64 },
    /// Solid torus tube around the circle of radius `major` in the plane
    /// through `center` perpendicular to `normal`.
    TorusTube { center: Vec3, normal: Vec3, major: f64, minor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularPoint {
    pub position: Vec3,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SingularMode {
    /// Integrate the neighbourhood of each singular point in local spherical coordinates.
    #[default]
    Blend,
    /// Drop the neighbourhoods.
    Exclude,
    /// Drop the neighbourhoods at `eps` and `eps/2` and extrapolate assuming an
    /// error proportional to `eps^order`.
    ExcludeRichardson { order: f64 },
}

impl Domain3 {
    fn validate(&self) -> Result<()> {
        let ok = match self {
            Domain3::Box { lo, hi } => lo.x < hi.x && lo.y < hi.y && lo.z < hi.z && lo.is_finite() && hi.is_finite(),
            Domain3::Ball { radius, .. } => *radius > 0.0 && radius.is_finite(),
            Domain3::Cylinder { axis, radius, z_min, z_max, .. } => {
                *radius > 0.0 && z_min < z_max && (axis.norm() - 1.0).abs() < 1e-12
            }
            Domain3::TorusTube { normal, major, minor, .. } => {
                *minor > 0.0 && minor < major && (normal.norm() - 1.0).abs() < 1e-12
            }
        };
        if ok {
            Ok(())
        } else {
            Err(invalid("domain", format!("degenerate {self:?}")))
        }
    }

    pub fn default_splits(&self) -> [usize; 3] {
        match self {
            Domain3::Box { .. } => [1, 1, 1],
            Domain3::Ball { .. } => [2, 2, 4],
            Domain3::Cylinder { z_min, z_max, .. } => {
                if z_min.is_finite() && z_max.is_finite() {
                    [1, 4, 2]
                } else {
                    [1, 4, 4]
                }
            }
            Domain3::TorusTube { .. } => [1, 4, 8],
        }
    }

    fn param_box(&self) -> ([f64; 3], [f64; 3]) {
        let hp = std::f64::consts::FRAC_PI_2;
        match self {
            Domain3::Box { lo, hi } => (lo.to_array(), hi.to_array()),
            Domain3::Ball { radius, .. } => ([0.0, -1.0, 0.0], [*radius, 1.0, 2.0 * PI]),
            Domain3::Cylinder { radius, z_min, z_max, .. } => {
                let lo = if z_min.is_finite() { if z_max.is_finite() { *z_min } else { 0.0 } } else { -hp };
                let hi = if z_max.is_finite() { if z_min.is_finite() { *z_max } else { 0.0 } } else { hp };
                ([0.0, 0.0, lo], [*radius, 2.0 * PI, hi])
            }
            Domain3::TorusTube { minor, .. } => ([0.0, 0.0, 0.0], [*minor, 2.0 * PI, 2.0 * PI]),
        }
    }

    /// Physical point and volume Jacobian for parameter coordinates `u`.
    fn map(&self, u: &[f64; 3]) -> (Vec3, f64) {
        match self {
            Domain3::Box { .. } => (Vec3::from(*u), 1.0),
            Domain3::Ball { center, .. } => {
                let (r, mu, phi) = (u[0], u[1], u[2]);
                let s = (1.0 - mu * mu).max(0.0).sqrt();
                let (sp, cp) = phi.sin_cos();
                (*center + Vec3::new(s * cp, s * sp, mu) * r, r * r)
            }
            Domain3::Cylinder { origin, axis, radius, z_min, z_max } => {
                let (e1, e2) = axis.orthonormal_basis();
                let (rho, phi) = (u[0], u[1]);
                let (z, jz) = match (z_min.is_finite(), z_max.is_finite()) {
                    (true, true) => (u[2], 1.0),
                    (true, false) => compact(*z_min, *radius, u[2]),
                    (false, true) => {
                        let (z, j) = compact(*z_max, *radius, -u[2]);
                        (z, j)
                    }
                    (false, false) => compact(0.0, *radius, u[2]),
                };
                let (sp, cp) = phi.sin_cos();
                (*origin + (e1 * cp + e2 * sp) * rho + *axis * z, rho * jz)
            }
            Domain3::TorusTube { center, normal, major, .. } => {
                let (e1, e2) = normal.orthonormal_basis();
                let (s, theta, phi) = (u[0], u[1], u[2]);
                let (st, ct) = theta.sin_cos();
                let (sp, cp) = phi.sin_cos();
                let rho = major + s * ct;
                (*center + (e1 * cp + e2 * sp) * rho + *normal * (s * st), s * rho)
            }
        }
    }

    /// Whether the closed ball of radius `r` around `p` lies inside the domain.
    pub fn contains_ball(&self, p: Vec3, r: f64) -> bool {
        match self {
            Domain3::Box { lo, hi } => {
                p.x - r >= lo.x && p.x + r <= hi.x && p.y - r >= lo.y && p.y + r <= hi.y && p.z - r >= lo.z && p.z + r <= hi.z
            }
            Domain3::Ball { center, radius } => p.distance(*center) + r <= *radius,
            Domain3::Cylinder { origin, axis, radius, z_min, z_max } => {
                let d = p - *origin;
                let z = d.dot(*axis);
                let rho = (d - *axis * z).norm();
                rho + r <= *radius && z - r >= *z_min && z + r <= *z_max
            }
            Domain3::TorusTube { center, normal, major, minor } => {
                let d = p - *center;
                let h = d.dot(*normal);
                let rho = (d - *normal * h).norm();
                ((rho - major).powi(2) + h * h).sqrt() + r <= *minor
            }
        }
    }
}

fn compact(z0: f64, scale: f64, u: f64) -> (f64, f64) {
    let c = u.cos();
    (z0 + scale * u.tan(), scale / (c * c))
}

/// Smooth step: 1 for `t <= 1/2`, 0 for `t >= 1`, C-infinity in between.
fn cutoff(t: f64) -> f64 {
    if t <= 0.5 {
        return 1.0;
    }
    if t >= 1.0 {
        return 0.0;
    }
    let u = 2.0 * (1.0 - t);
    let a = (-1.0 / u).exp();
    let b = (-1.0 / (1.0 - u)).exp();
    a / (a + b)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct VolumeOptions {
    pub mode: SingularMode,
    pub splits: Option<[usize; 3]>,
}

/// Integral of `f` over `domain`, treating `singular` points in blend mode.
pub fn integrate_3d<V: Value>(
    f: impl Fn(Vec3) -> Result<V> + Sync,
    domain: &Domain3,
    singular: &[SingularPoint],
    spec: &QuadratureSpec,
) -> Result<Integral<V>> {
    integrate_3d_with(f, domain, singular, VolumeOptions::default(), spec)
}

pub fn integrate_3d_with<V: Value>(
    f: impl Fn(Vec3) -> Result<V> + Sync,
    domain: &Domain3,
    singular: &[SingularPoint],
    options: VolumeOptions,
    spec: &QuadratureSpec,
) -> Result<Integral<V>> {
    domain.validate()?;
    for (i, s) in singular.iter().enumerate() {
        if !(s.radius > 0.0) {
            return Err(invalid("singular", "exclusion radius must be positive"));
        }
        if !domain.contains_ball(s.position, s.radius) {
            return Err(invalid("singular", format!("exclusion ball {i} is not inside the domain")));
        }
        for t in &singular[..i] {
            if s.position.distance(t.position) < s.radius + t.radius {
                return Err(invalid("singular", "exclusion balls overlap"));
            }
        }
    }
    match options.mode {
        SingularMode::Blend => {
            // The bulk and the balls share 0.9 of the budget evenly.
            let main_spec = QuadratureSpec { rel_tol: 0.45 * spec.rel_tol, abs_tol: 0.45 * spec.abs_tol, ..*spec };
            let main = integrate_main(&f, domain, singular, options.splits, &main_spec)?;
            let mut total = main;
            let share = 0.45 / singular.len().max(1) as f64;
            let local_spec = QuadratureSpec {
                rel_tol: share * spec.rel_tol,
                abs_tol: share * spec.abs_tol.max(spec.rel_tol * main.value.max_abs()),
                ..*spec
            };
            for s in singular {
                let part = integrate_local(&f, s, &local_spec)?;
                total = combine(total, part, 1.0);
            }
            Ok(total)
        }
        SingularMode::Exclude => integrate_main(&f, domain, singular, options.splits, spec),
        SingularMode::ExcludeRichardson { order } => {
            let coarse = integrate_main(&f, domain, singular, options.splits, spec)?;
            let halved: Vec<SingularPoint> =
                singular.iter().map(|s| SingularPoint { position: s.position, radius: 0.5 * s.radius }).collect();
            let fine = integrate_main(&f, domain, &halved, options.splits, spec)?;
            let k = 2f64.powf(order);
            let value = fine.value.scale(k / (k - 1.0)).sub(coarse.value.scale(1.0 / (k - 1.0)));
            let extrapolation = fine.value.sub(coarse.value).max_abs() / (k - 1.0);
            Ok(Integral {
                value,
                error: (k * fine.error + coarse.error) / (k - 1.0) + extrapolation,
                n_evals: fine.n_evals + coarse.n_evals,
                converged: fine.converged && coarse.converged,
            })
        }
    }
}

fn combine<V: Value>(a: Integral<V>, b: Integral<V>, sign: f64) -> Integral<V> {
    Integral {
        value: a.value.add(b.value.scale(sign)),
        error: a.error + b.error,
        n_evals: a.n_evals + b.n_evals,
        converged: a.converged && b.converged,
    }
}

fn integrate_main<V: Value>(
    f: &(impl Fn(Vec3) -> Result<V> + Sync),
    domain: &Domain3,
    singular: &[SingularPoint],
    splits: Option<[usize; 3]>,
    spec: &QuadratureSpec,
) -> Result<Integral<V>> {
    let (lo, hi) = domain.param_box();
    let g = |u: &[f64; 3]| -> Result<V> {
        let (x, jac) = domain.map(u);
        let mut weight = 1.0;
        for s in singular {
            weight -= cutoff(x.distance(s.position) / s.radius);
        }
        if weight <= 0.0 || jac == 0.0 {
            return Ok(V::zero());
        }
        Ok(f(x)?.scale(weight * jac))
    };
    integrate_box(g, lo, hi, splits.unwrap_or_else(|| domain.default_splits()), spec)
}

fn integrate_local<V: Value>(
    f: &(impl Fn(Vec3) -> Result<V> + Sync),
    s: &SingularPoint,
    spec: &QuadratureSpec,
) -> Result<Integral<V>> {
    let ball = Domain3::Ball { center: s.position, radius: s.radius };
    let (lo, hi) = ball.param_box();
    let g = |u: &[f64; 3]| -> Result<V> {
        let (x, jac) = ball.map(u);
        let w = cutoff(u[0] / s.radius);
        if w == 0.0 {
            return Ok(V::zero());
        }
        Ok(f(x)?.scale(w * jac))
    };
    // Split the radius at the inner edge of the cutoff so the smooth transition
    // and the constant core are integrated separately.
    let half = QuadratureSpec { abs_tol: 0.5 * spec.abs_tol, rel_tol: 0.5 * spec.rel_tol, ..*spec };
    let inner = integrate_box(g, lo, [0.5 * s.radius, hi[1], hi[2]], [1, 2, 4], &half)?;
    let outer = integrate_box(g, [0.5 * s.radius, lo[1], lo[2]], hi, [1, 2, 4], &half)?;
    Ok(combine(inner, outer, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(rel: f64) -> QuadratureSpec {
        QuadratureSpec::default().with_rel_tol(rel).with_abs_tol(1e-14)
    }

    #[test]
    fn volumes_of_shapes() {
        let s = spec(1e-12);
        let one = |_: Vec3| Ok(1.0);
        let ball = integrate_3d(one, &Domain3::Ball { center: Vec3::new(1.0, 2.0, 3.0), radius: 2.0 }, &[], &s).unwrap();
        assert!((ball.value - 4.0 / 3.0 * PI * 8.0).abs() < 1e-11, "{}", ball.value);
        let cyl = Domain3::Cylinder { origin: Vec3::ZERO, axis: Vec3::Y, radius: 0.5, z_min: -1.0, z_max: 2.0 };
        let r = integrate_3d(one, &cyl, &[], &s).unwrap();
        assert!((r.value - PI * 0.25 * 3.0).abs() < 1e-12);
        let torus = Domain3::TorusTube { center: Vec3::ZERO, normal: Vec3::Z, major: 2.0, minor: 0.5 };
        let r = integrate_3d(one, &torus, &[], &s).unwrap();
        assert!((r.value - 2.0 * PI * PI * 2.0 * 0.25).abs() < 1e-11, "{}", r.value);
    }

    #[test]
    fn infinite_cylinder_with_decaying_integrand() {
        // Integral over rho<1, all z, of 1/(1+z^2) = pi * pi.
        let cyl = Domain3::Cylinder { origin: Vec3::ZERO, axis: Vec3::Z, radius: 1.0, z_min: f64::NEG_INFINITY, z_max: f64::INFINITY };
        let r = integrate_3d(|x: Vec3| Ok(1.0 / (1.0 + x.z * x.z)), &cyl, &[], &spec(1e-10)).unwrap();
        assert!((r.value - PI * PI).abs() < 1e-8, "{}", r.value);
        let half = Domain3::Cylinder { origin: Vec3::ZERO, axis: Vec3::Z, radius: 1.0, z_min: 0.0, z_max: f64::INFINITY };
        let r = integrate_3d(|x: Vec3| Ok(1.0 / (1.0 + x.z * x.z)), &half, &[], &spec(1e-10)).unwrap();
        assert!((r.value - PI * PI / 2.0).abs() < 1e-8, "{}", r.value);
    }

    #[test]
    fn point_singularity_blend_is_exact() {
        // 1/|x-p|^2 over a ball of radius R centred at p is 4 pi R.
        let p = Vec3::new(0.1, -0.2, 0.3);
        let ball = Domain3::Ball { center: Vec3::ZERO, radius: 3.0 };
        let f = |x: Vec3| Ok(1.0 / (x - p).norm_squared());
        let sing = [SingularPoint { position: p, radius: 0.5 }];
        let r = integrate_3d(f, &ball, &sing, &spec(1e-9)).unwrap();
        // Oracle: closed form for a ball of radius R whose centre is offset by d from the singular point:
        // integral = 2 pi [R + (R^2 - d^2)/(2d) ln((R+d)/(R-d))].
        let (big, d) = (3.0f64, p.norm());
        let exact = 2.0 * PI * (big + (big * big - d * d) / (2.0 * d) * ((big + d) / (big - d)).ln());
        assert!((r.value - exact).abs() < 1e-7 * exact, "{} vs {}", r.value, exact);
    }

    #[test]
    fn exclusion_with_richardson_approaches_exact() {
        let p = Vec3::ZERO;
        let ball = Domain3::Ball { center: Vec3::ZERO, radius: 1.0 };
        let f = |x: Vec3| Ok(1.0 / (x - p).norm_squared());
        let sing = [SingularPoint { position: p, radius: 0.2 }];
        let opts = VolumeOptions { mode: SingularMode::Exclude, splits: None };
        let excluded = integrate_3d_with(f, &ball, &sing, opts, &spec(1e-10)).unwrap();
        assert!(excluded.value < 4.0 * PI);
        // The dropped piece scales linearly with eps for a 1/r^2 integrand.
        let opts = VolumeOptions { mode: SingularMode::ExcludeRichardson { order: 1.0 }, splits: None };
        let r = integrate_3d_with(f, &ball, &sing, opts, &spec(1e-10)).unwrap();
        assert!((r.value - 4.0 * PI).abs() < 1e-7, "{}", r.value);
    }

    #[test]
    fn rejects_bad_singular_layout() {
        let ball = Domain3::Ball { center: Vec3::ZERO, radius: 1.0 };
        let outside = [SingularPoint { position: Vec3::new(0.9, 0.0, 0.0), radius: 0.2 }];
        assert!(integrate_3d(|_: Vec3| Ok(1.0), &ball, &outside, &spec(1e-6)).is_err());
        let overlap = [
            SingularPoint { position: Vec3::new(0.1, 0.0, 0.0), radius: 0.2 },
            SingularPoint { position: Vec3::new(-0.1, 0.0, 0.0), radius: 0.2 },
        ];
        assert!(integrate_3d(|_: Vec3| Ok(1.0), &ball, &overlap, &spec(1e-6)).is_err());
    }

    #[test]
    fn cutoff_is_a_partition() {
        assert_eq!(cutoff(0.3), 1.0);
        assert_eq!(cutoff(1.2), 0.0);
        assert!((cutoff(0.75) - 0.5).abs() < 1e-15);
        let mut prev = 1.0;
        for i in 0..=100 {
            let c = cutoff(0.5 + 0.005 * i as f64);
            assert!(c <= prev);
            prev = c;
        }
    }
}
