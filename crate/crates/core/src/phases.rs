//! Phase engines.
//!
//! Magnetic phases are computed four ways (vector potential around the path,
//! enclosed flux, overlap of the source field with the field of the moving
//! charge, and field-line linking) plus two closed-form reductions. Electric
//! phases come from the scalar potential or from the overlap of electric fields.
//!
//! `QuadratureSpec::abs_tol` is read in radians by every engine here. When a
//! reference phase is known the absolute target is raised to
//! `1e-2 * rel_tol * |reference|`, so that integrals which vanish (a path that
//! encloses no flux) terminate.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::error::{invalid, Error, Result};
use crate::fields::{
    coulomb, flux_through_loop, time_integral, time_integrated_delta_b, trace_source_line, GaugeFunction, SourceField,
};
use crate::quadrature::{
    circle_linking_number, integrate_1d, integrate_1d_scaled, integrate_3d, integrate_3d_with, integrate_box, linking_number,
    linking_number_with, simplify_polyline, ClosurePlane, Domain3, Integral, QuadratureSpec, SingularMode,
    SingularPoint, TraceOptions, VolumeOptions,
};
use crate::result::{Method, PhaseResult};
use crate::sources::{
    sample_unchecked, toroid_core_flux, ChargeTrajectory, CurrentSource, StaticChargeConfig, TrajectoryPath,
};
use crate::vector::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagneticScenario {
    pub source: CurrentSource,
    pub trajectory: ChargeTrajectory,
    pub constants: PhysicalConstants,
}

impl MagneticScenario {
    pub fn new(source: CurrentSource, trajectory: ChargeTrajectory, constants: PhysicalConstants) -> Self {
        Self { source, trajectory, constants }
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.trajectory.validate()
    }

    /// Flux used to normalize phases: the solenoid or core flux, or the
    /// centre field times the cross-section for loops and finite solenoids.
    pub fn reference_flux(&self) -> Option<f64> {
        reference_flux(&self.source, &self.constants)
    }

    /// `q * reference_flux / hbar`.
    pub fn reference_phase(&self) -> Option<f64> {
        self.reference_flux().map(|f| self.trajectory.charge * f / self.constants.hbar)
    }
}

pub fn reference_flux(source: &CurrentSource, k: &PhysicalConstants) -> Option<f64> {
    match source {
        CurrentSource::IdealInfiniteSolenoid(s) => Some(s.total_flux),
        CurrentSource::FiniteSolenoid(s) => {
            Some(k.mu0 * s.n_loops as f64 / s.length * s.current * PI * s.radius * s.radius)
        }
        CurrentSource::ToroidalCoil(c) => Some(toroid_core_flux(c, k)),
        CurrentSource::CurrentLoop(l) => Some(0.5 * k.mu0 * l.current * PI * l.radius),
        CurrentSource::PolylineCurrent(_) => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectricScenario {
    pub config: StaticChargeConfig,
    pub constants: PhysicalConstants,
}

impl ElectricScenario {
    pub fn new(config: StaticChargeConfig, constants: PhysicalConstants) -> Self {
        Self { config, constants }
    }

    /// `-(q T / hbar) * sum_i Q_i / (4 pi eps0 |r_q - r_i|)`.
    pub fn closed_form_phase(&self) -> f64 {
        let c = &self.config;
        let potential: f64 = c
            .external_charges
            .iter()
            .map(|e| self.constants.coulomb_k() * e.charge / e.position.distance(c.test_charge.position))
            .sum();
        -c.test_charge.charge * potential * c.dwell_time / self.constants.hbar
    }
}

fn zero(method: Method) -> PhaseResult {
    PhaseResult::exact(method, 0.0, 0)
}

/// Spec for an integral whose value times `factor` is a phase.
fn scaled_spec(spec: &QuadratureSpec, factor: f64, reference: Option<f64>) -> QuadratureSpec {
    let floor = reference.map_or(0.0, |r| 1e-2 * spec.rel_tol * r.abs());
    QuadratureSpec { abs_tol: spec.abs_tol.max(floor) / factor.abs(), ..*spec }
}

fn from_integral(method: Method, factor: f64, r: Integral<f64>) -> PhaseResult {
    PhaseResult {
        phase: factor * r.value,
        abs_error_estimate: factor.abs() * r.error,
        method,
        n_evaluations: r.n_evals,
        converged: r.converged,
    }
}

/// Tolerance for field values feeding an outer integral at `rel_tol`.
fn inner_tol(rel_tol: f64) -> f64 {
    (1e-2 * rel_tol).clamp(1e-13, 1e-6)
}

/// `(q / hbar) * closed-path integral of A . dl`.
pub fn wilson_loop_phase(s: &MagneticScenario, spec: &QuadratureSpec) -> Result<PhaseResult> {
    wilson(s, None, spec)
}

/// As [`wilson_loop_phase`] with `A` replaced by `A + grad lambda`.
pub fn wilson_loop_phase_gauged(s: &MagneticScenario, lambda: &GaugeFunction, spec: &QuadratureSpec) -> Result<PhaseResult> {
    wilson(s, Some(lambda), spec)
}

fn wilson(s: &MagneticScenario, lambda: Option<&GaugeFunction>, spec: &QuadratureSpec) -> Result<PhaseResult> {
    spec.validate()?;
    let field = field_with_tol(s, spec)?;
    let factor = s.trajectory.charge / s.constants.hbar;
    if factor == 0.0 {
        return Ok(zero(Method::WilsonLoop));
    }
    let ispec = scaled_spec(spec, factor, s.reference_phase());
    let r = time_integral(&s.trajectory, ispec.rel_tol, ispec.abs_tol, |p, v| {
        let mut a = field.a(p)?;
        if let Some(l) = lambda {
            a += l.gradient(p);
        }
        Ok([a.dot(v)])
    })?;
    Ok(from_integral(Method::WilsonLoop, factor, r.map(|v| v[0])))
}

fn field_with_tol(s: &MagneticScenario, spec: &QuadratureSpec) -> Result<SourceField> {
    s.validate()?;
    let opts = crate::fields::FieldOptions { rel_tol: inner_tol(spec.rel_tol), ..Default::default() };
    SourceField::with_options(&s.source, s.constants, opts)
}

/// `(q / hbar) * flux through the path`.
pub fn flux_phase(s: &MagneticScenario, spec: &QuadratureSpec) -> Result<PhaseResult> {
    spec.validate()?;
    let field = field_with_tol(s, spec)?;
    let factor = s.trajectory.charge / s.constants.hbar;
    if factor == 0.0 {
        return Ok(zero(Method::EnclosedFlux));
    }
    let r = flux_through_loop(&field, &s.trajectory, &scaled_spec(spec, factor, s.reference_phase()))?;
    Ok(from_integral(Method::EnclosedFlux, factor, r))
}

/// Support region of the source, checked to be free of the path.
fn overlap_domain(field: &SourceField, tr: &ChargeTrajectory) -> Result<Domain3> {
    let domain = field
        .support()
        .ok_or_else(|| Error::Unsupported("field overlap needs a source with a bounded field region".into()))?;
    let path = tr.polyline(256);
    if path.iter().any(|p| domain.contains_ball(*p, 0.0)) {
        return Err(Error::TrajectoryInSupport);
    }
    Ok(domain)
}

fn overlap_options(source: &CurrentSource) -> VolumeOptions {
    match source {
        // Region boundaries on the loop planes keep each winding on an edge.
        CurrentSource::FiniteSolenoid(f) => VolumeOptions { splits: Some([1, 2, 2 * f.n_loops]), ..Default::default() },
        _ => VolumeOptions::default(),
    }
}

/// `(1 / mu0 hbar) * integral dt integral d3x B . dB` over the support of B,
/// with the time integral taken first: `integral dt dB(x, t)` is the field of
/// the path carrying current `q`.
pub fn field_overlap_phase(s: &MagneticScenario, spec: &QuadratureSpec) -> Result<PhaseResult> {
    spec.validate()?;
    let field = field_with_tol(s, spec)?;
    let tr = &s.trajectory;
    let domain = overlap_domain(&field, tr)?;
    let k = s.constants;
    let factor = 1.0 / (k.mu0 * k.hbar);
    if tr.charge == 0.0 {
        return Ok(zero(Method::FieldOverlap));
    }
    let tol = inner_tol(spec.rel_tol);
    let f = |x: Vec3| -> Result<f64> {
        let b = match field.b(x) {
            Ok(b) => b,
            Err(Error::Singular { .. }) => return Ok(0.0),
            Err(e) => return Err(e),
        };
        Ok(b.dot(time_integrated_delta_b(tr, x, &k, tol)?))
    };
    let r = integrate_3d_with(
        f,
        &domain,
        &[],
        overlap_options(&s.source),
        &scaled_spec(spec, factor, s.reference_phase()),
    )?;
    Ok(from_integral(Method::FieldOverlap, factor, r))
}

/// Magnitude of the omitted `(1 / 2 mu0 hbar) * integral dt integral d3x |dB|^2`
/// over the support of B, in radians.
pub fn overlap_self_term(s: &MagneticScenario, spec: &QuadratureSpec) -> Result<Integral<f64>> {
    spec.validate()?;
    let field = field_with_tol(s, spec)?;
    let tr = &s.trajectory;
    let domain = overlap_domain(&field, tr)?;
    let k = s.constants;
    let factor = 0.5 / (k.mu0 * k.hbar);
    let tol = inner_tol(spec.rel_tol);
    let f = |x: Vec3| -> Result<f64> {
        let r = time_integral(tr, tol, 0.0, |p, v| {
            Ok([crate::fields::delta_b_moving_charge(tr.charge, p, v, x, &k)?.norm_squared()])
        })?;
        Ok(r.value[0])
    };
    let ispec = QuadratureSpec { abs_tol: spec.abs_tol / factor, ..*spec };
    let r = integrate_3d_with(f, &domain, &[], overlap_options(&s.source), &ispec)?;
    Ok(Integral { value: factor * r.value, error: factor * r.error, n_evals: r.n_evals, converged: r.converged })
}

/// Thin-solenoid reduction: `(Phi / mu0 hbar) * integral dz integral dt dB . axis`
/// along the solenoid axis.
pub fn solenoid_axis_reduction_phase(s: &MagneticScenario, spec: &QuadratureSpec) -> Result<PhaseResult> {
    spec.validate()?;
    s.validate()?;
    let CurrentSource::IdealInfiniteSolenoid(sol) = &s.source else {
        return Err(Error::Geometry("axis reduction needs an ideal infinite solenoid".into()));
    };
    let TrajectoryPath::CircularOrbit { center, normal, radius, .. } = &s.trajectory.path else {
        return Err(Error::Geometry("axis reduction needs a circular orbit".into()));
    };
    if (normal.dot(sol.axis_dir).abs() - 1.0).abs() > 1e-9 {
        return Err(Error::Geometry("orbit plane is not perpendicular to the solenoid axis".into()));
    }
    let rel = *center - sol.axis_point;
    let foot = sol.axis_point + sol.axis_dir * rel.dot(sol.axis_dir);
    if foot.distance(*center) + sol.radius >= *radius {
        return Err(Error::Geometry("solenoid is not enclosed by the orbit".into()));
    }
    let k = s.constants;
    let factor = sol.total_flux / (k.mu0 * k.hbar);
    if factor == 0.0 || s.trajectory.charge == 0.0 {
        return Ok(zero(Method::AxisReduction));
    }
    let tr = &s.trajectory;
    let tol = inner_tol(spec.rel_tol);
    let f = |z: f64| -> Result<f64> { Ok(time_integrated_delta_b(tr, foot + sol.axis_dir * z, &k, tol)?.dot(sol.axis_dir)) };
    let r = integrate_1d_scaled(f, f64::NEG_INFINITY, f64::INFINITY, *radius, &scaled_spec(spec, factor, s.reference_phase()))?;
    Ok(from_integral(Method::AxisReduction, factor, r))
}

/// Toroid reduction: one traversal carries charge `q` through the coil's core
/// `linking` times, so the phase is `q * core_flux * linking / hbar`.
pub fn ampere_reduction_phase(s: &MagneticScenario, spec: &QuadratureSpec) -> Result<PhaseResult> {
    spec.validate()?;
    s.validate()?;
    let CurrentSource::ToroidalCoil(c) = &s.source else {
        return Err(Error::Geometry("Ampere reduction needs a toroidal coil".into()));
    };
    let tr = &s.trajectory;
    let period = tr.period();
    let (e1, e2) = c.plane_normal.orthonormal_basis();
    let core = |u: f64| {
        let (sn, cs) = (2.0 * PI * u).sin_cos();
        c.center + (e1 * cs + e2 * sn) * c.major_radius
    };
    let l = linking_number_with(|u| sample_unchecked(tr, u * period).0, core, 256, 1 << 16)?;
    let flux = toroid_core_flux(c, &s.constants);
    let phase = tr.charge * flux * l.number as f64 / s.constants.hbar;
    Ok(PhaseResult::exact(Method::AmpereReduction, phase, 1))
}

/// Seed-grid and tracing controls for [`shell_linking_phase`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShellOptions {
    pub n_radial: usize,
    pub n_angular: usize,
    /// Relative accuracy required for the result to count as converged.
    pub tolerance: f64,
    /// Seeds for a single loop stay inside `radius * (1 - wire_margin)`.
    pub wire_margin: f64,
    pub orbit_points: usize,
    /// `char_size` is replaced by the source size.
    pub trace: TraceOptions,
}

impl Default for ShellOptions {
    fn default() -> Self {
        Self {
            n_radial: 32,
            n_angular: 32,
            tolerance: 0.02,
            wire_margin: 0.05,
            orbit_points: 256,
            trace: TraceOptions { tol: 1e-9, max_step: 2.0, closure_tol: 1e-4, max_arclength: 400.0, ..Default::default() },
        }
    }
}

impl ShellOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_radial == 0 || self.n_angular == 0 {
            return Err(invalid("n_radial", "seed grid must be non-empty"));
        }
        if !(self.tolerance > 0.0) {
            return Err(invalid("tolerance", "must be positive"));
        }
        if !(self.wire_margin > 0.0 && self.wire_margin < 1.0) {
            return Err(invalid("wire_margin", "must lie in (0, 1)"));
        }
        if self.orbit_points < 8 {
            return Err(invalid("orbit_points", "must be at least 8"));
        }
        self.trace.validate()
    }
}

/// Bookkeeping of a shell-linking run. Fluxes are in Wb.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ShellDiagnostics {
    pub seed_disk_radius: f64,
    /// Flux through the seed disk.
    pub seed_flux: f64,
    /// `sum dPhi * linking` over lines that closed.
    pub linked_flux: f64,
    /// Flux carried by lines that did not close; their linking is estimated
    /// by joining the end back to the seed.
    pub unclassified_flux: f64,
    /// Flux of cells whose linking differs from a neighbour's.
    pub boundary_flux: f64,
    pub lines_traced: usize,
    pub cells: usize,
    pub cells_closed: usize,
    pub cells_open: usize,
    pub max_closure_gap: f64,
    pub max_arclength: f64,
    /// Cell count per linking number.
    pub linking_histogram: BTreeMap<i64, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShellOutcome {
    pub result: PhaseResult,
    pub diagnostics: ShellDiagnostics,
}

struct SeedDisk {
    center: Vec3,
    normal: Vec3,
    radius: f64,
    /// Field symmetric under rotation about the disk normal.
    axisymmetric: bool,
}

fn seed_disk(field: &SourceField, opts: &ShellOptions) -> Result<SeedDisk> {
    match field.source() {
        CurrentSource::FiniteSolenoid(f) => {
            let pitch = f.length / f.n_loops as f64;
            // Between the two central windings.
            let offset = if f.n_loops % 2 == 0 { 0.0 } else { 0.5 * pitch };
            let center = f.center + f.axis_dir * offset;
            let (e1, _) = f.axis_dir.orthonormal_basis();
            let bn = |rho: f64| -> Result<f64> { Ok(field.b(center + e1 * rho)?.dot(f.axis_dir)) };
            let step = 0.25 * pitch.min(f.radius);
            let mut lo = (f.radius - pitch).max(0.5 * f.radius);
            if bn(lo)? <= 0.0 {
                return Err(Error::Geometry("axial field is not positive inside the winding".into()));
            }
            let mut hi = lo + step;
            while bn(hi)? > 0.0 {
                lo = hi;
                hi += step;
                if hi > 3.0 * f.radius {
                    return Err(Error::Geometry("no reversal of the axial field near the winding".into()));
                }
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if hi - lo <= 1e-13 * f.radius {
                    break;
                }
                if bn(mid)? > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(SeedDisk { center, normal: f.axis_dir, radius: lo, axisymmetric: true })
        }
        CurrentSource::CurrentLoop(l) => Ok(SeedDisk {
            center: l.center,
            normal: l.normal,
            radius: l.radius * (1.0 - opts.wire_margin),
            axisymmetric: true,
        }),
        CurrentSource::ToroidalCoil(c) => {
            let (e1, _) = c.plane_normal.orthonormal_basis();
            Ok(SeedDisk {
                center: c.center + e1 * c.major_radius,
                normal: c.plane_normal.cross(e1),
                radius: c.minor_radius * (1.0 - 1e-9),
                axisymmetric: false,
            })
        }
        _ => Err(Error::Unsupported("shell linking needs a source with closed field lines".into())),
    }
}

struct Cell {
    flux: f64,
    flux_error: f64,
    /// Index of the traced line this cell uses, and the rotation applied to it.
    line: usize,
    rotation: f64,
}

struct TracedLine {
    points: Vec<Vec3>,
    closed: bool,
    gap: f64,
    arclength: f64,
}

/// `(q / hbar) * sum over cells of dPhi * linking(field line, path)`.
pub fn shell_linking_phase(s: &MagneticScenario, spec: &QuadratureSpec) -> Result<PhaseResult> {
    Ok(shell_linking_with(s, &ShellOptions::default(), spec)?.result)
}

pub fn shell_linking_with(s: &MagneticScenario, opts: &ShellOptions, spec: &QuadratureSpec) -> Result<ShellOutcome> {
    spec.validate()?;
    opts.validate()?;
    let field = field_with_tol(s, spec)?;
    let disk = seed_disk(&field, opts)?;
    let (u1, u2) = disk.normal.orthonormal_basis();
    let (nr, nt) = (opts.n_radial, opts.n_angular);
    let ring = |i: f64| disk.radius * (i / nr as f64).sqrt();
    let angle = |j: usize| 2.0 * PI * (j as f64 + 0.5) / nt as f64;
    let seed = |i: usize, j: usize| {
        let (sn, cs) = angle(j).sin_cos();
        disk.center + (u1 * cs + u2 * sn) * ring(i as f64 + 0.5)
    };
    let bn = |x: Vec3| -> Result<f64> { Ok(field.b(x)?.dot(disk.normal)) };
    let cell_spec = QuadratureSpec { abs_tol: 1e-300, ..*spec }.with_rel_tol(spec.rel_tol.max(1e-10));

    let mut cells = Vec::with_capacity(nr * nt);
    let mut seeds = Vec::new();
    for i in 0..nr {
        if disk.axisymmetric {
            let r = integrate_1d(|rho| Ok(2.0 * PI * rho * bn(disk.center + u1 * rho)?), ring(i as f64), ring(i as f64 + 1.0), &cell_spec)?;
            seeds.push(seed(i, 0));
            for j in 0..nt {
                cells.push(Cell { flux: r.value / nt as f64, flux_error: r.error / nt as f64, line: i, rotation: angle(j) - angle(0) });
            }
        } else {
            for j in 0..nt {
                let lo = [ring(i as f64), angle(j) - PI / nt as f64];
                let hi = [ring(i as f64 + 1.0), angle(j) + PI / nt as f64];
                let r = integrate_box(
                    |p: &[f64; 2]| {
                        let (sn, cs) = p[1].sin_cos();
                        Ok(p[0] * bn(disk.center + (u1 * cs + u2 * sn) * p[0])?)
                    },
                    lo,
                    hi,
                    [1, 1],
                    &cell_spec,
                )?;
                cells.push(Cell { flux: r.value, flux_error: r.error, line: seeds.len(), rotation: 0.0 });
                seeds.push(seed(i, j));
            }
        }
    }

    let trace_opts = TraceOptions { char_size: s.source.characteristic_size(), ..opts.trace };
    let trace_one = |&x: &Vec3| -> Result<TracedLine> {
        let sign = bn(x)?.signum();
        let plane = ClosurePlane { point: x, normal: disk.normal * if sign == 0.0 { 1.0 } else { sign } };
        let line = trace_source_line(&field, x, Some(plane), &trace_opts)?;
        Ok(TracedLine { closed: line.closed, gap: line.closure_gap.unwrap_or(f64::INFINITY), arclength: line.arclength, points: line.points })
    };
    let lines: Vec<TracedLine> = map_maybe_parallel(&seeds, trace_one)?;

    // Successively finer approximations of both curves; a level is trusted
    // once the curves stay further apart than the approximation error.
    let base_tol = 1e-3 * trace_opts.char_size;
    let levels: Vec<(f64, Vec<Vec<Vec3>>, Vec<Vec3>, f64)> = (0..4)
        .map(|k| {
            let tol = if k == 3 { 0.0 } else { base_tol / 8f64.powi(k) };
            let simplified = lines.iter().map(|l| if tol > 0.0 { simplify_polyline(&l.points, tol) } else { l.points.clone() }).collect();
            let n = opts.orbit_points << (2 * k);
            (tol, simplified, s.trajectory.polyline(n), path_deviation(&s.trajectory, n))
        })
        .collect();

    let rotate = |p: Vec3, a: f64| disk.center + (p - disk.center).rotate_about(disk.normal, a);
    let circle = match &s.trajectory.path {
        TrajectoryPath::CircularOrbit { center, normal, radius, windings, .. } => Some((*center, *normal, *radius, *windings as i64)),
        TrajectoryPath::PiecewiseLinearLoop { .. } => None,
    };
    let margin = 1e-6 * trace_opts.char_size;
    let link_of = |c: &Cell| -> Result<Option<i64>> {
        if let Some((center, normal, radius, windings)) = circle {
            // Rotate the circle instead of the line.
            let center = rotate(center, -c.rotation);
            let normal = normal.rotate_about(disk.normal, -c.rotation);
            if let Some(n) = circle_linking_number(&lines[c.line].points, center, normal, radius, margin) {
                return Ok(Some(n * windings));
            }
        }
        for (tol, simplified, orbit, dev) in &levels {
            let line: Vec<Vec3> = simplified[c.line].iter().map(|p| rotate(*p, c.rotation)).collect();
            match linking_number(&line, orbit) {
                Ok(l) if l.min_distance > 2.0 * (tol + dev) => return Ok(Some(l.number)),
                Ok(_) | Err(Error::Linking { .. }) | Err(Error::Geometry(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(None)
    };
    let links: Vec<Option<i64>> = map_maybe_parallel(&cells, link_of)?;

    let mut d = ShellDiagnostics { seed_disk_radius: disk.radius, lines_traced: lines.len(), cells: cells.len(), ..Default::default() };
    let mut flux_error = 0.0;
    let mut total = 0.0;
    for (idx, (c, link)) in cells.iter().zip(&links).enumerate() {
        let l = &lines[c.line];
        d.seed_flux += c.flux;
        flux_error += c.flux_error;
        d.max_arclength = d.max_arclength.max(l.arclength);
        // The line is oriented along B, so it carries |dPhi| in its own direction.
        let carried = c.flux.abs();
        match link {
            Some(n) if l.closed => {
                d.cells_closed += 1;
                d.max_closure_gap = d.max_closure_gap.max(l.gap);
                d.linked_flux += carried * *n as f64;
                total += carried * *n as f64;
                *d.linking_histogram.entry(*n).or_default() += 1;
                let (i, j) = (idx / nt, idx % nt);
                let neighbours = [
                    (i > 0).then(|| idx - nt),
                    (i + 1 < nr).then(|| idx + nt),
                    Some(i * nt + (j + 1) % nt),
                    Some(i * nt + (j + nt - 1) % nt),
                ];
                if neighbours.iter().flatten().any(|&k| links[k] != Some(*n)) {
                    d.boundary_flux += carried;
                }
            }
            Some(n) => {
                d.cells_open += 1;
                d.unclassified_flux += carried;
                total += carried * *n as f64;
            }
            None => {
                d.cells_open += 1;
                d.unclassified_flux += carried;
            }
        }
    }

    let factor = s.trajectory.charge / s.constants.hbar;
    let phase = factor * total;
    let error = factor.abs() * (flux_error + 0.5 * d.boundary_flux + d.unclassified_flux);
    let scale = phase.abs().max(s.reference_phase().map_or(0.0, f64::abs));
    let converged = d.cells_open == 0 && error <= opts.tolerance * scale;
    let n_evaluations = lines.len() as u64;
    Ok(ShellOutcome {
        result: PhaseResult { phase, abs_error_estimate: error, method: Method::ShellLinking, n_evaluations, converged },
        diagnostics: d,
    })
}

/// Largest distance between the path and its `polyline(n)`.
fn path_deviation(tr: &ChargeTrajectory, n: usize) -> f64 {
    match &tr.path {
        TrajectoryPath::CircularOrbit { radius, .. } => radius * (1.0 - (PI / n.max(8) as f64).cos()),
        TrajectoryPath::PiecewiseLinearLoop { .. } => 0.0,
    }
}

#[cfg(feature = "parallel")]
fn map_maybe_parallel<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> Result<U> + Sync + Send) -> Result<Vec<U>> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_maybe_parallel<T, U>(items: &[T], f: impl Fn(&T) -> Result<U>) -> Result<Vec<U>> {
    items.iter().map(f).collect()
}

/// `-q * A0(r_q) * T / hbar` from the Coulomb potential of the external charges.
pub fn electric_potential_phase(s: &ElectricScenario) -> Result<PhaseResult> {
    s.config.validate()?;
    let n = s.config.external_charges.len() as u64;
    Ok(PhaseResult::exact(Method::ElectricPotential, s.closed_form_phase(), n))
}

/// Centre, truncation radius, and exclusion balls for an all-space
/// integral around point charges. Without an explicit radius the ball is
/// made large enough for the tail bound of `monopole_tail` (with
/// `k q1 q2 = tail_scale`) to stay below a tenth of `target`.
fn charge_ball(positions: &[Vec3], spec: &QuadratureSpec, tail_scale: f64, target: f64) -> Result<(Vec3, f64, Vec<SingularPoint>)> {
    let center = positions.iter().copied().sum::<Vec3>() / positions.len() as f64;
    let mut min_sep = f64::INFINITY;
    let mut max_sep: f64 = 0.0;
    for (i, a) in positions.iter().enumerate() {
        for b in &positions[..i] {
            min_sep = min_sep.min(a.distance(*b));
            max_sep = max_sep.max(a.distance(*b));
        }
    }
    if !(min_sep > 0.0) {
        return Err(invalid("charges", "coincident charges"));
    }
    let eps = spec.exclusion_radius.unwrap_or(0.25 * min_sep);
    let extent = positions.iter().map(|p| p.distance(center)).fold(0.0, f64::max);
    let radius = spec.truncation_radius.unwrap_or_else(|| {
        let needed = if target > 0.0 { (40.0 * tail_scale.abs() * extent * extent / target).cbrt() } else { 0.0 };
        needed.max(50.0 * max_sep)
    });
    if radius <= 2.0 * (extent + eps) {
        return Err(invalid("truncation_radius", "must enclose the charges with room to spare"));
    }
    let balls = positions.iter().map(|p| SingularPoint { position: *p, radius: eps }).collect();
    Ok((center, radius, balls))
}

/// Cubature spec for an all-space integral whose magnitude is about `scale`:
/// an absolute target of `0.8 * rel_tol * |scale|` leaves room for the tail bound.
fn budget_spec(spec: &QuadratureSpec, scale: f64) -> QuadratureSpec {
    if scale == 0.0 || !scale.is_finite() {
        return *spec;
    }
    QuadratureSpec { rel_tol: 1e-3 * spec.rel_tol, abs_tol: spec.abs_tol.max(0.8 * spec.rel_tol * scale.abs()), ..*spec }
}

/// Monopole tail `eps0 * integral_{|x| > R} E1 . E2` for total charges
/// `q1`, `q2`, with an error bound from the dipole-dipole remainder.
fn monopole_tail(q1: f64, q2: f64, radius: f64, extent: f64, k: &PhysicalConstants) -> (f64, f64) {
    let tail = k.coulomb_k() * q1 * q2 / radius;
    (tail, tail.abs() * 4.0 * (extent / radius).powi(2))
}

/// `-(T / hbar) * eps0 * integral d3x E_Q . dE`, with `dE` the field of the test charge.
pub fn electric_field_overlap_phase(s: &ElectricScenario, spec: &QuadratureSpec) -> Result<PhaseResult> {
    spec.validate()?;
    let c = &s.config;
    c.validate()?;
    let k = s.constants;
    let q = c.test_charge.charge;
    let big_q: f64 = c.external_charges.iter().map(|e| e.charge).sum();
    if c.external_charges.is_empty() || q == 0.0 {
        return Ok(zero(Method::ElectricFieldOverlap));
    }
    let factor = -c.dwell_time / k.hbar;
    let positions: Vec<Vec3> = c.external_charges.iter().map(|e| e.position).chain([c.test_charge.position]).collect();
    let reference = s.closed_form_phase();
    let target = spec.rel_tol * (reference / factor).abs();
    let (center, radius, balls) = charge_ball(&positions, spec, k.coulomb_k() * q * big_q, target)?;
    let extent = positions.iter().map(|p| p.distance(center)).fold(0.0, f64::max);
    let f = |x: Vec3| -> Result<f64> {
        let mut e = Vec3::ZERO;
        for ch in &c.external_charges {
            e += coulomb(ch.charge, ch.position, x, &k)?;
        }
        Ok(k.eps0 * e.dot(coulomb(q, c.test_charge.position, x, &k)?))
    };
    let ispec = budget_spec(spec, reference / factor);
    let r = integrate_3d(f, &Domain3::Ball { center, radius }, &balls, &ispec)?;
    let (tail, tail_error) = monopole_tail(big_q, q, radius, extent, &k);
    let value = r.value + tail;
    let error = r.error + tail_error;
    let converged = r.converged && (factor * error).abs() <= spec.abs_tol.max(spec.rel_tol * (factor * value).abs());
    let energy = Integral { value, error, n_evals: r.n_evals, converged };
    Ok(from_integral(Method::ElectricFieldOverlap, factor, energy))
}

/// Interaction energy of two point charges as a field integral, in two forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossEnergy {
    /// `eps0 * integral E1 . E2`.
    pub product: Integral<f64>,
    /// `(eps0 / 2) * integral (|E|^2 - |E1|^2 - |E2|^2)` with the self terms
    /// subtracted point by point.
    pub difference: Integral<f64>,
    /// `q1 q2 / (4 pi eps0 d)`.
    pub analytic: f64,
    /// Far-field contribution beyond the truncation radius, included in both forms.
    pub tail: f64,
}

pub fn coulomb_cross_energy(
    q1: f64,
    x1: Vec3,
    q2: f64,
    x2: Vec3,
    k: &PhysicalConstants,
    spec: &QuadratureSpec,
) -> Result<CrossEnergy> {
    spec.validate()?;
    for (v, name) in [(q1, "q1"), (q2, "q2")] {
        if !v.is_finite() {
            return Err(invalid(name, "must be finite"));
        }
    }
    if !(x1.is_finite() && x2.is_finite()) {
        return Err(invalid("position", "must be finite"));
    }
    let analytic = k.coulomb_k() * q1 * q2 / x1.distance(x2);
    let (center, radius, balls) = charge_ball(&[x1, x2], spec, analytic * x1.distance(x2), spec.rel_tol * analytic.abs())?;
    let extent = 0.5 * x1.distance(x2);
    let f = |x: Vec3| -> Result<[f64; 2]> {
        let e1 = coulomb(q1, x1, x, k)?;
        let e2 = coulomb(q2, x2, x, k)?;
        let e = e1 + e2;
        Ok([k.eps0 * e1.dot(e2), 0.5 * k.eps0 * (e.dot(e) - e1.dot(e1) - e2.dot(e2))])
    };
    let ispec = budget_spec(spec, analytic);
    let r = integrate_3d_with(f, &Domain3::Ball { center, radius }, &balls, VolumeOptions { mode: SingularMode::Blend, splits: None }, &ispec)?;
    let (tail, tail_error) = monopole_tail(q1, q2, radius, extent, k);
    let part = |i: usize| {
        let value = r.value[i] + tail;
        let error = r.error + tail_error;
        Integral { value, error, n_evals: r.n_evals, converged: r.converged && error <= spec.abs_tol.max(spec.rel_tol * value.abs()) }
    };
    Ok(CrossEnergy { product: part(0), difference: part(1), analytic, tail })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sources::{CurrentLoop, FiniteSolenoid, IdealSolenoid, ToroidalCoil};
    use approx::assert_relative_eq;

    const K: PhysicalConstants = PhysicalConstants::natural();

    fn ideal(flux: f64) -> CurrentSource {
        CurrentSource::IdealInfiniteSolenoid(IdealSolenoid { axis_point: Vec3::ZERO, axis_dir: Vec3::Z, radius: 0.1, total_flux: flux })
    }

    fn coaxial(q: f64, r: f64) -> ChargeTrajectory {
        ChargeTrajectory::circle(q, Vec3::ZERO, Vec3::Z, r, 3.0)
    }

    fn toroid() -> CurrentSource {
        CurrentSource::ToroidalCoil(ToroidalCoil {
            center: Vec3::ZERO,
            plane_normal: Vec3::Z,
            major_radius: 2.0,
            minor_radius: 0.5,
            n_turns: 100,
            current: 0.01,
        })
    }

    fn threading() -> ChargeTrajectory {
        ChargeTrajectory::circle(1.0, Vec3::new(2.0, 0.0, 0.0), Vec3::Y, 1.0, 1.0)
    }

    #[test]
    fn wilson_loop_examples() {
        let spec = QuadratureSpec::default();
        let s = MagneticScenario::new(ideal(0.7), coaxial(2.0, 0.2), K);
        let r = wilson_loop_phase(&s, &spec).unwrap();
        assert_relative_eq!(r.phase, 1.4, max_relative = 1e-12);
        assert!(r.converged);
        let away = MagneticScenario::new(ideal(0.7), ChargeTrajectory::circle(1.0, Vec3::new(1.0, 0.0, 0.0), Vec3::Z, 0.3, 1.0), K);
        assert!(wilson_loop_phase(&away, &spec).unwrap().phase.abs() < 1e-12);
        let mut twice = coaxial(2.0, 0.2);
        if let TrajectoryPath::CircularOrbit { windings, .. } = &mut twice.path {
            *windings = 2;
        }
        let r2 = wilson_loop_phase(&MagneticScenario::new(ideal(0.7), twice, K), &spec).unwrap();
        assert_relative_eq!(r2.phase, 2.8, max_relative = 1e-12);
    }

    #[test]
    fn gauge_shift_leaves_wilson_loop_unchanged() {
        let spec = QuadratureSpec::default();
        let s = MagneticScenario::new(ideal(0.7), coaxial(1.0, 0.3), K);
        let plain = wilson_loop_phase(&s, &spec).unwrap().phase;
        for i in 0..GaugeFunction::BUILTIN_COUNT {
            let g = GaugeFunction::builtin(i, Vec3::new(0.1, 0.0, 0.0), 0.3, 5.0);
            let shifted = wilson_loop_phase_gauged(&s, &g, &spec).unwrap().phase;
            assert!((shifted - plain).abs() < 1e-8 * plain.abs(), "gauge {i}: {shifted} vs {plain}");
        }
    }

    #[test]
    fn flux_phase_zero_current() {
        let s = MagneticScenario::new(ideal(0.0), coaxial(1.0, 0.3), K);
        assert_eq!(flux_phase(&s, &QuadratureSpec::default()).unwrap().phase, 0.0);
    }

    #[test]
    fn axis_reduction_is_exact() {
        let spec = QuadratureSpec::default().with_rel_tol(1e-12);
        for (r, t) in [(0.5, 1.0), (3.0, 0.01), (1.0, 100.0)] {
            let s = MagneticScenario::new(ideal(0.3), ChargeTrajectory::circle(2.0, Vec3::new(0.0, 0.0, 1.0), Vec3::Z, r, t), K);
            let p = solenoid_axis_reduction_phase(&s, &spec).unwrap();
            assert_relative_eq!(p.phase, 0.6, max_relative = 1e-10);
        }
        let off = MagneticScenario::new(ideal(0.3), ChargeTrajectory::circle(1.0, Vec3::new(2.0, 0.0, 0.0), Vec3::Z, 1.0, 1.0), K);
        assert!(matches!(solenoid_axis_reduction_phase(&off, &spec), Err(Error::Geometry(_))));
        let zero = MagneticScenario::new(ideal(0.0), coaxial(1.0, 1.0), K);
        assert_eq!(solenoid_axis_reduction_phase(&zero, &spec).unwrap().phase, 0.0);
    }

    #[test]
    fn overlap_ideal_solenoid() {
        let s = MagneticScenario::new(ideal(0.7), coaxial(1.0, 0.5), K);
        let r = field_overlap_phase(&s, &QuadratureSpec::default().with_rel_tol(1e-6)).unwrap();
        assert_relative_eq!(r.phase, 0.7, max_relative = 1e-5);
        let inside = MagneticScenario::new(ideal(0.7), ChargeTrajectory::circle(1.0, Vec3::new(0.05, 0.0, 0.0), Vec3::Z, 0.01, 1.0), K);
        assert_eq!(field_overlap_phase(&inside, &QuadratureSpec::default()), Err(Error::TrajectoryInSupport));
    }

    #[test]
    fn ampere_reduction_counts_threadings() {
        let spec = QuadratureSpec::default();
        let s = MagneticScenario::new(toroid(), threading(), K);
        let flux = reference_flux(&s.source, &K).unwrap();
        assert_eq!(ampere_reduction_phase(&s, &spec).unwrap().phase, flux);
        let rev = MagneticScenario::new(toroid(), threading().reversed(), K);
        assert_eq!(ampere_reduction_phase(&rev, &spec).unwrap().phase, -flux);
        let apart = MagneticScenario::new(toroid(), ChargeTrajectory::circle(1.0, Vec3::new(4.5, 0.0, 0.0), Vec3::Y, 1.0, 1.0), K);
        assert_eq!(ampere_reduction_phase(&apart, &spec).unwrap().phase, 0.0);
    }

    #[test]
    fn toroid_wilson_and_flux_agree() {
        let spec = QuadratureSpec::default().with_rel_tol(1e-7);
        let s = MagneticScenario::new(toroid(), threading(), K);
        let flux = reference_flux(&s.source, &K).unwrap();
        let w = wilson_loop_phase(&s, &spec).unwrap();
        assert_relative_eq!(w.phase, flux, max_relative = 1e-6);
        assert_eq!(flux_phase(&s, &spec).unwrap().phase, flux);
    }

    #[test]
    fn shell_linking_toroid() {
        let s = MagneticScenario::new(toroid(), threading(), K);
        let opts = ShellOptions { n_radial: 8, n_angular: 8, ..Default::default() };
        let out = shell_linking_with(&s, &opts, &QuadratureSpec::default().with_rel_tol(1e-8)).unwrap();
        let flux = reference_flux(&s.source, &K).unwrap();
        assert_relative_eq!(out.result.phase, flux, max_relative = 1e-6);
        assert_eq!(out.diagnostics.cells_closed, 64);
        assert_eq!(out.diagnostics.linking_histogram.get(&1), Some(&64));
    }

    #[test]
    fn shell_linking_current_loop_matches_flux() {
        let src = CurrentSource::CurrentLoop(CurrentLoop { center: Vec3::ZERO, normal: Vec3::Z, radius: 1.0, current: 1.0 });
        let s = MagneticScenario::new(src, ChargeTrajectory::circle(1.0, Vec3::new(0.0, 0.0, 0.5), Vec3::Z, 1.5, 1.0), K);
        let spec = QuadratureSpec::default();
        let opts = ShellOptions { n_radial: 16, n_angular: 4, ..Default::default() };
        let out = shell_linking_with(&s, &opts, &spec).unwrap();
        let flux = flux_phase(&s, &spec).unwrap().phase;
        assert_eq!(out.diagnostics.cells_open, 0);
        assert!((out.result.phase - flux).abs() <= out.result.abs_error_estimate);
    }

    #[test]
    fn unsupported_sources() {
        let s = MagneticScenario::new(ideal(1.0), coaxial(1.0, 1.0), K);
        assert!(matches!(shell_linking_phase(&s, &QuadratureSpec::default()), Err(Error::Unsupported(_))));
        let fs = CurrentSource::FiniteSolenoid(FiniteSolenoid { center: Vec3::ZERO, axis_dir: Vec3::Z, radius: 1.0, length: 4.0, n_loops: 8, current: 1.0 });
        let s = MagneticScenario::new(fs, coaxial(1.0, 2.0), K);
        assert!(matches!(ampere_reduction_phase(&s, &QuadratureSpec::default()), Err(Error::Geometry(_))));
    }

    #[test]
    fn electric_potential_examples() {
        let s = ElectricScenario::new(StaticChargeConfig::symmetric_pair(1.0, 1.0, 1.0, 1.0), K);
        let p = electric_potential_phase(&s).unwrap();
        assert_relative_eq!(p.phase, -2.0 / (4.0 * PI), max_relative = 1e-15);
        let none = ElectricScenario::new(StaticChargeConfig::symmetric_pair(1.0, 0.0, 1.0, 1.0), K);
        assert_eq!(electric_potential_phase(&none).unwrap().phase, 0.0);
        let longer = ElectricScenario::new(StaticChargeConfig::symmetric_pair(1.0, 1.0, 1.0, 2.0), K);
        assert_relative_eq!(electric_potential_phase(&longer).unwrap().phase, 2.0 * p.phase, max_relative = 1e-15);
    }

    #[test]
    fn electric_overlap_matches_potential() {
        let s = ElectricScenario::new(StaticChargeConfig::symmetric_pair(1.0, 1.0, 1.0, 1.0), K);
        let r = electric_field_overlap_phase(&s, &QuadratureSpec::default().with_rel_tol(1e-6)).unwrap();
        assert_relative_eq!(r.phase, s.closed_form_phase(), max_relative = 1e-3);
    }

    #[test]
    fn cross_energy_forms_agree() {
        let spec = QuadratureSpec::default().with_rel_tol(1e-6);
        let e = coulomb_cross_energy(1.0, Vec3::ZERO, -2.0, Vec3::new(0.0, 1.0, 0.0), &K, &spec).unwrap();
        assert_relative_eq!(e.analytic, -2.0 / (4.0 * PI), max_relative = 1e-15);
        assert_relative_eq!(e.product.value, e.analytic, max_relative = 1e-3);
        assert!((e.product.value - e.difference.value).abs() <= 1e-10 * e.analytic.abs());
        let none = coulomb_cross_energy(1.0, Vec3::ZERO, 0.0, Vec3::X, &K, &spec).unwrap();
        assert_eq!(none.product.value, 0.0);
    }
}
