//! Browser bindings for three small interactive views of the abphase library.

use abphase::fields::{trace_source_line, SourceField};
use abphase::phases::{
    electric_field_overlap_phase, electric_potential_phase, field_overlap_phase, flux_phase, wilson_loop_phase,
    ElectricScenario, MagneticScenario,
};
use abphase::quadrature::{ClosurePlane, TraceOptions};
use abphase::sources::{ChargeTrajectory, CurrentSource, FiniteSolenoid, IdealSolenoid, StaticChargeConfig};
use abphase::{PhysicalConstants, QuadratureSpec, Vec3};
use wasm_bindgen::prelude::*;

const K: PhysicalConstants = PhysicalConstants::natural();

fn js_err(e: abphase::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Phases in units of the enclosed flux for a unit charge circling an ideal
/// solenoid of unit flux: `[wilson, flux, overlap]`. The overlap entry is NaN
/// when the orbit cuts through the solenoid.
#[wasm_bindgen]
pub fn magnetic_phases(solenoid_radius: f64, orbit_radius: f64, offset: f64, rel_tol: f64) -> Result<Vec<f64>, JsValue> {
    let source = CurrentSource::IdealInfiniteSolenoid(IdealSolenoid {
        axis_point: Vec3::ZERO,
        axis_dir: Vec3::Z,
        radius: solenoid_radius,
        total_flux: 1.0,
    });
    let orbit = ChargeTrajectory::circle(1.0, Vec3::new(offset, 0.0, 0.0), Vec3::Z, orbit_radius, 1.0);
    let s = MagneticScenario::new(source, orbit, K);
    s.validate().map_err(js_err)?;
    let spec = QuadratureSpec::default().with_rel_tol(rel_tol);
    let w = wilson_loop_phase(&s, &spec).map_err(js_err)?.phase;
    let f = flux_phase(&s, &spec).map_err(js_err)?.phase;
    let o = field_overlap_phase(&s, &spec).map_or(f64::NAN, |r| r.phase);
    Ok(vec![w, f, o])
}

/// Field lines of a finite solenoid of unit radius in the `y = 0` half plane
/// `x > 0`, seeded along the midplane. Returns `[n, x0, z0, x1, z1, ...]`
/// per line, concatenated.
#[wasm_bindgen]
pub fn solenoid_field_lines(length: f64, n_loops: usize, n_lines: usize) -> Result<Vec<f64>, JsValue> {
    let source = CurrentSource::FiniteSolenoid(FiniteSolenoid {
        center: Vec3::ZERO,
        axis_dir: Vec3::Z,
        radius: 1.0,
        length,
        n_loops,
        current: 1.0,
    });
    let field = SourceField::new(&source, K).map_err(js_err)?;
    let opts = TraceOptions {
        char_size: length.max(1.0),
        tol: 1e-7,
        closure_tol: 1e-3,
        max_step: 0.05,
        max_arclength: 8.0,
        ..Default::default()
    };
    // Between the two central windings.
    let z0 = if n_loops.is_multiple_of(2) { 0.0 } else { 0.5 * length / n_loops as f64 };
    let mut out = Vec::new();
    for i in 0..n_lines {
        let seed = Vec3::new(0.9 * (i as f64 + 0.5) / n_lines as f64, 0.0, z0);
        let plane = ClosurePlane { point: seed, normal: Vec3::Z };
        let line = trace_source_line(&field, seed, Some(plane), &opts).map_err(js_err)?;
        out.push(line.points.len() as f64);
        for p in &line.points {
            out.push(p.x);
            out.push(p.z);
        }
    }
    Ok(out)
}

/// Electric phase for a unit test charge midway between unit charges at
/// `x = ±r`, held for unit time: `[closed form, field overlap, error estimate]`.
#[wasm_bindgen]
pub fn electric_phases(r: f64, rel_tol: f64) -> Result<Vec<f64>, JsValue> {
    let s = ElectricScenario::new(StaticChargeConfig::symmetric_pair(1.0, 1.0, r, 1.0), K);
    let spec = QuadratureSpec::default().with_rel_tol(rel_tol);
    let p = electric_potential_phase(&s).map_err(js_err)?;
    let o = electric_field_overlap_phase(&s, &spec).map_err(js_err)?;
    Ok(vec![p.phase, o.phase, o.abs_error_estimate])
}
