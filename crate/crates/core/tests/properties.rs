use abphase::fields::{GaugeFunction, SourceField};
use abphase::phases::*;
use abphase::sources::*;
use abphase::{PhysicalConstants, QuadratureSpec, Vec3};
use proptest::prelude::*;

const K: PhysicalConstants = PhysicalConstants::natural();

fn ideal(flux: f64) -> CurrentSource {
    CurrentSource::IdealInfiniteSolenoid(IdealSolenoid { axis_point: Vec3::ZERO, axis_dir: Vec3::Z, radius: 0.1, total_flux: flux })
}

fn vec3(lo: f64, hi: f64) -> impl Strategy<Value = Vec3> {
    (lo..hi, lo..hi, lo..hi).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

/// Convex quadrilateral around the z axis, staying clear of the solenoid.
fn quad() -> impl Strategy<Value = ChargeTrajectory> {
    (prop::array::uniform4(0.4..2.0f64), prop::array::uniform4(-0.3..0.3f64), prop::array::uniform4(0.1..1.0f64)).prop_map(
        |(r, z, d)| {
            let vertices = (0..4)
                .map(|i| {
                    let th = std::f64::consts::FRAC_PI_2 * i as f64;
                    Vec3::new(r[i] * th.cos(), r[i] * th.sin(), z[i])
                })
                .collect();
            ChargeTrajectory { charge: 1.0, path: TrajectoryPath::PiecewiseLinearLoop { vertices, durations: d.to_vec() } }
        },
    )
}

fn circle() -> impl Strategy<Value = ChargeTrajectory> {
    (-1.5..1.5f64, -1.5..1.5f64, 0.3..2.0f64, 0.1..10.0f64).prop_map(|(x, y, r, t)| {
        ChargeTrajectory::circle(1.0, Vec3::new(x, y, 0.0), Vec3::Z, r, t)
    })
}

/// Keeps orbits out of the solenoid.
fn clear_of_core(tr: &ChargeTrajectory) -> bool {
    match &tr.path {
        TrajectoryPath::CircularOrbit { center, radius, .. } => {
            let d = center.norm();
            (d - radius).abs() > 0.15
        }
        TrajectoryPath::PiecewiseLinearLoop { .. } => true,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gauge_function_does_not_change_wilson(tr in quad(), idx in 0usize..5, amp in -5.0..5.0f64, origin in vec3(-1.0, 1.0)) {
        let rel = 1e-8;
        let spec = QuadratureSpec::default().with_rel_tol(rel);
        let s = MagneticScenario::new(ideal(1.0), tr, K);
        let plain = wilson_loop_phase(&s, &spec).unwrap().phase;
        let g = GaugeFunction::builtin(idx, origin, 0.8, amp);
        let shifted = wilson_loop_phase_gauged(&s, &g, &spec).unwrap().phase;
        prop_assert!((shifted - plain).abs() <= 10.0 * rel * plain.abs().max(1.0), "{shifted} vs {plain}");
    }

    #[test]
    fn reversing_the_path_flips_every_phase(tr in circle()) {
        prop_assume!(clear_of_core(&tr));
        let spec = QuadratureSpec::default().with_rel_tol(1e-7);
        let fwd = MagneticScenario::new(ideal(1.0), tr.clone(), K);
        let rev = MagneticScenario::new(ideal(1.0), tr.reversed(), K);
        let w = wilson_loop_phase(&fwd, &spec).unwrap().phase + wilson_loop_phase(&rev, &spec).unwrap().phase;
        let f = flux_phase(&fwd, &spec).unwrap().phase + flux_phase(&rev, &spec).unwrap().phase;
        prop_assert!(w.abs() < 1e-9 && f.abs() < 1e-12, "{w} {f}");
    }

    #[test]
    fn phase_counts_windings(n in -3i32..=3, r in 0.3..2.0f64, c in -0.15..0.15f64) {
        let tr = ChargeTrajectory {
            charge: 1.0,
            path: TrajectoryPath::CircularOrbit { center: Vec3::new(c, 0.0, 0.0), normal: Vec3::Z, radius: r, period: 1.0, windings: n },
        };
        prop_assume!(r - c.abs() > 0.15);
        let spec = QuadratureSpec::default().with_rel_tol(1e-8);
        let s = MagneticScenario::new(ideal(1.0), tr, K);
        let w = wilson_loop_phase(&s, &spec).unwrap().phase;
        let f = flux_phase(&s, &spec).unwrap().phase;
        prop_assert!((w - n as f64).abs() < 1e-6 && (f - n as f64).abs() < 1e-12, "n={n}: {w} {f}");
    }

    #[test]
    fn overlap_ignores_the_time_scale(tr in circle(), k in 0.1..100.0f64) {
        prop_assume!(clear_of_core(&tr));
        let spec = QuadratureSpec::default().with_rel_tol(1e-6);
        let a = field_overlap_phase(&MagneticScenario::new(ideal(1.0), tr.clone(), K), &spec).unwrap();
        let b = field_overlap_phase(&MagneticScenario::new(ideal(1.0), tr.time_scaled(k), K), &spec).unwrap();
        prop_assert!((a.phase - b.phase).abs() <= 1e-6 * a.phase.abs().max(1e-3), "{} {}", a.phase, b.phase);
    }

    #[test]
    fn phases_are_linear_in_charge_and_flux(q in -3.0..3.0f64, phi in -3.0..3.0f64, tr in quad()) {
        prop_assume!(q.abs() > 1e-2 && phi.abs() > 1e-2);
        let spec = QuadratureSpec::default().with_rel_tol(1e-8);
        let unit = MagneticScenario::new(ideal(1.0), tr.clone(), K);
        let scaled = MagneticScenario::new(ideal(phi), ChargeTrajectory { charge: q, ..tr }, K);
        for (a, b) in [
            (wilson_loop_phase(&unit, &spec).unwrap().phase, wilson_loop_phase(&scaled, &spec).unwrap().phase),
            (flux_phase(&unit, &spec).unwrap().phase, flux_phase(&scaled, &spec).unwrap().phase),
        ] {
            prop_assert!((b - q * phi * a).abs() <= 1e-7 * (q * phi * a).abs(), "{b} vs {}", q * phi * a);
        }
    }

    #[test]
    fn loop_field_is_divergence_free(x in vec3(-2.0, 2.0), n in vec3(-1.0, 1.0), radius in 0.3..1.5f64) {
        let normal = match n.try_normalize() {
            Some(v) => v,
            None => return Ok(()),
        };
        let src = CurrentSource::CurrentLoop(CurrentLoop { center: Vec3::ZERO, normal, radius, current: 1.0 });
        let f = SourceField::new(&src, K).unwrap();
        // Distance from x to the wire circle.
        let h_axis = x.dot(normal);
        let rho = (x - normal * h_axis).norm();
        prop_assume!(((rho - radius).powi(2) + h_axis * h_axis).sqrt() > 0.1);
        let h = 1e-4;
        let d = |e: Vec3| (f.b(x + e * h).unwrap() - f.b(x - e * h).unwrap()).dot(e) / (2.0 * h);
        let div = d(Vec3::X) + d(Vec3::Y) + d(Vec3::Z);
        prop_assert!(div.abs() <= 1e-5 * f.b(x).unwrap().norm(), "div {div}");
    }

    #[test]
    fn electric_phase_scales_with_charges(q in 0.2..3.0f64, big_q in 0.2..3.0f64, r in 0.5..4.0f64) {
        let spec = QuadratureSpec::default().with_rel_tol(1e-4);
        let s = ElectricScenario::new(StaticChargeConfig::symmetric_pair(q, big_q, r, 1.0), K);
        let unit = ElectricScenario::new(StaticChargeConfig::symmetric_pair(1.0, 1.0, r, 1.0), K);
        let a = electric_field_overlap_phase(&s, &spec).unwrap().phase;
        let b = electric_field_overlap_phase(&unit, &spec).unwrap().phase;
        prop_assert!((a - q * big_q * b).abs() <= 2e-4 * a.abs(), "{a} vs {}", q * big_q * b);
    }
}
