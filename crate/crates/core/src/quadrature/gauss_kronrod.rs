//! Globally adaptive 7/15-point Gauss-Kronrod quadrature (QUADPACK QAG scheme).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{pairwise_sum, Integral, QuadratureSpec, Value};
use crate::error::{invalid, Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

struct Segment<V> {
    a: f64,
    b: f64,
    value: V,
    error: f64,
}

impl<V> PartialEq for Segment<V> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<V> Eq for Segment<V> {}
impl<V> PartialOrd for Segment<V> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<V> Ord for Segment<V> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error).then_with(|| other.a.total_cmp(&self.a))
    }
}

fn gk15<V: Value>(f: &impl Fn(f64) -> Result<V>, a: f64, b: f64) -> Result<Segment<V>> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let eval = |x: f64| -> Result<V> {
        let v = f(x)?;
        if v.all_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { location: vec![x] })
        }
    };
    let fc = eval(center)?;
    let mut kronrod = fc.scale(WGK[7]);
    let mut gauss = fc.scale(WG[3]);
    let mut resabs = fc.abs().scale(WGK[7]);
    let mut samples = [(V::zero(), V::zero()); 7];
    for (j, sample) in samples.iter_mut().enumerate() {
        let dx = half * XGK[j];
        let f1 = eval(center - dx)?;
        let f2 = eval(center + dx)?;
        let pair = f1.add(f2);
        kronrod = kronrod.add(pair.scale(WGK[j]));
        resabs = resabs.add(f1.abs().add(f2.abs()).scale(WGK[j]));
        if j % 2 == 1 {
            gauss = gauss.add(pair.scale(WG[j / 2]));
        }
        *sample = (f1, f2);
    }
    let mean = kronrod.scale(0.5);
    let mut resasc = fc.sub(mean).abs().scale(WGK[7]);
    for (j, (f1, f2)) in samples.iter().enumerate() {
        resasc = resasc.add(f1.sub(mean).abs().add(f2.sub(mean).abs()).scale(WGK[j]));
    }
    let h = half.abs();
    let value = kronrod.scale(half);
    let diff = kronrod.sub(gauss).abs().scale(h);
    let resasc = resasc.scale(h);
    let resabs = resabs.scale(h);
    // QUADPACK error scaling, applied component-wise.
    let err = diff.zip(resasc, |d, asc| {
        if asc != 0.0 && d != 0.0 {
            asc * (200.0 * d / asc).powf(1.5).min(1.0)
        } else {
            d
        }
    });
    let err = err.zip(resabs, |e, abs| e.max(50.0 * f64::EPSILON * abs));
    Ok(Segment { a, b, value, error: err.max_abs() })
}

/// Adaptive integral of `f` over consecutive intervals `points[i]..points[i+1]`.
///
/// Interior points mark known kinks or near-singularities; the integrand is
/// never evaluated exactly at any of them.
pub fn integrate_1d_points<V: Value>(
    f: impl Fn(f64) -> Result<V>,
    points: &[f64],
    spec: &QuadratureSpec,
) -> Result<Integral<V>> {
    spec.validate()?;
    if points.len() < 2 {
        return Err(invalid("points", "need at least two"));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(invalid("points", "must be finite; use integrate_1d for infinite limits"));
    }
    let mut heap = BinaryHeap::new();
    let mut n_evals = 0u64;
    for w in points.windows(2) {
        if w[0] == w[1] {
            continue;
        }
        heap.push(gk15(&f, w[0], w[1])?);
        n_evals += 15;
    }
    let mut finished: Vec<Segment<V>> = Vec::new();
    let mut subdivisions = 0usize;
    let (mut total, mut total_err) = totals(heap.iter());
    let converged = loop {
        if total_err <= spec.target(total.max_abs()) {
            break true;
        }
        if subdivisions >= spec.max_subdivisions {
            break false;
        }
        let Some(worst) = heap.pop() else { break false };
        let mid = 0.5 * (worst.a + worst.b);
        // Stop refining intervals that can no longer be split in floating point.
        if !(worst.a < mid && mid < worst.b) || (worst.b - worst.a) <= 1e3 * f64::EPSILON * mid.abs().max(1e-300) {
            finished.push(worst);
            continue;
        }
        let left = gk15(&f, worst.a, mid)?;
        let right = gk15(&f, mid, worst.b)?;
        total = total.sub(worst.value).add(left.value).add(right.value);
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        n_evals += 30;
        subdivisions += 1;
    };
    let mut segments: Vec<Segment<V>> = heap.into_vec();
    segments.append(&mut finished);
    segments.sort_by(|x, y| x.a.total_cmp(&y.a));
    let values: Vec<V> = segments.iter().map(|s| s.value).collect();
    let error: f64 = segments.iter().map(|s| s.error).sum();
    Ok(Integral { value: pairwise_sum(&values), error, n_evals, converged })
}

fn totals<'a, V: Value>(segs: impl Iterator<Item = &'a Segment<V>>) -> (V, f64) {
    segs.fold((V::zero(), 0.0), |(v, e), s| (v.add(s.value), e + s.error))
}

/// Adaptive integral over `[a, b]`; infinite limits are mapped with a tangent
/// substitution `x = x0 + tan(u)`.
pub fn integrate_1d<V: Value>(f: impl Fn(f64) -> Result<V>, a: f64, b: f64, spec: &QuadratureSpec) -> Result<Integral<V>> {
    integrate_1d_scaled(f, a, b, 1.0, spec)
}

/// As [`integrate_1d`], with `x = x0 + scale * tan(u)` for infinite limits.
/// `scale` should be comparable to the width of the integrand's features.
pub fn integrate_1d_scaled<V: Value>(
    f: impl Fn(f64) -> Result<V>,
    a: f64,
    b: f64,
    scale: f64,
    spec: &QuadratureSpec,
) -> Result<Integral<V>> {
    if a.is_nan() || b.is_nan() {
        return Err(invalid("limits", "NaN"));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(invalid("scale", "must be positive"));
    }
    if a > b {
        return integrate_1d_scaled(f, b, a, scale, spec).map(|r| r.map(|v| v.scale(-1.0)));
    }
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mapped = |x0: f64, sign: f64| {
        let f = &f;
        move |u: f64| -> Result<V> {
            let t = u.tan();
            let c = u.cos();
            let jac = scale / (c * c);
            Ok(f(x0 + sign * scale * t)?.scale(jac))
        }
    };
    match (a.is_finite(), b.is_finite()) {
        (true, true) => integrate_1d_points(f, &[a, b], spec),
        (true, false) => integrate_1d_points(mapped(a, 1.0), &[0.0, half_pi], spec),
        (false, true) => integrate_1d_points(mapped(b, -1.0), &[0.0, half_pi], spec),
        (false, false) => integrate_1d_points(mapped(0.0, 1.0), &[-half_pi, 0.0, half_pi], spec),
    }
}
