//! Adaptive Genz-Malik cubature on axis-aligned boxes.
//!
//! Degree-7 rule with an embedded degree-5 rule for the error estimate; the
//! region with the largest error is bisected along the axis with the largest
//! fourth divided difference. Regions are refined in fixed-size batches so the
//! sequence of subdivisions, and therefore the result, does not depend on how
//! many worker threads evaluate a batch.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{pairwise_sum, Integral, QuadratureSpec, Value};
use crate::error::{invalid, Error, Result};

const BATCH: usize = 16;

/// Genz-Malik degree 7/5 rule in `D` dimensions.
#[derive(Debug, Clone)]
pub struct Cubature<const D: usize> {
    w7: [f64; 5],
    w5: [f64; 4],
}

const LAMBDA2: f64 = 0.358_568_582_800_318_1; // sqrt(9/70)
const LAMBDA3: f64 = 0.948_683_298_050_513_8; // sqrt(9/10)
const LAMBDA4: f64 = 0.948_683_298_050_513_8; // sqrt(9/10)
const LAMBDA5: f64 = 0.688_247_201_611_685_3; // sqrt(9/19)

impl<const D: usize> Default for Cubature<D> {
    fn default() -> Self {
        Self::new()
    }
}

impl<const D: usize> Cubature<D> {
    pub fn new() -> Self {
        assert!(D >= 2, "Genz-Malik rule needs at least two dimensions");
        let n = D as f64;
        let two_n = (1u64 << D) as f64;
        Self {
            w7: [
                (12824.0 - 9120.0 * n + 400.0 * n * n) / 19683.0,
                980.0 / 6561.0,
                (1820.0 - 400.0 * n) / 19683.0,
                200.0 / 19683.0,
                6859.0 / 19683.0 / two_n,
            ],
            w5: [
                (729.0 - 950.0 * n + 50.0 * n * n) / 729.0,
                245.0 / 486.0,
                (265.0 - 100.0 * n) / 1458.0,
                25.0 / 729.0,
            ],
        }
    }

    pub fn points_per_region() -> usize {
        1 + 4 * D + 2 * D * (D - 1) + (1 << D)
    }

    fn apply<V: Value>(
        &self,
        f: &(impl Fn(&[f64; D]) -> Result<V> + Sync),
        center: &[f64; D],
        half: &[f64; D],
    ) -> Result<(V, f64, usize)> {
        let eval = |x: [f64; D]| -> Result<V> {
            let v = f(&x)?;
            if v.all_finite() {
                Ok(v)
            } else {
                Err(Error::NonFinite { location: x.to_vec() })
            }
        };
        let at = |offsets: &[(usize, f64)]| {
            let mut x = *center;
            for &(i, s) in offsets {
                x[i] += s * half[i];
            }
            x
        };
        let f1 = eval(*center)?;
        let mut f2 = V::zero();
        let mut f3 = V::zero();
        let mut fourth_diff = [0.0f64; D];
        for i in 0..D {
            let a = eval(at(&[(i, LAMBDA2)]))?.add(eval(at(&[(i, -LAMBDA2)]))?);
            let b = eval(at(&[(i, LAMBDA3)]))?.add(eval(at(&[(i, -LAMBDA3)]))?);
            f2 = f2.add(a);
            f3 = f3.add(b);
            let two_f1 = f1.scale(2.0);
            fourth_diff[i] = a.sub(two_f1).sub(b.sub(two_f1).scale(LAMBDA2 * LAMBDA2 / (LAMBDA3 * LAMBDA3))).max_abs();
        }
        let mut f4 = V::zero();
        for i in 0..D {
            for j in (i + 1)..D {
                for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                    f4 = f4.add(eval(at(&[(i, si * LAMBDA4), (j, sj * LAMBDA4)]))?);
                }
            }
        }
        let mut f5 = V::zero();
        for mask in 0..(1usize << D) {
            let mut x = *center;
            for (i, xi) in x.iter_mut().enumerate() {
                let s = if mask >> i & 1 == 1 { LAMBDA5 } else { -LAMBDA5 };
                *xi += s * half[i];
            }
            f5 = f5.add(eval(x)?);
        }
        let volume: f64 = half.iter().map(|h| 2.0 * h).product();
        let w = &self.w7;
        let i7 = f1.scale(w[0]).add(f2.scale(w[1])).add(f3.scale(w[2])).add(f4.scale(w[3])).add(f5.scale(w[4])).scale(volume);
        let w = &self.w5;
        let i5 = f1.scale(w[0]).add(f2.scale(w[1])).add(f3.scale(w[2])).add(f4.scale(w[3])).scale(volume);
        let err = i7.sub(i5).max_abs().max(50.0 * f64::EPSILON * i7.max_abs());
        // Split the axis with the largest fourth difference, preferring wider axes on ties.
        let mut axis = 0;
        for i in 1..D {
            let better = fourth_diff[i] > fourth_diff[axis] * (1.0 + 1e-12)
                || (fourth_diff[i] >= fourth_diff[axis] * (1.0 - 1e-12) && half[i] > half[axis]);
            if better {
                axis = i;
            }
        }
        Ok((i7, err, axis))
    }
}

struct Region<V, const D: usize> {
    id: u64,
    center: [f64; D],
    half: [f64; D],
    value: V,
    error: f64,
    axis: usize,
}

impl<V, const D: usize> PartialEq for Region<V, D> {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl<V, const D: usize> Eq for Region<V, D> {}
impl<V, const D: usize> PartialOrd for Region<V, D> {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl<V, const D: usize> Ord for Region<V, D> {
    fn cmp(&self, o: &Self) -> Ordering {
        self.error.total_cmp(&o.error).then_with(|| o.id.cmp(&self.id))
    }
}

type Job<const D: usize> = (u64, [f64; D], [f64; D]);

fn evaluate_jobs<V: Value, const D: usize>(
    rule: &Cubature<D>,
    f: &(impl Fn(&[f64; D]) -> Result<V> + Sync),
    jobs: Vec<Job<D>>,
) -> Result<Vec<Region<V, D>>> {
    let run = |(id, center, half): Job<D>| -> Result<Region<V, D>> {
        let (value, error, axis) = rule.apply(f, &center, &half)?;
        Ok(Region { id, center, half, value, error, axis })
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        jobs.into_par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        jobs.into_iter().map(run).collect()
    }
}

/// Adaptive integral of `f` over the box `[lo, hi]`, starting from a uniform
/// `initial_splits[i]`-fold partition along each axis.
pub fn integrate_box<V: Value, const D: usize>(
    f: impl Fn(&[f64; D]) -> Result<V> + Sync,
    lo: [f64; D],
    hi: [f64; D],
    initial_splits: [usize; D],
    spec: &QuadratureSpec,
) -> Result<Integral<V>> {
    spec.validate()?;
    for i in 0..D {
        if !(lo[i].is_finite() && hi[i].is_finite() && lo[i] < hi[i]) {
            return Err(invalid("box", format!("axis {i} has invalid limits [{}, {}]", lo[i], hi[i])));
        }
        if initial_splits[i] == 0 {
            return Err(invalid("initial_splits", "must be at least 1"));
        }
    }
    let rule = Cubature::<D>::new();
    let per_region = Cubature::<D>::points_per_region() as u64;

    let mut jobs: Vec<Job<D>> = Vec::new();
    let total_cells: usize = initial_splits.iter().product();
    for cell in 0..total_cells {
        let mut rem = cell;
        let mut center = [0.0; D];
        let mut half = [0.0; D];
        for i in 0..D {
            let k = rem % initial_splits[i];
            rem /= initial_splits[i];
            let w = (hi[i] - lo[i]) / initial_splits[i] as f64;
            center[i] = lo[i] + (k as f64 + 0.5) * w;
            half[i] = 0.5 * w;
        }
        jobs.push((cell as u64, center, half));
    }
    let mut next_id = total_cells as u64;
    let mut n_evals = per_region * jobs.len() as u64;
    let mut heap: BinaryHeap<Region<V, D>> = evaluate_jobs(&rule, &f, jobs)?.into_iter().collect();
    let mut finished: Vec<Region<V, D>> = Vec::new();
    let mut total = heap.iter().fold(V::zero(), |a, r| a.add(r.value));
    let mut total_err: f64 = heap.iter().map(|r| r.error).sum();
    let mut subdivisions = 0usize;

    let converged = loop {
        if total_err <= spec.target(total.max_abs()) {
            break true;
        }
        if subdivisions >= spec.max_subdivisions || heap.is_empty() {
            break false;
        }
        let mut jobs = Vec::with_capacity(2 * BATCH);
        while jobs.len() < 2 * BATCH && subdivisions < spec.max_subdivisions {
            let Some(r) = heap.pop() else { break };
            let axis = r.axis;
            if r.half[axis] <= 1e-13 * (1.0 + r.center[axis].abs()) {
                finished.push(r);
                continue;
            }
            total = total.sub(r.value);
            total_err -= r.error;
            let mut half = r.half;
            half[axis] *= 0.5;
            for s in [-1.0, 1.0] {
                let mut c = r.center;
                c[axis] += s * half[axis];
                jobs.push((next_id, c, half));
                next_id += 1;
            }
            subdivisions += 1;
        }
        if jobs.is_empty() {
            break false;
        }
        n_evals += per_region * jobs.len() as u64;
        for region in evaluate_jobs(&rule, &f, jobs)? {
            total = total.add(region.value);
            total_err += region.error;
            heap.push(region);
        }
    };

    let mut regions: Vec<Region<V, D>> = heap.into_vec();
    regions.append(&mut finished);
    regions.sort_by_key(|r| r.id);
    let values: Vec<V> = regions.iter().map(|r| r.value).collect();
    let error = regions.iter().map(|r| r.error).sum();
    Ok(Integral { value: pairwise_sum(&values), error, n_evals, converged })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(rel: f64) -> QuadratureSpec {
        QuadratureSpec::default().with_rel_tol(rel).with_abs_tol(1e-14)
    }

    #[test]
    fn rule_integrates_degree_seven_exactly() {
        // x^6 y^0 z^0 and x^2 y^2 z^2 monomials on [-1,1]^3.
        let r = integrate_box(|p: &[f64; 3]| Ok(p[0].powi(6)), [-1.0; 3], [1.0; 3], [1; 3], &spec(1e-14)).unwrap();
        assert!((r.value - 8.0 / 7.0).abs() < 1e-13, "{}", r.value);
        let r = integrate_box(|p: &[f64; 3]| Ok((p[0] * p[1] * p[2]).powi(2)), [-1.0; 3], [1.0; 3], [1; 3], &spec(1e-14)).unwrap();
        assert!((r.value - 8.0 / 27.0).abs() < 1e-13, "{}", r.value);
        assert_eq!(Cubature::<3>::points_per_region(), 33);
        assert_eq!(Cubature::<2>::points_per_region(), 17);
    }

    #[test]
    fn constant_over_unit_cube() {
        let r = integrate_box(|_: &[f64; 3]| Ok(1.0), [0.0; 3], [1.0; 3], [1; 3], &spec(1e-12)).unwrap();
        assert!(r.converged);
        assert!((r.value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gaussian_2d() {
        let r = integrate_box(
            |p: &[f64; 2]| Ok((-(p[0] * p[0] + p[1] * p[1])).exp()),
            [-6.0; 2],
            [6.0; 2],
            [1; 2],
            &spec(1e-10),
        )
        .unwrap();
        assert!(r.converged);
        assert!((r.value - std::f64::consts::PI).abs() < 1e-9, "{}", r.value);
    }

    #[test]
    fn odd_integrand_vanishes() {
        let s = spec(1e-10);
        let r = integrate_box(|p: &[f64; 3]| Ok(p[0] * (p[1] * p[1] + 1.0).ln() * (-p[2] * p[2]).exp()), [-1.0; 3], [1.0; 3], [1; 3], &s)
            .unwrap();
        assert!(r.value.abs() <= 1e-14, "{}", r.value);
    }

    #[test]
    fn vector_valued_components_share_nodes() {
        let r = integrate_box(|p: &[f64; 3]| Ok([p[0] * p[0], 2.0 * p[0] * p[0]]), [0.0; 3], [1.0; 3], [1; 3], &spec(1e-12)).unwrap();
        assert_eq!(r.value[1], 2.0 * r.value[0]);
    }

    #[test]
    fn rejects_degenerate_box() {
        assert!(integrate_box(|_: &[f64; 2]| Ok(1.0), [0.0, 0.0], [1.0, 0.0], [1; 2], &spec(1e-6)).is_err());
    }
}
