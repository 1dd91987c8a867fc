//! Minimal 3-vector type used for positions, velocities and field values.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    #[inline]
    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Unit vector along `self`, or `None` for the zero vector.
    pub fn try_normalize(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self / n)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Two unit vectors `(e1, e2)` such that `(e1, e2, self)` is a right-handed
    /// orthonormal frame. `self` must be a unit vector.
    pub fn orthonormal_basis(self) -> (Vec3, Vec3) {
        // Branchless construction (Duff et al. 2017).
        let sign = 1.0_f64.copysign(self.z);
        let a = -1.0 / (sign + self.z);
        let b = self.x * self.y * a;
        let e1 = Vec3::new(1.0 + sign * self.x * self.x * a, sign * b, -sign * self.x);
        let e2 = Vec3::new(b, sign + self.y * self.y * a, -self.y);
        (e1, e2)
    }

    /// Rotation of `self` about the unit `axis` through the origin by `angle` (Rodrigues).
    pub fn rotate_about(self, axis: Vec3, angle: f64) -> Vec3 {
        let (s, c) = angle.sin_cos();
        self * c + axis.cross(self) * s + axis * (axis.dot(self) * (1.0 - c))
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    #[inline]
    fn sub_assign(&mut self, o: Vec3) {
        self.x -= o.x;
        self.y -= o.y;
        self.z -= o.z;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    #[inline]
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl std::iter::Sum for Vec3 {
    fn sum<I: Iterator<Item = Vec3>>(iter: I) -> Vec3 {
        iter.fold(Vec3::ZERO, |a, b| a + b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn vec3() -> impl Strategy<Value = Vec3> {
        (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    #[test]
    fn canonical_basis_cross_products() {
        assert_eq!(Vec3::X.cross(Vec3::Y), Vec3::Z);
        assert_eq!(Vec3::Y.cross(Vec3::Z), Vec3::X);
        assert_eq!(Vec3::Z.cross(Vec3::X), Vec3::Y);
        let a = Vec3::new(2.0, 0.0, 0.0);
        let b = Vec3::new(3.0, 3.0, 0.0);
        // |a||b| sin(45 deg)
        assert_relative_eq!(a.cross(b).norm(), 2.0 * 18f64.sqrt() * (0.5f64).sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn orthonormal_basis_is_right_handed() {
        for n in [Vec3::Z, -Vec3::Z, Vec3::X, Vec3::new(1.0, 2.0, -3.0).try_normalize().unwrap()] {
            let (e1, e2) = n.orthonormal_basis();
            assert_relative_eq!(e1.norm(), 1.0, epsilon = 1e-14);
            assert_relative_eq!(e2.norm(), 1.0, epsilon = 1e-14);
            assert!(e1.dot(e2).abs() < 1e-14);
            assert_relative_eq!(e1.cross(e2).dot(n), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn zero_vector_has_no_direction() {
        assert!(Vec3::ZERO.try_normalize().is_none());
    }

    proptest! {
        #[test]
        fn jacobi_identity(a in vec3(), b in vec3(), c in vec3()) {
            let s = a.cross(b.cross(c)) + b.cross(c.cross(a)) + c.cross(a.cross(b));
            prop_assert!(s.norm() <= 1e-11 * (1.0 + a.norm() * b.norm() * c.norm()));
        }

        #[test]
        fn lagrange_identity(a in vec3(), b in vec3()) {
            let lhs = a.cross(b).norm_squared();
            let rhs = a.norm_squared() * b.norm_squared() - a.dot(b).powi(2);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + a.norm_squared() * b.norm_squared()));
        }

        #[test]
        fn dot_self_is_nonnegative(a in vec3()) {
            prop_assert!(a.dot(a) >= 0.0);
        }

        #[test]
        fn rotation_preserves_length(a in vec3(), angle in -7.0..7.0f64) {
            let r = a.rotate_about(Vec3::new(1.0, 1.0, 1.0).try_normalize().unwrap(), angle);
            prop_assert!((r.norm() - a.norm()).abs() <= 1e-12 * (1.0 + a.norm()));
        }
    }
}
