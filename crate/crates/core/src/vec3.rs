//! Minimal 3-vector used by the geometry and transport code.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

pub const fn vec3(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3 { x, y, z }
}

impl Vec3 {
    pub const ZERO: Vec3 = vec3(0.0, 0.0, 0.0);

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm2().sqrt()
    }

    #[inline]
    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        vec3(self.x / n, self.y / n, self.z / n)
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        vec3(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    /// Deflects a unit vector by polar angle `theta` (from the current
    /// direction) and azimuth `phi` around it. The transverse basis is built
    /// from the smallest component for numerical stability; the result is
    /// renormalized to keep |direction| = 1 under repeated scattering.
    pub fn deflected(self, theta: f64, phi: f64) -> Vec3 {
        let w = self;
        let helper = if w.x.abs() <= w.y.abs() && w.x.abs() <= w.z.abs() {
            vec3(1.0, 0.0, 0.0)
        } else if w.y.abs() <= w.z.abs() {
            vec3(0.0, 1.0, 0.0)
        } else {
            vec3(0.0, 0.0, 1.0)
        };
        let u = w.cross(helper).normalized();
        let v = w.cross(u);
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        (u * (st * cp) + v * (st * sp) + w * ct).normalized()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        vec3(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        vec3(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        vec3(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        vec3(-self.x, -self.y, -self.z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deflection_preserves_unit_length_and_angle() {
        let dirs = [
            vec3(1.0, 0.0, 0.0),
            vec3(0.0, 0.0, -1.0),
            vec3(0.6, -0.48, 0.64).normalized(),
        ];
        for d in dirs {
            for &(theta, phi) in &[(0.0, 0.3), (0.7, 1.0), (std::f64::consts::PI - 0.01, 4.0)] {
                let nd = d.deflected(theta, phi);
                assert!((nd.norm() - 1.0).abs() < 1e-12);
                assert!((nd.dot(d) - theta.cos()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_deflection_is_identity() {
        let d = vec3(0.26726124191242440, 0.53452248382484879, 0.80178372573727319);
        let nd = d.deflected(0.0, 1.234);
        assert!((nd - d).norm() < 1e-12);
    }
}
