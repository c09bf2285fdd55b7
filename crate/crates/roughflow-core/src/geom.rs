//! Points and vectors of ℝ³ with cylindrical-coordinate helpers and
//! circle-angle arithmetic shared by the field and flow modules.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::ops::{Add, Mul, Neg, Sub};

/// A point of ℝ³ in Cartesian coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// A displacement or field value in ℝ³.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vector3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Point3 {
        Point3 { x, y, z }
    }

    /// Builds a point from cylindrical coordinates (r, θ, z).
    pub fn from_cylindrical(r: f64, theta: f64, z: f64) -> Point3 {
        Point3::new(r * theta.cos(), r * theta.sin(), z)
    }

    /// Squared distance from the z-axis, x² + y².
    pub fn radius2(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn radius(self) -> f64 {
        self.radius2().sqrt()
    }

    /// Azimuthal angle in [0, 2π). On the axis (r = 0) this returns 0.
    pub fn theta(self) -> f64 {
        if self.x == 0.0 && self.y == 0.0 {
            0.0
        } else {
            wrap_angle(self.y.atan2(self.x))
        }
    }

    /// Cylindrical coordinates (r, θ, z) with r ≥ 0 and θ ∈ [0, 2π).
    pub fn cylindrical(self) -> (f64, f64, f64) {
        (self.radius(), self.theta(), self.z)
    }

    pub fn is_origin(self) -> bool {
        self.x == 0.0 && self.y == 0.0 && self.z == 0.0
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dist(self, other: Point3) -> f64 {
        (self - other).norm()
    }
}

impl Vector3 {
    pub const ZERO: Vector3 = Vector3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Vector3 {
        Vector3 { x, y, z }
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Sub for Point3 {
    type Output = Vector3;
    fn sub(self, rhs: Point3) -> Vector3 {
        Vector3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Add<Vector3> for Point3 {
    type Output = Point3;
    fn add(self, rhs: Vector3) -> Point3 {
        Point3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Add for Vector3 {
    type Output = Vector3;
    fn add(self, rhs: Vector3) -> Vector3 {
        Vector3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Vector3 {
    type Output = Vector3;
    fn sub(self, rhs: Vector3) -> Vector3 {
        Vector3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Vector3 {
    type Output = Vector3;
    fn mul(self, s: f64) -> Vector3 {
        Vector3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vector3 {
    type Output = Vector3;
    fn neg(self) -> Vector3 {
        Vector3::new(-self.x, -self.y, -self.z)
    }
}

/// Reduces an angle to the canonical interval [0, 2π).
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    // rem_euclid of a tiny negative rounds up to exactly 2π.
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Adds two angles in [0, 2π] and reduces the sum into [0, 2π).
///
/// A full turn is the identity exactly: `add_angle(t, 2π) == t` for
/// t ∈ [0, 2π), with no round trip through the sum.
pub fn add_angle(theta: f64, delta: f64) -> f64 {
    if delta == TAU {
        return if theta >= TAU { theta - TAU } else { theta };
    }
    let mut s = theta + delta;
    while s >= TAU {
        s -= TAU;
    }
    while s < 0.0 {
        s += TAU;
    }
    s
}

/// Distance between two angles on the circle ℝ/2πℤ.
pub fn circ_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cylindrical_round_trip() {
        let p = Point3::new(0.3, -0.4, 1.7);
        let (r, th, z) = p.cylindrical();
        assert!(r >= 0.0 && (0.0..TAU).contains(&th));
        let q = Point3::from_cylindrical(r, th, z);
        assert!(p.dist(q) < 1e-15);
    }

    #[test]
    fn axis_angle_is_zero() {
        assert_eq!(Point3::new(0.0, 0.0, 2.0).theta(), 0.0);
    }

    #[test]
    fn full_turn_is_identity() {
        for &t in &[0.0, 0.1, 1.0, 3.0, 6.2] {
            assert_eq!(add_angle(t, TAU), t);
        }
    }

    #[test]
    fn circ_dist_wraps() {
        assert!((circ_dist(0.1, TAU - 0.1) - 0.2).abs() < 1e-15);
        assert_eq!(circ_dist(1.0, 1.0), 0.0);
    }

    #[test]
    fn wrap_angle_never_returns_tau() {
        assert_eq!(wrap_angle(-1e-20), 0.0);
        assert_eq!(wrap_angle(TAU), 0.0);
    }
}
