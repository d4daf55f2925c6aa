use core::ops::{Add, Mul, Sub};

// Unused whenever std is linked and supplies the inherent float methods.
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

/// A point or displacement in meters.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, other: Self) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Azimuth and elevation of the direction `self`, in radians.
    ///
    /// Azimuth is measured in the x-y plane from +x, elevation from that
    /// plane towards +z. The zero vector maps to (0, 0).
    pub fn direction_angles(self) -> (f64, f64) {
        let n = self.norm();
        if n == 0.0 {
            return (0.0, 0.0);
        }
        let az = self.y.atan2(self.x);
        let el = (self.z / n).clamp(-1.0, 1.0).asin();
        (az, el)
    }

    /// Distance from `self` to the segment `a`–`b`.
    pub fn distance_to_segment(self, a: Self, b: Self) -> f64 {
        let ab = b - a;
        let len2 = ab.dot(ab);
        if len2 == 0.0 {
            return self.distance(a);
        }
        let t = ((self - a).dot(ab) / len2).clamp(0.0, 1.0);
        self.distance(a + ab * t)
    }
}

impl Add for Point3 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Axis-aligned box, inclusive on both ends.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub const fn new(min: Point3, max: Point3) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: Point3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    /// True when the box has positive extent along every axis.
    pub fn has_volume(&self) -> bool {
        self.min.is_finite()
            && self.max.is_finite()
            && self.max.x > self.min.x
            && self.max.y > self.min.y
            && self.max.z > self.min.z
    }

    /// True when min ≤ max on every axis (flat boxes allowed).
    pub fn is_ordered(&self) -> bool {
        self.min.is_finite()
            && self.max.is_finite()
            && self.max.x >= self.min.x
            && self.max.y >= self.min.y
            && self.max.z >= self.min.z
    }

    pub fn diagonal(&self) -> f64 {
        self.max.distance(self.min)
    }

    /// Maps unit-cube coordinates onto the box.
    pub fn lerp(&self, u: [f64; 3]) -> Point3 {
        Point3::new(
            self.min.x + u[0] * (self.max.x - self.min.x),
            self.min.y + u[1] * (self.max.y - self.min.y),
            self.min.z + u[2] * (self.max.z - self.min.z),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_distance() {
        let a = Point3::new(0.0, 0.0, 0.0);
        let b = Point3::new(10.0, 0.0, 0.0);
        assert!((Point3::new(5.0, 2.0, 0.0).distance_to_segment(a, b) - 2.0).abs() < 1e-12);
        assert!((Point3::new(-3.0, 4.0, 0.0).distance_to_segment(a, b) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn angles_of_axes() {
        let (az, el) = Point3::new(0.0, 1.0, 0.0).direction_angles();
        assert!((az - core::f64::consts::FRAC_PI_2).abs() < 1e-12 && el.abs() < 1e-12);
        let (_, el) = Point3::new(0.0, 0.0, -2.0).direction_angles();
        assert!((el + core::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
}
