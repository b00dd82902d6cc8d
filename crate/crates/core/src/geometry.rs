//! SE2 poses, planar points and the map-origin convention.
//!
//! Headings are kept as raw radians normalized to `(-π, π]`. The map frame
//! shares its axes with UTM (x = Easting, y = Northing) and differs from it
//! only by a constant translation, see [`MapOrigin`].

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Sub};

/// Wraps an angle into `(-π, π]`.
///
/// Angles already inside the interval are returned bit-for-bit unchanged.
pub fn normalize_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped <= -PI {
        wrapped + 2.0 * PI
    } else {
        wrapped
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (*self - *other).norm()
    }

    pub fn dot(&self, other: &Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(&self, other: &Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl fmt::Display for Point2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.4}, {:.4})", self.x, self.y)
    }
}

/// Rigid 2D transform / vehicle pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    theta: f64,
}

impl Default for Pose2 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub const fn identity() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
        }
    }

    pub fn from_translation(t: Point2, theta: f64) -> Self {
        Self::new(t.x, t.y, theta)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn translation(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    /// `self ⊕ other`.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )
    }

    pub fn inverse(&self) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(
            -c * self.x - s * self.y,
            s * self.x - c * self.y,
            -self.theta,
        )
    }

    /// `self⁻¹ ⊕ other`, the pose of `other` expressed in the frame of `self`.
    pub fn between(&self, other: &Pose2) -> Pose2 {
        self.inverse().compose(other)
    }

    pub fn transform_point(&self, q: &Point2) -> Point2 {
        let (s, c) = self.theta.sin_cos();
        Point2::new(self.x + c * q.x - s * q.y, self.y + s * q.x + c * q.y)
    }

    /// Expresses a point given in the outer frame in the frame of this pose.
    pub fn inverse_transform_point(&self, q: &Point2) -> Point2 {
        let (s, c) = self.theta.sin_cos();
        let dx = q.x - self.x;
        let dy = q.y - self.y;
        Point2::new(c * dx + s * dy, -s * dx + c * dy)
    }

    /// 3×3 homogeneous matrix.
    pub fn to_matrix(&self) -> nalgebra::Matrix3<f64> {
        let (s, c) = self.theta.sin_cos();
        nalgebra::Matrix3::new(c, -s, self.x, s, c, self.y, 0.0, 0.0, 1.0)
    }
}

impl fmt::Display for Pose2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.4}, {:.4}, {:.5} rad)", self.x, self.y, self.theta)
    }
}

/// Constant planar offset between the map frame and a UTM zone.
///
/// There is never a heading offset between the two frames.
#[derive(Debug, Clone, PartialEq)]
pub struct MapOrigin {
    pub easting_offset: f64,
    pub northing_offset: f64,
    pub zone_label: String,
}

impl Default for MapOrigin {
    fn default() -> Self {
        Self {
            easting_offset: 0.0,
            northing_offset: 0.0,
            zone_label: String::from("56S"),
        }
    }
}

impl MapOrigin {
    pub fn new(easting_offset: f64, northing_offset: f64, zone_label: impl Into<String>) -> Self {
        Self {
            easting_offset,
            northing_offset,
            zone_label: zone_label.into(),
        }
    }

    pub fn map_to_utm(&self, q: &Point2) -> Point2 {
        Point2::new(q.x + self.easting_offset, q.y + self.northing_offset)
    }

    pub fn utm_to_map(&self, q: &Point2) -> Point2 {
        Point2::new(q.x - self.easting_offset, q.y - self.northing_offset)
    }
}

/// Free-function forms of the group operations.
pub fn compose(a: &Pose2, b: &Pose2) -> Pose2 {
    a.compose(b)
}

pub fn inverse(p: &Pose2) -> Pose2 {
    p.inverse()
}

pub fn transform_point(p: &Pose2, q: &Point2) -> Point2 {
    p.transform_point(q)
}

pub fn map_to_utm(q: &Point2, origin: &MapOrigin) -> Point2 {
    origin.map_to_utm(q)
}

pub fn utm_to_map(q: &Point2, origin: &MapOrigin) -> Point2 {
    origin.utm_to_map(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Vector3};
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn from_matrix(m: &Matrix3<f64>) -> Pose2 {
        Pose2::new(m[(0, 2)], m[(1, 2)], m[(1, 0)].atan2(m[(0, 0)]))
    }

    fn close(a: &Pose2, b: &Pose2, tol: f64) -> bool {
        (a.x - b.x).abs() <= tol
            && (a.y - b.y).abs() <= tol
            && normalize_angle(a.theta() - b.theta()).abs() <= tol
    }

    fn pose() -> impl Strategy<Value = Pose2> {
        (-100.0..100.0f64, -100.0..100.0f64, -10.0..10.0f64)
            .prop_map(|(x, y, t)| Pose2::new(x, y, t))
    }

    #[test]
    fn normalization_edges() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(-3.0 * PI / 2.0) - FRAC_PI_2).abs() < 1e-12);
        assert_eq!(normalize_angle(0.25), 0.25);
    }

    #[test]
    fn compose_examples() {
        let p = Pose2::new(1.5, -2.0, 0.3);
        assert_eq!(Pose2::identity().compose(&p), p);
        let r = Pose2::new(1.0, 0.0, FRAC_PI_2).compose(&Pose2::new(1.0, 0.0, 0.0));
        assert!(close(&r, &Pose2::new(1.0, 1.0, FRAC_PI_2), 1e-15));
    }

    #[test]
    fn inverse_examples() {
        assert!(close(
            &Pose2::identity().inverse(),
            &Pose2::identity(),
            0.0
        ));
        assert_eq!(Pose2::new(1.0, 2.0, 0.0).inverse(), Pose2::new(-1.0, -2.0, 0.0));
    }

    #[test]
    fn transform_point_examples() {
        let q = Point2::new(3.0, 4.0);
        assert_eq!(Pose2::identity().transform_point(&q), q);
        let r = Pose2::new(0.0, 0.0, PI).transform_point(&Point2::new(1.0, 0.0));
        assert!((r.x + 1.0).abs() < 1e-15 && r.y.abs() < 1e-15);
    }

    #[test]
    fn utm_offsets() {
        let o = MapOrigin::new(332000.0, 6248000.0, "56S");
        assert_eq!(o.map_to_utm(&Point2::default()), Point2::new(332000.0, 6248000.0));
        let o = MapOrigin::new(100.0, 200.0, "56S");
        assert_eq!(o.map_to_utm(&Point2::new(10.0, -5.0)), Point2::new(110.0, 195.0));
        let q = Point2::new(10.0, -5.0);
        assert_eq!(o.utm_to_map(&o.map_to_utm(&q)), q);
    }

    proptest! {
        #[test]
        fn compose_matches_matrix_product(p in pose(), q in pose()) {
            let oracle = from_matrix(&(p.to_matrix() * q.to_matrix()));
            prop_assert!(close(&p.compose(&q), &oracle, 1e-10));
        }

        #[test]
        fn inverse_matches_matrix_inverse(p in pose()) {
            let inv = p.to_matrix().try_inverse().unwrap();
            prop_assert!(close(&p.inverse(), &from_matrix(&inv), 1e-12));
            prop_assert!(close(&p.compose(&p.inverse()), &Pose2::identity(), 1e-12));
        }

        #[test]
        fn transform_point_matches_matrix(p in pose(), x in -50.0..50.0f64, y in -50.0..50.0f64) {
            let h = p.to_matrix() * Vector3::new(x, y, 1.0);
            let q = p.transform_point(&Point2::new(x, y));
            prop_assert!((q.x - h.x).abs() < 1e-10 && (q.y - h.y).abs() < 1e-10);
            let back = p.inverse_transform_point(&q);
            prop_assert!((back.x - x).abs() < 1e-10 && (back.y - y).abs() < 1e-10);
        }

        #[test]
        fn group_axioms(a in pose(), b in pose(), c in pose()) {
            let lhs = a.compose(&b).compose(&c);
            let rhs = a.compose(&b.compose(&c));
            prop_assert!(close(&lhs, &rhs, 1e-9));
            prop_assert_eq!(Pose2::identity().compose(&a), a);
            prop_assert!(lhs.theta().abs() <= PI && a.inverse().theta().abs() <= PI);
        }

        #[test]
        fn utm_round_trip(x in -1e4..1e4f64, y in -1e4..1e4f64, e in 0.0..8e5f64, n in 0.0..1e7f64) {
            let o = MapOrigin::new(e, n, "56S");
            let q = Point2::new(x, y);
            let back = o.utm_to_map(&o.map_to_utm(&q));
            prop_assert!((back.x - x).abs() <= 1e-9 && (back.y - y).abs() <= 1e-9);
        }
    }
}
