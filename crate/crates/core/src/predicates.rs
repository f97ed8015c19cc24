//! Exact spherical predicates and metric primitives.
//!
//! Every point of a mesh lives on the unit sphere and is stored through its
//! Euclidean embedding. The orientation of a spherical triangle and the
//! position of a point relative to a triangle's circumcircle both reduce to
//! the sign of a 3D orientation determinant, which is evaluated with an
//! adaptive-precision filter so that the returned sign is always exact.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Points whose squared norm deviates from one by more than this are
/// renormalized on construction.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// Plane normals shorter than this make a triangle degenerate.
pub const DEGENERATE_NORMAL: f64 = 1e-14;

/// Mean Earth radius in metres, used to convert user lengths to arc length.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("latitude {0} is outside [-90, 90]")]
    OutOfRange(f64),
    #[error("coordinates are not finite")]
    NotFinite,
    #[error("cannot project the zero vector onto the sphere")]
    ZeroVector,
    #[error("triangle vertices lie on a common great circle")]
    DegenerateTriangle,
    #[error("both spherical circumcenters are equidistant to the triangle")]
    AmbiguousCircumcenter,
    #[error("triangle is negatively oriented")]
    NegativeOrientation,
}

/// A free vector in the Euclidean embedding space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3 {
            x: self.y * o.z - self.z * o.y,
            y: self.z * o.x - self.x * o.z,
            z: self.x * o.y - self.y * o.x,
        }
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(self * (1.0 / n))
        } else {
            None
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// A point on the unit sphere.
///
/// Construction always snaps the coordinates back onto the sphere, so the
/// norm is one up to [`NORMALIZATION_TOLERANCE`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitPoint {
    x: f64,
    y: f64,
    z: f64,
}

impl UnitPoint {
    /// Projects `(x, y, z)` onto the sphere.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(GeometryError::NotFinite);
        }
        let n2 = x * x + y * y + z * z;
        if n2 == 0.0 {
            return Err(GeometryError::ZeroVector);
        }
        if (n2 - 1.0).abs() <= NORMALIZATION_TOLERANCE {
            return Ok(UnitPoint { x, y, z });
        }
        let inv = 1.0 / n2.sqrt();
        Ok(UnitPoint { x: x * inv, y: y * inv, z: z * inv })
    }

    /// Projects a non-zero vector onto the sphere.
    pub fn from_vec(v: Vec3) -> Result<Self, GeometryError> {
        UnitPoint::new(v.x, v.y, v.z)
    }

    /// Builds a point from coordinates already known to be normalized.
    ///
    /// Only for data read back from trusted storage; no renormalization.
    pub const fn from_raw(x: f64, y: f64, z: f64) -> Self {
        UnitPoint { x, y, z }
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.x
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.y
    }

    #[inline]
    pub fn z(&self) -> f64 {
        self.z
    }

    #[inline]
    pub fn vec(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    #[inline]
    pub fn coords(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn antipode(&self) -> UnitPoint {
        UnitPoint { x: -self.x, y: -self.y, z: -self.z }
    }

    /// Longitude and latitude in degrees.
    pub fn to_lonlat(&self) -> (f64, f64) {
        let lon = self.y.atan2(self.x).to_degrees();
        let lat = self.z.clamp(-1.0, 1.0).asin().to_degrees();
        (lon, lat)
    }

    /// Moves along the great circle through `self` in tangent direction
    /// `dir` by arc length `dist`.
    pub fn offset(&self, dir: Vec3, dist: f64) -> Option<UnitPoint> {
        let p = self.vec();
        let tangent = (dir - p * dir.dot(p)).normalized()?;
        UnitPoint::from_vec(p * dist.cos() + tangent * dist.sin()).ok()
    }

    /// Point at parameter `t` along the chord from `self` to `other`,
    /// reprojected onto the sphere.
    pub fn chord_lerp(&self, other: &UnitPoint, t: f64) -> Option<UnitPoint> {
        let v = self.vec() * (1.0 - t) + other.vec() * t;
        UnitPoint::from_vec(v).ok()
    }

    /// Point at fraction `t` of the arc length from `self` to `other`.
    pub fn slerp(&self, other: &UnitPoint, t: f64) -> UnitPoint {
        let omega = geodesic_distance(self, other);
        if omega < 1e-15 {
            return *self;
        }
        let s = omega.sin();
        let a = ((1.0 - t) * omega).sin() / s;
        let b = (t * omega).sin() / s;
        UnitPoint::from_vec(self.vec() * a + other.vec() * b).unwrap_or(*self)
    }
}

impl fmt::Display for UnitPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// Exact sign of a determinant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    #[inline]
    fn of(v: f64) -> Sign {
        if v > 0.0 {
            Sign::Positive
        } else if v < 0.0 {
            Sign::Negative
        } else {
            Sign::Zero
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Negative => Sign::Positive,
            Sign::Zero => Sign::Zero,
            Sign::Positive => Sign::Negative,
        }
    }
}

/// Where a point lies relative to a triangle's circumcircle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CirclePosition {
    Inside,
    OnCircle,
    Outside,
}

#[inline]
fn coord(v: [f64; 3]) -> robust::Coord3D<f64> {
    robust::Coord3D { x: v[0], y: v[1], z: v[2] }
}

/// Exact sign of `det[p2 - p1 | p3 - p1 | p4 - p1]` on raw coordinates.
///
/// This is the sign of the 4x4 determinant with a leading row of ones.
#[inline]
pub fn orient3d_raw(p1: [f64; 3], p2: [f64; 3], p3: [f64; 3], p4: [f64; 3]) -> Sign {
    // robust evaluates det[pa - pd, pb - pd, pc - pd], which is the negation.
    Sign::of(robust::orient3d(coord(p1), coord(p2), coord(p3), coord(p4))).flip()
}

/// Exact orientation of four points.
#[inline]
pub fn orient3d(p1: &UnitPoint, p2: &UnitPoint, p3: &UnitPoint, p4: &UnitPoint) -> Sign {
    orient3d_raw(p1.coords(), p2.coords(), p3.coords(), p4.coords())
}

/// Exact orientation of `(a, b, c)` against the sphere center.
///
/// Positive means the spherical triangle `(a, b, c)` is positively oriented,
/// and for an edge `(a, b)` that `c` lies on the triangle side of the edge's
/// great circle.
#[inline]
pub fn orient_origin(a: &UnitPoint, b: &UnitPoint, c: &UnitPoint) -> Sign {
    orient3d_raw(a.coords(), b.coords(), c.coords(), [0.0; 3])
}

/// Position of `p` relative to the circumcircle of a positively oriented
/// triangle. The caller guarantees the orientation.
#[inline]
pub fn circle_position_unchecked(t: [&UnitPoint; 3], p: &UnitPoint) -> CirclePosition {
    match orient3d(t[0], t[1], t[2], p) {
        Sign::Negative => CirclePosition::Inside,
        Sign::Zero => CirclePosition::OnCircle,
        Sign::Positive => CirclePosition::Outside,
    }
}

/// Position of `p` relative to the circumcircle of triangle `t`.
pub fn in_circumcircle(t: [&UnitPoint; 3], p: &UnitPoint) -> Result<CirclePosition, GeometryError> {
    match orient_origin(t[0], t[1], t[2]) {
        Sign::Positive => Ok(circle_position_unchecked(t, p)),
        _ => Err(GeometryError::NegativeOrientation),
    }
}

/// Arc length between two points, in `[0, pi]`.
#[inline]
pub fn geodesic_distance(p: &UnitPoint, q: &UnitPoint) -> f64 {
    let a = p.vec();
    let b = q.vec();
    a.cross(b).norm().atan2(a.dot(b))
}

/// Straight-line distance through the sphere.
#[inline]
pub fn chord_distance(p: &UnitPoint, q: &UnitPoint) -> f64 {
    (p.vec() - q.vec()).norm()
}

/// Converts a chord length to the corresponding arc length.
#[inline]
pub fn chord_to_arc(chord: f64) -> f64 {
    2.0 * (0.5 * chord).clamp(0.0, 1.0).asin()
}

/// Converts an arc length to the corresponding chord length.
#[inline]
pub fn arc_to_chord(arc: f64) -> f64 {
    2.0 * (0.5 * arc.clamp(0.0, PI)).sin()
}

/// Spherical circumcenter: the point equidistant to the three vertices that
/// lies on the circumcircle's near side.
pub fn circumcenter(t: [&UnitPoint; 3]) -> Result<UnitPoint, GeometryError> {
    let (a, b, c) = (t[0].vec(), t[1].vec(), t[2].vec());
    let n = (b - a).cross(c - a);
    let len = n.norm();
    if len < DEGENERATE_NORMAL {
        return Err(GeometryError::DegenerateTriangle);
    }
    let n = n * (1.0 / len);
    // Offset of the circumcircle plane from the center.
    let offset = n.dot(a);
    if offset.abs() < DEGENERATE_NORMAL {
        return Err(GeometryError::AmbiguousCircumcenter);
    }
    let center = if offset > 0.0 { n } else { -n };
    UnitPoint::from_vec(center)
}

/// Converts geographic degrees to a point on the sphere.
pub fn to_unit_sphere(lon: f64, lat: f64) -> Result<UnitPoint, GeometryError> {
    if !(lon.is_finite() && lat.is_finite()) {
        return Err(GeometryError::NotFinite);
    }
    if !(-90.0..=90.0).contains(&lat) {
        return Err(GeometryError::OutOfRange(lat));
    }
    let (lon, lat) = (lon.to_radians(), lat.to_radians());
    UnitPoint::new(lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin())
}

/// Area of the spherical triangle `(a, b, c)` (its spherical excess).
pub fn spherical_triangle_area(a: &UnitPoint, b: &UnitPoint, c: &UnitPoint) -> f64 {
    let (a, b, c) = (a.vec(), b.vec(), c.vec());
    let triple = a.dot(b.cross(c)).abs();
    let denom = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    2.0 * triple.atan2(denom)
}

/// Local east/north frame at a point, used to build synthetic geometry.
#[derive(Debug, Clone, Copy)]
pub struct TangentFrame {
    pub origin: UnitPoint,
    pub east: Vec3,
    pub north: Vec3,
}

impl TangentFrame {
    pub fn at(origin: UnitPoint) -> TangentFrame {
        let p = origin.vec();
        let pole = if p.z.abs() > 0.99 { Vec3::new(1.0, 0.0, 0.0) } else { Vec3::new(0.0, 0.0, 1.0) };
        let east = pole.cross(p).normalized().unwrap_or(Vec3::new(0.0, 1.0, 0.0));
        let north = p.cross(east);
        TangentFrame { origin, east, north }
    }

    /// Maps local coordinates (arc-length units) to the sphere through the
    /// exponential map at the frame origin.
    pub fn point(&self, e: f64, n: f64) -> UnitPoint {
        let r = (e * e + n * n).sqrt();
        if r == 0.0 {
            return self.origin;
        }
        let dir = self.east * (e / r) + self.north * (n / r);
        self.origin.offset(dir, r).unwrap_or(self.origin)
    }
}
