//! Planar primitives: points, convex quadrilaterals, rotations about a pivot,
//! and convex polygon intersection.
//!
//! Angles are degrees, counter-clockwise in the `(x, y)` plane, and are
//! normalized to `[0, 360)`. Quarter turns use exact sine/cosine values so
//! that rotations by multiples of 90° are lossless.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Areas below this are treated as degenerate.
pub const MIN_AREA: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate quadrilateral (area {0:.3e} px²)")]
    DegenerateQuad(f64),
    #[error("quadrilateral is not convex")]
    NonConvex,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

/// Normalize an angle in degrees to `[0, 360)`.
pub fn normalize_degrees(angle: f64) -> f64 {
    let a = angle.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if a >= 360.0 {
        0.0
    } else {
        a
    }
}

/// Fold an angle in degrees to `(-180, 180]`.
pub fn fold_degrees(angle: f64) -> f64 {
    let a = normalize_degrees(angle);
    if a > 180.0 {
        a - 360.0
    } else {
        a
    }
}

/// `(sin, cos)` of an angle in degrees, exact at multiples of 90°.
pub fn sin_cos_degrees(angle: f64) -> (f64, f64) {
    let a = normalize_degrees(angle);
    if a == 0.0 {
        (0.0, 1.0)
    } else if a == 90.0 {
        (1.0, 0.0)
    } else if a == 180.0 {
        (0.0, -1.0)
    } else if a == 270.0 {
        (-1.0, 0.0)
    } else {
        a.to_radians().sin_cos()
    }
}

/// Twice the signed area of a polygon (positive when counter-clockwise).
fn signed_area2(pts: &[Point]) -> f64 {
    let n = pts.len();
    (0..n)
        .map(|i| {
            let a = pts[i];
            let b = pts[(i + 1) % n];
            a.x * b.y - b.x * a.y
        })
        .sum()
}

/// Shoelace area of a simple polygon, independent of orientation.
pub fn polygon_area(pts: &[Point]) -> f64 {
    if pts.len() < 3 {
        return 0.0;
    }
    (signed_area2(pts) * 0.5).abs()
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// A convex quadrilateral with counter-clockwise vertex order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad {
    vertices: [Point; 4],
}

impl Quad {
    /// Builds a quad, reversing clockwise input into counter-clockwise order.
    ///
    /// Rejects non-finite coordinates, near-zero area and non-convex
    /// (including self-intersecting) vertex sequences.
    pub fn new(vertices: [Point; 4]) -> Result<Self, GeometryError> {
        if let Some(p) = vertices.iter().find(|p| !p.is_finite()) {
            return Err(GeometryError::InvalidInput(format!(
                "non-finite vertex ({}, {})",
                p.x, p.y
            )));
        }
        let mut vertices = vertices;
        let area2 = signed_area2(&vertices);
        if area2.abs() * 0.5 < MIN_AREA {
            return Err(GeometryError::DegenerateQuad(area2.abs() * 0.5));
        }
        if area2 < 0.0 {
            vertices.reverse();
        }
        // Every turn must be a left turn (or collinear) for a convex CCW quad.
        // A bow-tie has positive and negative turns, so it is caught here too.
        let scale = vertices
            .iter()
            .map(|p| p.x.abs().max(p.y.abs()))
            .fold(1.0, f64::max);
        let eps = 1e-12 * scale * scale;
        for i in 0..4 {
            let turn = cross(vertices[i], vertices[(i + 1) % 4], vertices[(i + 2) % 4]);
            if turn < -eps {
                return Err(GeometryError::NonConvex);
            }
        }
        Ok(Self { vertices })
    }

    /// Flat `[x1, y1, ..., x4, y4]` coordinate list.
    pub fn from_flat(coords: &[f64]) -> Result<Self, GeometryError> {
        if coords.len() != 8 {
            return Err(GeometryError::InvalidInput(format!(
                "expected 8 coordinates, got {}",
                coords.len()
            )));
        }
        let mut v = [Point::ORIGIN; 4];
        for (i, p) in v.iter_mut().enumerate() {
            *p = Point::new(coords[2 * i], coords[2 * i + 1]);
        }
        Self::new(v)
    }

    /// Axis-aligned rectangle with top-left corner `(x, y)`.
    pub fn rect(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        Self::new([
            Point::new(x, y),
            Point::new(x + w, y),
            Point::new(x + w, y + h),
            Point::new(x, y + h),
        ])
    }

    /// Rectangle of size `w × h` centred on `center`, rotated by `angle` degrees.
    pub fn oriented_rect(center: Point, w: f64, h: f64, angle: f64) -> Result<Self, GeometryError> {
        let (s, c) = sin_cos_degrees(angle);
        let (hw, hh) = (w * 0.5, h * 0.5);
        let corner = |dx: f64, dy: f64| Point::new(center.x + c * dx - s * dy, center.y + s * dx + c * dy);
        Self::new([
            corner(-hw, -hh),
            corner(hw, -hh),
            corner(hw, hh),
            corner(-hw, hh),
        ])
    }

    pub fn vertices(&self) -> &[Point; 4] {
        &self.vertices
    }

    pub fn to_flat(&self) -> [f64; 8] {
        let mut out = [0.0; 8];
        for (i, p) in self.vertices.iter().enumerate() {
            out[2 * i] = p.x;
            out[2 * i + 1] = p.y;
        }
        out
    }

    pub fn area(&self) -> f64 {
        signed_area2(&self.vertices) * 0.5
    }

    pub fn centroid(&self) -> Point {
        let (sx, sy) = self
            .vertices
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        Point::new(sx / 4.0, sy / 4.0)
    }

    /// `(min_x, min_y, max_x, max_y)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.vertices.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(x0, y0, x1, y1), p| (x0.min(p.x), y0.min(p.y), x1.max(p.x), y1.max(p.y)),
        )
    }

    /// Point-in-quad test, boundary inclusive.
    pub fn contains(&self, p: Point) -> bool {
        (0..4).all(|i| cross(self.vertices[i], self.vertices[(i + 1) % 4], p) >= 0.0)
    }

    /// True when both quads have the same vertex cycle (any starting vertex).
    pub fn same_vertices(&self, other: &Quad) -> bool {
        (0..4).any(|shift| (0..4).all(|i| self.vertices[i] == other.vertices[(i + shift) % 4]))
    }
}

impl Serialize for Quad {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.vertices.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Quad {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = <[Point; 4]>::deserialize(d)?;
        Quad::new(v).map_err(serde::de::Error::custom)
    }
}

/// Rotation by `angle` degrees about `pivot`, followed by a translation by
/// `output_offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationTransform {
    pub angle: f64,
    pub pivot: Point,
    pub output_offset: Point,
}

impl RotationTransform {
    pub fn new(angle: f64, pivot: Point, output_offset: Point) -> Result<Self, GeometryError> {
        if !angle.is_finite() || !pivot.is_finite() || !output_offset.is_finite() {
            return Err(GeometryError::InvalidInput("non-finite transform parameter".into()));
        }
        Ok(Self {
            angle: normalize_degrees(angle),
            pivot,
            output_offset,
        })
    }

    pub fn identity() -> Self {
        Self {
            angle: 0.0,
            pivot: Point::ORIGIN,
            output_offset: Point::ORIGIN,
        }
    }
}

/// `pivot + M(angle)·(p − pivot) + output_offset`.
pub fn apply_transform(t: &RotationTransform, p: Point) -> Result<Point, GeometryError> {
    if !p.is_finite() {
        return Err(GeometryError::InvalidInput(format!("non-finite point ({}, {})", p.x, p.y)));
    }
    Ok(apply_unchecked(t, p))
}

fn apply_unchecked(t: &RotationTransform, p: Point) -> Point {
    if t.angle == 0.0 {
        return p.add(t.output_offset);
    }
    let (s, c) = sin_cos_degrees(t.angle);
    let d = p.sub(t.pivot);
    Point::new(c * d.x - s * d.y, s * d.x + c * d.y)
        .add(t.pivot)
        .add(t.output_offset)
}

/// The inverse rotation: pivot moves to where the forward map sends it and
/// the offset is negated.
pub fn invert_transform(t: &RotationTransform) -> RotationTransform {
    RotationTransform {
        angle: normalize_degrees(-t.angle),
        pivot: t.pivot.add(t.output_offset),
        output_offset: Point::new(-t.output_offset.x, -t.output_offset.y),
    }
}

pub fn transform_quad(t: &RotationTransform, q: &Quad) -> Result<Quad, GeometryError> {
    let mut v = [Point::ORIGIN; 4];
    for (out, p) in v.iter_mut().zip(q.vertices.iter()) {
        *out = apply_transform(t, *p)?;
    }
    Quad::new(v)
}

/// Clip `subject` against the half-plane left of the directed edge `a → b`.
fn clip_edge(subject: &[Point], a: Point, b: Point) -> Vec<Point> {
    let inside = |p: Point| cross(a, b, p) >= 0.0;
    let intersect = |s: Point, e: Point| {
        let ds = cross(a, b, s);
        let de = cross(a, b, e);
        let t = ds / (ds - de);
        Point::new(s.x + t * (e.x - s.x), s.y + t * (e.y - s.y))
    };
    let mut out = Vec::with_capacity(subject.len() + 2);
    for i in 0..subject.len() {
        let cur = subject[i];
        let prev = subject[(i + subject.len() - 1) % subject.len()];
        match (inside(prev), inside(cur)) {
            (true, true) => out.push(cur),
            (true, false) => out.push(intersect(prev, cur)),
            (false, true) => {
                out.push(intersect(prev, cur));
                out.push(cur);
            }
            (false, false) => {}
        }
    }
    out
}

fn bounds_disjoint(a: &Quad, b: &Quad) -> bool {
    let (ax0, ay0, ax1, ay1) = a.bounds();
    let (bx0, by0, bx1, by1) = b.bounds();
    ax1 <= bx0 || bx1 <= ax0 || ay1 <= by0 || by1 <= ay0
}

/// Area of the intersection of two convex quads (Sutherland–Hodgman).
pub fn polygon_intersection_area(a: &Quad, b: &Quad) -> f64 {
    if bounds_disjoint(a, b) {
        return 0.0;
    }
    if a.same_vertices(b) {
        return a.area();
    }
    let mut poly: Vec<Point> = a.vertices.to_vec();
    for i in 0..4 {
        if poly.is_empty() {
            return 0.0;
        }
        poly = clip_edge(&poly, b.vertices[i], b.vertices[(i + 1) % 4]);
    }
    polygon_area(&poly).min(a.area()).min(b.area())
}

/// Intersection over union in `[0, 1]`.
pub fn iou(a: &Quad, b: &Quad) -> f64 {
    if a.same_vertices(b) {
        return 1.0;
    }
    let inter = polygon_intersection_area(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}
