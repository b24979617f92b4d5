//! Vectors, planes, 2D lines and convex polygons.
//!
//! Every routine here is a pure function of its inputs.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Length tolerance in meters for coincidence tests.
pub const EPS: f64 = 1e-9;
/// Angle tolerance in degrees.
pub const EPS_ANG: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("zero-length vector")]
    ZeroVector,
    #[error("lines are parallel")]
    Parallel,
    #[error("degenerate plane")]
    DegeneratePlane,
    #[error("degenerate line: the two points coincide")]
    DegenerateLine,
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),
}

/// A point or direction in 3D space, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

pub type Point3 = Vec3;
pub type Vector3 = Vec3;

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm2().sqrt()
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    /// Unit vector in the same direction, or `None` for a zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(self / n)
        } else {
            None
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn lerp(self, o: Vec3, t: f64) -> Vec3 {
        self + (o - self) * t
    }

    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, k: f64) -> Vec3 {
        Vec3::new(self.x / k, self.y / k, self.z / k)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Angle between two vectors in degrees, in `[0, 180]`.
///
/// # Errors
/// Returns [`GeometryError::ZeroVector`] if either vector has zero length.
pub fn angle_between(u: Vector3, v: Vector3) -> Result<f64, GeometryError> {
    let nu = u.norm();
    let nv = v.norm();
    if nu == 0.0 || nv == 0.0 || !nu.is_finite() || !nv.is_finite() {
        return Err(GeometryError::ZeroVector);
    }
    let c = (u.dot(v) / (nu * nv)).clamp(-1.0, 1.0);
    Ok(c.acos().to_degrees())
}

/// Records angles of 180 degrees or more as 0.
pub fn clamp_visibility_angle(a: f64) -> f64 {
    if a < 180.0 {
        a
    } else {
        0.0
    }
}

/// Counter-clockwise angle in degrees, in `[0, 360)`, from `from` to `to` in a 2D plane.
pub fn oriented_angle_2d(from: [f64; 2], to: [f64; 2]) -> Result<f64, GeometryError> {
    let nf = from[0].hypot(from[1]);
    let nt = to[0].hypot(to[1]);
    if nf == 0.0 || nt == 0.0 {
        return Err(GeometryError::ZeroVector);
    }
    let cross = from[0] * to[1] - from[1] * to[0];
    let dot = from[0] * to[0] + from[1] * to[1];
    let mut a = cross.atan2(dot).to_degrees();
    if a < 0.0 {
        a += 360.0;
    }
    if a >= 360.0 {
        a -= 360.0;
    }
    Ok(a)
}

/// A line in a 2D working plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Line2 {
    /// `y = m x + n`
    Sloped { m: f64, n: f64 },
    /// `x = c`
    Vertical { x: f64 },
}

impl Line2 {
    /// Line through two distinct points.
    pub fn through(p: [f64; 2], q: [f64; 2]) -> Result<Line2, GeometryError> {
        let dx = q[0] - p[0];
        let dy = q[1] - p[1];
        let scale = 1.0_f64.max(p[0].abs()).max(q[0].abs());
        if dx.abs() <= EPS * scale {
            if dy.abs() <= EPS * scale {
                return Err(GeometryError::DegenerateLine);
            }
            return Ok(Line2::Vertical { x: 0.5 * (p[0] + q[0]) });
        }
        let m = dy / dx;
        Ok(Line2::Sloped { m, n: p[1] - m * p[0] })
    }

    /// Signed residual of a point against the line equation.
    pub fn residual(&self, p: [f64; 2]) -> f64 {
        match *self {
            Line2::Sloped { m, n } => p[1] - (m * p[0] + n),
            Line2::Vertical { x } => p[0] - x,
        }
    }
}

fn slopes_parallel(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * 1.0_f64.max(a.abs()).max(b.abs())
}

/// Intersection point of a visibility line with an aim-face line.
///
/// # Errors
/// Returns [`GeometryError::Parallel`] if the lines do not cross.
pub fn line_intersection_2d(visible: Line2, aim: Line2) -> Result<[f64; 2], GeometryError> {
    match (visible, aim) {
        (Line2::Sloped { m: mv, n: nv }, Line2::Sloped { m: ma, n: na }) => {
            if slopes_parallel(mv, ma) {
                return Err(GeometryError::Parallel);
            }
            let den = ma - mv;
            Ok([(nv - na) / den, (ma * nv - mv * na) / den])
        }
        (Line2::Vertical { x }, Line2::Sloped { m, n })
        | (Line2::Sloped { m, n }, Line2::Vertical { x }) => Ok([x, m * x + n]),
        (Line2::Vertical { .. }, Line2::Vertical { .. }) => Err(GeometryError::Parallel),
    }
}

/// An oriented plane `normal · p = offset` with unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: Vector3,
    pub offset: f64,
}

impl Plane {
    /// Plane through `point` with the given (not necessarily unit) normal.
    pub fn from_point_normal(point: Point3, normal: Vector3) -> Result<Plane, GeometryError> {
        let n = normal.normalized().ok_or(GeometryError::DegeneratePlane)?;
        Ok(Plane { normal: n, offset: n.dot(point) })
    }

    /// Positive in front of the plane (the side the normal points to).
    pub fn signed_distance(&self, p: Point3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    pub fn project(&self, p: Point3) -> Point3 {
        p - self.normal * self.signed_distance(p)
    }
}

/// Reflection of `p` across a plane.
pub fn mirror_point(p: Point3, plane: &Plane) -> Point3 {
    p - plane.normal * (2.0 * plane.signed_distance(p))
}

/// Coordinate plane used as a 2D working plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlaneTag {
    XY,
    YZ,
    XZ,
}

impl PlaneTag {
    /// Drops one coordinate.
    pub fn project(self, p: Point3) -> [f64; 2] {
        match self {
            PlaneTag::XY => [p.x, p.y],
            PlaneTag::YZ => [p.y, p.z],
            PlaneTag::XZ => [p.x, p.z],
        }
    }

    /// The coordinate removed by [`PlaneTag::project`].
    pub fn dropped(self, p: Point3) -> f64 {
        match self {
            PlaneTag::XY => p.z,
            PlaneTag::YZ => p.x,
            PlaneTag::XZ => p.y,
        }
    }

    /// Inverse of `project` given the dropped coordinate.
    pub fn lift(self, q: [f64; 2], dropped: f64) -> Point3 {
        match self {
            PlaneTag::XY => Vec3::new(q[0], q[1], dropped),
            PlaneTag::YZ => Vec3::new(dropped, q[0], q[1]),
            PlaneTag::XZ => Vec3::new(q[0], dropped, q[1]),
        }
    }

    pub fn project_vec(self, v: Vector3) -> [f64; 2] {
        self.project(v)
    }
}

/// Planar convex polygon with a local 2D frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Point3>,
    plane: Plane,
    origin: Point3,
    u: Vector3,
    v: Vector3,
    local: Vec<[f64; 2]>,
}

impl ConvexPolygon {
    /// Builds a polygon whose normal follows the right-hand rule on the vertex order.
    pub fn new(vertices: Vec<Point3>) -> Result<ConvexPolygon, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::InvalidPolygon("fewer than 3 vertices".into()));
        }
        if vertices.iter().any(|p| !p.is_finite()) {
            return Err(GeometryError::InvalidPolygon("non-finite coordinate".into()));
        }
        // Newell normal
        let mut n = Vec3::ZERO;
        for i in 0..vertices.len() {
            let a = vertices[i];
            let b = vertices[(i + 1) % vertices.len()];
            n.x += (a.y - b.y) * (a.z + b.z);
            n.y += (a.z - b.z) * (a.x + b.x);
            n.z += (a.x - b.x) * (a.y + b.y);
        }
        let normal = n
            .normalized()
            .ok_or_else(|| GeometryError::InvalidPolygon("zero area".into()))?;
        let centroid = vertices.iter().fold(Vec3::ZERO, |s, &p| s + p) / vertices.len() as f64;
        let plane = Plane { normal, offset: normal.dot(centroid) };
        let scale = vertices.iter().map(|p| p.max_abs()).fold(1.0, f64::max);
        for p in &vertices {
            if plane.signed_distance(*p).abs() > EPS * scale {
                return Err(GeometryError::InvalidPolygon("vertices are not coplanar".into()));
            }
        }
        let poly = Self::with_plane(vertices, plane);
        let m = poly.local.len();
        for i in 0..m {
            let a = poly.local[i];
            let b = poly.local[(i + 1) % m];
            let c = poly.local[(i + 2) % m];
            let e1 = [b[0] - a[0], b[1] - a[1]];
            let e2 = [c[0] - b[0], c[1] - b[1]];
            let l1 = e1[0].hypot(e1[1]);
            if l1 <= EPS {
                return Err(GeometryError::InvalidPolygon("repeated vertex".into()));
            }
            let cross = e1[0] * e2[1] - e1[1] * e2[0];
            if cross < -EPS * scale {
                return Err(GeometryError::InvalidPolygon("polygon is not convex".into()));
            }
        }
        Ok(poly)
    }

    /// Builds a polygon on a known plane without validation.
    /// Vertices must be convex and wound counter-clockwise about the plane normal.
    pub fn with_plane(vertices: Vec<Point3>, plane: Plane) -> ConvexPolygon {
        let origin = vertices[0];
        let n = plane.normal;
        // pick the world axis least aligned with the normal
        let helper = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
            Vec3::new(1.0, 0.0, 0.0)
        } else if n.y.abs() <= n.z.abs() {
            Vec3::new(0.0, 1.0, 0.0)
        } else {
            Vec3::new(0.0, 0.0, 1.0)
        };
        let u = n.cross(helper).normalized().unwrap_or(Vec3::new(1.0, 0.0, 0.0));
        let v = n.cross(u);
        let local = vertices
            .iter()
            .map(|&p| {
                let d = p - origin;
                [d.dot(u), d.dot(v)]
            })
            .collect();
        ConvexPolygon { vertices, plane, origin, u, v, local }
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn plane(&self) -> &Plane {
        &self.plane
    }

    pub fn normal(&self) -> Vector3 {
        self.plane.normal
    }

    pub fn local_vertices(&self) -> &[[f64; 2]] {
        &self.local
    }

    pub fn centroid(&self) -> Point3 {
        self.vertices.iter().fold(Vec3::ZERO, |s, &p| s + p) / self.vertices.len() as f64
    }

    pub fn area(&self) -> f64 {
        polygon_area_2d(&self.local)
    }

    /// Local 2D coordinates of a point (projected onto the plane).
    pub fn to_local(&self, p: Point3) -> [f64; 2] {
        let d = p - self.origin;
        [d.dot(self.u), d.dot(self.v)]
    }

    /// 3D point of local coordinates.
    pub fn from_local(&self, q: [f64; 2]) -> Point3 {
        self.origin + self.u * q[0] + self.v * q[1]
    }

    /// Closed containment of a point assumed to lie on the plane, expanded by `tol` meters.
    pub fn contains_on_plane(&self, p: Point3, tol: f64) -> bool {
        contains_convex_2d(&self.local, self.to_local(p), tol)
    }

    /// Same polygon clipped to `plane.signed_distance(p) >= min_dist`.
    pub fn clip(&self, plane: &Plane, min_dist: f64) -> Option<ConvexPolygon> {
        let pts = clip_polygon_3d(&self.vertices, plane, min_dist);
        if pts.len() < 3 {
            return None;
        }
        Some(ConvexPolygon::with_plane(pts, self.plane))
    }

    /// Polygon from local 2D points on this polygon's plane.
    pub fn from_local_polygon(&self, pts: &[[f64; 2]]) -> ConvexPolygon {
        let verts = pts.iter().map(|&q| self.from_local(q)).collect();
        ConvexPolygon::with_plane(verts, self.plane)
    }
}

/// Crossing point of the open segment `(a, b)` with a closed convex polygon.
///
/// The endpoints must lie strictly on opposite sides of the polygon plane,
/// so segments that merely touch the plane at an endpoint are not reported.
pub fn segment_polygon_intersection(a: Point3, b: Point3, poly: &ConvexPolygon) -> Option<Point3> {
    let da = poly.plane.signed_distance(a);
    let db = poly.plane.signed_distance(b);
    if !((da > EPS && db < -EPS) || (da < -EPS && db > EPS)) {
        return None;
    }
    let t = da / (da - db);
    let p = a.lerp(b, t);
    if poly.contains_on_plane(p, EPS) {
        Some(p)
    } else {
        None
    }
}

/// Sutherland-Hodgman clip of a planar loop against one half-space.
pub fn clip_polygon_3d(pts: &[Point3], plane: &Plane, min_dist: f64) -> Vec<Point3> {
    let n = pts.len();
    let mut out = Vec::with_capacity(n + 2);
    if n == 0 {
        return out;
    }
    let d: Vec<f64> = pts.iter().map(|&p| plane.signed_distance(p) - min_dist).collect();
    for i in 0..n {
        let j = (i + 1) % n;
        let (pi, pj, di, dj) = (pts[i], pts[j], d[i], d[j]);
        if di >= 0.0 {
            out.push(pi);
            if dj < 0.0 {
                out.push(pi.lerp(pj, di / (di - dj)));
            }
        } else if dj >= 0.0 {
            out.push(pi.lerp(pj, di / (di - dj)));
        }
    }
    dedup_loop_3d(out)
}

fn dedup_loop_3d(mut pts: Vec<Point3>) -> Vec<Point3> {
    pts.dedup_by(|a, b| a.distance(*b) <= 1e-12);
    while pts.len() > 1 && pts[0].distance(pts[pts.len() - 1]) <= 1e-12 {
        pts.pop();
    }
    pts
}

/// Signed area of a 2D loop (positive for counter-clockwise).
pub fn polygon_area_2d(pts: &[[f64; 2]]) -> f64 {
    let n = pts.len();
    let mut s = 0.0;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        s += a[0] * b[1] - a[1] * b[0];
    }
    0.5 * s
}

#[inline]
fn norm2d(x: f64, y: f64) -> f64 {
    (x * x + y * y).sqrt()
}

fn cross2(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Closed containment in a counter-clockwise convex 2D polygon, expanded by `tol`.
pub fn contains_convex_2d(poly: &[[f64; 2]], p: [f64; 2], tol: f64) -> bool {
    let n = poly.len();
    if n == 0 {
        return false;
    }
    if n == 1 {
        return norm2d(p[0] - poly[0][0], p[1] - poly[0][1]) <= tol;
    }
    if n == 2 {
        return point_segment_distance_2d(p, poly[0], poly[1]) <= tol;
    }
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let len = norm2d(b[0] - a[0], b[1] - a[1]);
        if len == 0.0 {
            continue;
        }
        if cross2(a, b, p) / len < -tol {
            return false;
        }
    }
    true
}

pub fn point_segment_distance_2d(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let l2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if l2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / l2).clamp(0.0, 1.0)
    };
    norm2d(p[0] - a[0] - t * ab[0], p[1] - a[1] - t * ab[1])
}

/// Closest point to `p` on segment `[a, b]` and its parameter.
pub fn closest_point_on_segment(p: Point3, a: Point3, b: Point3) -> (Point3, f64) {
    let ab = b - a;
    let l2 = ab.norm2();
    let t = if l2 == 0.0 { 0.0 } else { ((p - a).dot(ab) / l2).clamp(0.0, 1.0) };
    (a + ab * t, t)
}

/// Convex hull (counter-clockwise, no collinear points) by monotone chain.
pub fn convex_hull_2d(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.iter().copied().filter(|p| p[0].is_finite() && p[1].is_finite()).collect();
    pts.sort_unstable_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup_by(|a, b| (a[0] - b[0]).abs() <= 1e-12 && (a[1] - b[1]).abs() <= 1e-12);
    if pts.len() <= 2 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross2(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross2(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Whether two convex 2D point sets (hulls, segments or points) intersect, with slack `tol`.
pub fn convex_sets_intersect_2d(a: &[[f64; 2]], b: &[[f64; 2]], tol: f64) -> bool {
    if a.is_empty() || b.is_empty() {
        return false;
    }
    let mut axes: Vec<[f64; 2]> = Vec::new();
    for poly in [a, b] {
        let n = poly.len();
        if n == 1 {
            continue;
        }
        let edges = if n == 2 { 1 } else { n };
        for i in 0..edges {
            let p = poly[i];
            let q = poly[(i + 1) % n];
            let e = [q[0] - p[0], q[1] - p[1]];
            let l = norm2d(e[0], e[1]);
            if l > 0.0 {
                axes.push([-e[1] / l, e[0] / l]);
                if n == 2 {
                    axes.push([e[0] / l, e[1] / l]);
                }
            }
        }
    }
    // separation between two points or point and segment needs the joining direction
    if a.len() <= 2 || b.len() <= 2 {
        let (pa, pb) = closest_pair_hint(a, b);
        let d = [pb[0] - pa[0], pb[1] - pa[1]];
        let l = norm2d(d[0], d[1]);
        if l > 0.0 {
            axes.push([d[0] / l, d[1] / l]);
        }
    }
    if axes.is_empty() {
        return norm2d(a[0][0] - b[0][0], a[0][1] - b[0][1]) <= tol;
    }
    for ax in axes {
        let (amin, amax) = project_range(a, ax);
        let (bmin, bmax) = project_range(b, ax);
        if amax < bmin - tol || bmax < amin - tol {
            return false;
        }
    }
    true
}

fn closest_pair_hint(a: &[[f64; 2]], b: &[[f64; 2]]) -> ([f64; 2], [f64; 2]) {
    let ca = centroid_2d(a);
    let cb = centroid_2d(b);
    (ca, cb)
}

fn centroid_2d(p: &[[f64; 2]]) -> [f64; 2] {
    let n = p.len() as f64;
    let s = p.iter().fold([0.0, 0.0], |s, q| [s[0] + q[0], s[1] + q[1]]);
    [s[0] / n, s[1] / n]
}

fn project_range(p: &[[f64; 2]], ax: [f64; 2]) -> (f64, f64) {
    p.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), q| {
        let d = q[0] * ax[0] + q[1] * ax[1];
        (lo.min(d), hi.max(d))
    })
}

/// Intersection of a convex 2D polygon with a counter-clockwise convex clip polygon.
pub fn clip_convex_2d(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out: Vec<[f64; 2]> = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if out.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % n];
        let len = norm2d(b[0] - a[0], b[1] - a[1]);
        if len == 0.0 {
            continue;
        }
        let input = std::mem::take(&mut out);
        let m = input.len();
        let d: Vec<f64> = input.iter().map(|&p| cross2(a, b, p) / len).collect();
        for k in 0..m {
            let j = (k + 1) % m;
            let (pk, pj, dk, dj) = (input[k], input[j], d[k], d[j]);
            if dk >= 0.0 {
                out.push(pk);
                if dj < 0.0 {
                    let t = dk / (dk - dj);
                    out.push([pk[0] + t * (pj[0] - pk[0]), pk[1] + t * (pj[1] - pk[1])]);
                }
            } else if dj >= 0.0 {
                let t = dk / (dk - dj);
                out.push([pk[0] + t * (pj[0] - pk[0]), pk[1] + t * (pj[1] - pk[1])]);
            }
        }
    }
    convex_hull_2d(&out)
}

/// Moves every edge of a counter-clockwise convex polygon inward by `d`.
/// Returns an empty vector when the polygon vanishes.
pub fn shrink_convex_2d(poly: &[[f64; 2]], d: f64) -> Vec<[f64; 2]> {
    let n = poly.len();
    if n < 3 || polygon_area_2d(poly) <= 0.0 {
        return Vec::new();
    }
    let mut out = poly.to_vec();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let e = [b[0] - a[0], b[1] - a[1]];
        let l = norm2d(e[0], e[1]);
        if l == 0.0 {
            continue;
        }
        // keep points at least `d` to the left of a->b
        let side = |p: [f64; 2]| (e[0] * (p[1] - a[1]) - e[1] * (p[0] - a[0])) / l - d;
        let mut next = Vec::with_capacity(out.len() + 1);
        for k in 0..out.len() {
            let p = out[k];
            let q = out[(k + 1) % out.len()];
            let (sp, sq) = (side(p), side(q));
            if sp >= 0.0 {
                next.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) {
                let t = sp / (sp - sq);
                next.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
        out = next;
        if out.len() < 3 {
            return Vec::new();
        }
    }
    if polygon_area_2d(&out) <= 0.0 {
        Vec::new()
    } else {
        out
    }
}

/// Points of a convex polygon's boundary that lie outside the interior of a convex hole,
/// as the convex hull of those boundary pieces. Empty when the polygon is swallowed.
pub fn hull_of_difference_2d(poly: &[[f64; 2]], hole: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = poly.len();
    let m = hole.len();
    if m < 3 {
        return poly.to_vec();
    }
    let mut keep: Vec<[f64; 2]> = Vec::new();
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        // parameter interval of [p,q] lying strictly inside the hole
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        let mut empty = false;
        for k in 0..m {
            let a = hole[k];
            let b = hole[(k + 1) % m];
            let len = norm2d(b[0] - a[0], b[1] - a[1]);
            if len == 0.0 {
                continue;
            }
            let dp = cross2(a, b, p) / len;
            let dq = cross2(a, b, q) / len;
            // inside means d > 0
            if dp <= 0.0 && dq <= 0.0 {
                empty = true;
                break;
            }
            if dp > 0.0 && dq > 0.0 {
                continue;
            }
            let t = dp / (dp - dq);
            if dp <= 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
        }
        if empty || t0 >= t1 {
            keep.push(p);
            keep.push(q);
            continue;
        }
        let at = |t: f64| [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])];
        if t0 > 0.0 {
            keep.push(p);
            keep.push(at(t0));
        }
        if t1 < 1.0 {
            keep.push(at(t1));
            keep.push(q);
        }
    }
    convex_hull_2d(&keep)
}
