//! Source-dependent visibility: illuminated regions, per-point tables, trajectory tables
//! and coherence times.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    clamp_visibility_angle, clip_polygon_3d, contains_convex_2d, closest_point_on_segment, convex_hull_2d, convex_sets_intersect_2d,
    hull_of_difference_2d, line_intersection_2d, mirror_point, oriented_angle_2d, polygon_area_2d, shrink_convex_2d,
    clip_convex_2d, Line2, Plane, PlaneTag, Point3, EPS,
};
use crate::scene::{BuildingId, EdgeId, Face, FaceId, Orientation, Scene, Trajectory};
use crate::vismatrix::{InterVisEntry, InterVisMatrix, ADMIT_TOL};

/// Shadows are shrunk by this much before they clip a face.
const SHADOW_TOL: f64 = 1e-6;
/// Beams whose footprint on the next face is smaller than this, in square meters, are dropped.
const MIN_FOOTPRINT: f64 = 1e-9;
/// Sampling step along trajectories, in meters.
pub const SAMPLE_STEP: f64 = 0.5;
/// Bisection tolerance for visibility boundaries, in meters.
pub const BOUNDARY_TOL: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum VisError {
    #[error("source lies on the plane of face {0}")]
    DegenerateSource(String),
    #[error("plane mismatch: region in {region:?}, entry in {entry:?}")]
    PlaneMismatch { region: PlaneTag, entry: PlaneTag },
    #[error("entry reference face differs from the region face")]
    FaceMismatch,
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("non-positive speed on a coherence segment")]
    ZeroSpeed,
}

/// Portion of a face lit directly by a source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlluminatedRegion {
    pub face: FaceId,
    /// Face name, primed when blockers clip the face.
    pub name: String,
    pub source: Point3,
    /// Lit polygon in the face's local frame.
    pub lit: Vec<[f64; 2]>,
    pub clipped: bool,
    /// Faces whose shadows clip the region.
    pub blockers: Vec<FaceId>,
    pub plane: PlaneTag,
    /// Working-plane endpoints of the lit part of the face.
    pub sub_segment: [[f64; 2]; 2],
    /// Angle at the first face endpoint from the face toward the source.
    pub alpha: f64,
    /// Angle at the second face endpoint from the face toward the source.
    pub beta: f64,
    /// Direction along the face the angles are measured from, at the first endpoint.
    pub reference: [f64; 2],
    /// New boundary points introduced by blockers, on the working plane.
    pub clip_points: Vec<[f64; 2]>,
}

impl IlluminatedRegion {
    /// Lit polygon vertices in 3D.
    pub fn polygon(&self, scene: &Scene) -> Vec<Point3> {
        let poly = &scene.faces[self.face].polygon;
        self.lit.iter().map(|&q| poly.from_local(q)).collect()
    }

    /// Same region with angles measured in another working plane.
    pub fn in_plane(&self, scene: &Scene, plane: PlaneTag) -> IlluminatedRegion {
        let mut r = self.clone();
        fill_angles(scene, &mut r, plane, &blocker_corners(scene, &self.blockers));
        r
    }
}

/// Default working plane of a face.
pub fn default_plane(face: &Face) -> PlaneTag {
    match face.orientation {
        Orientation::Horizontal => PlaneTag::XZ,
        _ => PlaneTag::XY,
    }
}

fn inverse_plane(p: &Plane) -> Plane {
    Plane { normal: -p.normal, offset: -p.offset }
}

/// Central projection of `x` from `from` onto `plane`.
fn project_from(from: Point3, x: Point3, plane: &Plane) -> Point3 {
    let d0 = plane.signed_distance(from);
    let d1 = plane.signed_distance(x);
    from + (x - from) * (d0 / (d0 - d1))
}

/// Lit part of `face` as seen from `source`, with the faces that clip it.
fn lit_polygon(source: Point3, face: &Face, scene: &Scene) -> Option<(Vec<[f64; 2]>, Vec<FaceId>)> {
    let plane = *face.polygon.plane();
    let d0 = plane.signed_distance(source);
    let mut lit: Vec<[f64; 2]> = face.polygon.local_vertices().to_vec();
    let full_area = polygon_area_2d(&lit);
    let near = inverse_plane(&plane);
    // side planes of the pyramid from the source over the face, normals pointing inward
    let fv = face.vertices();
    let centroid = face.polygon.centroid();
    let sides: Vec<(Point3, f64)> = (0..fv.len())
        .map(|i| {
            let n = (fv[i] - source).cross(fv[(i + 1) % fv.len()] - source);
            let s = if n.dot(centroid - source) >= 0.0 { 1.0 } else { -1.0 };
            let n = n * s;
            (n, n.norm() * EPS)
        })
        .collect();
    let mut blockers = Vec::new();
    for b in &scene.faces {
        if b.id == face.id || b.signed_distance(source).abs() <= 10.0 * EPS {
            continue;
        }
        let bv = b.vertices();
        if sides.iter().any(|&(n, tol)| bv.iter().all(|&p| n.dot(p - source) < -tol)) {
            continue;
        }
        if bv.iter().all(|&p| plane.signed_distance(p) <= 0.0) || bv.iter().all(|&p| plane.signed_distance(p) >= d0) {
            continue;
        }
        let part = clip_polygon_3d(b.vertices(), &plane, 0.0);
        let part = clip_polygon_3d(&part, &near, -d0 * (1.0 - 1e-9));
        if part.len() < 3 {
            continue;
        }
        let shadow: Vec<[f64; 2]> =
            part.iter().map(|&x| face.polygon.to_local(project_from(source, x, &plane))).collect();
        let hull = convex_hull_2d(&shadow);
        // the hull of the remainder changes only when the shadow swallows a lit vertex
        if hull.len() < 3 || !lit.iter().any(|&v| contains_convex_2d(&hull, v, -SHADOW_TOL)) {
            continue;
        }
        let shadow = shrink_convex_2d(&hull, SHADOW_TOL);
        if shadow.len() < 3 {
            continue;
        }
        let before = polygon_area_2d(&lit);
        lit = hull_of_difference_2d(&lit, &shadow);
        if lit.len() < 3 || polygon_area_2d(&lit) <= 1e-12 * full_area.max(1.0) {
            return None;
        }
        if polygon_area_2d(&lit) < before - 1e-12 * full_area.max(1.0) {
            blockers.push(b.id);
        }
    }
    Some((lit, blockers))
}

/// Working-plane endpoints of a 3D point set along the face's working direction.
fn extreme_pair(points: &[Point3], face: &Face, plane: PlaneTag) -> [[f64; 2]; 2] {
    let n2 = plane.project_vec(face.normal());
    let len = n2[0].hypot(n2[1]);
    let n2 = if len > 0.0 { [n2[0] / len, n2[1] / len] } else { [0.0, 1.0] };
    let t = [n2[1], -n2[0]];
    let mut lo = (f64::INFINITY, [0.0; 2]);
    let mut hi = (f64::NEG_INFINITY, [0.0; 2]);
    for &p in points {
        let q = plane.project(p);
        let s = q[0] * t[0] + q[1] * t[1];
        if s < lo.0 {
            lo = (s, q);
        }
        if s > hi.0 {
            hi = (s, q);
        }
    }
    [lo.1, hi.1]
}

fn fill_angles(scene: &Scene, r: &mut IlluminatedRegion, plane: PlaneTag, blocker_points: &[Point3]) {
    let face = &scene.faces[r.face];
    let [e0, e1] = extreme_pair(face.vertices(), face, plane);
    let lit3 = r.polygon(scene);
    let sub = extreme_pair(&lit3, face, plane);
    let o = plane.project(r.source);
    let ref0 = [e1[0] - e0[0], e1[1] - e0[1]];
    let ref1 = [e0[0] - e1[0], e0[1] - e1[1]];
    let to0 = [o[0] - e0[0], o[1] - e0[1]];
    let to1 = [o[0] - e1[0], o[1] - e1[1]];
    r.plane = plane;
    r.reference = ref0;
    r.alpha = clamp_visibility_angle(oriented_angle_2d(ref0, to0).unwrap_or(0.0));
    r.beta = clamp_visibility_angle(oriented_angle_2d(to1, ref1).unwrap_or(0.0));
    r.sub_segment = sub;
    r.clip_points.clear();
    if let Ok(face_line) = Line2::through(e0, e1) {
        for (k, q) in sub.iter().enumerate() {
            let orig = if k == 0 { e0 } else { e1 };
            if (q[0] - orig[0]).hypot(q[1] - orig[1]) <= 1e-6 {
                continue;
            }
            // the visible angle line passes through the blocker corner casting this boundary
            let corner = blocker_points
                .iter()
                .map(|&v| (v, plane.project(v)))
                .filter(|(_, v2)| (v2[0] - o[0]).hypot(v2[1] - o[1]) > EPS)
                .min_by(|a, b| {
                    line_gap(o, a.1, *q).total_cmp(&line_gap(o, b.1, *q))
                });
            let point = corner
                .and_then(|(_, v2)| Line2::through(o, v2).ok())
                .and_then(|l| line_intersection_2d(l, face_line).ok())
                .unwrap_or(*q);
            r.clip_points.push(point);
        }
    }
}

fn blocker_corners(scene: &Scene, blockers: &[FaceId]) -> Vec<Point3> {
    blockers.iter().flat_map(|&b| scene.faces[b].vertices().to_vec()).collect()
}

/// Distance of `q` from the line through `o` and `v`.
fn line_gap(o: [f64; 2], v: [f64; 2], q: [f64; 2]) -> f64 {
    let d = [v[0] - o[0], v[1] - o[1]];
    let l = d[0].hypot(d[1]);
    ((q[0] - o[0]) * d[1] - (q[1] - o[1]) * d[0]).abs() / l
}

/// Illuminated region of `face` for a point source.
///
/// # Errors
/// Returns [`VisError::DegenerateSource`] when the source lies on the face plane.
pub fn illuminated_region(source: Point3, face: &Face, scene: &Scene) -> Result<Option<IlluminatedRegion>, VisError> {
    let d0 = face.signed_distance(source);
    if d0.abs() <= EPS {
        return Err(VisError::DegenerateSource(face.name.clone()));
    }
    if d0 < 0.0 {
        return Ok(None);
    }
    let Some((lit, blockers)) = lit_polygon(source, face, scene) else { return Ok(None) };
    let clipped = !blockers.is_empty();
    let mut r = IlluminatedRegion {
        face: face.id,
        name: if clipped { format!("{}'", face.name) } else { face.name.clone() },
        source,
        lit,
        clipped,
        blockers,
        plane: default_plane(face),
        sub_segment: [[0.0; 2]; 2],
        alpha: 0.0,
        beta: 0.0,
        reference: [0.0; 2],
        clip_points: Vec::new(),
    };
    let corners = blocker_corners(scene, &r.blockers);
    fill_angles(scene, &mut r, default_plane(face), &corners);
    Ok(Some(r))
}

// ---- beams ----

/// Rays from an image point through a convex aperture on a face.
#[derive(Debug, Clone, PartialEq)]
pub struct Beam {
    pub face: FaceId,
    /// Image of the source across every face of the chain so far.
    pub image: Point3,
    /// Aperture in the face's local frame.
    pub aperture: Vec<[f64; 2]>,
}

/// Result of pushing a beam onto the next face.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamStep {
    /// Sub-test along the face's horizontal direction.
    pub horizontal: bool,
    /// Sub-test along the face's vertical direction.
    pub vertical: bool,
    /// Exact overlap of the aim's crossing set with the aperture.
    pub admitted: bool,
    /// Reachable part of the aim face, in its local frame.
    pub next: Option<Beam>,
}

/// Two in-plane test axes of a face: horizontal and vertical, or x and y for horizontal faces.
fn face_axes(face: &Face) -> [[f64; 2]; 2] {
    let n = face.normal();
    let poly = &face.polygon;
    let local_dir = |d: Point3| {
        let o = poly.from_local([0.0, 0.0]);
        let p = poly.to_local(o + d);
        let l = p[0].hypot(p[1]);
        if l > 0.0 { [p[0] / l, p[1] / l] } else { [1.0, 0.0] }
    };
    match face.orientation {
        Orientation::Horizontal => [local_dir(Point3::new(1.0, 0.0, 0.0)), local_dir(Point3::new(0.0, 1.0, 0.0))],
        _ => {
            let h = Point3::new(-n.y, n.x, 0.0);
            let h = if h.norm() > 1e-12 { h } else { Point3::new(1.0, 0.0, 0.0) };
            let v = n.cross(h);
            [local_dir(h), local_dir(v)]
        }
    }
}

fn overlap_on(a: &[[f64; 2]], b: &[[f64; 2]], ax: [f64; 2], tol: f64) -> bool {
    let range = |p: &[[f64; 2]]| {
        p.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), q| {
            let d = q[0] * ax[0] + q[1] * ax[1];
            (lo.min(d), hi.max(d))
        })
    };
    let (a0, a1) = range(a);
    let (b0, b1) = range(b);
    a1 >= b0 - tol && b1 >= a0 - tol
}

/// Aperture corners of a beam in 3D with the inward unit normals of its side planes.
struct Frustum {
    corners: Vec<Point3>,
    sides: Vec<Point3>,
}

impl Frustum {
    fn of(scene: &Scene, beam: &Beam) -> Frustum {
        let poly = &scene.faces[beam.face].polygon;
        let corners: Vec<Point3> = beam.aperture.iter().map(|&q| poly.from_local(q)).collect();
        let n = corners.len();
        let mut sides = Vec::with_capacity(n);
        if n >= 3 {
            let center = corners.iter().fold(Point3::ZERO, |acc, &p| acc + p) * (1.0 / n as f64);
            for i in 0..n {
                let normal = (corners[i] - beam.image).cross(corners[(i + 1) % n] - beam.image);
                let len = normal.norm();
                if len <= 1e-12 {
                    continue;
                }
                let normal = if normal.dot(center - beam.image) >= 0.0 { normal } else { -normal };
                sides.push(normal * (1.0 / len));
            }
        }
        Frustum { corners, sides }
    }

    /// Whether every point lies clearly outside one side plane.
    fn excludes(&self, apex: Point3, points: &[Point3]) -> bool {
        const SLACK: f64 = 1e-6;
        self.sides.iter().any(|&n| points.iter().all(|&p| n.dot(p - apex) < -SLACK))
    }
}

/// Pushes `beam` onto `aim`. The sub-test flags are false when the aim lies outside the beam.
pub fn beam_step(scene: &Scene, beam: &Beam, aim: FaceId) -> BeamStep {
    beam_step_in(scene, beam, &Frustum::of(scene, beam), aim)
}

fn beam_step_in(scene: &Scene, beam: &Beam, frustum: &Frustum, aim: FaceId) -> BeamStep {
    let reject = BeamStep { horizontal: false, vertical: false, admitted: false, next: None };
    let rf = &scene.faces[beam.face];
    let af = &scene.faces[aim];
    let rp = rf.polygon.plane();
    let ap = *af.polygon.plane();
    let di = ap.signed_distance(beam.image);
    if di <= EPS {
        return reject;
    }
    if frustum.excludes(beam.image, af.vertices()) {
        return reject;
    }
    let ap3 = &frustum.corners;
    // crossing set of rays from the image to the aim, on the reference plane
    let dst = clip_polygon_3d(af.vertices(), rp, 0.0);
    if dst.is_empty() {
        return reject;
    }
    let dim = rp.signed_distance(beam.image);
    let crossings: Vec<[f64; 2]> = dst
        .iter()
        .map(|&q| {
            let dq = rp.signed_distance(q);
            let t = -dim / (dq - dim);
            rf.polygon.to_local(beam.image.lerp(q, t))
        })
        .collect();
    let axes = face_axes(rf);
    let horizontal = overlap_on(&crossings, &beam.aperture, axes[0], ADMIT_TOL);
    let vertical = overlap_on(&crossings, &beam.aperture, axes[1], ADMIT_TOL);
    let admitted =
        horizontal && vertical && convex_sets_intersect_2d(&convex_hull_2d(&crossings), &beam.aperture, ADMIT_TOL);
    if !admitted {
        return BeamStep { horizontal, vertical, admitted, next: None };
    }
    // reachable part of the aim
    let front =
        if ap3.iter().all(|&a| ap.signed_distance(a) >= 0.0) { ap3.clone() } else { clip_polygon_3d(ap3, &ap, 0.0) };
    if front.is_empty() {
        return BeamStep { horizontal, vertical, admitted: false, next: None };
    }
    let scale = 1.0 + di.abs();
    let aim_local = af.polygon.local_vertices();
    let footprint: Vec<[f64; 2]> = if front.iter().all(|&a| ap.signed_distance(a) < di - 1e-9 * scale) {
        let proj: Vec<[f64; 2]> =
            front.iter().map(|&a| af.polygon.to_local(project_from(beam.image, a, &ap))).collect();
        let hull = convex_hull_2d(&proj);
        if hull.len() >= 3 {
            clip_convex_2d(aim_local, &hull)
        } else if convex_sets_intersect_2d(&hull, aim_local, ADMIT_TOL) {
            hull
        } else {
            Vec::new()
        }
    } else {
        aim_local.to_vec()
    };
    // keep the part of the aim in front of the reference face
    let footprint3: Vec<Point3> = footprint.iter().map(|&q| af.polygon.from_local(q)).collect();
    let aperture = if footprint3.iter().all(|&p| rp.signed_distance(p) >= 0.0) {
        footprint
    } else {
        let kept = if footprint3.len() >= 3 { clip_polygon_3d(&footprint3, rp, 0.0) } else { Vec::new() };
        convex_hull_2d(&kept.iter().map(|&p| af.polygon.to_local(p)).collect::<Vec<_>>())
    };
    if aperture.len() < 3 || polygon_area_2d(&aperture) <= MIN_FOOTPRINT {
        return BeamStep { horizontal, vertical, admitted: false, next: None };
    }
    let image = mirror_point(beam.image, &ap);
    BeamStep { horizontal, vertical, admitted: true, next: Some(Beam { face: aim, image, aperture }) }
}

/// Node of the candidate reflection tree of a source.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateNode {
    pub beam: Beam,
    pub parent: Option<usize>,
    /// Number of reflections, starting at 1.
    pub depth: usize,
}

/// Candidate reflection sequences from a source, up to `max_depth` reflections.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateTree {
    pub source: Point3,
    pub nodes: Vec<CandidateNode>,
    /// Directly illuminated faces.
    pub regions: BTreeMap<FaceId, IlluminatedRegion>,
}

impl CandidateTree {
    /// Face sequence ending at node `i`.
    pub fn sequence(&self, i: usize) -> Vec<FaceId> {
        let mut out = Vec::with_capacity(self.nodes[i].depth);
        let mut cur = Some(i);
        while let Some(k) = cur {
            out.push(self.nodes[k].beam.face);
            cur = self.nodes[k].parent;
        }
        out.reverse();
        out
    }

    /// All candidate sequences, sorted.
    pub fn sequences(&self) -> Vec<Vec<FaceId>> {
        let mut v: Vec<Vec<FaceId>> = (0..self.nodes.len()).map(|i| self.sequence(i)).collect();
        v.sort();
        v
    }

    /// Display name of a face for this source, primed when directly lit but clipped.
    pub fn face_name(&self, scene: &Scene, f: FaceId) -> String {
        self.regions.get(&f).map(|r| r.name.clone()).unwrap_or_else(|| scene.faces[f].name.clone())
    }
}

/// Builds the candidate tree for a source.
pub fn candidate_tree(source: Point3, matrix: &InterVisMatrix, scene: &Scene, max_depth: usize) -> CandidateTree {
    let mut regions = BTreeMap::new();
    let mut nodes = Vec::new();
    if max_depth == 0 || scene.building_containing(source).is_some() {
        return CandidateTree { source, nodes, regions };
    }
    let roots: Vec<IlluminatedRegion> = scene
        .faces
        .iter()
        .filter_map(|f| illuminated_region(source, f, scene).ok().flatten())
        .collect();
    for r in roots {
        let image = mirror_point(source, scene.faces[r.face].polygon.plane());
        nodes.push(CandidateNode { beam: Beam { face: r.face, image, aperture: r.lit.clone() }, parent: None, depth: 1 });
        regions.insert(r.face, r);
    }
    let mut frontier: Vec<usize> = (0..nodes.len()).collect();
    for depth in 2..=max_depth {
        let mut next_frontier = Vec::new();
        let mut born = Vec::new();
        for &i in &frontier {
            let node = &nodes[i];
            let succ = match node.parent {
                None => matrix.first_successors(node.beam.face),
                Some(p) => matrix.next_successors(nodes[p].beam.face, node.beam.face),
            };
            let frustum = Frustum::of(scene, &node.beam);
            for &g in succ {
                if let Some(next) = beam_step_in(scene, &node.beam, &frustum, g).next {
                    born.push(CandidateNode { beam: next, parent: Some(i), depth });
                }
            }
        }
        next_frontier.extend(nodes.len()..nodes.len() + born.len());
        nodes.extend(born);
        frontier = next_frontier;
    }
    CandidateTree { source, nodes, regions }
}

// ---- per-point tables ----

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Node {
    Source,
    Face(FaceId),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VisTableEntry {
    pub order: usize,
    pub parent: Node,
    pub reference: FaceId,
    pub aim: FaceId,
    /// Names as displayed for this source.
    pub parent_name: String,
    pub reference_name: String,
    pub aim_name: String,
}

fn table_from_tree(tree: &CandidateTree, scene: &Scene, max_order: usize) -> Vec<VisTableEntry> {
    let mut set = BTreeSet::new();
    for n in &tree.nodes {
        let Some(p) = n.parent else { continue };
        let rnode = &tree.nodes[p];
        if rnode.depth > max_order {
            continue;
        }
        let (parent, parent_name) = match rnode.parent {
            None => (Node::Source, "transmitter".to_string()),
            Some(pp) => {
                let f = tree.nodes[pp].beam.face;
                (Node::Face(f), tree.face_name(scene, f))
            }
        };
        set.insert(VisTableEntry {
            order: rnode.depth,
            parent,
            reference: rnode.beam.face,
            aim: n.beam.face,
            parent_name,
            reference_name: tree.face_name(scene, rnode.beam.face),
            aim_name: tree.face_name(scene, n.beam.face),
        });
    }
    set.into_iter().collect()
}

/// Reference/aim pairs reachable from `source` up to `max_order`.
pub fn point_vis_table(source: Point3, matrix: &InterVisMatrix, scene: &Scene, max_order: usize) -> Vec<VisTableEntry> {
    let tree = candidate_tree(source, matrix, scene, max_order + 1);
    table_from_tree(&tree, scene, max_order)
}

/// Verdict of a higher-order visibility check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HigherOrder {
    Full,
    /// Part of the aim is reachable; the clip point bounds it on the working plane when the
    /// boundary lies across the aim in that plane.
    Partial { clip: Option<[f64; 2]> },
    None,
}

/// Whether rays lit in `region` can reflect onto the entry's aim face.
pub fn higher_order_visibility(
    scene: &Scene,
    region: &IlluminatedRegion,
    entry: &InterVisEntry,
) -> Result<HigherOrder, VisError> {
    if entry.reference() != region.face {
        return Err(VisError::FaceMismatch);
    }
    if region.plane != entry.ranges.plane {
        return Err(VisError::PlaneMismatch { region: region.plane, entry: entry.ranges.plane });
    }
    let rf = &scene.faces[region.face];
    let af = &scene.faces[entry.aim()];
    let image = mirror_point(region.source, rf.polygon.plane());
    let beam = Beam { face: region.face, image, aperture: region.lit.clone() };
    let step = beam_step(scene, &beam, entry.aim());
    let Some(next) = step.next else { return Ok(HigherOrder::None) };
    let reach = polygon_area_2d(&next.aperture);
    if reach >= af.polygon.area() * (1.0 - 1e-9) {
        return Ok(HigherOrder::Full);
    }
    let plane = region.plane;
    let o2 = plane.project(image);
    let [a0, a1] = extreme_pair(af.vertices(), af, plane);
    let clip = Line2::through(a0, a1).ok().and_then(|aim_line| {
        region.sub_segment.iter().find_map(|&q| {
            let l = Line2::through(o2, q).ok()?;
            let m = line_intersection_2d(l, aim_line).ok()?;
            let inside = |u: f64, lo: f64, hi: f64| u > lo.min(hi) + 1e-9 && u < lo.max(hi) - 1e-9;
            let strictly = inside(m[0], a0[0], a1[0]) || inside(m[1], a0[1], a1[1]);
            strictly.then_some(m)
        })
    });
    Ok(HigherOrder::Partial { clip })
}

/// Nearest diffracting edge with a clear sightline from `receiver` to its closest point.
/// Ties at equal distance go to the lowest edge ID.
pub fn closest_diffraction_edge(receiver: Point3, scene: &Scene, _matrix: &InterVisMatrix) -> Option<EdgeId> {
    nearest_visible_edge(receiver, scene)
}

pub(crate) fn nearest_visible_edge(receiver: Point3, scene: &Scene) -> Option<EdgeId> {
    if scene.building_containing(receiver).is_some() {
        return None;
    }
    let mut cands: Vec<(f64, EdgeId, Point3)> = scene
        .edges
        .iter()
        .filter(|e| e.diffracting)
        .map(|e| {
            let (p, _) = closest_point_on_segment(receiver, e.a, e.b);
            (p.distance(receiver), e.id, p)
        })
        .collect();
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cands
        .into_iter()
        .find(|&(d, _, p)| d > EPS && scene.segment_clear(receiver, p))
        .map(|(_, id, _)| id)
}

// ---- trajectory tables ----

/// Visibility key of a trajectory sample.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct MobileKey {
    order: usize,
    node: FaceId,
    parent: Option<FaceId>,
    blockage: Option<BuildingId>,
}

#[derive(Debug, Clone, PartialEq)]
struct Sample {
    s: f64,
    keys: BTreeSet<MobileKey>,
    sequences: Vec<Vec<FaceId>>,
}

fn sample_at(traj: &Trajectory, s: f64, matrix: &InterVisMatrix, scene: &Scene, max_order: usize) -> Sample {
    let tree = candidate_tree(traj.point_at(s), matrix, scene, max_order);
    let mut keys = BTreeSet::new();
    for n in &tree.nodes {
        let parent = n.parent.map(|p| tree.nodes[p].beam.face);
        let blockage = if n.depth == 1 {
            tree.regions
                .get(&n.beam.face)
                .and_then(|r| r.blockers.iter().filter_map(|&b| scene.faces[b].building).min())
        } else {
            None
        };
        keys.insert(MobileKey { order: n.depth, node: n.beam.face, parent, blockage });
    }
    Sample { s, keys, sequences: tree.sequences() }
}

/// Row of a trajectory visibility table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobileVisEntry {
    pub order: usize,
    pub node: FaceId,
    pub visible_node: String,
    pub s_start: f64,
    pub s_end: f64,
    /// Boundary labels such as `P3` or `P'3`; `start` and `end` mark the route ends.
    pub start_label: String,
    pub end_label: String,
    pub parent: String,
    pub blockage: Option<String>,
}

/// A point along the route where the candidate set changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub s: f64,
    pub label: String,
    /// Boundary decided in the vertical plane and projected onto the route.
    pub projected: bool,
    /// Lowest order among the rows that change here, if any row changes.
    pub min_order: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub entries: Vec<MobileVisEntry>,
    pub boundaries: Vec<Boundary>,
    pub length: f64,
    /// Constant-candidate intervals `(s_start, s_end, sequences)`.
    pub intervals: Vec<(f64, f64, Vec<Vec<FaceId>>)>,
}

fn bisect(
    traj: &Trajectory,
    a: &Sample,
    b: &Sample,
    matrix: &InterVisMatrix,
    scene: &Scene,
    max_order: usize,
    out: &mut Vec<(f64, Sample, Sample)>,
) {
    if a.sequences == b.sequences && a.keys == b.keys {
        return;
    }
    if b.s - a.s <= BOUNDARY_TOL {
        out.push((0.5 * (a.s + b.s), a.clone(), b.clone()));
        return;
    }
    let m = sample_at(traj, 0.5 * (a.s + b.s), matrix, scene, max_order);
    bisect(traj, a, &m, matrix, scene, max_order, out);
    bisect(traj, &m, b, matrix, scene, max_order, out);
}

/// Visibility ranges along a trajectory for reflection orders up to `max_order`.
pub fn trajectory_vis_table(
    traj: &Trajectory,
    matrix: &InterVisMatrix,
    scene: &Scene,
    max_order: usize,
) -> Result<TrajectoryTable, VisError> {
    trajectory_vis_table_with_step(traj, matrix, scene, max_order, SAMPLE_STEP)
}

pub fn trajectory_vis_table_with_step(
    traj: &Trajectory,
    matrix: &InterVisMatrix,
    scene: &Scene,
    max_order: usize,
    step: f64,
) -> Result<TrajectoryTable, VisError> {
    let length = traj.length();
    if !(length > 0.0) {
        return Err(VisError::EmptyTrajectory);
    }
    let n = (length / step).ceil().max(1.0) as usize;
    let samples: Vec<Sample> = (0..=n)
        .into_par_iter()
        .map(|i| sample_at(traj, (i as f64 * step).min(length), matrix, scene, max_order))
        .collect();
    let found: Vec<Vec<(f64, Sample, Sample)>> = samples
        .par_windows(2)
        .map(|w| {
            let mut out = Vec::new();
            bisect(traj, &w[0], &w[1], matrix, scene, max_order, &mut out);
            out
        })
        .collect();
    let changes: Vec<(f64, Sample, Sample)> = found.into_iter().flatten().collect();

    let mut boundaries = Vec::new();
    let mut intervals = Vec::new();
    let mut start = 0.0;
    let mut current = samples[0].sequences.clone();
    for (k, (s, before, after)) in changes.iter().enumerate() {
        let diff: Vec<&MobileKey> = before.keys.symmetric_difference(&after.keys).collect();
        let min_order = diff.iter().map(|k| k.order).min();
        let projected = diff.iter().any(|k| scene.faces[k.node].orientation == Orientation::Horizontal);
        let label = if projected { format!("P'{}", k + 1) } else { format!("P{}", k + 1) };
        boundaries.push(Boundary { s: *s, label, projected, min_order });
        intervals.push((start, *s, std::mem::take(&mut current)));
        start = *s;
        current = after.sequences.clone();
    }
    intervals.push((start, length, current));

    // merge key presence into ranges
    let mut cuts: Vec<(f64, String)> = vec![(0.0, "start".to_string())];
    cuts.extend(boundaries.iter().map(|b| (b.s, b.label.clone())));
    cuts.push((length, "end".to_string()));
    let mut key_sets: Vec<BTreeSet<MobileKey>> = vec![samples[0].keys.clone()];
    key_sets.extend(changes.iter().map(|c| c.2.keys.clone()));
    let mut open: BTreeMap<MobileKey, usize> = BTreeMap::new();
    let mut rows: Vec<(MobileKey, usize, usize)> = Vec::new();
    for (i, keys) in key_sets.iter().enumerate() {
        let closing: Vec<MobileKey> = open.keys().filter(|k| !keys.contains(k)).cloned().collect();
        for k in closing {
            let st = open.remove(&k).unwrap();
            rows.push((k, st, i));
        }
        for k in keys {
            open.entry(k.clone()).or_insert(i);
        }
    }
    for (k, st) in open {
        rows.push((k, st, key_sets.len()));
    }
    let name = |f: FaceId| scene.faces[f].name.clone();
    let mut entries: Vec<MobileVisEntry> = rows
        .into_iter()
        .map(|(k, st, en)| MobileVisEntry {
            order: k.order,
            node: k.node,
            visible_node: name(k.node),
            s_start: cuts[st].0,
            s_end: cuts[en].0,
            start_label: cuts[st].1.clone(),
            end_label: cuts[en].1.clone(),
            parent: k.parent.map(name).unwrap_or_else(|| "transmitter".to_string()),
            blockage: k.blockage.map(|b| scene.buildings[b].name.clone()),
        })
        .collect();
    entries.sort_by(|a, b| {
        (a.order, &a.visible_node, &a.parent, a.s_start.to_bits()).cmp(&(b.order, &b.visible_node, &b.parent, b.s_start.to_bits()))
    });
    Ok(TrajectoryTable { entries, boundaries, length, intervals })
}

// ---- coherence ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceSegment {
    pub l: usize,
    pub s_start: f64,
    /// Route distance of the segment in meters.
    pub d_l: f64,
    /// Mean speed over the segment in m/s.
    pub v_l: f64,
    /// Coherence time in seconds.
    pub t_c: f64,
    /// Elevation of the velocity above the horizontal plane, in degrees.
    pub gamma_e: f64,
    /// Azimuth of the velocity from the x axis, in degrees.
    pub gamma_a: f64,
    pub t_start: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub segments: Vec<CoherenceSegment>,
    pub average: f64,
}

/// Segment coherence time on the common time axis of two movers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedSegment {
    pub l: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub t_c: f64,
    /// 0 for the first mover, 1 for the second.
    pub mover: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedReport {
    pub segments: Vec<CombinedSegment>,
    pub average: f64,
}

/// Rows of order below this create coherence boundaries.
pub const COHERENCE_ORDER_LIMIT: usize = 3;

/// Coherence segments of one mover.
pub fn coherence_times(table: &TrajectoryTable, traj: &Trajectory) -> Result<CoherenceReport, VisError> {
    let length = traj.length();
    if !(length > 0.0) {
        return Err(VisError::EmptyTrajectory);
    }
    let mut cuts: Vec<f64> = vec![0.0];
    for b in &table.boundaries {
        if b.min_order.is_some_and(|o| o < COHERENCE_ORDER_LIMIT) && b.s > 0.0 && b.s < length {
            cuts.push(b.s);
        }
    }
    cuts.push(length);
    let mut segments = Vec::new();
    for w in cuts.windows(2) {
        let d = w[1] - w[0];
        let t0 = traj.time_at(w[0]);
        let t1 = traj.time_at(w[1]);
        let dt = t1 - t0;
        if !(dt > 0.0) {
            return Err(VisError::ZeroSpeed);
        }
        let v = d / dt;
        let dir = traj.direction_at(w[0] + 0.5 * d);
        segments.push(CoherenceSegment {
            l: segments.len() + 1,
            s_start: w[0],
            d_l: d,
            v_l: v,
            t_c: d / v,
            gamma_e: dir.z.atan2(dir.x.hypot(dir.y)).to_degrees(),
            gamma_a: dir.y.atan2(dir.x).to_degrees(),
            t_start: t0,
        });
    }
    let average = average_coherence(&segments.iter().map(|s| s.t_c).collect::<Vec<_>>());
    Ok(CoherenceReport { segments, average })
}

/// Mean of per-range coherence times.
pub fn average_coherence(t: &[f64]) -> f64 {
    if t.is_empty() {
        0.0
    } else {
        t.iter().sum::<f64>() / t.len() as f64
    }
}

/// Per-range minimum of two movers' coherence times over matching ranges.
pub fn min_rule(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x.min(*y)).collect()
}

/// Intersects two movers' segments on wall-clock time and keeps the smaller coherence time.
pub fn combine_movers(a: &CoherenceReport, b: &CoherenceReport) -> CombinedReport {
    let end = |r: &CoherenceReport| r.segments.last().map(|s| s.t_start + s.t_c).unwrap_or(0.0);
    let (ea, eb) = (end(a), end(b));
    let horizon = ea.max(eb);
    let mut times: Vec<f64> = a.segments.iter().map(|s| s.t_start).chain(b.segments.iter().map(|s| s.t_start)).collect();
    times.push(ea);
    times.push(eb);
    times.push(horizon);
    times.sort_by(f64::total_cmp);
    times.dedup_by(|x, y| (*x - *y).abs() <= 1e-12);
    let find = |r: &CoherenceReport, t: f64| r.segments.iter().find(|s| t >= s.t_start - 1e-12 && t < s.t_start + s.t_c - 1e-12).map(|s| s.t_c);
    let mut segments = Vec::new();
    for w in times.windows(2) {
        if w[1] - w[0] <= 1e-12 {
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        let (tc, mover) = match (find(a, mid), find(b, mid)) {
            (Some(x), Some(y)) if y < x => (y, 1),
            (Some(x), _) => (x, 0),
            (None, Some(y)) => (y, 1),
            (None, None) => continue,
        };
        segments.push(CombinedSegment { l: segments.len() + 1, t_start: w[0], t_end: w[1], t_c: tc, mover });
    }
    let average = average_coherence(&segments.iter().map(|s| s.t_c).collect::<Vec<_>>());
    CombinedReport { segments, average }
}
