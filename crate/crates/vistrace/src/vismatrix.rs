//! Static inter-visibility matrix between scene faces.
//!
//! Order-1 entries record which ordered face pairs can exchange a reflected ray,
//! with their interface relation, angular bouncing ranges and occlusion verdict.
//! Order-2 entries record admissible three-face chains. Longer chains are the
//! walks whose consecutive triples are all order-2 entries.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    angle_between, clamp_visibility_angle, clip_polygon_3d, convex_hull_2d, convex_sets_intersect_2d, mirror_point,
    oriented_angle_2d, segment_polygon_intersection, PlaneTag, Point3, EPS, EPS_ANG,
};
use crate::scene::{EdgeId, Face, FaceId, Orientation, Scene};

/// Largest supported matrix order.
pub const MAX_MATRIX_ORDER: usize = 4;
/// Default matrix order.
pub const DEFAULT_ORDER: usize = 3;

/// Slack used when intersecting admissibility hulls with faces.
pub(crate) const ADMIT_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("reference and aim face are the same ({0})")]
    SelfPair(String),
    #[error("face {0} is oblique")]
    Oblique(String),
    #[error("faces {0} and {1} are neither parallel nor perpendicular")]
    Unsupported(String, String),
    #[error("missing prerequisite entry {0}")]
    MissingEntry(String),
    #[error("matrix order {0} outside 1..={MAX_MATRIX_ORDER}")]
    BadOrder(usize),
    #[error("matrix was built for a different scene")]
    SceneMismatch,
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelationKind {
    Parallel,
    Perpendicular,
}

impl RelationKind {
    pub fn short(self) -> &'static str {
        match self {
            RelationKind::Parallel => "PAR",
            RelationKind::Perpendicular => "PER",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceRelation {
    pub kind: RelationKind,
    pub plane: PlaneTag,
    /// Faces in connection order.
    pub chain: Vec<FaceId>,
    pub orientations: Vec<Orientation>,
}

/// Angles subtended by the aim face at one bounding edge of the reference face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRange {
    /// Scene edge projecting onto this working-plane endpoint.
    pub edge: Option<EdgeId>,
    /// Working-plane position of the endpoint.
    pub vertex: [f64; 2],
    /// Direction the angles are measured from (along the reference face).
    pub reference: [f64; 2],
    /// Whether angles grow clockwise from `reference`.
    pub clockwise: bool,
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularBouncingRange {
    pub plane: PlaneTag,
    /// Ranges at the two working-plane endpoints of the reference face.
    pub edges: [EdgeRange; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Visibility {
    Visible,
    PartiallyVisible(Vec<FaceId>),
    Occluded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ChainVerdict {
    Full,
    /// Admissible with the non-overlap part of the range.
    Partial { low: f64, high: f64 },
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainCase {
    /// Vertical, horizontal, vertical.
    VerticalHorizontalVertical,
    /// Horizontal, vertical, vertical (or its reverse).
    HorizontalVerticalVertical,
    AllVertical,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainInfo {
    pub case: ChainCase,
    pub verdict: ChainVerdict,
    /// Supplements of the original face's angles at its first edge.
    pub criterion: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterVisEntry {
    pub order: usize,
    /// `order + 1` faces; the last two are the reference and aim.
    pub chain: Vec<FaceId>,
    pub relation: InterfaceRelation,
    pub ranges: AngularBouncingRange,
    pub visibility: Visibility,
    pub chain_info: Option<ChainInfo>,
    /// Aim-face vertices mirrored across the reference plane.
    pub aim_image: Vec<Point3>,
}

impl InterVisEntry {
    pub fn reference(&self) -> FaceId {
        self.chain[self.order - 1]
    }

    pub fn aim(&self) -> FaceId {
        self.chain[self.order]
    }
}

#[derive(Debug, Clone, Default)]
struct MatrixIndex {
    pos1: HashMap<(FaceId, FaceId), usize>,
    pos2: HashMap<(FaceId, FaceId, FaceId), usize>,
    /// Every face that may follow a face in a path.
    after1: Vec<Vec<FaceId>>,
    /// Faces that may follow a face pair.
    after2: HashMap<(FaceId, FaceId), Vec<FaceId>>,
    /// Order-1 entry targets of a face.
    order1: Vec<Vec<FaceId>>,
    /// Faces that bypass order-2 pruning after a face.
    fallback: Vec<Vec<FaceId>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterVisMatrix {
    pub max_order: usize,
    pub face_names: Vec<String>,
    /// Order-1 and order-2 entries sorted by `(order, chain)`.
    pub entries: Vec<InterVisEntry>,
    /// Mutually facing pairs whose relation is neither parallel nor perpendicular.
    pub unclassified: Vec<(FaceId, FaceId)>,
    pub oblique: Vec<FaceId>,
    #[serde(skip)]
    index: MatrixIndex,
}

// ---- pairwise operations ----

/// Some vertex of `g` lies strictly in front of `f`.
pub fn sees_front(f: &Face, g: &Face) -> bool {
    g.vertices().iter().any(|&p| f.signed_distance(p) > EPS)
}

/// Interface relation of two horizontal/vertical faces.
pub fn classify_relation(reference: &Face, aim: &Face) -> Result<InterfaceRelation, MatrixError> {
    if reference.id == aim.id {
        return Err(MatrixError::SelfPair(reference.name.clone()));
    }
    for f in [reference, aim] {
        if f.orientation == Orientation::Oblique {
            return Err(MatrixError::Oblique(f.name.clone()));
        }
    }
    let angle = angle_between(reference.normal(), aim.normal()).expect("unit normals");
    let kind = if angle <= EPS_ANG || angle >= 180.0 - EPS_ANG {
        RelationKind::Parallel
    } else if (angle - 90.0).abs() <= EPS_ANG {
        RelationKind::Perpendicular
    } else {
        return Err(MatrixError::Unsupported(reference.name.clone(), aim.name.clone()));
    };
    use Orientation::*;
    let plane = match (reference.orientation, aim.orientation) {
        (Vertical, Vertical) => PlaneTag::XY,
        (Horizontal, Horizontal) => PlaneTag::XZ,
        (Vertical, Horizontal) => vertical_plane_of(reference),
        (Horizontal, Vertical) => vertical_plane_of(aim),
        _ => unreachable!(),
    };
    Ok(InterfaceRelation {
        kind,
        plane,
        chain: vec![reference.id, aim.id],
        orientations: vec![reference.orientation, aim.orientation],
    })
}

/// Coordinate plane containing the normal of a vertical face.
fn vertical_plane_of(wall: &Face) -> PlaneTag {
    let n = wall.normal();
    if n.x.abs() >= n.y.abs() {
        PlaneTag::XZ
    } else {
        PlaneTag::YZ
    }
}

/// Working-plane endpoints of a face, ordered so that the face normal is on the left of `e0 -> e1`.
fn working_segment(face: &Face, plane: PlaneTag) -> ([f64; 2], [f64; 2], [f64; 2]) {
    let n2 = plane.project_vec(face.normal());
    let len = n2[0].hypot(n2[1]);
    let n2 = if len > 0.0 { [n2[0] / len, n2[1] / len] } else { [0.0, 1.0] };
    let t = [n2[1], -n2[0]];
    let mut lo = (f64::INFINITY, [0.0, 0.0]);
    let mut hi = (f64::NEG_INFINITY, [0.0, 0.0]);
    for &p in face.vertices() {
        let q = plane.project(p);
        let s = q[0] * t[0] + q[1] * t[1];
        if s < lo.0 {
            lo = (s, q);
        }
        if s > hi.0 {
            hi = (s, q);
        }
    }
    (lo.1, hi.1, n2)
}

fn edge_at(scene: &Scene, face: &Face, plane: PlaneTag, q: [f64; 2]) -> Option<EdgeId> {
    let close = |p: Point3| {
        let r = plane.project(p);
        (r[0] - q[0]).hypot(r[1] - q[1]) <= 1e-6
    };
    scene.edges.iter().find(|e| e.faces.contains(&face.id) && close(e.a) && close(e.b)).map(|e| e.id)
}

/// Angular bouncing ranges of `aim` seen from the two bounding edges of `reference`.
pub fn first_order_ranges(
    scene: &Scene,
    reference: &Face,
    aim: &Face,
    rel: &InterfaceRelation,
) -> AngularBouncingRange {
    let plane = rel.plane;
    let (e0, e1, _) = working_segment(reference, plane);
    let (a0, a1, _) = working_segment(aim, plane);
    let measure = |from: [f64; 2], other: [f64; 2], clockwise: bool| -> EdgeRange {
        let reference_dir = [other[0] - from[0], other[1] - from[1]];
        let mut angles = Vec::new();
        for q in [a0, a1] {
            let d = [q[0] - from[0], q[1] - from[1]];
            if d[0].hypot(d[1]) <= EPS {
                angles.push(0.0);
                continue;
            }
            let a = if clockwise {
                oriented_angle_2d(d, reference_dir)
            } else {
                oriented_angle_2d(reference_dir, d)
            };
            angles.push(clamp_visibility_angle(a.unwrap_or(0.0)));
        }
        let (low, high) = if angles[0] <= angles[1] { (angles[0], angles[1]) } else { (angles[1], angles[0]) };
        EdgeRange {
            edge: edge_at(scene, reference, plane, from),
            vertex: from,
            reference: reference_dir,
            clockwise,
            low,
            high,
        }
    };
    AngularBouncingRange { plane, edges: [measure(e0, e1, false), measure(e1, e0, true)] }
}

/// Four-by-four interior sample grid of a face.
fn grid_samples(face: &Face) -> Vec<Point3> {
    let v = face.vertices();
    let ts = [0.125, 0.375, 0.625, 0.875];
    let mut out = Vec::with_capacity(16);
    if v.len() == 4 {
        for &s in &ts {
            for &t in &ts {
                let a = v[0].lerp(v[1], s);
                let b = v[3].lerp(v[2], s);
                out.push(a.lerp(b, t));
            }
        }
    } else {
        let c = face.polygon.centroid();
        for (k, &r) in ts.iter().enumerate() {
            for j in 0..4 {
                let p = v[(j * v.len() / 4 + k) % v.len()];
                out.push(c.lerp(p, r));
            }
        }
    }
    out
}

fn bounds(points: impl Iterator<Item = Point3>) -> (Point3, Point3) {
    let inf = f64::INFINITY;
    points.fold((Point3::new(inf, inf, inf), Point3::new(-inf, -inf, -inf)), |(lo, hi), p| {
        (
            Point3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z)),
            Point3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z)),
        )
    })
}

/// Faces other than the pair whose bounding boxes meet the pair's bounding box.
fn pair_candidates(scene: &Scene, f: &Face, g: &Face) -> Vec<FaceId> {
    let (lo, hi) = bounds(f.vertices().iter().chain(g.vertices()).copied());
    scene
        .faces
        .iter()
        .filter(|b| b.id != f.id && b.id != g.id)
        .filter(|b| {
            let (blo, bhi) = bounds(b.vertices().iter().copied());
            blo.x <= hi.x + EPS
                && bhi.x >= lo.x - EPS
                && blo.y <= hi.y + EPS
                && bhi.y >= lo.y - EPS
                && blo.z <= hi.z + EPS
                && bhi.z >= lo.z - EPS
        })
        .map(|b| b.id)
        .collect()
}

/// Single face that provably blocks every segment between the two faces.
fn certified_blocker(scene: &Scene, f: &Face, g: &Face, candidates: &BTreeSet<FaceId>) -> Option<FaceId> {
    'cand: for &b in candidates {
        let blocker = &scene.faces[b];
        let df: Vec<f64> = f.vertices().iter().map(|&p| blocker.signed_distance(p)).collect();
        let dg: Vec<f64> = g.vertices().iter().map(|&p| blocker.signed_distance(p)).collect();
        let split = (df.iter().all(|&d| d > EPS) && dg.iter().all(|&d| d < -EPS))
            || (df.iter().all(|&d| d < -EPS) && dg.iter().all(|&d| d > EPS));
        if !split {
            continue;
        }
        for (i, &p) in f.vertices().iter().enumerate() {
            for (j, &q) in g.vertices().iter().enumerate() {
                let t = df[i] / (df[i] - dg[j]);
                let x = p.lerp(q, t);
                if !blocker.polygon.contains_on_plane(x, 0.5 * EPS) {
                    continue 'cand;
                }
            }
        }
        return Some(b);
    }
    None
}

/// Intersection judgment between two faces.
///
/// Sightlines are the vertex-to-vertex segments, the centroid pair and a 4x4 grid of
/// interior sample pairs. An all-blocked result is reported as `Occluded` only when a
/// single face provably blocks every segment between the two faces; otherwise it is
/// reported as `PartiallyVisible`.
pub fn occlusion_judgment(reference: &Face, aim: &Face, scene: &Scene) -> Visibility {
    let candidates = pair_candidates(scene, reference, aim);
    let mut lines: Vec<(Point3, Point3)> = Vec::new();
    for &p in reference.vertices() {
        for &q in aim.vertices() {
            lines.push((p, q));
        }
    }
    lines.push((reference.polygon.centroid(), aim.polygon.centroid()));
    lines.extend(grid_samples(reference).into_iter().zip(grid_samples(aim)));
    let mut blocked = 0;
    let mut blockers = BTreeSet::new();
    for &(a, b) in &lines {
        let mut hit = false;
        for &c in &candidates {
            if segment_polygon_intersection(a, b, &scene.faces[c].polygon).is_some() {
                hit = true;
                blockers.insert(c);
            }
        }
        if hit {
            blocked += 1;
        }
    }
    if blocked == 0 {
        Visibility::Visible
    } else if blocked == lines.len() && certified_blocker(scene, reference, aim, &blockers).is_some() {
        Visibility::Occluded
    } else {
        Visibility::PartiallyVisible(blockers.into_iter().collect())
    }
}

/// Conservative test that some ray leaving `original` reflects off `mid` and reaches `test`.
pub fn chain_admissible(original: &Face, mid: &Face, test: &Face) -> bool {
    let mp = mid.polygon.plane();
    let front = |f: &Face| -> Vec<Point3> {
        if f.vertices().iter().all(|&p| mp.signed_distance(p) >= 0.0) {
            f.vertices().to_vec()
        } else {
            clip_polygon_3d(f.vertices(), mp, 0.0)
        }
    };
    let src = front(original);
    let dst = front(test);
    if src.len() < 3 || dst.len() < 3 {
        return false;
    }
    let images: Vec<Point3> = src.iter().map(|&p| mirror_point(p, mp)).collect();
    let mut crossings = Vec::with_capacity(images.len() * dst.len() * 2);
    for &a in &images {
        let da = mp.signed_distance(a);
        for &b in &dst {
            let db = mp.signed_distance(b);
            if db - da <= 1e-12 {
                crossings.push(mid.polygon.to_local(a));
                crossings.push(mid.polygon.to_local(b));
            } else {
                crossings.push(mid.polygon.to_local(a.lerp(b, -da / (db - da))));
            }
        }
    }
    let hull = convex_hull_2d(&crossings);
    convex_sets_intersect_2d(&hull, mid.polygon.local_vertices(), ADMIT_TOL)
}

fn chain_case(o: [Orientation; 3]) -> ChainCase {
    use Orientation::*;
    match o {
        [Vertical, Horizontal, Vertical] => ChainCase::VerticalHorizontalVertical,
        [Horizontal, Vertical, Vertical] | [Vertical, Vertical, Horizontal] => ChainCase::HorizontalVerticalVertical,
        [Vertical, Vertical, Vertical] => ChainCase::AllVertical,
        _ => ChainCase::Other,
    }
}

/// Second-order reflection check of `test` via `mid` from `original`.
///
/// The verdict is `None` when no ray can make the trip, `Full` when the angular
/// criterion holds on both lines and `Partial` otherwise.
pub fn second_order_check(
    scene: &Scene,
    matrix: &InterVisMatrix,
    original: FaceId,
    mid: FaceId,
    test: FaceId,
) -> Result<ChainVerdict, MatrixError> {
    let first = matrix
        .entry(original, mid)
        .ok_or_else(|| MatrixError::MissingEntry(format!("{} -> {}", scene.faces[original].name, scene.faces[mid].name)))?;
    let second = matrix
        .entry(mid, test)
        .ok_or_else(|| MatrixError::MissingEntry(format!("{} -> {}", scene.faces[mid].name, scene.faces[test].name)))?;
    Ok(chain_verdict(&scene.faces[original], &scene.faces[mid], &scene.faces[test], first, second).0)
}

fn chain_verdict(
    original: &Face,
    mid: &Face,
    test: &Face,
    first: &InterVisEntry,
    second: &InterVisEntry,
) -> (ChainVerdict, Option<[f64; 2]>) {
    if !chain_admissible(original, mid, test) {
        return (ChainVerdict::None, None);
    }
    if first.ranges.plane != second.ranges.plane {
        let r = &second.ranges.edges[0];
        return (ChainVerdict::Partial { low: r.low, high: r.high }, None);
    }
    let mu = &first.ranges.edges[0];
    let crit = [180.0 - mu.low, 180.0 - mu.high];
    let omega_next = &second.ranges.edges[1];
    let mu_next = &second.ranges.edges[0];
    let line1 = crit[0] >= omega_next.low && crit[0] >= omega_next.high;
    let line2 = crit[1] >= mu_next.low && crit[1] >= mu_next.high;
    if line1 && line2 {
        (ChainVerdict::Full, Some(crit))
    } else {
        let cap = crit[1].max(0.0);
        (ChainVerdict::Partial { low: mu_next.low.min(cap), high: mu_next.high.min(cap) }, Some(crit))
    }
}

/// Record of a three-face chain through mixed orientations.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRecord {
    pub case: ChainCase,
    /// The two order-1 legs.
    pub legs: [InterVisEntry; 2],
    pub accepted: bool,
}

/// Decomposes a three-face chain into its two order-1 legs.
///
/// For a horizontal-vertical-vertical chain the vertical pair must be parallel and
/// lie strictly in front of each other.
pub fn vertical_horizontal_chain(
    scene: &Scene,
    matrix: &InterVisMatrix,
    chain: [FaceId; 3],
) -> Result<ChainRecord, MatrixError> {
    for &f in &chain {
        if scene.faces[f].orientation == Orientation::Oblique {
            return Err(MatrixError::Oblique(scene.faces[f].name.clone()));
        }
    }
    let o = chain.map(|f| scene.faces[f].orientation);
    let case = chain_case(o);
    let leg = |a: FaceId, b: FaceId| {
        matrix
            .entry(a, b)
            .cloned()
            .ok_or_else(|| MatrixError::MissingEntry(format!("{} -> {}", scene.faces[a].name, scene.faces[b].name)))
    };
    let legs = [leg(chain[0], chain[1])?, leg(chain[1], chain[2])?];
    let accepted = match case {
        ChainCase::HorizontalVerticalVertical => {
            let (a, b) = if o[0] == Orientation::Horizontal { (chain[1], chain[2]) } else { (chain[0], chain[1]) };
            let (fa, fb) = (&scene.faces[a], &scene.faces[b]);
            let parallel = legs.iter().any(|l| l.relation.kind == RelationKind::Parallel && l.relation.chain.contains(&a) && l.relation.chain.contains(&b));
            parallel
                && fb.vertices().iter().all(|&p| fa.signed_distance(p) > EPS)
                && fa.vertices().iter().all(|&p| fb.signed_distance(p) > EPS)
        }
        _ => true,
    };
    Ok(ChainRecord { case, legs, accepted })
}

// ---- matrix ----

fn facing(r: &Face, a: &Face) -> bool {
    sees_front(r, a) && sees_front(a, r)
}

fn pair_entry(
    scene: &Scene,
    r: &Face,
    a: &Face,
    judged: &HashMap<(FaceId, FaceId), Visibility>,
) -> Result<Option<InterVisEntry>, (FaceId, FaceId)> {
    if !facing(r, a) {
        return Ok(None);
    }
    let relation = match classify_relation(r, a) {
        Ok(rel) => rel,
        Err(_) => return Err((r.id, a.id)),
    };
    let visibility = judged[&(r.id.min(a.id), r.id.max(a.id))].clone();
    if visibility == Visibility::Occluded {
        return Ok(None);
    }
    let ranges = first_order_ranges(scene, r, a, &relation);
    let aim_image = a.vertices().iter().map(|&p| mirror_point(p, r.polygon.plane())).collect();
    Ok(Some(InterVisEntry {
        order: 1,
        chain: vec![r.id, a.id],
        relation,
        ranges,
        visibility,
        chain_info: None,
        aim_image,
    }))
}

/// Builds the matrix up to `max_order` (1..=4).
pub fn build_matrix(scene: &Scene, max_order: usize) -> Result<InterVisMatrix, MatrixError> {
    if !(1..=MAX_MATRIX_ORDER).contains(&max_order) {
        return Err(MatrixError::BadOrder(max_order));
    }
    let faces = &scene.faces;
    let oblique: Vec<FaceId> = faces.iter().filter(|f| f.orientation == Orientation::Oblique).map(|f| f.id).collect();
    // the judgment is symmetric, so each unordered pair is judged once
    let pairs: Vec<(FaceId, FaceId)> = faces
        .iter()
        .filter(|f| f.orientation != Orientation::Oblique)
        .flat_map(|f| faces[f.id + 1..].iter().map(move |g| (f, g)))
        .filter(|(f, g)| g.orientation != Orientation::Oblique && facing(f, g))
        .map(|(f, g)| (f.id, g.id))
        .collect();
    let judged: HashMap<(FaceId, FaceId), Visibility> =
        pairs.par_iter().map(|&(i, j)| ((i, j), occlusion_judgment(&faces[i], &faces[j], scene))).collect();
    let rows: Vec<(Vec<InterVisEntry>, Vec<(FaceId, FaceId)>)> = faces
        .par_iter()
        .map(|r| {
            let mut entries = Vec::new();
            let mut unclassified = Vec::new();
            if r.orientation == Orientation::Oblique {
                return (entries, unclassified);
            }
            for a in faces {
                if a.id == r.id || a.orientation == Orientation::Oblique {
                    continue;
                }
                match pair_entry(scene, r, a, &judged) {
                    Ok(Some(e)) => entries.push(e),
                    Ok(None) => {}
                    Err(pair) => unclassified.push(pair),
                }
            }
            (entries, unclassified)
        })
        .collect();
    let mut entries = Vec::new();
    let mut unclassified = Vec::new();
    for (e, u) in rows {
        entries.extend(e);
        unclassified.extend(u);
    }
    let mut m = InterVisMatrix {
        max_order,
        face_names: faces.iter().map(|f| f.name.clone()).collect(),
        entries,
        unclassified,
        oblique,
        index: MatrixIndex::default(),
    };
    m.rebuild_index(faces.len());
    if max_order >= 2 {
        let first: Vec<&InterVisEntry> = m.entries.iter().filter(|e| e.order == 1).collect();
        let second: Vec<InterVisEntry> = first
            .par_iter()
            .flat_map_iter(|e1| {
                let (f, g) = (e1.chain[0], e1.chain[1]);
                let m = &m;
                m.order1_targets(g).iter().filter_map(move |&h| {
                    let e2 = m.entry(g, h)?;
                    let (ff, fg, fh) = (&faces[f], &faces[g], &faces[h]);
                    let (verdict, criterion) = chain_verdict(ff, fg, fh, e1, e2);
                    if verdict == ChainVerdict::None {
                        return None;
                    }
                    let mut relation = e2.relation.clone();
                    relation.chain = vec![f, g, h];
                    relation.orientations = vec![ff.orientation, fg.orientation, fh.orientation];
                    Some(InterVisEntry {
                        order: 2,
                        chain: vec![f, g, h],
                        relation,
                        ranges: e2.ranges.clone(),
                        visibility: e2.visibility.clone(),
                        chain_info: Some(ChainInfo {
                            case: chain_case([ff.orientation, fg.orientation, fh.orientation]),
                            verdict,
                            criterion,
                        }),
                        aim_image: e2.aim_image.clone(),
                    })
                })
            })
            .collect();
        m.entries.extend(second);
    }
    m.entries.sort_by(|a, b| (a.order, &a.chain).cmp(&(b.order, &b.chain)));
    m.unclassified.sort();
    m.rebuild_index(faces.len());
    Ok(m)
}

impl InterVisMatrix {
    fn rebuild_index(&mut self, n_faces: usize) {
        let mut idx = MatrixIndex::default();
        let mut succ1 = vec![BTreeSet::new(); n_faces];
        let mut succ2: HashMap<(FaceId, FaceId), BTreeSet<FaceId>> = HashMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            match e.order {
                1 => {
                    idx.pos1.insert((e.chain[0], e.chain[1]), i);
                    succ1[e.chain[0]].insert(e.chain[1]);
                }
                2 => {
                    idx.pos2.insert((e.chain[0], e.chain[1], e.chain[2]), i);
                    succ2.entry((e.chain[0], e.chain[1])).or_default().insert(e.chain[2]);
                }
                _ => {}
            }
        }
        let mut fallback = vec![BTreeSet::new(); n_faces];
        for &(a, b) in &self.unclassified {
            fallback[a].insert(b);
        }
        for (f, fb) in fallback.iter_mut().enumerate() {
            fb.extend(self.oblique.iter().copied().filter(|&o| o != f));
        }
        let obl: BTreeSet<FaceId> = self.oblique.iter().copied().collect();
        idx.after1 = (0..n_faces)
            .map(|f| {
                if obl.contains(&f) {
                    (0..n_faces).filter(|&g| g != f).collect()
                } else {
                    succ1[f].union(&fallback[f]).copied().collect()
                }
            })
            .collect();
        idx.after2 = succ2.into_iter().map(|(k, v)| (k, v.union(&fallback[k.1]).copied().collect())).collect();
        idx.order1 = succ1.into_iter().map(|s| s.into_iter().collect()).collect();
        idx.fallback = fallback.into_iter().map(|s| s.into_iter().collect()).collect();
        self.index = idx;
    }

    /// Order-1 entry for `reference -> aim`.
    pub fn entry(&self, reference: FaceId, aim: FaceId) -> Option<&InterVisEntry> {
        self.index.pos1.get(&(reference, aim)).map(|&i| &self.entries[i])
    }

    /// Order-2 entry for a three-face chain.
    pub fn chain_entry(&self, a: FaceId, b: FaceId, c: FaceId) -> Option<&InterVisEntry> {
        self.index.pos2.get(&(a, b, c)).map(|&i| &self.entries[i])
    }

    /// Faces with an order-1 entry from `f`.
    pub fn order1_targets(&self, f: FaceId) -> &[FaceId] {
        self.index.order1.get(f).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Faces that may receive a ray reflected once by `f`.
    pub fn first_successors(&self, f: FaceId) -> &[FaceId] {
        self.index.after1.get(f).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Faces that may follow the reflections `prev -> cur`.
    pub fn next_successors(&self, prev: FaceId, cur: FaceId) -> &[FaceId] {
        let pruned = self.max_order >= 2 && self.entry(prev, cur).is_some();
        if !pruned {
            return self.first_successors(cur);
        }
        match self.index.after2.get(&(prev, cur)) {
            Some(v) => v,
            None => self.index.fallback.get(cur).map(|v| v.as_slice()).unwrap_or(&[]),
        }
    }

    pub fn entries_of_order(&self, order: usize) -> impl Iterator<Item = &InterVisEntry> {
        self.entries.iter().filter(move |e| e.order == order)
    }

    /// Number of entries per order `1..=max_order`; orders above 2 count admissible chains.
    pub fn entry_counts(&self) -> Vec<(usize, u64)> {
        let mut out = Vec::new();
        let n1 = self.entries_of_order(1).count() as u64;
        out.push((1, n1));
        if self.max_order < 2 {
            return out;
        }
        let mut ways: HashMap<(FaceId, FaceId), u64> = HashMap::new();
        for e in self.entries_of_order(2) {
            *ways.entry((e.chain[1], e.chain[2])).or_default() += 1;
        }
        out.push((2, ways.values().sum()));
        for order in 3..=self.max_order {
            let mut next: HashMap<(FaceId, FaceId), u64> = HashMap::new();
            for (&(a, b), &w) in &ways {
                if let Some(cs) = self.index.after2.get(&(a, b)) {
                    for &c in cs {
                        if self.index.pos2.contains_key(&(a, b, c)) {
                            *next.entry((b, c)).or_default() += w;
                        }
                    }
                }
            }
            out.push((order, next.values().sum()));
            ways = next;
        }
        out
    }

    /// Whether the matrix was built for `scene`.
    pub fn matches(&self, scene: &Scene) -> bool {
        self.face_names.len() == scene.faces.len()
            && self.face_names.iter().zip(&scene.faces).all(|(n, f)| *n == f.name)
    }

    pub fn to_json(&self) -> Result<String, MatrixError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str, scene: &Scene) -> Result<InterVisMatrix, MatrixError> {
        let mut m: InterVisMatrix = serde_json::from_str(text)?;
        if !m.matches(scene) {
            return Err(MatrixError::SceneMismatch);
        }
        m.rebuild_index(scene.faces.len());
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MatrixError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, scene: &Scene) -> Result<InterVisMatrix, MatrixError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text, scene)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::scene::{BoxFaces, Material, SceneBuilder};

    fn facing_squares() -> Scene {
        // two unit walls 1 m apart facing each other
        SceneBuilder::new()
            .material(Material::concrete())
            .add_box("L", Vec3::new(-1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 1.0), BoxFaces::named(&[("east", "P")]), "concrete", true)
            .add_box("R", Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 1.0, 1.0), BoxFaces::named(&[("west", "Q")]), "concrete", true)
            .build()
            .unwrap()
    }

    #[test]
    fn unit_square_ranges_are_symmetric() {
        let s = facing_squares();
        let p = s.face_by_name("P").unwrap();
        let q = s.face_by_name("Q").unwrap();
        let rel = classify_relation(p, q).unwrap();
        assert_eq!(rel.kind, RelationKind::Parallel);
        assert_eq!(rel.plane, PlaneTag::XY);
        let r = first_order_ranges(&s, p, q, &rel);
        for e in &r.edges {
            assert!((e.low - 45.0).abs() < 1e-9 && (e.high - 90.0).abs() < 1e-9, "{e:?}");
            assert!(e.edge.is_some());
        }
    }

    #[test]
    fn self_pair_is_rejected() {
        let s = facing_squares();
        let p = s.face_by_name("P").unwrap();
        assert!(matches!(classify_relation(p, p), Err(MatrixError::SelfPair(_))));
    }

    #[test]
    fn isolated_box_has_empty_matrix() {
        let s = SceneBuilder::new()
            .material(Material::concrete())
            .add_box("B", Vec3::ZERO, Vec3::new(5.0, 5.0, 5.0), BoxFaces::default(), "concrete", true)
            .build()
            .unwrap();
        let m = build_matrix(&s, 2).unwrap();
        assert!(m.entries.is_empty());
    }

    #[test]
    fn order1_symmetry_and_round_trip() {
        let s = facing_squares();
        let m = build_matrix(&s, 3).unwrap();
        for e in m.entries_of_order(1) {
            assert!(m.entry(e.aim(), e.reference()).is_some());
        }
        let back = InterVisMatrix::from_json(&m.to_json().unwrap(), &s).unwrap();
        assert_eq!(back.entries, m.entries);
        assert_eq!(back.entry_counts(), m.entry_counts());
        // P -> Q -> P ping-pong exists at every order
        assert!(m.entry_counts().iter().all(|&(_, c)| c >= 1));
    }
}
