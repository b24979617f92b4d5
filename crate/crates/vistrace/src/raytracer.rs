//! Image-method path finding: an exhaustive tracer and a tracer driven by visibility data.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{mirror_point, Point3, EPS};
use crate::scene::{BuildingId, EdgeId, FaceId, Scene, Trajectory};
use crate::vismatrix::InterVisMatrix;
use crate::vistable::{
    candidate_tree, closest_diffraction_edge, coherence_times, combine_movers, trajectory_vis_table, CoherenceReport,
    CombinedReport, TrajectoryTable, VisError,
};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{which} at {point:?} lies inside building {building}")]
    Placement { which: &'static str, point: Point3, building: BuildingId },
    #[error("transmitter and receiver coincide")]
    SamePoint,
    #[error("non-finite endpoint")]
    NonFinite,
    #[error("matrix order {have} is below the requested reflection order {need}")]
    MatrixOrder { have: usize, need: usize },
    #[error("matrix was built for a different scene")]
    MatrixMismatch,
    #[error(transparent)]
    Vis(#[from] VisError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InteractionKind {
    Reflection,
    Diffraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub kind: InteractionKind,
    /// Face ID for reflections, edge ID for diffractions.
    pub id: usize,
    pub point: Point3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub tx: Point3,
    pub rx: Point3,
    pub interactions: Vec<Interaction>,
    /// Total length in meters.
    pub length: f64,
    /// Propagation delay in seconds.
    pub delay: f64,
}

impl Path {
    fn new(tx: Point3, rx: Point3, interactions: Vec<Interaction>) -> Path {
        let mut p = Path { tx, rx, interactions, length: 0.0, delay: 0.0 };
        p.length = p.segments().iter().map(|(a, b)| a.distance(*b)).sum();
        p.delay = p.length / SPEED_OF_LIGHT;
        p
    }

    /// Canonical identity: the `(kind, id)` sequence.
    pub fn key(&self) -> Vec<(InteractionKind, usize)> {
        self.interactions.iter().map(|i| (i.kind, i.id)).collect()
    }

    pub fn points(&self) -> Vec<Point3> {
        let mut v = Vec::with_capacity(self.interactions.len() + 2);
        v.push(self.tx);
        v.extend(self.interactions.iter().map(|i| i.point));
        v.push(self.rx);
        v
    }

    pub fn segments(&self) -> Vec<(Point3, Point3)> {
        self.points().windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn reflection_count(&self) -> usize {
        self.interactions.iter().filter(|i| i.kind == InteractionKind::Reflection).count()
    }

    pub fn diffraction(&self) -> Option<&Interaction> {
        self.interactions.iter().find(|i| i.kind == InteractionKind::Diffraction)
    }

    pub fn is_los(&self) -> bool {
        self.interactions.is_empty()
    }

    /// Human-readable interaction sequence such as `LoS` or `R:B1.N > D:17`.
    pub fn label(&self, scene: &Scene) -> String {
        if self.interactions.is_empty() {
            return "LoS".to_string();
        }
        self.interactions
            .iter()
            .map(|i| match i.kind {
                InteractionKind::Reflection => format!("R:{}", scene.faces[i.id].name),
                InteractionKind::Diffraction => format!("D:{}", i.id),
            })
            .collect::<Vec<_>>()
            .join(" > ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceConfig {
    pub max_reflections: usize,
    pub diffraction: bool,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig { max_reflections: 3, diffraction: true }
    }
}

/// Node of an explicit image tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageTreeNode {
    pub face: FaceId,
    pub image: Point3,
    pub parent: Option<usize>,
    pub depth: usize,
}

/// Full image tree of a source over every face, pruning only mirrors the image lies behind.
pub fn image_tree(scene: &Scene, tx: Point3, max_depth: usize) -> Vec<ImageTreeNode> {
    let mut nodes: Vec<ImageTreeNode> = Vec::new();
    let mut frontier: Vec<Option<usize>> = vec![None];
    for depth in 1..=max_depth {
        let mut next = Vec::new();
        for parent in frontier {
            let (src, last) = match parent {
                None => (tx, None),
                Some(p) => (nodes[p].image, Some(nodes[p].face)),
            };
            for f in &scene.faces {
                if Some(f.id) == last || f.signed_distance(src) <= EPS {
                    continue;
                }
                nodes.push(ImageTreeNode { face: f.id, image: mirror_point(src, f.polygon.plane()), parent, depth });
                next.push(Some(nodes.len() - 1));
            }
        }
        frontier = next;
    }
    nodes
}

fn check_endpoints(scene: &Scene, tx: Point3, rx: Point3) -> Result<(), TraceError> {
    if !tx.is_finite() || !rx.is_finite() {
        return Err(TraceError::NonFinite);
    }
    if tx.distance(rx) <= EPS {
        return Err(TraceError::SamePoint);
    }
    if let Some(b) = scene.building_containing(tx) {
        return Err(TraceError::Placement { which: "transmitter", point: tx, building: b });
    }
    if let Some(b) = scene.building_containing(rx) {
        return Err(TraceError::Placement { which: "receiver", point: rx, building: b });
    }
    Ok(())
}

/// Images of `tx` across `seq`, or `None` if some mirror faces away from the running image.
fn images(scene: &Scene, tx: Point3, seq: &[FaceId]) -> Option<Vec<Point3>> {
    let mut out = Vec::with_capacity(seq.len() + 1);
    out.push(tx);
    let mut cur = tx;
    for &f in seq {
        let face = &scene.faces[f];
        if face.signed_distance(cur) <= EPS {
            return None;
        }
        cur = mirror_point(cur, face.polygon.plane());
        out.push(cur);
    }
    Some(out)
}

/// Reflection points of `seq` from `tx` to `target` by backward unfolding, with each point
/// inside its face and both neighbors strictly in front of it.
fn unfold(scene: &Scene, imgs: &[Point3], seq: &[FaceId], target: Point3) -> Option<Vec<Point3>> {
    let k = seq.len();
    let mut pts = vec![Point3::ZERO; k];
    let mut next = target;
    for j in (0..k).rev() {
        let face = &scene.faces[seq[j]];
        let dn = face.signed_distance(next);
        if dn <= EPS {
            return None;
        }
        let img = imgs[j + 1];
        let di = face.signed_distance(img);
        let p = img.lerp(next, di / (di - dn));
        if !face.polygon.contains_on_plane(p, EPS) {
            return None;
        }
        pts[j] = p;
        next = p;
    }
    for j in 0..k {
        let prev = if j == 0 { imgs[0] } else { pts[j - 1] };
        if scene.faces[seq[j]].signed_distance(prev) <= EPS {
            return None;
        }
    }
    Some(pts)
}

fn chain_clear(scene: &Scene, pts: &[Point3]) -> bool {
    pts.windows(2).all(|w| w[0].distance(w[1]) > EPS && scene.segment_clear(w[0], w[1]))
}

/// Point on an edge minimizing the total distance from `from` to `to`.
fn diffraction_point(scene: &Scene, edge: EdgeId, from: Point3, to: Point3) -> Option<Point3> {
    let e = &scene.edges[edge];
    let len = e.length();
    let u = (e.b - e.a) * (1.0 / len);
    let pf = (from - e.a).dot(u);
    let pt = (to - e.a).dot(u);
    let rf = (from - (e.a + u * pf)).norm();
    let rt = (to - (e.a + u * pt)).norm();
    if rf + rt <= EPS {
        return None;
    }
    let s = (pf * rt + pt * rf) / (rf + rt);
    if s < -EPS || s > len + EPS {
        return None;
    }
    Some(e.a + u * s.clamp(0.0, len))
}

/// Validated reflection path through `seq`.
fn reflection_path(scene: &Scene, tx: Point3, rx: Point3, seq: &[FaceId], imgs: &[Point3]) -> Option<Path> {
    let pts = unfold(scene, imgs, seq, rx)?;
    let mut chain = Vec::with_capacity(seq.len() + 2);
    chain.push(tx);
    chain.extend_from_slice(&pts);
    chain.push(rx);
    if !chain_clear(scene, &chain) {
        return None;
    }
    let inter = seq
        .iter()
        .zip(pts)
        .map(|(&f, p)| Interaction { kind: InteractionKind::Reflection, id: f, point: p })
        .collect();
    Some(Path::new(tx, rx, inter))
}

/// Validated path through `seq` followed by a diffraction on `edge`.
fn diffraction_path(
    scene: &Scene,
    tx: Point3,
    rx: Point3,
    seq: &[FaceId],
    imgs: &[Point3],
    edge: EdgeId,
) -> Option<Path> {
    let d = diffraction_point(scene, edge, *imgs.last().unwrap(), rx)?;
    let pts = unfold(scene, imgs, seq, d)?;
    let mut chain = Vec::with_capacity(seq.len() + 3);
    chain.push(tx);
    chain.extend_from_slice(&pts);
    chain.push(d);
    chain.push(rx);
    if !chain_clear(scene, &chain) {
        return None;
    }
    let mut inter: Vec<Interaction> = seq
        .iter()
        .zip(pts)
        .map(|(&f, p)| Interaction { kind: InteractionKind::Reflection, id: f, point: p })
        .collect();
    inter.push(Interaction { kind: InteractionKind::Diffraction, id: edge, point: d });
    Some(Path::new(tx, rx, inter))
}

/// Paths through one reflection sequence: the specular path and, if enabled, the
/// diffracted path ending at `edge`.
fn paths_for_sequence(
    scene: &Scene,
    tx: Point3,
    rx: Point3,
    seq: &[FaceId],
    edge: Option<EdgeId>,
    out: &mut Vec<Path>,
) {
    let Some(imgs) = images(scene, tx, seq) else { return };
    if seq.is_empty() {
        if chain_clear(scene, &[tx, rx]) {
            out.push(Path::new(tx, rx, Vec::new()));
        }
    } else if let Some(p) = reflection_path(scene, tx, rx, seq, &imgs) {
        out.push(p);
    }
    if let Some(e) = edge {
        if let Some(p) = diffraction_path(scene, tx, rx, seq, &imgs, e) {
            out.push(p);
        }
    }
}

fn cmp_paths(a: &Path, b: &Path) -> Ordering {
    a.key().cmp(&b.key())
}

fn finish(mut paths: Vec<Path>) -> Vec<Path> {
    paths.sort_by(cmp_paths);
    paths
}

/// Every valid path up to `cfg.max_reflections` reflections, found by expanding images over
/// all faces.
pub fn brute_force_trace(scene: &Scene, tx: Point3, rx: Point3, cfg: TraceConfig) -> Result<Vec<Path>, TraceError> {
    check_endpoints(scene, tx, rx)?;
    let edge = if cfg.diffraction { diffraction_edge_of(scene, rx) } else { None };
    let mut out = Vec::new();
    paths_for_sequence(scene, tx, rx, &[], edge, &mut out);
    let roots: Vec<FaceId> = scene.faces.iter().filter(|f| f.signed_distance(tx) > EPS).map(|f| f.id).collect();
    let found: Vec<Vec<Path>> = roots
        .par_iter()
        .map(|&f| {
            let mut local = Vec::new();
            let mut seq = vec![f];
            let mut imgs = vec![tx, mirror_point(tx, scene.faces[f].polygon.plane())];
            expand(scene, tx, rx, cfg.max_reflections, edge, &mut seq, &mut imgs, &mut local);
            local
        })
        .collect();
    out.extend(found.into_iter().flatten());
    Ok(finish(out))
}

fn diffraction_edge_of(scene: &Scene, rx: Point3) -> Option<EdgeId> {
    crate::vistable::nearest_visible_edge(rx, scene)
}

#[allow(clippy::too_many_arguments)]
fn expand(
    scene: &Scene,
    tx: Point3,
    rx: Point3,
    max: usize,
    edge: Option<EdgeId>,
    seq: &mut Vec<FaceId>,
    imgs: &mut Vec<Point3>,
    out: &mut Vec<Path>,
) {
    if seq.len() > max {
        return;
    }
    if let Some(p) = reflection_path(scene, tx, rx, seq, imgs) {
        out.push(p);
    }
    if let Some(e) = edge {
        if let Some(p) = diffraction_path(scene, tx, rx, seq, imgs, e) {
            out.push(p);
        }
    }
    if seq.len() == max {
        return;
    }
    let cur = *imgs.last().unwrap();
    let last = *seq.last().unwrap();
    for f in &scene.faces {
        if f.id == last || f.signed_distance(cur) <= EPS {
            continue;
        }
        seq.push(f.id);
        imgs.push(mirror_point(cur, f.polygon.plane()));
        expand(scene, tx, rx, max, edge, seq, imgs, out);
        seq.pop();
        imgs.pop();
    }
}

fn check_matrix(scene: &Scene, matrix: &InterVisMatrix, cfg: TraceConfig) -> Result<(), TraceError> {
    if !matrix.matches(scene) {
        return Err(TraceError::MatrixMismatch);
    }
    if cfg.max_reflections > matrix.max_order.max(1) {
        return Err(TraceError::MatrixOrder { have: matrix.max_order, need: cfg.max_reflections });
    }
    Ok(())
}

fn trace_candidates(
    scene: &Scene,
    tx: Point3,
    rx: Point3,
    sequences: &[Vec<FaceId>],
    edge: Option<EdgeId>,
) -> Vec<Path> {
    let mut out = Vec::new();
    paths_for_sequence(scene, tx, rx, &[], edge, &mut out);
    for seq in sequences {
        paths_for_sequence(scene, tx, rx, seq, edge, &mut out);
    }
    finish(out)
}

/// Valid paths whose reflection sequences come from the candidate tree of `tx`.
pub fn accelerated_trace(
    scene: &Scene,
    matrix: &InterVisMatrix,
    tx: Point3,
    rx: Point3,
    cfg: TraceConfig,
) -> Result<Vec<Path>, TraceError> {
    check_endpoints(scene, tx, rx)?;
    check_matrix(scene, matrix, cfg)?;
    let edge = if cfg.diffraction { closest_diffraction_edge(rx, scene, matrix) } else { None };
    let tree = candidate_tree(tx, matrix, scene, cfg.max_reflections);
    Ok(trace_candidates(scene, tx, rx, &tree.sequences(), edge))
}

/// Receiver of a dynamic run.
#[derive(Debug, Clone, PartialEq)]
pub enum Receiver {
    Fixed(Point3),
    /// Moves on its own route, aligned with the transmitter by elapsed time.
    Moving(Trajectory),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicSample {
    /// Transmitter arc length.
    pub s: f64,
    pub time: f64,
    pub tx: Point3,
    pub rx: Point3,
    /// Index of the constant-candidate interval the sample falls in.
    pub interval: usize,
    pub paths: Vec<Path>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicTrace {
    pub samples: Vec<DynamicSample>,
    pub table: TrajectoryTable,
    pub coherence: CoherenceReport,
    /// Combined coherence when the receiver moves too.
    pub combined: Option<CombinedReport>,
    /// Number of candidate searches performed.
    pub retraces: usize,
}

/// Traces a moving transmitter at the arc lengths `samples`. Candidate sequences are searched
/// once per constant-candidate interval of the trajectory table and re-solved at every sample.
pub fn dynamic_trace(
    scene: &Scene,
    matrix: &InterVisMatrix,
    traj: &Trajectory,
    receiver: &Receiver,
    cfg: TraceConfig,
    samples: &[f64],
) -> Result<DynamicTrace, TraceError> {
    check_matrix(scene, matrix, cfg)?;
    let table = trajectory_vis_table(traj, matrix, scene, cfg.max_reflections.max(1))?;
    let coherence = coherence_times(&table, traj)?;
    let combined = match receiver {
        Receiver::Fixed(_) => None,
        Receiver::Moving(rt) => {
            let rtable = trajectory_vis_table(rt, matrix, scene, cfg.max_reflections.max(1))?;
            Some(combine_movers(&coherence, &coherence_times(&rtable, rt)?))
        }
    };
    let interval_of = |s: f64| {
        table.intervals.iter().position(|iv| s >= iv.0 && s < iv.1).unwrap_or(table.intervals.len() - 1)
    };
    let mut used = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(samples.len());
    for &s in samples {
        let tx = traj.point_at(s);
        let time = traj.time_at(s);
        let rx = match receiver {
            Receiver::Fixed(p) => *p,
            Receiver::Moving(rt) => rt.point_at(rt.arc_at_time(time)),
        };
        check_endpoints(scene, tx, rx)?;
        let k = interval_of(s);
        used.insert(k);
        let seqs: Vec<Vec<FaceId>> =
            if cfg.max_reflections == 0 { Vec::new() } else { table.intervals[k].2.clone() };
        let seqs: Vec<Vec<FaceId>> = seqs.into_iter().filter(|q| q.len() <= cfg.max_reflections).collect();
        let edge = if cfg.diffraction { closest_diffraction_edge(rx, scene, matrix) } else { None };
        out.push(DynamicSample { s, time, tx, rx, interval: k, paths: trace_candidates(scene, tx, rx, &seqs, edge) });
    }
    Ok(DynamicTrace { samples: out, table, coherence, combined, retraces: used.len() })
}

/// Sequences present in one path set but not the other, as `(only_a, only_b)`.
pub fn path_set_difference(a: &[Path], b: &[Path]) -> (Vec<Path>, Vec<Path>) {
    let ka: std::collections::BTreeSet<_> = a.iter().map(|p| p.key()).collect();
    let kb: std::collections::BTreeSet<_> = b.iter().map(|p| p.key()).collect();
    (
        a.iter().filter(|p| !kb.contains(&p.key())).cloned().collect(),
        b.iter().filter(|p| !ka.contains(&p.key())).cloned().collect(),
    )
}

/// Largest distance between matching interaction points of two path sets with equal keys.
pub fn max_point_gap(a: &[Path], b: &[Path]) -> f64 {
    let mut gap: f64 = 0.0;
    for p in a {
        if let Some(q) = b.iter().find(|q| q.key() == p.key()) {
            for (x, y) in p.interactions.iter().zip(&q.interactions) {
                gap = gap.max(x.point.distance(y.point));
            }
        }
    }
    gap
}
