//! Scene database: materials, buildings, faces, edges and trajectories.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    segment_polygon_intersection, ConvexPolygon, GeometryError, Point3, Vec3, Vector3, EPS, EPS_ANG,
};

pub type FaceId = usize;
pub type EdgeId = usize;
pub type BuildingId = usize;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("face {face}: {reason}")]
    InvalidFace { face: String, reason: String },
    #[error("building {building}: {reason}")]
    InvalidBuilding { building: String, reason: String },
    #[error("duplicate face ID {0}")]
    DuplicateFace(String),
    #[error("duplicate building ID {0}")]
    DuplicateBuilding(String),
    #[error("material {name}: {reason}")]
    InvalidMaterial { name: String, reason: String },
    #[error("unknown material {material} referenced by face {face}")]
    UnknownMaterial { face: String, material: String },
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("invalid generator parameters: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub name: String,
    /// Relative permittivity.
    pub permittivity: f64,
    /// Conductivity in S/m.
    pub conductivity: f64,
}

impl Material {
    pub fn new(name: &str, permittivity: f64, conductivity: f64) -> Self {
        Material { name: name.to_string(), permittivity, conductivity }
    }

    /// Concrete at 5 GHz.
    pub fn concrete() -> Self {
        Material::new("concrete", 5.31, 0.15)
    }

    /// Dry ground.
    pub fn ground() -> Self {
        Material::new("ground", 3.0, 0.005)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Orientation {
    Horizontal,
    Vertical,
    Oblique,
}

impl Orientation {
    pub fn of_normal(n: Vector3) -> Orientation {
        let horiz = n.x.hypot(n.y);
        if horiz.atan2(n.z.abs()).to_degrees() <= EPS_ANG {
            Orientation::Horizontal
        } else if n.z.abs().atan2(horiz).to_degrees() <= EPS_ANG {
            Orientation::Vertical
        } else {
            Orientation::Oblique
        }
    }

    pub fn letter(self) -> char {
        match self {
            Orientation::Horizontal => 'H',
            Orientation::Vertical => 'V',
            Orientation::Oblique => 'O',
        }
    }
}

/// Planar convex face with outward normal.
#[derive(Debug, Clone)]
pub struct Face {
    pub id: FaceId,
    pub name: String,
    /// `None` for the ground face.
    pub building: Option<BuildingId>,
    pub vertex_indices: Vec<usize>,
    pub polygon: ConvexPolygon,
    pub orientation: Orientation,
    pub material: usize,
}

impl Face {
    pub fn normal(&self) -> Vector3 {
        self.polygon.normal()
    }

    pub fn vertices(&self) -> &[Point3] {
        self.polygon.vertices()
    }

    pub fn signed_distance(&self, p: Point3) -> f64 {
        self.polygon.plane().signed_distance(p)
    }
}

/// Straight edge shared by one or two faces of a building.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub a: Point3,
    pub b: Point3,
    pub vertex_indices: [usize; 2],
    pub faces: Vec<FaceId>,
    /// Two non-coplanar adjacent faces and not lying on the ground.
    pub diffracting: bool,
}

impl Edge {
    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Building {
    pub id: BuildingId,
    pub name: String,
    pub faces: Vec<FaceId>,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub materials: Vec<Material>,
    pub vertices: Vec<Point3>,
    pub buildings: Vec<Building>,
    pub faces: Vec<Face>,
    pub ground: Option<FaceId>,
    pub edges: Vec<Edge>,
    pub bbox: (Point3, Point3),
}

// ---- file format ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceRecord {
    pub id: String,
    pub vertices: Vec<usize>,
    pub material: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingRecord {
    pub id: String,
    pub faces: Vec<FaceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub materials: Vec<Material>,
    pub vertices: Vec<Point3>,
    pub buildings: Vec<BuildingRecord>,
    #[serde(default)]
    pub ground: Option<FaceRecord>,
}

/// Reads and validates a scene document.
pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene, SceneError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| SceneError::Io { path: path.display().to_string(), source })?;
    let file: SceneFile = serde_json::from_str(&text)?;
    Scene::from_file(file)
}

/// Writes a scene document.
pub fn save_scene(scene: &Scene, path: impl AsRef<Path>) -> Result<(), SceneError> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&scene.to_file())?;
    std::fs::write(path, text).map_err(|source| SceneError::Io { path: path.display().to_string(), source })
}

impl Scene {
    pub fn from_file(file: SceneFile) -> Result<Scene, SceneError> {
        let mut mat_index = HashMap::new();
        for (i, m) in file.materials.iter().enumerate() {
            if !(m.permittivity >= 1.0 && m.permittivity.is_finite()) {
                return Err(SceneError::InvalidMaterial { name: m.name.clone(), reason: "permittivity must be >= 1".into() });
            }
            if !(m.conductivity >= 0.0 && m.conductivity.is_finite()) {
                return Err(SceneError::InvalidMaterial { name: m.name.clone(), reason: "conductivity must be >= 0".into() });
            }
            if mat_index.insert(m.name.clone(), i).is_some() {
                return Err(SceneError::InvalidMaterial { name: m.name.clone(), reason: "duplicate material".into() });
            }
        }
        if let Some(p) = file.vertices.iter().find(|p| !p.is_finite()) {
            return Err(SceneError::InvalidFace { face: "-".into(), reason: format!("non-finite vertex {p:?}") });
        }

        let mut faces = Vec::new();
        let mut names = HashSet::new();
        let mut make_face = |rec: &FaceRecord, building: Option<BuildingId>, faces: &mut Vec<Face>| -> Result<FaceId, SceneError> {
            if !names.insert(rec.id.clone()) {
                return Err(SceneError::DuplicateFace(rec.id.clone()));
            }
            let material = *mat_index
                .get(&rec.material)
                .ok_or_else(|| SceneError::UnknownMaterial { face: rec.id.clone(), material: rec.material.clone() })?;
            let mut pts = Vec::with_capacity(rec.vertices.len());
            for &vi in &rec.vertices {
                let p = file.vertices.get(vi).ok_or_else(|| SceneError::InvalidFace {
                    face: rec.id.clone(),
                    reason: format!("vertex index {vi} out of range"),
                })?;
                pts.push(*p);
            }
            let polygon = ConvexPolygon::new(pts).map_err(|e: GeometryError| SceneError::InvalidFace {
                face: rec.id.clone(),
                reason: e.to_string(),
            })?;
            let id = faces.len();
            faces.push(Face {
                id,
                name: rec.id.clone(),
                building,
                vertex_indices: rec.vertices.clone(),
                orientation: Orientation::of_normal(polygon.normal()),
                polygon,
                material,
            });
            Ok(id)
        };

        let mut buildings = Vec::new();
        let mut bnames = HashSet::new();
        for (bi, b) in file.buildings.iter().enumerate() {
            if !bnames.insert(b.id.clone()) {
                return Err(SceneError::DuplicateBuilding(b.id.clone()));
            }
            if b.faces.is_empty() {
                return Err(SceneError::InvalidBuilding { building: b.id.clone(), reason: "no faces".into() });
            }
            let mut ids = Vec::new();
            for f in &b.faces {
                ids.push(make_face(f, Some(bi), &mut faces)?);
            }
            buildings.push(Building { id: bi, name: b.id.clone(), faces: ids });
        }
        let ground = match &file.ground {
            Some(g) => Some(make_face(g, None, &mut faces)?),
            None => None,
        };
        if let Some(g) = ground {
            if faces[g].orientation != Orientation::Horizontal || faces[g].normal().z <= 0.0 {
                return Err(SceneError::InvalidFace { face: faces[g].name.clone(), reason: "ground must face upward".into() });
            }
        }

        let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        for f in &faces {
            for p in f.vertices() {
                lo = Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
                hi = Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
            }
        }
        if faces.is_empty() {
            lo = Vec3::ZERO;
            hi = Vec3::ZERO;
        }

        let mut scene = Scene {
            materials: file.materials,
            vertices: file.vertices,
            buildings,
            faces,
            ground,
            edges: Vec::new(),
            bbox: (lo, hi),
        };
        scene.build_edges()?;
        scene.check_buildings()?;
        Ok(scene)
    }

    fn build_edges(&mut self) -> Result<(), SceneError> {
        let mut map: BTreeMap<(usize, usize), Vec<FaceId>> = BTreeMap::new();
        for f in &self.faces {
            if f.building.is_none() {
                continue;
            }
            let n = f.vertex_indices.len();
            for i in 0..n {
                let a = f.vertex_indices[i];
                let b = f.vertex_indices[(i + 1) % n];
                map.entry((a.min(b), a.max(b))).or_default().push(f.id);
            }
        }
        let ground_plane = self.ground.map(|g| *self.faces[g].polygon.plane());
        let mut edges = Vec::new();
        for ((a, b), fs) in map {
            if fs.len() > 2 {
                let f = &self.faces[fs[0]];
                return Err(SceneError::InvalidFace { face: f.name.clone(), reason: "edge shared by more than two faces".into() });
            }
            let pa = self.vertices[a];
            let pb = self.vertices[b];
            let mut diffracting = fs.len() == 2 && {
                let n0 = self.faces[fs[0]].normal();
                let n1 = self.faces[fs[1]].normal();
                n0.cross(n1).norm() > 1e-12
            };
            if let Some(gp) = ground_plane {
                if gp.signed_distance(pa).abs() <= EPS && gp.signed_distance(pb).abs() <= EPS {
                    diffracting = false;
                }
            }
            edges.push(Edge { id: edges.len(), a: pa, b: pb, vertex_indices: [a, b], faces: fs, diffracting });
        }
        self.edges = edges;
        Ok(())
    }

    fn check_buildings(&self) -> Result<(), SceneError> {
        for b in &self.buildings {
            let bottom = b
                .faces
                .iter()
                .flat_map(|&f| self.faces[f].vertices().iter().map(|p| p.z))
                .fold(f64::INFINITY, f64::min);
            for e in &self.edges {
                if e.faces.len() == 1 && self.faces[e.faces[0]].building == Some(b.id) {
                    let open_bottom = (e.a.z - bottom).abs() <= EPS && (e.b.z - bottom).abs() <= EPS;
                    if !open_bottom {
                        return Err(SceneError::InvalidBuilding {
                            building: b.name.clone(),
                            reason: format!("shell is open along edge {}", e.id),
                        });
                    }
                }
            }
            let verts: HashSet<usize> = b.faces.iter().flat_map(|&f| self.faces[f].vertex_indices.iter().copied()).collect();
            for &fid in &b.faces {
                let f = &self.faces[fid];
                let others: Vec<f64> = verts
                    .iter()
                    .filter(|v| !f.vertex_indices.contains(v))
                    .map(|&v| f.signed_distance(self.vertices[v]))
                    .collect();
                if !others.is_empty() && others.iter().all(|&d| d > EPS) {
                    return Err(SceneError::InvalidFace {
                        face: f.name.clone(),
                        reason: "normal points into the building (check vertex winding)".into(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_file(&self) -> SceneFile {
        let rec = |f: &Face| FaceRecord {
            id: f.name.clone(),
            vertices: f.vertex_indices.clone(),
            material: self.materials[f.material].name.clone(),
        };
        SceneFile {
            materials: self.materials.clone(),
            vertices: self.vertices.clone(),
            buildings: self
                .buildings
                .iter()
                .map(|b| BuildingRecord { id: b.name.clone(), faces: b.faces.iter().map(|&f| rec(&self.faces[f])).collect() })
                .collect(),
            ground: self.ground.map(|g| rec(&self.faces[g])),
        }
    }

    pub fn face(&self, id: FaceId) -> &Face {
        &self.faces[id]
    }

    pub fn face_by_name(&self, name: &str) -> Option<&Face> {
        self.faces.iter().find(|f| f.name == name)
    }

    pub fn material_of(&self, face: FaceId) -> &Material {
        &self.materials[self.faces[face].material]
    }

    /// Building faces only (excludes the ground).
    pub fn building_face_count(&self) -> usize {
        self.faces.iter().filter(|f| f.building.is_some()).count()
    }

    /// First face strictly crossed by the open segment, if any.
    pub fn first_blocker(&self, a: Point3, b: Point3) -> Option<FaceId> {
        self.faces
            .iter()
            .find(|f| segment_polygon_intersection(a, b, &f.polygon).is_some())
            .map(|f| f.id)
    }

    pub fn segment_clear(&self, a: Point3, b: Point3) -> bool {
        self.first_blocker(a, b).is_none()
    }

    /// Building whose interior contains `p`.
    pub fn building_containing(&self, p: Point3) -> Option<BuildingId> {
        let dir = Vec3::new(0.1234567, 0.2345678, 0.9642123).normalized().unwrap();
        let reach = (self.bbox.1 - self.bbox.0).norm() * 4.0 + p.distance(self.bbox.0) + 1.0;
        let far = p + dir * reach;
        for b in &self.buildings {
            let crossings = b
                .faces
                .iter()
                .filter(|&&f| segment_polygon_intersection(p, far, &self.faces[f].polygon).is_some())
                .count();
            if crossings % 2 == 1 {
                return Some(b.id);
            }
        }
        None
    }

    /// Faces that are not labeled Oblique.
    pub fn is_oblique(&self, f: FaceId) -> bool {
        self.faces[f].orientation == Orientation::Oblique
    }
}

// ---- construction helpers ----

/// Names for the faces of an axis-aligned box. Unset names default to `<building>.<side>`.
#[derive(Debug, Clone, Default)]
pub struct BoxFaces {
    pub west: Option<String>,
    pub east: Option<String>,
    pub south: Option<String>,
    pub north: Option<String>,
    pub roof: Option<String>,
    pub floor: Option<String>,
}

impl BoxFaces {
    pub fn named(pairs: &[(&str, &str)]) -> BoxFaces {
        let mut b = BoxFaces::default();
        for &(side, name) in pairs {
            let slot = match side {
                "west" => &mut b.west,
                "east" => &mut b.east,
                "south" => &mut b.south,
                "north" => &mut b.north,
                "roof" => &mut b.roof,
                "floor" => &mut b.floor,
                other => panic!("unknown box side {other}"),
            };
            *slot = Some(name.to_string());
        }
        b
    }
}

/// Incremental builder for scenes made of boxes.
#[derive(Debug, Clone, Default)]
pub struct SceneBuilder {
    file: SceneFile,
}

impl Default for SceneFile {
    fn default() -> Self {
        SceneFile { materials: Vec::new(), vertices: Vec::new(), buildings: Vec::new(), ground: None }
    }
}

impl SceneBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn material(mut self, m: Material) -> Self {
        self.file.materials.push(m);
        self
    }

    fn vertex(&mut self, p: Point3) -> usize {
        self.file.vertices.push(p);
        self.file.vertices.len() - 1
    }

    /// Adds a box building spanning `lo..hi`. The floor face is emitted only if `with_floor`.
    pub fn add_box(mut self, name: &str, lo: Point3, hi: Point3, faces: BoxFaces, material: &str, with_floor: bool) -> Self {
        let (x0, y0, z0, x1, y1, z1) = (lo.x, lo.y, lo.z, hi.x, hi.y, hi.z);
        let v = [
            self.vertex(Vec3::new(x0, y0, z0)),
            self.vertex(Vec3::new(x1, y0, z0)),
            self.vertex(Vec3::new(x1, y1, z0)),
            self.vertex(Vec3::new(x0, y1, z0)),
            self.vertex(Vec3::new(x0, y0, z1)),
            self.vertex(Vec3::new(x1, y0, z1)),
            self.vertex(Vec3::new(x1, y1, z1)),
            self.vertex(Vec3::new(x0, y1, z1)),
        ];
        let nm = |o: &Option<String>, side: &str| o.clone().unwrap_or_else(|| format!("{name}.{side}"));
        let rec = |id: String, idx: [usize; 4]| FaceRecord { id, vertices: idx.to_vec(), material: material.to_string() };
        let mut list = vec![
            rec(nm(&faces.west, "W"), [v[0], v[4], v[7], v[3]]),
            rec(nm(&faces.east, "E"), [v[1], v[2], v[6], v[5]]),
            rec(nm(&faces.south, "S"), [v[0], v[1], v[5], v[4]]),
            rec(nm(&faces.north, "N"), [v[3], v[7], v[6], v[2]]),
            rec(nm(&faces.roof, "R"), [v[4], v[5], v[6], v[7]]),
        ];
        if with_floor {
            list.push(rec(nm(&faces.floor, "F"), [v[0], v[3], v[2], v[1]]));
        }
        self.file.buildings.push(BuildingRecord { id: name.to_string(), faces: list });
        self
    }

    /// Upward-facing rectangular ground `x0..x1 × y0..y1` at height `z`.
    pub fn ground(mut self, name: &str, x0: f64, y0: f64, x1: f64, y1: f64, z: f64, material: &str) -> Self {
        let idx = [
            self.vertex(Vec3::new(x0, y0, z)),
            self.vertex(Vec3::new(x1, y0, z)),
            self.vertex(Vec3::new(x1, y1, z)),
            self.vertex(Vec3::new(x0, y1, z)),
        ];
        self.file.ground = Some(FaceRecord { id: name.to_string(), vertices: idx.to_vec(), material: material.to_string() });
        self
    }

    pub fn into_file(self) -> SceneFile {
        self.file
    }

    pub fn build(self) -> Result<Scene, SceneError> {
        Scene::from_file(self.file)
    }
}

/// Parameters of a grid of box buildings separated by streets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManhattanSpec {
    /// Side of the square area in meters.
    pub area: f64,
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub street_width: f64,
    pub min_height: f64,
    pub max_height: f64,
    /// Grid cells `(ix, iy)` left empty.
    pub omit: Vec<(usize, usize)>,
    pub with_floors: bool,
    pub seed: u64,
}

impl ManhattanSpec {
    /// 13 box buildings with floors in a 100 m square: 78 building faces and a ground face.
    pub fn standard() -> Self {
        ManhattanSpec {
            area: 100.0,
            blocks_x: 4,
            blocks_y: 4,
            street_width: 8.0,
            min_height: 10.0,
            max_height: 30.0,
            omit: vec![(0, 3), (2, 0), (3, 2)],
            with_floors: true,
            seed: 2024,
        }
    }

    pub fn grid(blocks_x: usize, blocks_y: usize) -> Self {
        ManhattanSpec {
            area: 100.0,
            blocks_x,
            blocks_y,
            street_width: 8.0,
            min_height: 10.0,
            max_height: 30.0,
            omit: Vec::new(),
            with_floors: false,
            seed: 1,
        }
    }
}

/// Deterministic grid city with a ground face covering the whole area.
pub fn generate_manhattan_scene(spec: &ManhattanSpec) -> Result<Scene, SceneError> {
    if !(spec.area > 0.0) || spec.blocks_x == 0 || spec.blocks_y == 0 || !(spec.street_width > 0.0) {
        return Err(SceneError::InvalidSpec("area, block counts and street width must be positive".into()));
    }
    if !(spec.min_height > 0.0) || spec.max_height < spec.min_height {
        return Err(SceneError::InvalidSpec("heights must be positive and ordered".into()));
    }
    let bx = (spec.area - (spec.blocks_x as f64 + 1.0) * spec.street_width) / spec.blocks_x as f64;
    let by = (spec.area - (spec.blocks_y as f64 + 1.0) * spec.street_width) / spec.blocks_y as f64;
    if !(bx > 0.0 && by > 0.0) {
        return Err(SceneError::InvalidSpec("streets leave no room for blocks".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut b = SceneBuilder::new().material(Material::concrete()).material(Material::ground());
    let mut count = 0;
    for iy in 0..spec.blocks_y {
        for ix in 0..spec.blocks_x {
            // draw for every cell so omitting a cell does not shift the others
            let u: f64 = rng.gen();
            if spec.omit.contains(&(ix, iy)) {
                continue;
            }
            let h = (spec.min_height + u * (spec.max_height - spec.min_height)).round();
            let x0 = spec.street_width + ix as f64 * (bx + spec.street_width);
            let y0 = spec.street_width + iy as f64 * (by + spec.street_width);
            count += 1;
            b = b.add_box(
                &format!("B{count}"),
                Vec3::new(x0, y0, 0.0),
                Vec3::new(x0 + bx, y0 + by, h),
                BoxFaces::default(),
                "concrete",
                spec.with_floors,
            );
        }
    }
    b.ground("ground", 0.0, 0.0, spec.area, spec.area, 0.0, "ground").build()
}

/// Piecewise-linear route with constant speed on each leg.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub waypoints: Vec<Point3>,
    /// `speeds[i]` applies between waypoints `i` and `i + 1`.
    pub speeds: Vec<f64>,
}

impl Trajectory {
    /// Scene axes used as reference directions.
    pub const AXIS_X: Vector3 = Vec3::new(1.0, 0.0, 0.0);
    pub const AXIS_Y: Vector3 = Vec3::new(0.0, 1.0, 0.0);
    pub const AXIS_Z: Vector3 = Vec3::new(0.0, 0.0, 1.0);

    pub fn new(waypoints: Vec<Point3>, speeds: Vec<f64>) -> Result<Trajectory, SceneError> {
        if waypoints.len() < 2 {
            return Err(SceneError::InvalidTrajectory("at least two waypoints are required".into()));
        }
        if speeds.len() != waypoints.len() - 1 {
            return Err(SceneError::InvalidTrajectory("one speed per leg is required".into()));
        }
        for (i, w) in waypoints.windows(2).enumerate() {
            if !w[0].is_finite() || !w[1].is_finite() {
                return Err(SceneError::InvalidTrajectory(format!("non-finite waypoint near index {i}")));
            }
            if w[0].distance(w[1]) <= EPS {
                return Err(SceneError::InvalidTrajectory(format!("zero-length leg {i}")));
            }
        }
        if let Some(i) = speeds.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(SceneError::InvalidTrajectory(format!("non-positive speed on leg {i}")));
        }
        Ok(Trajectory { waypoints, speeds })
    }

    /// From rows `[x, y, z, speed_after]`; the final row's speed is ignored.
    pub fn from_rows(rows: &[[f64; 4]]) -> Result<Trajectory, SceneError> {
        let pts = rows.iter().map(|r| Vec3::new(r[0], r[1], r[2])).collect();
        let speeds = rows.iter().take(rows.len().saturating_sub(1)).map(|r| r[3]).collect();
        Trajectory::new(pts, speeds)
    }

    pub fn to_rows(&self) -> Vec<[f64; 4]> {
        self.waypoints
            .iter()
            .enumerate()
            .map(|(i, p)| [p.x, p.y, p.z, *self.speeds.get(i).unwrap_or(self.speeds.last().unwrap())])
            .collect()
    }

    /// `n` evenly spaced waypoints on a straight line at constant speed.
    pub fn straight(from: Point3, to: Point3, n: usize, speed: f64) -> Result<Trajectory, SceneError> {
        if n < 2 {
            return Err(SceneError::InvalidTrajectory("at least two waypoints are required".into()));
        }
        let pts = (0..n).map(|i| from.lerp(to, i as f64 / (n - 1) as f64)).collect();
        Trajectory::new(pts, vec![speed; n - 1])
    }

    pub fn leg_lengths(&self) -> Vec<f64> {
        self.waypoints.windows(2).map(|w| w[0].distance(w[1])).collect()
    }

    pub fn length(&self) -> f64 {
        self.leg_lengths().iter().sum()
    }

    pub fn leg_duration(&self, i: usize) -> f64 {
        self.waypoints[i].distance(self.waypoints[i + 1]) / self.speeds[i]
    }

    pub fn duration(&self) -> f64 {
        (0..self.speeds.len()).map(|i| self.leg_duration(i)).sum()
    }

    /// Leg index and offset within it for arc length `s` (clamped to the route).
    fn locate(&self, s: f64) -> (usize, f64) {
        let mut acc = 0.0;
        let lens = self.leg_lengths();
        let last = lens.len() - 1;
        for (i, &l) in lens.iter().enumerate() {
            if s <= acc + l || i == last {
                return (i, (s - acc).clamp(0.0, l));
            }
            acc += l;
        }
        unreachable!()
    }

    pub fn point_at(&self, s: f64) -> Point3 {
        let (i, off) = self.locate(s);
        let a = self.waypoints[i];
        let b = self.waypoints[i + 1];
        a.lerp(b, off / a.distance(b))
    }

    pub fn direction_at(&self, s: f64) -> Vector3 {
        let (i, _) = self.locate(s);
        (self.waypoints[i + 1] - self.waypoints[i]).normalized().unwrap()
    }

    pub fn speed_at(&self, s: f64) -> f64 {
        self.speeds[self.locate(s).0]
    }

    /// Elapsed time at arc length `s`.
    pub fn time_at(&self, s: f64) -> f64 {
        let (i, off) = self.locate(s);
        (0..i).map(|k| self.leg_duration(k)).sum::<f64>() + off / self.speeds[i]
    }

    /// Arc length reached at elapsed time `t` (clamped to the route).
    pub fn arc_at_time(&self, t: f64) -> f64 {
        let mut acc_t = 0.0;
        let mut acc_s = 0.0;
        for (i, l) in self.leg_lengths().into_iter().enumerate() {
            let dt = l / self.speeds[i];
            if t <= acc_t + dt {
                return acc_s + (t - acc_t).max(0.0) * self.speeds[i];
            }
            acc_t += dt;
            acc_s += l;
        }
        acc_s
    }

    /// Arc lengths of the waypoints.
    pub fn waypoint_arc_lengths(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        for l in self.leg_lengths() {
            out.push(out.last().unwrap() + l);
        }
        out
    }
}

/// Reads a JSON array of `[x, y, z, speed_after]` rows.
pub fn load_trajectory(path: impl AsRef<Path>) -> Result<Trajectory, SceneError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| SceneError::Io { path: path.display().to_string(), source })?;
    let rows: Vec<[f64; 4]> = serde_json::from_str(&text)?;
    Trajectory::from_rows(&rows)
}

pub fn save_trajectory(traj: &Trajectory, path: impl AsRef<Path>) -> Result<(), SceneError> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&traj.to_rows())?;
    std::fs::write(path, text).map_err(|source| SceneError::Io { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_box() -> Scene {
        SceneBuilder::new()
            .material(Material::concrete())
            .add_box("B", Vec3::new(0.0, 0.0, 0.0), Vec3::new(10.0, 10.0, 10.0), BoxFaces::default(), "concrete", false)
            .build()
            .unwrap()
    }

    #[test]
    fn box_faces_point_outward() {
        let s = one_box();
        let c = Vec3::new(5.0, 5.0, 5.0);
        for f in &s.faces {
            assert!(f.signed_distance(c) < 0.0, "{}", f.name);
            assert!((f.normal().norm() - 1.0).abs() < 1e-12);
        }
        assert_eq!(s.face_by_name("B.R").unwrap().orientation, Orientation::Horizontal);
        assert_eq!(s.face_by_name("B.W").unwrap().orientation, Orientation::Vertical);
    }

    #[test]
    fn edges_and_wedges() {
        let s = one_box();
        assert_eq!(s.edges.len(), 12);
        assert_eq!(s.edges.iter().filter(|e| e.faces.len() == 2).count(), 8);
        assert_eq!(s.edges.iter().filter(|e| e.diffracting).count(), 8);
    }

    #[test]
    fn containment() {
        let s = one_box();
        assert_eq!(s.building_containing(Vec3::new(5.0, 5.0, 5.0)), Some(0));
        assert_eq!(s.building_containing(Vec3::new(15.0, 5.0, 5.0)), None);
        assert_eq!(s.building_containing(Vec3::new(5.0, 5.0, 15.0)), None);
    }

    #[test]
    fn inverted_winding_is_rejected() {
        let mut file = SceneBuilder::new()
            .material(Material::concrete())
            .add_box("B", Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0), BoxFaces::default(), "concrete", true)
            .into_file();
        file.buildings[0].faces[0].vertices.reverse();
        assert!(Scene::from_file(file).is_err());
    }

    #[test]
    fn trajectory_timing() {
        let t = Trajectory::from_rows(&[[0.0, 0.0, 0.0, 5.0], [10.0, 0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(t.leg_duration(0), 2.0);
        assert_eq!(t.time_at(5.0), 1.0);
        assert!(Trajectory::from_rows(&[[0.0, 0.0, 0.0, 5.0]]).is_err());
        assert!(Trajectory::from_rows(&[[0.0, 0.0, 0.0, 5.0], [0.0, 0.0, 0.0, 5.0]]).is_err());
        assert!(Trajectory::from_rows(&[[0.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 5.0]]).is_err());
    }

    #[test]
    fn generator_counts() {
        let one = generate_manhattan_scene(&ManhattanSpec::grid(1, 1)).unwrap();
        assert_eq!(one.buildings.len(), 1);
        assert_eq!(one.building_face_count(), 5);
        assert!(one.ground.is_some());
        assert_eq!(generate_manhattan_scene(&ManhattanSpec::grid(2, 2)).unwrap().buildings.len(), 4);
        let mut bad = ManhattanSpec::grid(1, 1);
        bad.area = -1.0;
        assert!(generate_manhattan_scene(&bad).is_err());
    }
}
