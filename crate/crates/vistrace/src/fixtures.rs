//! Reference scenes and routes used by tests, benchmarks and the command line.

use crate::geometry::{Point3, Vec3};
use crate::scene::{
    generate_manhattan_scene, BoxFaces, ManhattanSpec, Material, Scene, SceneBuilder, SceneError, Trajectory,
};

/// Row of three boxes. The outer boxes share the height of the middle one.
///
/// Named faces: `AB` (east wall of the left box), `EF` and `FG` (west and east walls of
/// the middle box), `HJ` and `HI` (west wall and roof of the low right box).
pub fn row_scene() -> Result<Scene, SceneError> {
    SceneBuilder::new()
        .material(Material::concrete())
        .add_box(
            "B3",
            Vec3::new(-20.0, 0.0, 0.0),
            Vec3::new(-10.0, 10.0, 30.0),
            BoxFaces::named(&[("east", "AB")]),
            "concrete",
            false,
        )
        .add_box(
            "B1",
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(10.0, 10.0, 30.0),
            BoxFaces::named(&[("west", "EF"), ("east", "FG")]),
            "concrete",
            false,
        )
        .add_box(
            "B2",
            Vec3::new(20.0, 0.0, 0.0),
            Vec3::new(30.0, 10.0, 10.0),
            BoxFaces::named(&[("west", "HJ"), ("roof", "HI")]),
            "concrete",
            false,
        )
        .build()
}

/// Street canyon between a tall and a low block with a ground strip, plus two low blocks
/// further out.
///
/// Named faces: `AC` (north wall of the tall block), `EG` and `EI` (south wall and roof
/// of the low block), `CG` (ground strip between them), `AB` and `EF` (facing walls of
/// the outer pair).
pub fn canyon_scene() -> Result<Scene, SceneError> {
    SceneBuilder::new()
        .material(Material::concrete())
        .material(Material::ground())
        .add_box(
            "B1",
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(10.0, 10.0, 30.0),
            BoxFaces::named(&[("north", "AC")]),
            "concrete",
            false,
        )
        .add_box(
            "B2",
            Vec3::new(0.0, 20.0, 0.0),
            Vec3::new(10.0, 30.0, 10.0),
            BoxFaces::named(&[("south", "EG"), ("roof", "EI")]),
            "concrete",
            false,
        )
        .add_box(
            "B4",
            Vec3::new(-40.0, 40.0, 0.0),
            Vec3::new(-30.0, 46.0, 6.0),
            BoxFaces::named(&[("east", "AB")]),
            "concrete",
            false,
        )
        .add_box(
            "B5",
            Vec3::new(-20.0, 38.0, 0.0),
            Vec3::new(-12.0, 60.0, 6.0),
            BoxFaces::named(&[("west", "EF")]),
            "concrete",
            false,
        )
        .ground("CG", 0.0, 10.0, 10.0, 20.0, 0.0, "ground")
        .build()
}

/// Source position used with [`canyon_scene`].
pub const CANYON_SOURCE: Point3 = Vec3::new(5.0, 36.0, 22.0);

/// A wall `F1` facing a straight route, with a tall slab `S1` between them.
///
/// The route runs along `y` at `x = 20`, `z = 5`, from `y = -40` to `y = 40`.
/// `F1` spans `y` in `[0, 10]` at `x = 0`; the slab spans `x` in `[10, 12]`, `y` in `[-5, 15]`.
pub fn slab_scene() -> Result<Scene, SceneError> {
    SceneBuilder::new()
        .material(Material::concrete())
        .add_box(
            "W1",
            Vec3::new(-10.0, 0.0, 0.0),
            Vec3::new(0.0, 10.0, 10.0),
            BoxFaces::named(&[("east", "F1")]),
            "concrete",
            false,
        )
        .add_box("S1", Vec3::new(10.0, -5.0, 0.0), Vec3::new(12.0, 15.0, 30.0), BoxFaces::default(), "concrete", false)
        .build()
}

pub fn slab_route(speed: f64) -> Result<Trajectory, SceneError> {
    Trajectory::new(vec![Vec3::new(20.0, -40.0, 5.0), Vec3::new(20.0, 40.0, 5.0)], vec![speed])
}

/// Arc lengths along [`slab_route`] where the visibility of `F1` changes:
/// partial shadow begins, full shadow begins, full shadow ends, partial shadow ends.
pub const SLAB_BOUNDARIES: [f64; 4] = [20.0, 30.0, 60.0, 70.0];

/// The 13-building grid city.
pub fn manhattan_scene() -> Result<Scene, SceneError> {
    generate_manhattan_scene(&ManhattanSpec::standard())
}

pub const MANHATTAN_RX: Point3 = Vec3::new(25.0, 62.0, 5.0);
pub const MANHATTAN_TX_START: Point3 = Vec3::new(20.0, 5.0, 15.0);
pub const MANHATTAN_TX_END: Point3 = Vec3::new(65.0, 50.0, 90.0);
pub const MANHATTAN_SNAPSHOT_TX: Point3 = Vec3::new(35.0, 20.0, 40.0);
/// Speed assumed for the transmitter route, in m/s.
pub const MANHATTAN_SPEED: f64 = 10.0;

/// 120 evenly spaced transmitter points.
pub fn manhattan_route() -> Result<Trajectory, SceneError> {
    Trajectory::straight(MANHATTAN_TX_START, MANHATTAN_TX_END, 120, MANHATTAN_SPEED)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        let row = row_scene().unwrap();
        assert_eq!(row.buildings.len(), 3);
        let canyon = canyon_scene().unwrap();
        assert!(canyon.ground.is_some());
        assert_eq!(canyon.building_containing(CANYON_SOURCE), None);
        let city = manhattan_scene().unwrap();
        assert_eq!(city.buildings.len(), 13);
        assert_eq!(city.building_face_count(), 78);
        let route = manhattan_route().unwrap();
        for p in &route.waypoints {
            assert_eq!(city.building_containing(*p), None, "{p:?}");
        }
        assert_eq!(city.building_containing(MANHATTAN_RX), None);
        assert_eq!(city.building_containing(MANHATTAN_SNAPSHOT_TX), None);
        assert_eq!(route.waypoints.len(), 120);
    }
}
