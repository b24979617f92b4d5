use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use vistrace::fixtures;
use vistrace::geometry::{mirror_point, Point3, Vec3};
use vistrace::raytracer::*;
use vistrace::scene::*;
use vistrace::vismatrix::build_matrix;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn cfg(max_reflections: usize, diffraction: bool) -> TraceConfig {
    TraceConfig { max_reflections, diffraction }
}

fn keys(paths: &[Path]) -> BTreeSet<Vec<(InteractionKind, usize)>> {
    paths.iter().map(|p| p.key()).collect()
}

fn random_outdoor(scene: &Scene, rng: &mut ChaCha8Rng, lo: Point3, hi: Point3) -> Point3 {
    loop {
        let p = Vec3::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y), rng.gen_range(lo.z..hi.z));
        if scene.building_containing(p).is_none() {
            return p;
        }
    }
}

fn random_pairs(scene: &Scene, n: usize, seed: u64, lo: Point3, hi: Point3) -> Vec<(Point3, Point3)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (random_outdoor(scene, &mut rng, lo, hi), random_outdoor(scene, &mut rng, lo, hi))).collect()
}

/// Checks the mirror law at reflections, the cone law at diffractions and, for pure
/// reflection paths, that the length equals the distance from the final image to the receiver.
fn check_path_physics(scene: &Scene, p: &Path) {
    let pts = p.points();
    let total: f64 = pts.windows(2).map(|w| w[0].distance(w[1])).sum();
    assert!((total - p.length).abs() < 1e-9, "{}", p.label(scene));
    assert!((p.delay - p.length / SPEED_OF_LIGHT).abs() < 1e-18);
    for (k, it) in p.interactions.iter().enumerate() {
        let (prev, q, next) = (pts[k], pts[k + 1], pts[k + 2]);
        let din = (q - prev).normalized().unwrap();
        let dout = (next - q).normalized().unwrap();
        match it.kind {
            InteractionKind::Reflection => {
                let n = scene.faces[it.id].normal();
                let mirrored = din - n * (2.0 * din.dot(n));
                let err = mirrored.cross(dout).norm().asin();
                assert!(err < 1e-9 && mirrored.dot(dout) > 0.0, "{} err {err}", p.label(scene));
                assert!(scene.faces[it.id].signed_distance(q).abs() < 1e-9);
            }
            InteractionKind::Diffraction => {
                let e = &scene.edges[it.id];
                let t = (e.b - e.a).normalized().unwrap();
                assert!((din.dot(t) - dout.dot(t)).abs() < 1e-9, "{}", p.label(scene));
            }
        }
    }
    if p.diffraction().is_none() {
        let mut image = p.tx;
        for it in &p.interactions {
            image = mirror_point(image, scene.faces[it.id].polygon.plane());
        }
        assert!((image.distance(p.rx) - p.length).abs() < 1e-9, "{}", p.label(scene));
    }
}

#[test]
fn open_field_gives_two_rays() {
    let s = load_scene(fixture("open_field.json")).unwrap();
    let m = build_matrix(&s, 1).unwrap();
    let tx = Vec3::new(0.0, 0.0, 10.0);
    let rx = Vec3::new(50.0, 0.0, 2.0);
    let paths = accelerated_trace(&s, &m, tx, rx, cfg(1, true)).unwrap();
    assert_eq!(paths.len(), 2);
    let los = paths.iter().find(|p| p.is_los()).unwrap();
    assert!((los.length - (50f64.powi(2) + 8f64.powi(2)).sqrt()).abs() < 1e-12);
    let bounce = paths.iter().find(|p| p.reflection_count() == 1).unwrap();
    assert!((bounce.length - (50f64.powi(2) + 12f64.powi(2)).sqrt()).abs() < 1e-9);
    // similar triangles: heights 10 and 2 split the 50 m run at 50 * 10 / 12
    let g = bounce.interactions[0].point;
    assert!((g.x - 50.0 * 10.0 / 12.0).abs() < 1e-9 && g.z.abs() < 1e-12);
    let only_los = accelerated_trace(&s, &m, tx, rx, cfg(0, true)).unwrap();
    assert_eq!(only_los.len(), 1);
    assert!(only_los[0].is_los());
}

#[test]
fn blocked_pair_without_diffraction_has_no_paths() {
    let s = SceneBuilder::new()
        .material(Material::concrete())
        .add_box("B", Vec3::ZERO, Vec3::new(10.0, 10.0, 10.0), BoxFaces::default(), "concrete", false)
        .build()
        .unwrap();
    let m = build_matrix(&s, 1).unwrap();
    // the sightline clips the box's north-east corner; the receiver's nearest edge is that corner
    let tx = Vec3::new(3.0, 15.0, 5.0);
    let rx = Vec3::new(12.0, 8.0, 5.0);
    assert!(accelerated_trace(&s, &m, tx, rx, cfg(0, false)).unwrap().is_empty());
    assert!(brute_force_trace(&s, tx, rx, cfg(0, false)).unwrap().is_empty());
    let diffracted = accelerated_trace(&s, &m, tx, rx, cfg(0, true)).unwrap();
    assert_eq!(diffracted.len(), 1);
    let e = &s.edges[diffracted[0].diffraction().unwrap().id];
    assert_eq!((e.a.x, e.a.y, e.b.x, e.b.y), (10.0, 10.0, 10.0, 10.0));
    check_path_physics(&s, &diffracted[0]);
}

fn gallery() -> Scene {
    SceneBuilder::new()
        .material(Material::concrete())
        .add_box("L", Vec3::new(-5.0, -50.0, 0.0), Vec3::new(0.0, 50.0, 50.0), BoxFaces::named(&[("east", "L")]), "concrete", false)
        .add_box("R", Vec3::new(10.0, -50.0, 0.0), Vec3::new(15.0, 50.0, 50.0), BoxFaces::named(&[("west", "R")]), "concrete", false)
        .build()
        .unwrap()
}

#[test]
fn parallel_walls_follow_image_positions() {
    let s = gallery();
    let m = build_matrix(&s, 4).unwrap();
    let (tx, rx) = (Vec3::new(3.0, 0.0, 5.0), Vec3::new(7.0, 10.0, 5.0));
    let l = s.face_by_name("L").unwrap().id;
    let r = s.face_by_name("R").unwrap().id;
    for order in 0..=4usize {
        let paths = accelerated_trace(&s, &m, tx, rx, cfg(order, false)).unwrap();
        assert_eq!(paths.len(), 1 + 2 * order);
        assert_eq!(keys(&paths), keys(&brute_force_trace(&s, tx, rx, cfg(order, false)).unwrap()));
        for p in &paths {
            let k = p.reflection_count();
            if k == 0 {
                continue;
            }
            let first = p.interactions[0].id;
            let alternating = p.interactions.iter().enumerate().all(|(i, it)| it.id == if i % 2 == 0 { first } else if first == l { r } else { l });
            assert!(alternating);
            let kf = k as f64;
            // image abscissa after k alternating reflections in walls at x = 0 and x = 10
            let image_x = match (first == l, k % 2 == 1) {
                (true, true) => -(10.0 * (kf - 1.0) + tx.x),
                (true, false) => 10.0 * kf + tx.x,
                (false, true) => 10.0 * (kf + 1.0) - tx.x,
                (false, false) => -(10.0 * kf - tx.x),
            };
            let want = ((image_x - rx.x).powi(2) + (rx.y - tx.y).powi(2)).sqrt();
            assert!((p.length - want).abs() < 1e-9, "order {k}: {} vs {want}", p.length);
            check_path_physics(&s, p);
        }
    }
}

#[test]
fn higher_orders_only_add_paths() {
    let s = fixtures::manhattan_scene().unwrap();
    let m = build_matrix(&s, 3).unwrap();
    for (tx, rx) in random_pairs(&s, 40, 11, Vec3::new(0.0, 0.0, 1.0), Vec3::new(100.0, 100.0, 40.0)) {
        let mut prev = BTreeSet::new();
        for k in 0..=3 {
            let now = keys(&accelerated_trace(&s, &m, tx, rx, cfg(k, true)).unwrap());
            assert!(prev.is_subset(&now));
            prev = now;
        }
    }
}

#[test]
fn every_traced_path_obeys_reflection_and_unfolding() {
    let s = fixtures::manhattan_scene().unwrap();
    let m = build_matrix(&s, 3).unwrap();
    let mut n = 0;
    for (tx, rx) in random_pairs(&s, 60, 5, Vec3::new(0.0, 0.0, 1.0), Vec3::new(100.0, 100.0, 40.0)) {
        for p in accelerated_trace(&s, &m, tx, rx, cfg(3, true)).unwrap() {
            check_path_physics(&s, &p);
            n += 1;
        }
    }
    assert!(n > 200);
}

fn compare_tracers(scene: &Scene, order: usize, pairs: &[(Point3, Point3)]) {
    let m = build_matrix(scene, order.max(1)).unwrap();
    let failures: Vec<String> = pairs
        .par_iter()
        .filter_map(|&(tx, rx)| {
            let a = accelerated_trace(scene, &m, tx, rx, cfg(order, true)).unwrap();
            let b = brute_force_trace(scene, tx, rx, cfg(order, true)).unwrap();
            let (only_a, only_b) = path_set_difference(&a, &b);
            let gap = max_point_gap(&a, &b);
            (!only_a.is_empty() || !only_b.is_empty() || gap >= 1e-6)
                .then(|| format!("{tx:?} {rx:?}: +{} -{} gap {gap}", only_a.len(), only_b.len()))
        })
        .collect();
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn accelerated_matches_brute_force_on_random_pairs() {
    let s = fixtures::manhattan_scene().unwrap();
    let lo = Vec3::new(0.0, 0.0, 1.0);
    let hi = Vec3::new(100.0, 100.0, 40.0);
    compare_tracers(&s, 2, &random_pairs(&s, 1000, 2024, lo, hi));
    compare_tracers(&s, 3, &random_pairs(&s, 60, 7, lo, hi));
}

#[test]
fn dynamic_trace_equals_per_sample_tracing() {
    let s = fixtures::manhattan_scene().unwrap();
    let m = build_matrix(&s, 2).unwrap();
    let route = fixtures::manhattan_route().unwrap();
    let samples: Vec<f64> = (0..=200).map(|i| route.length() * i as f64 / 200.0).collect();
    let rx = Receiver::Fixed(fixtures::MANHATTAN_RX);
    let d = dynamic_trace(&s, &m, &route, &rx, cfg(2, true), &samples).unwrap();
    assert_eq!(d.samples.len(), samples.len());
    assert!(d.retraces <= d.table.intervals.len());
    for smp in &d.samples {
        let direct = accelerated_trace(&s, &m, smp.tx, smp.rx, cfg(2, true)).unwrap();
        assert_eq!(keys(&smp.paths), keys(&direct), "s = {}", smp.s);
        assert!(max_point_gap(&smp.paths, &direct) < 1e-9);
    }
    let moving = Receiver::Moving(Trajectory::straight(Vec3::new(25.0, 62.0, 5.0), Vec3::new(25.0, 90.0, 5.0), 8, 2.0).unwrap());
    let d = dynamic_trace(&s, &m, &route, &moving, cfg(2, true), &samples[..50]).unwrap();
    assert!(d.combined.is_some());
    for smp in &d.samples {
        let direct = accelerated_trace(&s, &m, smp.tx, smp.rx, cfg(2, true)).unwrap();
        assert_eq!(keys(&smp.paths), keys(&direct));
    }
}

/// A triangular prism with a diagonal wall facing north-east and a roof sloping up to the north,
/// next to a plain box, over ground.
fn prism_scene() -> Scene {
    let v = |x: f64, y: f64, z: f64| Vec3::new(x, y, z);
    let mut file = SceneBuilder::new()
        .material(Material::concrete())
        .material(Material::ground())
        .add_box("B", v(30.0, 0.0, 0.0), v(40.0, 10.0, 12.0), BoxFaces::default(), "concrete", false)
        .ground("G", -30.0, -30.0, 70.0, 70.0, 0.0, "ground")
        .into_file();
    let base = file.vertices.len();
    file.vertices.extend([v(0.0, 0.0, 0.0), v(10.0, 0.0, 0.0), v(0.0, 10.0, 0.0), v(0.0, 0.0, 8.0), v(10.0, 0.0, 8.0), v(0.0, 10.0, 12.0)]);
    let face = |id: &str, idx: &[usize]| FaceRecord {
        id: id.into(),
        vertices: idx.iter().map(|i| base + i).collect(),
        material: "concrete".into(),
    };
    file.buildings.push(BuildingRecord {
        id: "P".into(),
        faces: vec![
            face("P.S", &[0, 1, 4, 3]),
            face("P.W", &[2, 0, 3, 5]),
            face("P.H", &[1, 2, 5, 4]),
            face("P.roof", &[3, 4, 5]),
        ],
    });
    Scene::from_file(file).unwrap()
}

#[test]
fn oblique_faces_are_traced_like_brute_force() {
    let s = prism_scene();
    let h = s.face_by_name("P.H").unwrap();
    assert_eq!(h.orientation, Orientation::Vertical);
    let roof = s.face_by_name("P.roof").unwrap();
    assert!(s.is_oblique(roof.id));
    assert!((h.normal() - Vec3::new(1.0, 1.0, 0.0) * (0.5f64).sqrt()).norm() < 1e-12);
    let lo = Vec3::new(-20.0, -20.0, 0.5);
    let hi = Vec3::new(60.0, 60.0, 20.0);
    let pairs = random_pairs(&s, 200, 99, lo, hi);
    compare_tracers(&s, 3, &pairs);
    let m = build_matrix(&s, 2).unwrap();
    let tx = Vec3::new(10.0, 10.0, 4.0);
    let rx = Vec3::new(12.0, 14.0, 4.0);
    let paths = accelerated_trace(&s, &m, tx, rx, cfg(1, false)).unwrap();
    let via_h: Vec<_> = paths.iter().filter(|p| p.interactions.first().map(|i| i.id) == Some(h.id)).collect();
    assert_eq!(via_h.len(), 1);
    check_path_physics(&s, via_h[0]);
    let (tx, rx) = (Vec3::new(2.0, 2.0, 20.0), Vec3::new(3.0, 3.0, 22.0));
    let paths = accelerated_trace(&s, &m, tx, rx, cfg(1, false)).unwrap();
    let via_roof: Vec<_> = paths.iter().filter(|p| p.interactions.first().map(|i| i.id) == Some(roof.id)).collect();
    assert_eq!(via_roof.len(), 1);
    check_path_physics(&s, via_roof[0]);
}

#[test]
fn placement_and_configuration_errors() {
    let s = fixtures::row_scene().unwrap();
    let m = build_matrix(&s, 1).unwrap();
    let inside = s.buildings[0].faces.iter().map(|&f| s.faces[f].polygon.centroid()).fold(Vec3::ZERO, |a, b| a + b)
        * (1.0 / s.buildings[0].faces.len() as f64);
    let out = Vec3::new(-50.0, -50.0, 5.0);
    assert!(matches!(accelerated_trace(&s, &m, inside, out, cfg(1, true)), Err(TraceError::Placement { which: "transmitter", .. })));
    assert!(matches!(brute_force_trace(&s, out, inside, cfg(1, true)), Err(TraceError::Placement { which: "receiver", .. })));
    assert!(matches!(accelerated_trace(&s, &m, out, out, cfg(1, true)), Err(TraceError::SamePoint)));
    assert!(matches!(
        accelerated_trace(&s, &m, Vec3::new(f64::NAN, 0.0, 0.0), out, cfg(1, true)),
        Err(TraceError::NonFinite)
    ));
    let far = Vec3::new(-60.0, -50.0, 5.0);
    assert!(matches!(accelerated_trace(&s, &m, out, far, cfg(2, true)), Err(TraceError::MatrixOrder { have: 1, need: 2 })));
    let other = build_matrix(&fixtures::canyon_scene().unwrap(), 2).unwrap();
    assert!(matches!(accelerated_trace(&s, &other, out, far, cfg(1, true)), Err(TraceError::MatrixMismatch)));
}
