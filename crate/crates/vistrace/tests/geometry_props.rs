use proptest::prelude::*;
use vistrace::geometry::*;

fn coord() -> impl Strategy<Value = f64> {
    -100.0..100.0f64
}

fn point() -> impl Strategy<Value = Point3> {
    (coord(), coord(), coord()).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn direction() -> impl Strategy<Value = Vector3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("non-zero", |(x, y, z)| x * x + y * y + z * z > 1e-4)
        .prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

/// Convex polygon on a random plane: a circle of radius `r` sampled at sorted angles.
fn polygon() -> impl Strategy<Value = ConvexPolygon> {
    (point(), direction(), 1.0..20.0f64, prop::collection::vec(0.0..std::f64::consts::TAU, 3..8)).prop_filter_map(
        "valid polygon",
        |(c, n, r, mut angles)| {
            angles.sort_by(f64::total_cmp);
            angles.dedup_by(|a, b| (*a - *b).abs() < 0.05);
            if angles.len() < 3 {
                return None;
            }
            let n = n.normalized()?;
            let helper = if n.x.abs() < 0.9 { Vec3::new(1.0, 0.0, 0.0) } else { Vec3::new(0.0, 1.0, 0.0) };
            let u = n.cross(helper).normalized()?;
            let v = n.cross(u);
            let verts = angles.iter().map(|a| c + u * (r * a.cos()) + v * (r * a.sin())).collect();
            ConvexPolygon::new(verts).ok().filter(|p| p.area() > 1.0)
        },
    )
}

/// Inside test by edge cross products in 3D, independent of the local frame.
fn inside_by_cross(poly: &ConvexPolygon, p: Point3) -> bool {
    let v = poly.vertices();
    let n = poly.normal();
    (0..v.len()).all(|i| {
        let a = v[i];
        let b = v[(i + 1) % v.len()];
        (b - a).cross(p - a).dot(n) >= 0.0
    })
}

fn distance_to_boundary(poly: &ConvexPolygon, p: Point3) -> f64 {
    let v = poly.vertices();
    (0..v.len()).map(|i| closest_point_on_segment(p, v[i], v[(i + 1) % v.len()]).0.distance(p)).fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mirror_is_an_involution(p in point(), q in point(), n in direction()) {
        let plane = Plane::from_point_normal(q, n).unwrap();
        let m = mirror_point(p, &plane);
        let back = mirror_point(m, &plane);
        let scale = 1.0 + p.max_abs() + q.max_abs();
        prop_assert!(back.distance(p) < 1e-12 * scale * 10.0);
        let mid = (p + m) * 0.5;
        prop_assert!(plane.signed_distance(mid).abs() < 1e-9 * scale);
    }

    #[test]
    fn line_intersection_satisfies_both_lines(
        m1 in -50.0..50.0f64, n1 in coord(), m2 in -50.0..50.0f64, n2 in coord(), vertical in any::<bool>(), x0 in coord()
    ) {
        prop_assume!((m1 - m2).abs() > 1e-3);
        let a = if vertical { Line2::Vertical { x: x0 } } else { Line2::Sloped { m: m1, n: n1 } };
        let b = Line2::Sloped { m: m2, n: n2 };
        let p = line_intersection_2d(a, b).unwrap();
        let scale = 1.0 + p[0].abs().max(p[1].abs());
        prop_assert!(a.residual(p).abs() < 1e-9 * scale);
        prop_assert!(b.residual(p).abs() < 1e-9 * scale);
        if !vertical {
            // slope-intercept closed form
            let x = (n1 - n2) / (m2 - m1);
            let y = (m2 * n1 - m1 * n2) / (m2 - m1);
            prop_assert!((p[0] - x).abs() < 1e-9 * scale && (p[1] - y).abs() < 1e-9 * scale);
        }
    }

    #[test]
    fn clamping_is_idempotent(a in 0.0..360.0f64) {
        let c = clamp_visibility_angle(a);
        prop_assert_eq!(clamp_visibility_angle(c), c);
        prop_assert!(c < 180.0);
    }

    #[test]
    fn angle_is_symmetric_and_scale_invariant(u in direction(), v in direction(), k in 0.01..100.0f64) {
        let a = angle_between(u, v).unwrap();
        prop_assert!((a - angle_between(v, u).unwrap()).abs() < 1e-9);
        prop_assert!((a - angle_between(u * k, v).unwrap()).abs() < 1e-6);
        prop_assert!((0.0..=180.0).contains(&a));
    }

    #[test]
    fn projection_then_lift_is_identity(p in point(), tag in prop_oneof![Just(PlaneTag::XY), Just(PlaneTag::YZ), Just(PlaneTag::XZ)]) {
        let q = tag.project(p);
        prop_assert_eq!(tag.lift(q, tag.dropped(p)), p);
    }

    #[test]
    fn segment_hit_matches_dense_sampling(poly in polygon(), a in point(), b in point()) {
        prop_assume!(a.distance(b) > 1.0);
        let plane = *poly.plane();
        let n = 10_000;
        let mut oracle = None;
        let mut prev = plane.signed_distance(a);
        for i in 1..=n {
            let p = a.lerp(b, i as f64 / n as f64);
            let d = plane.signed_distance(p);
            if prev.signum() != d.signum() && prev != 0.0 && d != 0.0 {
                let q = plane.project(a.lerp(b, (i as f64 - 0.5) / n as f64));
                oracle = Some(q);
                break;
            }
            prev = d;
        }
        let got = segment_polygon_intersection(a, b, &poly);
        let step = a.distance(b) / n as f64;
        match oracle {
            Some(q) if distance_to_boundary(&poly, q) > step * 2.0 + 1e-6 => {
                prop_assert_eq!(got.is_some(), inside_by_cross(&poly, q));
                if let Some(hit) = got {
                    prop_assert!(hit.distance(q) < step * 2.0);
                }
            }
            Some(_) => {}
            None => prop_assert!(got.is_none() || plane.signed_distance(a).abs() < 1e-6 || plane.signed_distance(b).abs() < 1e-6),
        }
    }
}

#[test]
fn line_intersection_examples() {
    let p = line_intersection_2d(Line2::Sloped { m: 1.0, n: 0.0 }, Line2::Sloped { m: -1.0, n: 2.0 }).unwrap();
    assert_eq!(p, [1.0, 1.0]);
    let p = line_intersection_2d(Line2::Sloped { m: 0.0, n: 5.0 }, Line2::Sloped { m: 1.0, n: 0.0 }).unwrap();
    assert_eq!(p, [5.0, 5.0]);
    assert_eq!(
        line_intersection_2d(Line2::Sloped { m: 2.0, n: 1.0 }, Line2::Sloped { m: 2.0, n: 3.0 }),
        Err(GeometryError::Parallel)
    );
}
