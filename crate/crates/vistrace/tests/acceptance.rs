//! One pass/fail line per acceptance criterion. Run with `--nocapture` to see the report.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_2;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vistrace::em::*;
use vistrace::fixtures;
use vistrace::geometry::*;
use vistrace::raytracer::*;
use vistrace::scene::*;
use vistrace::vismatrix::build_matrix;
use vistrace::vistable::*;

struct Report {
    failures: Vec<usize>,
}

impl Report {
    fn line(&mut self, n: usize, pass: bool, detail: String) {
        println!("criterion {n}: {} - {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failures.push(n);
        }
    }
}

fn route_queries() -> (Scene, Vec<(Point3, Point3)>) {
    let s = fixtures::manhattan_scene().unwrap();
    let route = fixtures::manhattan_route().unwrap();
    let q = route.waypoints.iter().map(|&tx| (tx, fixtures::MANHATTAN_RX)).collect();
    (s, q)
}

fn ray_set_equivalence(r: &mut Report) -> (Scene, Vec<Path>) {
    let (s, queries) = route_queries();
    let m = build_matrix(&s, 3).unwrap();
    let cfg = TraceConfig { max_reflections: 3, diffraction: true };
    let mut differing = 0;
    let mut gap: f64 = 0.0;
    let mut n_paths = 0;
    let mut traced = Vec::new();
    for &(tx, rx) in &queries {
        let a = accelerated_trace(&s, &m, tx, rx, cfg).unwrap();
        let b = brute_force_trace(&s, tx, rx, cfg).unwrap();
        let (x, y) = path_set_difference(&a, &b);
        differing += usize::from(!x.is_empty() || !y.is_empty());
        gap = gap.max(max_point_gap(&a, &b));
        n_paths += b.len();
        traced.extend(a);
    }
    r.line(
        1,
        differing == 0 && gap < 1e-6,
        format!("{} transmitter points, {n_paths} paths, {differing} differing sets, max point gap {gap:.2e} m", queries.len()),
    );
    (s, traced)
}

fn speedup_trend(r: &mut Report) {
    let (s, queries) = route_queries();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let mut reductions = Vec::new();
    let mut ratio3 = 0.0;
    let mut cells = Vec::new();
    for order in 1..=4 {
        let cfg = TraceConfig { max_reflections: order, diffraction: true };
        // fastest of several runs for each method; order 4 brute force alone takes seconds
        let reps = if order < 4 { 5 } else { 1 };
        let (total, brute) = pool.install(|| {
            let mut total = Duration::MAX;
            let mut brute = Duration::MAX;
            for _ in 0..reps {
                let t0 = Instant::now();
                let m = build_matrix(&s, order).unwrap();
                for &(tx, rx) in &queries {
                    accelerated_trace(&s, &m, tx, rx, cfg).unwrap();
                }
                total = total.min(t0.elapsed());
                let t0 = Instant::now();
                for &(tx, rx) in &queries {
                    brute_force_trace(&s, tx, rx, cfg).unwrap();
                }
                brute = brute.min(t0.elapsed());
            }
            (total, brute)
        });
        let red = 100.0 * (1.0 - total.as_secs_f64() / brute.as_secs_f64());
        if order == 3 {
            ratio3 = brute.as_secs_f64() / total.as_secs_f64();
        }
        reductions.push(red);
        cells.push(format!("order {order} {:.3}s vs {:.3}s ({red:.1}%)", total.as_secs_f64(), brute.as_secs_f64()));
    }
    let increasing = reductions[1] < reductions[2] && reductions[2] < reductions[3];
    r.line(2, ratio3 >= 5.0 && increasing, format!("single thread, best of 5 (order 4: 1 run); order 3 speedup {ratio3:.1}x; {}", cells.join(", ")));
}

fn table_one(r: &mut Report) {
    let s = fixtures::row_scene().unwrap();
    let m = build_matrix(&s, 1).unwrap();
    let got: BTreeSet<String> = m
        .entries_of_order(1)
        .map(|e| format!("{}|{}|{}", s.faces[e.reference()].name, s.faces[e.aim()].name, e.relation.kind.short()))
        .collect();
    let want: BTreeSet<String> =
        ["AB|EF|PAR", "EF|AB|PAR", "FG|HJ|PAR", "FG|HI|PER", "HI|FG|PER", "HJ|FG|PAR"].iter().map(|x| x.to_string()).collect();
    r.line(3, got == want, format!("{} order-1 rows: {}", got.len(), got.into_iter().collect::<Vec<_>>().join(", ")));
}

fn table_two(r: &mut Report) {
    let s = fixtures::canyon_scene().unwrap();
    let m = build_matrix(&s, 2).unwrap();
    let got: BTreeSet<String> = point_vis_table(fixtures::CANYON_SOURCE, &m, &s, 1)
        .into_iter()
        .map(|e| format!("{}:{}->{}", e.parent_name, e.reference_name, e.aim_name))
        .collect();
    let want: BTreeSet<String> = ["AB->EF", "AC'->EG", "AC'->EI", "AC'->CG", "EI->AC'"]
        .iter()
        .map(|x| format!("transmitter:{x}"))
        .collect();
    r.line(4, got == want, format!("{} rows: {}", got.len(), got.into_iter().collect::<Vec<_>>().join(", ")));
}

fn coherence_arithmetic(r: &mut Report) {
    let mut worst_sum: f64 = 0.0;
    let mut worst_rel: f64 = 0.0;
    let mut worst_avg: f64 = 0.0;
    let mut segments = 0;
    let cases = [
        (fixtures::slab_scene().unwrap(), fixtures::slab_route(10.0).unwrap(), 1),
        (fixtures::manhattan_scene().unwrap(), fixtures::manhattan_route().unwrap(), 2),
    ];
    for (s, route, order) in &cases {
        let m = build_matrix(s, *order).unwrap();
        let t = trajectory_vis_table(route, &m, s, *order).unwrap();
        let c = coherence_times(&t, route).unwrap();
        let total: f64 = c.segments.iter().map(|x| x.d_l).sum();
        worst_sum = worst_sum.max((total - route.length()).abs());
        for x in &c.segments {
            worst_rel = worst_rel.max(((x.t_c - x.d_l / x.v_l) / x.t_c).abs());
        }
        let mut hand = 0.0;
        for x in &c.segments {
            hand += x.t_c;
        }
        hand /= c.segments.len() as f64;
        worst_avg = worst_avg.max((c.average - hand).abs() / hand);
        segments += c.segments.len();
    }
    let min_ok = min_rule(&[2.0, 5.0, 0.5], &[3.0, 1.0, 0.5]) == vec![2.0, 1.0, 0.5];
    let pass = worst_sum < 1e-6 && worst_rel <= 1e-12 && worst_avg <= 1e-12 && min_ok;
    r.line(
        5,
        pass,
        format!(
            "{segments} segments; |sum d - L| {worst_sum:.1e} m, T=d/v rel {worst_rel:.1e}, average rel {worst_avg:.1e}, min rule {}",
            if min_ok { "ok" } else { "wrong" }
        ),
    );
}

fn boundary_bisection(r: &mut Report) {
    let s = fixtures::slab_scene().unwrap();
    let m = build_matrix(&s, 1).unwrap();
    let route = fixtures::slab_route(10.0).unwrap();
    let t = trajectory_vis_table(&route, &m, &s, 1).unwrap();
    // corners of the slab and the wall projected onto the route, worked out by hand
    let want = [20.0, 30.0, 32.5, 35.0, 55.0, 57.5, 60.0, 70.0];
    let got: Vec<f64> = t.boundaries.iter().map(|b| b.s).collect();
    let worst = got.iter().zip(&want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
    let pass = got.len() == want.len() && worst <= 1e-3;
    r.line(6, pass, format!("{} boundaries (want {}), max error {worst:.1e} m", got.len(), want.len()));
}

fn geometry_properties(r: &mut Report, s: &Scene, traced: &[Path]) {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut rv = |k: f64| Vec3::new(rng.gen_range(-k..k), rng.gen_range(-k..k), rng.gen_range(-k..k));
    let mut mirror_err: f64 = 0.0;
    let mut resid: f64 = 0.0;
    let mut clamp_ok = true;
    for _ in 0..1000 {
        let (p, q, n) = (rv(100.0), rv(100.0), rv(1.0));
        let Ok(plane) = Plane::from_point_normal(q, n) else { continue };
        mirror_err = mirror_err.max(mirror_point(mirror_point(p, &plane), &plane).distance(p) / (1.0 + p.max_abs() + q.max_abs()));
        let (a, b) = (rv(50.0), rv(50.0));
        if (a.x - b.x).abs() > 1e-3 {
            let l1 = Line2::Sloped { m: a.x, n: a.y };
            let l2 = Line2::Sloped { m: b.x, n: b.y };
            let x = line_intersection_2d(l1, l2).unwrap();
            let scale = 1.0 + x[0].abs().max(x[1].abs());
            resid = resid.max(l1.residual(x).abs() / scale).max(l2.residual(x).abs() / scale);
        }
        let angle = rv(180.0).x + 180.0;
        let c = clamp_visibility_angle(angle);
        clamp_ok &= clamp_visibility_angle(c) == c;
    }
    let mut specular: f64 = 0.0;
    let mut unfold: f64 = 0.0;
    for p in traced {
        let pts = p.points();
        for (k, it) in p.interactions.iter().enumerate() {
            if it.kind != InteractionKind::Reflection {
                continue;
            }
            let din = (pts[k + 1] - pts[k]).normalized().unwrap();
            let dout = (pts[k + 2] - pts[k + 1]).normalized().unwrap();
            let n = s.faces[it.id].normal();
            let mirrored = din - n * (2.0 * din.dot(n));
            specular = specular.max(mirrored.cross(dout).norm().asin());
        }
        if p.diffraction().is_none() {
            let image = p.interactions.iter().fold(p.tx, |img, it| mirror_point(img, s.faces[it.id].polygon.plane()));
            unfold = unfold.max((image.distance(p.rx) - p.length).abs());
        }
    }
    let pass = mirror_err < 1e-12 && resid < 1e-9 && clamp_ok && specular < 1e-9 && unfold < 1e-9;
    r.line(
        7,
        pass,
        format!(
            "1000 cases each; mirror {mirror_err:.1e}, residual {resid:.1e}, clamp {}, {} paths: specular {specular:.1e} rad, unfolding {unfold:.1e} m",
            if clamp_ok { "idempotent" } else { "broken" },
            traced.len()
        ),
    );
}

fn em_properties(r: &mut Report) {
    let f = 5.5e9;
    let loss = free_space_loss_db(1.0, f).unwrap();
    let want = 20.0 * (4.0 * std::f64::consts::PI * f / SPEED_OF_LIGHT).log10();
    let single = rms_delay_spread(&[(0.3, 4e-7)]);
    let delta = 37e-9;
    let two = rms_delay_spread(&[(1e-6, 1e-7), (1e-6, 1e-7 + delta)]);
    let mut worst: f64 = 0.0;
    for m in [Material::concrete(), Material::ground(), Material::new("wet", 30.0, 2.0), Material::new("dry", 2.0, 0.0)] {
        for i in 0..2000 {
            let theta = FRAC_PI_2 * i as f64 / 2000.0;
            for freq in [1e8, 9e8, 5.5e9, 6e10] {
                for pol in [Polarization::Te, Polarization::Tm] {
                    worst = worst.max(fresnel_reflection(theta, &m, freq, pol).unwrap().norm());
                }
            }
        }
    }
    let pass = (loss - want).abs() <= 0.01 && single == 0.0 && (two - delta / 2.0).abs() <= 1e-12 && worst <= 1.0;
    r.line(
        8,
        pass,
        format!(
            "free space {loss:.4} dB vs {want:.4} dB; single spread {single}; two-path spread {:.3e} s vs {:.3e} s; max |reflection| {worst:.6}",
            two,
            delta / 2.0
        ),
    );
}

#[test]
fn acceptance() {
    let mut r = Report { failures: Vec::new() };
    let (scene, traced) = ray_set_equivalence(&mut r);
    speedup_trend(&mut r);
    table_one(&mut r);
    table_two(&mut r);
    coherence_arithmetic(&mut r);
    boundary_bisection(&mut r);
    geometry_properties(&mut r, &scene, &traced);
    em_properties(&mut r);
    println!("criterion 9: FAIL - not reproducible: the measured field data and the measured scene are not available");
    assert!(r.failures.is_empty(), "failing criteria: {:?}", r.failures);
}
