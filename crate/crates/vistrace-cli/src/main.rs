use std::fs::{self, File};
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use vistrace::em::{channel_stats, cdf, path_gains, ChannelStats, EmConfig, EmError, LinkPolarization};
use vistrace::fixtures;
use vistrace::geometry::{Point3, Vec3};
use vistrace::raytracer::{
    accelerated_trace, brute_force_trace, dynamic_trace, max_point_gap, path_set_difference, InteractionKind, Path,
    Receiver, TraceConfig, TraceError,
};
use vistrace::scene::{load_scene, load_trajectory, Scene, SceneError, Trajectory};
use vistrace::vismatrix::{build_matrix, InterVisMatrix, MatrixError};
use vistrace::vistable::VisError;

#[derive(Parser, Debug)]
#[command(name = "vistrace", version, about = "Image-method radio ray tracing with precomputed inter-visibility data")]
struct Cli {
    /// Scene JSON file, or `builtin:manhattan|row|canyon|slab`.
    #[arg(long, global = true, default_value = "builtin:manhattan")]
    scene: String,
    /// Maximum reflection order (0 to 4).
    #[arg(long, global = true, default_value_t = 3, value_parser = clap::value_parser!(u8).range(0..=4))]
    order: u8,
    /// Carrier frequency in Hz.
    #[arg(long, global = true, default_value_t = 5.5e9)]
    freq: f64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for randomized benchmark queries.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Run both tracers and report the path-set difference.
    #[arg(long, global = true)]
    compare: bool,
    /// Use the exhaustive tracer.
    #[arg(long, global = true)]
    brute: bool,
    /// Disable receiver-side diffraction.
    #[arg(long, global = true)]
    no_diffraction: bool,
    /// Matrix cache file (default `<out>/matrix.json`).
    #[arg(long, global = true)]
    matrix: Option<PathBuf>,
    /// Horizontal link polarization instead of vertical.
    #[arg(long, global = true)]
    horizontal: bool,
    /// Transmit antenna gain in dBi.
    #[arg(long, global = true, default_value_t = 0.0)]
    tx_gain: f64,
    /// Receive antenna gain in dBi.
    #[arg(long, global = true, default_value_t = 0.0)]
    rx_gain: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the inter-visibility matrix and write it to the cache file.
    Preprocess,
    /// Trace paths between one transmitter and one or more receivers.
    Trace(TraceArgs),
    /// Visibility table, coherence times and traces along a trajectory.
    Dynamic(DynamicArgs),
    /// Time the accelerated and exhaustive tracers for orders 1 to 4.
    Bench(BenchArgs),
    /// Path loss and delay spread over receiver points, with CDFs.
    Stats(StatsArgs),
}

#[derive(Args, Debug)]
struct TraceArgs {
    /// Transmitter `x,y,z`.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_point)]
    tx: Point3,
    /// Receiver `x,y,z`; repeatable.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_point, required = true)]
    rx: Vec<Point3>,
}

#[derive(Args, Debug)]
struct DynamicArgs {
    /// Transmitter trajectory file (`[[x,y,z,speed], ...]`), or `builtin:manhattan|slab`.
    #[arg(long)]
    traj: String,
    /// Second mover trajectory; the receiver follows it.
    #[arg(long, conflicts_with = "rx")]
    traj2: Option<String>,
    /// Fixed receiver `x,y,z`.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_point)]
    rx: Option<Point3>,
    /// Trace sample spacing in meters (default: trajectory waypoints).
    #[arg(long)]
    step: Option<f64>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Transmitter trajectory (default: the built-in 120-point route).
    #[arg(long)]
    traj: Option<String>,
    /// Receiver `x,y,z`.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_point)]
    rx: Option<Point3>,
    /// Extra random transmitter/receiver pairs drawn with `--seed`.
    #[arg(long, default_value_t = 0)]
    random: usize,
    /// Highest order to time.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u8).range(1..=4))]
    max_order: u8,
    /// Runs per timed stage; the fastest run is reported.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    repeat: u64,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long, allow_hyphen_values = true, value_parser = parse_point)]
    tx: Point3,
    /// Receiver points from a trajectory file.
    #[arg(long)]
    traj: Option<String>,
    /// Receiver `x,y,z`; repeatable.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_point)]
    rx: Vec<Point3>,
}

fn parse_point(s: &str) -> Result<Point3, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v.as_slice() {
        [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok(Vec3::new(*x, *y, *z)),
        _ => Err(format!("expected three finite numbers x,y,z, got {s:?}")),
    }
}

/// Input the user must fix.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Invalid(String);

/// `--compare` found differing paths.
#[derive(Debug, thiserror::Error)]
#[error("{0} differing paths")]
struct Mismatch(usize);

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Mismatch>().is_some() {
        return 3;
    }
    let validation = err.chain().any(|e| {
        e.is::<Invalid>()
            || e.is::<SceneError>()
            || e.is::<MatrixError>()
            || e.is::<TraceError>()
            || e.is::<VisError>()
            || e.is::<EmError>()
    });
    if validation {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(n) = std::env::var("VISTRACE_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: VISTRACE_THREADS must be a positive integer, got {n:?}");
                return ExitCode::from(2);
            }
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    if !(cli.freq > 0.0 && cli.freq.is_finite()) {
        bail!(Invalid(format!("frequency must be positive, got {}", cli.freq)));
    }
    let scene = open_scene(&cli.scene)?;
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    match &cli.command {
        Command::Preprocess => cmd_preprocess(cli, &scene),
        Command::Trace(a) => cmd_trace(cli, &scene, a),
        Command::Dynamic(a) => cmd_dynamic(cli, &scene, a),
        Command::Bench(a) => cmd_bench(cli, &scene, a),
        Command::Stats(a) => cmd_stats(cli, &scene, a),
    }
}

fn open_scene(spec: &str) -> Result<Scene> {
    let scene = match spec.strip_prefix("builtin:") {
        Some("manhattan") => fixtures::manhattan_scene()?,
        Some("row") => fixtures::row_scene()?,
        Some("canyon") => fixtures::canyon_scene()?,
        Some("slab") => fixtures::slab_scene()?,
        Some(other) => bail!(Invalid(format!("unknown built-in scene {other:?}"))),
        None => load_scene(spec)?,
    };
    Ok(scene)
}

fn open_trajectory(spec: &str) -> Result<Trajectory> {
    let traj = match spec.strip_prefix("builtin:") {
        Some("manhattan") => fixtures::manhattan_route()?,
        Some("slab") => fixtures::slab_route(fixtures::MANHATTAN_SPEED)?,
        Some(other) => bail!(Invalid(format!("unknown built-in trajectory {other:?}"))),
        None => load_trajectory(spec)?,
    };
    Ok(traj)
}

fn trace_config(cli: &Cli) -> TraceConfig {
    TraceConfig { max_reflections: cli.order as usize, diffraction: !cli.no_diffraction }
}

fn em_config(cli: &Cli) -> EmConfig {
    EmConfig {
        frequency: cli.freq,
        polarization: if cli.horizontal { LinkPolarization::Horizontal } else { LinkPolarization::Vertical },
        tx_gain_dbi: cli.tx_gain,
        rx_gain_dbi: cli.rx_gain,
    }
}

fn matrix_path(cli: &Cli) -> PathBuf {
    cli.matrix.clone().unwrap_or_else(|| cli.out.join("matrix.json"))
}

fn matrix_order(cli: &Cli) -> usize {
    (cli.order as usize).max(1)
}

/// Cached matrix if present, otherwise `None`.
fn cached_matrix(cli: &Cli, scene: &Scene) -> Result<Option<InterVisMatrix>> {
    let path = matrix_path(cli);
    if !path.exists() {
        return Ok(None);
    }
    let m = InterVisMatrix::load(&path, scene).with_context(|| format!("loading {}", path.display()))?;
    if m.max_order < cli.order as usize {
        bail!(Invalid(format!(
            "matrix cache {} has order {} but --order is {}; rerun preprocess",
            path.display(),
            m.max_order,
            cli.order
        )));
    }
    Ok(Some(m))
}

fn cached_or_built(cli: &Cli, scene: &Scene) -> Result<InterVisMatrix> {
    match cached_matrix(cli, scene)? {
        Some(m) => Ok(m),
        None => Ok(build_matrix(scene, matrix_order(cli))?),
    }
}

fn cmd_preprocess(cli: &Cli, scene: &Scene) -> Result<()> {
    let t0 = Instant::now();
    let m = build_matrix(scene, matrix_order(cli))?;
    let elapsed = t0.elapsed();
    let path = matrix_path(cli);
    m.save(&path).with_context(|| format!("writing {}", path.display()))?;
    println!("faces: {}", scene.faces.len());
    for (order, n) in m.entry_counts() {
        println!("order {order}: {n} entries");
    }
    if !m.oblique.is_empty() {
        println!("oblique faces left to the exhaustive tracer: {}", m.oblique.len());
    }
    println!("build time: {:.3} s", elapsed.as_secs_f64());
    println!("matrix written to {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct InteractionRecord {
    kind: &'static str,
    id: usize,
    name: String,
    point: [f64; 3],
}

#[derive(Serialize)]
struct PathRecord {
    label: String,
    interactions: Vec<InteractionRecord>,
    length_m: f64,
    delay_s: f64,
}

fn path_record(p: &Path, scene: &Scene) -> PathRecord {
    PathRecord {
        label: p.label(scene),
        interactions: p
            .interactions
            .iter()
            .map(|i| InteractionRecord {
                kind: match i.kind {
                    InteractionKind::Reflection => "reflection",
                    InteractionKind::Diffraction => "diffraction",
                },
                id: i.id,
                name: match i.kind {
                    InteractionKind::Reflection => scene.faces[i.id].name.clone(),
                    InteractionKind::Diffraction => format!("edge{}", i.id),
                },
                point: [i.point.x, i.point.y, i.point.z],
            })
            .collect(),
        length_m: p.length,
        delay_s: p.delay,
    }
}

#[derive(Serialize)]
struct ReceiverDump {
    index: usize,
    tx: [f64; 3],
    rx: [f64; 3],
    paths: Vec<PathRecord>,
}

fn arr(p: Point3) -> [f64; 3] {
    [p.x, p.y, p.z]
}

fn write_json<T: Serialize>(path: &FsPath, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn stats_writer(path: &FsPath) -> Result<csv::Writer<File>> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["index", "path_loss_dB", "rms_ds_ns", "n_paths"])?;
    Ok(w)
}

fn write_stats_row(w: &mut csv::Writer<File>, index: usize, s: &ChannelStats) -> Result<()> {
    w.write_record([
        index.to_string(),
        if s.is_outage() { "inf".to_string() } else { format!("{:.6}", s.path_loss_db) },
        format!("{:.6}", s.rms_delay_spread * 1e9),
        s.rays.len().to_string(),
    ])?;
    Ok(())
}

fn cmd_trace(cli: &Cli, scene: &Scene, a: &TraceArgs) -> Result<()> {
    let cfg = trace_config(cli);
    let em = em_config(cli);
    let matrix = if cli.brute && !cli.compare {
        None
    } else {
        match cached_matrix(cli, scene)? {
            Some(m) => Some(m),
            None => bail!(Invalid(format!(
                "no matrix cache at {}; run preprocess first or pass --brute",
                matrix_path(cli).display()
            ))),
        }
    };
    let mut dumps = Vec::new();
    let mut stats = stats_writer(&cli.out.join("stats.csv"))?;
    let mut rays = csv::Writer::from_path(cli.out.join("rays.csv"))?;
    rays.write_record(["index", "path", "label", "length_m", "delay_ns", "gain_dB", "phase_rad"])?;
    let mut differing = 0;
    for (i, &rx) in a.rx.iter().enumerate() {
        let paths = match &matrix {
            Some(m) if !cli.brute => accelerated_trace(scene, m, a.tx, rx, cfg)?,
            _ => brute_force_trace(scene, a.tx, rx, cfg)?,
        };
        if cli.compare {
            let other = if cli.brute {
                accelerated_trace(scene, matrix.as_ref().expect("matrix loaded for comparison"), a.tx, rx, cfg)?
            } else {
                brute_force_trace(scene, a.tx, rx, cfg)?
            };
            let (only_a, only_b) = path_set_difference(&paths, &other);
            let n = only_a.len() + only_b.len();
            println!(
                "receiver {i}: {n} differing paths ({} paths, max point gap {:.3e} m)",
                paths.len(),
                max_point_gap(&paths, &other)
            );
            for p in only_a.iter().chain(&only_b) {
                println!("  differs: {}", p.label(scene));
            }
            differing += n;
        }
        let gains = path_gains(&paths, scene, &em)?;
        let st = channel_stats(&gains);
        write_stats_row(&mut stats, i, &st)?;
        for (p, g) in paths.iter().zip(&gains) {
            rays.write_record([
                i.to_string(),
                g.path.to_string(),
                p.label(scene),
                format!("{:.9}", p.length),
                format!("{:.6}", p.delay * 1e9),
                format!("{:.6}", 10.0 * g.power().log10()),
                format!("{:.6}", g.amplitude.arg()),
            ])?;
        }
        if paths.is_empty() {
            println!("receiver {i}: outage (no valid path)");
        } else {
            println!(
                "receiver {i}: {} paths, path loss {:.2} dB, RMS delay spread {:.3} ns",
                paths.len(),
                st.path_loss_db,
                st.rms_delay_spread * 1e9
            );
        }
        dumps.push(ReceiverDump {
            index: i,
            tx: arr(a.tx),
            rx: arr(rx),
            paths: paths.iter().map(|p| path_record(p, scene)).collect(),
        });
    }
    stats.flush()?;
    rays.flush()?;
    write_json(&cli.out.join("paths.json"), &dumps)?;
    if cli.compare {
        println!("{differing} differing paths");
        if differing > 0 {
            bail!(Mismatch(differing));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SegmentDump {
    interval: usize,
    s_start: f64,
    s_end: f64,
    samples: Vec<SampleDump>,
}

#[derive(Serialize)]
struct SampleDump {
    s: f64,
    time: f64,
    tx: [f64; 3],
    rx: [f64; 3],
    paths: Vec<PathRecord>,
}

fn sample_positions(traj: &Trajectory, step: Option<f64>) -> Result<Vec<f64>> {
    match step {
        None => Ok(traj.waypoint_arc_lengths()),
        Some(h) if h > 0.0 && h.is_finite() => {
            let len = traj.length();
            let n = (len / h).floor() as usize;
            let mut v: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
            if len - v[n] > 1e-9 {
                v.push(len);
            }
            Ok(v)
        }
        Some(h) => bail!(Invalid(format!("--step must be positive, got {h}"))),
    }
}

fn cmd_dynamic(cli: &Cli, scene: &Scene, a: &DynamicArgs) -> Result<()> {
    let traj = open_trajectory(&a.traj)?;
    let receiver = match (&a.traj2, a.rx) {
        (Some(t), _) => Receiver::Moving(open_trajectory(t)?),
        (None, Some(p)) => Receiver::Fixed(p),
        (None, None) => bail!(Invalid("dynamic needs --rx or --traj2".into())),
    };
    let matrix = cached_or_built(cli, scene)?;
    let cfg = trace_config(cli);
    let samples = sample_positions(&traj, a.step)?;
    let run = dynamic_trace(scene, &matrix, &traj, &receiver, cfg, &samples)?;

    let mut w = csv::Writer::from_path(cli.out.join("table.csv"))?;
    w.write_record(["order", "visible_node", "s_start", "s_end", "start_label", "end_label", "parent", "blockage"])?;
    for e in &run.table.entries {
        w.write_record([
            e.order.to_string(),
            e.visible_node.clone(),
            format!("{:.4}", e.s_start),
            format!("{:.4}", e.s_end),
            e.start_label.clone(),
            e.end_label.clone(),
            e.parent.clone(),
            e.blockage.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(cli.out.join("boundaries.csv"))?;
    w.write_record(["label", "s", "projected", "min_order"])?;
    for b in &run.table.boundaries {
        w.write_record([
            b.label.clone(),
            b.s.to_string(),
            b.projected.to_string(),
            b.min_order.map(|o| o.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(cli.out.join("coherence.csv"))?;
    w.write_record(["l", "d_l", "v_l", "T_c_l"])?;
    for s in &run.coherence.segments {
        w.write_record([s.l.to_string(), s.d_l.to_string(), s.v_l.to_string(), s.t_c.to_string()])?;
    }
    w.write_record(["average".to_string(), String::new(), String::new(), run.coherence.average.to_string()])?;
    w.flush()?;

    if let Some(c) = &run.combined {
        let mut w = csv::Writer::from_path(cli.out.join("combined_coherence.csv"))?;
        w.write_record(["l", "t_start", "t_end", "T_c_l", "mover"])?;
        for s in &c.segments {
            w.write_record([
                s.l.to_string(),
                s.t_start.to_string(),
                s.t_end.to_string(),
                s.t_c.to_string(),
                s.mover.to_string(),
            ])?;
        }
        w.write_record(["average".to_string(), String::new(), String::new(), c.average.to_string(), String::new()])?;
        w.flush()?;
    }

    let mut segments: Vec<SegmentDump> = Vec::new();
    for smp in &run.samples {
        if segments.last().map(|s| s.interval) != Some(smp.interval) {
            let iv = &run.table.intervals[smp.interval];
            segments.push(SegmentDump { interval: smp.interval, s_start: iv.0, s_end: iv.1, samples: Vec::new() });
        }
        segments.last_mut().expect("segment pushed above").samples.push(SampleDump {
            s: smp.s,
            time: smp.time,
            tx: arr(smp.tx),
            rx: arr(smp.rx),
            paths: smp.paths.iter().map(|p| path_record(p, scene)).collect(),
        });
    }
    write_json(&cli.out.join("dynamic_paths.json"), &segments)?;

    println!("route length: {:.3} m", run.table.length);
    println!("table rows: {}, boundaries: {}", run.table.entries.len(), run.table.boundaries.len());
    println!("coherence segments: {}, average T_c: {:.6} s", run.coherence.segments.len(), run.coherence.average);
    if let Some(c) = &run.combined {
        println!("combined segments: {}, average T_c: {:.6} s", c.segments.len(), c.average);
    }
    println!("samples traced: {}, candidate searches: {}", run.samples.len(), run.retraces);
    Ok(())
}

fn random_outside(scene: &Scene, rng: &mut ChaCha8Rng) -> Point3 {
    let (lo, hi) = scene.bbox;
    loop {
        let p = Vec3::new(
            rng.gen_range(lo.x..hi.x),
            rng.gen_range(lo.y..hi.y),
            rng.gen_range(lo.z.max(0.0) + 0.5..hi.z.max(lo.z.max(0.0) + 1.0) + 20.0),
        );
        if scene.building_containing(p).is_none() {
            return p;
        }
    }
}

fn secs(d: Duration) -> String {
    format!("{:.6}", d.as_secs_f64())
}

fn reduction(proposed: Duration, brute: Duration) -> f64 {
    100.0 * (1.0 - proposed.as_secs_f64() / brute.as_secs_f64())
}

fn cmd_bench(cli: &Cli, scene: &Scene, a: &BenchArgs) -> Result<()> {
    let traj = match &a.traj {
        Some(t) => open_trajectory(t)?,
        None => fixtures::manhattan_route()?,
    };
    let rx = a.rx.unwrap_or(fixtures::MANHATTAN_RX);
    let mut queries: Vec<(Point3, Point3)> = traj.waypoints.iter().map(|&tx| (tx, rx)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    for _ in 0..a.random {
        let tx = random_outside(scene, &mut rng);
        let rx = random_outside(scene, &mut rng);
        queries.push((tx, rx));
    }
    let threads = rayon::current_num_threads();
    let mut w = csv::Writer::from_path(cli.out.join("bench.csv"))?;
    w.write_record([
        "order",
        "queries",
        "paths",
        "matrix_entries",
        "matrix_s",
        "proposed_query_s",
        "proposed_total_s",
        "brute_force_s",
        "reduction_total_pct",
        "reduction_query_pct",
        "mismatches",
        "threads",
        "max_point_gap_m",
    ])?;
    println!("{} queries, {threads} threads, {} {}", queries.len(), std::env::consts::OS, std::env::consts::ARCH);
    println!("order  matrix(s)  proposed(s)  total(s)  brute(s)  reduction(total)  reduction(query)");
    for order in 1..=a.max_order as usize {
        let cfg = TraceConfig { max_reflections: order, diffraction: !cli.no_diffraction };
        let mut t_matrix = Duration::MAX;
        let mut t_query = Duration::MAX;
        let mut t_brute = Duration::MAX;
        let mut matrix = None;
        let mut fast: Vec<Vec<Path>> = Vec::new();
        let mut slow: Vec<Vec<Path>> = Vec::new();
        for _ in 0..a.repeat {
            let t0 = Instant::now();
            let m = build_matrix(scene, order)?;
            t_matrix = t_matrix.min(t0.elapsed());
            let t0 = Instant::now();
            fast = queries.iter().map(|&(tx, rx)| accelerated_trace(scene, &m, tx, rx, cfg)).collect::<Result<_, _>>()?;
            t_query = t_query.min(t0.elapsed());
            let t0 = Instant::now();
            slow = queries.iter().map(|&(tx, rx)| brute_force_trace(scene, tx, rx, cfg)).collect::<Result<_, _>>()?;
            t_brute = t_brute.min(t0.elapsed());
            matrix = Some(m);
        }
        let matrix = matrix.expect("at least one run");
        let mismatches = fast
            .iter()
            .zip(&slow)
            .filter(|(f, s)| {
                let (x, y) = path_set_difference(f, s);
                !x.is_empty() || !y.is_empty()
            })
            .count();
        let gap = fast.iter().zip(&slow).map(|(f, s)| max_point_gap(f, s)).fold(0.0, f64::max);
        let n_paths: usize = slow.iter().map(Vec::len).sum();
        let entries: u64 = matrix.entry_counts().iter().map(|c| c.1).sum();
        let total = t_matrix + t_query;
        let r_total = reduction(total, t_brute);
        let r_query = reduction(t_query, t_brute);
        println!(
            "{order:>5}  {:>9.3}  {:>11.3}  {:>8.3}  {:>8.3}  {:>15.1}%  {:>15.1}%",
            t_matrix.as_secs_f64(),
            t_query.as_secs_f64(),
            total.as_secs_f64(),
            t_brute.as_secs_f64(),
            r_total,
            r_query
        );
        w.write_record([
            order.to_string(),
            queries.len().to_string(),
            n_paths.to_string(),
            entries.to_string(),
            secs(t_matrix),
            secs(t_query),
            secs(total),
            secs(t_brute),
            format!("{r_total:.2}"),
            format!("{r_query:.2}"),
            mismatches.to_string(),
            threads.to_string(),
            format!("{gap:.3e}"),
        ])?;
        if mismatches > 0 {
            println!("order {order}: {mismatches} queries with differing path sets");
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_stats(cli: &Cli, scene: &Scene, a: &StatsArgs) -> Result<()> {
    let mut points = a.rx.clone();
    if let Some(t) = &a.traj {
        points.extend(open_trajectory(t)?.waypoints);
    }
    if points.is_empty() {
        bail!(Invalid("stats needs --rx or --traj".into()));
    }
    let cfg = trace_config(cli);
    let em = em_config(cli);
    let matrix = if cli.brute { None } else { Some(cached_or_built(cli, scene)?) };
    let mut w = stats_writer(&cli.out.join("stats.csv"))?;
    let mut losses = Vec::new();
    let mut spreads = Vec::new();
    let mut outages = 0;
    for (i, &rx) in points.iter().enumerate() {
        let paths = match &matrix {
            Some(m) => accelerated_trace(scene, m, a.tx, rx, cfg)?,
            None => brute_force_trace(scene, a.tx, rx, cfg)?,
        };
        let st = channel_stats(&path_gains(&paths, scene, &em)?);
        write_stats_row(&mut w, i, &st)?;
        losses.push(st.path_loss_db);
        if st.is_outage() {
            outages += 1;
        } else {
            spreads.push(st.rms_delay_spread * 1e9);
        }
    }
    w.flush()?;
    for (name, values) in [("cdf_path_loss.csv", &losses), ("cdf_rms_ds.csv", &spreads)] {
        let mut w = csv::Writer::from_path(cli.out.join(name))?;
        w.write_record(["value", "cumulative_probability"])?;
        for (v, p) in cdf(values) {
            w.write_record([format!("{v:.6}"), format!("{p:.6}")])?;
        }
        w.flush()?;
    }
    let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    let finite: Vec<f64> = losses.iter().copied().filter(|l| l.is_finite()).collect();
    println!(
        "{} receiver points, {outages} outages, mean path loss {:.2} dB, mean RMS delay spread {:.3} ns",
        points.len(),
        mean(&finite),
        mean(&spreads)
    );
    Ok(())
}
