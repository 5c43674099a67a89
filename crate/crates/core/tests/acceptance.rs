//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::collections::{BTreeMap, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use navstack::bus::{Bus, BusError, BusMode};
use navstack::camera_api::DepthScan;
use navstack::discrete_move::{
    profile_speed, straight_error, turn_error, DiscreteAction, Profile, ProfilePhase,
};
use navstack::eval::{
    aggregate, round2, run_single, run_suite, stability_stats, success, write_report, EpisodeLog, EpisodeSpec,
    ReportOptions, SuccessReport, SuiteConfig, ACTION_BUDGET,
};
use navstack::geometry::{Point, Pose2D};
use navstack::planner::{dijkstra, extract_path, fast_marching, Cell, OccupancyGrid};
use navstack::policies::ScriptedPolicy;
use navstack::sim_world::{bundled_apartment, Category, NoiseModel, WorldMap};
use navstack::stack::{Stack, StackConfig};
use navstack::vsn_core::{median_filter, EpisodeStatus, VsnConfig};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// 1000 random moves and turns under actuation and odometry noise.
fn controller_tolerance() -> Outcome {
    let t0 = Instant::now();
    let world = Arc::new(common::open_room(30.0));
    let mut rng = ChaCha8Rng::seed_from_u64(0xc1);
    let mut worst_m: f64 = 0.0;
    let mut worst_deg: f64 = 0.0;
    for batch in 0..40u64 {
        let cfg = StackConfig {
            noise: NoiseModel {
                odom_xy_sigma: 0.002,
                odom_heading_sigma: 0.05,
                actuation_scale_sigma: 0.05,
                ..NoiseModel::zero(batch)
            },
            ..StackConfig::default()
        };
        let stack = Stack::launch(Arc::clone(&world), world.starts[0], &cfg).map_err(|e| e.to_string())?;
        for _ in 0..25 {
            let cmd = match rng.random_range(0..4) {
                0 => DiscreteAction::forward(rng.random_range(0.1..=1.0)),
                1 => DiscreteAction::backward(rng.random_range(0.1..=1.0)),
                2 => DiscreteAction::left(rng.random_range(10.0..=180.0)),
                _ => DiscreteAction::right(rng.random_range(10.0..=180.0)),
            };
            let r = stack.controller().execute(cmd);
            check(r.success, || format!("{cmd} failed: {:?}", r.failure))?;
            if cmd.kind.is_move() {
                worst_m = worst_m.max(r.final_straight_error.abs());
                check(r.final_straight_error.abs() < 0.005, || {
                    format!("{cmd}: straight error {}", r.final_straight_error)
                })?;
            } else {
                worst_deg = worst_deg.max(r.final_turn_error.abs());
                check(r.final_turn_error.abs() < 0.1, || format!("{cmd}: turn error {}", r.final_turn_error))?;
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    check(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!(
        "1000 commands ok, worst {:.5} m / {:.4} deg, {secs:.1} s",
        worst_m, worst_deg
    ))
}

/// Speed limit, continuity and phase layout of a logged 1 m forward move.
fn velocity_profile() -> Outcome {
    let world = Arc::new(common::open_room(10.0));
    let cfg = StackConfig::default();
    let stack = Stack::launch(Arc::clone(&world), world.starts[0], &cfg).map_err(|e| e.to_string())?;
    let (r, trace) = stack.controller().execute_traced(DiscreteAction::forward(1.0));
    check(r.success, || format!("move failed: {:?}", r.failure))?;
    let m = cfg.motion;
    let profile = Profile::new(1.0, m.linear_velocity, m.accel_decel_distance);
    check((profile.ramp - 1.0 / 3.0).abs() < 1e-12, || format!("ramp {}", profile.ramp))?;
    check((profile.a - 0.135).abs() < 1e-12, || format!("a {}", profile.a))?;
    let mut prev_v = 0.0;
    let mut prev_t = trace.first().map_or(0.0, |k| k.t - 1.0 / m.tick_hz);
    let mut seen = BTreeMap::new();
    for k in &trace {
        check(k.command.v <= 0.3 + 1e-12, || format!("speed {} at t={}", k.command.v, k.t))?;
        let bound = profile.a * (k.t - prev_t) + m.creep_linear + 1e-12;
        check((k.command.v - prev_v).abs() <= bound, || {
            format!("jump {} -> {} at t={}", prev_v, k.command.v, k.t)
        })?;
        if let Some(p) = k.phase {
            check(p == profile.phase(k.covered), || format!("phase {p:?} at covered {}", k.covered))?;
            *seen.entry(format!("{p:?}")).or_insert(0) += 1;
        }
        prev_v = k.command.v;
        prev_t = k.t;
    }
    check(seen.len() == 3, || format!("phases seen {seen:?}"))?;
    let p = Profile::new(1.5, 0.3, Some(0.5));
    check((p.a - 0.09).abs() < 1e-15, || format!("a {}", p.a))?;
    let v = profile_speed(0.0, 0.09, 0.5, ProfilePhase::Accel, &p);
    check((v - 0.3).abs() < 1e-12, || format!("v(0.5) = {v}"))?;
    Ok(format!("{} ticks, phases {seen:?}, v(0.5)={v}", trace.len()))
}

/// Randomized identities of the turn and straight-line errors.
fn error_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xe1);
    for _ in 0..100_000 {
        let a: f64 = rng.random_range(-1.0e4..1.0e4);
        let b: f64 = rng.random_range(-1.0e4..1.0e4);
        let e = turn_error(a, b);
        check((0.0..360.0).contains(&e), || format!("turn_error({a}, {b}) = {e}"))?;
        check(turn_error(a, a) == 0.0, || format!("turn_error({a}, {a}) != 0"))?;
        let d: f64 = rng.random_range(0.0..10.0);
        let x: f64 = rng.random_range(-100.0..100.0);
        let y: f64 = rng.random_range(-100.0..100.0);
        let s = straight_error(d, x, y, x, y);
        check((s - d).abs() <= 1e-12, || format!("straight_error at start = {s}, d = {d}"))?;
        let ox = rng.random_range(-1000..1000) as f64;
        let oy = rng.random_range(-1000..1000) as f64;
        let z = straight_error(5.0, ox + 3.0, oy + 4.0, ox, oy);
        check(z.abs() <= 1e-12, || format!("3-4-5 at ({ox}, {oy}) gives {z}"))?;
    }
    Ok("100000 samples".into())
}

fn scan(ranges: Vec<f64>, stamp: f64) -> DepthScan {
    DepthScan {
        ranges,
        fov: 60.0,
        max_range: 5.0,
        stamp,
        pose_hint: Pose2D::new(0.0, 0.0, 0.0),
    }
}

/// Median over five frames with impulses in at most two frames per ray.
fn median_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4d);
    let n_rays = 64;
    for trial in 0..50 {
        let clean: Vec<f64> = (0..n_rays).map(|_| rng.random_range(0.1..5.0)).collect();
        let mut frames: Vec<Vec<f64>> = vec![clean.clone(); 5];
        #[allow(clippy::needless_range_loop)]
        for r in 0..n_rays {
            let k = rng.random_range(0..=2);
            let mut idx: Vec<usize> = (0..5).collect();
            idx.shuffle(&mut rng);
            for &f in &idx[..k] {
                frames[f][r] = match rng.random_range(0..3) {
                    0 => 0.0,
                    1 => rng.random_range(0.0..0.1),
                    _ => 5.0,
                };
            }
        }
        let mut scans: Vec<DepthScan> = frames.into_iter().enumerate().map(|(i, f)| scan(f, i as f64)).collect();
        let out = median_filter(&scans).map_err(|e| e.to_string())?;
        check(out.ranges == clean, || format!("trial {trial}: output differs from clean scan"))?;
        for _ in 0..100 {
            scans.shuffle(&mut rng);
            let again = median_filter(&scans).map_err(|e| e.to_string())?;
            check(again.ranges == out.ranges && again.stamp == out.stamp, || {
                format!("trial {trial}: order dependence")
            })?;
        }
    }
    Ok("50 scans x 100 shuffles".into())
}

fn component(grid: &OccupancyGrid, start: (i64, i64)) -> Vec<(i64, i64)> {
    let mut seen = vec![false; grid.len()];
    let mut out = Vec::new();
    let mut q = VecDeque::from([start]);
    seen[grid.index(start.0, start.1).unwrap()] = true;
    while let Some((c, r)) = q.pop_front() {
        out.push((c, r));
        for (dc, dr) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            if let Some(j) = grid.index(c + dc, r + dr) {
                if !seen[j] && grid.cells()[j] == Cell::Free {
                    seen[j] = true;
                    q.push_back((c + dc, r + dr));
                }
            }
        }
    }
    out
}

fn segment_clear(grid: &OccupancyGrid, a: Point, b: Point) -> bool {
    let steps = ((a.distance(&b) / (grid.resolution() / 8.0)).ceil() as usize).max(1);
    (0..=steps).all(|k| {
        let t = k as f64 / steps as f64;
        grid.at(Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))) == Cell::Free
    })
}

/// Fast marching against an 8-neighbour Dijkstra oracle on random grids.
fn fmm_vs_dijkstra() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xf3);
    let mut worst: f64 = 0.0;
    let mut grids = 0;
    while grids < 50 {
        let mut g = OccupancyGrid::new(64, 64, 0.1, Point::new(0.0, 0.0)).map_err(|e| e.to_string())?;
        for r in 0..64 {
            for c in 0..64 {
                let cell = if rng.random_bool(0.2) { Cell::Occupied } else { Cell::Free };
                g.set(c, r, cell);
            }
        }
        let free: Vec<(i64, i64)> = (0..g.len()).map(|i| g.coords(i)).filter(|&(c, r)| g.get(c, r) == Cell::Free).collect();
        let goal = free[rng.random_range(0..free.len())];
        let comp = component(&g, goal);
        if comp.len() < 500 {
            continue;
        }
        let start = comp[rng.random_range(comp.len() / 2..comp.len())];
        let goal_p = g.cell_center(goal.0, goal.1);
        let start_p = g.cell_center(start.0, start.1);
        let field = fast_marching(&g, goal_p, 0.0).map_err(|e| e.to_string())?;
        let oracle = dijkstra(&g, goal_p, 0.0).map_err(|e| e.to_string())?;
        let f = field.value(start.0, start.1);
        let d = oracle[g.index(start.0, start.1).unwrap()];
        check(f.is_finite() && d.is_finite(), || format!("grid {grids}: unreachable start"))?;
        let rel = (f - d).abs() / d;
        worst = worst.max(rel);
        check(rel <= 0.08, || format!("grid {grids}: fmm {f:.3} vs dijkstra {d:.3}"))?;
        let path = extract_path(&field, start_p).map_err(|e| e.to_string())?;
        for w in path.windows(2) {
            check(segment_clear(&g, w[0], w[1]), || {
                format!("grid {grids}: path crosses an obstacle near ({:.2}, {:.2})", w[0].x, w[0].y)
            })?;
        }
        grids += 1;
    }
    let secs = t0.elapsed().as_secs_f64();
    check(secs < 30.0, || format!("took {secs:.1} s"))?;
    Ok(format!("50 grids, worst relative gap {:.2}%, {secs:.1} s", worst * 100.0))
}

fn fixture(rows: &[(Category, usize, usize)]) -> Vec<(Category, bool, usize)> {
    rows.iter()
        .flat_map(|&(c, wins, avg)| (0..15).map(move |k| (c, k < wins, avg)))
        .collect()
}

/// Success-rate arithmetic on synthetic outcomes shaped like the reported tables.
fn sr_fixture() -> Outcome {
    use Category::*;
    let vlv = fixture(&[(Chair, 6, 30), (Sofa, 6, 65), (Table, 6, 42), (Bed, 3, 39), (Toilet, 1, 42)]);
    let (cats, overall) = aggregate(&vlv).map_err(|e| e.to_string())?;
    let srs: Vec<f64> = cats.iter().map(|c| c.sr).collect();
    check(srs == [40.0, 40.0, 40.0, 20.0, 6.67], || format!("vlv per-category {srs:?}"))?;
    check(overall.sr == 29.33, || format!("vlv overall {}", overall.sr))?;
    let avgs: Vec<f64> = cats.iter().map(|c| c.average_actions).collect();
    check(avgs == [30.0, 65.0, 42.0, 39.0, 42.0], || format!("vlv actions {avgs:?}"))?;

    let e2e = fixture(&[
        (Chair, 5, 49),
        (Monitor, 5, 91),
        (Sofa, 5, 70),
        (Bed, 3, 97),
        (Toilet, 1, 61),
        (Plant, 0, 82),
    ]);
    let (cats, overall2) = aggregate(&e2e).map_err(|e| e.to_string())?;
    let srs2: Vec<f64> = cats.iter().map(|c| c.sr).collect();
    check(srs2 == [33.33, 33.33, 33.33, 20.0, 6.67, 0.0], || format!("end-to-end per-category {srs2:?}"))?;
    check(overall2.sr == 21.11, || format!("end-to-end overall {}", overall2.sr))?;

    let world = bundled_apartment();
    let template = scripted_log(&world, Category::Chair, 1, Vec::new())?;
    let mut logs = Vec::new();
    for (hours, km, n) in [(8.0, 1.12, 40usize), (30.0, 4.10, 150)] {
        for _ in 0..n {
            let mut l = template.clone();
            l.total_sim_time = hours * 3600.0 / n as f64;
            l.total_path_length = km * 1000.0 / n as f64;
            logs.push(l);
        }
    }
    let s = stability_stats(&logs);
    check(round2(s.distance_km) == 5.22 && round2(s.time_hours) == 38.0, || format!("stability {s:?}"))?;
    Ok(format!(
        "vlv {srs:?} overall {}; end-to-end {srs2:?} overall {}; {:.2} km / {:.2} h",
        overall.sr, overall2.sr, s.distance_km, s.time_hours
    ))
}

fn scripted_log(world: &WorldMap, target: Category, start: usize, tokens: Vec<&str>) -> Result<EpisodeLog, String> {
    let world = Arc::new(world.clone());
    let mut policy = ScriptedPolicy::from_tokens(&tokens).map_err(|e| e.to_string())?;
    let spec = EpisodeSpec {
        id: format!("scripted-{target}-s{start:02}"),
        target,
        start_index: start,
        seed: 1,
    };
    run_single(&world, &spec, &mut policy, &StackConfig::default(), &VsnConfig::default()).map_err(|e| e.to_string())
}

const SEED: u64 = 7;

fn suite(world: &Arc<WorldMap>, policy: &str, parallel: usize) -> Result<(SuccessReport, Vec<EpisodeLog>), String> {
    let mut cfg = SuiteConfig::new(policy, world.categories(), SEED);
    cfg.parallel = parallel;
    run_suite(world, &cfg).map_err(|e| e.to_string())
}

fn write_all(world: &WorldMap, runs: &[(SuccessReport, Vec<EpisodeLog>)], dir: &Path) -> Result<(), String> {
    for (i, (report, logs)) in runs.iter().enumerate() {
        write_report(report, logs, world, &dir.join(i.to_string()), ReportOptions::default())
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

/// Baseline ordering on the bundled apartment.
fn harness_soundness(dir: &Path) -> Outcome {
    let t0 = Instant::now();
    let world = Arc::new(bundled_apartment());
    check(world.starts.len() == 15, || format!("{} starts", world.starts.len()))?;
    let oracle = suite(&world, "oracle", 1)?;
    let random = suite(&world, "random", 1)?;
    let vlv = suite(&world, "vlv", 1)?;
    let (o, r, v) = (oracle.0.overall.sr, random.0.overall.sr, vlv.0.overall.sr);
    write_all(&world, &[oracle, random, vlv], dir)?;
    let secs = t0.elapsed().as_secs_f64();
    let summary = format!("oracle {o}%, random {r}%, vlv {v}%, {secs:.1} s");
    check(o == 100.0, || summary.clone())?;
    check(r <= 20.0, || summary.clone())?;
    check(v > r && v >= 60.0, || summary.clone())?;
    check(secs < 600.0, || summary.clone())?;
    Ok(summary)
}

/// Action budget and the STOP distance rule.
fn episode_budget() -> Outcome {
    let world = bundled_apartment();
    let spin: Vec<&str> = vec!["TURN_LEFT"; 400];
    let log = scripted_log(&world, Category::Toilet, 6, spin)?;
    check(log.status == EpisodeStatus::LimitReached, || format!("status {:?}", log.status))?;
    check(log.action_count() == ACTION_BUDGET, || format!("{} actions", log.action_count()))?;
    check(!success(&log, &world), || "limit episode scored as success".into())?;

    let early = scripted_log(&world, Category::Toilet, 6, Vec::new())?;
    check(early.status == EpisodeStatus::SuccessClaimed, || format!("status {:?}", early.status))?;
    check(early.final_distance_to_target > 1.0, || "start is too close to the target".into())?;
    check(!success(&early, &world), || "far STOP scored as success".into())?;
    Ok(format!(
        "never-stopping policy ended after {} actions; STOP at {:.2} m scored as failure",
        log.action_count(),
        early.final_distance_to_target
    ))
}

fn dir_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap_or_default());
            }
        }
    }
    out
}

/// A second run of the baseline suites writes byte-identical outputs.
fn determinism(first: &Path, second: &Path) -> Outcome {
    let world = Arc::new(bundled_apartment());
    let runs = vec![
        suite(&world, "oracle", 2)?,
        suite(&world, "random", 2)?,
        suite(&world, "vlv", 2)?,
    ];
    write_all(&world, &runs, second)?;
    let a = dir_files(first);
    let b = dir_files(second);
    check(!a.is_empty(), || "first run wrote nothing".into())?;
    check(a.keys().eq(b.keys()), || "different file sets".into())?;
    for (k, v) in &a {
        check(b.get(k) == Some(v), || format!("{k} differs"))?;
    }
    Ok(format!("{} files identical", a.len()))
}

/// FIFO under concurrent publishers, service timeout accuracy, remap chains.
fn bus_contract() -> Outcome {
    const PUBS: u64 = 10;
    const N: u64 = 10_000;
    let bus: Bus<u64> = Bus::new(BusMode::Threaded);
    let sub = bus.subscribe("/load", (PUBS * N) as usize).map_err(|e| e.to_string())?;
    thread::scope(|s| {
        for p in 0..PUBS {
            let bus = bus.clone();
            s.spawn(move || {
                let mut publisher = bus.advertise("/load").expect("advertise");
                for k in 0..N {
                    publisher.publish(k as f64, p * N + k).expect("publish");
                }
            });
        }
    });
    let got = sub.drain();
    check(got.len() as u64 == PUBS * N, || format!("received {}", got.len()))?;
    check(sub.dropped() == 0, || format!("dropped {}", sub.dropped()))?;
    let mut last: BTreeMap<u64, u64> = BTreeMap::new();
    for e in &got {
        if let Some(prev) = last.insert(e.publisher, e.payload) {
            check(e.payload == prev + 1, || format!("publisher {}: {} after {}", e.publisher, e.payload, prev))?;
        }
    }
    check(last.len() as u64 == PUBS, || format!("{} publishers seen", last.len()))?;

    let timeout = Duration::from_millis(200);
    bus.register_service("/slow", |x: u8| {
        thread::sleep(Duration::from_millis(1500));
        x
    })
    .map_err(|e| e.to_string())?;
    let t = Instant::now();
    let r: Result<u8, BusError> = bus.call_service("/slow", 1u8, timeout);
    let waited = t.elapsed();
    check(matches!(r, Err(BusError::Timeout { .. })), || format!("got {r:?}"))?;
    check(waited >= timeout && waited.as_secs_f64() <= 1.1 * timeout.as_secs_f64(), || {
        format!("timeout fired after {waited:?}")
    })?;

    let chain: Bus<u64> = Bus::new(BusMode::Threaded);
    chain.remap("/a", "/b").map_err(|e| e.to_string())?;
    chain.remap("/b", "/c").map_err(|e| e.to_string())?;
    let resolved = chain.resolve("/a").map_err(|e| e.to_string())?;
    check(resolved.as_str() == "/c", || format!("/a resolves to {}", resolved.as_str()))?;
    let end = chain.subscribe("/c", 4).map_err(|e| e.to_string())?;
    let mut p = chain.advertise("/a").map_err(|e| e.to_string())?;
    p.publish(0.0, 42).map_err(|e| e.to_string())?;
    check(end.try_recv().map(|e| e.payload) == Some(42), || "remapped message lost".into())?;
    Ok(format!("{} messages in order, timeout after {waited:?}, /a -> /c", got.len()))
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let secs = t.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => {
            println!("PASS {id:>2} {name}: {detail} [{secs:.1}s]");
            true
        }
        Err(detail) => {
            println!("FAIL {id:>2} {name}: {detail} [{secs:.1}s]");
            false
        }
    }
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let first = tmp.path().join("first");
    let second = tmp.path().join("second");
    let results = [
        run(1, "controller tolerance", controller_tolerance),
        run(2, "velocity profile", velocity_profile),
        run(3, "error properties", error_properties),
        run(4, "median filter", median_oracle),
        run(5, "fmm vs dijkstra", fmm_vs_dijkstra),
        run(6, "success-rate fixtures", sr_fixture),
        run(7, "harness soundness", || harness_soundness(&first)),
        run(8, "episode budget", episode_budget),
        run(9, "determinism", || determinism(&first, &second)),
        run(10, "bus contract", bus_contract),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
