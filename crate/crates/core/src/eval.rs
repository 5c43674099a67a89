//! Episode suites, the success rule, SR aggregation, logs, plots and replay.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discrete_move::ActionKind;
use crate::geometry::{signed_deg, Point, Pose2D};
use crate::policies::{make_policy, EpisodeContext, Policy, PolicyError, VlvConfig};
use crate::sim_world::{distance_to_object, mix_seed, Category, NoiseModel, WorldError, WorldMap};
use crate::stack::{Stack, StackConfig, StackError};
use crate::vsn_core::{run_episode, EpisodeStatus, Observation, StepRecord, VsnConfig};

/// Success radius around the target centroid, meters.
pub const SUCCESS_RADIUS: f64 = 1.0;
/// Largest action count a successful episode may use.
pub const ACTION_BUDGET: usize = 150;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Stack(#[from] StackError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("no episodes to score")]
    Empty,
    #[error("start index {0} is out of range (world has {1} starts)")]
    BadStart(usize, usize),
    #[error("log was recorded in world {logged}, not {given}")]
    WorldMismatch { logged: String, given: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Everything recorded about one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub id: String,
    pub policy: String,
    pub target: Category,
    /// 1-based index into the world's start list.
    pub start_index: usize,
    pub seed: u64,
    pub world: String,
    pub world_digest: String,
    pub start_pose: Pose2D,
    pub actions: Vec<StepRecord>,
    pub status: EpisodeStatus,
    pub note: Option<String>,
    /// Ground truth.
    pub final_pose: Pose2D,
    /// Distance from the final pose to the nearest target centroid when the
    /// episode ended with a STOP.
    pub distance_to_target_at_stop: Option<f64>,
    pub final_distance_to_target: f64,
    pub total_path_length: f64,
    pub total_sim_time: f64,
    pub observation_refs: Vec<String>,
    pub noise: NoiseModel,
    /// Believed trajectory (start pose composed with odometry) plus the true
    /// final pose.
    pub trajectory: Vec<Pose2D>,
    #[serde(skip)]
    pub observations: Vec<Observation>,
}

impl EpisodeLog {
    pub fn action_count(&self) -> usize {
        self.actions.len()
    }

    pub fn collided(&self) -> bool {
        self.actions.iter().any(|a| a.result.collision)
    }
}

/// The success rule: STOP sampled, final pose within 1 m of a target
/// centroid, at most 150 actions and no collisions.
pub fn success(log: &EpisodeLog, world: &WorldMap) -> bool {
    if log.status != EpisodeStatus::SuccessClaimed {
        return false;
    }
    let Ok(d) = distance_to_object(world, &log.final_pose, log.target) else {
        return false;
    };
    d < SUCCESS_RADIUS && log.action_count() <= ACTION_BUDGET && !log.collided()
}

/// Round half away from zero to two decimals.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub category: Category,
    pub successes: usize,
    pub episodes: usize,
    pub sr: f64,
    /// Mean over every episode of the category, successful or not.
    pub average_actions: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overall {
    pub successes: usize,
    pub episodes: usize,
    pub sr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Stability {
    pub distance_km: f64,
    pub time_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    pub categories: Vec<CategoryStats>,
    pub overall: Overall,
    pub stability: Stability,
}

/// Aggregate outcomes `(category, success, action count)`. Categories keep
/// the order of first appearance.
pub fn aggregate(outcomes: &[(Category, bool, usize)]) -> Result<(Vec<CategoryStats>, Overall), EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut order: Vec<Category> = Vec::new();
    for (c, _, _) in outcomes {
        if !order.contains(c) {
            order.push(*c);
        }
    }
    let categories = order
        .into_iter()
        .map(|c| {
            let rows: Vec<_> = outcomes.iter().filter(|o| o.0 == c).collect();
            let successes = rows.iter().filter(|o| o.1).count();
            let actions: usize = rows.iter().map(|o| o.2).sum();
            CategoryStats {
                category: c,
                successes,
                episodes: rows.len(),
                sr: round2(100.0 * successes as f64 / rows.len() as f64),
                average_actions: round2(actions as f64 / rows.len() as f64),
            }
        })
        .collect();
    let successes = outcomes.iter().filter(|o| o.1).count();
    let overall = Overall {
        successes,
        episodes: outcomes.len(),
        sr: round2(100.0 * successes as f64 / outcomes.len() as f64),
    };
    Ok((categories, overall))
}

pub fn success_rate(logs: &[EpisodeLog], world: &WorldMap) -> Result<SuccessReport, EvalError> {
    let outcomes: Vec<_> = logs
        .iter()
        .map(|l| (l.target, success(l, world), l.action_count()))
        .collect();
    let (categories, overall) = aggregate(&outcomes)?;
    Ok(SuccessReport {
        categories,
        overall,
        stability: stability_stats(logs),
    })
}

/// Total distance in km and simulated time in hours.
pub fn stability_stats(logs: &[EpisodeLog]) -> Stability {
    Stability {
        distance_km: logs.iter().map(|l| l.total_path_length).sum::<f64>() / 1000.0,
        time_hours: logs.iter().map(|l| l.total_sim_time).sum::<f64>() / 3600.0,
    }
}

/// One (start, category) cell of a suite.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSpec {
    pub id: String,
    pub target: Category,
    pub start_index: usize,
    pub seed: u64,
}

/// Launch a fresh stack and run one episode with `policy`.
pub fn run_single(
    world: &Arc<WorldMap>,
    spec: &EpisodeSpec,
    policy: &mut dyn Policy,
    stack_cfg: &StackConfig,
    vsn_cfg: &VsnConfig,
) -> Result<EpisodeLog, EvalError> {
    let n = world.starts.len();
    if spec.start_index == 0 || spec.start_index > n {
        return Err(EvalError::BadStart(spec.start_index, n));
    }
    if !world.has_category(spec.target) {
        return Err(WorldError::CategoryAbsent(spec.target).into());
    }
    let start = world.starts[spec.start_index - 1];
    let mut cfg = stack_cfg.clone();
    cfg.noise.rng_seed = mix_seed(spec.seed, 0x6e6f);
    let stack = Stack::launch(Arc::clone(world), start, &cfg)?;
    let mut vcfg = vsn_cfg.clone();
    vcfg.target = Some(spec.target);
    let mut session = stack.vsn_session(vcfg)?;
    let ctx = EpisodeContext {
        target: spec.target,
        seed: spec.seed,
        start_pose: start,
        world: Some(Arc::clone(world)),
    };
    let run = match policy.reset(&ctx) {
        Ok(()) => run_episode(policy, &mut session),
        Err(e) => crate::vsn_core::EpisodeRun {
            steps: Vec::new(),
            status: EpisodeStatus::MoveFailed,
            note: Some(e.to_string()),
            observations: Vec::new(),
        },
    };
    let final_pose = stack.truth_pose();
    let final_distance = distance_to_object(world, &final_pose, spec.target)?;
    let total_path_length = run
        .steps
        .iter()
        .filter(|s| s.executed.kind.is_move())
        .map(|s| s.result.achieved.abs())
        .sum();
    let mut trajectory: Vec<Pose2D> = run
        .steps
        .iter()
        .map(|s| start.compose(&Pose2D::new(s.gps.x, s.gps.y, s.compass)))
        .collect();
    trajectory.push(final_pose);
    let observation_refs = (0..run.observations.len())
        .map(|k| format!("frames/{}/step_{k:03}.json", spec.id))
        .collect();
    Ok(EpisodeLog {
        id: spec.id.clone(),
        policy: policy.name().to_string(),
        target: spec.target,
        start_index: spec.start_index,
        seed: spec.seed,
        world: world.name.clone(),
        world_digest: world.digest().to_string(),
        start_pose: start,
        distance_to_target_at_stop: (run.status == EpisodeStatus::SuccessClaimed).then_some(final_distance),
        final_distance_to_target: final_distance,
        actions: run.steps,
        status: run.status,
        note: run.note,
        final_pose,
        total_path_length,
        total_sim_time: stack.now(),
        observation_refs,
        noise: cfg.noise,
        trajectory,
        observations: run.observations,
    })
}

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub policy: String,
    pub categories: Vec<Category>,
    /// 1-based start indices; empty means every start.
    pub starts: Vec<usize>,
    pub seed: u64,
    /// Worker threads; 1 runs in order on the caller's thread.
    pub parallel: usize,
    pub stack: StackConfig,
    pub vsn: VsnConfig,
    pub vlv: VlvConfig,
    /// Tokens for the `external` policy.
    pub script: Option<Vec<String>>,
}

impl SuiteConfig {
    pub fn new(policy: &str, categories: Vec<Category>, seed: u64) -> Self {
        Self {
            policy: policy.to_string(),
            categories,
            starts: Vec::new(),
            seed,
            parallel: 1,
            stack: StackConfig::default(),
            vsn: VsnConfig::default(),
            vlv: VlvConfig::default(),
            script: None,
        }
    }
}

/// Category-major enumeration of the suite grid with per-episode seeds.
pub fn suite_specs(world: &WorldMap, cfg: &SuiteConfig) -> Result<Vec<EpisodeSpec>, EvalError> {
    let starts: Vec<usize> = if cfg.starts.is_empty() {
        (1..=world.starts.len()).collect()
    } else {
        cfg.starts.clone()
    };
    let mut specs = Vec::new();
    for &c in &cfg.categories {
        if !world.has_category(c) {
            return Err(WorldError::CategoryAbsent(c).into());
        }
        for &s in &starts {
            if s == 0 || s > world.starts.len() {
                return Err(EvalError::BadStart(s, world.starts.len()));
            }
            let idx = specs.len() as u64;
            specs.push(EpisodeSpec {
                id: format!("{}-{}-s{:02}", cfg.policy, c, s),
                target: c,
                start_index: s,
                seed: mix_seed(cfg.seed, idx),
            });
        }
    }
    Ok(specs)
}

/// Run every (category, start) pair, each on its own stack. Results are in
/// enumeration order regardless of `parallel`.
pub fn run_suite(world: &Arc<WorldMap>, cfg: &SuiteConfig) -> Result<(SuccessReport, Vec<EpisodeLog>), EvalError> {
    let specs = suite_specs(world, cfg)?;
    let run_one = |spec: &EpisodeSpec| -> Result<EpisodeLog, EvalError> {
        let mut policy = make_policy(&cfg.policy, cfg.vlv, cfg.script.clone())?;
        run_single(world, spec, policy.as_mut(), &cfg.stack, &cfg.vsn)
    };
    let logs: Vec<EpisodeLog> = if cfg.parallel <= 1 {
        specs.iter().map(run_one).collect::<Result<_, _>>()?
    } else {
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<EpisodeLog, EvalError>>>> =
            Mutex::new((0..specs.len()).map(|_| None).collect());
        std::thread::scope(|s| {
            for _ in 0..cfg.parallel.min(specs.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(spec) = specs.get(i) else { break };
                    let r = run_one(spec);
                    slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(r);
                });
            }
        });
        slots
            .into_inner()
            .unwrap_or_else(|e| e.into_inner())
            .into_iter()
            .map(|r| r.expect("every slot filled"))
            .collect::<Result<_, _>>()?
    };
    let report = success_rate(&logs, world)?;
    Ok((report, logs))
}

/// Counts per action kind over every executed action.
pub fn action_histogram(logs: &[EpisodeLog]) -> BTreeMap<String, BTreeMap<ActionKind, usize>> {
    let mut h: BTreeMap<String, BTreeMap<ActionKind, usize>> = BTreeMap::new();
    for l in logs {
        let row = h.entry(l.policy.clone()).or_default();
        for k in ActionKind::ALL {
            row.entry(k).or_insert(0);
        }
        for a in &l.actions {
            *row.entry(a.executed.kind).or_insert(0) += 1;
        }
    }
    h
}

#[derive(Debug, Serialize)]
struct ReportFile<'a> {
    world: &'a str,
    world_digest: &'a str,
    report: &'a SuccessReport,
    action_histogram: BTreeMap<String, BTreeMap<ActionKind, usize>>,
    episodes: Vec<EpisodeSummary<'a>>,
}

#[derive(Debug, Serialize)]
struct EpisodeSummary<'a> {
    id: &'a str,
    target: Category,
    start_index: usize,
    status: EpisodeStatus,
    success: bool,
    actions: usize,
    final_distance_to_target: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReportOptions {
    /// Write every stored observation as a frame file.
    pub store_frames: bool,
}

/// Write `report.json`, one log and one SVG per episode, and frames when
/// enabled. Returns the report path.
pub fn write_report(
    report: &SuccessReport,
    logs: &[EpisodeLog],
    world: &WorldMap,
    out_dir: &Path,
    opts: ReportOptions,
) -> Result<PathBuf, EvalError> {
    let episodes_dir = out_dir.join("episodes");
    let plots_dir = out_dir.join("plots");
    std::fs::create_dir_all(&episodes_dir).map_err(io_err(&episodes_dir))?;
    std::fs::create_dir_all(&plots_dir).map_err(io_err(&plots_dir))?;
    for log in logs {
        let p = episodes_dir.join(format!("{}.json", log.id));
        std::fs::write(&p, serde_json::to_string_pretty(log)? + "\n").map_err(io_err(&p))?;
        let p = plots_dir.join(format!("{}.svg", log.id));
        std::fs::write(&p, trajectory_svg(log, world)).map_err(io_err(&p))?;
        if opts.store_frames {
            for (obs, r) in log.observations.iter().zip(&log.observation_refs) {
                let p = out_dir.join(r);
                if let Some(dir) = p.parent() {
                    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
                }
                std::fs::write(&p, serde_json::to_string(obs)?).map_err(io_err(&p))?;
            }
        }
    }
    let file = ReportFile {
        world: &world.name,
        world_digest: world.digest(),
        report,
        action_histogram: action_histogram(logs),
        episodes: logs
            .iter()
            .map(|l| EpisodeSummary {
                id: &l.id,
                target: l.target,
                start_index: l.start_index,
                status: l.status,
                success: success(l, world),
                actions: l.action_count(),
                final_distance_to_target: l.final_distance_to_target,
            })
            .collect(),
    };
    let p = out_dir.join("report.json");
    std::fs::write(&p, serde_json::to_string_pretty(&file)? + "\n").map_err(io_err(&p))?;
    Ok(p)
}

pub fn load_log(path: &Path) -> Result<EpisodeLog, EvalError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

/// Plot of the floor plan, objects, the target's success radius and the path.
pub fn trajectory_svg(log: &EpisodeLog, world: &WorldMap) -> String {
    let g = &world.grid;
    let (w, h) = g.extent();
    let scale = 60.0;
    let y = |v: f64| (h - v) * scale;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.0} {:.0}">"#,
        w * scale,
        h * scale,
        w * scale,
        h * scale
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let res = g.resolution();
    for row in 0..g.height() as i64 {
        let mut col = 0i64;
        while col < g.width() as i64 {
            if !g.is_occupied(col, row) {
                col += 1;
                continue;
            }
            let c0 = col;
            while col < g.width() as i64 && g.is_occupied(col, row) {
                col += 1;
            }
            let _ = writeln!(
                s,
                r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#444444"/>"##,
                c0 as f64 * res * scale,
                y((row + 1) as f64 * res),
                (col - c0) as f64 * res * scale,
                res * scale
            );
        }
    }
    for o in &world.objects {
        let is_target = o.category == log.target;
        let fill = if is_target { "#d9534f" } else { "#9ab" };
        if is_target {
            let _ = writeln!(
                s,
                r##"<circle cx="{:.1}" cy="{:.1}" r="{:.1}" fill="none" stroke="#d9534f" stroke-dasharray="6,4"/>"##,
                o.x * scale,
                y(o.y),
                SUCCESS_RADIUS * scale
            );
        }
        let _ = writeln!(
            s,
            r##"<circle cx="{:.1}" cy="{:.1}" r="{:.1}" fill="{fill}"><title>{}</title></circle>"##,
            o.x * scale,
            y(o.y),
            o.radius * scale,
            o.category
        );
    }
    let mut pts = vec![log.start_pose];
    pts.extend(log.trajectory.iter().copied());
    let line: Vec<String> = pts.iter().map(|p| format!("{:.1},{:.1}", p.x * scale, y(p.y))).collect();
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#0275d8" stroke-width="2"/>"##,
        line.join(" ")
    );
    let _ = writeln!(
        s,
        r##"<circle cx="{:.1}" cy="{:.1}" r="6" fill="#5cb85c"><title>start</title></circle>"##,
        log.start_pose.x * scale,
        y(log.start_pose.y)
    );
    let _ = writeln!(
        s,
        r##"<circle cx="{:.1}" cy="{:.1}" r="6" fill="#000000"><title>end ({:?})</title></circle>"##,
        log.final_pose.x * scale,
        y(log.final_pose.y),
        log.status
    );
    s.push_str("</svg>\n");
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayOutcome {
    pub final_pose: Pose2D,
    pub logged_final_pose: Pose2D,
    pub position_error: f64,
    pub heading_error: f64,
    pub position_bound: f64,
    pub heading_bound: f64,
    pub trajectory: Vec<Pose2D>,
}

impl ReplayOutcome {
    pub fn within_bound(&self) -> bool {
        self.position_error <= self.position_bound && self.heading_error <= self.heading_bound
    }
}

/// Re-execute the logged actions open-loop on a fresh stack with the logged
/// noise model. The bound allows one controller tolerance per action.
pub fn replay(log: &EpisodeLog, world: &Arc<WorldMap>, stack_cfg: &StackConfig) -> Result<ReplayOutcome, EvalError> {
    if log.world_digest != world.digest() {
        return Err(EvalError::WorldMismatch {
            logged: log.world_digest.clone(),
            given: world.digest().to_string(),
        });
    }
    let mut cfg = stack_cfg.clone();
    cfg.noise = log.noise.clone();
    let stack = Stack::launch(Arc::clone(world), log.start_pose, &cfg)?;
    let mut trajectory = Vec::with_capacity(log.actions.len());
    for a in &log.actions {
        stack.controller().execute(a.executed);
        trajectory.push(stack.truth_pose());
    }
    let final_pose = stack.truth_pose();
    let n = log.actions.len() as f64;
    let position_error = final_pose.position().distance(&log.final_pose.position());
    let heading_error = signed_deg(final_pose.heading - log.final_pose.heading).abs();
    Ok(ReplayOutcome {
        final_pose,
        logged_final_pose: log.final_pose,
        position_error,
        heading_error,
        position_bound: cfg.motion.linear_tolerance * n + 1e-9,
        heading_bound: cfg.motion.angular_tolerance * n + 1e-9,
        trajectory,
    })
}

/// Points of a trajectory for plotting elsewhere.
pub fn trajectory_points(log: &EpisodeLog) -> Vec<Point> {
    std::iter::once(log.start_pose.position())
        .chain(log.trajectory.iter().map(|p| p.position()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_and_aggregation() {
        assert_eq!(round2(100.0 / 15.0), 6.67);
        let outcomes: Vec<_> = (0..15).map(|k| (Category::Chair, k < 6, 30)).collect();
        let (cats, overall) = aggregate(&outcomes).unwrap();
        assert_eq!(cats[0].sr, 40.0);
        assert_eq!(cats[0].average_actions, 30.0);
        assert_eq!(overall.sr, 40.0);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn stability_units() {
        assert_eq!(stability_stats(&[]), Stability::default());
    }
}
