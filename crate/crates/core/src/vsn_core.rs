//! Navigation loop node: depth denoising, episode-relative odometry, the
//! capture → infer → move → confirm cycle and the frontal obstacle guard.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::{BusError, ServiceClient};
use crate::camera_api::{DepthScan, SemanticScan};
use crate::config::{ConfigError, FlatConfig};
use crate::discrete_move::{ActionKind, DiscreteAction, MoveFailure, MoveResult};
use crate::geometry::{normalize_deg, Point, Pose2D};
use crate::messages::{Message, NavBus, NavSubscription, CAMERA_COLOR, CAMERA_DEPTH, DISCRETE_MOVE, ODOM};
use crate::policies::{remap_action, Policy};
use crate::robot_api::OdomSample;
use crate::sim_world::Category;
use crate::stack::Clock;

#[derive(Debug, Error)]
pub enum VsnError {
    #[error("median filter needs at least one frame")]
    NoFrames,
    #[error("frame {index} has {got} rays and fov {fov}, expected {expected} rays and fov {expected_fov}")]
    ShapeMismatch {
        index: usize,
        got: usize,
        fov: f64,
        expected: usize,
        expected_fov: f64,
    },
    #[error("camera fault: {0}")]
    Capture(String),
    #[error("no {0} data within one second of simulation time")]
    Silent(&'static str),
    #[error("move failed: {0}")]
    MoveFailed(String),
    #[error(transparent)]
    Bus(#[from] BusError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VsnConfig {
    pub target: Option<Category>,
    pub median_window: usize,
    pub max_steps: usize,
    pub obstacle_threshold: f64,
    pub obstacle_cone: f64,
    /// Wall-clock limit on one `/discrete_move` call.
    pub call_timeout_s: f64,
    /// Keep every observation in the episode record.
    pub keep_observations: bool,
}

impl Default for VsnConfig {
    fn default() -> Self {
        Self {
            target: None,
            median_window: 5,
            max_steps: 150,
            obstacle_threshold: 0.3,
            obstacle_cone: 30.0,
            call_timeout_s: 120.0,
            keep_observations: false,
        }
    }
}

impl VsnConfig {
    /// Read the `vsn` section. `target_override` wins over the file.
    pub fn from_config(cfg: &FlatConfig, target_override: Option<Category>) -> Result<Self, ConfigError> {
        const S: &str = "vsn";
        let mut v = VsnConfig::default();
        if let Some(t) = cfg.parsed::<Category>(S, "target")? {
            v.target = Some(t);
        }
        if let Some(t) = target_override {
            v.target = Some(t);
        }
        if let Some(n) = cfg.parsed::<usize>(S, "median_window")? {
            if n == 0 || n % 2 == 0 {
                return Err(cfg.bad_value(S, "median_window", "window must be odd and positive"));
            }
            v.median_window = n;
        }
        if let Some(n) = cfg.parsed::<usize>(S, "max_steps")? {
            if n == 0 {
                return Err(cfg.bad_value(S, "max_steps", "must be at least 1"));
            }
            v.max_steps = n;
        }
        if let Some(x) = cfg.parsed::<f64>(S, "obstacle_threshold_m")? {
            v.obstacle_threshold = x;
        }
        if let Some(x) = cfg.parsed::<f64>(S, "obstacle_cone_deg")? {
            v.obstacle_cone = x;
        }
        if let Some(x) = cfg.parsed::<bool>(S, "store_frames")? {
            v.keep_observations = x;
        }
        Ok(v)
    }
}

pub fn load_vsn_config(path: impl AsRef<Path>, target_override: Option<Category>) -> Result<VsnConfig, ConfigError> {
    VsnConfig::from_config(&FlatConfig::load(path)?, target_override)
}

/// What a policy sees at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub step: usize,
    pub semantic: SemanticScan,
    /// Median of the step's depth frames.
    pub depth: DepthScan,
    /// Position relative to the episode start, in the start frame.
    pub gps: Point,
    /// Heading relative to the episode start, degrees in `[0, 360)`.
    pub compass: f64,
    pub last_action: Option<DiscreteAction>,
}

impl Observation {
    /// Pose in the episode frame built from gps and compass.
    pub fn pose(&self) -> Pose2D {
        Pose2D::new(self.gps.x, self.gps.y, self.compass)
    }
}

/// Per-ray temporal median. Zero readings are ignored unless every frame
/// reads zero; with an even count of readings the lower median is used.
pub fn median_filter(frames: &[DepthScan]) -> Result<DepthScan, VsnError> {
    let first = frames.first().ok_or(VsnError::NoFrames)?;
    let n = first.ranges.len();
    for (index, f) in frames.iter().enumerate() {
        if f.ranges.len() != n || f.fov != first.fov {
            return Err(VsnError::ShapeMismatch {
                index,
                got: f.ranges.len(),
                fov: f.fov,
                expected: n,
                expected_fov: first.fov,
            });
        }
    }
    let newest = frames
        .iter()
        .max_by(|a, b| a.stamp.total_cmp(&b.stamp))
        .expect("non-empty");
    let mut buf = Vec::with_capacity(frames.len());
    let ranges = (0..n)
        .map(|r| {
            buf.clear();
            buf.extend(frames.iter().map(|f| f.ranges[r]).filter(|v| *v != 0.0));
            if buf.is_empty() {
                return 0.0;
            }
            buf.sort_by(f64::total_cmp);
            buf[(buf.len() - 1) / 2]
        })
        .collect();
    Ok(DepthScan {
        ranges,
        fov: first.fov,
        max_range: first.max_range,
        stamp: newest.stamp,
        pose_hint: newest.pose_hint,
    })
}

/// Position and heading of `current` in the frame of `start`.
pub fn relative_odom(current: &OdomSample, start: &OdomSample) -> (Point, f64) {
    let rel = start.pose().relative(&current.pose());
    (Point::new(rel.x, rel.y), normalize_deg(current.heading - start.heading))
}

/// Closest nonzero reading within `±cone/2` of the scan centre, if any.
pub fn frontal_min(depth: &DepthScan, cone: f64) -> Option<f64> {
    (0..depth.ranges.len())
        .filter(|&i| depth.bearing(i).abs() <= cone / 2.0 + 1e-9)
        .map(|i| depth.ranges[i])
        .filter(|r| *r > 0.0)
        .min_by(f64::total_cmp)
}

/// True iff something nonzero in the frontal cone is closer than `threshold`.
pub fn obstacle_guard(depth: &DepthScan, threshold: f64, cone: f64) -> bool {
    frontal_min(depth, cone).is_some_and(|m| m < threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Running,
    SuccessClaimed,
    LimitReached,
    MoveFailed,
    Collision,
}

/// One issued action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub intended: DiscreteAction,
    pub executed: DiscreteAction,
    pub result: MoveResult,
    pub guard_fired: bool,
    /// Nearest frontal depth the guard looked at.
    pub frontal_depth: Option<f64>,
    pub phase: Option<String>,
    pub gps: Point,
    pub compass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRun {
    pub steps: Vec<StepRecord>,
    pub status: EpisodeStatus,
    pub note: Option<String>,
    pub observations: Vec<Observation>,
}

/// The navigation loop's bus endpoints.
pub struct VsnSession {
    cfg: VsnConfig,
    clock: Arc<dyn Clock>,
    odom_sub: NavSubscription,
    color_sub: NavSubscription,
    depth_sub: NavSubscription,
    mover: ServiceClient<Message>,
    start: Option<OdomSample>,
    latest_odom: Option<OdomSample>,
}

const FRAME_WAIT_S: f64 = 1.0;
const WAIT_STEP_S: f64 = 1.0 / 150.0;

impl VsnSession {
    pub fn new(bus: &NavBus, clock: Arc<dyn Clock>, cfg: VsnConfig) -> Result<Self, BusError> {
        let node = bus.node("vsn_core");
        let odom_sub = node.subscribe(ODOM, 64)?;
        let color_sub = node.subscribe(CAMERA_COLOR, 16)?;
        let depth_sub = node.subscribe(CAMERA_DEPTH, 16)?;
        // frames are only wanted while stationary at the start of a step
        color_sub.pause();
        depth_sub.pause();
        let mover = node.service_client(DISCRETE_MOVE)?;
        Ok(Self {
            cfg,
            clock,
            odom_sub,
            color_sub,
            depth_sub,
            mover,
            start: None,
            latest_odom: None,
        })
    }

    pub fn config(&self) -> &VsnConfig {
        &self.cfg
    }

    pub fn start_odom(&self) -> Option<OdomSample> {
        self.start
    }

    fn poll_odom(&mut self) {
        for env in self.odom_sub.drain() {
            if let Message::Odom(s) = env.payload {
                self.latest_odom = Some(s);
            }
        }
    }

    /// Gather `median_window` fresh depth frames and the semantic scan of the
    /// newest capture, then assemble the observation.
    pub fn observe(&mut self, step: usize, last_action: Option<DiscreteAction>) -> Result<Observation, VsnError> {
        let n = self.cfg.median_window.max(1);
        self.color_sub.drain();
        self.depth_sub.drain();
        self.color_sub.resume();
        self.depth_sub.resume();
        let deadline = self.clock.now() + FRAME_WAIT_S;
        let mut depths: Vec<DepthScan> = Vec::with_capacity(n);
        let mut semantic: Option<SemanticScan> = None;
        let outcome = loop {
            let mut fault = None;
            for env in self.depth_sub.drain() {
                match env.payload {
                    Message::Depth(d) => depths.push(d),
                    Message::CaptureFault(e) => fault = Some(e),
                    _ => {}
                }
            }
            for env in self.color_sub.drain() {
                match env.payload {
                    Message::Semantic(s) => semantic = Some(s),
                    Message::CaptureFault(e) => fault = Some(e),
                    _ => {}
                }
            }
            if let Some(e) = fault {
                break Err(VsnError::Capture(e));
            }
            if depths.len() >= n && semantic.as_ref().map(|s| s.stamp) == depths.last().map(|d| d.stamp) {
                break Ok(());
            }
            if self.clock.now() > deadline {
                break Err(VsnError::Silent("camera"));
            }
            self.clock.advance(WAIT_STEP_S);
        };
        self.color_sub.pause();
        self.depth_sub.pause();
        outcome?;
        let depths = &depths[depths.len() - n..];
        let depth = median_filter(depths)?;

        self.poll_odom();
        let deadline = self.clock.now() + FRAME_WAIT_S;
        while self.latest_odom.is_none() {
            if self.clock.now() > deadline {
                return Err(VsnError::Silent("odometry"));
            }
            self.clock.advance(WAIT_STEP_S);
            self.poll_odom();
        }
        let current = self.latest_odom.expect("odometry sample");
        let start = *self.start.get_or_insert(current);
        let (gps, compass) = relative_odom(&current, &start);
        Ok(Observation {
            step,
            semantic: semantic.expect("paired semantic scan"),
            depth,
            gps,
            compass,
            last_action,
        })
    }

    pub fn execute(&self, action: DiscreteAction) -> Result<MoveResult, BusError> {
        self.mover
            .call(action, Duration::from_secs_f64(self.cfg.call_timeout_s))
    }
}

fn failed_call(failure: MoveFailure) -> MoveResult {
    MoveResult {
        success: false,
        final_turn_error: 0.0,
        final_straight_error: 0.0,
        actions_elapsed_time: 0.0,
        collision: false,
        failure: Some(failure),
        achieved: 0.0,
        start_odom: None,
        final_odom: None,
    }
}

/// Run one episode: observe, ask the policy, guard forward moves, execute,
/// repeat until STOP, a failed move, or the action budget runs out.
pub fn run_episode(policy: &mut dyn Policy, session: &mut VsnSession) -> EpisodeRun {
    let max_steps = session.cfg.max_steps;
    let (threshold, cone) = (session.cfg.obstacle_threshold, session.cfg.obstacle_cone);
    let keep = session.cfg.keep_observations;
    let mut run = EpisodeRun {
        steps: Vec::new(),
        status: EpisodeStatus::Running,
        note: None,
        observations: Vec::new(),
    };
    let mut last_action = None;
    while run.status == EpisodeStatus::Running {
        let step = run.steps.len();
        if step >= max_steps {
            run.status = EpisodeStatus::LimitReached;
            break;
        }
        let obs = match session.observe(step, last_action) {
            Ok(o) => o,
            Err(e) => {
                run.status = EpisodeStatus::MoveFailed;
                run.note = Some(e.to_string());
                break;
            }
        };
        let decision = match policy.act(&obs) {
            Ok(d) => d,
            Err(e) => {
                run.status = EpisodeStatus::MoveFailed;
                run.note = Some(e.to_string());
                break;
            }
        };
        if decision.gave_up && run.note.is_none() {
            run.note = Some("policy gave up".into());
        }
        let intended = remap_action(decision.action);
        let frontal = frontal_min(&obs.depth, cone);
        let guard = intended.kind == ActionKind::MoveForward && frontal.is_some_and(|m| m < threshold);
        let executed = if guard {
            DiscreteAction::left(30.0)
        } else {
            intended
        };
        let result = match session.execute(executed) {
            Ok(r) => r,
            Err(e) => {
                run.note = Some(e.to_string());
                failed_call(match e {
                    BusError::Timeout { .. } => MoveFailure::Timeout,
                    other => MoveFailure::Invalid(other.to_string()),
                })
            }
        };
        if executed.kind == ActionKind::Stop && result.success {
            run.status = EpisodeStatus::SuccessClaimed;
        } else if !result.success {
            run.status = if result.collision {
                EpisodeStatus::Collision
            } else {
                EpisodeStatus::MoveFailed
            };
        }
        run.steps.push(StepRecord {
            intended,
            executed,
            result,
            guard_fired: guard,
            frontal_depth: frontal,
            phase: decision.phase.map(str::to_string),
            gps: obs.gps,
            compass: obs.compass,
        });
        last_action = Some(executed);
        if keep {
            run.observations.push(obs);
        }
    }
    run
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scan(ranges: Vec<f64>) -> DepthScan {
        DepthScan {
            ranges,
            fov: 90.0,
            max_range: 5.0,
            stamp: 0.0,
            pose_hint: Pose2D::default(),
        }
    }

    #[test]
    fn median_examples() {
        let f = |v: f64| scan(vec![v]);
        assert_eq!(median_filter(&[f(2.0), f(2.0), f(9.9)]).unwrap().ranges, vec![2.0]);
        assert_eq!(median_filter(&[f(1.0), f(2.0), f(3.0), f(4.0), f(5.0)]).unwrap().ranges, vec![3.0]);
        assert_eq!(median_filter(&[f(1.0), f(2.0), f(3.0), f(4.0)]).unwrap().ranges, vec![2.0]);
        assert_eq!(median_filter(&[f(0.0), f(0.0), f(2.5)]).unwrap().ranges, vec![2.5]);
        assert_eq!(median_filter(&[f(0.0), f(0.0)]).unwrap().ranges, vec![0.0]);
        assert!(median_filter(&[]).is_err());
        assert!(median_filter(&[f(1.0), scan(vec![1.0, 2.0])]).is_err());
    }

    #[test]
    fn median_stamp_is_newest() {
        let mut a = scan(vec![1.0]);
        let mut b = scan(vec![1.0]);
        a.stamp = 2.0;
        b.stamp = 1.0;
        assert_eq!(median_filter(&[a, b]).unwrap().stamp, 2.0);
    }

    fn odom(x: f64, y: f64, h: f64) -> OdomSample {
        OdomSample { x, y, heading: h, ..Default::default() }
    }

    #[test]
    fn relative_odom_examples() {
        let s = odom(0.3, -1.0, 45.0);
        assert_eq!(relative_odom(&s, &s), (Point::new(0.0, 0.0), 0.0));
        let (g, c) = relative_odom(&odom(1.0, 0.0, 90.0), &odom(0.0, 0.0, 0.0));
        assert_eq!((g, c), (Point::new(1.0, 0.0), 90.0));
        let (g, c) = relative_odom(&odom(2.0, 3.0, 90.0), &odom(2.0, 2.0, 90.0));
        assert!((g.x - 1.0).abs() < 1e-12 && g.y.abs() < 1e-12);
        assert_eq!(c, 0.0);
    }

    #[test]
    fn guard_examples() {
        let mut near = scan(vec![5.0; 180]);
        near.ranges[90] = 0.2;
        assert!(obstacle_guard(&near, 0.3, 30.0));
        assert!(!obstacle_guard(&scan(vec![0.5; 180]), 0.3, 30.0));
        let mut dropped = scan(vec![5.0; 180]);
        for i in 60..=120 {
            dropped.ranges[i] = 0.0;
        }
        assert!(!obstacle_guard(&dropped, 0.3, 30.0));
        // outside the cone does not count
        let mut side = scan(vec![5.0; 180]);
        side.ranges[0] = 0.1;
        assert!(!obstacle_guard(&side, 0.3, 30.0));
    }

    #[test]
    fn config_rules() {
        let c = VsnConfig::from_config(&FlatConfig::parse("").unwrap(), Some(Category::Chair)).unwrap();
        assert_eq!((c.median_window, c.max_steps, c.target), (5, 150, Some(Category::Chair)));
        let c = VsnConfig::from_config(&FlatConfig::parse("vsn.max_steps: 80").unwrap(), None).unwrap();
        assert_eq!(c.max_steps, 80);
        assert!(VsnConfig::from_config(&FlatConfig::parse("vsn.target: spaceship").unwrap(), None).is_err());
        assert!(VsnConfig::from_config(&FlatConfig::parse("vsn.median_window: 4").unwrap(), None).is_err());
    }
}
