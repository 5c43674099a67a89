//! Modular policy: 12-view panorama at each node, view scoring, a 1.5 m
//! short-term goal in the chosen direction and fast-marching legs to reach it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Decision, EpisodeContext, Policy, PolicyError};
use crate::camera_api::{DepthScan, SemanticLabel, SemanticScan};
use crate::config::{ConfigError, FlatConfig};
use crate::discrete_move::{DiscreteAction, MoveResult};
use crate::geometry::{Point, Pose2D};
use crate::planner::{extract_path_near, fast_marching_with, path_to_actions_checked, MarchOptions, OccupancyGrid};
use crate::sim_world::{mix_seed, Category};
use crate::vsn_core::{Observation, VsnError, VsnSession};

pub const PANORAMA_VIEWS: usize = 12;
const VIEW_STEP_DEG: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub category: Category,
    /// Nearest surface hit on the target, meters.
    pub distance: f64,
    /// Estimated distance to the object's centre, meters.
    pub centroid_distance: f64,
    /// Bearing of the detection relative to the view heading, degrees.
    pub bearing: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewScore {
    pub view_index: usize,
    pub value: f64,
    pub detection: Option<Detection>,
}

/// Stand-in for a learned value function plus detector.
pub trait ViewScorer: Send {
    /// Must be deterministic in its arguments; `seed` drives any simulated
    /// detector noise for this view.
    fn score(&self, view_index: usize, semantic: &SemanticScan, depth: &DepthScan, target: Category, seed: u64)
        -> ViewScore;
}

/// Centre-distance estimate for a disc seen as a contiguous run of rays: a
/// disc of radius `R` at range `D` subtends a half-angle `θ` with
/// `sin θ = R / D`, and the nearest surface lies at `h = D − R`, so
/// `D = h / (1 − sin θ)`. Runs touching the image border are truncated and
/// fall back to `h + 0.5`.
pub fn detect_target(semantic: &SemanticScan, target: Category) -> Option<Detection> {
    let n = semantic.labels.len();
    if n == 0 {
        return None;
    }
    let spacing = semantic.fov / n as f64;
    let mut best: Option<Detection> = None;
    let mut i = 0;
    while i < n {
        if semantic.labels[i] != SemanticLabel::Object(target) {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && semantic.labels[i] == SemanticLabel::Object(target) {
            i += 1;
        }
        let end = i; // exclusive
        let h = semantic.hit_ranges[start..end].iter().copied().fold(f64::INFINITY, f64::min);
        let clipped = start == 0 || end == n;
        let half = ((end - start) as f64 * spacing / 2.0).min(80.0).to_radians();
        let centroid_distance = if clipped { h + 0.5 } else { h / (1.0 - half.sin()) };
        let bearing = 0.5 * (semantic.bearing(start) + semantic.bearing(end - 1));
        let d = Detection {
            category: target,
            distance: h,
            centroid_distance,
            bearing,
            confidence: 1.0,
        };
        if best.is_none_or(|b| d.centroid_distance < b.centroid_distance) {
            best = Some(d);
        }
    }
    best
}

/// Heuristic scorer: `10 / (1 + d)` for a visible target at surface distance
/// `d`, otherwise the mean nonzero depth. `false_negative` drops a true
/// detection with that probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeuristicScorer {
    pub false_negative: f64,
}

impl HeuristicScorer {
    pub fn new(false_negative: f64) -> Self {
        Self {
            false_negative: false_negative.clamp(0.0, 1.0),
        }
    }
}

impl ViewScorer for HeuristicScorer {
    fn score(&self, view_index: usize, semantic: &SemanticScan, depth: &DepthScan, target: Category, seed: u64)
        -> ViewScore {
        let mut detection = detect_target(semantic, target);
        if detection.is_some() && self.false_negative > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            if rng.random::<f64>() < self.false_negative {
                detection = None;
            }
        }
        let value = match &detection {
            Some(d) => 10.0 / (1.0 + d.distance),
            None => {
                let valid: Vec<f64> = depth.ranges.iter().copied().filter(|r| *r > 0.0).collect();
                if valid.is_empty() {
                    0.0
                } else {
                    valid.iter().sum::<f64>() / valid.len() as f64
                }
            }
        };
        ViewScore {
            view_index,
            value,
            detection,
        }
    }
}

/// Twelve views taken 30° apart, turning left, from one position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanoramaNode {
    pub node_id: usize,
    pub pose: Pose2D,
    pub views: Vec<(SemanticScan, DepthScan)>,
}

/// Capture a panorama through the navigation session: observe, turn left
/// 30°, twelve times. Returns the node and the turn results.
pub fn capture_panorama(
    session: &mut VsnSession,
    node_id: usize,
    first_step: usize,
) -> Result<(PanoramaNode, Vec<MoveResult>), VsnError> {
    let mut views = Vec::with_capacity(PANORAMA_VIEWS);
    let mut results = Vec::with_capacity(PANORAMA_VIEWS);
    let mut pose = None;
    let mut last = None;
    for k in 0..PANORAMA_VIEWS {
        let obs = session.observe(first_step + k, last)?;
        pose.get_or_insert(obs.pose());
        views.push((obs.semantic, obs.depth));
        let turn = DiscreteAction::left(VIEW_STEP_DEG);
        let r = session.execute(turn)?;
        if !r.success {
            return Err(VsnError::MoveFailed(format!("panorama turn {k}: {:?}", r.failure)));
        }
        results.push(r);
        last = Some(turn);
    }
    Ok((
        PanoramaNode {
            node_id,
            pose: pose.expect("twelve views"),
            views,
        },
        results,
    ))
}

pub fn score_views(node: &PanoramaNode, target: Category, scorer: &dyn ViewScorer, seed: u64) -> Vec<ViewScore> {
    node.views
        .iter()
        .enumerate()
        .map(|(k, (s, d))| scorer.score(k, s, d, target, mix_seed(seed, k as u64)))
        .collect()
}

/// Index of the highest value; ties go to the lowest index.
pub fn select_direction(scores: &[ViewScore]) -> usize {
    let mut best = 0;
    for (k, s) in scores.iter().enumerate() {
        if s.value > scores[best].value {
            best = k;
        }
    }
    best
}

/// Point `offset` meters from the pose along view `k`'s heading.
pub fn project_short_term_goal(pose: &Pose2D, k: usize, offset: f64) -> Point {
    pose.project(k as f64 * VIEW_STEP_DEG, offset)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VlvConfig {
    pub goal_offset: f64,
    /// STOP once a detection's estimated centre distance drops below this.
    pub stop_distance: f64,
    pub map_resolution: f64,
    pub map_size: f64,
    pub inflation: f64,
    /// A leg ends within this distance of its short-term goal.
    pub arrive_tolerance: f64,
    /// A leg ends after this many actions even if the goal is not reached.
    pub leg_limit: usize,
    /// Exploration goals this close to an earlier node are avoided.
    pub visited_radius: f64,
    /// Exploration goals clipped shorter than this are discarded.
    pub min_leg: f64,
    /// Distance kept from an estimated target centre when seeking it.
    pub seek_standoff: f64,
    /// Head for a target seen during a leg without waiting for the next node.
    pub seek_in_transit: bool,
    pub false_negative: f64,
}

impl VlvConfig {
    /// Overwrite the fields present in the `vlv` section.
    pub fn apply(&mut self, cfg: &FlatConfig) -> Result<(), ConfigError> {
        const S: &str = "vlv";
        for (dst, key) in [
            (&mut self.goal_offset, "goal_offset"),
            (&mut self.stop_distance, "stop_distance"),
            (&mut self.map_resolution, "map_resolution"),
            (&mut self.map_size, "map_size"),
            (&mut self.inflation, "inflation"),
            (&mut self.arrive_tolerance, "arrive_tolerance"),
            (&mut self.visited_radius, "visited_radius"),
            (&mut self.min_leg, "min_leg"),
            (&mut self.seek_standoff, "seek_standoff"),
        ] {
            if let Some(v) = cfg.parsed::<f64>(S, key)? {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(cfg.bad_value(S, key, "must be non-negative"));
                }
                *dst = v;
            }
        }
        if self.map_resolution <= 0.0 {
            return Err(cfg.bad_value(S, "map_resolution", "must be positive"));
        }
        if let Some(v) = cfg.parsed::<usize>(S, "leg_limit")? {
            self.leg_limit = v.max(1);
        }
        if let Some(v) = cfg.parsed::<bool>(S, "seek_in_transit")? {
            self.seek_in_transit = v;
        }
        if let Some(v) = cfg.parsed::<f64>(S, "false_negative")? {
            if !(0.0..=1.0).contains(&v) {
                return Err(cfg.bad_value(S, "false_negative", "must lie in [0, 1]"));
            }
            self.false_negative = v;
        }
        Ok(())
    }
}

impl Default for VlvConfig {
    fn default() -> Self {
        Self {
            goal_offset: 1.5,
            stop_distance: 0.9,
            map_resolution: 0.05,
            map_size: 20.0,
            inflation: 0.25,
            arrive_tolerance: 0.25,
            leg_limit: 12,
            visited_radius: 1.0,
            min_leg: 0.75,
            seek_standoff: 0.6,
            seek_in_transit: true,
            false_negative: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
struct View {
    semantic: SemanticScan,
    depth: DepthScan,
    step: usize,
}

#[derive(Debug, Clone)]
enum Mode {
    Panorama { pose: Pose2D, views: Vec<View> },
    Transit { goal: Point, actions: usize, seeking: bool },
}

pub struct VlvPolicy {
    cfg: VlvConfig,
    scorer: Box<dyn ViewScorer>,
    target: Option<Category>,
    seed: u64,
    grid: OccupancyGrid,
    nodes: Vec<Point>,
    mode: Mode,
    last_scores: Vec<ViewScore>,
}

impl VlvPolicy {
    pub fn new(cfg: VlvConfig, scorer: Box<dyn ViewScorer>) -> Self {
        let grid = OccupancyGrid::centered(Point::new(0.0, 0.0), cfg.map_size, cfg.map_resolution)
            .unwrap_or_else(|_| OccupancyGrid::centered(Point::new(0.0, 0.0), 20.0, 0.05).expect("default grid"));
        Self {
            cfg,
            scorer,
            target: None,
            seed: 0,
            grid,
            nodes: Vec::new(),
            mode: Mode::Panorama {
                pose: Pose2D::default(),
                views: Vec::new(),
            },
            last_scores: Vec::new(),
        }
    }

    pub fn config(&self) -> &VlvConfig {
        &self.cfg
    }

    /// Occupancy map built so far, in the episode frame.
    pub fn map(&self) -> &OccupancyGrid {
        &self.grid
    }

    /// Positions where panoramas were scored.
    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn last_scores(&self) -> &[ViewScore] {
        &self.last_scores
    }

    fn view_seed(&self, step: usize) -> u64 {
        mix_seed(self.seed, step as u64)
    }

    fn begin_node(&mut self, obs: &Observation) -> Decision {
        self.mode = Mode::Panorama {
            pose: obs.pose(),
            views: vec![View {
                semantic: obs.semantic.clone(),
                depth: obs.depth.clone(),
                step: obs.step,
            }],
        };
        Decision::new(DiscreteAction::left(VIEW_STEP_DEG), "panorama")
    }

    /// Walk from `from` toward `to` and stop before the first blocked cell.
    fn clip(&self, blocked: &[bool], from: Point, to: Point) -> Point {
        let len = from.distance(&to);
        let step = self.cfg.map_resolution / 2.0;
        let n = (len / step).ceil() as usize;
        let mut last = from;
        for k in 1..=n {
            let t = (k as f64 * step).min(len) / len.max(1e-12);
            let p = Point::new(from.x + t * (to.x - from.x), from.y + t * (to.y - from.y));
            match self.grid.index_of(p) {
                Some(i) if !blocked[i] => last = p,
                _ => break,
            }
        }
        last
    }

    /// First action of a fast-marching leg, or `None` once within tolerance.
    fn leg_action(&self, pose: &Pose2D, goal: Point) -> Result<Option<DiscreteAction>, PolicyError> {
        let opts = MarchOptions {
            stop_at: Some(pose.position()),
        };
        let field = fast_marching_with(&self.grid, &[goal], self.cfg.inflation, opts)?;
        let path = extract_path_near(&field, pose.position(), 0.3)?;
        let actions = path_to_actions_checked(
            &path,
            *pose,
            0.25,
            VIEW_STEP_DEG,
            self.cfg.arrive_tolerance,
            &|p| field.is_free(p),
        )?;
        Ok(actions.first().copied())
    }

    fn seek_goal(&self, blocked: &[bool], view_pose: &Pose2D, robot: Point, d: &Detection) -> Point {
        let reach = (d.centroid_distance - self.cfg.seek_standoff).max(0.0);
        self.clip(blocked, robot, view_pose.project(d.bearing, reach))
    }

    /// Score the finished panorama and start a leg.
    fn decide_at_node(&mut self, pose: Pose2D, node_pose: Pose2D, views: Vec<View>, target: Category) -> Decision {
        let node = PanoramaNode {
            node_id: self.nodes.len(),
            pose: node_pose,
            views: views.iter().map(|v| (v.semantic.clone(), v.depth.clone())).collect(),
        };
        let scores: Vec<ViewScore> = views
            .iter()
            .enumerate()
            .map(|(k, v)| self.scorer.score(k, &v.semantic, &v.depth, target, self.view_seed(v.step)))
            .collect();
        let previous: Vec<Point> = self.nodes.clone();
        self.nodes.push(pose.position());
        let blocked = self.grid.inflate(self.cfg.inflation);
        let here = pose.position();

        // seek the nearest detection first
        let mut seen: Vec<(usize, Detection)> =
            scores.iter().filter_map(|s| s.detection.map(|d| (s.view_index, d))).collect();
        seen.sort_by(|a, b| a.1.centroid_distance.total_cmp(&b.1.centroid_distance));
        for (k, d) in &seen {
            let view_pose = Pose2D::new(node.pose.x, node.pose.y, node.pose.heading + *k as f64 * VIEW_STEP_DEG);
            let goal = self.seek_goal(&blocked, &view_pose, here, d);
            if let Some(dec) = self.start_leg(&pose, goal, true) {
                self.last_scores = scores;
                return dec;
            }
        }

        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].value.total_cmp(&scores[a].value).then(a.cmp(&b)));
        debug_assert!(order.first().is_none_or(|&k| k == select_direction(&scores)));
        for use_memory in [true, false] {
            for &k in &order {
                let raw = project_short_term_goal(&node.pose, k, self.cfg.goal_offset);
                let goal = self.clip(&blocked, here, raw);
                if here.distance(&goal) < self.cfg.min_leg {
                    continue;
                }
                if use_memory && previous.iter().any(|p| p.distance(&goal) < self.cfg.visited_radius) {
                    continue;
                }
                if let Some(dec) = self.start_leg(&pose, goal, false) {
                    self.last_scores = scores;
                    return dec;
                }
            }
        }
        self.last_scores = scores;
        Decision {
            action: DiscreteAction::stop().into(),
            phase: Some("gave_up"),
            gave_up: true,
        }
    }

    fn start_leg(&mut self, pose: &Pose2D, goal: Point, seeking: bool) -> Option<Decision> {
        match self.leg_action(pose, goal) {
            Ok(Some(a)) => {
                self.mode = Mode::Transit {
                    goal,
                    actions: 1,
                    seeking,
                };
                Some(Decision::new(a, if seeking { "seek" } else { "transit" }))
            }
            _ => None,
        }
    }
}

impl Policy for VlvPolicy {
    fn name(&self) -> &str {
        "vlv"
    }

    fn reset(&mut self, ctx: &EpisodeContext) -> Result<(), PolicyError> {
        *self = VlvPolicy::new(self.cfg, std::mem::replace(&mut self.scorer, Box::new(HeuristicScorer::new(0.0))));
        self.target = Some(ctx.target);
        self.seed = ctx.seed;
        Ok(())
    }

    fn act(&mut self, obs: &Observation) -> Result<Decision, PolicyError> {
        let target = self.target.ok_or(PolicyError::NotReset)?;
        let pose = obs.pose();
        self.grid.integrate(&obs.depth, &pose);

        let live = self
            .scorer
            .score(0, &obs.semantic, &obs.depth, target, self.view_seed(obs.step))
            .detection;
        if let Some(d) = live {
            if d.centroid_distance < self.cfg.stop_distance {
                return Ok(Decision::new(DiscreteAction::stop(), "stop"));
            }
        }

        match std::mem::replace(
            &mut self.mode,
            Mode::Panorama {
                pose,
                views: Vec::new(),
            },
        ) {
            Mode::Panorama { pose: node_pose, mut views } => {
                if views.is_empty() {
                    return Ok(self.begin_node(obs));
                }
                if views.len() < PANORAMA_VIEWS {
                    views.push(View {
                        semantic: obs.semantic.clone(),
                        depth: obs.depth.clone(),
                        step: obs.step,
                    });
                    self.mode = Mode::Panorama { pose: node_pose, views };
                    return Ok(Decision::new(DiscreteAction::left(VIEW_STEP_DEG), "panorama"));
                }
                Ok(self.decide_at_node(pose, node_pose, views, target))
            }
            Mode::Transit {
                mut goal,
                actions,
                mut seeking,
            } => {
                if self.cfg.seek_in_transit && !seeking {
                    if let Some(d) = live {
                        let blocked = self.grid.inflate(self.cfg.inflation);
                        goal = self.seek_goal(&blocked, &pose, pose.position(), &d);
                        seeking = true;
                    }
                }
                let arrived = pose.position().distance(&goal) < self.cfg.arrive_tolerance;
                if arrived || actions >= self.cfg.leg_limit {
                    return Ok(self.begin_node(obs));
                }
                match self.leg_action(&pose, goal) {
                    Ok(Some(a)) => {
                        self.mode = Mode::Transit {
                            goal,
                            actions: actions + 1,
                            seeking,
                        };
                        Ok(Decision::new(a, if seeking { "seek" } else { "transit" }))
                    }
                    _ => Ok(self.begin_node(obs)),
                }
            }
        }
    }
}
