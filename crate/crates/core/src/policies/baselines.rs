use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Decision, EpisodeContext, ExtendedAction, Policy, PolicyError};
use crate::discrete_move::{ActionKind, DiscreteAction};
use crate::geometry::{signed_deg, Point, Pose2D};
use crate::planner::{
    extract_path_near, fast_marching_with, path_to_actions_checked, DistanceField, MarchOptions, OccupancyGrid,
};
use crate::sim_world::{mix_seed, Category};
use crate::vsn_core::Observation;

pub const RANDOM_STOP_PROB: f64 = 0.02;

/// Uniform over forward / left / right with a small STOP probability. Each
/// action depends only on the episode seed and the step index.
#[derive(Debug, Default)]
pub struct RandomPolicy {
    seed: u64,
}

impl RandomPolicy {
    pub fn action_for(seed: u64, step: usize) -> DiscreteAction {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, step as u64));
        if rng.random::<f64>() < RANDOM_STOP_PROB {
            return DiscreteAction::stop();
        }
        let kind = [ActionKind::MoveForward, ActionKind::TurnLeft, ActionKind::TurnRight][rng.random_range(0..3)];
        DiscreteAction::standard(kind)
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn reset(&mut self, ctx: &EpisodeContext) -> Result<(), PolicyError> {
        self.seed = ctx.seed;
        Ok(())
    }

    fn act(&mut self, obs: &Observation) -> Result<Decision, PolicyError> {
        Ok(Decision::new(Self::action_for(self.seed, obs.step), "random"))
    }
}

/// The oracle stops once its believed position is this close to a target
/// centroid.
pub const ORACLE_STOP_DISTANCE: f64 = 0.9;
/// Goal cells are free cells within this distance of a target centroid.
const ORACLE_GOAL_RADIUS: f64 = 0.75;
/// Path-end tolerance when discretising; keeps the end of the approach
/// inside the stop radius.
const ORACLE_END_TOLERANCE: f64 = 0.125;
const ORACLE_MARGIN: f64 = 0.07;

/// Privileged baseline: plans on the true map to the nearest target instance.
/// It localises from the episode-relative odometry and the known start pose.
#[derive(Debug, Default)]
pub struct OraclePolicy {
    state: Option<OracleState>,
}

#[derive(Debug)]
struct OracleState {
    target: Category,
    start: Pose2D,
    centroids: Vec<Point>,
    field: DistanceField,
}

impl OraclePolicy {
    /// Believed world pose for an observation.
    fn world_pose(state: &OracleState, obs: &Observation) -> Pose2D {
        state.start.compose(&obs.pose())
    }
}

impl Policy for OraclePolicy {
    fn name(&self) -> &str {
        "oracle"
    }

    fn reset(&mut self, ctx: &EpisodeContext) -> Result<(), PolicyError> {
        let world = ctx.world.as_ref().ok_or(PolicyError::NeedsWorld("oracle"))?;
        let grid = OccupancyGrid::from_world(world);
        let centroids: Vec<Point> = world
            .objects
            .iter()
            .filter(|o| o.category == ctx.target)
            .map(|o| o.centroid())
            .collect();
        let mut goals = Vec::new();
        for row in 0..grid.height() as i64 {
            for col in 0..grid.width() as i64 {
                let c = grid.cell_center(col, row);
                if centroids.iter().any(|t| t.distance(&c) < ORACLE_GOAL_RADIUS) {
                    goals.push(c);
                }
            }
        }
        if goals.is_empty() {
            return Err(PolicyError::Unreachable(ctx.target));
        }
        let inflation = world.robot_radius + ORACLE_MARGIN;
        let field = fast_marching_with(&grid, &goals, inflation, MarchOptions::default())
            .map_err(|_| PolicyError::Unreachable(ctx.target))?;
        self.state = Some(OracleState {
            target: ctx.target,
            start: ctx.start_pose,
            centroids,
            field,
        });
        Ok(())
    }

    fn act(&mut self, obs: &Observation) -> Result<Decision, PolicyError> {
        let state = self.state.as_ref().ok_or(PolicyError::NotReset)?;
        let pose = Self::world_pose(state, obs);
        let here = pose.position();
        let nearest = state
            .centroids
            .iter()
            .copied()
            .min_by(|a, b| here.distance(a).total_cmp(&here.distance(b)))
            .ok_or(PolicyError::Unreachable(state.target))?;
        if here.distance(&nearest) < ORACLE_STOP_DISTANCE {
            return Ok(Decision::new(DiscreteAction::stop(), "stop"));
        }
        let path = extract_path_near(&state.field, here, 0.5).map_err(|_| PolicyError::Unreachable(state.target))?;
        let field = &state.field;
        let actions = path_to_actions_checked(&path, pose, 0.25, 30.0, ORACLE_END_TOLERANCE, &|p| field.is_free(p))?;
        let action = actions.first().copied().unwrap_or_else(|| {
            let bearing = signed_deg((nearest.y - here.y).atan2(nearest.x - here.x).to_degrees() - pose.heading);
            if bearing > 15.0 {
                DiscreteAction::left(30.0)
            } else if bearing < -15.0 {
                DiscreteAction::right(30.0)
            } else {
                DiscreteAction::forward(0.25)
            }
        });
        Ok(Decision::new(action, "oracle"))
    }
}

/// Replays a fixed token sequence, then STOPs. Stands in for an external
/// end-to-end model driven from outside the process.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    actions: Vec<ExtendedAction>,
}

impl ScriptedPolicy {
    pub fn new(actions: Vec<ExtendedAction>) -> Self {
        Self { actions }
    }

    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Result<Self, PolicyError> {
        let actions = tokens
            .iter()
            .map(|t| t.as_ref().parse::<ExtendedAction>())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(actions))
    }
}

impl Policy for ScriptedPolicy {
    fn name(&self) -> &str {
        "external"
    }

    fn reset(&mut self, _ctx: &EpisodeContext) -> Result<(), PolicyError> {
        Ok(())
    }

    fn act(&mut self, obs: &Observation) -> Result<Decision, PolicyError> {
        let action = self
            .actions
            .get(obs.step)
            .copied()
            .unwrap_or(ExtendedAction::Base(DiscreteAction::stop()));
        Ok(Decision::new(action, "external"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_is_a_pure_function_of_seed_and_step() {
        let a: Vec<_> = (0..50).map(|k| RandomPolicy::action_for(7, k)).collect();
        let b: Vec<_> = (0..50).map(|k| RandomPolicy::action_for(7, k)).collect();
        assert_eq!(a, b);
        let c: Vec<_> = (0..50).map(|k| RandomPolicy::action_for(8, k)).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn random_stop_frequency() {
        let n = 10_000;
        let stops = (0..n)
            .filter(|&k| RandomPolicy::action_for(11, k).kind == ActionKind::Stop)
            .count() as f64;
        let p = RANDOM_STOP_PROB;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((stops - n as f64 * p).abs() <= 3.0 * sigma, "{stops}");
    }
}
