//! Decision layer: the policy interface, the extended action set and its
//! remapping, plus the modular (`vlv`) and baseline policies.

mod baselines;
mod vlv;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discrete_move::{ActionKind, DiscreteAction, UnknownAction};
use crate::geometry::{Point, Pose2D};
use crate::planner::PlannerError;
use crate::sim_world::{Category, WorldMap};
use crate::vsn_core::Observation;

pub use baselines::{OraclePolicy, RandomPolicy, ScriptedPolicy, ORACLE_STOP_DISTANCE, RANDOM_STOP_PROB};
pub use vlv::{
    capture_panorama, detect_target, project_short_term_goal, score_views, select_direction, Detection,
    HeuristicScorer, PanoramaNode, ViewScore, ViewScorer, VlvConfig, VlvPolicy, PANORAMA_VIEWS,
};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    UnknownAction(#[from] UnknownAction),
    #[error("{0} policy needs ground-truth world access")]
    NeedsWorld(&'static str),
    #[error("target {0} is unreachable")]
    Unreachable(Category),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error("unknown policy {0:?}; expected vlv, random, oracle or external")]
    UnknownPolicy(String),
    #[error("external policy: {0}")]
    External(String),
    #[error("policy used before reset")]
    NotReset,
}

/// The model-side action set: the five base actions plus the two camera-tilt
/// actions of end-to-end models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtendedAction {
    Base(DiscreteAction),
    LookUp,
    LookDown,
}

impl ExtendedAction {
    pub fn base(kind: ActionKind) -> Self {
        ExtendedAction::Base(DiscreteAction::standard(kind))
    }
}

impl From<DiscreteAction> for ExtendedAction {
    fn from(a: DiscreteAction) -> Self {
        ExtendedAction::Base(a)
    }
}

impl fmt::Display for ExtendedAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedAction::Base(a) => a.kind.fmt(f),
            ExtendedAction::LookUp => f.write_str("LOOK_UP"),
            ExtendedAction::LookDown => f.write_str("LOOK_DOWN"),
        }
    }
}

/// Parses the seven model tokens; base tokens get standard magnitudes.
impl FromStr for ExtendedAction {
    type Err = UnknownAction;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "LOOK_UP" => Ok(ExtendedAction::LookUp),
            "LOOK_DOWN" => Ok(ExtendedAction::LookDown),
            _ => s.parse::<ActionKind>().map(ExtendedAction::base),
        }
    }
}

/// Map the extended action set onto the robot's discrete actions. The robot
/// has no tilting camera: looking up becomes a step back, looking down a step
/// forward.
pub fn remap_action(action: ExtendedAction) -> DiscreteAction {
    match action {
        ExtendedAction::Base(a) => a,
        ExtendedAction::LookUp => DiscreteAction::backward(0.25),
        ExtendedAction::LookDown => DiscreteAction::forward(0.25),
    }
}

/// Parse a model token and remap it in one go.
pub fn remap_token(token: &str) -> Result<DiscreteAction, UnknownAction> {
    token.parse().map(remap_action)
}

/// What a modular high-level policy hands to its low-level planner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyAction {
    Discrete(DiscreteAction),
    ShortTermGoal(Point),
}

/// Per-episode facts handed to a policy before the first step.
#[derive(Debug, Clone)]
pub struct EpisodeContext {
    pub target: Category,
    pub seed: u64,
    /// Ground-truth start pose; only privileged policies may use it.
    pub start_pose: Pose2D,
    /// Ground-truth map; only privileged policies may use it.
    pub world: Option<Arc<WorldMap>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action: ExtendedAction,
    /// Internal state label for logs, e.g. `panorama` or `transit`.
    pub phase: Option<&'static str>,
    /// The policy has run out of options; the action is a STOP.
    pub gave_up: bool,
}

impl Decision {
    pub fn new(action: impl Into<ExtendedAction>, phase: &'static str) -> Self {
        Self {
            action: action.into(),
            phase: Some(phase),
            gave_up: false,
        }
    }
}

pub trait Policy: Send {
    fn name(&self) -> &str;
    fn reset(&mut self, ctx: &EpisodeContext) -> Result<(), PolicyError>;
    fn act(&mut self, obs: &Observation) -> Result<Decision, PolicyError>;
}

/// Names accepted by [`make_policy`].
pub const POLICY_NAMES: [&str; 4] = ["vlv", "random", "oracle", "external"];

/// Build a policy by name. `external` yields a [`ScriptedPolicy`] over the
/// given tokens.
pub fn make_policy(name: &str, vlv: VlvConfig, script: Option<Vec<String>>) -> Result<Box<dyn Policy>, PolicyError> {
    match name {
        "vlv" => Ok(Box::new(VlvPolicy::new(vlv, Box::new(HeuristicScorer::new(vlv.false_negative))))),
        "random" => Ok(Box::new(RandomPolicy::default())),
        "oracle" => Ok(Box::new(OraclePolicy::default())),
        "external" => {
            let tokens = script.ok_or_else(|| PolicyError::External("no action script given".into()))?;
            Ok(Box::new(ScriptedPolicy::from_tokens(&tokens)?))
        }
        other => Err(PolicyError::UnknownPolicy(other.to_string())),
    }
}
