//! Closed set of payloads carried on the navigation bus.

use crate::bus::{Bus, Publisher, Subscription};
use crate::camera_api::{DepthScan, SemanticScan};
use crate::robot_api::{OdomSample, Twist};

pub const CMD_VEL: &str = "/cmd_vel";
pub const ODOM: &str = "/odom";
pub const CAMERA_COLOR: &str = "/camera/color";
pub const CAMERA_DEPTH: &str = "/camera/depth";
pub const DISCRETE_MOVE: &str = "/discrete_move";
/// Topic the simulated base driver listens on; the launcher remaps it to `/cmd_vel`.
pub const BASE_VELOCITY: &str = "/mobile_base/commands/velocity";

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Twist(Twist),
    Odom(OdomSample),
    Depth(DepthScan),
    Semantic(SemanticScan),
    /// The camera could not render at the current pose.
    CaptureFault(String),
}

pub type NavBus = Bus<Message>;
pub type NavPublisher = Publisher<Message>;
pub type NavSubscription = Subscription<Message>;
