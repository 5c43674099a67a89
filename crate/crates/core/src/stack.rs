//! Launcher: builds the bus, the simulated plant and the four nodes, and
//! drives simulation time.
//!
//! Time only moves when the component holding control asks for it. During an
//! action that is the motion controller; between actions it is the navigation
//! loop while it gathers camera frames. Both modes of the bus therefore give
//! identical trajectories for identical seeds.

use std::sync::{Arc, Mutex, MutexGuard};

use serde::Serialize;
use thiserror::Error;

use crate::bus::{BusError, BusMode, EdgeKind, ServiceHandle, Topology};
use crate::camera_api::{CameraApiNode, CameraConfig, CameraError};
use crate::config::{ConfigError, FlatConfig};
use crate::discrete_move::{DiscreteMove, MotionConfig, MoveError};
use crate::geometry::Pose2D;
use crate::messages::{Message, NavBus, BASE_VELOCITY, CAMERA_COLOR, CAMERA_DEPTH, CMD_VEL, DISCRETE_MOVE, ODOM};
use crate::robot_api::{RobotApiConfig, RobotApiNode, SimAdapter};
use crate::sim_world::{lock_plant, NoiseModel, Plant, RobotLimits, SharedPlant, WorldError, WorldMap};
use crate::vsn_core::{VsnConfig, VsnSession};

/// Rate at which the plant is integrated; node rates must divide it.
pub const BASE_RATE_HZ: f64 = 150.0;

/// Source of simulation time for components that wait on the world.
pub trait Clock: Send + Sync {
    fn now(&self) -> f64;
    /// Let `dt` seconds elapse, rounded to whole base ticks (at least one).
    fn advance(&self, dt: f64);
}

/// Plant plus the two hardware-facing nodes, stepped together.
pub struct Simulation {
    plant: SharedPlant,
    robot: RobotApiNode,
    camera: CameraApiNode,
    ticks: u64,
}

impl Simulation {
    pub fn now(&self) -> f64 {
        self.ticks as f64 / BASE_RATE_HZ
    }

    pub fn tick(&mut self) {
        let dt = 1.0 / BASE_RATE_HZ;
        self.robot.tick(dt);
        self.camera.tick(dt);
        self.ticks += 1;
    }

    pub fn robot(&mut self) -> &mut RobotApiNode {
        &mut self.robot
    }

    pub fn camera(&mut self) -> &mut CameraApiNode {
        &mut self.camera
    }

    pub fn plant(&self) -> &SharedPlant {
        &self.plant
    }
}

#[derive(Clone)]
pub struct SimClock(Arc<Mutex<Simulation>>);

impl SimClock {
    pub fn lock(&self) -> MutexGuard<'_, Simulation> {
        self.0.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl Clock for SimClock {
    fn now(&self) -> f64 {
        self.lock().now()
    }

    fn advance(&self, dt: f64) {
        let n = ((dt * BASE_RATE_HZ).round() as u64).max(1);
        let mut sim = self.lock();
        for _ in 0..n {
            sim.tick();
        }
    }
}

#[derive(Debug, Error)]
pub enum StackError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Move(#[from] MoveError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Everything the launcher needs besides the world and the start pose.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StackConfig {
    pub bus_mode: BusModeName,
    pub motion: MotionConfig,
    pub limits: RobotLimits,
    pub odom_rate_hz: f64,
    pub watchdog_s: f64,
    pub camera: CameraConfig,
    pub noise: NoiseModel,
    pub remaps: Vec<(String, String)>,
}

/// Serializable mirror of [`BusMode`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BusModeName {
    Threaded,
    Lockstep,
}

impl From<BusModeName> for BusMode {
    fn from(m: BusModeName) -> Self {
        match m {
            BusModeName::Threaded => BusMode::Threaded,
            BusModeName::Lockstep => BusMode::Lockstep,
        }
    }
}

impl Default for StackConfig {
    fn default() -> Self {
        let robot = RobotApiConfig::default();
        Self {
            bus_mode: BusModeName::Lockstep,
            motion: MotionConfig::default(),
            limits: robot.limits,
            odom_rate_hz: robot.odom_rate_hz,
            watchdog_s: robot.watchdog_s,
            camera: CameraConfig::default(),
            noise: NoiseModel::zero(0),
            remaps: vec![(BASE_VELOCITY.to_string(), CMD_VEL.to_string())],
        }
    }
}

impl StackConfig {
    /// Apply the `discrete_move`, `noise`, `camera` and `launcher` sections and
    /// any remap lines. Missing keys keep the current values.
    pub fn apply(&mut self, cfg: &FlatConfig) -> Result<(), ConfigError> {
        self.motion.apply(cfg)?;
        self.limits.max_linear = self.limits.max_linear.max(self.motion.linear_velocity);
        self.limits.max_angular = self.limits.max_angular.max(self.motion.angular_velocity);

        let n = &mut self.noise;
        for (key, dst) in [
            ("odom_xy_sigma", &mut n.odom_xy_sigma),
            ("odom_heading_sigma", &mut n.odom_heading_sigma),
            ("actuation_scale_sigma", &mut n.actuation_scale_sigma),
            ("depth_gaussian_sigma", &mut n.depth_gaussian_sigma),
            ("depth_impulse_prob", &mut n.depth_impulse_prob),
            ("depth_dropout_prob", &mut n.depth_dropout_prob),
        ] {
            if let Some(v) = cfg.parsed::<f64>("noise", key)? {
                *dst = v;
            }
        }
        if let Some(v) = cfg.parsed::<bool>("noise", "odom_drift")? {
            n.odom_drift = v;
        }
        if let Err(e) = n.validate() {
            return Err(ConfigError::BadValue {
                key: "noise".into(),
                value: String::new(),
                reason: e.to_string(),
            });
        }

        let c = &mut self.camera;
        if let Some(v) = cfg.parsed::<f64>("camera", "fov")? {
            c.fov = v;
        }
        if let Some(v) = cfg.parsed::<usize>("camera", "n_rays")? {
            c.n_rays = v;
        }
        if let Some(v) = cfg.parsed::<f64>("camera", "max_range")? {
            c.max_range = v;
        }
        if let Some(v) = cfg.parsed::<f64>("camera", "rate_hz")? {
            c.rate_hz = v;
        }
        if let Some(v) = cfg.parsed::<f64>("launcher", "odom_rate_hz")? {
            self.odom_rate_hz = v;
        }
        if let Some(v) = cfg.parsed::<f64>("launcher", "watchdog_s")? {
            self.watchdog_s = v;
        }
        if let Some(v) = cfg.get("launcher", "bus") {
            self.bus_mode = match v.0 {
                "threaded" => BusModeName::Threaded,
                "lockstep" => BusModeName::Lockstep,
                other => {
                    return Err(ConfigError::BadValue {
                        key: v.1,
                        value: other.to_string(),
                        reason: "expected threaded or lockstep".into(),
                    })
                }
            };
        }
        self.remaps.extend(cfg.remaps().iter().cloned());
        Ok(())
    }
}

/// One fully wired stack around one robot in one world.
pub struct Stack {
    bus: NavBus,
    clock: SimClock,
    plant: SharedPlant,
    controller: Arc<DiscreteMove>,
    service: Option<ServiceHandle<Message>>,
    world: Arc<WorldMap>,
}

impl Stack {
    /// Place the robot at `start`, reset odometry there and wire the base
    /// driver, camera and motion controller.
    pub fn launch(world: Arc<WorldMap>, start: Pose2D, cfg: &StackConfig) -> Result<Self, StackError> {
        let bus = NavBus::new(cfg.bus_mode.into());
        for (from, to) in &cfg.remaps {
            bus.remap(from, to)?;
        }
        let plant = Plant::new(Arc::clone(&world), start, cfg.limits, cfg.noise.clone())?.shared();
        let robot = RobotApiNode::new(
            &bus,
            Box::new(SimAdapter::new(Arc::clone(&plant))),
            RobotApiConfig {
                limits: cfg.limits,
                odom_rate_hz: cfg.odom_rate_hz,
                watchdog_s: cfg.watchdog_s,
            },
        )?;
        let camera = CameraApiNode::new(&bus, Arc::clone(&plant), cfg.camera)?;
        let clock = SimClock(Arc::new(Mutex::new(Simulation {
            plant: Arc::clone(&plant),
            robot,
            camera,
            ticks: 0,
        })));
        let controller = DiscreteMove::new(&bus, Arc::new(clock.clone()), cfg.motion)?;
        let service = DiscreteMove::serve(&controller, &bus)?;
        Ok(Self {
            bus,
            clock,
            plant,
            controller,
            service: Some(service),
            world,
        })
    }

    pub fn bus(&self) -> &NavBus {
        &self.bus
    }

    pub fn clock(&self) -> Arc<dyn Clock> {
        Arc::new(self.clock.clone())
    }

    pub fn simulation(&self) -> MutexGuard<'_, Simulation> {
        self.clock.lock()
    }

    pub fn controller(&self) -> &Arc<DiscreteMove> {
        &self.controller
    }

    pub fn world(&self) -> &Arc<WorldMap> {
        &self.world
    }

    pub fn plant(&self) -> &SharedPlant {
        &self.plant
    }

    /// Ground-truth pose of the robot.
    pub fn truth_pose(&self) -> Pose2D {
        lock_plant(&self.plant).pose()
    }

    pub fn travelled(&self) -> f64 {
        lock_plant(&self.plant).travelled
    }

    pub fn now(&self) -> f64 {
        self.clock.now()
    }

    /// Wire the navigation loop node.
    pub fn vsn_session(&self, cfg: VsnConfig) -> Result<VsnSession, StackError> {
        Ok(VsnSession::new(&self.bus, self.clock(), cfg)?)
    }

    pub fn topology(&self) -> Topology {
        self.bus.topology()
    }
}

impl Drop for Stack {
    fn drop(&mut self) {
        if let Some(s) = self.service.take() {
            s.unregister();
        }
    }
}

/// Edges the assembled stack must expose, after remapping.
pub fn expected_topology() -> Vec<(&'static str, EdgeKind, &'static str)> {
    vec![
        ("robot_api", EdgeKind::Subscribes, CMD_VEL),
        ("robot_api", EdgeKind::Publishes, ODOM),
        ("camera_api", EdgeKind::Publishes, CAMERA_COLOR),
        ("camera_api", EdgeKind::Publishes, CAMERA_DEPTH),
        ("discrete_move", EdgeKind::Publishes, CMD_VEL),
        ("discrete_move", EdgeKind::Subscribes, ODOM),
        ("discrete_move", EdgeKind::Serves, DISCRETE_MOVE),
        ("vsn_core", EdgeKind::Subscribes, ODOM),
        ("vsn_core", EdgeKind::Subscribes, CAMERA_COLOR),
        ("vsn_core", EdgeKind::Subscribes, CAMERA_DEPTH),
        ("vsn_core", EdgeKind::Calls, DISCRETE_MOVE),
    ]
}
