//! Base driver node: takes velocity commands, drives the plant and publishes
//! odometry relative to the last reset.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bus::BusError;
use crate::geometry::{normalize_deg, Pose2D};
use crate::messages::{Message, NavBus, NavPublisher, NavSubscription, BASE_VELOCITY, ODOM};
use crate::sim_world::{lock_plant, RobotLimits, SharedPlant};

pub const DEFAULT_ODOM_RATE_HZ: f64 = 30.0;
pub const DEFAULT_WATCHDOG_S: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    /// Forward speed, m/s.
    pub v: f64,
    /// Counter-clockwise yaw rate, rad/s.
    pub w: f64,
}

impl Twist {
    pub const ZERO: Twist = Twist { v: 0.0, w: 0.0 };

    pub const fn new(v: f64, w: f64) -> Self {
        Self { v, w }
    }

    /// Clamp magnitudes to the limits. Signs are preserved; NaN becomes zero.
    pub fn clamped(&self, limits: &RobotLimits) -> Twist {
        let clamp = |x: f64, m: f64| if x.is_nan() { 0.0 } else { x.clamp(-m, m) };
        Twist {
            v: clamp(self.v, limits.max_linear),
            w: clamp(self.w, limits.max_angular),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.v == 0.0 && self.w == 0.0
    }
}

/// Pose estimate relative to the most recent odometry reset.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OdomSample {
    pub x: f64,
    pub y: f64,
    /// Degrees in `[0, 360)`.
    pub heading: f64,
    pub stamp: f64,
    pub seq: u64,
    /// Contact since the previous sample.
    #[serde(default)]
    pub bumper: bool,
}

impl OdomSample {
    pub fn pose(&self) -> Pose2D {
        Pose2D::new(self.x, self.y, self.heading)
    }
}

/// What a robot base must offer to the driver node.
pub trait HardwareAdapter: Send {
    fn apply(&mut self, cmd: Twist);
    /// Let `dt` seconds of plant time elapse under the applied command.
    fn advance(&mut self, _dt: f64) {}
    fn sample_odometry(&mut self) -> OdomSample;
    fn reset_odometry(&mut self);
}

/// Adapter binding the driver node to the simulated plant.
pub struct SimAdapter {
    plant: SharedPlant,
    cmd: Twist,
    origin: Pose2D,
    now: f64,
    seq: u64,
    heading_bias: f64,
}

impl SimAdapter {
    pub fn new(plant: SharedPlant) -> Self {
        let origin = lock_plant(&plant).pose();
        Self {
            plant,
            cmd: Twist::ZERO,
            origin,
            now: 0.0,
            seq: 0,
            heading_bias: 0.0,
        }
    }

    pub fn plant(&self) -> &SharedPlant {
        &self.plant
    }

    pub fn now(&self) -> f64 {
        self.now
    }
}

impl HardwareAdapter for SimAdapter {
    fn apply(&mut self, cmd: Twist) {
        self.cmd = cmd;
    }

    fn advance(&mut self, dt: f64) {
        lock_plant(&self.plant).step(self.cmd, dt);
        self.now += dt;
    }

    fn sample_odometry(&mut self) -> OdomSample {
        let mut plant = lock_plant(&self.plant);
        let rel = self.origin.relative(&plant.pose());
        let bumper = plant.take_contact();
        let noise = plant.noise.clone();
        let rng = &mut plant.streams.odometry;
        let (mut x, mut y, mut heading) = (rel.x, rel.y, rel.heading);
        if noise.odom_xy_sigma > 0.0 {
            let n = Normal::new(0.0, noise.odom_xy_sigma).expect("validated sigma");
            x += n.sample(rng);
            y += n.sample(rng);
        }
        if noise.odom_heading_sigma > 0.0 {
            let n = Normal::new(0.0, noise.odom_heading_sigma).expect("validated sigma");
            if noise.odom_drift {
                self.heading_bias += n.sample(rng);
                heading += self.heading_bias;
            } else {
                heading += n.sample(rng);
            }
        }
        self.seq += 1;
        OdomSample {
            x,
            y,
            heading: normalize_deg(heading),
            stamp: self.now,
            seq: self.seq,
            bumper,
        }
    }

    fn reset_odometry(&mut self) {
        self.origin = lock_plant(&self.plant).pose();
        self.heading_bias = 0.0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotApiConfig {
    pub limits: RobotLimits,
    pub odom_rate_hz: f64,
    pub watchdog_s: f64,
}

impl Default for RobotApiConfig {
    fn default() -> Self {
        Self {
            limits: RobotLimits::default(),
            odom_rate_hz: DEFAULT_ODOM_RATE_HZ,
            watchdog_s: DEFAULT_WATCHDOG_S,
        }
    }
}

/// The driver node. Owned by the scheduler and ticked at the base rate.
pub struct RobotApiNode {
    adapter: Box<dyn HardwareAdapter>,
    cfg: RobotApiConfig,
    cmd_sub: NavSubscription,
    odom_pub: NavPublisher,
    current: Twist,
    last_cmd: f64,
    now: f64,
    next_odom: f64,
}

impl RobotApiNode {
    /// Wire the node: subscribes to the base velocity topic (remappable) and
    /// advertises `/odom`.
    pub fn new(bus: &NavBus, adapter: Box<dyn HardwareAdapter>, cfg: RobotApiConfig) -> Result<Self, BusError> {
        let node = bus.node("robot_api");
        let cmd_sub = node.subscribe(BASE_VELOCITY, 16)?;
        let odom_pub = node.advertise(ODOM)?;
        Ok(Self {
            adapter,
            cfg,
            cmd_sub,
            odom_pub,
            current: Twist::ZERO,
            last_cmd: f64::NEG_INFINITY,
            now: 0.0,
            next_odom: 0.0,
        })
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    /// Latest command as it will be applied, after clamping.
    pub fn current_command(&self) -> Twist {
        self.current
    }

    pub fn on_cmd_vel(&mut self, t: Twist) {
        self.current = t.clamped(&self.cfg.limits);
        self.last_cmd = self.now;
    }

    /// Sample odometry and publish it on `/odom`.
    pub fn publish_odom(&mut self) -> OdomSample {
        let sample = self.adapter.sample_odometry();
        // the stamp only moves forward, so publishing cannot fail
        let _ = self.odom_pub.publish(sample.stamp, Message::Odom(sample));
        sample
    }

    pub fn reset_odometry(&mut self) {
        self.adapter.reset_odometry();
    }

    /// One scheduler tick: take the newest command, enforce the watchdog, move
    /// the plant, then publish odometry when due.
    pub fn tick(&mut self, dt: f64) {
        let mut newest = None;
        for env in self.cmd_sub.drain() {
            if let Message::Twist(t) = env.payload {
                newest = Some(t);
            }
        }
        if let Some(t) = newest {
            self.on_cmd_vel(t);
        }
        if self.now - self.last_cmd > self.cfg.watchdog_s {
            self.current = Twist::ZERO;
        }
        self.adapter.apply(self.current);
        self.adapter.advance(dt);
        self.now += dt;
        if self.now + 1e-9 >= self.next_odom {
            self.publish_odom();
            let period = 1.0 / self.cfg.odom_rate_hz;
            while self.next_odom <= self.now + 1e-9 {
                self.next_odom += period;
            }
        }
    }
}
