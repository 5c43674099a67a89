//! Closed-loop execution of discrete actions.
//!
//! The controller runs at a fixed tick on simulation time: it reads `/odom`,
//! evaluates the turn or straight-line error, and publishes a velocity that
//! follows an accelerate / cruise / decelerate profile. When the error is
//! inside the stop band it commands zero, waits for a fresh odometry sample
//! and accepts the move if the tolerance holds on that sample. Otherwise it
//! creeps toward the target and tries again.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, Mutex, TryLockError};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::{BusError, ServiceHandle};
use crate::config::{ConfigError, FlatConfig};
use crate::geometry::{normalize_deg, signed_deg};
use crate::messages::{Message, NavBus, NavPublisher, NavSubscription, CMD_VEL, DISCRETE_MOVE, ODOM};
use crate::robot_api::{OdomSample, Twist};
use crate::stack::Clock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionKind {
    MoveForward,
    MoveBackward,
    TurnLeft,
    TurnRight,
    Stop,
}

impl ActionKind {
    pub const ALL: [ActionKind; 5] = [
        ActionKind::MoveForward,
        ActionKind::MoveBackward,
        ActionKind::TurnLeft,
        ActionKind::TurnRight,
        ActionKind::Stop,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ActionKind::MoveForward => "MOVE_FORWARD",
            ActionKind::MoveBackward => "MOVE_BACKWARD",
            ActionKind::TurnLeft => "TURN_LEFT",
            ActionKind::TurnRight => "TURN_RIGHT",
            ActionKind::Stop => "STOP",
        }
    }

    pub fn is_turn(&self) -> bool {
        matches!(self, ActionKind::TurnLeft | ActionKind::TurnRight)
    }

    pub fn is_move(&self) -> bool {
        matches!(self, ActionKind::MoveForward | ActionKind::MoveBackward)
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown action {0:?}")]
pub struct UnknownAction(pub String);

impl FromStr for ActionKind {
    type Err = UnknownAction;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.trim().to_ascii_uppercase();
        ActionKind::ALL
            .into_iter()
            .find(|k| k.as_str() == upper)
            .ok_or_else(|| UnknownAction(s.to_string()))
    }
}

/// A quantized motion request. `magnitude` is meters for moves, degrees for
/// turns and zero for STOP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteAction {
    pub kind: ActionKind,
    pub magnitude: f64,
}

pub const DEFAULT_STEP_M: f64 = 0.25;
pub const DEFAULT_TURN_DEG: f64 = 30.0;

impl DiscreteAction {
    pub fn forward(m: f64) -> Self {
        Self { kind: ActionKind::MoveForward, magnitude: m }
    }
    pub fn backward(m: f64) -> Self {
        Self { kind: ActionKind::MoveBackward, magnitude: m }
    }
    pub fn left(deg: f64) -> Self {
        Self { kind: ActionKind::TurnLeft, magnitude: deg }
    }
    pub fn right(deg: f64) -> Self {
        Self { kind: ActionKind::TurnRight, magnitude: deg }
    }
    pub fn stop() -> Self {
        Self { kind: ActionKind::Stop, magnitude: 0.0 }
    }

    /// Default magnitude for a kind: 0.25 m or 30°.
    pub fn standard(kind: ActionKind) -> Self {
        let magnitude = match kind {
            ActionKind::MoveForward | ActionKind::MoveBackward => DEFAULT_STEP_M,
            ActionKind::TurnLeft | ActionKind::TurnRight => DEFAULT_TURN_DEG,
            ActionKind::Stop => 0.0,
        };
        Self { kind, magnitude }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.kind == ActionKind::Stop {
            return Ok(());
        }
        if !(self.magnitude.is_finite() && self.magnitude > 0.0) {
            return Err(format!("{} needs a positive magnitude, got {}", self.kind, self.magnitude));
        }
        Ok(())
    }
}

impl fmt::Display for DiscreteAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ActionKind::Stop => f.write_str("STOP"),
            k if k.is_move() => write!(f, "{} {} m", k, self.magnitude),
            k => write!(f, "{} {} deg", k, self.magnitude),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveFailure {
    Timeout,
    Collision,
    OdometrySilence,
    Busy,
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveResult {
    pub success: bool,
    /// Signed form of the turn error on the final sample, degrees.
    pub final_turn_error: f64,
    /// Straight-line error on the final sample, meters.
    pub final_straight_error: f64,
    pub actions_elapsed_time: f64,
    pub collision: bool,
    #[serde(default)]
    pub failure: Option<MoveFailure>,
    /// Distance (moves, meters) or rotation (turns, degrees) achieved according to odometry.
    #[serde(default)]
    pub achieved: f64,
    #[serde(default)]
    pub start_odom: Option<OdomSample>,
    #[serde(default)]
    pub final_odom: Option<OdomSample>,
}

impl MoveResult {
    fn failed(failure: MoveFailure) -> Self {
        Self {
            success: false,
            final_turn_error: 0.0,
            final_straight_error: 0.0,
            actions_elapsed_time: 0.0,
            collision: failure == MoveFailure::Collision,
            failure: Some(failure),
            achieved: 0.0,
            start_odom: None,
            final_odom: None,
        }
    }
}

/// Turn error in degrees, `(target − current) mod 360` in `[0, 360)`.
pub fn turn_error(target: f64, current: f64) -> f64 {
    normalize_deg(target - current)
}

/// Signed companion of [`turn_error`] in `(−180, 180]`; positive means turn left.
pub fn turn_error_signed(target: f64, current: f64) -> f64 {
    signed_deg(target - current)
}

/// Remaining straight-line distance: positive before the goal, negative past it.
pub fn straight_error(d: f64, x: f64, y: f64, x_init: f64, y_init: f64) -> f64 {
    d - (x - x_init).hypot(y - y_init)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfilePhase {
    Accel,
    Cruise,
    Decel,
}

/// Speed on one phase of the profile. `covered` is the distance since the
/// start of the move in the accel phase and the distance since the start of
/// braking in the decel phase.
pub fn profile_speed(v_init: f64, a: f64, covered: f64, phase: ProfilePhase, profile: &Profile) -> f64 {
    let covered = covered.max(0.0);
    match phase {
        ProfilePhase::Accel => (v_init * v_init + 2.0 * a * covered).sqrt().min(profile.cruise),
        ProfilePhase::Cruise => profile.cruise,
        ProfilePhase::Decel => (profile.v_peak * profile.v_peak - 2.0 * a * covered).max(0.0).sqrt(),
    }
}

/// Accelerate / cruise / decelerate plan for one move of length `distance`.
/// Units are meters for moves and degrees for turns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub distance: f64,
    pub cruise: f64,
    /// Length of each of the accel and decel segments.
    pub ramp: f64,
    pub a: f64,
    pub v_peak: f64,
}

impl Profile {
    /// `ramp` defaults to a third of the distance. The acceleration is the one
    /// that reaches `cruise` at the end of the configured ramp; if two ramps do
    /// not fit, each takes half the distance and the peak stays below cruise.
    pub fn new(distance: f64, cruise: f64, ramp: Option<f64>) -> Self {
        let configured = ramp.filter(|r| *r > 0.0).unwrap_or(distance / 3.0);
        let a = cruise * cruise / (2.0 * configured);
        if 2.0 * configured > distance {
            let ramp = distance / 2.0;
            Self {
                distance,
                cruise,
                ramp,
                a,
                v_peak: (2.0 * a * ramp).sqrt().min(cruise),
            }
        } else {
            Self {
                distance,
                cruise,
                ramp: configured,
                a,
                v_peak: cruise,
            }
        }
    }

    pub fn phase(&self, covered: f64) -> ProfilePhase {
        if covered < self.ramp {
            ProfilePhase::Accel
        } else if covered < self.distance - self.ramp {
            ProfilePhase::Cruise
        } else {
            ProfilePhase::Decel
        }
    }

    /// Profile speed at `covered`, without creep floor.
    pub fn speed(&self, covered: f64) -> f64 {
        let phase = self.phase(covered);
        let local = match phase {
            ProfilePhase::Decel => covered - (self.distance - self.ramp),
            _ => covered,
        };
        profile_speed(0.0, self.a, local, phase, self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionConfig {
    pub linear_velocity: f64,
    pub angular_velocity: f64,
    /// Meters; `None` means a third of each commanded distance.
    pub accel_decel_distance: Option<f64>,
    /// Degrees; `None` means a third of each commanded angle.
    pub turn_accel_decel_angle: Option<f64>,
    pub timeout_s: f64,
    pub tick_hz: f64,
    pub linear_tolerance: f64,
    pub angular_tolerance: f64,
    pub creep_linear: f64,
    pub creep_angular: f64,
    pub odom_silence_s: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            linear_velocity: 0.3,
            angular_velocity: 0.5,
            accel_decel_distance: None,
            turn_accel_decel_angle: None,
            timeout_s: 30.0,
            tick_hz: 50.0,
            linear_tolerance: 0.005,
            angular_tolerance: 0.1,
            creep_linear: 0.02,
            creep_angular: 0.05,
            odom_silence_s: 1.0,
        }
    }
}

impl MotionConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("linear_velocity", self.linear_velocity),
            ("angular_velocity", self.angular_velocity),
            ("timeout_s", self.timeout_s),
            ("tick_hz", self.tick_hz),
            ("linear_tolerance", self.linear_tolerance),
            ("angular_tolerance", self.angular_tolerance),
            ("creep_linear", self.creep_linear),
            ("creep_angular", self.creep_angular),
            ("odom_silence_s", self.odom_silence_s),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("accel_decel_distance", self.accel_decel_distance),
            ("turn_accel_decel_angle", self.turn_accel_decel_angle),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(format!("{name} must be positive, got {v}"));
                }
            }
        }
        Ok(())
    }

    /// Read the `discrete_move` section; missing keys keep their defaults.
    pub fn from_config(cfg: &FlatConfig) -> Result<Self, ConfigError> {
        let mut m = MotionConfig::default();
        m.apply(cfg)?;
        Ok(m)
    }

    /// Overwrite the fields present in the `discrete_move` section.
    pub fn apply(&mut self, cfg: &FlatConfig) -> Result<(), ConfigError> {
        const S: &str = "discrete_move";
        let m = self;
        let set = |dst: &mut f64, key: &str| -> Result<(), ConfigError> {
            if let Some(v) = cfg.parsed::<f64>(S, key)? {
                if !(v.is_finite() && v > 0.0) {
                    return Err(cfg.bad_value(S, key, "must be positive"));
                }
                *dst = v;
            }
            Ok(())
        };
        set(&mut m.linear_velocity, "linear_velocity")?;
        set(&mut m.angular_velocity, "angular_velocity")?;
        set(&mut m.timeout_s, "timeout_s")?;
        set(&mut m.tick_hz, "tick_hz")?;
        set(&mut m.linear_tolerance, "linear_tolerance")?;
        set(&mut m.angular_tolerance, "angular_tolerance")?;
        for (dst, key) in [
            (&mut m.accel_decel_distance, "accel_decel_distance"),
            (&mut m.turn_accel_decel_angle, "turn_accel_decel_angle"),
        ] {
            if let Some(v) = cfg.parsed::<f64>(S, key)? {
                if !(v.is_finite() && v > 0.0) {
                    return Err(cfg.bad_value(S, key, "must be positive"));
                }
                *dst = Some(v);
            }
        }
        Ok(())
    }
}

pub fn load_motion_config(path: impl AsRef<Path>) -> Result<MotionConfig, ConfigError> {
    MotionConfig::from_config(&FlatConfig::load(path)?)
}

/// One controller tick, for profile inspection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TickRecord {
    pub t: f64,
    pub command: Twist,
    /// Progress along the move in meters or degrees: the latest odometry
    /// extrapolated to the tick, as the controller used it.
    pub covered: f64,
    pub remaining: f64,
    pub phase: Option<ProfilePhase>,
}

#[derive(Debug, Error)]
pub enum MoveError {
    #[error("invalid motion config: {0}")]
    Config(String),
    #[error(transparent)]
    Bus(#[from] BusError),
}

struct Io {
    cmd_pub: NavPublisher,
    odom_sub: NavSubscription,
    latest: Option<OdomSample>,
}

/// The `/discrete_move` server. Owns the only publisher on `/cmd_vel`.
pub struct DiscreteMove {
    config: MotionConfig,
    clock: Arc<dyn Clock>,
    io: Mutex<Io>,
}

#[derive(Clone, Copy, PartialEq)]
enum Stage {
    Approach,
    Settle { since: f64 },
    Correct,
}

impl DiscreteMove {
    pub fn new(bus: &NavBus, clock: Arc<dyn Clock>, config: MotionConfig) -> Result<Arc<Self>, MoveError> {
        config.validate().map_err(MoveError::Config)?;
        let node = bus.node("discrete_move");
        let cmd_pub = node.advertise(CMD_VEL)?;
        let odom_sub = node.subscribe(ODOM, 64)?;
        Ok(Arc::new(Self {
            config,
            clock,
            io: Mutex::new(Io {
                cmd_pub,
                odom_sub,
                latest: None,
            }),
        }))
    }

    /// Register `/discrete_move` on the bus, served by `server`.
    pub fn serve(server: &Arc<Self>, bus: &NavBus) -> Result<ServiceHandle<Message>, BusError> {
        let s = Arc::clone(server);
        bus.node("discrete_move")
            .register_service(DISCRETE_MOVE, move |cmd: DiscreteAction| s.execute(cmd))
    }

    pub fn config(&self) -> &MotionConfig {
        &self.config
    }

    pub fn execute(&self, cmd: DiscreteAction) -> MoveResult {
        self.run(cmd, None)
    }

    /// Execute and return every controller tick alongside the result.
    pub fn execute_traced(&self, cmd: DiscreteAction) -> (MoveResult, Vec<TickRecord>) {
        let mut trace = Vec::new();
        let r = self.run(cmd, Some(&mut trace));
        (r, trace)
    }

    fn run(&self, cmd: DiscreteAction, trace: Option<&mut Vec<TickRecord>>) -> MoveResult {
        let mut io = match self.io.try_lock() {
            Ok(g) => g,
            Err(TryLockError::WouldBlock) => return MoveResult::failed(MoveFailure::Busy),
            Err(TryLockError::Poisoned(p)) => p.into_inner(),
        };
        if let Err(e) = cmd.validate() {
            return MoveResult::failed(MoveFailure::Invalid(e));
        }
        let t0 = self.clock.now();
        let mut result = if cmd.kind == ActionKind::Stop {
            self.publish(&mut io, Twist::ZERO);
            let mut r = MoveResult::failed(MoveFailure::Timeout);
            r.success = true;
            r.failure = None;
            r.final_odom = io.latest;
            r
        } else {
            Controller::new(self, &mut io, cmd, trace).run()
        };
        result.actions_elapsed_time = self.clock.now() - t0;
        result
    }

    fn publish(&self, io: &mut Io, t: Twist) {
        let now = self.clock.now();
        let _ = io.cmd_pub.publish(now, Message::Twist(t));
    }
}

/// Per-action control state.
struct Controller<'a> {
    server: &'a DiscreteMove,
    io: &'a mut Io,
    cmd: DiscreteAction,
    trace: Option<&'a mut Vec<TickRecord>>,
    dt: f64,
    t_start: f64,
    /// +1 toward the goal in the robot's sense (forward / left).
    sign: f64,
    profile: Profile,
    tol: f64,
    band: f64,
    creep: f64,
    /// Last commanded progress rate toward the goal, in profile units per second.
    rate: f64,
    start: Option<OdomSample>,
    turned: f64,
    prev_heading: f64,
    collided: bool,
}

impl<'a> Controller<'a> {
    fn new(server: &'a DiscreteMove, io: &'a mut Io, cmd: DiscreteAction, trace: Option<&'a mut Vec<TickRecord>>) -> Self {
        let c = &server.config;
        let (sign, profile, tol, creep) = match cmd.kind {
            ActionKind::MoveForward | ActionKind::MoveBackward => (
                if cmd.kind == ActionKind::MoveForward { 1.0 } else { -1.0 },
                Profile::new(cmd.magnitude, c.linear_velocity, c.accel_decel_distance),
                c.linear_tolerance,
                c.creep_linear,
            ),
            _ => (
                if cmd.kind == ActionKind::TurnLeft { 1.0 } else { -1.0 },
                Profile::new(cmd.magnitude, c.angular_velocity.to_degrees(), c.turn_accel_decel_angle),
                c.angular_tolerance,
                c.creep_angular.to_degrees(),
            ),
        };
        Self {
            server,
            io,
            cmd,
            trace,
            dt: 1.0 / c.tick_hz,
            t_start: server.clock.now(),
            sign,
            profile,
            tol,
            band: tol / 2.0,
            creep,
            rate: 0.0,
            start: None,
            turned: 0.0,
            prev_heading: 0.0,
            collided: false,
        }
    }

    fn now(&self) -> f64 {
        self.server.clock.now()
    }

    /// Pull queued odometry; returns true if a newer sample arrived.
    fn poll(&mut self) -> bool {
        let mut fresh = false;
        for env in self.io.odom_sub.drain() {
            let Message::Odom(s) = env.payload else { continue };
            if s.stamp + 1e-9 < self.t_start {
                // left over from before this action
                self.io.latest = Some(s);
                continue;
            }
            if s.bumper {
                self.collided = true;
            }
            if self.start.is_some() && self.cmd.kind.is_turn() {
                self.turned += signed_deg(s.heading - self.prev_heading);
                self.prev_heading = s.heading;
            }
            self.io.latest = Some(s);
            fresh = true;
        }
        fresh
    }

    fn command(&mut self, twist: Twist) {
        self.server.publish(self.io, twist);
    }

    fn stop(&mut self) {
        self.rate = 0.0;
        self.command(Twist::ZERO);
    }

    fn twist_for(&self, rate: f64) -> Twist {
        if self.cmd.kind.is_move() {
            Twist::new(self.sign * rate, 0.0)
        } else {
            Twist::new(0.0, (self.sign * rate).to_radians())
        }
    }

    /// Signed progress toward the goal measured on `s`.
    fn progress(&self, s: &OdomSample) -> f64 {
        let start = self.start.expect("start sample");
        if self.cmd.kind.is_move() {
            let h = start.heading.to_radians();
            self.sign * ((s.x - start.x) * h.cos() + (s.y - start.y) * h.sin())
        } else {
            self.sign * self.turned
        }
    }

    fn target_heading(&self) -> f64 {
        normalize_deg(self.start.expect("start sample").heading + self.sign * self.cmd.magnitude)
    }

    /// Eq. 1 / Eq. 2 evaluated on `s`: (signed turn error, straight error).
    fn errors(&self, s: &OdomSample) -> (f64, f64) {
        let start = self.start.expect("start sample");
        if self.cmd.kind.is_move() {
            (0.0, straight_error(self.cmd.magnitude, s.x, s.y, start.x, start.y))
        } else {
            (turn_error_signed(self.target_heading(), s.heading), 0.0)
        }
    }

    fn within_tolerance(&self, s: &OdomSample) -> bool {
        let (te, se) = self.errors(s);
        if self.cmd.kind.is_move() {
            se.abs() < self.tol
        } else {
            let e = turn_error(self.target_heading(), s.heading);
            e < self.tol || e > 360.0 - self.tol || te.abs() < self.tol
        }
    }

    fn finish(&mut self, failure: Option<MoveFailure>) -> MoveResult {
        self.stop();
        let latest = self.io.latest;
        let (te, se) = match (self.start, latest) {
            (Some(_), Some(s)) => self.errors(&s),
            _ => (0.0, 0.0),
        };
        let achieved = match (self.start, latest) {
            (Some(st), Some(s)) if self.cmd.kind.is_move() => (s.x - st.x).hypot(s.y - st.y),
            (Some(_), Some(_)) => self.turned.abs(),
            _ => 0.0,
        };
        MoveResult {
            success: failure.is_none(),
            final_turn_error: te,
            final_straight_error: se,
            actions_elapsed_time: 0.0,
            collision: failure == Some(MoveFailure::Collision),
            failure,
            achieved,
            start_odom: self.start,
            final_odom: latest,
        }
    }

    fn check_abort(&mut self) -> Option<MoveFailure> {
        let now = self.now();
        if self.collided {
            return Some(MoveFailure::Collision);
        }
        if now - self.t_start > self.server.config.timeout_s {
            return Some(MoveFailure::Timeout);
        }
        let last = self.io.latest.map_or(self.t_start, |s| s.stamp.max(self.t_start));
        if now - last > self.server.config.odom_silence_s {
            return Some(MoveFailure::OdometrySilence);
        }
        None
    }

    fn record(&mut self, twist: Twist, covered: f64, phase: Option<ProfilePhase>) {
        let t = self.now();
        let remaining = self.profile.distance - covered;
        if let Some(trace) = self.trace.as_deref_mut() {
            trace.push(TickRecord {
                t,
                command: twist,
                covered,
                remaining,
                phase,
            });
        }
    }

    fn run(mut self) -> MoveResult {
        let clock = Arc::clone(&self.server.clock);
        // Wait for the first sample taken after the request arrived.
        loop {
            if self.poll() {
                break;
            }
            if let Some(f) = self.check_abort() {
                return self.finish(Some(f));
            }
            clock.advance(self.dt);
        }
        let first = self.io.latest.expect("fresh sample");
        self.start = Some(first);
        self.prev_heading = first.heading;
        self.turned = 0.0;

        let d = self.profile.distance;
        let mut stage = Stage::Approach;
        loop {
            self.poll();
            if let Some(f) = self.check_abort() {
                return self.finish(Some(f));
            }
            let latest = self.io.latest.expect("sample");
            let age = (self.now() - latest.stamp).max(0.0);
            let covered = self.progress(&latest);
            let predicted = covered + self.rate * age;
            let remaining = d - predicted;

            match stage {
                Stage::Approach => {
                    if remaining <= self.band {
                        self.stop();
                        self.record(Twist::ZERO, covered, None);
                        stage = Stage::Settle { since: self.now() };
                    } else {
                        let phase = self.profile.phase(predicted);
                        let mut v = match phase {
                            ProfilePhase::Decel => {
                                let in_decel = predicted - (d - self.profile.ramp);
                                let p = self.profile;
                                (p.v_peak * p.v_peak - 2.0 * p.a * (in_decel + self.band)).max(0.0).sqrt()
                            }
                            _ => self.profile.speed(predicted.max(0.0)),
                        };
                        v = v.max(self.creep).min(self.profile.cruise);
                        // land on the goal rather than jump past it
                        v = v.min(remaining / self.dt);
                        self.rate = v;
                        let tw = self.twist_for(v);
                        self.command(tw);
                        self.record(tw, predicted, Some(phase));
                    }
                }
                Stage::Settle { since } => {
                    if latest.stamp > since + 1e-9 {
                        if self.within_tolerance(&latest) {
                            return self.finish(None);
                        }
                        stage = Stage::Correct;
                        continue;
                    }
                    self.record(Twist::ZERO, covered, None);
                }
                Stage::Correct => {
                    if remaining.abs() <= self.band {
                        self.stop();
                        self.record(Twist::ZERO, covered, None);
                        stage = Stage::Settle { since: self.now() };
                    } else {
                        let v = remaining.signum() * self.creep.min(remaining.abs() / self.dt);
                        self.rate = v;
                        let tw = self.twist_for(v);
                        self.command(tw);
                        self.record(tw, covered, None);
                    }
                }
            }
            clock.advance(self.dt);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eq1_examples() {
        assert_eq!(turn_error(30.0, 0.0), 30.0);
        assert_eq!(turn_error(0.0, 0.0), 0.0);
        assert_eq!(turn_error(90.0, 350.0), 100.0);
        assert_eq!(turn_error_signed(0.0, 30.0), -30.0);
    }

    #[test]
    fn eq2_examples() {
        assert!((straight_error(0.25, 0.20, 0.0, 0.0, 0.0) - 0.05).abs() < 1e-12);
        assert_eq!(straight_error(0.25, 0.0, 0.0, 0.0, 0.0), 0.25);
        assert!(straight_error(0.25, 0.15, 0.20, 0.0, 0.0).abs() < 1e-12);
    }

    #[test]
    fn profile_examples() {
        let p = Profile { distance: 1.5, cruise: 0.3, ramp: 0.5, a: 0.09, v_peak: 0.3 };
        assert!((profile_speed(0.0, 0.09, 0.5, ProfilePhase::Accel, &p) - 0.3).abs() < 1e-12);
        assert_eq!(profile_speed(0.0, 0.09, 0.5, ProfilePhase::Decel, &p), 0.0);
        assert_eq!(profile_speed(0.0, 0.09, 0.0, ProfilePhase::Accel, &p), 0.0);
    }

    #[test]
    fn default_ramp_is_a_third() {
        let p = Profile::new(1.0, 0.3, None);
        assert!((p.ramp - 1.0 / 3.0).abs() < 1e-12);
        assert!((p.a - 0.135).abs() < 1e-12);
        assert_eq!(p.phase(0.2), ProfilePhase::Accel);
        assert_eq!(p.phase(0.5), ProfilePhase::Cruise);
        assert_eq!(p.phase(0.8), ProfilePhase::Decel);
    }

    #[test]
    fn triangular_when_ramps_overlap() {
        let p = Profile::new(0.25, 0.3, Some(0.2));
        assert_eq!(p.ramp, 0.125);
        assert!(p.v_peak < 0.3);
        assert_eq!(p.phase(0.124), ProfilePhase::Accel);
        assert_eq!(p.phase(0.126), ProfilePhase::Decel);
    }

    #[test]
    fn config_defaults_and_overrides() {
        let m = MotionConfig::from_config(&FlatConfig::parse("").unwrap()).unwrap();
        assert_eq!((m.linear_velocity, m.angular_velocity), (0.3, 0.5));
        let m = MotionConfig::from_config(&FlatConfig::parse("discrete_move.linear_velocity: 0.15").unwrap()).unwrap();
        assert_eq!((m.linear_velocity, m.angular_velocity), (0.15, 0.5));
        assert!(MotionConfig::from_config(&FlatConfig::parse("linear_velocity: -1").unwrap()).is_err());
    }

    #[test]
    fn action_parse() {
        assert_eq!("turn_left".parse::<ActionKind>().unwrap(), ActionKind::TurnLeft);
        assert!("jump".parse::<ActionKind>().is_err());
        assert!(DiscreteAction::forward(0.0).validate().is_err());
        assert!(DiscreteAction::stop().validate().is_ok());
    }
}
