//! Camera node: renders paired semantic and depth scans from the plant pose
//! and publishes them on `/camera/color` and `/camera/depth`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::BusError;
use crate::geometry::Pose2D;
use crate::messages::{Message, NavBus, NavPublisher, CAMERA_COLOR, CAMERA_DEPTH};
use crate::sim_world::{lock_plant, ray_angle, render_pair, Category, SharedPlant, WorldError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthScan {
    /// Meters per ray; 0 marks a dropout.
    pub ranges: Vec<f64>,
    pub fov: f64,
    pub max_range: f64,
    pub stamp: f64,
    /// Ground-truth pose at capture, for logging and plots only.
    pub pose_hint: Pose2D,
}

impl DepthScan {
    pub fn n_rays(&self) -> usize {
        self.ranges.len()
    }

    /// Bearing of ray `i` relative to the heading at capture.
    pub fn bearing(&self, i: usize) -> f64 {
        ray_angle(self.fov, self.ranges.len(), i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SemanticLabel {
    Object(Category),
    Wall,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticScan {
    pub labels: Vec<SemanticLabel>,
    pub hit_ranges: Vec<f64>,
    /// True where the first surface hit is an object footprint.
    pub visible: Vec<bool>,
    pub fov: f64,
    pub max_range: f64,
    pub stamp: f64,
    pub pose_hint: Pose2D,
}

impl SemanticScan {
    pub fn n_rays(&self) -> usize {
        self.labels.len()
    }

    pub fn bearing(&self, i: usize) -> f64 {
        ray_angle(self.fov, self.labels.len(), i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub fov: f64,
    pub n_rays: usize,
    pub max_range: f64,
    pub rate_hz: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            fov: 90.0,
            n_rays: 180,
            max_range: 5.0,
            rate_hz: 30.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum CameraError {
    #[error("capture rate must be positive, got {0}")]
    BadRate(f64),
    #[error(transparent)]
    Render(#[from] WorldError),
    #[error(transparent)]
    Bus(#[from] BusError),
}

pub struct CameraApiNode {
    plant: SharedPlant,
    cfg: CameraConfig,
    color_pub: NavPublisher,
    depth_pub: NavPublisher,
    now: f64,
    next_capture: f64,
    captures: u64,
}

impl CameraApiNode {
    pub fn new(bus: &NavBus, plant: SharedPlant, cfg: CameraConfig) -> Result<Self, CameraError> {
        if !(cfg.rate_hz > 0.0 && cfg.rate_hz.is_finite()) {
            return Err(CameraError::BadRate(cfg.rate_hz));
        }
        let node = bus.node("camera_api");
        Ok(Self {
            plant,
            cfg,
            color_pub: node.advertise(CAMERA_COLOR)?,
            depth_pub: node.advertise(CAMERA_DEPTH)?,
            now: 0.0,
            next_capture: 0.0,
            captures: 0,
        })
    }

    pub fn config(&self) -> &CameraConfig {
        &self.cfg
    }

    /// Number of captures published so far.
    pub fn captures(&self) -> u64 {
        self.captures
    }

    /// Captures happen every `1/hz` seconds, phase-locked to `t = 0`.
    pub fn set_rate(&mut self, hz: f64) -> Result<(), CameraError> {
        if !(hz > 0.0 && hz.is_finite()) {
            return Err(CameraError::BadRate(hz));
        }
        self.cfg.rate_hz = hz;
        let period = 1.0 / hz;
        self.next_capture = (self.now / period - 1e-9).ceil().max(0.0) * period;
        Ok(())
    }

    /// Render both scans at the current plant pose with a shared stamp.
    pub fn capture(&mut self) -> Result<(SemanticScan, DepthScan), CameraError> {
        let mut plant = lock_plant(&self.plant);
        let pose = plant.pose();
        let world = plant.world.clone();
        let noise = plant.noise.clone();
        let (mut sem, mut depth) = render_pair(
            &world,
            &pose,
            self.cfg.fov,
            self.cfg.n_rays,
            self.cfg.max_range,
            &noise,
            &mut plant.streams.depth,
        )?;
        sem.stamp = self.now;
        depth.stamp = self.now;
        Ok((sem, depth))
    }

    fn capture_and_publish(&mut self) {
        match self.capture() {
            Ok((sem, depth)) => {
                let _ = self.color_pub.publish(self.now, Message::Semantic(sem));
                let _ = self.depth_pub.publish(self.now, Message::Depth(depth));
            }
            Err(e) => {
                let _ = self.color_pub.publish(self.now, Message::CaptureFault(e.to_string()));
                let _ = self.depth_pub.publish(self.now, Message::CaptureFault(e.to_string()));
            }
        }
        self.captures += 1;
    }

    /// Advance the node clock; captures that fall due are rendered only when
    /// someone is listening.
    pub fn tick(&mut self, dt: f64) {
        let due = self.now + 1e-9 >= self.next_capture;
        if due {
            if self.color_pub.has_active_subscribers() || self.depth_pub.has_active_subscribers() {
                self.capture_and_publish();
            }
            let period = 1.0 / self.cfg.rate_hz;
            while self.next_capture <= self.now + 1e-9 {
                self.next_capture += period;
            }
        }
        self.now += dt;
    }
}
