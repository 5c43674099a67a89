use std::sync::{Arc, Mutex, MutexGuard};

use super::{check_collision, step, NoiseModel, NoiseStreams, RobotLimits, RobotState, WorldError, WorldMap};
use crate::geometry::Pose2D;
use crate::robot_api::Twist;

/// The simulated robot body inside a world, with its noise streams.
pub struct Plant {
    pub world: Arc<WorldMap>,
    pub state: RobotState,
    pub limits: RobotLimits,
    pub noise: NoiseModel,
    pub streams: NoiseStreams,
    /// Total path length driven since construction.
    pub travelled: f64,
    pub collisions: u64,
    contact: bool,
}

pub type SharedPlant = Arc<Mutex<Plant>>;

impl Plant {
    pub fn new(world: Arc<WorldMap>, pose: Pose2D, limits: RobotLimits, noise: NoiseModel) -> Result<Self, WorldError> {
        noise.validate()?;
        let radius = world.robot_radius;
        if check_collision(&world, &pose, radius) {
            return Err(WorldError::StartBlocked {
                index: 0,
                x: pose.x,
                y: pose.y,
                radius,
            });
        }
        let streams = noise.streams();
        Ok(Self {
            world,
            state: RobotState::at(pose, radius),
            limits,
            noise,
            streams,
            travelled: 0.0,
            collisions: 0,
            contact: false,
        })
    }

    pub fn shared(self) -> SharedPlant {
        Arc::new(Mutex::new(self))
    }

    pub fn pose(&self) -> Pose2D {
        self.state.pose
    }

    pub fn step(&mut self, cmd: Twist, dt: f64) {
        let out = step(
            &self.world,
            &self.state,
            cmd,
            dt,
            &self.limits,
            &self.noise,
            &mut self.streams.actuation,
        );
        self.state = out.state;
        self.travelled += out.travelled;
        if out.collision {
            self.collisions += 1;
            self.contact = true;
        }
    }

    /// Whether a collision happened since the last call; clears the latch.
    pub fn take_contact(&mut self) -> bool {
        std::mem::take(&mut self.contact)
    }
}

pub fn lock_plant(plant: &SharedPlant) -> MutexGuard<'_, Plant> {
    plant.lock().unwrap_or_else(|e| e.into_inner())
}
