//! Deterministic 2D world: floor plan, object instances, differential-drive
//! plant and raycast sensors.

mod kinematics;
mod map;
mod plant;
mod render;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kinematics::{step, RobotLimits, RobotState, StepOutcome};
pub use map::{bundled_apartment, check_collision, distance_to_object, load_world, Grid, ObjectInstance, WorldMap};
pub use plant::{lock_plant, Plant, SharedPlant};
pub use render::{cast_ray, ray_angle, render_depth, render_pair, render_semantic, HitKind, RayHit};

use crate::geometry::Point;

pub const DEFAULT_RESOLUTION: f64 = 0.05;
pub const DEFAULT_ROBOT_RADIUS: f64 = 0.18;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("cannot read world file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed world file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("resolution must be positive, got {0}")]
    BadResolution(f64),
    #[error("grid is empty")]
    EmptyGrid,
    #[error("grid row {row} has {got} cells, expected {expected}")]
    RaggedGrid {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("grid row {row} column {col}: unexpected character {ch:?}")]
    BadCell { row: usize, col: usize, ch: char },
    #[error("grid boundary cell at row {row} column {col} is free; the world must be closed")]
    OpenBoundary { row: usize, col: usize },
    #[error("object {index} ({category}) at ({x}, {y}) lies in an occupied cell")]
    ObjectInWall {
        index: usize,
        category: Category,
        x: f64,
        y: f64,
    },
    #[error("object {index} ({category}) has non-positive radius")]
    BadObjectRadius { index: usize, category: Category },
    #[error("start {index} at ({x}, {y}) lacks clearance for a {radius} m robot")]
    StartBlocked {
        index: usize,
        x: f64,
        y: f64,
        radius: f64,
    },
    #[error("world has no start poses")]
    NoStarts,
    #[error("category {0} is not present in the world")]
    CategoryAbsent(Category),
    #[error("pose ({x}, {y}) is inside an occupied cell")]
    PoseOccupied { x: f64, y: f64 },
    #[error("invalid sensor parameters: {0}")]
    BadSensor(&'static str),
    #[error("invalid noise model: {0}")]
    BadNoise(&'static str),
}

/// Object categories a navigation target can name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Chair,
    Sofa,
    Table,
    Bed,
    Toilet,
    Monitor,
    Plant,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Chair,
        Category::Sofa,
        Category::Table,
        Category::Bed,
        Category::Toilet,
        Category::Monitor,
        Category::Plant,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Chair => "chair",
            Category::Sofa => "sofa",
            Category::Table => "table",
            Category::Bed => "bed",
            Category::Toilet => "toilet",
            Category::Monitor => "monitor",
            Category::Plant => "plant",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown object category {0:?}")]
pub struct UnknownCategory(pub String);

impl FromStr for Category {
    type Err = UnknownCategory;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == lower)
            .ok_or_else(|| UnknownCategory(s.to_string()))
    }
}

/// Noise injected into actuation, odometry and depth rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    pub odom_xy_sigma: f64,
    pub odom_heading_sigma: f64,
    pub actuation_scale_sigma: f64,
    pub depth_gaussian_sigma: f64,
    pub depth_impulse_prob: f64,
    pub depth_dropout_prob: f64,
    /// Accumulate heading bias across odometry samples instead of
    /// perturbing each sample independently.
    pub odom_drift: bool,
    pub rng_seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::zero(0)
    }
}

impl NoiseModel {
    pub fn zero(rng_seed: u64) -> Self {
        Self {
            odom_xy_sigma: 0.0,
            odom_heading_sigma: 0.0,
            actuation_scale_sigma: 0.0,
            depth_gaussian_sigma: 0.0,
            depth_impulse_prob: 0.0,
            depth_dropout_prob: 0.0,
            odom_drift: false,
            rng_seed,
        }
    }

    /// Moderate noise on every channel; the default for suites.
    pub fn realistic(rng_seed: u64) -> Self {
        Self {
            odom_xy_sigma: 0.002,
            odom_heading_sigma: 0.05,
            actuation_scale_sigma: 0.03,
            depth_gaussian_sigma: 0.01,
            depth_impulse_prob: 0.01,
            depth_dropout_prob: 0.02,
            odom_drift: false,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let sigmas = [
            self.odom_xy_sigma,
            self.odom_heading_sigma,
            self.actuation_scale_sigma,
            self.depth_gaussian_sigma,
        ];
        if sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(WorldError::BadNoise("sigmas must be finite and non-negative"));
        }
        let probs = [self.depth_impulse_prob, self.depth_dropout_prob];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(WorldError::BadNoise("probabilities must lie in [0, 1]"));
        }
        if self.depth_impulse_prob + self.depth_dropout_prob > 1.0 {
            return Err(WorldError::BadNoise("impulse and dropout probabilities exceed 1"));
        }
        Ok(())
    }

    /// Independent random streams for each noise source, derived from `rng_seed`.
    pub fn streams(&self) -> NoiseStreams {
        NoiseStreams {
            actuation: ChaCha8Rng::seed_from_u64(mix_seed(self.rng_seed, 1)),
            odometry: ChaCha8Rng::seed_from_u64(mix_seed(self.rng_seed, 2)),
            depth: ChaCha8Rng::seed_from_u64(mix_seed(self.rng_seed, 3)),
        }
    }
}

pub struct NoiseStreams {
    pub actuation: ChaCha8Rng,
    pub odometry: ChaCha8Rng,
    pub depth: ChaCha8Rng,
}

/// SplitMix64 finalizer over `seed` and a stream tag.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Convenience: centroid of the nearest instance of `category`.
pub fn nearest_instance(world: &WorldMap, from: Point, category: Category) -> Option<&ObjectInstance> {
    world
        .objects
        .iter()
        .filter(|o| o.category == category)
        .min_by(|a, b| {
            from.distance(&a.centroid())
                .total_cmp(&from.distance(&b.centroid()))
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_parse_roundtrip() {
        for c in Category::ALL {
            assert_eq!(c.as_str().parse::<Category>().unwrap(), c);
        }
        assert_eq!("Chair".parse::<Category>().unwrap(), Category::Chair);
        assert!("spaceship".parse::<Category>().is_err());
    }

    #[test]
    fn noise_validation() {
        assert!(NoiseModel::zero(0).validate().is_ok());
        let mut n = NoiseModel::zero(0);
        n.odom_xy_sigma = -1.0;
        assert!(n.validate().is_err());
        let mut n = NoiseModel::zero(0);
        n.depth_dropout_prob = 1.0;
        assert!(n.validate().is_ok());
        n.depth_impulse_prob = 0.1;
        assert!(n.validate().is_err());
    }
}
