use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{check_collision, NoiseModel, WorldMap};
use crate::geometry::Pose2D;
use crate::robot_api::Twist;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotLimits {
    pub max_linear: f64,
    pub max_angular: f64,
}

impl Default for RobotLimits {
    fn default() -> Self {
        Self {
            max_linear: 0.3,
            max_angular: 0.5,
        }
    }
}

/// Ground-truth state of the simulated base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub pose: Pose2D,
    /// Linear speed actually achieved on the last step, m/s.
    pub v: f64,
    /// Angular speed actually achieved on the last step, rad/s.
    pub w: f64,
    pub radius: f64,
}

impl RobotState {
    pub fn at(pose: Pose2D, radius: f64) -> Self {
        Self {
            pose,
            v: 0.0,
            w: 0.0,
            radius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: RobotState,
    pub collision: bool,
    /// Path length actually travelled during the step.
    pub travelled: f64,
}

// Sweep check granularity.
const SWEEP_STEP_M: f64 = 0.01;
const SWEEP_STEP_RAD: f64 = 0.02;
const CONTACT_BISECTIONS: usize = 12;

fn arc_pose(start: &Pose2D, v: f64, w: f64, dt: f64) -> Pose2D {
    let th = start.heading_rad();
    if w.abs() < 1e-12 {
        Pose2D::new(
            start.x + v * dt * th.cos(),
            start.y + v * dt * th.sin(),
            start.heading,
        )
    } else {
        let th1 = th + w * dt;
        Pose2D::new(
            start.x + v / w * (th1.sin() - th.sin()),
            start.y - v / w * (th1.cos() - th.cos()),
            start.heading + (w * dt).to_degrees(),
        )
    }
}

/// Advance the unicycle by `dt` seconds under `cmd`.
///
/// Commands are clamped to `limits`, scaled by multiplicative actuation noise
/// drawn from `rng`, and integrated exactly along the arc. If the swept disc
/// touches an obstacle the robot stops at the last collision-free pose on the
/// arc and the outcome is flagged.
pub fn step<R: Rng + ?Sized>(
    world: &WorldMap,
    state: &RobotState,
    cmd: Twist,
    dt: f64,
    limits: &RobotLimits,
    noise: &NoiseModel,
    rng: &mut R,
) -> StepOutcome {
    assert!(dt > 0.0, "step requires dt > 0");
    let cmd = cmd.clamped(limits);
    let (mut v, mut w) = (cmd.v, cmd.w);
    if noise.actuation_scale_sigma > 0.0 {
        let sv: f64 = rng.sample(StandardNormal);
        let sw: f64 = rng.sample(StandardNormal);
        v *= (1.0 + noise.actuation_scale_sigma * sv).max(0.0);
        w *= (1.0 + noise.actuation_scale_sigma * sw).max(0.0);
    }

    let start = state.pose;
    let moved = v.abs() * dt;
    // In-place rotation sweeps nothing for a disc body.
    let n = if moved == 0.0 {
        0
    } else {
        ((moved / SWEEP_STEP_M).ceil() as usize)
            .max(((w * dt).abs() / SWEEP_STEP_RAD).ceil() as usize)
            .max(1)
    };

    let at = |frac: f64| arc_pose(&start, v, w, dt * frac);
    let blocked = |frac: f64| check_collision(world, &at(frac), state.radius);

    let mut contact: Option<(f64, f64)> = None;
    let mut last_free = 0.0;
    for k in 1..=n {
        let frac = k as f64 / n as f64;
        if blocked(frac) {
            contact = Some((last_free, frac));
            break;
        }
        last_free = frac;
    }

    match contact {
        None => StepOutcome {
            state: RobotState {
                pose: at(1.0),
                v,
                w,
                radius: state.radius,
            },
            collision: false,
            travelled: moved,
        },
        Some((mut lo, mut hi)) => {
            for _ in 0..CONTACT_BISECTIONS {
                let mid = 0.5 * (lo + hi);
                if blocked(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            StepOutcome {
                state: RobotState {
                    pose: at(lo),
                    v: 0.0,
                    w: 0.0,
                    radius: state.radius,
                },
                collision: true,
                travelled: moved * lo,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim_world::{Grid, WorldMap};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn open_world() -> WorldMap {
        let n = 400;
        let mut g = Grid::new(n, n, 0.05);
        for i in 0..n {
            g.set(i, 0, true);
            g.set(i, n - 1, true);
            g.set(0, i, true);
            g.set(n - 1, i, true);
        }
        WorldMap::new("open", g, vec![], vec![Pose2D::new(10.0, 10.0, 0.0)]).unwrap()
    }

    fn zero_step(world: &WorldMap, s: &RobotState, v: f64, w: f64, dt: f64) -> StepOutcome {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        step(
            world,
            s,
            Twist::new(v, w),
            dt,
            &RobotLimits { max_linear: 10.0, max_angular: 10.0 },
            &NoiseModel::zero(0),
            &mut rng,
        )
    }

    #[test]
    fn straight_line() {
        let w = open_world();
        let s = RobotState::at(Pose2D::new(10.0, 10.0, 0.0), 0.18);
        let out = zero_step(&w, &s, 0.3, 0.0, 0.1);
        assert!((out.state.pose.x - 10.03).abs() < 1e-12);
        assert_eq!(out.state.pose.y, 10.0);
        assert_eq!(out.state.pose.heading, 0.0);
        assert!(!out.collision);
    }

    #[test]
    fn pure_rotation() {
        let w = open_world();
        let s = RobotState::at(Pose2D::new(10.0, 10.0, 0.0), 0.18);
        let out = zero_step(&w, &s, 0.0, 0.5, 1.0);
        assert!((out.state.pose.heading - 28.64788975654116).abs() < 1e-9);
        assert_eq!(out.state.pose.x, 10.0);
        assert_eq!(out.state.pose.y, 10.0);
    }

    #[test]
    fn arc_matches_fine_euler() {
        let w = open_world();
        let s = RobotState::at(Pose2D::new(10.0, 10.0, 0.0), 0.18);
        let out = zero_step(&w, &s, 0.3, 0.3, 1.0);
        // oracle: 1000-substep midpoint-heading Euler
        let (mut x, mut y, mut th) = (10.0f64, 10.0f64, 0.0f64);
        let h = 1.0 / 1000.0;
        for _ in 0..1000 {
            let mid = th + 0.5 * 0.3 * h;
            x += 0.3 * h * mid.cos();
            y += 0.3 * h * mid.sin();
            th += 0.3 * h;
        }
        assert!((out.state.pose.x - x).abs() < 1e-6);
        assert!((out.state.pose.y - y).abs() < 1e-6);
        assert!((out.state.pose.heading - th.to_degrees()).abs() < 1e-6);
    }

    #[test]
    fn straight_moves_reverse_exactly() {
        let w = open_world();
        let s = RobotState::at(Pose2D::new(10.0, 10.0, 37.0), 0.18);
        let a = zero_step(&w, &s, 0.27, 0.0, 0.7);
        let b = zero_step(&w, &a.state, -0.27, 0.0, 0.7);
        assert!((b.state.pose.x - 10.0).abs() < 1e-9);
        assert!((b.state.pose.y - 10.0).abs() < 1e-9);
    }

    #[test]
    fn wall_stops_motion_at_contact() {
        let w = open_world();
        // inner wall face at x = 19.95
        let s = RobotState::at(Pose2D::new(19.5, 10.0, 0.0), 0.18);
        let out = zero_step(&w, &s, 1.0, 0.0, 1.0);
        assert!(out.collision);
        let contact_x = 19.95 - 0.18;
        assert!(out.state.pose.x <= contact_x + 1e-9);
        assert!(out.state.pose.x > contact_x - 0.005);
        assert!(!check_collision(&w, &out.state.pose, 0.18));
        assert!((out.travelled - (out.state.pose.x - 19.5)).abs() < 1e-9);
    }

    #[test]
    fn commands_are_clamped() {
        let w = open_world();
        let s = RobotState::at(Pose2D::new(10.0, 10.0, 0.0), 0.18);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = step(&w, &s, Twist::new(99.0, -99.0), 0.1, &RobotLimits::default(), &NoiseModel::zero(0), &mut rng);
        assert!((out.state.v - 0.3).abs() < 1e-12);
        assert!((out.state.w + 0.5).abs() < 1e-12);
    }
}
