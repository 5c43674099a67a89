mod common;

use std::sync::Arc;

use proptest::prelude::*;

use navstack::discrete_move::{straight_error, turn_error, ActionKind, DiscreteAction, MoveFailure};
use navstack::geometry::Pose2D;
use navstack::sim_world::NoiseModel;
use navstack::stack::{Stack, StackConfig};

fn command() -> impl Strategy<Value = DiscreteAction> {
    prop_oneof![
        (0.1..1.0f64).prop_map(DiscreteAction::forward),
        (0.1..1.0f64).prop_map(DiscreteAction::backward),
        (10.0..180.0f64).prop_map(DiscreteAction::left),
        (10.0..180.0f64).prop_map(DiscreteAction::right),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn controller_contract(cmd in command(), seed in 0u64..1000, noisy in any::<bool>()) {
        let world = Arc::new(common::open_room(12.0));
        let mut cfg = StackConfig::default();
        if noisy {
            cfg.noise = NoiseModel {
                odom_xy_sigma: 0.002,
                odom_heading_sigma: 0.05,
                actuation_scale_sigma: 0.05,
                ..NoiseModel::zero(seed)
            };
        }
        let stack = Stack::launch(Arc::clone(&world), world.starts[0], &cfg).unwrap();
        let (r, trace) = stack.controller().execute_traced(cmd);
        let m = cfg.motion;
        prop_assert!(r.success, "{:?}", r.failure);

        // tolerance soundness, recomputed from the reported samples
        let s = r.start_odom.unwrap();
        let f = r.final_odom.unwrap();
        match cmd.kind {
            ActionKind::MoveForward | ActionKind::MoveBackward => {
                let e = straight_error(cmd.magnitude, f.x, f.y, s.x, s.y);
                prop_assert!(e.abs() < m.linear_tolerance, "straight error {}", e);
            }
            _ => {
                let sign = if cmd.kind == ActionKind::TurnLeft { 1.0 } else { -1.0 };
                let e = turn_error(s.heading + sign * cmd.magnitude, f.heading);
                prop_assert!(e < m.angular_tolerance || e > 360.0 - m.angular_tolerance, "turn error {}", e);
            }
        }

        let creep_w = m.creep_angular;
        for k in &trace {
            prop_assert!(k.command.v.abs() <= m.linear_velocity + 1e-12);
            prop_assert!(k.command.w.abs() <= m.angular_velocity + 1e-12);
            // profiled ticks always push toward the goal; only the creep-speed
            // correction may back off an overshoot
            let against = match cmd.kind {
                ActionKind::MoveForward => k.command.v < 0.0 || k.command.w != 0.0,
                ActionKind::MoveBackward => k.command.v > 0.0 || k.command.w != 0.0,
                ActionKind::TurnLeft => k.command.w < 0.0 || k.command.v != 0.0,
                _ => k.command.w > 0.0 || k.command.v != 0.0,
            };
            if against {
                prop_assert!(k.phase.is_none());
                prop_assert!(k.command.v.abs() <= m.creep_linear + 1e-12 && k.command.w.abs() <= creep_w + 1e-12);
            }
        }
    }
}

#[test]
fn profiled_ticks_never_reverse_without_noise() {
    let world = Arc::new(common::open_room(12.0));
    let stack = Stack::launch(Arc::clone(&world), world.starts[0], &StackConfig::default()).unwrap();
    for cmd in [
        DiscreteAction::left(30.0),
        DiscreteAction::right(30.0),
        DiscreteAction::backward(0.25),
        DiscreteAction::forward(0.25),
    ] {
        let (r, trace) = stack.controller().execute_traced(cmd);
        assert!(r.success);
        for k in &trace {
            match cmd.kind {
                ActionKind::TurnLeft => assert!(k.command.w >= 0.0),
                ActionKind::TurnRight => assert!(k.command.w <= 0.0),
                ActionKind::MoveBackward => assert!(k.command.v <= 0.0),
                _ => assert!(k.command.v >= 0.0),
            }
        }
    }
}

#[test]
fn wall_ahead_is_a_collision() {
    let world = Arc::new(common::room_with(4.0, Vec::new(), vec![Pose2D::new(3.6, 2.0, 0.0)]));
    let stack = Stack::launch(Arc::clone(&world), world.starts[0], &StackConfig::default()).unwrap();
    let r = stack.controller().execute(DiscreteAction::forward(0.25));
    assert!(!r.success);
    assert!(r.collision);
    assert_eq!(r.failure, Some(MoveFailure::Collision));
}

#[test]
fn stop_is_immediate() {
    let world = Arc::new(common::open_room(6.0));
    let stack = Stack::launch(Arc::clone(&world), world.starts[0], &StackConfig::default()).unwrap();
    let r = stack.controller().execute(DiscreteAction::stop());
    assert!(r.success);
    assert_eq!(r.actions_elapsed_time, 0.0);
}
