//! Desk-scale object-goal navigation stack.
//!
//! A message bus wires four nodes together: the base driver (`robot_api`),
//! the camera (`camera_api`), the discrete motion controller
//! (`discrete_move`) and the navigation loop (`vsn_core`). Policies plug into
//! the loop; `eval` runs episode suites and scores them.

pub mod bus;
pub mod camera_api;
pub mod cli;
pub mod config;
pub mod discrete_move;
pub mod eval;
pub mod geometry;
pub mod messages;
pub mod planner;
pub mod policies;
pub mod robot_api;
pub mod sim_world;
pub mod stack;
pub mod vsn_core;
