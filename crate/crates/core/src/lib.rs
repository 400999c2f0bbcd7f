//! Software-in-the-loop stack for autonomous quadrotor take-off, tracking and
//! landing on a moving ground platform.
//!
//! The crate is split by subsystem:
//!
//! - [`geometry`]: frames, ZYX Euler angles, rigid transforms
//! - [`vehicle`]: rigid-body dynamics, RK4 integration, cascaded controller
//! - [`world`]: occupancy grid with inflation, raycasts, the moving platform
//! - [`perception`]: pinhole camera, nested marker pad, PnP relative pose
//! - [`planner`]: B-spline local planner with anchor-based collision cost
//! - [`mission`]: take-off / track / land state machine
//! - [`sim`]: scenario config, the simulation loop, metrics and file outputs

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod geometry;
pub mod vehicle;
pub mod world;
pub mod perception;
pub mod planner;
pub mod mission;
pub mod sim;
