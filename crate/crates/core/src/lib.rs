//! Headless multirotor simulation core.
//!
//! The crate is split along the simulation pipeline:
//!
//! * [`dynamics`] – propeller model, force/torque allocation and the rigid
//!   body, integrated with classic fourth-order Runge–Kutta.
//! * [`control`] – resolves any of the nine command modalities down to
//!   per-motor desired angular velocities.
//! * [`worldgen`] – Perlin terrain cells, foliage, the visibility-driven cell
//!   lifecycle and ray queries against the live geometry.
//! * [`sensors`] – IMU, GNSS/barometer/magnetometer emulation and ray-cast
//!   LiDAR, depth and segmentation sensors.

// `!(x > 0.0)` style checks are used on purpose to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod dynamics;
pub mod math;
pub mod sensors;
pub mod worldgen;

pub use nalgebra::{Matrix3, Vector3};
