//! Joint power allocation and trajectory design for pseudo-analog video
//! broadcast from a UAV.
//!
//! A UAV flies from a start point to a destination in `K` slots and multicasts
//! one group of pictures to ground users. Each slot carries one DCT block
//! (chunk) scaled by a transmit power. The crate maximizes the worst user's
//! PSNR under a total energy budget by alternating between a power
//! subproblem and a successive-convex-approximation trajectory subproblem.

pub mod bcd;
pub mod channel;
pub mod error;
pub mod harness;
pub mod kinematics;
pub mod pavt;
pub mod power;
pub mod quality;
pub mod rng;
pub mod scenario;
pub mod solver;
pub mod trajectory;

pub use error::{Error, Result};

/// Position, velocity or acceleration in metres (per second).
pub type Vec3 = nalgebra::Vector3<f64>;
