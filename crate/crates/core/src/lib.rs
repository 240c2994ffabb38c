//! Simulation of a two-degree-of-freedom ball joint driven by four
//! antagonistic, self-sensing electrohydraulic muscles.
//!
//! The crate covers the joint kinematics and tendon mapping, the muscle and
//! rigid-body plant, the capacitive sensing chain, a tendon-space PID
//! controller, the polynomial voltage-to-pose estimator, reference
//! trajectories and an episode harness that ties them together.

// `!(x > 0.0)` is the NaN-rejecting form used throughout for validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod harness;
pub mod plant;
pub mod signal;
pub mod trajectory;

pub use error::{Error, Result};
