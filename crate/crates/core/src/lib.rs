//! Quadrotor gate-traversal simulation: rigid-body plant, sensor chain,
//! INDI and PID velocity trackers.

// parameter checks are written `!(x > 0.0)` on purpose so NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod rigid_body;
pub mod signal_chain;
pub mod gates;
pub mod wind;
pub mod seeding;
pub mod config;
pub mod env;
pub mod log;
pub mod metrics;
pub mod policy;
pub mod runner;
