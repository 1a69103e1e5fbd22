//! Hill-type muscle-driven, tendon-routed arm simulation with a model-free
//! data-driven iterative learning controller.
//!
//! * [`muscle`]: activation dynamics, force-length/velocity curves, tendon
//!   elasticity and the fiber/tendon equilibrium step.
//! * [`arm`]: DH serial chain, moment-arm routing, kinematics, redundancy
//!   resolution and forward dynamics.
//! * [`ddilc`]: compact-form dynamic linearization estimator, gradient
//!   feedback-gain update and iteration-axis feedforward learning.
//! * [`harness`]: trajectories, trials, learning runs, disturbance sweeps,
//!   the PID baseline, metrics and the low-pass test.
//! * [`config`] and [`cli`]: experiment files and command dispatch.

pub mod arm;
pub mod cli;
pub mod config;
pub mod ddilc;
pub mod error;
pub mod harness;
pub mod muscle;

pub use error::{Error, Result};
