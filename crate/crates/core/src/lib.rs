//! Flow-matching trajectory generation with hard safety constraints.
//!
//! A conditional vector field is trained to transport standard-normal noise
//! onto planar trajectories. During sampling, a minimum-norm correction is
//! added to the learned velocity so each waypoint satisfies a barrier
//! condition whose gain blows up as flow time approaches 1, and a terminal
//! projection makes the returned trajectory safe.
//!
//! | module | contents |
//! |---|---|
//! | [`trajectory`] | stacked waypoint vectors, waypoint selection, class labels |
//! | [`constraint`] | safety functions and their waypoint masks |
//! | [`dataset`] | Bezier trajectory dataset and its CSV format |
//! | [`model`] | MLP vector field, flow-matching loss, training, checkpoints |
//! | [`flow`] | Euler / RK4 sampler with a pluggable regularizer |
//! | [`barrier`] | phi schedules, closed-form and QP regularizers, terminal filter |
//! | [`qp`] | active-set solver for the slack-relaxed barrier QP |
//! | [`eval`] | accuracy / violation metrics and the FM vs safe-FM comparison |
//! | [`config`], [`commands`], [`plot`] | JSON config, command implementations, SVG output |
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod barrier;
pub mod commands;
pub mod config;
pub mod constraint;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod flow;
pub mod model;
pub mod plot;
pub mod qp;
pub mod rng;
pub mod trajectory;

pub use barrier::{
    closed_form_u, compute_a_b, phi, regularize_step_composite, regularize_step_single, terminal_filter,
    ClosedFormRegularizer, CompositeRegularizer, PhiSchedule, StepCertificate,
};
pub use constraint::{Barrier, Constraint, DiskBarrier, DiskKind, WaypointMask};
pub use error::{Error, Result};
pub use flow::{batch_sample, integrate, FlowRun, NullRegularizer, Regularizer, RunConfig, Solver, VelocityField};
pub use model::{ModelConfig, TrainConfig, VectorField};
pub use trajectory::{ClassLabel, Trajectory, WaypointSelector};
