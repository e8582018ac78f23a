//! Distributed adaptive leader-following control of networked
//! Euler-Lagrange agents over switching digraphs.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod controller;
pub mod error;
pub mod graph;
pub mod integrator;
pub mod leader;
pub mod observer;
pub mod plant;
pub mod scenario;

pub use error::{Error, Result};
pub use graph::{SwitchingNetwork, SwitchingSignal, WeightedDigraph};
pub use integrator::{simulate, IntegratorConfig, TrajectoryLog};
pub use leader::LeaderSystem;
pub use scenario::{builtin_example, Scenario};
