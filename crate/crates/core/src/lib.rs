//! Bounded-confidence opinion dynamics with a manipulative agent group.
//!
//! The crate provides the Hegselmann–Krause, Deffuant–Weisbuch and three
//! weighted HK update rules, a closed-form oracle for the two-group HK case,
//! the mean/spread and primary-cluster metrics, and a deterministic parallel
//! sweep harness over group size and ramp duration.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod cli;
pub mod config;
pub mod error;
pub mod metrics;
pub mod models;
pub mod opinion;
pub mod output;
pub mod rng;
pub mod svg;
pub mod sweep;

pub use error::{Error, Result};
pub use models::{run_simulation, SnapshotPlan, StopReason, StopRule, Trajectory, WeightMatrix};
pub use opinion::{ManipulatorGroup, ModelKind, ModelSpec, OpinionState};
