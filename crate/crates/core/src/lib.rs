//! Clipped stochastic gradient methods for nonsmooth composite convex
//! optimization under heavy-tailed gradient noise.
//!
//! The crate bundles the two solvers ([`algorithms`]), their stepsize and
//! clipping-threshold schedules ([`schedules`]), the noise models and
//! effective-dimension calculators ([`noise`]), clipping-error verifiers
//! ([`clipping`]), the discrete hard instances used for lower bounds
//! ([`hardness`]) and a seeded experiment harness ([`harness`]) driven by
//! JSON configurations ([`config`], [`cli`]).

pub mod algorithms;
pub mod cli;
pub mod clipping;
pub mod config;
pub mod error;
pub mod ext_real;
pub mod hardness;
pub mod harness;
pub mod linalg;
pub mod noise;
pub mod problems;
pub mod schedules;
pub(crate) mod vecops;

pub use error::{Error, Result};

pub use algorithms::{run_clipped_sgd, run_stabilized_clipped_sgd, Averaging, RecordStride, Trajectory};
pub use clipping::{clip, clip_bounds, ClipErrorReport};
pub use hardness::{HardInstance, HardKind, HardRegime};
pub use noise::{GradOracle, NoiseSpec, OracleKind, StableParams};
pub use problems::{CompositeObjective, Domain, FKind, RKind};
pub use schedules::{Regime, Schedule, ScheduleParams};
