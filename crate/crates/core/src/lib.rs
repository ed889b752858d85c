//! Estimation of small failure probabilities for monotone limit-state
//! functions on the unit cube.
//!
//! Points of `[0,1]^d` whose signature is known (failure or safe) dominate
//! whole orthants, which yields certain bounds `p- <= p <= p+`. The engine
//! samples uniformly in the non-dominated region, tightens the bounds after
//! every call, and the estimator turns the signature sequence into a
//! maximum-likelihood estimate. A monotone neural surrogate fitted on the
//! design drives a bootstrap bias correction.

// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod distributions;
pub mod engine;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod harness;
pub mod problems;
pub mod rng;
pub mod surrogate;
pub mod volume;

pub use engine::{run, EngineConfig, Trajectory};
pub use error::{Error, Result};
pub use estimator::{estimate, mle, Estimate, EstimatorConfig, LikelihoodData, MleFit, MleStatus};
pub use geometry::{dominates, Antichain, FrontierPair, Point, Region, Side};
pub use problems::{hydraulic_problem, toy_problem, HydraulicVersion, LimitState, MonotoneProblem};
pub use volume::{bounds, klee_volume, BoundsPair, VolumePolicy};
pub use bootstrap::{bootstrap_run, corrected_estimate, BootstrapConfig, BootstrapReport};
pub use surrogate::{train, MinMaxNetwork, TrainConfig};
