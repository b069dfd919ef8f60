//! Robust estimation in high dimensions by spectral filtering.
//!
//! The crate learns Gaussians, binary product distributions, and mixtures of
//! two binary products from samples of which an `ε` fraction were replaced by
//! an adversary. Each learner repeatedly either certifies its current moment
//! estimates or finds a direction (or degree-2 polynomial) along which the
//! samples have a heavier tail than the model allows, and removes that tail.
//!
//! Alongside the learners live the adversaries used to test them, baseline
//! estimators, a hypothesis-selection tournament, and a benchmark harness.

pub mod adversary;
pub mod baselines;
pub mod convex;
pub mod distances;
pub mod error;
pub mod filter;
pub mod gaussian;
pub mod harness;
pub mod linalg;
pub mod mixture;
pub mod models;
pub mod product;
pub mod rng;
pub mod samples;
pub mod selftest;
pub mod tournament;

pub use error::{Error, Result};
pub use filter::{Diagnostics, FilterConfig, FilterOutcome, Fit, StepKind, StepRecord, StepResult};
pub use linalg::{EvenQuadratic, WeightVector};
pub use models::{
    log_density, round_model_to_grid, sample_model, BinaryProductModel, GaussianModel, Model,
    ProductMixtureModel,
};
pub use rng::Seed;
pub use samples::{Census, SampleSet};
