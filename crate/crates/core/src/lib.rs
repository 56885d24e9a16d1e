//! Context-aware multi-fidelity Monte Carlo estimation.
//!
//! The crate is organized bottom-up:
//!
//! - [`rates`]: accuracy and cost rate models `c·r(n)` and their regression from pilot runs.
//! - [`stats`]: pilot statistics (cost, correlation, standard deviation) and replicate MSE.
//! - [`allocate`]: ordering checks, closed-form MFMC sample allocation, analytic MSE and
//!   model-subset selection.
//! - [`budget`]: the training/sampling trade-off, i.e. the per-model objective, convexity
//!   certificate, integer minimizer, saturation bound and sequential hierarchy construction.
//! - [`engine`]: sampling, model evaluation (synthetic and external processes), budget
//!   ledger and the MC / MFMC / CA-MFMC estimators.
//! - [`cli`]: configuration and the `fit`, `plan`, `estimate`, `benchmark` and `select`
//!   subcommands.

pub mod allocate;
pub mod budget;
pub mod cli;
pub mod engine;
pub mod numfmt;
pub mod rates;
pub mod stats;

pub use allocate::{Allocation, Hierarchy};
pub use budget::{ObjectiveContext, TrainableSpec, TrainingPlan};
pub use rates::{Family, RateModel, Role};
pub use stats::ModelStats;
