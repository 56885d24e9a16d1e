//! Estimator execution: shared samples, model evaluation, budget ledger and the MC, MFMC
//! and CA-MFMC estimators.

pub mod estimators;
pub mod external;
pub mod ledger;
pub mod models;
pub mod pipeline;
pub mod sampling;

use thiserror::Error;

pub use estimators::{mc_estimate, mfmc_estimate, MfmcReport};
pub use ledger::BudgetLedger;
pub use models::{synthetic_lowfi_train, ModelHandle, SyntheticHigh, SyntheticLowFi};
pub use pipeline::{run_ca_mfmc, CaMfmcReport, PipelineModels, PipelineOptions, StatsSource, Trainer};
pub use sampling::{draw_samples, Bounds, SampleBatch};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Sampling(#[from] sampling::SamplingError),
    #[error(transparent)]
    Ledger(#[from] ledger::LedgerError),
    #[error(transparent)]
    Alloc(#[from] crate::allocate::AllocError),
    #[error(transparent)]
    Stats(#[from] crate::stats::StatsError),
    #[error("model error: {0}")]
    Model(String),
    #[error("external model `{label}` failed{}: {msg}", index.map(|i| format!(" at sample {i}")).unwrap_or_default())]
    External {
        label: String,
        index: Option<usize>,
        msg: String,
    },
}
