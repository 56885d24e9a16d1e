//! Full CA-MFMC run: train, measure, reallocate, estimate.

use serde::{Deserialize, Serialize};

use super::estimators::{mfmc_estimate, MfmcReport};
use super::external::ExternalCommand;
use super::ledger::BudgetLedger;
use super::models::{synthetic_lowfi_train, Charge, ModelHandle, SyntheticHigh};
use super::sampling::{derive_seed, draw_samples_on, Bounds, PILOT_STREAM};
use super::EngineError;
use crate::allocate::{analytic_mse, check_ordering, optimal_allocation, reorder_models, Allocation, DroppedModel, Hierarchy};
use crate::budget::{TrainableSpec, TrainingPlan};
use crate::stats::{pilot_stats, ModelStats, PilotMatrix};

/// Where the statistics used for the final allocation come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsSource {
    /// Post-training pilot run on a separate sample stream.
    Pilot,
    /// Rate-bound predictions of the plan.
    Predicted,
    /// Closed-form statistics (synthetic models only).
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions {
    pub stats_source: StatsSource,
    pub pilot_samples: usize,
    /// Charge pilot evaluations against the budget.
    pub charge_pilot: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            stats_source: StatsSource::Pilot,
            pilot_samples: 100,
            charge_pilot: false,
        }
    }
}

pub enum Trainer {
    Synthetic {
        high: SyntheticHigh,
        spec: TrainableSpec,
    },
    External {
        command: ExternalCommand,
        spec: TrainableSpec,
        high_fidelity_seconds: f64,
    },
}

impl Trainer {
    pub fn spec(&self) -> &TrainableSpec {
        match self {
            Trainer::Synthetic { spec, .. } | Trainer::External { spec, .. } => spec,
        }
    }
}

pub struct PipelineModels {
    pub bounds: Bounds,
    pub high: ModelHandle,
    pub statics: Vec<ModelHandle>,
    pub trainers: Vec<(String, Trainer)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabeledStats {
    pub label: String,
    pub stats: ModelStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaMfmcReport {
    pub estimate: f64,
    pub budget: f64,
    pub seed: u64,
    pub stats_source: StatsSource,
    pub training: Vec<(String, u64)>,
    pub predicted: Vec<LabeledStats>,
    pub realized: Vec<LabeledStats>,
    pub order: Vec<String>,
    pub reordered: bool,
    pub dropped: Vec<DroppedModel>,
    pub allocation: Allocation,
    pub analytic_mse: f64,
    pub mfmc: MfmcReport,
    pub ledger: BudgetLedger,
    pub warnings: Vec<String>,
}

fn labeled(labels: &[String], stats: &[ModelStats]) -> Vec<LabeledStats> {
    labels
        .iter()
        .zip(stats)
        .map(|(l, s)| LabeledStats {
            label: l.clone(),
            stats: *s,
        })
        .collect()
}

/// Trains every model of `plan` with its planned size, measures the resulting statistics,
/// reorders if the ordering condition fails, allocates the residual budget and runs MFMC.
/// `ledger` keeps the partial state when an error occurs.
pub fn run_ca_mfmc(
    plan: &TrainingPlan,
    models: PipelineModels,
    seed: u64,
    options: PipelineOptions,
    ledger: &mut BudgetLedger,
) -> Result<CaMfmcReport, EngineError> {
    let budget = plan.budget;
    if ledger.budget != budget {
        return Err(EngineError::Model(format!(
            "ledger budget {} does not match plan budget {budget}",
            ledger.budget
        )));
    }
    ledger.pilot_charged = options.charge_pilot;
    let PipelineModels {
        bounds,
        high,
        statics,
        mut trainers,
    } = models;
    let mut warnings = plan.warnings.clone();
    let mut handles = vec![high];
    handles.extend(statics);

    for (j, step) in plan.steps.iter().enumerate() {
        let Some(pos) = trainers.iter().position(|(l, _)| *l == step.label) else {
            return Err(EngineError::Model(format!("plan step `{}` has no trainable model", step.label)));
        };
        let (label, trainer) = trainers.remove(pos);
        ledger.charge_training(&label, step.n_feasible)?;
        let handle = match trainer {
            Trainer::Synthetic { high, spec } => {
                ModelHandle::synthetic_lowfi(&label, synthetic_lowfi_train(&high, &spec, step.n_feasible)?)
            }
            Trainer::External {
                command,
                spec,
                high_fidelity_seconds,
            } => {
                let cost = spec.cost.eval_unchecked(step.n_feasible as f64);
                let mut h = ModelHandle::external(&label, &command, cost, high_fidelity_seconds)?;
                h.train_external(step.n_feasible, derive_seed(seed, 100 + j as u64))?;
                h
            }
        };
        handles.push(handle);
    }
    for (label, _) in &trainers {
        warnings.push(format!("`{label}` was not placed by the plan and is left out"));
    }

    let labels: Vec<String> = handles.iter().map(|h| h.label.clone()).collect();
    let predicted: Vec<ModelStats> = labels
        .iter()
        .map(|l| {
            plan.order
                .iter()
                .position(|o| o == l)
                .map(|i| plan.predicted[i])
                .or_else(|| plan.dropped.iter().find(|d| d.label == *l).map(|d| d.stats))
                .ok_or_else(|| EngineError::Model(format!("no predicted statistics for `{l}`")))
        })
        .collect::<Result<_, _>>()?;

    let realized: Vec<ModelStats> = match options.stats_source {
        StatsSource::Predicted => predicted.clone(),
        StatsSource::Exact => handles
            .iter()
            .map(|h| {
                h.exact_stats()
                    .ok_or_else(|| EngineError::Model(format!("`{}` has no closed-form statistics", h.label)))
            })
            .collect::<Result<_, _>>()?,
        StatsSource::Pilot => {
            let n = options.pilot_samples;
            let batch = draw_samples_on(seed, PILOT_STREAM, n, &bounds)?;
            let mut columns = Vec::with_capacity(handles.len());
            for h in handles.iter_mut() {
                columns.push(h.evaluate(&batch, n, ledger, Charge::Pilot)?);
                if let Some(c) = h.measured_cost.filter(|_| h.label != labels[0]) {
                    h.cost = c;
                }
            }
            let outputs = (0..n).map(|i| columns.iter().map(|c| c[i]).collect()).collect();
            let inputs = batch.rows(n).map(|r| r.to_vec()).collect();
            let costs: Vec<f64> = handles.iter().map(|h| h.cost).collect();
            pilot_stats(&PilotMatrix::new(inputs, outputs)?, &costs)?
        }
    };

    let mut reordered = false;
    let mut dropped = Vec::new();
    let hierarchy = if check_ordering(&realized).is_empty() {
        Hierarchy::new(realized.clone(), labels.clone())?
    } else {
        let r = reorder_models(&realized, &labels);
        reordered = r.hierarchy.labels() != labels.as_slice();
        for d in &r.dropped {
            warnings.push(format!("`{}` dropped after training: {}", d.label, d.reason));
        }
        if reordered {
            warnings.push(format!("hierarchy reordered after training to {}", r.hierarchy.labels().join(", ")));
        }
        dropped = r.dropped;
        r.hierarchy
    };
    let mut ordered: Vec<ModelHandle> = Vec::with_capacity(hierarchy.labels().len());
    for l in hierarchy.labels() {
        let i = handles.iter().position(|h| h.label == *l).expect("hierarchy labels come from the handles");
        ordered.push(handles.swap_remove(i));
    }

    let residual = ledger.remaining();
    let allocation = optimal_allocation(&hierarchy, residual)?;
    let spent = budget - residual;
    let mse = analytic_mse(&hierarchy, budget, spent)?;
    let mfmc = mfmc_estimate(&mut ordered, &allocation, seed, &bounds, ledger)?;

    Ok(CaMfmcReport {
        estimate: mfmc.estimate,
        budget,
        seed,
        stats_source: options.stats_source,
        training: ledger.training.clone(),
        predicted: labeled(&labels, &predicted),
        realized: labeled(&labels, &realized),
        order: hierarchy.labels().to_vec(),
        reordered,
        dropped,
        allocation,
        analytic_mse: mse,
        mfmc,
        ledger: ledger.clone(),
        warnings,
    })
}
