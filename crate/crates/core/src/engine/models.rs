//! Model handles: built-in synthetic models and external processes.

use std::f64::consts::{PI, SQRT_2};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::external::{ExternalCommand, ExternalProcess};
use super::ledger::BudgetLedger;
use super::sampling::SampleBatch;
use super::EngineError;
use crate::budget::TrainableSpec;
use crate::stats::ModelStats;

/// `f0(θ) = offset + a·θ` on the unit box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticHigh {
    pub weights: Vec<f64>,
    #[serde(default)]
    pub offset: f64,
}

impl SyntheticHigh {
    pub fn new(weights: Vec<f64>) -> Self {
        Self { weights, offset: 0.0 }
    }

    pub fn constant(d: usize, c: f64) -> Self {
        Self {
            weights: vec![0.0; d],
            offset: c,
        }
    }

    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    pub fn eval(&self, theta: &[f64]) -> f64 {
        self.offset + self.weights.iter().zip(theta).map(|(a, t)| a * t).sum::<f64>()
    }

    /// Exact mean under the uniform distribution on `[0,1]^d`.
    pub fn mean(&self) -> f64 {
        self.offset + self.weights.iter().sum::<f64>() / 2.0
    }

    pub fn variance(&self) -> f64 {
        self.weights.iter().map(|a| a * a).sum::<f64>() / 12.0
    }

    pub fn stats(&self) -> ModelStats {
        ModelStats::high_fidelity(self.variance().sqrt())
    }
}

/// `f_n(θ) = f0(θ) + τ·√2·cos(2πθ_1)`. The perturbation has mean 0, variance 1 and is
/// uncorrelated with `f0`, so `1 - ρ² = τ²/(σ0² + τ²) = gap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLowFi {
    pub high: SyntheticHigh,
    pub tau: f64,
    pub gap: f64,
    pub cost: f64,
    pub trained_with: Option<u64>,
}

impl SyntheticLowFi {
    /// Low-fidelity model with `1 - ρ² = gap` and virtual cost `cost`.
    pub fn from_gap(high: &SyntheticHigh, gap: f64, cost: f64) -> Result<Self, EngineError> {
        if !(0.0..1.0).contains(&gap) {
            return Err(EngineError::Model(format!(
                "accuracy gap 1 - ρ² = {gap} must lie in [0, 1)"
            )));
        }
        if !(cost > 0.0) {
            return Err(EngineError::Model(format!("cost must be positive, got {cost}")));
        }
        Ok(Self {
            high: high.clone(),
            tau: (high.variance() * gap / (1.0 - gap)).sqrt(),
            gap,
            cost,
            trained_with: None,
        })
    }

    pub fn from_stats(high: &SyntheticHigh, correlation: f64, cost: f64) -> Result<Self, EngineError> {
        Self::from_gap(high, 1.0 - correlation * correlation, cost)
    }

    pub fn eval(&self, theta: &[f64]) -> f64 {
        self.high.eval(theta) + self.tau * SQRT_2 * (2.0 * PI * theta[0]).cos()
    }

    pub fn correlation(&self) -> f64 {
        (1.0 - self.gap).sqrt()
    }

    pub fn stddev(&self) -> f64 {
        (self.high.variance() + self.tau * self.tau).sqrt()
    }

    pub fn stats(&self) -> ModelStats {
        ModelStats::new(self.cost, self.correlation(), self.stddev())
    }
}

/// Synthetic model realizing the rate bounds of `spec` exactly at `n` training samples:
/// `1 - ρ² = c_a r_a(n)` and virtual cost `c_c r_c(n)`.
pub fn synthetic_lowfi_train(high: &SyntheticHigh, spec: &TrainableSpec, n: u64) -> Result<SyntheticLowFi, EngineError> {
    let (gap, cost) = spec.predicted_gap_and_cost(n as f64);
    if gap >= 1.0 {
        return Err(EngineError::Model(format!(
            "accuracy bound c_a r_a({n}) = {gap} >= 1 is not informative"
        )));
    }
    let mut m = SyntheticLowFi::from_gap(high, gap, cost)?;
    m.trained_with = Some(n);
    Ok(m)
}

pub enum ModelKind {
    SyntheticHigh(SyntheticHigh),
    SyntheticLowFi(SyntheticLowFi),
    External(ExternalProcess),
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::SyntheticHigh(_) => "synthetic_high",
            ModelKind::SyntheticLowFi(_) => "synthetic_lowfi",
            ModelKind::External(_) => "external",
        }
    }
}

/// Where an evaluation is booked in the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Charge {
    Sampling,
    Pilot,
}

pub struct ModelHandle {
    pub label: String,
    pub kind: ModelKind,
    /// Cost per evaluation in high-fidelity units, used for allocation and the ledger.
    pub cost: f64,
    /// Wall-clock seconds of one high-fidelity evaluation, for normalizing external costs.
    pub high_fidelity_seconds: f64,
    /// Average reported cost per evaluation of the last external batch, normalized.
    pub measured_cost: Option<f64>,
    pub chunk_size: usize,
}

impl ModelHandle {
    pub fn synthetic_high(label: &str, model: SyntheticHigh) -> Self {
        Self::with_kind(label, ModelKind::SyntheticHigh(model), 1.0)
    }

    pub fn synthetic_lowfi(label: &str, model: SyntheticLowFi) -> Self {
        let cost = model.cost;
        Self::with_kind(label, ModelKind::SyntheticLowFi(model), cost)
    }

    pub fn external(label: &str, command: &ExternalCommand, cost: f64, high_fidelity_seconds: f64) -> Result<Self, EngineError> {
        let p = ExternalProcess::spawn(command).map_err(|e| EngineError::External {
            label: label.to_string(),
            index: None,
            msg: e.to_string(),
        })?;
        let mut h = Self::with_kind(label, ModelKind::External(p), cost);
        h.high_fidelity_seconds = high_fidelity_seconds;
        Ok(h)
    }

    fn with_kind(label: &str, kind: ModelKind, cost: f64) -> Self {
        Self {
            label: label.to_string(),
            kind,
            cost,
            high_fidelity_seconds: 1.0,
            measured_cost: None,
            chunk_size: 256,
        }
    }

    /// Exact statistics when the model is synthetic.
    pub fn exact_stats(&self) -> Option<ModelStats> {
        match &self.kind {
            ModelKind::SyntheticHigh(m) => Some(m.stats()),
            ModelKind::SyntheticLowFi(m) => Some(m.stats()),
            ModelKind::External(_) => None,
        }
    }

    /// Outputs on the first `m` inputs of `batch`, charged `m·cost` to `ledger`. The budget is
    /// checked before any evaluation.
    pub fn evaluate(&mut self, batch: &SampleBatch, m: usize, ledger: &mut BudgetLedger, charge: Charge) -> Result<Vec<f64>, EngineError> {
        if m > batch.len() {
            return Err(EngineError::Model(format!(
                "`{}` asked for {m} samples from a batch of {}",
                self.label,
                batch.len()
            )));
        }
        if charge == Charge::Sampling {
            ledger.reserve(&self.label, m as u64, self.cost)?;
        }
        let out = self.evaluate_rows(batch, m)?;
        match charge {
            Charge::Sampling => ledger.charge_sampling(&self.label, m as u64, self.cost)?,
            Charge::Pilot => ledger.charge_pilot(&self.label, m as u64, self.cost)?,
        }
        Ok(out)
    }

    /// Outputs on the first `m` inputs of `batch` without any ledger involvement.
    pub fn evaluate_rows(&mut self, batch: &SampleBatch, m: usize) -> Result<Vec<f64>, EngineError> {
        if m == 0 {
            return Ok(Vec::new());
        }
        let d = batch.dimension();
        let rows = batch.prefix(m);
        match &mut self.kind {
            ModelKind::SyntheticHigh(f) => {
                check_dim(&self.label, f.dimension(), d)?;
                Ok(rows.par_chunks_exact(d).map(|t| f.eval(t)).collect())
            }
            ModelKind::SyntheticLowFi(f) => {
                check_dim(&self.label, f.high.dimension(), d)?;
                Ok(rows.par_chunks_exact(d).map(|t| f.eval(t)).collect())
            }
            ModelKind::External(p) => {
                let mut out = Vec::with_capacity(m);
                let mut seconds = 0.0;
                let mut reported = true;
                let all: Vec<&[f64]> = rows.chunks_exact(d).collect();
                for (c, chunk) in all.chunks(self.chunk_size.max(1)).enumerate() {
                    let start = c * self.chunk_size.max(1);
                    let (o, s) = p.eval(chunk).map_err(|e| EngineError::External {
                        label: self.label.clone(),
                        index: Some(start),
                        msg: e.to_string(),
                    })?;
                    out.extend(o);
                    match s {
                        Some(s) => seconds += s,
                        None => reported = false,
                    }
                }
                if reported {
                    self.measured_cost = Some(seconds / m as f64 / self.high_fidelity_seconds);
                }
                Ok(out)
            }
        }
    }

    pub fn train_external(&mut self, n: u64, seed: u64) -> Result<f64, EngineError> {
        match &mut self.kind {
            ModelKind::External(p) => p.train(n, seed).map_err(|e| EngineError::External {
                label: self.label.clone(),
                index: None,
                msg: e.to_string(),
            }),
            _ => Err(EngineError::Model(format!("`{}` is not an external model", self.label))),
        }
    }
}

fn check_dim(label: &str, expected: usize, got: usize) -> Result<(), EngineError> {
    if expected != got {
        return Err(EngineError::Model(format!(
            "`{label}` has dimension {expected} but the inputs have dimension {got}"
        )));
    }
    Ok(())
}
