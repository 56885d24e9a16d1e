//! MC and MFMC mean estimators over one shared sample stream.

use std::hash::{Hash, Hasher};

use serde::Serialize;

use super::ledger::BudgetLedger;
use super::models::{Charge, ModelHandle};
use super::sampling::{draw_samples, Bounds, SampleBatch};
use super::EngineError;
use crate::allocate::Allocation;

/// Compensated (Neumaier) sum in iteration order.
pub fn neumaier_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub fn mean(xs: &[f64]) -> f64 {
    neumaier_sum(xs) / xs.len() as f64
}

/// Hash of the bit patterns of the first `m` inputs; equal fingerprints mean equal inputs.
pub fn fingerprint(batch: &SampleBatch, m: usize) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for x in batch.prefix(m) {
        x.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Plain MC mean of `model` over the first `m` estimator samples for `seed`.
pub fn mc_estimate(model: &mut ModelHandle, m: usize, seed: u64, bounds: &Bounds, ledger: &mut BudgetLedger) -> Result<f64, EngineError> {
    if m == 0 {
        return Err(EngineError::Model("MC needs at least one sample".into()));
    }
    let batch = draw_samples(seed, m, bounds)?;
    let y = model.evaluate(&batch, m, ledger, Charge::Sampling)?;
    Ok(mean(&y))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MfmcReport {
    pub estimate: f64,
    pub labels: Vec<String>,
    pub counts: Vec<u64>,
    pub coefficients: Vec<f64>,
    /// Mean of model `j` over its `m_j` samples.
    pub means: Vec<f64>,
    /// Mean of model `j ≥ 1` over the first `m_{j-1}` samples.
    pub means_previous: Vec<f64>,
    pub input_fingerprints: Vec<u64>,
    pub ledger: BudgetLedger,
}

/// `Ê = Ê_0(m_0) + Σ_j α_j (Ê_j(m_j) - Ê_j(m_{j-1}))`, where model `j` sees the first `m_j`
/// inputs of a single stream of length `m_k`.
pub fn mfmc_estimate(
    models: &mut [ModelHandle],
    allocation: &Allocation,
    seed: u64,
    bounds: &Bounds,
    ledger: &mut BudgetLedger,
) -> Result<MfmcReport, EngineError> {
    let counts = &allocation.counts;
    if counts.len() != models.len() || allocation.coefficients.len() + 1 != models.len() {
        return Err(EngineError::Model(format!(
            "{} models for {} counts and {} coefficients",
            models.len(),
            counts.len(),
            allocation.coefficients.len()
        )));
    }
    if counts[0] < 1 || counts.windows(2).any(|w| w[0] > w[1]) {
        return Err(EngineError::Model(format!("sample counts {counts:?} must be non-decreasing with m_0 >= 1")));
    }
    let total: f64 = counts.iter().zip(models.iter()).map(|(&m, h)| m as f64 * h.cost).sum();
    ledger.reserve("mfmc", 1, total)?;

    let m_last = *counts.last().unwrap() as usize;
    let batch = draw_samples(seed, m_last, bounds)?;
    let mut means = Vec::with_capacity(models.len());
    let mut means_previous = Vec::with_capacity(models.len() - 1);
    let mut input_fingerprints = Vec::with_capacity(models.len());
    let mut estimate = 0.0;
    for (j, model) in models.iter_mut().enumerate() {
        let m = counts[j] as usize;
        let y = model.evaluate(&batch, m, ledger, Charge::Sampling)?;
        input_fingerprints.push(fingerprint(&batch, m));
        let full = mean(&y);
        means.push(full);
        if j == 0 {
            estimate = full;
        } else {
            let prev = mean(&y[..counts[j - 1] as usize]);
            means_previous.push(prev);
            estimate += allocation.coefficients[j - 1] * (full - prev);
        }
    }
    Ok(MfmcReport {
        estimate,
        labels: models.iter().map(|m| m.label.clone()).collect(),
        counts: counts.clone(),
        coefficients: allocation.coefficients.clone(),
        means,
        means_previous,
        input_fingerprints,
        ledger: ledger.clone(),
    })
}
