//! Budget bookkeeping in units of high-fidelity evaluations.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LedgerError {
    #[error("budget refused: charging {cost} for `{label}` would exceed the budget ({spent} of {budget} spent)")]
    Refused {
        label: String,
        cost: f64,
        spent: f64,
        budget: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelTally {
    pub label: String,
    pub evaluations: u64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetLedger {
    pub budget: f64,
    pub spent_training: f64,
    pub spent_sampling: f64,
    /// Pilot evaluations used to measure post-training statistics.
    pub spent_pilot: f64,
    /// Whether pilot cost counts against the budget.
    pub pilot_charged: bool,
    pub training: Vec<(String, u64)>,
    pub models: Vec<ModelTally>,
}

// absorbs rounding of the sequential sums against a budget computed in one expression
const SLACK: f64 = 1e-12;

impl BudgetLedger {
    pub fn new(budget: f64) -> Self {
        Self {
            budget,
            spent_training: 0.0,
            spent_sampling: 0.0,
            spent_pilot: 0.0,
            pilot_charged: false,
            training: Vec::new(),
            models: Vec::new(),
        }
    }

    pub fn spent(&self) -> f64 {
        self.spent_training + self.spent_sampling + if self.pilot_charged { self.spent_pilot } else { 0.0 }
    }

    pub fn remaining(&self) -> f64 {
        self.budget - self.spent()
    }

    fn check(&self, label: &str, cost: f64) -> Result<(), LedgerError> {
        if self.spent() + cost > self.budget * (1.0 + SLACK) {
            return Err(LedgerError::Refused {
                label: label.to_string(),
                cost,
                spent: self.spent(),
                budget: self.budget,
            });
        }
        Ok(())
    }

    /// Charges `n` high-fidelity evaluations (cost `n·w_0 = n`) for training `label`.
    pub fn charge_training(&mut self, label: &str, n: u64) -> Result<(), LedgerError> {
        self.check(label, n as f64)?;
        self.spent_training += n as f64;
        self.training.push((label.to_string(), n));
        Ok(())
    }

    /// Checks that `m` evaluations at cost `w` fit without charging them.
    pub fn reserve(&self, label: &str, m: u64, w: f64) -> Result<(), LedgerError> {
        self.check(label, m as f64 * w)
    }

    pub fn charge_sampling(&mut self, label: &str, m: u64, w: f64) -> Result<(), LedgerError> {
        let cost = m as f64 * w;
        self.check(label, cost)?;
        self.spent_sampling += cost;
        self.tally(label, m, cost);
        Ok(())
    }

    pub fn charge_pilot(&mut self, label: &str, m: u64, w: f64) -> Result<(), LedgerError> {
        let cost = m as f64 * w;
        if self.pilot_charged {
            self.check(label, cost)?;
        }
        self.spent_pilot += cost;
        Ok(())
    }

    fn tally(&mut self, label: &str, m: u64, cost: f64) {
        match self.models.iter_mut().find(|t| t.label == label) {
            Some(t) => {
                t.evaluations += m;
                t.cost += cost;
            }
            None => self.models.push(ModelTally {
                label: label.to_string(),
                evaluations: m,
                cost,
            }),
        }
    }

    pub fn evaluations(&self, label: &str) -> u64 {
        self.models.iter().find(|t| t.label == label).map_or(0, |t| t.evaluations)
    }
}
