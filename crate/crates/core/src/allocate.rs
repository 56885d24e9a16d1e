//! Static MFMC machinery: ordering checks, closed-form sample allocation, analytic MSE and
//! analytic-MSE model selection.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::budget::{build_hierarchy, PlanOptions, TrainableSpec};
use crate::numfmt::fmt17;
use crate::stats::ModelStats;

#[derive(Debug, Error, PartialEq)]
pub enum AllocError {
    #[error("invalid hierarchy: {0}")]
    InvalidHierarchy(String),
    #[error("ordering condition violated: {0}")]
    Ordering(String),
    #[error("budget {budget} too small: the closed form gives m_0 = {m0} < 1")]
    InfeasibleBudget { budget: f64, m0: f64 },
    #[error("degenerate hierarchy: {0}")]
    Degenerate(String),
    #[error("budget {budget} does not exceed training cost {training_spent}")]
    BudgetBelowTraining { budget: f64, training_spent: f64 },
    #[error("selection failed: {0}")]
    Selection(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingCondition {
    /// Model 0 is not a high-fidelity model (cost 1, correlation 1).
    HighFidelity,
    /// `|ρ_{j-1}| > |ρ_j|` fails.
    Correlation,
    /// `w_{j-1}/w_j > (ρ_{j-1}² - ρ_j²)/(ρ_j² - ρ_{j+1}²)` fails.
    CostRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingViolation {
    pub index: usize,
    pub condition: OrderingCondition,
    /// Left and right side of the failed inequality.
    pub lhs: f64,
    pub rhs: f64,
}

impl fmt::Display for OrderingViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let j = self.index;
        match self.condition {
            OrderingCondition::HighFidelity => write!(f, "model 0 must have cost 1 and correlation 1"),
            OrderingCondition::Correlation => write!(
                f,
                "non-strict correlation ordering at j={j} (|ρ_{}| = {} <= |ρ_{j}| = {})",
                j - 1,
                self.lhs,
                self.rhs
            ),
            OrderingCondition::CostRatio => write!(
                f,
                "cost-ratio condition fails at j={j} (w_{}/w_{j} = {} <= {})",
                j - 1,
                self.lhs,
                self.rhs
            ),
        }
    }
}

/// Every violated index of the ordering condition, with the inequality that failed.
pub fn check_ordering(stats: &[ModelStats]) -> Vec<OrderingViolation> {
    let mut out = Vec::new();
    let Some(hf) = stats.first() else { return out };
    if hf.cost != 1.0 || hf.correlation != 1.0 {
        out.push(OrderingViolation {
            index: 0,
            condition: OrderingCondition::HighFidelity,
            lhs: hf.cost,
            rhs: hf.correlation,
        });
    }
    let k = stats.len() - 1;
    let r2 = |j: usize| if j > k { 0.0 } else { stats[j].correlation.powi(2) };
    for j in 1..=k {
        let (prev, cur) = (stats[j - 1].correlation.abs(), stats[j].correlation.abs());
        if !(prev > cur) {
            out.push(OrderingViolation {
                index: j,
                condition: OrderingCondition::Correlation,
                lhs: prev,
                rhs: cur,
            });
        }
    }
    for j in 1..=k {
        let den = r2(j) - r2(j + 1);
        // a correlation violation at j+1 already covers a non-positive denominator
        if !(den > 0.0) && j < k {
            continue;
        }
        let lhs = stats[j - 1].cost / stats[j].cost;
        let rhs = if den > 0.0 { (r2(j - 1) - r2(j)) / den } else { f64::INFINITY };
        if !(lhs > rhs) {
            out.push(OrderingViolation {
                index: j,
                condition: OrderingCondition::CostRatio,
                lhs,
                rhs,
            });
        }
    }
    out.sort_by_key(|v| v.index);
    out
}

/// Ordered models, high-fidelity first, satisfying the ordering condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hierarchy {
    stats: Vec<ModelStats>,
    labels: Vec<String>,
}

impl Hierarchy {
    pub fn new(stats: Vec<ModelStats>, labels: Vec<String>) -> Result<Self, AllocError> {
        if stats.is_empty() {
            return Err(AllocError::InvalidHierarchy("no models".into()));
        }
        if stats.len() != labels.len() {
            return Err(AllocError::InvalidHierarchy(format!(
                "{} stats but {} labels",
                stats.len(),
                labels.len()
            )));
        }
        for (s, l) in stats.iter().zip(&labels) {
            s.validate().map_err(|e| AllocError::InvalidHierarchy(format!("`{l}`: {e}")))?;
        }
        let v = check_ordering(&stats);
        if !v.is_empty() {
            let msg = v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
            return Err(AllocError::Ordering(msg));
        }
        Ok(Self { stats, labels })
    }

    /// Labels `f0, f1, …`.
    pub fn unlabeled(stats: Vec<ModelStats>) -> Result<Self, AllocError> {
        let labels = (0..stats.len()).map(|j| format!("f{j}")).collect();
        Self::new(stats, labels)
    }

    pub fn high_fidelity_only(stddev: f64) -> Self {
        Self {
            stats: vec![ModelStats::high_fidelity(stddev)],
            labels: vec!["f0".into()],
        }
    }

    pub fn stats(&self) -> &[ModelStats] {
        &self.stats
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Number of low-fidelity models `k`.
    pub fn k(&self) -> usize {
        self.stats.len() - 1
    }

    /// `(Σ_j sqrt(w_j (ρ_j² - ρ_{j+1}²)))²`, the budget-free factor of the analytic MSE.
    pub fn mse_factor(&self) -> f64 {
        let s = &self.stats;
        let r2 = |j: usize| s.get(j).map_or(0.0, |m| m.correlation.powi(2));
        let sum: f64 = (0..s.len()).map(|j| (s[j].cost * (r2(j) - r2(j + 1))).sqrt()).sum();
        sum * sum
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedModel {
    pub label: String,
    pub stats: ModelStats,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reordering {
    pub hierarchy: Hierarchy,
    pub dropped: Vec<DroppedModel>,
}

/// Sorts the low-fidelity models by decreasing `|ρ|` (stable) and adds them one by one,
/// dropping every model whose inclusion would violate the ordering condition.
pub fn reorder_models(stats: &[ModelStats], labels: &[String]) -> Reordering {
    assert_eq!(stats.len(), labels.len(), "stats and labels must align");
    assert!(!stats.is_empty(), "the high-fidelity model is required");
    let mut idx: Vec<usize> = (1..stats.len()).collect();
    idx.sort_by(|&a, &b| stats[b].correlation.abs().total_cmp(&stats[a].correlation.abs()));

    let mut kept_stats = vec![ModelStats::high_fidelity(stats[0].stddev)];
    let mut kept_labels = vec![labels[0].clone()];
    let mut dropped = Vec::new();
    for i in idx {
        let s = stats[i];
        let reason = if let Err(e) = s.validate() {
            Some(e)
        } else if s.correlation.abs() >= 1.0 {
            Some("correlation 1 with the high-fidelity model is degenerate".to_string())
        } else {
            kept_stats.push(s);
            let v = check_ordering(&kept_stats);
            if v.is_empty() {
                None
            } else {
                kept_stats.pop();
                Some(v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))
            }
        };
        match reason {
            None => kept_labels.push(labels[i].clone()),
            Some(reason) => dropped.push(DroppedModel {
                label: labels[i].clone(),
                stats: s,
                reason,
            }),
        }
    }
    Reordering {
        hierarchy: Hierarchy {
            stats: kept_stats,
            labels: kept_labels,
        },
        dropped,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Allocation {
    /// Integer sample counts `m_0 ≤ m_1 ≤ … ≤ m_k`.
    pub counts: Vec<u64>,
    /// Real-valued counts before integerization.
    pub real_counts: Vec<f64>,
    /// Control-variate coefficients `α_1..α_k`.
    pub coefficients: Vec<f64>,
    /// Analytic MSE from the real-valued counts.
    pub analytic_mse: f64,
    pub budget: f64,
    /// `Σ m_j w_j` of the integer counts.
    pub realized_cost: f64,
}

/// Closed-form optimal allocation of `budget` (in high-fidelity evaluations) to the models
/// of `h`, integerized so that the realized cost never exceeds the budget.
pub fn optimal_allocation(h: &Hierarchy, budget: f64) -> Result<Allocation, AllocError> {
    let s = &h.stats;
    let k = h.k();
    if !(budget > 0.0) || !budget.is_finite() {
        return Err(AllocError::InfeasibleBudget { budget, m0: 0.0 });
    }
    if !(s[0].stddev > 0.0) {
        return Err(AllocError::Degenerate("high-fidelity standard deviation is zero".into()));
    }
    if k >= 1 && s[1].correlation.abs() >= 1.0 {
        return Err(AllocError::Degenerate("ρ_1 = 1 gives a zero-variance control variate".into()));
    }
    if let Some(j) = (1..=k).find(|&j| !(s[j].stddev > 0.0)) {
        return Err(AllocError::Degenerate(format!("model {j} has zero standard deviation")));
    }
    let r2 = |j: usize| if j > k { 0.0 } else { s[j].correlation.powi(2) };
    let a0 = 1.0 - r2(1);
    let ratios: Vec<f64> = (0..=k)
        .map(|j| if j == 0 { 1.0 } else { (s[0].cost * (r2(j) - r2(j + 1)) / (s[j].cost * a0)).sqrt() })
        .collect();
    let unit_cost: f64 = (0..=k).map(|j| s[j].cost * ratios[j]).sum();
    let m0 = budget / unit_cost;
    if m0 < 1.0 {
        return Err(AllocError::InfeasibleBudget { budget, m0 });
    }
    let real_counts: Vec<f64> = ratios.iter().map(|r| m0 * r).collect();

    let mut counts = Vec::with_capacity(k + 1);
    for (j, &m) in real_counts.iter().enumerate() {
        let c = if j == 0 { (m.floor() as u64).max(1) } else { (m.floor() as u64).max(counts[j - 1]) };
        counts.push(c);
    }
    let cost_of = |c: &[u64]| c.iter().zip(s).map(|(&m, st)| m as f64 * st.cost).sum::<f64>();
    let mut realized_cost = cost_of(&counts);
    let wk = s[k].cost;
    if realized_cost + wk <= budget {
        let extra = ((budget - realized_cost) / wk).floor() as u64;
        counts[k] += extra;
        realized_cost = cost_of(&counts);
        // guard against rounding in the division
        while realized_cost > budget {
            counts[k] -= 1;
            realized_cost = cost_of(&counts);
        }
    }

    let coefficients = (1..=k).map(|j| s[j].correlation * s[0].stddev / s[j].stddev).collect();
    Ok(Allocation {
        counts,
        real_counts,
        coefficients,
        analytic_mse: s[0].variance() / budget * h.mse_factor(),
        budget,
        realized_cost,
    })
}

/// `σ_0² / (budget - training_spent) · (Σ_j sqrt(w_j (ρ_j² - ρ_{j+1}²)))²`.
pub fn analytic_mse(h: &Hierarchy, budget: f64, training_spent: f64) -> Result<f64, AllocError> {
    if !(budget > training_spent) || training_spent < 0.0 {
        return Err(AllocError::BudgetBelowTraining { budget, training_spent });
    }
    Ok(h.stats[0].variance() / (budget - training_spent) * h.mse_factor())
}

/// Variance of the MFMC estimator for real counts `m` and the optimal coefficients:
/// `σ_0²/m_0 - Σ_j (1/m_{j-1} - 1/m_j) ρ_j² σ_0²`.
pub fn mfmc_variance(h: &Hierarchy, counts: &[f64]) -> f64 {
    let s = &h.stats;
    let v0 = s[0].variance();
    let mut v = v0 / counts[0];
    for j in 1..s.len() {
        v -= (1.0 / counts[j - 1] - 1.0 / counts[j]) * s[j].correlation.powi(2) * v0;
    }
    v
}

/// A selection candidate: measured static model or trainable model with rate bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Candidate {
    Static(ModelStats),
    Trainable(TrainableSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionRow {
    pub subset: String,
    pub budget: f64,
    pub analytic_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedSubset {
    pub rank: usize,
    pub subset: String,
    /// Hierarchy order used for the analytic MSE.
    pub order: Vec<String>,
    pub budget: f64,
    pub analytic_mse: f64,
    /// Training sizes of the trainable members at the largest budget.
    pub training: Vec<(String, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcludedSubset {
    pub subset: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub rows: Vec<SelectionRow>,
    pub ranking: Vec<RankedSubset>,
    pub excluded: Vec<ExcludedSubset>,
}

impl Selection {
    /// CSV `subset,budget,analytic_mse`.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["subset", "budget", "analytic_mse"])?;
        for r in &self.rows {
            w.write_record([r.subset.as_str(), &fmt17(r.budget), &fmt17(r.analytic_mse)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn rank_of(&self, subset: &str) -> Option<usize> {
        self.ranking.iter().find(|r| r.subset == subset).map(|r| r.rank)
    }
}

struct SubsetOutcome {
    rows: Vec<SelectionRow>,
    ranked: Option<RankedSubset>,
    excluded: Option<ExcludedSubset>,
}

fn evaluate_subset(
    high_fi: (&str, ModelStats),
    members: &[&(String, Candidate)],
    name: &str,
    budgets: &[f64],
    largest: f64,
) -> SubsetOutcome {
    let mut statics: Vec<(String, ModelStats)> = Vec::new();
    let mut trainables: Vec<(String, TrainableSpec)> = Vec::new();
    for (label, c) in members {
        match c {
            Candidate::Static(s) => statics.push((label.clone(), *s)),
            Candidate::Trainable(t) => trainables.push((label.clone(), t.clone())),
        }
    }
    statics.sort_by(|a, b| b.1.correlation.abs().total_cmp(&a.1.correlation.abs()));

    let mut rows = Vec::new();
    let mut ranked = None;
    let mut excluded = None;
    for &p in budgets {
        let outcome = build_hierarchy(high_fi, &statics, &trainables, p, PlanOptions::default())
            .map_err(|e| e.to_string())
            .and_then(|plan| {
                if let Some(d) = plan.dropped.first() {
                    return Err(format!("`{}` violates the ordering condition: {}", d.label, d.reason));
                }
                if !plan.complete {
                    return Err(plan.warnings.join("; "));
                }
                let h = Hierarchy::new(plan.predicted.clone(), plan.order.clone()).map_err(|e| e.to_string())?;
                let mse = analytic_mse(&h, p, plan.training_spent).map_err(|e| e.to_string())?;
                Ok((plan, mse))
            });
        match outcome {
            Ok((plan, mse)) => {
                rows.push(SelectionRow {
                    subset: name.to_string(),
                    budget: p,
                    analytic_mse: mse,
                });
                if p == largest {
                    ranked = Some(RankedSubset {
                        rank: 0,
                        subset: name.to_string(),
                        order: plan.order.clone(),
                        budget: p,
                        analytic_mse: mse,
                        training: plan.steps.iter().map(|s| (s.label.clone(), s.n_feasible)).collect(),
                    });
                }
            }
            Err(reason) if p == largest => {
                excluded = Some(ExcludedSubset {
                    subset: name.to_string(),
                    reason: format!("at budget {p}: {reason}"),
                });
            }
            Err(_) => {}
        }
    }
    SubsetOutcome { rows, ranked, excluded }
}

/// Evaluates every subset of `candidates` (always with the high-fidelity model) on the
/// budget grid and ranks the admissible subsets by analytic MSE at the largest budget.
///
/// Static members are ordered by decreasing `|ρ|` and placed before the trainable
/// members, which keep their given order and enter through their optimized bounds.
/// Subsets are named `hf+a+b` in candidate order and processed in bitmask order.
pub fn select_models(
    high_fi: (&str, ModelStats),
    candidates: &[(String, Candidate)],
    budgets: &[f64],
) -> Result<Selection, AllocError> {
    if budgets.is_empty() || budgets.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
        return Err(AllocError::Selection("budget grid must be non-empty and positive".into()));
    }
    if candidates.len() > 20 {
        return Err(AllocError::Selection(format!("{} candidates is too many to enumerate", candidates.len())));
    }
    let largest = budgets.iter().copied().fold(f64::MIN, f64::max);
    let outcomes: Vec<SubsetOutcome> = (0u32..1 << candidates.len())
        .into_par_iter()
        .map(|mask| {
            let members: Vec<&(String, Candidate)> =
                candidates.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, c)| c).collect();
            let name = std::iter::once(high_fi.0)
                .chain(members.iter().map(|m| m.0.as_str()))
                .collect::<Vec<_>>()
                .join("+");
            evaluate_subset(high_fi, &members, &name, budgets, largest)
        })
        .collect();

    let mut selection = Selection {
        rows: Vec::new(),
        ranking: Vec::new(),
        excluded: Vec::new(),
    };
    for o in outcomes {
        selection.rows.extend(o.rows);
        selection.ranking.extend(o.ranked);
        selection.excluded.extend(o.excluded);
    }
    // stable: equal MSE keeps subset order
    selection.ranking.sort_by(|a, b| a.analytic_mse.total_cmp(&b.analytic_mse));
    for (i, r) in selection.ranking.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(selection)
}
