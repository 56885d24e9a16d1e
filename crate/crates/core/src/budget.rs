//! Training-versus-sampling budget optimization for trainable low-fidelity models.
//!
//! Every trainable model `j` is placed by minimizing
//!
//! ```text
//! u_j(n) = (κ_{j-1} + ĉ_{a,j} r_{a,j}(n) + c_{c,j} r_{c,j}(n)) / (p_{j-1} - n),   n ∈ [1, p_{j-1} - 1]
//! ```
//!
//! where `ĉ_{a,j} = w_{j-1} c_{a,j}`, `κ_{j-1}` collects the already fixed terms
//! `w_{i}(1 - ρ²_{i+1})` of the models in front of `j`, and `p_{j-1}` is the budget left
//! after training those models. All budgets are in units of one high-fidelity evaluation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocate::{check_ordering, reorder_models, DroppedModel};
use crate::rates::{Family, RateModel, Role};
use crate::stats::ModelStats;

#[derive(Debug, Error, PartialEq)]
pub enum BudgetError {
    #[error("n = {n} outside the objective domain [{lo}, {hi}]")]
    Domain { n: f64, lo: f64, hi: f64 },
    #[error("no feasible training size: remaining budget {remaining} leaves no integer n in [{min_train}, floor(p) - 1]")]
    Infeasible { remaining: f64, min_train: u64 },
    #[error("invalid objective context: {0}")]
    InvalidContext(String),
    #[error("invalid trainable spec: {0}")]
    InvalidSpec(String),
    #[error("convexity condition fails for `{label}` at n = {n}; uniqueness of the minimizer is not guaranteed")]
    NotConvex { label: String, n: f64 },
    #[error("budget must exceed 2 high-fidelity evaluations, got {0}")]
    BudgetTooSmall(f64),
}

/// Accuracy and cost bounds of one trainable low-fidelity model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainableSpec {
    pub accuracy: RateModel,
    pub cost: RateModel,
    #[serde(default = "one")]
    pub min_train: u64,
    /// Sorted list of training sizes the model can actually be built with (for example
    /// sparse-grid cardinalities). `None` means every integer is feasible.
    #[serde(default)]
    pub feasible_n: Option<Vec<u64>>,
}

fn one() -> u64 {
    1
}

impl TrainableSpec {
    pub fn new(accuracy: RateModel, cost: RateModel) -> Self {
        Self {
            accuracy,
            cost,
            min_train: 1,
            feasible_n: None,
        }
    }

    pub fn validate(&self) -> Result<(), BudgetError> {
        if self.accuracy.role != Role::Accuracy {
            return Err(BudgetError::InvalidSpec("accuracy rate must have role accuracy".into()));
        }
        if self.cost.role != Role::Cost {
            return Err(BudgetError::InvalidSpec("cost rate must have role cost".into()));
        }
        self.accuracy
            .validate()
            .and_then(|_| self.cost.validate())
            .map_err(BudgetError::InvalidSpec)?;
        if self.min_train < 1 {
            return Err(BudgetError::InvalidSpec("min_train must be at least 1".into()));
        }
        if let Some(f) = &self.feasible_n {
            if f.is_empty() || f.windows(2).any(|w| w[0] >= w[1]) || f[0] == 0 {
                return Err(BudgetError::InvalidSpec(
                    "feasible_n must be a non-empty, strictly increasing list of positive sizes".into(),
                ));
            }
        }
        Ok(())
    }

    /// Nearest feasible training size to `n`; ties go to the larger size.
    pub fn nearest_feasible(&self, n: u64) -> u64 {
        let Some(f) = &self.feasible_n else { return n };
        let mut best = f[0];
        for &c in f {
            if c.abs_diff(n) <= best.abs_diff(n) {
                best = c;
            }
        }
        best
    }

    /// Predicted `(1 - ρ², w)` of the model trained with `n` samples, read off the bounds.
    pub fn predicted_gap_and_cost(&self, n: f64) -> (f64, f64) {
        (self.accuracy.eval_unchecked(n), self.cost.eval_unchecked(n))
    }
}

/// The data that fixes the objective of one sequential step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectiveContext {
    /// `κ_{j-1}`.
    pub kappa: f64,
    /// `w_{j-1}`, cost of the model preceding this one in the hierarchy (`w_0 = 1`).
    pub prev_cost: f64,
    /// `p_{j-1}`.
    pub remaining_budget: f64,
    pub spec: TrainableSpec,
}

impl ObjectiveContext {
    pub fn new(kappa: f64, prev_cost: f64, remaining_budget: f64, spec: TrainableSpec) -> Result<Self, BudgetError> {
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(BudgetError::InvalidContext(format!("kappa must be non-negative, got {kappa}")));
        }
        if !(prev_cost > 0.0) || !prev_cost.is_finite() {
            return Err(BudgetError::InvalidContext(format!("prev_cost must be positive, got {prev_cost}")));
        }
        if !(remaining_budget > 2.0) || !remaining_budget.is_finite() {
            return Err(BudgetError::InvalidContext(format!(
                "remaining budget must exceed 2, got {remaining_budget}"
            )));
        }
        spec.validate()?;
        Ok(Self {
            kappa,
            prev_cost,
            remaining_budget,
            spec,
        })
    }

    /// First step of a hierarchy: `κ_0 = 0`, `w_0 = 1`, `p_0 = p`.
    pub fn first(budget: f64, spec: TrainableSpec) -> Result<Self, BudgetError> {
        Self::new(0.0, 1.0, budget, spec)
    }

    /// `ĉ_a = w_{j-1} c_a`.
    pub fn c_hat_a(&self) -> f64 {
        self.prev_cost * self.spec.accuracy.scale
    }

    fn scaled_accuracy(&self) -> RateModel {
        RateModel {
            scale: self.c_hat_a(),
            ..self.spec.accuracy
        }
    }

    /// Numerator `h(n) = κ + ĉ_a r_a(n) + c_c r_c(n)`.
    pub fn numerator(&self, n: f64) -> f64 {
        self.kappa + self.scaled_accuracy().eval_unchecked(n) + self.spec.cost.eval_unchecked(n)
    }

    pub fn numerator_deriv1(&self, n: f64) -> f64 {
        self.scaled_accuracy().deriv1_unchecked(n) + self.spec.cost.deriv1_unchecked(n)
    }

    /// `ĉ_a r_a''(n) + c_c r_c''(n)`; its positivity is the convexity condition.
    pub fn numerator_deriv2(&self, n: f64) -> f64 {
        self.scaled_accuracy().deriv2_unchecked(n) + self.spec.cost.deriv2_unchecked(n)
    }

    /// Largest admissible real training size, `p - 1`.
    pub fn upper(&self) -> f64 {
        self.remaining_budget - 1.0
    }

    /// Largest admissible integer training size, `floor(p) - 1`.
    pub fn upper_int(&self) -> Option<u64> {
        let u = self.remaining_budget.floor() - 1.0;
        (u >= self.spec.min_train as f64).then_some(u as u64)
    }

    pub fn objective(&self, n: f64) -> Result<f64, BudgetError> {
        let lo = 1.0;
        let hi = self.upper();
        if !(n >= lo && n <= hi) {
            return Err(BudgetError::Domain { n, lo, hi });
        }
        Ok(self.objective_unchecked(n))
    }

    pub fn objective_unchecked(&self, n: f64) -> f64 {
        self.numerator(n) / (self.remaining_budget - n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvexityMethod {
    /// Sign checked at both interval endpoints; exact for the implemented rate families.
    Endpoints,
    /// Sign checked on a geometric grid.
    GridScan,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityCertificate {
    pub ok: bool,
    pub method: ConvexityMethod,
    pub lo: f64,
    pub hi: f64,
    /// Smallest value of `ĉ_a r_a'' + c_c r_c''` among the checked points.
    pub min_value: f64,
    /// Smallest `n` in the interval where the condition fails.
    pub first_failing: Option<f64>,
}

/// Checks `ĉ_a r_a''(n) + c_c r_c''(n) > 0` on `[lo, hi]`.
///
/// Accuracy rates of both families have positive second derivatives, and only an
/// algebraic cost with exponent below one contributes a negative one. For those
/// combinations the log-ratio of the two terms is concave in `n`, so the condition can
/// only fail on sub-intervals touching the endpoints; checking `lo` and `hi` is exact.
/// When `lo` passes and `hi` fails, the first failing `n` is located by bisection.
pub fn check_convexity(ctx: &ObjectiveContext, lo: f64, hi: f64) -> ConvexityCertificate {
    let s = |n: f64| ctx.numerator_deriv2(n);
    let (s_lo, s_hi) = (s(lo), s(hi));
    let mut cert = ConvexityCertificate {
        ok: s_lo > 0.0 && s_hi > 0.0,
        method: ConvexityMethod::Endpoints,
        lo,
        hi,
        min_value: s_lo.min(s_hi),
        first_failing: None,
    };
    if !(s_lo > 0.0) {
        cert.first_failing = Some(lo);
    } else if !(s_hi > 0.0) {
        let (mut a, mut b) = (lo, hi);
        while b - a > 1e-9 * b.max(1.0) {
            let m = 0.5 * (a + b);
            if s(m) > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        cert.first_failing = Some(b);
    }
    cert
}

/// Dense check of the convexity condition on `points` geometrically spaced values in
/// `[lo, hi]`, reporting the first violation.
pub fn scan_convexity(ctx: &ObjectiveContext, lo: f64, hi: f64, points: usize) -> ConvexityCertificate {
    let points = points.max(2);
    let ratio = (hi / lo).ln() / (points - 1) as f64;
    let mut min_value = f64::INFINITY;
    let mut first_failing = None;
    for i in 0..points {
        let n = if i + 1 == points { hi } else { lo * (ratio * i as f64).exp() };
        let v = ctx.numerator_deriv2(n);
        min_value = min_value.min(v);
        if !(v > 0.0) && first_failing.is_none() {
            first_failing = Some(n);
        }
    }
    ConvexityCertificate {
        ok: first_failing.is_none(),
        method: ConvexityMethod::GridScan,
        lo,
        hi,
        min_value,
        first_failing,
    }
}

/// Which case of the uniqueness argument produced the minimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinimizerCase {
    /// Objective increasing on the whole interval.
    LeftBoundary,
    /// Objective decreasing on the whole interval.
    RightBoundary,
    /// Stationary point in the interior.
    Interior,
    /// Convexity failed; result of exhaustive integer search.
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Minimizer {
    pub n_star: u64,
    /// `n_star` mapped through the granularity hook (equal to `n_star` without one).
    pub n_feasible: u64,
    pub objective_value: f64,
    pub continuous_minimizer: f64,
    pub case: MinimizerCase,
    pub interval: (u64, u64),
    pub convexity: ConvexityCertificate,
    pub evaluations: usize,
    pub warnings: Vec<String>,
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for the minimizer of a unimodal `f` on `[a, b]`.
fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64, evals: &mut usize) -> f64 {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    *evals += 2;
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        *evals += 1;
    }
    0.5 * (a + b)
}

/// Exhaustive integer argmin of the objective over `[lo, hi]`, ties to the smaller `n`.
pub fn exhaustive_argmin(ctx: &ObjectiveContext, lo: u64, hi: u64) -> (u64, f64) {
    let mut best = (lo, ctx.objective_unchecked(lo as f64));
    for n in lo + 1..=hi {
        let v = ctx.objective_unchecked(n as f64);
        if v < best.1 {
            best = (n, v);
        }
    }
    best
}

/// Integer minimizer of the objective on `[min_train, floor(p) - 1]`.
///
/// Under the convexity condition the objective is unimodal, so a golden-section search
/// locates the continuous minimizer and the integer answer is settled by comparing the
/// neighbouring integers and both endpoints, followed by a discrete descent walk. If the
/// condition fails and `allow_fallback` is set, the search is exhaustive instead.
pub fn minimize_objective_with(ctx: &ObjectiveContext, allow_fallback: bool) -> Result<Minimizer, BudgetError> {
    let lo = ctx.spec.min_train;
    let hi = ctx.upper_int().ok_or(BudgetError::Infeasible {
        remaining: ctx.remaining_budget,
        min_train: lo,
    })?;
    let f = |n: u64| ctx.objective_unchecked(n as f64);
    let convexity = check_convexity(ctx, lo as f64, ctx.upper().max(lo as f64 + 1e-9));
    let mut warnings = Vec::new();
    let mut evaluations = 0;

    if !convexity.ok {
        let failing = convexity.first_failing.unwrap_or(lo as f64);
        if !allow_fallback {
            return Err(BudgetError::NotConvex {
                label: String::new(),
                n: failing,
            });
        }
        let msg = format!(
            "convexity condition fails at n = {failing:.6}; using exhaustive search, uniqueness not guaranteed"
        );
        log::warn!("{msg}");
        warnings.push(msg);
        let (n_star, value) = exhaustive_argmin(ctx, lo, hi);
        return Ok(Minimizer {
            n_star,
            n_feasible: ctx.spec.nearest_feasible(n_star),
            objective_value: value,
            continuous_minimizer: n_star as f64,
            case: MinimizerCase::Exhaustive,
            interval: (lo, hi),
            convexity,
            evaluations: (hi - lo + 1) as usize,
            warnings,
        });
    }

    let (a, b) = (lo as f64, hi as f64);
    let x = if hi > lo {
        golden_section(|n| ctx.objective_unchecked(n), a, b, 1e-9 * b.max(1.0), &mut evaluations)
    } else {
        a
    };

    let mut candidates = vec![lo, hi];
    let base = x.floor() as u64;
    for n in base.saturating_sub(1)..=base + 2 {
        if (lo..=hi).contains(&n) {
            candidates.push(n);
        }
    }
    candidates.sort_unstable();
    candidates.dedup();
    let mut best = (candidates[0], f(candidates[0]));
    for &n in &candidates[1..] {
        let v = f(n);
        if v < best.1 {
            best = (n, v);
        }
    }
    evaluations += candidates.len();
    // discrete descent; ties move left only
    loop {
        let (n, v) = best;
        if n > lo && f(n - 1) <= v {
            best = (n - 1, f(n - 1));
        } else if n < hi && f(n + 1) < v {
            best = (n + 1, f(n + 1));
        } else {
            break;
        }
        evaluations += 2;
    }

    let tol = 1e-6 * b.max(1.0);
    let case = if x - a <= tol && best.0 == lo {
        MinimizerCase::LeftBoundary
    } else if b - x <= tol && best.0 == hi {
        MinimizerCase::RightBoundary
    } else {
        MinimizerCase::Interior
    };

    Ok(Minimizer {
        n_star: best.0,
        n_feasible: ctx.spec.nearest_feasible(best.0),
        objective_value: best.1,
        continuous_minimizer: x,
        case,
        interval: (lo, hi),
        convexity,
        evaluations,
        warnings,
    })
}

/// [`minimize_objective_with`] with the exhaustive fallback enabled.
pub fn minimize_objective(ctx: &ObjectiveContext) -> Result<Minimizer, BudgetError> {
    minimize_objective_with(ctx, true)
}

/// Outcome of [`saturation_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Saturation {
    /// Root `n̄` of `ĉ_a r_a' + c_c r_c'`, with the bracket that certifies the sign change.
    Bound { n_bar: f64, bracket: (f64, f64) },
    /// The numerator is increasing from the start: the minimizer is `n = 1` for every budget.
    Increasing,
    /// No sign change found up to the search cap: no budget-independent bound.
    Unbounded,
}

impl Saturation {
    pub fn n_bar(&self) -> Option<f64> {
        match self {
            Saturation::Bound { n_bar, .. } => Some(*n_bar),
            _ => None,
        }
    }

    /// `max(1, ⌈n̄⌉)`, the budget-independent cap on the integer minimizer.
    pub fn integer_cap(&self) -> Option<u64> {
        match self {
            Saturation::Bound { n_bar, .. } => Some(n_bar.ceil().max(1.0) as u64),
            Saturation::Increasing => Some(1),
            Saturation::Unbounded => None,
        }
    }
}

const SATURATION_FLOOR: f64 = 1e-12;
const SATURATION_CAP: f64 = 1e15;

/// Budget-independent bound on the optimal training size: the root of
/// `ĉ_a r_a'(n) + c_c r_c'(n)` with `ĉ_a = prev_cost · c_a`, found by bisection on an
/// expanding bracket.
pub fn saturation_bound(spec: &TrainableSpec, prev_cost: f64) -> Saturation {
    let acc = RateModel {
        scale: prev_cost * spec.accuracy.scale,
        ..spec.accuracy
    };
    let g = |n: f64| acc.deriv1_unchecked(n) + spec.cost.deriv1_unchecked(n);
    let mut lo = SATURATION_FLOOR;
    if !(g(lo) < 0.0) {
        return Saturation::Increasing;
    }
    let mut hi = 1.0;
    while !(g(hi) > 0.0) {
        if g(hi) < 0.0 {
            lo = hi;
        }
        hi *= 2.0;
        if hi > SATURATION_CAP {
            return Saturation::Unbounded;
        }
    }
    for _ in 0..400 {
        if hi - lo <= 1e-10 * hi.max(1e-300) {
            break;
        }
        let m = 0.5 * (lo + hi);
        if g(m) < 0.0 {
            lo = m;
        } else {
            hi = m;
        }
    }
    Saturation::Bound {
        n_bar: 0.5 * (lo + hi),
        bracket: (lo, hi),
    }
}

/// Closed-form saturation root for algebraic accuracy and algebraic cost:
/// `n̄ = (ĉ_a α / (c_c β))^{1/(α+β)}`.
pub fn algebraic_saturation(spec: &TrainableSpec, prev_cost: f64) -> Option<f64> {
    if spec.accuracy.family != Family::Algebraic || spec.cost.family != Family::Algebraic {
        return None;
    }
    let (a, b) = (spec.accuracy.exponent, spec.cost.exponent);
    Some((prev_cost * spec.accuracy.scale * a / (spec.cost.scale * b)).powf(1.0 / (a + b)))
}

/// One placed trainable model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanStep {
    pub label: String,
    pub n_star: u64,
    pub n_feasible: u64,
    pub kappa_before: f64,
    pub prev_cost: f64,
    pub c_hat_a: f64,
    pub budget_before: f64,
    pub kappa_after: f64,
    pub budget_after: f64,
    pub continuous_minimizer: f64,
    pub case: MinimizerCase,
    pub interval: (u64, u64),
    pub objective_value: f64,
    pub n_bar: Option<f64>,
    pub convexity_certificate: ConvexityCertificate,
}

/// Result of sequential hierarchy construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingPlan {
    pub budget: f64,
    pub steps: Vec<PlanStep>,
    /// Final hierarchy order, high-fidelity first.
    pub order: Vec<String>,
    /// Predicted statistics in `order`; trained models are read off their rate bounds.
    pub predicted: Vec<ModelStats>,
    pub dropped: Vec<DroppedModel>,
    /// True when the ordering check forced a change of the hierarchy order.
    pub reordered: bool,
    pub training_spent: f64,
    pub residual_budget: f64,
    pub complete: bool,
    pub warnings: Vec<String>,
}

impl TrainingPlan {
    /// Upper bound `(k+1) σ0² / (p - Σ n) · (κ_{k-1} + ĉ_{a,k} r_{a,k}(n_k) + c_{c,k} r_{c,k}(n_k))`
    /// for the last placed step. `None` without steps.
    pub fn mse_bound(&self, sigma0_sq: f64, k: usize) -> Option<f64> {
        let last = self.steps.last()?;
        let numerator = last.objective_value * last.budget_after;
        Some((k as f64 + 1.0) * sigma0_sq * numerator / self.residual_budget)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanOptions {
    pub allow_convexity_fallback: bool,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            allow_convexity_fallback: true,
        }
    }
}

/// Sequential construction: static models first (in the given order), then each trainable
/// model is placed by minimizing its objective given the models in front of it. After all
/// steps the ordering condition is checked on the predicted statistics and the hierarchy is
/// reordered (and, if necessary, pruned) when it fails.
pub fn build_hierarchy(
    high_fi: (&str, ModelStats),
    statics: &[(String, ModelStats)],
    trainables: &[(String, TrainableSpec)],
    budget: f64,
    options: PlanOptions,
) -> Result<TrainingPlan, BudgetError> {
    if !(budget > 2.0) || !budget.is_finite() {
        return Err(BudgetError::BudgetTooSmall(budget));
    }
    let sigma0 = high_fi.1.stddev;
    let mut labels = vec![high_fi.0.to_string()];
    let mut predicted = vec![ModelStats::high_fidelity(sigma0)];
    let mut kappa = 0.0;
    let mut prev_cost = 1.0;
    let mut remaining = budget;
    let mut spent = 0.0;
    let mut warnings = Vec::new();
    let mut complete = true;

    for (label, s) in statics {
        kappa += prev_cost * (1.0 - s.correlation * s.correlation);
        prev_cost = s.cost;
        labels.push(label.clone());
        predicted.push(*s);
    }

    let mut steps = Vec::with_capacity(trainables.len());
    for (label, spec) in trainables {
        spec.validate()?;
        let ctx = match ObjectiveContext::new(kappa, prev_cost, remaining, spec.clone()) {
            Ok(ctx) if ctx.upper_int().is_some() => ctx,
            _ => {
                let msg = format!("budget exhausted before placing `{label}` (remaining {remaining})");
                log::warn!("{msg}");
                warnings.push(msg);
                complete = false;
                break;
            }
        };
        let m = minimize_objective_with(&ctx, options.allow_convexity_fallback).map_err(|e| match e {
            BudgetError::NotConvex { n, .. } => BudgetError::NotConvex {
                label: label.clone(),
                n,
            },
            other => other,
        })?;
        warnings.extend(m.warnings.iter().map(|w| format!("{label}: {w}")));
        let n = m.n_feasible;
        if n as f64 > ctx.upper() {
            let msg = format!("`{label}`: nearest feasible size {n} exceeds the remaining budget");
            warnings.push(msg);
            complete = false;
            break;
        }
        let (gap, cost) = spec.predicted_gap_and_cost(n as f64);
        let kappa_after = kappa + prev_cost * gap;
        let budget_after = remaining - n as f64;
        let n_bar = saturation_bound(spec, prev_cost).n_bar();
        steps.push(PlanStep {
            label: label.clone(),
            n_star: m.n_star,
            n_feasible: n,
            kappa_before: kappa,
            prev_cost,
            c_hat_a: ctx.c_hat_a(),
            budget_before: remaining,
            kappa_after,
            budget_after,
            continuous_minimizer: m.continuous_minimizer,
            case: m.case,
            interval: m.interval,
            objective_value: ctx.objective_unchecked(n as f64),
            n_bar,
            convexity_certificate: m.convexity,
        });
        kappa = kappa_after;
        prev_cost = cost;
        remaining = budget_after;
        spent += n as f64;
        let rho = (1.0 - gap).max(0.0).sqrt();
        labels.push(label.clone());
        predicted.push(ModelStats::new(cost, rho, if rho > 0.0 { sigma0 / rho } else { sigma0 }));
    }

    let mut reordered = false;
    let mut dropped = Vec::new();
    if !check_ordering(&predicted).is_empty() {
        let r = reorder_models(&predicted, &labels);
        reordered = r.hierarchy.labels() != labels.as_slice();
        dropped = r.dropped;
        for d in &dropped {
            warnings.push(format!("`{}` dropped from the hierarchy: {}", d.label, d.reason));
        }
        labels = r.hierarchy.labels().to_vec();
        predicted = r.hierarchy.stats().to_vec();
    }

    Ok(TrainingPlan {
        budget,
        steps,
        order: labels,
        predicted,
        dropped,
        reordered,
        training_spent: spent,
        residual_budget: budget - spent,
        complete,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn spec(acc: RateModel, cost: RateModel) -> TrainableSpec {
        TrainableSpec::new(acc, cost)
    }

    #[test]
    fn objective_hand_arithmetic() {
        let ctx = ObjectiveContext::first(
            10.0,
            spec(RateModel::algebraic_accuracy(1.0, 1.0), RateModel::algebraic_cost(1.0, 1.0)),
        )
        .unwrap();
        assert_relative_eq!(ctx.objective(2.0).unwrap(), 0.3125, max_relative = 1e-15);
        assert!(matches!(ctx.objective(0.5), Err(BudgetError::Domain { .. })));
        assert!(matches!(ctx.objective(9.5), Err(BudgetError::Domain { .. })));
    }

    #[test]
    fn objective_blows_up_at_right_end() {
        let ctx = ObjectiveContext::first(
            434.0,
            spec(RateModel::exponential_accuracy(0.6312, 0.5754), RateModel::algebraic_cost(9.6233e-5, 1.0704)),
        )
        .unwrap();
        let mut prev = 0.0;
        for n in [420.0, 430.0, 432.0, 432.9, 432.999, 433.0] {
            let v = ctx.objective(n).unwrap();
            assert!(v.is_finite() && v > 0.0);
            assert!(v > prev);
            prev = v;
        }
        assert!(ctx.objective_unchecked(433.999_999) > 1e3 * ctx.objective_unchecked(20.0));
    }

    #[test]
    fn context_validation() {
        let s = spec(RateModel::algebraic_accuracy(1.0, 1.0), RateModel::algebraic_cost(1.0, 1.0));
        assert!(ObjectiveContext::new(-1.0, 1.0, 10.0, s.clone()).is_err());
        assert!(ObjectiveContext::new(0.0, 0.0, 10.0, s.clone()).is_err());
        assert!(ObjectiveContext::new(0.0, 1.0, 2.0, s.clone()).is_err());
        let swapped = spec(RateModel::algebraic_cost(1.0, 1.0), RateModel::algebraic_accuracy(1.0, 1.0));
        assert!(ObjectiveContext::new(0.0, 1.0, 10.0, swapped).is_err());
    }

    #[test]
    fn increasing_objective_gives_left_boundary() {
        // expensive model that is already accurate: cost term dominates
        let ctx = ObjectiveContext::first(
            100.0,
            spec(RateModel::algebraic_accuracy(1e-6, 1.0), RateModel::algebraic_cost(1.0, 2.0)),
        )
        .unwrap();
        let m = minimize_objective(&ctx).unwrap();
        assert_eq!(m.n_star, 1);
        assert_eq!(m.case, MinimizerCase::LeftBoundary);
    }

    #[test]
    fn convexity_sign_analysis() {
        let ctx = ObjectiveContext::first(
            1e6,
            spec(RateModel::algebraic_accuracy(0.5, 0.3), RateModel::algebraic_cost(1e-3, 1.5)),
        )
        .unwrap();
        assert!(check_convexity(&ctx, 1.0, 1e6 - 1.0).ok);
    }

    #[test]
    fn convexity_failure_matches_grid_scan() {
        // concave cost: its curvature wins beyond a crossover
        let ctx = ObjectiveContext::new(
            0.0,
            1.0,
            1e5,
            spec(RateModel::algebraic_accuracy(1.0, 0.5), RateModel::algebraic_cost(1e-3, 0.5)),
        )
        .unwrap();
        let cert = check_convexity(&ctx, 1.0, 99_999.0);
        assert!(!cert.ok);
        let scan = scan_convexity(&ctx, 1.0, 99_999.0, 10_000);
        assert!(!scan.ok);
        let (a, b) = (cert.first_failing.unwrap(), scan.first_failing.unwrap());
        // grid spacing ratio is (1e5)^(1/9999) ≈ 1.00115
        assert!(b >= a && b <= a * 1.0012, "{a} {b}");
        // crossover solves ĉ_a α(α+1) n^{-α-2} = c_c β(1-β) n^{β-2}
        let exact = 0.5 * 1.5 / (1e-3 * 0.25);
        assert_relative_eq!(a, exact, max_relative = 1e-6);
    }

    #[test]
    fn convexity_failure_falls_back_to_exhaustive() {
        let ctx = ObjectiveContext::new(
            0.0,
            1e-6,
            200.0,
            spec(RateModel::algebraic_accuracy(1.0, 0.5), RateModel::algebraic_cost(1e-3, 0.5)),
        )
        .unwrap();
        let m = minimize_objective(&ctx).unwrap();
        assert_eq!(m.case, MinimizerCase::Exhaustive);
        assert_eq!(m.n_star, exhaustive_argmin(&ctx, 1, 198).0);
        assert!(!m.warnings.is_empty());
        assert!(matches!(minimize_objective_with(&ctx, false), Err(BudgetError::NotConvex { .. })));
    }

    #[test]
    fn infeasible_interval() {
        let mut s = spec(RateModel::algebraic_accuracy(1.0, 1.0), RateModel::algebraic_cost(1.0, 1.0));
        s.min_train = 5;
        let ctx = ObjectiveContext::first(5.5, s).unwrap();
        assert!(matches!(minimize_objective(&ctx), Err(BudgetError::Infeasible { .. })));
    }

    #[test]
    fn saturation_closed_form_symmetric() {
        // c_a α = c_c β and α + β = 2 → n̄ = 1
        let s = spec(RateModel::algebraic_accuracy(2.0, 0.5), RateModel::algebraic_cost(2.0 / 3.0, 1.5));
        let n_bar = saturation_bound(&s, 1.0).n_bar().unwrap();
        assert_relative_eq!(n_bar, 1.0, max_relative = 1e-9);
        assert_relative_eq!(algebraic_saturation(&s, 1.0).unwrap(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn saturation_sign_change_certificate() {
        let s = spec(RateModel::exponential_accuracy(0.6312, 0.5754), RateModel::algebraic_cost(9.6233e-5, 1.0704));
        let Saturation::Bound { n_bar, bracket } = saturation_bound(&s, 1.0) else { panic!() };
        let g = |n: f64| -0.6312 * 0.5754 * (-0.5754 * n).exp() + 9.6233e-5 * 1.0704 * n.powf(0.0704);
        assert!(g(bracket.0) < 0.0 && g(bracket.1) >= 0.0);
        assert!(bracket.1 - bracket.0 <= 1e-10 * bracket.1);
        assert!(bracket.0 <= n_bar && n_bar <= bracket.1);
    }

    #[test]
    fn saturation_regimes() {
        // exponential cost and weak exponential accuracy: increasing from the start
        let s = spec(RateModel::exponential_accuracy(1e-9, 0.1), RateModel::exponential_cost(1.0, 1.0));
        assert_eq!(saturation_bound(&s, 1.0), Saturation::Increasing);
        assert_eq!(Saturation::Increasing.integer_cap(), Some(1));
    }

    #[test]
    fn granularity_rounding_prefers_larger_on_ties() {
        let mut s = spec(RateModel::algebraic_accuracy(1.0, 1.0), RateModel::algebraic_cost(1.0, 1.0));
        s.feasible_n = Some(vec![1, 5, 129, 133, 141]);
        assert_eq!(s.nearest_feasible(131), 133);
        assert_eq!(s.nearest_feasible(130), 129);
        assert_eq!(s.nearest_feasible(1000), 141);
        assert_eq!(s.nearest_feasible(3), 5);
    }

    #[test]
    fn plan_without_trainables() {
        let plan = build_hierarchy(
            ("f0", ModelStats::high_fidelity(1.0)),
            &[("cg".into(), ModelStats::new(0.01, 0.99, 1.0))],
            &[],
            1000.0,
            PlanOptions::default(),
        )
        .unwrap();
        assert!(plan.steps.is_empty());
        assert_eq!(plan.residual_budget, 1000.0);
        assert_eq!(plan.order, vec!["f0", "cg"]);
    }

    #[test]
    fn plan_partial_when_budget_runs_out() {
        let s = spec(RateModel::algebraic_accuracy(0.5, 0.5), RateModel::algebraic_cost(1e-3, 1.0));
        let mut big = s.clone();
        big.min_train = 6;
        let plan = build_hierarchy(
            ("f0", ModelStats::high_fidelity(1.0)),
            &[],
            &[("a".into(), big), ("b".into(), s)],
            7.5,
            PlanOptions::default(),
        )
        .unwrap();
        assert_eq!(plan.steps.len(), 1);
        assert!(!plan.complete);
        assert!(!plan.warnings.is_empty());
    }

    fn convex_spec() -> impl Strategy<Value = TrainableSpec> {
        (
            prop_oneof![Just(Family::Algebraic), Just(Family::Exponential)],
            1e-3f64..1.0,
            0.05f64..1.5,
            1e-7f64..1e-2,
            1.0f64..2.0,
        )
            .prop_map(|(fam, ca, a, cc, b)| {
                let a = if fam == Family::Exponential { a * 0.5 } else { a };
                spec(RateModel::new(fam, Role::Accuracy, ca, a), RateModel::algebraic_cost(cc, b))
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn minimizer_equals_exhaustive_search(s in convex_spec(), kappa in 0.0f64..0.1, prev in 1e-3f64..1.0, p in 3.0f64..5000.0) {
            let ctx = ObjectiveContext::new(kappa, prev, p, s).unwrap();
            let m = minimize_objective(&ctx).unwrap();
            let hi = ctx.upper_int().unwrap();
            let (n, v) = exhaustive_argmin(&ctx, 1, hi);
            prop_assert_eq!(m.n_star, n);
            prop_assert_eq!(m.objective_value, v);
            // discrete local optimality and endpoint dominance
            let f = |n: u64| ctx.objective_unchecked(n as f64);
            if m.n_star > 1 { prop_assert!(f(m.n_star) <= f(m.n_star - 1)); }
            if m.n_star < hi { prop_assert!(f(m.n_star) <= f(m.n_star + 1)); }
            prop_assert!(f(m.n_star) <= f(1) && f(m.n_star) <= f(hi));
        }

        #[test]
        fn minimizer_bounded_by_saturation(s in convex_spec(), prev in 1e-3f64..1.0) {
            let cap = saturation_bound(&s, prev).integer_cap();
            for p in [1e2, 1e3, 1e4] {
                let ctx = ObjectiveContext::new(0.0, prev, p, s.clone()).unwrap();
                let m = minimize_objective(&ctx).unwrap();
                if let Some(cap) = cap { prop_assert!(m.n_star <= cap, "{} > {}", m.n_star, cap); }
            }
        }

        #[test]
        fn ledger_is_exact(s1 in convex_spec(), s2 in convex_spec(), p in 10.0f64..1e5) {
            let plan = build_hierarchy(("f0", ModelStats::high_fidelity(1.0)), &[], &[("a".into(), s1.clone()), ("b".into(), s2)], p, PlanOptions::default()).unwrap();
            let trained: u64 = plan.steps.iter().map(|s| s.n_feasible).sum();
            prop_assert_eq!(trained as f64 + plan.residual_budget, p);
            prop_assert!(plan.residual_budget > 0.0);
            for w in plan.steps.windows(2) { prop_assert!(w[1].budget_before < w[0].budget_before); }
            for st in &plan.steps { prop_assert!(st.n_star >= 1 && (st.n_star as f64) <= st.budget_before - 1.0); }
            for w in plan.steps.windows(2) {
                let (a, b) = (&w[0], &w[1]);
                let n = a.n_feasible as f64;
                let gap = s1.accuracy.scale * match s1.accuracy.family {
                    Family::Algebraic => n.powf(-s1.accuracy.exponent),
                    Family::Exponential => (-s1.accuracy.exponent * n).exp(),
                };
                prop_assert_eq!(a.kappa_before, 0.0);
                prop_assert!((a.kappa_after - gap).abs() <= 1e-15 * gap);
                prop_assert_eq!(b.kappa_before, a.kappa_after);
                prop_assert!((b.prev_cost - s1.cost.scale * n.powf(s1.cost.exponent)).abs() <= 1e-12 * b.prev_cost);
            }
        }
    }
}
