//! The subcommands. Each `cmd_*` returns its artifacts; the `run_*` wrappers write them.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use super::config::{EstimatorKind, Experiment, ExperimentConfig, RateSource};
use crate::allocate::{analytic_mse, optimal_allocation, select_models, Allocation, Candidate, Hierarchy, Selection};
use crate::budget::{build_hierarchy, PlanOptions, TrainingPlan};
use crate::engine::estimators::mc_estimate;
use crate::engine::ledger::BudgetLedger;
use crate::engine::pipeline::{run_ca_mfmc, CaMfmcReport, StatsSource};
use crate::engine::sampling::derive_seed;
use crate::numfmt::{fmt17, to_json_string};
use crate::rates::{fit_rate, FamilyChoice, FitReport, PilotSeries, RateModel, ValueKind};
use crate::stats::replicate_mse;

/// Flags shared by the config-driven subcommands.
#[derive(Debug, Clone, Default)]
pub struct RunArgs {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub budget: Option<f64>,
    pub out: PathBuf,
    pub replicates: Option<usize>,
    pub family: Option<FamilyChoice>,
}

impl RunArgs {
    pub fn load(&self) -> Result<Experiment> {
        let (mut cfg, base) = ExperimentConfig::from_path(&self.config)?;
        if let Some(f) = self.family {
            for t in &mut cfg.trainables {
                for src in [&mut t.accuracy, &mut t.cost] {
                    if let RateSource::Pilot { family, .. } = src {
                        *family = f;
                    }
                }
            }
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.replicates {
            cfg.replicates = r;
        }
        if let Some(b) = self.budget {
            cfg.budgets = vec![b];
        }
        cfg.resolve(&base)
    }
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn write_json<T: Serialize + ?Sized>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    write_text(dir, name, &to_json_string(value)?)
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| anyhow!("{e}"))?)?)
}

// ---------------------------------------------------------------- fit

#[derive(Debug, Clone, Serialize)]
pub struct FitOutput {
    pub model: RateModel,
    pub report: FitReport,
}

pub fn cmd_fit(pilot: &Path, kind: ValueKind, family: FamilyChoice) -> Result<FitOutput> {
    let series = PilotSeries::read_csv_path(pilot, kind).with_context(|| format!("reading {}", pilot.display()))?;
    let report = fit_rate(&series, family)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    Ok(FitOutput {
        model: report.model,
        report,
    })
}

pub fn run_fit(pilot: &Path, kind: ValueKind, family: FamilyChoice, out: &Path) -> Result<()> {
    let f = cmd_fit(pilot, kind, family)?;
    write_json(out, "rate_model.json", &f.model)?;
    write_json(out, "fit_report.json", &f.report)?;
    Ok(())
}

// ---------------------------------------------------------------- plan

#[derive(Debug, Clone, Serialize)]
pub struct BudgetPlan {
    pub budget: f64,
    pub plan: TrainingPlan,
    pub allocation: Allocation,
    pub analytic_mse: f64,
    pub mc_analytic_mse: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanOutput {
    pub high_fidelity_cost_seconds: f64,
    pub budgets: Vec<BudgetPlan>,
}

fn plan_diagnostics(plan: &TrainingPlan) -> String {
    let mut s = String::new();
    for st in &plan.steps {
        s.push_str(&format!(
            "\n  {}: n* = {}, kappa = {}, prev_cost = {}, p before = {}, p after = {}",
            st.label, st.n_feasible, st.kappa_before, st.prev_cost, st.budget_before, st.budget_after
        ));
    }
    for w in &plan.warnings {
        s.push_str(&format!("\n  warning: {w}"));
    }
    s
}

/// Training plan, allocation of the residual budget and analytic MSE for budget `p`.
pub fn plan_for_budget(exp: &Experiment, p: f64) -> Result<BudgetPlan> {
    let plan = build_hierarchy(exp.hf(), &exp.statics, &exp.trainables, p, PlanOptions::default())
        .with_context(|| format!("planning budget {p}"))?;
    let h = Hierarchy::new(plan.predicted.clone(), plan.order.clone())
        .with_context(|| format!("budget {p}: predicted hierarchy invalid{}", plan_diagnostics(&plan)))?;
    let allocation = optimal_allocation(&h, plan.residual_budget)
        .with_context(|| format!("budget {p}: residual budget {} infeasible{}", plan.residual_budget, plan_diagnostics(&plan)))?;
    let mse = analytic_mse(&h, p, plan.training_spent)?;
    Ok(BudgetPlan {
        budget: p,
        analytic_mse: mse,
        mc_analytic_mse: exp.high_stats.variance() / p,
        plan,
        allocation,
    })
}

pub fn cmd_plan(exp: &Experiment) -> Result<PlanOutput> {
    if exp.budgets.is_empty() {
        bail!("no budgets given (config `budgets` or --budget)");
    }
    Ok(PlanOutput {
        high_fidelity_cost_seconds: exp.config.high_fidelity_cost_seconds,
        budgets: exp.budgets.iter().map(|&p| plan_for_budget(exp, p)).collect::<Result<_>>()?,
    })
}

pub fn plan_allocation_csv(out: &PlanOutput) -> Result<String> {
    let mut rows = Vec::new();
    for b in &out.budgets {
        for (j, label) in b.plan.order.iter().enumerate() {
            let n = b.plan.steps.iter().find(|s| s.label == *label).map_or(0, |s| s.n_feasible);
            let alpha = if j == 0 { 1.0 } else { b.allocation.coefficients[j - 1] };
            rows.push(vec![
                fmt17(b.budget),
                label.clone(),
                n.to_string(),
                b.allocation.counts[j].to_string(),
                fmt17(alpha),
            ]);
        }
    }
    csv_text(&["budget", "model", "n_train", "samples", "coefficient"], &rows)
}

pub fn plan_shares_csv(out: &PlanOutput) -> Result<String> {
    let rows: Vec<Vec<String>> = out
        .budgets
        .iter()
        .map(|b| {
            vec![
                fmt17(b.budget),
                fmt17(b.budget * out.high_fidelity_cost_seconds),
                fmt17(b.plan.training_spent),
                fmt17(b.plan.residual_budget),
                fmt17(b.plan.training_spent / b.budget),
                fmt17(b.plan.residual_budget / b.budget),
                fmt17(b.analytic_mse),
                fmt17(b.mc_analytic_mse),
            ]
        })
        .collect();
    csv_text(
        &[
            "budget",
            "budget_seconds",
            "training",
            "sampling",
            "training_share",
            "sampling_share",
            "analytic_mse",
            "mc_analytic_mse",
        ],
        &rows,
    )
}

pub fn run_plan(args: &RunArgs) -> Result<()> {
    let exp = args.load()?;
    let out = cmd_plan(&exp)?;
    write_json(&args.out, "plan.json", &out)?;
    write_text(&args.out, "allocation.csv", &plan_allocation_csv(&out)?)?;
    write_text(&args.out, "shares.csv", &plan_shares_csv(&out)?)?;
    Ok(())
}

// ---------------------------------------------------------------- estimate

#[derive(Debug, Clone, Serialize)]
pub struct EstimateOutput {
    pub estimate: f64,
    pub exact_mean: Option<f64>,
    pub report: CaMfmcReport,
}

/// One CA-MFMC run. On failure the partial ledger is returned with the error.
pub fn cmd_estimate(exp: &Experiment, p: f64, seed: u64) -> std::result::Result<EstimateOutput, (anyhow::Error, BudgetLedger)> {
    let mut ledger = BudgetLedger::new(p);
    let mut run = || -> Result<CaMfmcReport> {
        let plan = plan_for_budget(exp, p)?.plan;
        let models = exp.pipeline_models(true)?;
        Ok(run_ca_mfmc(&plan, models, seed, exp.config.pipeline_options(), &mut ledger)?)
    };
    match run() {
        Ok(report) => Ok(EstimateOutput {
            estimate: report.estimate,
            exact_mean: exp.exact_mean(),
            report,
        }),
        Err(e) => Err((e, ledger)),
    }
}

fn single_budget(exp: &Experiment) -> Result<f64> {
    exp.budgets.first().copied().context("no budget given (config `budgets` or --budget)")
}

pub fn run_estimate(args: &RunArgs) -> Result<()> {
    let exp = args.load()?;
    let p = single_budget(&exp)?;
    match cmd_estimate(&exp, p, exp.config.seed) {
        Ok(out) => {
            write_json(&args.out, "estimate.json", &out)?;
            Ok(())
        }
        Err((e, ledger)) => {
            let path = write_json(&args.out, "ledger.json", &ledger)?;
            Err(e.context(format!("estimate failed; partial ledger written to {}", path.display())))
        }
    }
}

// ---------------------------------------------------------------- benchmark

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkCell {
    pub estimator: EstimatorKind,
    pub budget: f64,
    pub empirical_mse: f64,
    pub analytic_mse: f64,
    pub mean: f64,
    pub estimates: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkOutput {
    pub reference: f64,
    pub reference_source: String,
    pub replicates: usize,
    pub cells: Vec<BenchmarkCell>,
    pub warnings: Vec<String>,
}

fn static_plan(exp: &Experiment, p: f64) -> Result<TrainingPlan> {
    Ok(build_hierarchy(exp.hf(), &exp.statics, &[], p, PlanOptions::default())?)
}

fn replicate(exp: &Experiment, est: EstimatorKind, p: f64, seed: u64) -> Result<f64> {
    match est {
        EstimatorKind::Mc => {
            let mut models = exp.pipeline_models(false)?;
            let mut ledger = BudgetLedger::new(p);
            Ok(mc_estimate(&mut models.high, p.floor() as usize, seed, &exp.bounds, &mut ledger)?)
        }
        EstimatorKind::Mfmc => {
            let plan = static_plan(exp, p)?;
            let mut opts = exp.config.pipeline_options();
            opts.stats_source = StatsSource::Predicted;
            let mut ledger = BudgetLedger::new(p);
            Ok(run_ca_mfmc(&plan, exp.pipeline_models(false)?, seed, opts, &mut ledger)?.estimate)
        }
        EstimatorKind::Camfmc => {
            let plan = plan_for_budget(exp, p)?.plan;
            let mut ledger = BudgetLedger::new(p);
            Ok(run_ca_mfmc(&plan, exp.pipeline_models(true)?, seed, exp.config.pipeline_options(), &mut ledger)?.estimate)
        }
    }
}

fn analytic(exp: &Experiment, est: EstimatorKind, p: f64) -> Result<f64> {
    match est {
        EstimatorKind::Mc => Ok(exp.high_stats.variance() / p),
        EstimatorKind::Mfmc => {
            let plan = static_plan(exp, p)?;
            let h = Hierarchy::new(plan.predicted, plan.order)?;
            Ok(analytic_mse(&h, p, 0.0)?)
        }
        EstimatorKind::Camfmc => Ok(plan_for_budget(exp, p)?.analytic_mse),
    }
}

pub fn cmd_benchmark(exp: &Experiment) -> Result<BenchmarkOutput> {
    let n = exp.config.replicates;
    let seed = exp.config.seed;
    let mut warnings = Vec::new();
    if n < 2 {
        let msg = format!("{n} replicate gives an unreliable MSE estimate");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    if exp.budgets.is_empty() {
        bail!("no budgets given (config `budgets` or --budget)");
    }
    let (reference, reference_source) = match (exp.exact_mean(), exp.config.reference_mean) {
        (Some(m), _) => (m, "exact synthetic mean".to_string()),
        (None, Some(m)) => (m, "configured reference_mean".to_string()),
        (None, None) => {
            let p = 10.0 * exp.budgets.iter().copied().fold(0.0, f64::max);
            let r = cmd_estimate(exp, p, derive_seed(seed, u64::MAX)).map_err(|(e, _)| e)?;
            (r.estimate, format!("CA-MFMC run at budget {p}"))
        }
    };
    let mut estimators = exp
        .config
        .estimators
        .clone()
        .unwrap_or_else(|| vec![EstimatorKind::Mc, EstimatorKind::Mfmc, EstimatorKind::Camfmc]);
    if exp.statics.is_empty() && estimators.contains(&EstimatorKind::Mfmc) {
        warnings.push("no static low-fidelity models: mfmc rows skipped".into());
        estimators.retain(|e| *e != EstimatorKind::Mfmc);
    }

    let mut cells = Vec::new();
    for &est in &estimators {
        for &p in &exp.budgets {
            let estimates: Vec<f64> = (0..n as u64)
                .into_par_iter()
                .map(|r| replicate(exp, est, p, derive_seed(seed, r)))
                .collect::<Result<_>>()
                .with_context(|| format!("{} at budget {p}", est.name()))?;
            cells.push(BenchmarkCell {
                estimator: est,
                budget: p,
                empirical_mse: replicate_mse(&estimates, reference)?,
                analytic_mse: analytic(exp, est, p)?,
                mean: crate::engine::estimators::mean(&estimates),
                estimates,
            });
        }
    }
    Ok(BenchmarkOutput {
        reference,
        reference_source,
        replicates: n,
        cells,
        warnings,
    })
}

pub fn benchmark_csv(out: &BenchmarkOutput) -> Result<String> {
    let rows: Vec<Vec<String>> = out
        .cells
        .iter()
        .map(|c| vec![c.estimator.name().to_string(), fmt17(c.budget), fmt17(c.empirical_mse), fmt17(c.analytic_mse)])
        .collect();
    csv_text(&["estimator", "budget", "empirical_mse", "analytic_mse"], &rows)
}

pub fn replicates_csv(out: &BenchmarkOutput) -> Result<String> {
    let mut rows = Vec::new();
    for c in &out.cells {
        for (r, e) in c.estimates.iter().enumerate() {
            rows.push(vec![c.estimator.name().to_string(), fmt17(c.budget), r.to_string(), fmt17(*e)]);
        }
    }
    csv_text(&["estimator", "budget", "replicate", "estimate"], &rows)
}

pub fn run_benchmark(args: &RunArgs) -> Result<()> {
    let exp = args.load()?;
    let out = cmd_benchmark(&exp)?;
    write_text(&args.out, "benchmark.csv", &benchmark_csv(&out)?)?;
    write_text(&args.out, "replicates.csv", &replicates_csv(&out)?)?;
    write_json(&args.out, "benchmark.json", &out)?;
    Ok(())
}

// ---------------------------------------------------------------- select

pub fn cmd_select(exp: &Experiment) -> Result<Selection> {
    let mut candidates: Vec<(String, Candidate)> =
        exp.statics.iter().map(|(l, s)| (l.clone(), Candidate::Static(*s))).collect();
    candidates.extend(exp.trainables.iter().map(|(l, t)| (l.clone(), Candidate::Trainable(t.clone()))));
    Ok(select_models(exp.hf(), &candidates, &exp.budgets)?)
}

pub fn run_select(args: &RunArgs) -> Result<()> {
    let exp = args.load()?;
    let sel = cmd_select(&exp)?;
    let mut buf = Vec::new();
    sel.write_csv(&mut buf)?;
    write_text(&args.out, "select.csv", &String::from_utf8(buf)?)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        ranking: &'a [crate::allocate::RankedSubset],
        excluded: &'a [crate::allocate::ExcludedSubset],
    }
    write_json(
        &args.out,
        "ranking.json",
        &Summary {
            ranking: &sel.ranking,
            excluded: &sel.excluded,
        },
    )?;
    Ok(())
}
