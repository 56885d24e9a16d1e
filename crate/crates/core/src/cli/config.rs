//! Experiment configuration (a single JSON document) and its resolution into library types.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use crate::budget::TrainableSpec;
use crate::engine::external::ExternalCommand;
use crate::engine::models::{ModelHandle, SyntheticHigh, SyntheticLowFi};
use crate::engine::pipeline::{PipelineModels, PipelineOptions, StatsSource, Trainer};
use crate::engine::sampling::Bounds;
use crate::rates::{fit_rate, FamilyChoice, PilotSeries, RateModel, Role, ValueKind};
use crate::stats::{pilot_stats, ModelStats, PilotMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Mc,
    Mfmc,
    Camfmc,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Mc => "mc",
            EstimatorKind::Mfmc => "mfmc",
            EstimatorKind::Camfmc => "camfmc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    #[serde(default)]
    pub dimension: Option<usize>,
    /// Per-coordinate `[left, right]`; defaults to the unit box.
    #[serde(default)]
    pub bounds: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HighFidelityConfig {
    #[serde(default = "default_hf_label")]
    pub label: String,
    #[serde(default)]
    pub synthetic: Option<SyntheticHigh>,
    #[serde(default)]
    pub external: Option<ExternalCommand>,
    /// Standard deviation of the output; taken from the closed form for synthetic models.
    #[serde(default)]
    pub stddev: Option<f64>,
}

fn default_hf_label() -> String {
    "f0".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticStats {
    pub cost: f64,
    pub correlation: f64,
    #[serde(default)]
    pub stddev: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticConfig {
    pub label: String,
    #[serde(default)]
    pub stats: Option<StaticStats>,
    /// Pilot CSV with the high-fidelity model in column `f_0` and this model in `f_1`;
    /// `stats.cost` is still required.
    #[serde(default)]
    pub pilot_csv: Option<PathBuf>,
    #[serde(default)]
    pub external: Option<ExternalCommand>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateSource {
    Model(RateModel),
    Pilot {
        pilot_csv: PathBuf,
        #[serde(default = "auto")]
        family: FamilyChoice,
    },
}

fn auto() -> FamilyChoice {
    FamilyChoice::Auto
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainableConfig {
    pub label: String,
    pub accuracy: RateSource,
    pub cost: RateSource,
    #[serde(default = "one_u64")]
    pub min_train: u64,
    #[serde(default)]
    pub feasible_n: Option<Vec<u64>>,
    #[serde(default)]
    pub external: Option<ExternalCommand>,
}

fn one_u64() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub input: Option<InputConfig>,
    pub high_fidelity: HighFidelityConfig,
    #[serde(default)]
    pub statics: Vec<StaticConfig>,
    #[serde(default)]
    pub trainables: Vec<TrainableConfig>,
    /// Budgets in seconds when `high_fidelity_cost_seconds` is set, else in high-fidelity
    /// evaluations.
    #[serde(default)]
    pub budgets: Vec<f64>,
    #[serde(default = "one_f64")]
    pub high_fidelity_cost_seconds: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub estimators: Option<Vec<EstimatorKind>>,
    #[serde(default = "default_source")]
    pub stats_source: StatsSource,
    #[serde(default = "default_pilot")]
    pub pilot_samples: usize,
    #[serde(default)]
    pub charge_pilot: bool,
    #[serde(default)]
    pub reference_mean: Option<f64>,
}

fn one_f64() -> f64 {
    1.0
}

fn default_replicates() -> usize {
    50
}

fn default_source() -> StatsSource {
    StatsSource::Pilot
}

fn default_pilot() -> usize {
    100
}

/// Configuration with pilot files fitted, units normalized and statistics resolved.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub bounds: Bounds,
    pub high_label: String,
    pub high_stats: ModelStats,
    pub statics: Vec<(String, ModelStats)>,
    pub trainables: Vec<(String, TrainableSpec)>,
    /// Budgets in high-fidelity evaluations.
    pub budgets: Vec<f64>,
    pub fits: Vec<(String, crate::rates::FitReport)>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn pipeline_options(&self) -> PipelineOptions {
        PipelineOptions {
            stats_source: self.stats_source,
            pilot_samples: self.pilot_samples,
            charge_pilot: self.charge_pilot,
        }
    }

    pub fn normalize_budget(&self, b: f64) -> f64 {
        b / self.high_fidelity_cost_seconds
    }

    pub fn resolve(self, base: &Path) -> Result<Experiment> {
        let hf = &self.high_fidelity;
        ensure!(
            !(hf.synthetic.is_some() && hf.external.is_some()),
            "high_fidelity takes at most one of `synthetic` and `external`"
        );
        ensure!(self.high_fidelity_cost_seconds > 0.0, "high_fidelity_cost_seconds must be positive");
        ensure!(self.replicates >= 1, "replicates must be at least 1");
        ensure!(self.budgets.iter().all(|&b| b > 0.0 && b.is_finite()), "budgets must be positive");

        let bounds = match (&hf.synthetic, &self.input) {
            (Some(s), input) => {
                let unit = Bounds::unit(s.dimension());
                if let Some(InputConfig { bounds: Some(b), .. }) = input {
                    ensure!(
                        Bounds(b.clone()) == unit,
                        "synthetic models are defined on the unit box [0,1]^{}",
                        s.dimension()
                    );
                }
                ensure!(s.dimension() >= 1, "synthetic weights must be non-empty");
                unit
            }
            (None, Some(InputConfig { bounds: Some(b), .. })) => Bounds(b.clone()),
            (None, Some(InputConfig { dimension: Some(d), .. })) => Bounds::unit(*d),
            (None, _) => Bounds::unit(1),
        };
        bounds.validate()?;

        let sigma0 = match (&hf.synthetic, hf.stddev) {
            (Some(s), _) => s.variance().sqrt(),
            (None, Some(s)) => s,
            (None, None) => 1.0,
        };
        let high_stats = ModelStats::high_fidelity(sigma0);

        let mut statics = Vec::new();
        for s in &self.statics {
            let st = s
                .stats
                .as_ref()
                .with_context(|| format!("static model `{}` needs `stats` (at least cost)", s.label))?;
            let stats = if let Some(p) = &s.pilot_csv {
                let file = std::fs::File::open(base.join(p)).with_context(|| format!("opening {}", p.display()))?;
                let m = PilotMatrix::read_csv(file).with_context(|| format!("reading pilot {}", p.display()))?;
                ensure!(m.model_count() == 2, "pilot {} must have columns f_0 and f_1", p.display());
                pilot_stats(&m, &[1.0, st.cost])?[1]
            } else {
                let stddev = match (&hf.synthetic, st.stddev) {
                    (Some(f), _) => SyntheticLowFi::from_stats(f, st.correlation, st.cost)?.stddev(),
                    (None, Some(sd)) => sd,
                    (None, None) => sigma0 / st.correlation.abs(),
                };
                ModelStats::new(st.cost, st.correlation, stddev)
            };
            stats.validate().map_err(|e| anyhow::anyhow!("static model `{}`: {e}", s.label))?;
            statics.push((s.label.clone(), stats));
        }

        let mut fits = Vec::new();
        let mut trainables = Vec::new();
        for t in &self.trainables {
            let mut get = |src: &RateSource, kind: ValueKind| -> Result<RateModel> {
                match src {
                    RateSource::Model(m) => Ok(*m),
                    RateSource::Pilot { pilot_csv, family } => {
                        let series = PilotSeries::read_csv_path(&base.join(pilot_csv), kind)?;
                        let fit = fit_rate(&series, *family)?;
                        let model = fit.model;
                        fits.push((format!("{}:{}", t.label, kind.role()), fit));
                        Ok(model)
                    }
                }
            };
            let accuracy = get(&t.accuracy, ValueKind::AccuracyGap)?;
            let cost = get(&t.cost, ValueKind::Cost)?;
            ensure!(accuracy.role == Role::Accuracy, "`{}`: accuracy rate has role {}", t.label, accuracy.role);
            ensure!(cost.role == Role::Cost, "`{}`: cost rate has role {}", t.label, cost.role);
            let spec = TrainableSpec {
                accuracy,
                cost,
                min_train: t.min_train,
                feasible_n: t.feasible_n.clone(),
            };
            spec.validate()?;
            if hf.synthetic.is_none() && t.external.is_none() {
                log::debug!("trainable `{}` has no executable model; analytic commands only", t.label);
            }
            trainables.push((t.label.clone(), spec));
        }

        let budgets = self.budgets.iter().map(|&b| self.normalize_budget(b)).collect();
        Ok(Experiment {
            bounds,
            high_label: hf.label.clone(),
            high_stats,
            statics,
            trainables,
            budgets,
            fits,
            config: self,
        })
    }
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Self> {
        let (cfg, base) = ExperimentConfig::from_path(path)?;
        cfg.resolve(&base)
    }

    pub fn synthetic(&self) -> Option<&SyntheticHigh> {
        self.config.high_fidelity.synthetic.as_ref()
    }

    /// Exact mean when the high-fidelity model is synthetic.
    pub fn exact_mean(&self) -> Option<f64> {
        self.synthetic().map(SyntheticHigh::mean)
    }

    pub fn hf(&self) -> (&str, ModelStats) {
        (&self.high_label, self.high_stats)
    }

    fn high_handle(&self) -> Result<ModelHandle> {
        let hf = &self.config.high_fidelity;
        match (&hf.synthetic, &hf.external) {
            (Some(s), _) => Ok(ModelHandle::synthetic_high(&hf.label, s.clone())),
            (None, Some(cmd)) => Ok(ModelHandle::external(&hf.label, cmd, 1.0, self.config.high_fidelity_cost_seconds)?),
            (None, None) => bail!("the high-fidelity model has no executable form (`synthetic` or `external`)"),
        }
    }

    fn static_handles(&self) -> Result<Vec<ModelHandle>> {
        self.config
            .statics
            .iter()
            .zip(&self.statics)
            .map(|(c, (label, stats))| match (&c.external, self.synthetic()) {
                (Some(cmd), _) => Ok(ModelHandle::external(label, cmd, stats.cost, self.config.high_fidelity_cost_seconds)?),
                (None, Some(f)) => Ok(ModelHandle::synthetic_lowfi(
                    label,
                    SyntheticLowFi::from_stats(f, stats.correlation, stats.cost)?,
                )),
                (None, None) => bail!("static model `{label}` has no executable form"),
            })
            .collect()
    }

    fn trainers(&self) -> Result<Vec<(String, Trainer)>> {
        self.config
            .trainables
            .iter()
            .zip(&self.trainables)
            .map(|(c, (label, spec))| {
                let t = match (&c.external, self.synthetic()) {
                    (Some(cmd), _) => Trainer::External {
                        command: cmd.clone(),
                        spec: spec.clone(),
                        high_fidelity_seconds: self.config.high_fidelity_cost_seconds,
                    },
                    (None, Some(f)) => Trainer::Synthetic {
                        high: f.clone(),
                        spec: spec.clone(),
                    },
                    (None, None) => bail!("trainable model `{label}` has no executable form"),
                };
                Ok((label.clone(), t))
            })
            .collect()
    }

    /// Executable models for one pipeline run.
    pub fn pipeline_models(&self, with_trainables: bool) -> Result<PipelineModels> {
        Ok(PipelineModels {
            bounds: self.bounds.clone(),
            high: self.high_handle()?,
            statics: self.static_handles()?,
            trainers: if with_trainables { self.trainers()? } else { Vec::new() },
        })
    }
}
