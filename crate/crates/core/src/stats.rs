//! Pilot statistics and replicate MSE.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numfmt::fmt17;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least 2 pilot samples, got {0}")]
    TooFewSamples(usize),
    #[error("column {0} has zero variance; correlation is undefined")]
    ZeroVariance(usize),
    #[error("expected {expected} costs, got {got}")]
    CostCount { expected: usize, got: usize },
    #[error("cost of model {0} must be positive")]
    NonPositiveCost(usize),
    #[error("row {row}: {msg}")]
    BadRow { row: usize, msg: String },
    #[error("replicate list is empty")]
    NoReplicates,
    #[error("pilot csv: {0}")]
    Csv(String),
}

/// Cost `w` (high-fidelity cost normalized to 1), Pearson correlation `ρ` with the
/// high-fidelity output and standard deviation `σ` of one model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelStats {
    pub cost: f64,
    pub correlation: f64,
    pub stddev: f64,
}

impl ModelStats {
    pub fn new(cost: f64, correlation: f64, stddev: f64) -> Self {
        Self {
            cost,
            correlation,
            stddev,
        }
    }

    /// High-fidelity stats: cost 1, correlation 1.
    pub fn high_fidelity(stddev: f64) -> Self {
        Self::new(1.0, 1.0, stddev)
    }

    pub fn variance(&self) -> f64 {
        self.stddev * self.stddev
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.cost > 0.0) || !self.cost.is_finite() {
            return Err(format!("cost must be positive, got {}", self.cost));
        }
        if !(self.correlation.abs() <= 1.0) {
            return Err(format!("|correlation| must be <= 1, got {}", self.correlation));
        }
        if !(self.stddev >= 0.0) || !self.stddev.is_finite() {
            return Err(format!("stddev must be non-negative, got {}", self.stddev));
        }
        Ok(())
    }
}

/// Pilot evaluations of every model on shared inputs. Column 0 is the high-fidelity model.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotMatrix {
    dim: usize,
    models: usize,
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
}

impl PilotMatrix {
    pub fn new(inputs: Vec<Vec<f64>>, outputs: Vec<Vec<f64>>) -> Result<Self, StatsError> {
        if inputs.len() != outputs.len() {
            return Err(StatsError::BadRow {
                row: inputs.len().min(outputs.len()),
                msg: "input and output row counts differ".into(),
            });
        }
        if outputs.len() < 2 {
            return Err(StatsError::TooFewSamples(outputs.len()));
        }
        let dim = inputs[0].len();
        let models = outputs[0].len();
        if models == 0 {
            return Err(StatsError::BadRow {
                row: 0,
                msg: "no model outputs".into(),
            });
        }
        for (row, (x, y)) in inputs.iter().zip(&outputs).enumerate() {
            if x.len() != dim || y.len() != models {
                return Err(StatsError::BadRow {
                    row,
                    msg: "incomplete row".into(),
                });
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(StatsError::BadRow {
                    row,
                    msg: "non-finite model output".into(),
                });
            }
        }
        Ok(Self {
            dim,
            models,
            inputs,
            outputs,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn model_count(&self) -> usize {
        self.models
    }

    pub fn sample_count(&self) -> usize {
        self.outputs.len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.outputs
    }

    fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.outputs.iter().map(move |row| row[j])
    }

    /// Header `theta_1..theta_d,f_0..f_k`, one row per sample, 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), StatsError> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<String> = (1..=self.dim)
            .map(|i| format!("theta_{i}"))
            .chain((0..self.models).map(|j| format!("f_{j}")))
            .collect();
        w.write_record(&header).map_err(|e| StatsError::Csv(e.to_string()))?;
        for (x, y) in self.inputs.iter().zip(&self.outputs) {
            let rec: Vec<String> = x.iter().chain(y).map(|&v| fmt17(v)).collect();
            w.write_record(&rec).map_err(|e| StatsError::Csv(e.to_string()))?;
        }
        w.flush().map_err(|e| StatsError::Csv(e.to_string()))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, StatsError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| StatsError::Csv(e.to_string()))?.clone();
        let dim = headers.iter().take_while(|h| h.starts_with("theta_")).count();
        let models = headers.len() - dim;
        for (i, h) in headers.iter().enumerate() {
            let expected = if i < dim {
                format!("theta_{}", i + 1)
            } else {
                format!("f_{}", i - dim)
            };
            if h != expected {
                return Err(StatsError::Csv(format!("line 1: expected column `{expected}`, found `{h}`")));
            }
        }
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| StatsError::Csv(format!("line {line}: {e}")))?;
            let vals = rec
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| StatsError::Csv(format!("line {line}: cannot parse `{f}`")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            if vals.len() != dim + models {
                return Err(StatsError::Csv(format!("line {line}: wrong number of fields")));
            }
            inputs.push(vals[..dim].to_vec());
            outputs.push(vals[dim..].to_vec());
        }
        Self::new(inputs, outputs)
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> (f64, usize) {
    let mut n = 0;
    let mut s = 0.0;
    for x in xs {
        s += x;
        n += 1;
    }
    (s / n as f64, n)
}

/// Per-model sample standard deviation (`n - 1` denominator), sample Pearson correlation
/// with column 0 (exactly 1 for column 0 itself, clamped to `[-1, 1]`) and costs normalized
/// by the cost of model 0.
pub fn pilot_stats(matrix: &PilotMatrix, measured_costs: &[f64]) -> Result<Vec<ModelStats>, StatsError> {
    let k = matrix.model_count();
    if measured_costs.len() != k {
        return Err(StatsError::CostCount {
            expected: k,
            got: measured_costs.len(),
        });
    }
    if let Some(j) = measured_costs.iter().position(|&c| !(c > 0.0)) {
        return Err(StatsError::NonPositiveCost(j));
    }
    let n = matrix.sample_count();
    if n < 2 {
        return Err(StatsError::TooFewSamples(n));
    }
    let means: Vec<f64> = (0..k).map(|j| mean(matrix.column(j)).0).collect();
    let centered_ss = |a: usize, b: usize| -> f64 {
        matrix
            .column(a)
            .zip(matrix.column(b))
            .map(|(x, y)| (x - means[a]) * (y - means[b]))
            .sum()
    };
    let ss0 = centered_ss(0, 0);
    if !(ss0 > 0.0) {
        return Err(StatsError::ZeroVariance(0));
    }
    let c0 = measured_costs[0];
    (0..k)
        .map(|j| {
            let ssj = centered_ss(j, j);
            if !(ssj > 0.0) {
                return Err(StatsError::ZeroVariance(j));
            }
            let correlation = if j == 0 {
                1.0
            } else {
                (centered_ss(0, j) / (ss0 * ssj).sqrt()).clamp(-1.0, 1.0)
            };
            Ok(ModelStats {
                cost: measured_costs[j] / c0,
                correlation,
                stddev: (ssj / (n as f64 - 1.0)).sqrt(),
            })
        })
        .collect()
}

/// `(1/N) Σ (reference - estimate)²`.
pub fn replicate_mse(estimates: &[f64], reference: f64) -> Result<f64, StatsError> {
    if estimates.is_empty() {
        return Err(StatsError::NoReplicates);
    }
    let sum: f64 = estimates.iter().map(|e| (reference - e) * (reference - e)).sum();
    Ok(sum / estimates.len() as f64)
}
