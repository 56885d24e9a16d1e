//! Models running in a child process, spoken to with one JSON object per line.
//!
//! ```text
//! {"op":"train","n":159,"seed":42}          -> {"ok":true,"train_cost_seconds":...}
//! {"op":"eval","id":7,"inputs":[[...],...]} -> {"ok":true,"id":7,"outputs":[...],"cost_seconds":...}
//! {"op":"info"}                             -> {"ok":true,"dimension":12,"label":"..."}
//! failure                                   -> {"ok":false,"error":"..."}
//! ```

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExternalError {
    #[error("failed to start `{command}`: {source}")]
    Spawn { command: String, source: std::io::Error },
    #[error("i/o with external model failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("external model closed its output")]
    Closed,
    #[error("malformed response `{line}`: {msg}")]
    Malformed { line: String, msg: String },
    #[error("external model reported: {0}")]
    Remote(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalCommand {
    pub command: Vec<String>,
    #[serde(default)]
    pub workdir: Option<PathBuf>,
}

impl ExternalCommand {
    pub fn display(&self) -> String {
        self.command.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelInfo {
    pub dimension: usize,
    pub label: String,
}

pub struct ExternalProcess {
    spec: ExternalCommand,
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    next_id: u64,
}

impl ExternalProcess {
    pub fn spawn(spec: &ExternalCommand) -> Result<Self, ExternalError> {
        let (program, args) = spec.command.split_first().ok_or_else(|| ExternalError::Spawn {
            command: String::new(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty command"),
        })?;
        let mut cmd = Command::new(program);
        cmd.args(args).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::inherit());
        if let Some(dir) = &spec.workdir {
            cmd.current_dir(dir);
        }
        let mut child = cmd.spawn().map_err(|source| ExternalError::Spawn {
            command: spec.display(),
            source,
        })?;
        let stdin = child.stdin.take().ok_or(ExternalError::Closed)?;
        let stdout = BufReader::new(child.stdout.take().ok_or(ExternalError::Closed)?);
        Ok(Self {
            spec: spec.clone(),
            child,
            stdin,
            stdout,
            next_id: 0,
        })
    }

    pub fn command(&self) -> &ExternalCommand {
        &self.spec
    }

    fn request(&mut self, req: &Value) -> Result<Value, ExternalError> {
        writeln!(self.stdin, "{req}")?;
        self.stdin.flush()?;
        let mut line = String::new();
        if self.stdout.read_line(&mut line)? == 0 {
            return Err(ExternalError::Closed);
        }
        let v: Value = serde_json::from_str(line.trim()).map_err(|e| ExternalError::Malformed {
            line: line.trim().to_string(),
            msg: e.to_string(),
        })?;
        match v.get("ok").and_then(Value::as_bool) {
            Some(true) => Ok(v),
            Some(false) => Err(ExternalError::Remote(
                v.get("error").and_then(Value::as_str).unwrap_or("unspecified error").to_string(),
            )),
            None => Err(ExternalError::Malformed {
                line: line.trim().to_string(),
                msg: "missing boolean `ok`".into(),
            }),
        }
    }

    fn malformed(v: &Value, msg: &str) -> ExternalError {
        ExternalError::Malformed {
            line: v.to_string(),
            msg: msg.to_string(),
        }
    }

    pub fn info(&mut self) -> Result<ModelInfo, ExternalError> {
        let v = self.request(&json!({"op": "info"}))?;
        let dimension = v
            .get("dimension")
            .and_then(Value::as_u64)
            .ok_or_else(|| Self::malformed(&v, "missing `dimension`"))? as usize;
        let label = v.get("label").and_then(Value::as_str).unwrap_or_default().to_string();
        Ok(ModelInfo { dimension, label })
    }

    /// Returns the reported training cost in seconds (0 when absent).
    pub fn train(&mut self, n: u64, seed: u64) -> Result<f64, ExternalError> {
        let v = self.request(&json!({"op": "train", "n": n, "seed": seed}))?;
        Ok(v.get("train_cost_seconds").and_then(Value::as_f64).unwrap_or(0.0))
    }

    /// Evaluates the rows of `inputs`; returns outputs and the reported cost in seconds.
    pub fn eval(&mut self, inputs: &[&[f64]]) -> Result<(Vec<f64>, Option<f64>), ExternalError> {
        let id = self.next_id;
        self.next_id += 1;
        let v = self.request(&json!({"op": "eval", "id": id, "inputs": inputs}))?;
        if v.get("id").and_then(Value::as_u64) != Some(id) {
            return Err(Self::malformed(&v, &format!("expected id {id}")));
        }
        let outputs: Vec<f64> = v
            .get("outputs")
            .and_then(Value::as_array)
            .ok_or_else(|| Self::malformed(&v, "missing `outputs`"))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| Self::malformed(&v, "non-numeric output")))
            .collect::<Result<_, _>>()?;
        if outputs.len() != inputs.len() {
            return Err(Self::malformed(
                &v,
                &format!("{} outputs for {} inputs", outputs.len(), inputs.len()),
            ));
        }
        Ok((outputs, v.get("cost_seconds").and_then(Value::as_f64)))
    }
}

impl Drop for ExternalProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
