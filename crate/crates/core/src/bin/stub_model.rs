//! Line-delimited JSON model used to exercise the external-model protocol.
//!
//! `echo` returns the first input coordinate; `linear` returns `weights · θ`. After a
//! `train` request with `n`, outputs gain `noise / sqrt(n) · √2 cos(2π θ_1)`.

use std::f64::consts::{PI, SQRT_2};
use std::io::{self, BufRead, Write};

use clap::{Parser, ValueEnum};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Echo,
    Linear,
}

#[derive(Debug, Parser)]
#[command(name = "camfmc-stub-model")]
struct Args {
    #[arg(long, value_enum, default_value = "echo")]
    mode: Mode,
    #[arg(long, value_delimiter = ',')]
    weights: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    dimension: usize,
    /// Answer `ok:false` to every eval request after this many.
    #[arg(long)]
    fail_after: Option<u64>,
    /// Exit without answering after this many eval requests.
    #[arg(long)]
    crash_after: Option<u64>,
    /// Reported cost per evaluation in seconds.
    #[arg(long, default_value_t = 0.0)]
    cost_seconds: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value = "stub")]
    label: String,
}

fn eval(args: &Args, trained: Option<u64>, theta: &[f64]) -> f64 {
    let base = match args.mode {
        Mode::Echo => theta[0],
        Mode::Linear => args.weights.iter().zip(theta).map(|(a, t)| a * t).sum(),
    };
    match trained {
        Some(n) if args.noise > 0.0 => base + args.noise / (n as f64).sqrt() * SQRT_2 * (2.0 * PI * theta[0]).cos(),
        _ => base,
    }
}

fn handle(args: &Args, req: &Value, trained: &mut Option<u64>, evals: &mut u64) -> Option<Value> {
    let fail = |msg: &str| json!({"ok": false, "error": msg});
    match req.get("op").and_then(Value::as_str) {
        Some("info") => Some(json!({"ok": true, "dimension": args.dimension, "label": args.label})),
        Some("train") => match req.get("n").and_then(Value::as_u64) {
            Some(n) if n >= 1 => {
                *trained = Some(n);
                Some(json!({"ok": true, "train_cost_seconds": n as f64 * args.cost_seconds}))
            }
            _ => Some(fail("train needs a positive integer `n`")),
        },
        Some("eval") => {
            *evals += 1;
            if args.crash_after.is_some_and(|c| *evals > c) {
                return None;
            }
            if args.fail_after.is_some_and(|c| *evals > c) {
                return Some(fail("simulated failure"));
            }
            let id = req.get("id").cloned().unwrap_or(Value::Null);
            let Some(inputs) = req.get("inputs").and_then(Value::as_array) else {
                return Some(fail("eval needs `inputs`"));
            };
            let mut outputs = Vec::with_capacity(inputs.len());
            for row in inputs {
                let theta: Option<Vec<f64>> = row.as_array().map(|r| r.iter().filter_map(Value::as_f64).collect());
                match theta {
                    Some(t) if t.len() == args.dimension => outputs.push(eval(args, *trained, &t)),
                    _ => return Some(fail("input row has the wrong dimension")),
                }
            }
            let cost = args.cost_seconds * outputs.len() as f64;
            Some(json!({"ok": true, "id": id, "outputs": outputs, "cost_seconds": cost}))
        }
        _ => Some(fail("unknown op")),
    }
}

fn main() {
    let args = Args::parse();
    let stdin = io::stdin();
    let mut stdout = io::stdout().lock();
    let mut trained = None;
    let mut evals = 0;
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<Value>(&line) {
            Ok(req) => match handle(&args, &req, &mut trained, &mut evals) {
                Some(r) => r,
                None => std::process::exit(3),
            },
            Err(e) => json!({"ok": false, "error": format!("bad request: {e}")}),
        };
        if writeln!(stdout, "{resp}").and_then(|_| stdout.flush()).is_err() {
            break;
        }
    }
}
