//! Line-delimited JSON protocol against the bundled stub model.

use std::path::Path;
use std::process::Command;

use camfmc::engine::external::{ExternalCommand, ExternalError, ExternalProcess};
use camfmc::engine::models::Charge;
use camfmc::engine::sampling::{draw_samples, Bounds};
use camfmc::engine::{BudgetLedger, EngineError, ModelHandle};
use serde_json::{json, Value};

const STUB: &str = env!("CARGO_BIN_EXE_camfmc-stub-model");

fn stub(args: &[&str]) -> ExternalCommand {
    let mut command = vec![STUB.to_string()];
    command.extend(args.iter().map(|s| s.to_string()));
    ExternalCommand { command, workdir: None }
}

#[test]
fn echo_round_trip() {
    let mut p = ExternalProcess::spawn(&stub(&["--mode", "echo", "--dimension", "2", "--cost-seconds", "0.5"])).unwrap();
    let info = p.info().unwrap();
    assert_eq!(info.dimension, 2);
    let rows: Vec<&[f64]> = vec![&[0.25, 0.9], &[0.75, 0.1]];
    let (out, cost) = p.eval(&rows).unwrap();
    assert_eq!(out, vec![0.25, 0.75]);
    assert_eq!(cost, Some(1.0));
    assert_eq!(p.train(4, 9).unwrap(), 2.0);
    // ids keep advancing after a train request
    let (out, _) = p.eval(&rows[..1]).unwrap();
    assert_eq!(out, vec![0.25]);
}

#[test]
fn remote_failure_is_reported() {
    let mut p = ExternalProcess::spawn(&stub(&["--fail-after", "1"])).unwrap();
    let row: Vec<&[f64]> = vec![&[0.5]];
    p.eval(&row).unwrap();
    assert!(matches!(p.eval(&row), Err(ExternalError::Remote(m)) if m.contains("simulated")));
}

#[test]
fn crash_closes_the_pipe() {
    let mut p = ExternalProcess::spawn(&stub(&["--crash-after", "0"])).unwrap();
    let row: Vec<&[f64]> = vec![&[0.5]];
    assert!(matches!(p.eval(&row), Err(ExternalError::Closed)));
}

#[test]
fn malformed_reply_is_rejected() {
    let cmd = ExternalCommand {
        command: vec!["sh".into(), "-c".into(), "while read l; do echo notjson; done".into()],
        workdir: None,
    };
    let mut p = ExternalProcess::spawn(&cmd).unwrap();
    assert!(matches!(p.info(), Err(ExternalError::Malformed { .. })));
}

#[test]
fn missing_program_fails_to_spawn() {
    let cmd = ExternalCommand {
        command: vec!["/nonexistent/model".into()],
        workdir: None,
    };
    assert!(matches!(ExternalProcess::spawn(&cmd), Err(ExternalError::Spawn { .. })));
}

#[test]
fn handle_evaluates_in_chunks_and_charges_the_ledger() {
    let bounds = Bounds(vec![(-1.0, 1.0), (0.0, 2.0)]);
    let batch = draw_samples(3, 600, &bounds).unwrap();
    let cmd = stub(&["--mode", "linear", "--weights", "2,-1", "--dimension", "2"]);
    let mut h = ModelHandle::external("lin", &cmd, 0.25, 1.0).unwrap();
    let mut ledger = BudgetLedger::new(1000.0);
    let out = h.evaluate(&batch, 600, &mut ledger, Charge::Sampling).unwrap();
    for (i, y) in out.iter().enumerate() {
        let t = batch.get(i);
        assert!((y - (2.0 * t[0] - t[1])).abs() < 1e-12);
    }
    assert_eq!(ledger.evaluations("lin"), 600);
    assert!((ledger.spent() - 150.0).abs() < 1e-12);
}

#[test]
fn chunk_failure_names_the_chunk_start() {
    let batch = draw_samples(3, 600, &Bounds::unit(1)).unwrap();
    let mut h = ModelHandle::external("bad", &stub(&["--fail-after", "1"]), 0.1, 1.0).unwrap();
    match h.evaluate_rows(&batch, 600) {
        Err(EngineError::External { label, index, .. }) => {
            assert_eq!(label, "bad");
            assert_eq!(index, Some(256));
        }
        other => panic!("unexpected {other:?}"),
    }
}

fn write_config(dir: &Path, static_args: &[&str]) -> std::path::PathBuf {
    let mut lo = vec![STUB.to_string()];
    lo.extend(static_args.iter().map(|s| s.to_string()));
    let cfg = json!({
        "input": { "dimension": 1 },
        "high_fidelity": { "external": { "command": [STUB, "--mode", "echo"] }, "stddev": 0.2886751345948129 },
        "statics": [ { "label": "lo", "stats": { "cost": 0.01, "correlation": 0.99 }, "external": { "command": lo } } ],
        "budgets": [200],
        "stats_source": "predicted"
    });
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn camfmc(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_camfmc")).args(args).output().unwrap()
}

#[test]
fn external_estimate_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &["--mode", "echo", "--noise", "0"]);
    let out = tmp.path().join("out");
    let o = camfmc(&["estimate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(out.join("estimate.json")).unwrap()).unwrap();
    // identical models: the estimate is the mean of the first coordinate over the shared samples
    let e = v["estimate"].as_f64().unwrap();
    assert!((e - 0.5).abs() < 0.1, "{e}");
}

#[test]
fn failure_mid_batch_persists_partial_ledger() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &["--mode", "echo", "--fail-after", "1"]);
    let out = tmp.path().join("out");
    let o = camfmc(&["estimate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("partial ledger") && stderr.contains("`lo`"), "{stderr}");
    assert!(!out.join("estimate.json").exists());
    let ledger: Value = serde_json::from_str(&std::fs::read_to_string(out.join("ledger.json")).unwrap()).unwrap();
    assert_eq!(ledger["budget"].as_f64(), Some(200.0));
    let models = ledger["models"].as_array().unwrap();
    let f0 = models.iter().find(|m| m["label"] == "f0").unwrap();
    assert!(f0["evaluations"].as_u64().unwrap() > 0);
}
