//! Command-line behavior: outputs of each subcommand and exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use bidscape::cli::run;

fn bidscape(args: &[&str]) -> i32 {
    run(std::iter::once("bidscape").chain(args.iter().copied()).map(String::from))
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn path(&self, name: &str) -> String {
        self.root.join(name).to_str().unwrap().to_string()
    }

    fn config(&self) -> String {
        self.path("run.json")
    }
}

/// Generates, splits and trains a small model.
fn trained() -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    fs::write(
        root.join("run.json"),
        r#"{
            "synth": {"n_contexts": 2, "bid_noise_std": 0.2, "bid_anchor_pull": 0.25, "seed": 8},
            "generate": {"n_auctions": 3000, "seed": 2},
            "train": {"max_epochs": 2},
            "paths": {"data": "data.tsv", "oracle": "oracle.json",
                      "train": "split/train.tsv", "val": "split/val.tsv", "test": "split/test.tsv",
                      "checkpoint": "model.admc"}
        }"#,
    )
    .unwrap();
    let ws = Workspace { _dir: dir, root };
    let c = ws.config();
    assert_eq!(bidscape(&["gen", "--config", &c]), 0);
    assert_eq!(bidscape(&["split", "--config", &c, "--out-dir", &ws.path("split")]), 0);
    assert_eq!(bidscape(&["train", "--config", &c, "--report", &ws.path("report.jsonl")]), 0);
    ws
}

fn json_lines(path: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn gen_writes_log_sidecar_and_oracle() {
    let ws = trained();
    let header = fs::read_to_string(ws.root.join("data.tsv")).unwrap();
    assert!(header.lines().count() > 3000);
    assert!(ws.root.join("data.fields.json").exists());
    let oracle: serde_json::Value = serde_json::from_str(&fs::read_to_string(ws.root.join("oracle.json")).unwrap()).unwrap();
    assert_eq!(oracle["contexts"].as_array().unwrap().len(), 2);
    for split in ["train", "val", "test"] {
        assert!(ws.root.join(format!("split/{split}.tsv")).exists());
        assert!(ws.root.join(format!("split/{split}.fields.json")).exists());
    }
}

#[test]
fn train_report_ends_with_a_summary() {
    let ws = trained();
    let lines = json_lines(&ws.root.join("report.jsonl"));
    let summary = lines.last().unwrap();
    assert!(summary["best_epoch"].as_u64().unwrap() >= 1);
    assert!(summary["best_val_anlp"].as_f64().unwrap().is_finite());
    assert!(summary["gradient_samples"]["lost"].as_u64().unwrap() > 0);
    assert!(lines[..lines.len() - 1].iter().all(|e| e["val_anlp"].is_number()));
}

#[test]
fn eval_replay_and_sweep_outputs() {
    let ws = trained();
    let c = ws.config();
    let eval_out = ws.path("eval.jsonl");
    assert_eq!(
        bidscape(&["eval", "--config", &c, "--raw", "--c-index-ref", "winning-price", "--baselines", "avg,gaussian", "--out", &eval_out]),
        0
    );
    let results = json_lines(Path::new(&eval_out));
    let names: Vec<&str> = results.iter().map(|r| r["bidder"].as_str().unwrap()).collect();
    assert_eq!(names[0], "adm");
    assert!(names.contains(&"avg") && names.contains(&"gaussian"));
    assert!(results[0]["tv_divergence"].is_number());
    assert!(results[0]["value_raw"].is_number());

    let replay_out = ws.path("replay.jsonl");
    assert_eq!(bidscape(&["replay", "--config", &c, "--baselines", "rdm", "--out", &replay_out]), 0);
    for r in json_lines(Path::new(&replay_out)) {
        assert!(r["wins"].is_u64() && r["value"].is_number());
        assert!(r.get("anlp").is_none());
    }

    let sweep_out = ws.path("sweep.csv");
    assert_eq!(
        bidscape(&["sweep", "--config", &c, "--axis", "delta_lose", "--values", "1,40", "--out", &sweep_out]),
        0
    );
    let csv = fs::read_to_string(&sweep_out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "alpha,beta,delta_lose,mae,anlp,c_index,wins,value,tv_divergence");
    assert_eq!(lines.count(), 2);
}

#[test]
fn bench_runs_against_a_checkpoint() {
    let ws = trained();
    assert_eq!(bidscape(&["bench", "--config", &ws.config(), "--requests", "200", "--concurrency", "2"]), 0);
    assert_eq!(bidscape(&["bench", "--config", &ws.config(), "--requests", "0"]), 1);
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let ws = trained();
    let c = ws.config();

    // corrupt checkpoint: data error
    let bad = ws.path("bad.admc");
    fs::write(&bad, b"not a checkpoint").unwrap();
    assert_eq!(bidscape(&["eval", "--config", &c, "--model", &bad]), 2);

    // test log declaring different fields than the checkpoint
    let decls = ws.root.join("split/test.fields.json");
    let mut fields: serde_json::Value = serde_json::from_str(&fs::read_to_string(&decls).unwrap()).unwrap();
    fields.as_array_mut().unwrap().pop();
    fs::write(&decls, fields.to_string()).unwrap();
    assert_eq!(bidscape(&["eval", "--config", &c]), 2);

    // unknown configuration key
    let typo = ws.path("typo.json");
    fs::write(&typo, r#"{"trian": {}}"#).unwrap();
    assert_eq!(bidscape(&["train", "--config", &typo]), 1);

    // invalid hyperparameter
    assert_eq!(bidscape(&["train", "--config", &c, "--alpha", "1.5"]), 1);
}

#[test]
fn binary_prints_help_and_rejects_unknown_commands() {
    let exe = env!("CARGO_BIN_EXE_bidscape");
    let help = Command::new(exe).arg("--help").output().unwrap();
    assert!(help.status.success());
    let text = String::from_utf8(help.stdout).unwrap();
    for sub in ["gen", "split", "train", "eval", "replay", "sweep", "serve", "bench"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
    let bad = Command::new(exe).arg("fly").output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
}
