// The full command-line pipeline: generate, split, train, evaluate.

use std::fs;

use bidscape::cli::run;

pub fn run_example() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let d = dir.path();
    let config = d.join("run.json");
    fs::write(
        &config,
        r#"{
            "synth": {"n_contexts": 2, "bid_noise_std": 0.2, "bid_anchor_pull": 0.25,
                      "n_extra_noise_features": 3, "seed": 4},
            "generate": {"n_auctions": 4000, "seed": 1},
            "train": {"max_epochs": 2, "learning_rate": 0.003},
            "paths": {"data": "data.tsv", "oracle": "oracle.json",
                      "train": "split/train.tsv", "val": "split/val.tsv", "test": "split/test.tsv",
                      "checkpoint": "model.admc"}
        }"#,
    )?;
    let c = config.to_str().unwrap();
    let path = |name: &str| d.join(name).to_str().unwrap().to_string();

    let steps: Vec<Vec<String>> = vec![
        vec!["gen".into(), "--config".into(), c.into()],
        vec!["split".into(), "--config".into(), c.into(), "--out-dir".into(), path("split")],
        vec!["train".into(), "--config".into(), c.into(), "--report".into(), path("report.jsonl")],
        vec![
            "eval".into(),
            "--config".into(),
            c.into(),
            "--baselines".into(),
            "avg,frq,rdm".into(),
            "--plot-data".into(),
            path("plot.csv"),
            "--out".into(),
            path("eval.jsonl"),
        ],
    ];
    for step in steps {
        let code = run(std::iter::once("bidscape".to_string()).chain(step.clone()));
        anyhow::ensure!(code == 0, "step {step:?} exited with {code}");
    }
    print!("{}", fs::read_to_string(d.join("report.jsonl"))?);
    print!("{}", fs::read_to_string(d.join("eval.jsonl"))?);
    let plot = fs::read_to_string(d.join("plot.csv"))?;
    println!("plot data: {} rows", plot.lines().count() - 1);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
