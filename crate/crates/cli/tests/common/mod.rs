//! Helpers shared by the integration test targets: invoking the binary
//! and driving the full pipeline in its documented order.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn miscast() -> Command {
    Command::new(env!("CARGO_BIN_EXE_miscast"))
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = miscast().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "miscast {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Small-budget run configuration: enough signal for the pipeline to
/// produce meaningful artifacts while keeping each stage to seconds.
pub const CONFIG: &str = r#"{
  "seed": 11,
  "estimator": {
    "n_clusters": [2, 4],
    "bo_budget": 6,
    "restarts": 2,
    "max_iterations": 40,
    "outer_folds": 3,
    "inner_folds": 3,
    "model_budget": 3
  },
  "kb": {"folds": 3, "inner_folds": 3, "tuning_budget": 4},
  "ga": {"population": 8, "generations": 6}
}"#;

/// Run every subcommand in pipeline order into `out`; returns the config
/// path used (written next to `out` on first use and reused after).
pub fn run_pipeline(dir: &Path, out: &Path) -> PathBuf {
    let config = dir.join("config.json");
    if !config.exists() {
        fs::write(&config, CONFIG).unwrap();
    }
    let cfg = config.to_str().unwrap();
    let outs = out.to_str().unwrap();
    let data = out.join("syn-f06-n04.csv");
    let data = data.to_str().unwrap();
    let kb = out.join("kb.jsonl");
    let kb = kb.to_str().unwrap();
    let meta = out.join("metafeatures.csv");
    let meta = meta.to_str().unwrap();
    let model = out.join("model.json");
    let model = model.to_str().unwrap();
    let eval = out.join("eval.json");
    let eval = eval.to_str().unwrap();

    let base = ["--config", cfg, "--out-dir", outs];
    let stage = |extra: &[&str]| {
        let mut args: Vec<&str> = base.to_vec();
        args.extend_from_slice(extra);
        run_ok(&args);
    };
    stage(&[
        "synth", "--f1", "0.6", "--n1", "0.4", "--instances", "60", "--features", "2",
        "--classes", "2",
    ]);
    stage(&["metafeatures", "--data", data]);
    stage(&["kb", "--data", data, "--model", "knn_classifier"]);
    stage(&["train", "--kb", kb]);
    stage(&["estimate", "--model", model, "--meta", meta]);
    stage(&["eval", "--data", data, "--kb", kb, "--model", "gaussian_nb"]);
    stage(&["abstain", "--eval", eval]);
    stage(&[
        "explain", "--model", model, "--kb", kb, "--meta", meta, "--index", "1",
    ]);
    config
}
