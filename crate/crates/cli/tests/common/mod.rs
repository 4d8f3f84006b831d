#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_vwsd"))
}

pub fn vwsd(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

/// Runs a command that must succeed and returns its stdout.
pub fn ok(dir: &Path, args: &[&str]) -> String {
    let out = vwsd(dir, args);
    assert!(
        out.status.success(),
        "vwsd {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub const ANDROMEDA: &str =
    "andromeda tree, andromeda, japanese andromeda, lily of the valley tree, pieris japonica, shrub, bush";

/// A one-sample dataset for the andromeda lexicon fixture.
pub fn andromeda_dataset(dir: &Path) -> PathBuf {
    let images: Vec<String> = (0..10).map(|i| format!("\"a{i}\"")).collect();
    let line = format!(
        "{{\"id\":\"s1\",\"target\":\"andromeda\",\"context\":\"andromeda tree\",\"images\":[{}]}}\n",
        images.join(",")
    );
    let path = dir.join("andromeda_dataset.jsonl");
    std::fs::write(&path, line).unwrap();
    path
}

/// A generated world with its index built and a model trained on it.
pub fn prepared_world(dir: &Path, samples: usize) {
    let n = samples.to_string();
    ok(dir, &["gen-fixture", "--out-dir", ".", "--samples", &n]);
    ok(dir, &["--config", "run.toml", "build-index"]);
    ok(
        dir,
        &["--config", "run.toml", "score", "--out", "scores.jsonl"],
    );
    ok(
        dir,
        &[
            "--config",
            "run.toml",
            "retrieve",
            "--out",
            "retrieval.jsonl",
        ],
    );
    ok(
        dir,
        &[
            "--config",
            "run.toml",
            "extract-features",
            "--scores",
            "scores.jsonl",
            "--retrieval",
            "retrieval.jsonl",
            "--out",
            "features.tsv",
        ],
    );
    ok(
        dir,
        &[
            "--config",
            "run.toml",
            "train",
            "--features",
            "features.tsv",
            "--out",
            "model.json",
        ],
    );
}
