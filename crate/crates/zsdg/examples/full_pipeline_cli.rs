//! Drive the whole pipeline through the CLI binary: prepare, train two
//! methods across seeds, then aggregate and significance-test the runs.
//!
//! Run with `cargo run --example full_pipeline_cli`. Uses `cargo run --bin`
//! under the hood, so the first invocation may compile the binary.

use std::path::PathBuf;
use std::process::Command;

fn zsdg(args: &[&str]) {
    let status = Command::new(env!("CARGO"))
        .args(["run", "--quiet", "--bin", "zsdg", "--"])
        .args(args)
        .status()
        .expect("spawn cargo");
    assert!(status.success(), "zsdg {args:?} failed");
}

fn main() {
    let dir = std::env::temp_dir().join("zsdg_pipeline_demo");
    let _ = std::fs::remove_dir_all(&dir);
    let prep: PathBuf = dir.join("prep");
    let runs: PathBuf = dir.join("runs.csv");

    zsdg(&[
        "prepare", "--dataset", "synthetic", "--output", prep.to_str().unwrap(),
    ]);
    // one paired cell per held-out domain
    for method in ["s-agg", "agg"] {
        for target in ["0", "1", "2", "3", "4"] {
            zsdg(&[
                "train", "--data", prep.to_str().unwrap(), "--method", method, "--target",
                target, "--epochs", "20", "--extractor-hidden", "96,48",
                "--runs", runs.to_str().unwrap(),
            ]);
        }
    }
    zsdg(&[
        "report", "--runs", runs.to_str().unwrap(), "--wilcoxon", "s-agg,agg", "--pairing",
        "domain", "--metric", "zsdg",
    ]);
    println!("\nartifacts under {}", dir.display());
}
