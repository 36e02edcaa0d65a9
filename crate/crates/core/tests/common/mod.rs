#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use signbow::classifier::TrainConfig;
use signbow::dataset::Dataset;
use signbow::synth::{generate_dataset, sample_prototypes, GeneratorConfig, PrototypeSet};

pub fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_signbow"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Writes a small synthetic dataset with the binary and returns (samples, manifest).
pub fn synth_files(dir: &Path, extra: &[&str]) -> (PathBuf, PathBuf) {
    let out = dir.join("data");
    let mut args = vec!["synth", "--out", s(&out), "--subjects", "3", "--reps", "4"];
    if !extra.contains(&"--classes") {
        args.extend_from_slice(&["--classes", "6"]);
    }
    args.extend_from_slice(extra);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    (out.join("samples.jsonl"), out.join("manifest.json"))
}

pub fn small_config() -> GeneratorConfig {
    GeneratorConfig {
        num_classes: 8,
        num_subjects: 3,
        reps_per_subject: 4,
        ..Default::default()
    }
}

pub fn small_set() -> (PrototypeSet, Dataset) {
    let set = sample_prototypes(&small_config()).unwrap();
    let d = generate_dataset(&set).unwrap();
    (set, d)
}

/// Codebook small enough for tiny datasets.
pub fn small_train_config() -> TrainConfig {
    TrainConfig {
        codewords: 16,
        ..Default::default()
    }
}
