#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

pub struct Run {
    pub code: i32,
    pub stderr: String,
}

pub fn phturnpike(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_phturnpike")).args(args).output().expect("binary runs");
    Run { code: out.status.code().expect("exited normally"), stderr: String::from_utf8_lossy(&out.stderr).into_owned() }
}

/// Runs `cmd` with `config` written to `dir/config.json` and output into `dir/out`.
pub fn run_with_config(cmd: &str, dir: &Path, config: &Value, extra: &[&str]) -> Run {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_vec_pretty(config).unwrap()).unwrap();
    let out = dir.join("out");
    let mut args = vec![cmd, "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    phturnpike(&args)
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

pub fn fig_config(name: &str) -> Value {
    read_json(&repo_root().join("configs").join(name))
}

fn load_schema(name: &str) -> Value {
    read_json(&repo_root().join("schemas").join(format!("{name}.schema.json")))
}

/// Validation errors of `instance` against `schemas/<name>.schema.json`.
pub fn schema_errors(name: &str, instance: &Value) -> Vec<String> {
    let mut registry = jsonschema::Registry::new();
    for shared in ["common", "config"] {
        registry = registry.add(format!("urn:phturnpike:schema:{shared}"), load_schema(shared)).unwrap();
    }
    let registry = registry.prepare().unwrap();
    let validator = jsonschema::options().with_registry(&registry).build(&load_schema(name)).unwrap();
    validator.iter_errors(instance).map(|e| format!("{}: {e}", e.instance_path())).collect()
}

/// States from a trajectory CSV, one row per grid time.
pub fn csv_states(path: &Path, n: usize) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|line| line.split(',').skip(1).take(n).map(|v| v.parse().unwrap()).collect())
        .collect()
}
