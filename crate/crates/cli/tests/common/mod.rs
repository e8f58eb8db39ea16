#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const SMOKE_SPEC: &str = "\
preset = \"scaled_scenario1\"
samples = 10
genes = 3
probes = 12
varied = 4
associations = 2
low_signal_count = 0
seed = 5
";

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cnvassoc"));
    cmd.env_remove("CNVASSOC_OUTPUT_ROOT")
        .env("RUST_LOG", "warn");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "cnvassoc {args:?} failed with {:?}:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// Simulates the smoke dataset into `<root>/sim` and returns that directory.
pub fn smoke_dataset(root: &Path) -> PathBuf {
    let spec = root.join("smoke.toml");
    std::fs::write(&spec, SMOKE_SPEC).unwrap();
    let sim = root.join("sim");
    run_ok(&["simulate", "--spec", p(&spec), "--out", p(&sim)]);
    sim
}

/// Fits the smoke dataset with a short chain plus any extra arguments.
pub fn smoke_fit(sim: &Path, out: &Path, extra: &[&str]) -> Output {
    let config = sim.join("fit.toml");
    let mut args = vec![
        "fit",
        "--config",
        p(&config),
        "--iterations",
        "500",
        "--burn-in",
        "100",
        "--out",
        p(out),
    ];
    args.extend_from_slice(extra);
    run_ok(&args)
}

pub fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
