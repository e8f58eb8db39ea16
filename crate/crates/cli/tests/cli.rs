mod common;

use common::*;

const FIT_FILES: &[&str] = &[
    "manifest.json",
    "config.toml",
    "ppi.tsv",
    "qvalues.tsv",
    "selected.tsv",
    "xi_modal.tsv",
    "hmm_estimates.tsv",
    "trace.tsv",
    "acceptance.tsv",
    "checkpoint.bin",
];

const SIM_FILES: &[&str] = &[
    "Y.tsv",
    "X.tsv",
    "pos.tsv",
    "xi_true.tsv",
    "R_true.tsv",
    "beta_true.tsv",
    "spec.toml",
    "fit.toml",
    "manifest.json",
];

#[test]
fn scenario1_dataset_has_full_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("s1");
    run_ok(&["simulate", "--preset", "scenario1", "--out", p(&sim)]);
    let y = String::from_utf8(read(&sim.join("Y.tsv"))).unwrap();
    let lines: Vec<&str> = y.lines().collect();
    assert_eq!(lines.len(), 101);
    assert!(lines.iter().all(|l| l.split('\t').count() == 101));
    let x = String::from_utf8(read(&sim.join("X.tsv"))).unwrap();
    assert_eq!(x.lines().next().unwrap().split('\t').count(), 1001);
    for f in SIM_FILES {
        assert!(sim.join(f).is_file(), "missing {f}");
    }
}

#[test]
fn simulate_is_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_ok(&[
        "simulate",
        "--preset",
        "scaled_scenario2",
        "--seed",
        "3",
        "--out",
        p(&a),
    ]);
    run_ok(&[
        "simulate",
        "--preset",
        "scaled_scenario2",
        "--seed",
        "3",
        "--out",
        p(&b),
    ]);
    for f in SIM_FILES {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
    let c = dir.path().join("c");
    run_ok(&[
        "simulate",
        "--preset",
        "scaled_scenario2",
        "--seed",
        "4",
        "--out",
        p(&c),
    ]);
    assert_ne!(read(&a.join("Y.tsv")), read(&c.join("Y.tsv")));
}

#[test]
fn malformed_spec_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.toml");
    std::fs::write(&spec, "samples = 10\nnoise_sdd = 0.1\n").unwrap();
    let out = run(&[
        "simulate",
        "--spec",
        p(&spec),
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("noise_sdd"));
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("CNVASSOC_OUTPUT_ROOT", dir.path())
        .args(["simulate", "--preset", "scaled_scenario1"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("simulate").join("Y.tsv").is_file());
}

#[test]
fn smoke_fit_emits_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let sim = smoke_dataset(dir.path());
    let fit = dir.path().join("fit");
    smoke_fit(&sim, &fit, &[]);
    for f in FIT_FILES {
        assert!(fit.join(f).is_file(), "missing {f}");
    }
    let trace = String::from_utf8(read(&fit.join("trace.tsv"))).unwrap();
    assert_eq!(trace.lines().count(), 1 + 400);
    let ppi = String::from_utf8(read(&fit.join("ppi.tsv"))).unwrap();
    assert_eq!(ppi.lines().count(), 1 + 3);
    let manifest: serde_json::Value =
        serde_json::from_slice(&read(&fit.join("manifest.json"))).unwrap();
    assert_eq!(manifest["details"]["finished"], true);
    let sim_manifest: serde_json::Value =
        serde_json::from_slice(&read(&sim.join("manifest.json"))).unwrap();
    assert_eq!(manifest["data_hash"], sim_manifest["data_hash"]);
}

#[test]
fn alpha_flag_selects_the_independent_prior() {
    let dir = tempfile::tempdir().unwrap();
    let sim = smoke_dataset(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    smoke_fit(&sim, &a, &["--alpha", "inf"]);
    smoke_fit(&sim, &b, &["--set", "regression.alpha=inf"]);
    let config = String::from_utf8(read(&a.join("config.toml"))).unwrap();
    assert!(config.contains("regression.alpha = inf"), "{config}");
    for f in ["ppi.tsv", "trace.tsv", "manifest.json"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
}

#[test]
fn resumed_fit_matches_uninterrupted_fit() {
    let dir = tempfile::tempdir().unwrap();
    let sim = smoke_dataset(dir.path());
    let (whole, split) = (dir.path().join("whole"), dir.path().join("split"));
    smoke_fit(&sim, &whole, &[]);
    smoke_fit(
        &sim,
        &split,
        &["--stop-after", "230", "--checkpoint-every", "70"],
    );
    assert!(!split.join("ppi.tsv").exists());
    let partial: serde_json::Value =
        serde_json::from_slice(&read(&split.join("manifest.json"))).unwrap();
    assert_eq!(partial["details"]["completed_iterations"], 230);
    smoke_fit(&sim, &split, &["--resume"]);
    for f in FIT_FILES {
        assert_eq!(read(&whole.join(f)), read(&split.join(f)), "{f}");
    }
}

#[test]
fn resume_refuses_a_changed_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let sim = smoke_dataset(dir.path());
    let fit = dir.path().join("fit");
    smoke_fit(&sim, &fit, &["--stop-after", "50"]);
    let config = sim.join("fit.toml");
    let out = run(&[
        "fit",
        "--config",
        p(&config),
        "--iterations",
        "500",
        "--burn-in",
        "100",
        "--seed",
        "99",
        "--resume",
        "--out",
        p(&fit),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("different configuration"));
}

#[test]
fn summarize_scores_against_the_truth() {
    let dir = tempfile::tempdir().unwrap();
    let sim = smoke_dataset(dir.path());
    let fit = dir.path().join("fit");
    smoke_fit(&sim, &fit, &[]);
    run_ok(&["summarize", "--run", p(&fit)]);
    let table = String::from_utf8(read(&fit.join("summary/summary.tsv"))).unwrap();
    let header: Vec<&str> = table.lines().next().unwrap().split('\t').collect();
    for col in [
        "specificity",
        "sensitivity",
        "false_positives",
        "false_negatives",
        "detections",
        "xi_misclassified_percent",
    ] {
        assert!(header.contains(&col), "{col} missing from {header:?}");
    }
    let csv = String::from_utf8(read(&fit.join("summary/ppi.csv"))).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 12);

    // Without a truth directory the metric columns are left out.
    std::fs::remove_file(sim.join("R_true.tsv")).unwrap();
    run_ok(&["summarize", "--run", p(&fit)]);
    let table = String::from_utf8(read(&fit.join("summary/summary.tsv"))).unwrap();
    assert!(!table.contains("sensitivity"));
}

#[test]
fn summarize_at_fdr_one_selects_every_positive_ppi() {
    let dir = tempfile::tempdir().unwrap();
    let sim = smoke_dataset(dir.path());
    let fit = dir.path().join("fit");
    smoke_fit(
        &sim,
        &fit,
        &["--set", "regression.e=0.5", "--set", "regression.f=0.5"],
    );
    run_ok(&["summarize", "--run", p(&fit), "--fdr", "1.0"]);
    let ppi = String::from_utf8(read(&fit.join("summary/ppi.csv"))).unwrap();
    let positive = ppi
        .lines()
        .skip(1)
        .filter(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap() > 0.0)
        .count();
    assert!(positive > 0);
    let selected = String::from_utf8(read(&fit.join("summary/selected.tsv"))).unwrap();
    assert_eq!(selected.lines().count() - 1, positive);
}

#[test]
fn summarize_lists_expected_files_for_an_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["summarize", "--run", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    for f in ["manifest.json", "config.toml", "ppi.tsv", "xi_modal.tsv"] {
        assert!(err.contains(f), "{f} not listed in {err}");
    }
}

#[test]
fn summarize_refuses_mismatched_hashes_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let sim = smoke_dataset(dir.path());
    let fit = dir.path().join("fit");
    smoke_fit(&sim, &fit, &[]);
    let other = dir.path().join("other");
    run_ok(&[
        "simulate",
        "--preset",
        "scaled_scenario1",
        "--seed",
        "77",
        "--out",
        p(&other),
    ]);
    // A truth of the right shape but for other data.
    let spec = dir.path().join("other.toml");
    std::fs::write(&spec, SMOKE_SPEC.replace("seed = 5", "seed = 6")).unwrap();
    run_ok(&["simulate", "--spec", p(&spec), "--out", p(&other)]);
    let out = run(&["summarize", "--run", p(&fit), "--truth", p(&other)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--force"));
    run_ok(&[
        "summarize",
        "--run",
        p(&fit),
        "--truth",
        p(&other),
        "--force",
    ]);

    let config = fit.join("config.toml");
    let edited = String::from_utf8(read(&config))
        .unwrap()
        .replace("inference.fdr = 0.05", "inference.fdr = 0.1");
    std::fs::write(&config, edited).unwrap();
    assert_eq!(run(&["summarize", "--run", p(&fit)]).status.code(), Some(1));
    run_ok(&["summarize", "--run", p(&fit), "--force"]);
}

#[test]
fn diagnose_reports_every_scalar_and_flags_constants() {
    let dir = tempfile::tempdir().unwrap();
    let sim = smoke_dataset(dir.path());
    let fit = dir.path().join("fit");
    smoke_fit(&sim, &fit, &[]);
    run_ok(&["diagnose", "--run", p(&fit)]);
    let trace = String::from_utf8(read(&fit.join("trace.tsv"))).unwrap();
    let labels: Vec<String> = trace
        .lines()
        .next()
        .unwrap()
        .split('\t')
        .skip(1)
        .map(String::from)
        .collect();
    let csv = String::from_utf8(read(&fit.join("diagnostics.csv"))).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), labels.len());
    for (row, label) in rows.iter().zip(&labels) {
        assert!(row.starts_with(&format!("{label},")), "{row}");
    }
    assert!(fit.join("diagnostics.txt").is_file());

    // Replace the first trace column with a constant.
    let injected: String = trace
        .lines()
        .enumerate()
        .map(|(k, line)| {
            let mut fields: Vec<&str> = line.split('\t').collect();
            if k == 0 {
                fields[1] = "constant";
            } else {
                fields[1] = "1.0";
            }
            fields.join("\t") + "\n"
        })
        .collect();
    std::fs::write(fit.join("trace.tsv"), injected).unwrap();
    run_ok(&["diagnose", "--run", p(&fit)]);
    let csv = String::from_utf8(read(&fit.join("diagnostics.csv"))).unwrap();
    assert!(csv
        .lines()
        .any(|l| l.starts_with("constant,") && l.contains(",degenerate,")));
    let report = String::from_utf8(read(&fit.join("diagnostics.txt"))).unwrap();
    assert!(report
        .lines()
        .any(|l| l.starts_with("constant") && l.ends_with("degenerate")));
}

#[test]
fn exit_codes_separate_usage_from_runtime_failures() {
    assert_eq!(run(&["fit", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "fit",
        "--set",
        "sampler.iteration=5",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sampler.iteration"));
    let out = run(&[
        "fit",
        "--set",
        "sampler.burn_in=10",
        "--iterations",
        "5",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    // Missing inputs are a runtime failure that names the file.
    let missing = dir.path().join("nowhere/Y.tsv");
    let arg = format!("data.y={}", missing.display());
    let out = run(&["fit", "--set", &arg, "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere"));
}
