//! End-to-end tests of the command-line binary: exit codes, configuration
//! precedence, JSON/CSV output shapes, and byte-level reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pca-risk"));
    // Seed resolution must be driven by the test itself, not the caller's
    // environment.
    cmd.env_remove("PCA_RISK_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary should spawn")
}

fn stdout_str(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout is UTF-8")
}

fn stderr_str(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("stderr is UTF-8")
}

/// Extract the one-line resolved-config JSON echoed before execution.
fn resolved_config(out: &Output) -> Value {
    let text = stdout_str(out);
    let line = text
        .lines()
        .find_map(|l| l.strip_prefix("resolved config: "))
        .expect("run should echo its resolved config");
    serde_json::from_str(line).expect("resolved config is valid JSON")
}

/// Parse the first JSON document (object or array) that starts at column 0.
fn first_json_block(text: &str) -> Value {
    let start = text
        .lines()
        .scan(0usize, |offset, line| {
            let here = *offset;
            *offset += line.len() + 1;
            Some((here, line))
        })
        .find(|(_, line)| line.starts_with('{') || line.starts_with('['))
        .map(|(offset, _)| offset)
        .expect("output should contain a JSON block");
    let mut depth = 0i64;
    let bytes = text.as_bytes();
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        match b {
            b'{' | b'[' => depth += 1,
            b'}' | b']' => {
                depth -= 1;
                if depth == 0 {
                    return serde_json::from_str(&text[start..=i])
                        .expect("JSON block should parse");
                }
            }
            _ => {}
        }
    }
    panic!("unterminated JSON block");
}

#[test]
fn unknown_verb_and_flag_exit_two_with_usage() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_str(&out).contains("Usage"));

    let out = run(&["figure1", "--bogus", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_str(&out).contains("Usage"));
}

#[test]
fn verify_identities_passes_and_reports_json() {
    let out = run(&[
        "verify-identities",
        "--p",
        "6",
        "--d",
        "2",
        "--n",
        "80",
        "--reps",
        "20",
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_str(&out));
    let text = stdout_str(&out);
    assert!(text.starts_with("resolved config: "));
    let summary = first_json_block(&text);
    assert_eq!(summary["pass"], Value::Bool(true));
    assert_eq!(summary["failures"], 0);
    assert_eq!(summary["instances"], 20);
    assert!(summary["checks"].as_u64().unwrap() > 0);
}

#[test]
fn bounds_prints_json_array_with_frozen_headline_value() {
    let out = run(&[
        "bounds", "--model", "spiked", "--x", "1", "--p", "40", "--d", "15", "--n", "500",
        "--which", "all",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_str(&out));
    let records = first_json_block(&stdout_str(&out));
    let arr = records.as_array().expect("bounds emits a JSON array");
    assert!(arr.len() >= 12, "expected the full record set, got {}", arr.len());
    let erm = arr
        .iter()
        .find(|r| r["name"] == "erm_delta_expected")
        .expect("record set includes erm_delta_expected");
    // sqrt(4 * 15) * tr / sqrt(500) with trace 15 * 2 + 25 = 55 for the
    // unit-spike model; the 1/n branch (4 * 55^2 / 500 = 24.2) loses.
    let expected = (4.0f64 * 15.0).sqrt() * 55.0 / 500.0f64.sqrt();
    assert!((erm["value"].as_f64().unwrap() - expected).abs() <= 1e-12);
    let spiked = arr.iter().filter(|r| {
        r["name"] == "spiked_upper" || r["name"] == "spiked_lower"
    });
    assert_eq!(spiked.count(), 2, "spiked model includes both envelope records");
}

#[test]
fn bounds_subset_selection_and_unknown_name() {
    let out = run(&[
        "bounds", "--model", "spiked", "--x", "1", "--p", "12", "--d", "3", "--n", "200",
        "--which", "minima_leading,minima_trailing",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let arr = first_json_block(&stdout_str(&out));
    let names: Vec<&str> = arr
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["minima_leading", "minima_trailing"]);

    let out = run(&[
        "bounds", "--model", "spiked", "--p", "12", "--d", "3", "--which", "no_such_bound",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_str(&out).contains("no_such_bound"));
}

#[test]
fn tied_spectrum_evaluates_to_the_literal_formula_value() {
    // At a tied split the per-term minimum takes its gap branch: the record
    // is the formula's literal value (zero), not an error, and the run
    // still exits cleanly. Soundness of that number is the caller's gap
    // hypothesis, exactly as with failed condition flags.
    let out = run(&[
        "bounds",
        "--model",
        "custom",
        "--values",
        "1,1,0.5",
        "--d",
        "1",
        "--n",
        "100",
        "--which",
        "minima_leading",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_str(&out));
    let arr = first_json_block(&stdout_str(&out));
    assert_eq!(arr[0]["name"], "minima_leading");
    assert_eq!(arr[0]["value"], 0.0);
}

#[test]
fn unwritable_output_path_exits_one() {
    let out = run(&[
        "figure1",
        "--n",
        "50",
        "--p",
        "6",
        "--d",
        "2",
        "--reps",
        "5",
        "--seed",
        "1",
        "--out",
        "/nonexistent-dir/fig1.csv",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!stderr_str(&out).is_empty());
}

#[test]
fn figure1_runs_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().expect("tempdir");
    let csv_a = dir.path().join("a.csv");
    let csv_b = dir.path().join("b.csv");
    let args = |csv: &Path, threads: &str| {
        vec![
            "figure1".to_string(),
            "--n".into(),
            "50".into(),
            "--p".into(),
            "6".into(),
            "--d".into(),
            "2".into(),
            "--reps".into(),
            "30".into(),
            "--seed".into(),
            "7".into(),
            "--x-max".into(),
            "0.2".into(),
            "--x-step".into(),
            "0.1".into(),
            "--out".into(),
            csv.display().to_string(),
            "--threads".into(),
            threads.into(),
        ]
    };
    let out_a = bin().args(args(&csv_a, "1")).output().unwrap();
    let out_b = bin().args(args(&csv_b, "3")).output().unwrap();
    assert_eq!(out_a.status.code(), Some(0), "stderr: {}", stderr_str(&out_a));
    assert_eq!(out_b.status.code(), Some(0), "stderr: {}", stderr_str(&out_b));

    let bytes_a = fs::read(&csv_a).unwrap();
    let bytes_b = fs::read(&csv_b).unwrap();
    assert!(!bytes_a.is_empty());
    assert_eq!(bytes_a, bytes_b, "thread count changed the CSV bytes");

    let header = String::from_utf8(bytes_a).unwrap();
    assert!(header.starts_with("x,mc_mean,mc_stderr,erm_curve,global_curve,scm_curve\n"));

    // Manifests exist beside both files and agree on everything but timing.
    let mut manifest_a: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a.manifest.json")).unwrap())
            .unwrap();
    let mut manifest_b: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("b.manifest.json")).unwrap())
            .unwrap();
    manifest_a["wall_time_seconds"] = Value::Null;
    manifest_b["wall_time_seconds"] = Value::Null;
    assert_eq!(manifest_a, manifest_b);
}

#[test]
fn config_file_env_and_flag_precedence_for_seed() {
    let dir = tempfile::tempdir().expect("tempdir");
    let conf = dir.path().join("run.conf");
    fs::write(&conf, "seed=11\nn=80\nreps=10\np=6\nd=2\n").unwrap();
    let conf_arg = conf.display().to_string();

    // Config file beats the built-in default.
    let out = run(&["excess-risk", "--config", &conf_arg]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_str(&out));
    let cfg = resolved_config(&out);
    assert_eq!(cfg["base_seed"], 11);
    assert_eq!(cfg["n"], 80);

    // Environment variable fills in when neither flag nor file names a seed.
    let out = bin()
        .args(["excess-risk", "--p", "6", "--d", "2", "--n", "50", "--reps", "10"])
        .env("PCA_RISK_SEED", "99")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(resolved_config(&out)["base_seed"], 99);

    // Explicit flag beats both the file and the environment.
    let out = bin()
        .args([
            "excess-risk",
            "--config",
            &conf_arg,
            "--seed",
            "7",
            "--n",
            "50",
        ])
        .env("PCA_RISK_SEED", "99")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let cfg = resolved_config(&out);
    assert_eq!(cfg["base_seed"], 7);
    assert_eq!(cfg["n"], 50, "flag n overrides the config file");
    assert_eq!(cfg["replications"], 10, "file reps applies when no flag is given");

    // A malformed environment seed is a usage error.
    let out = bin()
        .args(["excess-risk", "--p", "6", "--d", "2", "--n", "50", "--reps", "5"])
        .env("PCA_RISK_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn constants_file_overrides_are_recorded_in_the_manifest() {
    let dir = tempfile::tempdir().expect("tempdir");
    let consts = dir.path().join("constants.txt");
    fs::write(&consts, "c3=2\nc_display=1.3\nc=0.01\n").unwrap();
    let outfile = dir.path().join("records.json");

    let out = run(&[
        "bounds",
        "--model",
        "exponential",
        "--alpha",
        "1",
        "--p",
        "8",
        "--d",
        "2",
        "--n",
        "200",
        "--constants",
        consts.to_str().unwrap(),
        "--out",
        outfile.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_str(&out));

    let manifest: Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("records.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["constants"]["c3"], 2.0);
    assert_eq!(manifest["constants"]["c_display"], 1.3);
    assert_eq!(manifest["constants"]["c_small"], 0.01);
    assert_eq!(manifest["constants"]["c2"], 1.0);

    // The data file holds the same records the run printed.
    let written: Value =
        serde_json::from_str(&fs::read_to_string(&outfile).unwrap()).unwrap();
    assert!(written.as_array().unwrap().len() >= 10);

    // An unknown constant key is a usage error.
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "c9=3\n").unwrap();
    let out = run(&[
        "bounds", "--p", "8", "--d", "2", "--constants", bad.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_verbs_require_an_output_path() {
    for args in [
        vec!["figure1", "--n", "50", "--p", "6", "--d", "2", "--reps", "5"],
        vec!["concentration", "--p", "6", "--d", "2", "--n", "100", "--reps", "5"],
        vec!["asymptotics", "--p", "6", "--d", "2", "--reps", "5"],
        vec!["oracle-ratio", "--p", "6", "--d", "2", "--n", "100", "--reps", "5"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "args: {args:?}");
        assert!(stderr_str(&out).contains("--out"), "args: {args:?}");
    }
}

#[test]
fn concentration_and_oracle_ratio_emit_expected_columns() {
    let dir = tempfile::tempdir().expect("tempdir");
    let conc = dir.path().join("conc.csv");
    let out = run(&[
        "concentration",
        "--model",
        "exponential",
        "--alpha",
        "1",
        "--p",
        "6",
        "--d",
        "2",
        "--n",
        "150",
        "--reps",
        "100",
        "--seed",
        "3",
        "--out",
        conc.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_str(&out));
    let text = fs::read_to_string(&conc).unwrap();
    assert!(text.starts_with(
        "n,x,freq_upper,freq_upper_stderr,bound_upper,upper_condition_ok,\
         freq_lower,freq_lower_stderr,bound_lower,lower_condition_ok\n"
    ));

    let orat = dir.path().join("orat.csv");
    let out = run(&[
        "oracle-ratio",
        "--model",
        "polynomial",
        "--alpha",
        "2",
        "--p",
        "10",
        "--d",
        "2",
        "--d-grid",
        "2,4",
        "--n",
        "150",
        "--reps",
        "50",
        "--seed",
        "5",
        "--out",
        orat.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_str(&out));
    let text = fs::read_to_string(&orat).unwrap();
    assert!(text.starts_with("d,mc_mean,mc_stderr,oracle,ratio\n"));
    assert_eq!(text.lines().count(), 3, "header plus one row per cut dimension");
}
