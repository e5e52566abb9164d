//! End-to-end tests of the command-line binary: exit codes, validate-only
//! mode, artifact selection, and config-file/flag precedence.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture_csv() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/glioma_fixture.csv")
}

fn schema_json() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/glioma_schema.json")
}

fn psmatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psmatch"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn full_run_emits_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let output = psmatch(&[
        "--input",
        fixture_csv().to_str().unwrap(),
        "--schema",
        schema_json().to_str().unwrap(),
        "--seed",
        "3",
        "--replicates",
        "200",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    for name in [
        "report.json",
        "balance.csv",
        "pairs.csv",
        "histograms.csv",
        "loveplot.csv",
        "loveplot.svg",
    ] {
        assert!(out.join(name).exists(), "missing {name}");
    }
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("matched pairs"), "{stdout}");
    assert!(stdout.contains("OR"), "{stdout}");
}

#[test]
fn emit_subset_writes_only_requested_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let output = psmatch(&[
        "--input",
        fixture_csv().to_str().unwrap(),
        "--seed",
        "3",
        "--replicates",
        "200",
        "--emit",
        "report_json,pairs_csv",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    assert!(out.join("report.json").exists());
    assert!(out.join("pairs.csv").exists());
    assert!(!out.join("balance.csv").exists());
    assert!(!out.join("loveplot.svg").exists());
}

#[test]
fn validate_only_passes_on_good_input() {
    let output = psmatch(&[
        "--input",
        fixture_csv().to_str().unwrap(),
        "--seed",
        "1",
        "--validate-only",
    ]);
    assert!(output.status.success());
    assert!(String::from_utf8_lossy(&output.stdout).contains("ok"));
}

#[test]
fn validate_only_reports_missing_seed() {
    let output = psmatch(&[
        "--input",
        fixture_csv().to_str().unwrap(),
        "--validate-only",
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stdout).contains("MissingSeed"));
}

#[test]
fn missing_input_exits_2() {
    let output = psmatch(&["--input", "/nonexistent.csv", "--seed", "1"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn malformed_csv_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, "Age,Gender\nnot-a-number,1\n").unwrap();
    let output = psmatch(&["--input", bad.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn zero_caliper_succeeds_without_effects() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let output = psmatch(&[
        "--input",
        fixture_csv().to_str().unwrap(),
        "--seed",
        "3",
        "--caliper",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("not computed"), "{stdout}");
}

#[test]
fn config_file_applies_and_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    let out_cfg = tmp.path().join("from_config");
    let out_flag = tmp.path().join("from_flag");
    let cfg = tmp.path().join("run.conf");
    std::fs::write(
        &cfg,
        format!(
            "# run settings\ninput = {}\nseed = 5\nreplicates = 200\nout = {}\n",
            fixture_csv().display(),
            out_cfg.display()
        ),
    )
    .unwrap();
    let output = psmatch(&["--config", cfg.to_str().unwrap()]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(out_cfg.join("report.json").exists());

    // The flag wins over the file value.
    let output = psmatch(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_flag.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    assert!(out_flag.join("report.json").exists());
}

#[test]
fn bad_config_key_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.conf");
    std::fs::write(&cfg, "bogus_key = 1\n").unwrap();
    let output = psmatch(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn descending_order_needs_no_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let output = psmatch(&[
        "--input",
        fixture_csv().to_str().unwrap(),
        "--order",
        "descending",
        "--replicates",
        "200",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
}

#[test]
fn env_var_sets_default_output_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("from_env");
    let output = Command::new(env!("CARGO_BIN_EXE_psmatch"))
        .env("PSMATCH_OUT", &out)
        .args([
            "--input",
            fixture_csv().to_str().unwrap(),
            "--seed",
            "3",
            "--replicates",
            "200",
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    assert!(out.join("report.json").exists());
}

#[test]
fn emitted_pairs_and_balance_csvs_reparse() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let output = psmatch(&[
        "--input",
        fixture_csv().to_str().unwrap(),
        "--seed",
        "3",
        "--replicates",
        "200",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    for name in ["pairs.csv", "balance.csv", "histograms.csv", "loveplot.csv"] {
        let text = std::fs::read_to_string(out.join(name)).unwrap();
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let rows: Result<Vec<csv::StringRecord>, _> = reader.records().collect();
        assert!(!rows.unwrap().is_empty(), "{name} has no data rows");
    }
}
