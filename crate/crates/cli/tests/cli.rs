use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use compositionality::jdc::{check, Feasibility, JdcConfig};
use compositionality::CombinationTable;
use compositionality_cli::report::fmt6;
use compositionality_cli::{run_with_solver, Cli, EXIT_COUNTEREXAMPLE};
use clap::Parser;
use serde_json::Value;

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
        .display()
        .to_string()
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_compositionality"))
        .args(args)
        .env_remove("CONTEXTUALITY_CONFIG")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn analyze_toast_gag_with_override() {
    let o = cli(&["analyze", &fixture("toastgag.json"), "--format", "table", "--override-ms"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["schema_version"], 1);
    let c = &v["combinations"][0];
    assert_eq!(c["name"], "toast gag");
    assert_eq!(c["verdict"], "compositional");
    assert!((c["max_abs_chsh"].as_f64().unwrap() - 1.25).abs() < 1e-12);
    assert_eq!(c["jdc_result"]["status"], "feasible");
    assert_eq!(c["ms_overridden"], true);
}

#[test]
fn analyze_apple_chip_strict() {
    let o = cli(&["analyze", &fixture("applechip.json"), "--format", "table", "--ms", "strict"]);
    assert_eq!(o.status.code(), Some(0));
    let c = &json(&o)["combinations"][0];
    assert_eq!(c["verdict"], "non-compositional (marginal selectivity)");
    assert!(c["chsh_report"].is_null());
    assert_eq!(c["jdc_result"]["status"], "infeasible");
}

#[test]
fn missing_input_is_exit_two() {
    let o = cli(&["analyze", "missing.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.csv"));
}

#[test]
fn classify_lines() {
    let o = cli(&["classify", &fixture("violation.json")]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "hypothetical\tnon-compositional\t2.06\n");
    let o = cli(&["classify", &fixture("toastgag.json"), "--override-ms"]);
    assert_eq!(stdout(&o), "toast gag\tcompositional\t1.25\n");
}

#[test]
fn empty_table_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["classify", dir.path().to_str().unwrap(), "--format", "tabledir"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
}

#[test]
fn malformed_table_in_directory_is_isolated() {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(fixture("toastgag.json"), dir.path().join("a.json")).unwrap();
    fs::write(
        dir.path().join("b.json"),
        r#"{"a1b1":[0.5,0.3,0.1,0],"a1b2":[1,0,0,0],"a2b1":[1,0,0,0],"a2b2":[1,0,0,0]}"#,
    )
    .unwrap();
    fs::copy(fixture("violation.json"), dir.path().join("c.json")).unwrap();
    let o = cli(&["analyze", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let v = json(&o);
    let names: Vec<&str> = v["combinations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["toast gag", "hypothetical"]);
    assert_eq!(v["errors"].as_array().unwrap().len(), 1);
    assert!(v["errors"][0]["message"].as_str().unwrap().contains("a1b1"));
}

#[test]
fn malformed_trials_report_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    fs::write(&path, "combination,a_index,b_index,a_outcome,b_outcome\ntoast gag,3,1,+1,+1\n").unwrap();
    let o = cli(&["analyze", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2") && err.contains("a_index"), "{err}");
}

#[test]
fn incomplete_trials_are_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    fs::write(&path, "combination,a_index,b_index,a_outcome,b_outcome\nx,1,1,+1,+1\n").unwrap();
    let o = cli(&["classify", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("A1xB2"));
}

#[test]
fn statistical_mode_needs_counts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bare.json");
    fs::write(
        &path,
        r#"{"name":"bare","a1b1":[0.25,0.25,0.25,0.25],"a1b2":[0.25,0.25,0.25,0.25],"a2b1":[0.25,0.25,0.25,0.25],"a2b2":[0.25,0.25,0.25,0.25]}"#,
    )
    .unwrap();
    let o = cli(&["classify", path.to_str().unwrap(), "--ms", "statistical"]);
    assert_eq!(o.status.code(), Some(2));
    let o = cli(&["classify", path.to_str().unwrap()]);
    assert_eq!(stdout(&o), "bare\tcompositional\t0.00\n");
}

#[test]
fn exhausted_pivot_budget_is_exit_three() {
    let o = cli(&["classify", &fixture("violation.json"), "--pivot-budget", "1"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn synth_round_trip_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = cli(&["synth", "--truth", &fixture("violation.json"), "--n", "100", "--seed", "7", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    let text = fs::read(&a).unwrap();
    assert_eq!(text, fs::read(&b).unwrap());
    assert_eq!(String::from_utf8(text).unwrap().lines().count(), 401);
    let meta: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("a.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 7);
    assert!(meta["generator"].as_str().unwrap().contains("chacha20"));
    let o = cli(&["analyze", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&o)["combinations"][0]["name"], "hypothetical");
}

#[test]
fn synth_rejects_zero_trials() {
    let o = cli(&["synth", "--truth", &fixture("violation.json"), "--n", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_small_run_and_usage() {
    let o = cli(&["oracle", "--trials", "20", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).ends_with("0 counterexamples\n"));
    assert_eq!(cli(&["oracle", "--trials", "0"]).status.code(), Some(2));
}

#[test]
fn oracle_catches_a_broken_solver() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["compositionality", "oracle", "--trials", "3", "--out", dir.path().to_str().unwrap()];
    let parsed = Cli::try_parse_from(args).unwrap();
    let always_feasible = |t: &CombinationTable, cfg: &JdcConfig| {
        let mut r = check(t, cfg)?;
        r.status = Feasibility::Feasible;
        Ok(r)
    };
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run_with_solver(&parsed, always_feasible, &mut out, &mut err);
    assert_eq!(code, EXIT_COUNTEREXAMPLE);
    let dumped: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
    assert!(!dumped.is_empty());
    let first: Value = serde_json::from_str(&fs::read_to_string(dumped[0].as_ref().unwrap().path()).unwrap()).unwrap();
    assert!(first["table"]["a1b1"].is_array() || first["table"]["a1b1"].is_object());
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "ms = \"strict\"\noutput = \"text\"\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_compositionality"))
        .args(["analyze", &fixture("toastgag.json")])
        .env("CONTEXTUALITY_CONFIG", &cfg)
        .output()
        .unwrap();
    let text = stdout(&o);
    assert!(text.contains("marginal selectivity: fails (strict"), "{text}");
    let o = Command::new(env!("CARGO_BIN_EXE_compositionality"))
        .args(["analyze", &fixture("toastgag.json"), "--ms", "statistical", "--json"])
        .env("CONTEXTUALITY_CONFIG", &cfg)
        .output()
        .unwrap();
    assert_eq!(json(&o)["combinations"][0]["ms_report"]["mode"], "statistical");
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "alhpa = 1\n").unwrap();
    let o = cli(&["--config", bad.to_str().unwrap(), "analyze", &fixture("toastgag.json")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn alpha_flag_derives_the_critical_value() {
    let o = cli(&["analyze", &fixture("toastgag.json"), "--alpha", "0.05"]);
    let v = json(&o);
    let cv = v["config"]["selectivity"]["critical_value"].as_f64().unwrap();
    assert!((cv - 3.841458820694124).abs() < 1e-9);
    assert_eq!(cli(&["analyze", &fixture("toastgag.json"), "--alpha", "1.5"]).status.code(), Some(2));
}

#[test]
fn text_and_json_agree_to_six_digits() {
    let j = json(&cli(&["analyze", &fixture("toastgag.json"), "--override-ms"]));
    let text = stdout(&cli(&["analyze", &fixture("toastgag.json"), "--override-ms", "--text"]));
    let c = &j["combinations"][0];
    let mut numbers: Vec<f64> = Vec::new();
    for key in ["e_values", "variant_values"] {
        numbers.extend(c["chsh_report"][key].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()));
    }
    numbers.extend(c["bellch_report"]["expressions"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()));
    numbers.extend(c["ms_report"]["chi_squares"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()));
    numbers.extend(c["ms_report"]["diffs"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()));
    numbers.push(c["max_abs_chsh"].as_f64().unwrap());
    numbers.push(c["jdc_result"]["residual"].as_f64().unwrap());
    let tokens: Vec<&str> = text.split(|ch: char| ch.is_whitespace() || ch == ',').collect();
    for x in numbers {
        assert!(tokens.contains(&fmt6(x).as_str()), "{} missing from text", fmt6(x));
    }
}
