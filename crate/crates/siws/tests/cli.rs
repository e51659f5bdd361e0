use std::fs;
use std::path::Path;

use siws::cli::{run, EXIT_INVALID, EXIT_NEGATIVE, EXIT_OK};
use siws::csv_io::read_trajectory;
use siws::experiments::{Bundle, NAMED_EXPERIMENTS};
use siws_core::stability::Certificate;

const TOY: &str = r#"{
  "name": "toy",
  "shape": {"n": 2, "q": 1, "m": 1, "h": 0.5},
  "viruses": [{"frames": [{
    "beta": [0.2, 0.2], "delta": [1.0, 1.0], "adjacency": [[0.5, 0.5], [0.5, 0.5]],
    "beta_w": [[0.2], [0.2]], "c_w": [[0.3, 0.3]], "alpha_w": [[0.0]],
    "delta_w": [1.0], "w_max": 1.0
  }]}],
  "initial": {"x_ranges": [[0.0, 0.5]], "w_ranges": [[0.0, 1.0]]},
  "seed": 3
}"#;

fn cli(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(std::iter::once("siws").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn check_names_the_violated_assumption() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.json",
        &TOY.replace("\"delta\": [1.0, 1.0]", "\"delta\": [0.0, 1.0]"),
    );
    let (code, out, _) = cli(&["check", "--config", &bad]);
    assert_eq!(code, EXIT_NEGATIVE);
    assert!(out.contains("FAIL  Assumption 2"), "{out}");
    let good = write(dir.path(), "good.json", TOY);
    assert_eq!(cli(&["check", "--config", &good]).0, EXIT_OK);
}

#[test]
fn malformed_config_reports_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.json",
        &TOY.replace("\"w_max\": 1.0", "\"w_max\": \"one\""),
    );
    let (code, _, err) = cli(&["certify", "--config", &bad]);
    assert_eq!(code, EXIT_INVALID);
    assert!(err.contains("line 7") && err.contains("w_max"), "{err}");
    let (code, _, err) = cli(&["check", "--config", "/nonexistent/config.json"]);
    assert_eq!(code, EXIT_INVALID);
    assert!(err.contains("cannot read"), "{err}");
}

#[test]
fn kappa_on_constant_schedule_is_certified_with_zero_variation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "toy.json", TOY);
    let (code, out, _) = cli(&["kappa", "--config", &cfg, "--format", "json"]);
    assert_eq!(code, EXIT_OK);
    let rows: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(rows[0]["certified"], true);
    assert_eq!(rows[0]["constants"]["kappa_obs"], 0.0);
}

#[test]
fn simulate_artifacts_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "toy.json", TOY);
    let out_dir = dir.path().join("out");
    let (code, _, err) = cli(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
        "--per-node",
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    let bundle: Bundle = serde_json::from_str(&fs::read_to_string(out_dir.join("toy_3.json")).unwrap()).unwrap();
    let summary = bundle.summary.as_ref().unwrap();
    let rows = read_trajectory(&fs::read_to_string(out_dir.join("toy_3.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), summary.steps + 1);
    assert_eq!((rows[0].x.len(), rows[0].w.len()), (2, 1));
    let last = rows.last().unwrap();
    assert!((last.xbar - summary.viruses[0].xbar_final).abs() <= 1e-11 * summary.viruses[0].xbar_final);
    assert!(summary.viruses[0].eradicated && summary.viruses[0].fitted_gamma.unwrap() < 1.0);
}

#[test]
fn zero_initial_state_gives_zero_rows() {
    let dir = tempfile::tempdir().unwrap();
    let zero = TOY.replace(
        "\"initial\": {\"x_ranges\": [[0.0, 0.5]], \"w_ranges\": [[0.0, 1.0]]}",
        "\"initial_state\": {\"x\": [[0.0, 0.0]], \"w\": [[0.0]]}, \"horizon\": 20",
    );
    let cfg = write(dir.path(), "zero.json", &zero);
    let out_dir = dir.path().join("out");
    assert_eq!(
        cli(&["simulate", "--config", &cfg, "--out", out_dir.to_str().unwrap()]).0,
        EXIT_OK
    );
    let rows = read_trajectory(&fs::read_to_string(out_dir.join("toy_3.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 21);
    assert!(rows.iter().all(|r| r.xbar == 0.0 && r.wbar == 0.0));
}

#[test]
fn violated_assumptions_yield_report_without_rollout() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", &TOY.replace("\"h\": 0.5", "\"h\": 2.0"));
    let out_dir = dir.path().join("out");
    let (code, out, _) = cli(&["simulate", "--config", &bad, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code, EXIT_NEGATIVE);
    assert!(out.contains("FAIL  Assumption 4"), "{out}");
    assert!(out_dir.join("toy_3.json").exists());
    assert!(!out_dir.join("toy_3.csv").exists());
}

#[test]
fn certify_json_round_trips_and_sets_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let fig3 = write(dir.path(), "fig3.json", NAMED_EXPERIMENTS[1].1);
    let (code, out, _) = cli(&["certify", "--config", &fig3, "--format", "json"]);
    assert_eq!(code, EXIT_OK);
    let certs: Vec<Vec<Certificate>> = serde_json::from_str(&out).unwrap();
    assert!(certs.iter().all(|a| a.last().unwrap().is_certified()));
    assert_eq!(serde_json::to_string_pretty(&certs).unwrap() + "\n", out);

    let fig2 = write(dir.path(), "fig2.json", NAMED_EXPERIMENTS[0].1);
    let (code, out, _) = cli(&["certify", "--config", &fig2, "--all"]);
    assert_eq!(code, EXIT_NEGATIVE);
    assert!(out.contains("NOT CERTIFIED"), "{out}");
}

#[test]
fn compare_r0_alias_and_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let fig2 = write(dir.path(), "fig2.json", NAMED_EXPERIMENTS[0].1);
    let (code, out, _) = cli(&["compare-R0", "--config", &fig2, "--format", "json"]);
    assert_eq!(code, EXIT_OK);
    let rows: serde_json::Value = serde_json::from_str(&out).unwrap();
    for row in rows.as_array().unwrap() {
        assert_eq!(row["comparison"]["ordering_holds"], true);
    }
}

#[test]
fn reproduce_rejects_unknown_names() {
    let (code, _, err) = cli(&["reproduce", "fig9"]);
    assert_eq!(code, EXIT_INVALID);
    assert!(err.contains("unknown experiment"), "{err}");
}

#[test]
fn help_exits_cleanly() {
    let (code, out, _) = cli(&["--help"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("reproduce") && out.contains("compare-r0"));
}
