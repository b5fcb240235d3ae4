//! End-to-end tests of the `coopgrid` binary: subcommand behavior, exit
//! codes, and byte-level parity with library-produced reports.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coopgrid"))
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(output: &Output) -> serde_json::Value {
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    serde_json::from_slice(&output.stdout).expect("stdout is JSON")
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("no signal")
}

fn write_temp(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, contents).unwrap();
    path
}

#[test]
fn allocate_from_injected_table_reproduces_reference_values() {
    let output = run(&[
        "allocate",
        "--game-table",
        fixture("unstable_cost_table.json").to_str().unwrap(),
    ]);
    let report = stdout_json(&output);
    assert_eq!(report["allocation"]["method"], "fair_lp");
    assert_eq!(report["allocation"]["in_core"], true);

    let costs: Vec<f64> = report["allocation"]["per_user"]
        .as_array()
        .unwrap()
        .iter()
        .map(|u| u["cost"].as_f64().unwrap())
        .collect();
    let expected = [24881.0, 20323.0, 20970.0];
    for (got, want) in costs.iter().zip(expected) {
        assert!((got - want).abs() <= 2.0, "{got} vs {want}");
    }

    let records = report["core_check"].as_array().unwrap();
    assert_eq!(records.len(), 7);
    assert!(records.iter().all(|r| r["satisfied"].as_bool().unwrap()));

    let delta = report["allocation"]["fairness"]["delta"].as_f64().unwrap();
    assert!((delta - 0.02138).abs() < 1e-3);
}

#[test]
fn forced_shapley_on_unstable_game_exits_two() {
    let output = run(&[
        "allocate",
        "--game-table",
        fixture("unstable_cost_table.json").to_str().unwrap(),
        "--method",
        "shapley",
    ]);
    assert_eq!(exit_code(&output), 2);
    let report: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(report["allocation"]["method"], "shapley");
    assert_eq!(report["allocation"]["in_core"], false);
}

#[test]
fn allocate_on_scenario_is_stable() {
    let output = run(&[
        "allocate",
        "--scenario",
        fixture("counterexample_scenario.json").to_str().unwrap(),
    ]);
    let report = stdout_json(&output);
    assert_eq!(report["allocation"]["in_core"], true);
    assert_eq!(report["coalition"]["cost"].as_f64().unwrap(), 5.0);
}

#[test]
fn allocate_input_validation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let both = run(&[
        "allocate",
        "--scenario",
        fixture("counterexample_scenario.json").to_str().unwrap(),
        "--game-table",
        fixture("unstable_cost_table.json").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&both), 1);

    let neither = run(&["allocate"]);
    assert_eq!(exit_code(&neither), 1);

    let plot_dir = dir.path().join("plots");
    let plot_with_table = run(&[
        "allocate",
        "--game-table",
        fixture("unstable_cost_table.json").to_str().unwrap(),
        "--plot-data",
        plot_dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&plot_with_table), 1);

    let missing = run(&["allocate", "--scenario", "/nonexistent/path.json"]);
    assert_eq!(exit_code(&missing), 1);
}

#[test]
fn empty_core_table_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    // v({1,2}) far above the singleton split: efficiency cannot hold.
    let table = write_temp(
        dir.path(),
        "empty_core.json",
        r#"{
          "users": ["a", "b"],
          "values": [
            {"coalition": ["a"], "cost": 10.0},
            {"coalition": ["b"], "cost": 10.0},
            {"coalition": ["a", "b"], "cost": 30.0}
          ]
        }"#,
    );
    let output = run(&["allocate", "--game-table", table.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 2);
}

#[test]
fn invalid_scenario_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_temp(
        dir.path(),
        "bad.json",
        r#"{
          "time_grid": {"interval_count": 2, "interval_length_hours": 1.0},
          "tariff": {"tou_prices": [1.0, 1.0], "demand_charge": 0.0},
          "microgrids": [{"id": "a", "demand": [-1.0, 2.0]}]
        }"#,
    );
    let output = run(&["individual", "--scenario", scenario.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 1);
    assert!(String::from_utf8_lossy(&output.stderr).contains("non-negative"));
}

#[test]
fn individual_reports_non_coop_total() {
    let output = run(&[
        "individual",
        "--scenario",
        fixture("counterexample_scenario.json").to_str().unwrap(),
    ]);
    let report = stdout_json(&output);
    assert_eq!(report["individual"]["total_non_coop"].as_f64().unwrap(), 7.0);
}

#[test]
fn coalition_emits_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let plots = dir.path().join("plots");
    let output = run(&[
        "coalition",
        "--scenario",
        fixture("counterexample_scenario.json").to_str().unwrap(),
        "--plot-data",
        plots.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0);

    let aggregate = fs::read_to_string(plots.join("aggregate.csv")).unwrap();
    let mut lines = aggregate.lines();
    assert_eq!(lines.next().unwrap(), "t,sum_individual_x,coop_x");
    let coop_peak = lines
        .map(|l| l.split(',').nth(2).unwrap().parse::<f64>().unwrap())
        .fold(f64::MIN, f64::max);
    assert_eq!(coop_peak, 5.0);
    assert!(plots.join("user_profiles.csv").exists());
}

#[test]
fn game_table_output_feeds_allocate() {
    let dir = tempfile::tempdir().unwrap();
    let table_path = dir.path().join("table.json");
    let build = run(&[
        "game-table",
        "--scenario",
        fixture("counterexample_scenario.json").to_str().unwrap(),
        "--out",
        table_path.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&build), 0);

    let allocate = run(&["allocate", "--game-table", table_path.to_str().unwrap()]);
    let report = stdout_json(&allocate);
    assert_eq!(report["coalition"]["cost"].as_f64().unwrap(), 5.0);
    assert_eq!(report["allocation"]["in_core"], true);
}

#[test]
fn audit_lists_the_submodularity_violation() {
    let output = run(&[
        "audit",
        "--scenario",
        fixture("counterexample_scenario.json").to_str().unwrap(),
    ]);
    let report = stdout_json(&output);
    let audit = &report["audit"];
    assert_eq!(audit["subadditivity_violations"].as_array().unwrap().len(), 0);
    let submodularity = audit["submodularity_violations"].as_array().unwrap();
    assert!(submodularity.iter().any(|v| {
        v["smaller"] == serde_json::json!(["1"])
            && v["larger"] == serde_json::json!(["1", "2"])
            && v["user"] == "3"
    }));
}

#[test]
fn random_audit_runs_clean() {
    let output = run(&["audit", "--random", "4", "--seed", "5", "--steps", "5"]);
    let report = stdout_json(&output);
    assert_eq!(report["audit"]["scenarios_checked"].as_u64().unwrap(), 4);
    assert_eq!(
        report["audit"]["subadditivity_violations"]
            .as_array()
            .unwrap()
            .len(),
        0
    );
}

#[test]
fn audit_needs_exactly_one_input() {
    assert_eq!(exit_code(&run(&["audit"])), 1);
    let both = run(&[
        "audit",
        "--scenario",
        fixture("counterexample_scenario.json").to_str().unwrap(),
        "--random",
        "3",
    ]);
    assert_eq!(exit_code(&both), 1);
}

// Reports written by the CLI are byte-identical to reports produced by the
// library for the same inputs.
#[test]
fn cli_reports_match_library_reports_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let cli_path = dir.path().join("cli.json");
    let output = run(&[
        "allocate",
        "--scenario",
        fixture("counterexample_scenario.json").to_str().unwrap(),
        "--out",
        cli_path.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0);

    let scenario = coopgrid::io::load_scenario(fixture("counterexample_scenario.json")).unwrap();
    let run = coopgrid::pipeline::cmd_allocate(
        &scenario,
        &coopgrid::pipeline::AllocateOptions::default(),
    )
    .unwrap();
    let lib_path = dir.path().join("lib.json");
    coopgrid::io::write_report(&run.report, &lib_path, coopgrid::io::ReportFormat::Json).unwrap();

    assert_eq!(fs::read(&cli_path).unwrap(), fs::read(&lib_path).unwrap());
}
