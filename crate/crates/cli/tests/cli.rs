use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sim"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn write_scenario(dir: &Path, body: &str) -> String {
    let p = dir.join("scenario.json");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn run_writes_summary_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), r#"{"schema": 1, "node_count": 20, "duration": 10}"#);
    let out = sim(
        &[
            "run",
            &sc,
            "--seed",
            "42",
            "--seed",
            "7",
            "--out",
            "res",
            "--jobs",
            "2",
            "--trace-messages",
            "--trace-positions",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let res = dir.path().join("res");
    let summary = fs::read_to_string(res.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
    let run = res.join("runs/aomr-lm-n20-seed42");
    let log = fs::read_to_string(run.join("messages.log")).unwrap();
    assert!(log.contains("\nHELLO\norigin="));
    let pos = fs::read_to_string(run.join("positions.csv")).unwrap();
    assert!(pos.starts_with("t,node,x,y\n"));
    assert!(run.join("exhaustion.csv").is_file());

    let curves = sim(&["curves", "res"], dir.path());
    assert_eq!(curves.status.code(), Some(0));
    let energy = fs::read_to_string(res.join("energy_curve.csv")).unwrap();
    assert!(energy.starts_with("x,y,series\n"));
    assert!(energy.contains(",aomdv\n") && energy.contains(",aomr-lm\n"));
}

#[test]
fn protocol_and_seed_count_flags() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), r#"{"node_count": 20, "duration": 5}"#);
    let out = sim(
        &["run", &sc, "--seeds", "3", "--protocol", "aomdv", "--out", "o"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let summary = fs::read_to_string(dir.path().join("o/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    assert!(summary.lines().skip(1).all(|l| l.contains(",aomdv,20,")));
    let agg = fs::read_to_string(dir.path().join("o/aggregate.csv")).unwrap();
    assert_eq!(agg.lines().count(), 2);
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), r#"{"node_count": 0}"#);
    let out = sim(&["run", &sc], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("node_count"));

    let out = sim(&["run", &sc, "--protocol", "olsr"], dir.path());
    assert_eq!(out.status.code(), Some(1));

    let out = sim(&["run", "missing.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));

    let out = sim(&["alpha-table", "--t-net", "2"], dir.path());
    assert_eq!(out.status.code(), Some(1));

    let out = sim(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), r#"{"node_count": 20, "duration": 2, "seeds": 1}"#);
    fs::write(dir.path().join("blocker"), "").unwrap();
    let out = sim(&["run", &sc, "--out", "blocker/sub"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn alpha_table_prints_and_writes() {
    let dir = tempfile::tempdir().unwrap();
    let out = sim(&["alpha-table"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("   50     0.5743"), "{stdout}");
    assert_eq!(stdout.matches("divergent").count(), 2);
    let csv = fs::read_to_string(dir.path().join("alpha_table.csv")).unwrap();
    assert!(csv.starts_with("k,alpha_min,published,divergent\n"));
    assert!(csv.contains("\n90,0.734"));

    let out = sim(&["alpha-table", "--t-net", "0.5", "--k", "1,2", "--out", "t"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("t/alpha_table.csv")).unwrap();
    assert!(csv.contains("\n1,0.500000,,false\n"));
}

#[test]
fn empty_scenario_file_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "");
    let out = sim(
        &["run", &sc, "--seed", "1", "--nodes", "20", "--protocol", "aomr-lm", "--out", "o"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let resolved = fs::read_to_string(dir.path().join("o/scenario.json")).unwrap();
    assert!(resolved.contains("\"schema\": 1"));
}

#[test]
fn curves_on_empty_dir_are_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = sim(&["curves", "."], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        fs::read_to_string(dir.path().join("lifetime_curve.csv")).unwrap(),
        "x,y,series\n"
    );
    let out = sim(&["curves", "nope"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}
