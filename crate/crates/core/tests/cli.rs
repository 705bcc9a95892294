use std::process::{Command, Output};

use lvt::record::{read_csv, RunRecord};
use lvt::Provenance;

fn lvt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lvt")).args(args).env_remove("LVT_SEED").output().expect("lvt binary runs")
}

fn record(out: &Output) -> RunRecord {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    RunRecord::from_json(std::str::from_utf8(&out.stdout).unwrap()).unwrap()
}

#[test]
fn analytic_reports_one_third() {
    let rec = record(&lvt(&["analytic", "--json", "--scan", "0.3:0.36:0.01"]));
    assert_eq!(rec.command, "analytic");
    assert_eq!(rec.estimates[0].value, 1.0 / 3.0);
    assert_eq!(rec.estimates[0].provenance, Provenance::Analytic);
    assert_eq!(rec.wall_time_s, None);
    let scan = rec.details["scan"].as_array().unwrap();
    assert_eq!(scan.len(), 7);
    assert!(scan[3]["valid"].as_bool().unwrap());
    assert!(!scan[4]["valid"].as_bool().unwrap());
}

#[test]
fn settings_file_roundtrip_between_oracle_and_search() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("settings.json");
    let file = file.to_str().unwrap();
    let oracle = record(&lvt(&["oracle", "--random", "3", "--seed", "11", "--save-settings", file, "--json"]));
    let exact = oracle.estimates[0].value;
    assert_eq!(oracle.estimates[0].provenance, Provenance::Oracle);

    let again = record(&lvt(&["oracle", "--settings", file, "--json"]));
    assert_eq!(again.estimates[0].value, exact);

    let search = record(&lvt(&["search", "--settings", file, "--m", "8", "--inner-iters", "4000", "--json"]));
    let inner = search.estimates[0].value;
    assert!(inner <= exact + 5e-3, "inner {inner} above exact {exact}");
    assert!(inner > 1.0 / 3.0 - 1e-9, "inner {inner}");
    assert_eq!(search.details["validation"]["passed"], true);
}

#[test]
fn search_writes_csv_and_timing_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let args = ["search", "--n", "3,5", "--outer-iters", "2", "--inner-iters", "1000", "--out", csv.to_str().unwrap()];

    let plain = lvt(&args);
    assert!(plain.status.success());
    let rows = read_csv(std::fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!(rows.iter().map(|r| r.n.as_str()).collect::<Vec<_>>(), ["3", "5"]);
    assert!(rows.iter().all(|r| r.wall_time_s.is_none() && r.provenance == "mc-search"));

    let timed = record(&lvt(&[&args[..], &["--timing", "--json"]].concat()));
    assert!(timed.wall_time_s.unwrap() > 0.0);
    let rows = read_csv(std::fs::File::open(&csv).unwrap()).unwrap();
    assert!(rows.iter().all(|r| r.wall_time_s.is_some()));
}

#[test]
fn extrapolated_row_has_infinite_n() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("fit.csv");
    let out = lvt(&[
        "search", "--n", "3,4,6,10", "--outer-iters", "2", "--inner-iters", "1000", "--extrapolate", "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(std::fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[4].n, "inf");
    assert_eq!(rows[4].provenance, "mc-search");
}

#[test]
fn seed_comes_from_environment() {
    let with_env = Command::new(env!("CARGO_BIN_EXE_lvt"))
        .args(["oracle", "--random", "4", "--json"])
        .env("LVT_SEED", "9")
        .output()
        .unwrap();
    let explicit = lvt(&["oracle", "--random", "4", "--seed", "9", "--json"]);
    assert_eq!(with_env.stdout, explicit.stdout);
    assert_eq!(record(&explicit).seed, 9);
}

#[test]
fn exit_codes() {
    let code = |args: &[&str]| lvt(args).status.code();
    assert_eq!(code(&["oracle"]), Some(2));
    assert_eq!(code(&["analytic", "--scan", "0.3:0.4"]), Some(2));
    assert_eq!(code(&["search", "--n", "0"]), Some(2));
    assert_eq!(code(&["search", "--m", "3"]), Some(2));
    assert_eq!(code(&["construct", "--random", "4", "--m", "3"]), Some(2));
    assert_eq!(code(&["oracle", "--random", "13"]), Some(3));
    assert_eq!(code(&["search", "--n", "100,1000"]), Some(3));
    assert_eq!(code(&["oracle", "--settings", "/nonexistent/settings.json"]), Some(1));
}

#[test]
fn construct_validates_its_model() {
    let rec = record(&lvt(&["construct", "--random", "7", "--m", "6", "--seed", "2", "--json"]));
    assert_eq!(rec.details["validation"]["passed"], true);
    assert_eq!(rec.details["rho"].as_array().unwrap().len(), 6);
    assert_eq!(rec.details["a_table"].as_array().unwrap().len(), 7);
}
