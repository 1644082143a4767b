use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trunc-auction"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

#[test]
fn seed_repeat_gives_identical_files() {
    let t = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = run(t.path(), &["simulate", "--seed", "5", "--l-total", "2000", "--out", out]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["dataset_1.csv", "dataset_1.meta.json"] {
        assert_eq!(fs::read(t.path().join("a").join(f)).unwrap(), fs::read(t.path().join("b").join(f)).unwrap(), "{f}");
    }
    let strip = |dir: &str| {
        let mut v = read_json(&t.path().join(dir).join("run.json"));
        v["config"]["output"] = Value::Null;
        v["datasets"][0]["path"] = Value::Null;
        v
    };
    assert_eq!(strip("a"), strip("b"));
}

#[test]
fn outputs_embed_resolved_config() {
    let t = tempfile::tempdir().unwrap();
    let o = run(t.path(), &["simulate", "--l-total", "10", "--mass-eps", "0.001", "--out", "s"]);
    assert_eq!(code(&o), 0);
    let v = read_json(&t.path().join("s/run.json"));
    assert_eq!(v["config"]["l_total"], 10);
    assert_eq!(v["config"]["tuning"]["mass_eps"], 0.001);
    assert_eq!(v["config"]["tuning"]["grid_step_1d"], 0.002);
    assert_eq!(v["config"]["estimator"], "auto");
}

#[test]
fn empty_run_warns_and_succeeds() {
    let t = tempfile::tempdir().unwrap();
    let o = run(t.path(), &["simulate", "--l-total", "0", "--out", "s"]);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("warning"));
    assert_eq!(fs::read_to_string(t.path().join("s/dataset_1.csv")).unwrap(), "auction_id,transaction_price,n_obs\n");
}

#[test]
fn worked_example_replay_is_exact() {
    let t = tempfile::tempdir().unwrap();
    write(t.path(), "types.json", "[[3, 4], [2, 3], [1, 2]]");
    for (format, csv) in [("second_price", "0,3,2\n1,2.5,1\n"), ("first_price", "0,4,2\n1,3,1\n")] {
        let cfg = format!(
            r#"{{"distribution": {{"family": "uniform", "lo": 0, "hi": 4}},
               "design": {{"format": "{format}", "truncation": {{"kind": "reserve", "alpha0": 0.625}}}},
               "bid_rule": "truthful",
               "info": {{"observe_nobs": true, "observe_invalid_count": true}}}}"#
        );
        write(t.path(), "w.json", &cfg);
        let o = run(t.path(), &["simulate", "--config", "w.json", "--types-file", "types.json", "--out", format]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let body = fs::read_to_string(t.path().join(format).join("dataset_1.csv")).unwrap();
        assert_eq!(body, format!("auction_id,transaction_price,n_obs\n{csv}"));
        let meta = read_json(&t.path().join(format).join("dataset_1.meta.json"));
        assert_eq!(meta["L"], 2);
        assert_eq!(meta["L_invalid"], 1);
    }
}

#[test]
fn auto_routes_second_price_reserve_to_mass_estimator() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(t.path(), &["simulate", "--l-total", "50000", "--out", "s"])), 0);
    let o = run(t.path(), &["identify", "--data", "s/dataset_1.csv", "--out", "i"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = read_json(&t.path().join("i/identification.json"));
    assert_eq!(v["result"]["proposition"], "prop1");
    let a = v["result"]["alpha_star"]["point"].as_f64().unwrap();
    assert!((a - 0.5).abs() < 0.02, "{a}");
    assert!(fs::read_to_string(t.path().join("i/v_grid.csv")).unwrap().starts_with("alpha,value\n"));
    let o = run(t.path(), &["report", "i/identification.json"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("prop1"));
}

#[test]
fn non_identified_cells_exit_3() {
    let t = tempfile::tempdir().unwrap();
    write(t.path(), "fp.json", r#"{"design": {"format": "first_price", "truncation": {"kind": "reserve", "alpha0": 0.5}}}"#);
    let o = run(t.path(), &["identify", "--config", "fp.json", "--l-total", "1000"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("prop1"));
    write(
        t.path(),
        "sp.json",
        r#"{"populations": [{"support": [[2, 0.5], [3, 0.5]]}], "n_known": false, "info": {"observe_nobs": true}}"#,
    );
    let o = run(t.path(), &["identify", "--config", "sp.json", "--l-total", "1000"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("prop5"));
}

#[test]
fn configuration_errors_exit_2() {
    let t = tempfile::tempdir().unwrap();
    write(t.path(), "fp.json", r#"{"design": {"format": "first_price", "truncation": {"kind": "reserve", "alpha0": 0.5}}}"#);
    let o = run(t.path(), &["identify", "--config", "fp.json", "--estimator", "prop2"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("invalid-auction count"));
    write(t.path(), "typo.json", r#"{"l_totl": 5}"#);
    assert_eq!(code(&run(t.path(), &["simulate", "--config", "typo.json"])), 2);
    write(t.path(), "bad.json", r#"{"design": {"format": "second_price", "truncation": {"kind": "reserve", "alpha0": 1.5}}}"#);
    assert_eq!(code(&run(t.path(), &["simulate", "--config", "bad.json"])), 2);
    assert_eq!(code(&run(t.path(), &["simulate", "--grid-step", "0"])), 2);
}

#[test]
fn missing_data_exits_5() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(t.path(), &["identify", "--data", "nowhere.csv"])), 5);
}

#[test]
fn inconsistent_data_exits_4() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(t.path(), &["simulate", "--l-total", "20", "--out", "s"])), 0);
    // Every auction closes at the floor, more mass than two bidders can produce.
    let rows: String = (0..20).map(|i| format!("{i},0.5,\n")).collect();
    write(t.path(), "s/dataset_1.csv", &format!("auction_id,transaction_price,n_obs\n{rows}"));
    let mut meta = read_json(&t.path().join("s/dataset_1.meta.json"));
    meta["L"] = 20.into();
    write(t.path(), "s/dataset_1.meta.json", &meta.to_string());
    let o = run(t.path(), &["identify", "--data", "s/dataset_1.csv"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn verify_counterexamples_passes() {
    let t = tempfile::tempdir().unwrap();
    let o = run(t.path(), &["verify", "counterexamples", "--out", "v"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = read_json(&t.path().join("v/verify_counterexamples.json"));
    assert_eq!(v["report"]["pass"], true);
    assert!(v["config"]["tuning"].is_object());
    let o = run(t.path(), &["report", "v/verify_counterexamples.json"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
}
