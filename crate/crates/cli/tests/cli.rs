use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_airground"))
}

const TINY: &[&str] = &[
    "--orders",
    "60",
    "--uav-stations",
    "1",
    "--uavs-per-station",
    "2",
    "--courier-stations",
    "2",
    "--couriers-per-station",
    "2",
    "--taxis",
    "100",
    "--extent",
    "4000",
];

fn run_ok(args: &[&str]) -> serde_json::Value {
    let out = bin().args(args).output().expect("spawn airground");
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON document")
}

#[test]
fn synth_then_simulate_conserves_orders() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.json");
    let mut args = vec!["synth", "--out", scenario.to_str().unwrap()];
    args.extend_from_slice(TINY);
    let doc = run_ok(&args);
    assert_eq!(doc["orders"], 60);
    assert_eq!(doc["uavs"], 2);
    assert_eq!(doc["couriers"], 4);

    let metrics = dir.path().join("metrics.json");
    let doc = run_ok(&[
        "simulate",
        "--scenario",
        scenario.to_str().unwrap(),
        "--policy",
        "cost-greedy",
        "--out",
        metrics.to_str().unwrap(),
    ]);
    let m = &doc["metrics"];
    assert_eq!(m["total_orders"], 60);
    assert_eq!(
        m["delivered"].as_u64().unwrap() + m["failed"].as_u64().unwrap(),
        60
    );

    // Same scenario, same policy: byte-identical metrics file.
    let metrics2 = dir.path().join("metrics2.json");
    run_ok(&[
        "simulate",
        "--scenario",
        scenario.to_str().unwrap(),
        "--policy",
        "cost-greedy",
        "--out",
        metrics2.to_str().unwrap(),
    ]);
    let a = std::fs::read(&metrics).unwrap();
    let b = std::fs::read(&metrics2).unwrap();
    assert_eq!(a, b, "rerun changed the metrics file");
}

fn read_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}

#[test]
fn sweep_writes_one_row_per_cell_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("s1");
    let out2 = dir.path().join("s2");
    for out in [&out1, &out2] {
        let mut args = vec![
            "sweep",
            "--axis",
            "demand",
            "--values",
            "0.5,1.0",
            "--policies",
            "cost-greedy,on-demand",
            "--seeds",
            "2",
            "--out-dir",
            out.to_str().unwrap(),
        ];
        args.extend_from_slice(TINY);
        let doc = run_ok(&args);
        assert_eq!(doc["runs"], 8, "2 values x 2 policies x 2 seeds");
    }
    let runs = read_lines(&out1.join("runs.csv"));
    assert_eq!(runs.len(), 9, "header plus 8 data rows");
    assert!(runs[0].starts_with("axis,value,policy,seed"));
    let agg = read_lines(&out1.join("aggregates.csv"));
    assert_eq!(agg.len(), 5, "header plus one aggregate row per cell");

    assert_eq!(
        std::fs::read(out1.join("runs.csv")).unwrap(),
        std::fs::read(out2.join("runs.csv")).unwrap(),
        "sweep rerun changed runs.csv"
    );
}

#[test]
fn oracle_check_reports_high_agreement() {
    let doc = run_ok(&["oracle-check", "--instances", "30"]);
    assert!(doc["mean_count_ratio"].as_f64().unwrap() >= 0.9);
    assert_eq!(doc["instances"], 30);
}

#[test]
fn unknown_policy_is_a_json_error() {
    let mut args = vec!["simulate", "--policy", "psychic"];
    args.extend_from_slice(TINY);
    let out = bin().args(args).output().unwrap();
    assert!(!out.status.success());
    let err: serde_json::Value =
        serde_json::from_slice(&out.stderr).expect("stderr carries a JSON error");
    assert!(err["error"].as_str().unwrap().contains("psychic"));
}
