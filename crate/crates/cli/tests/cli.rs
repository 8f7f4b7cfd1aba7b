use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn abrlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_abrlab"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = abrlab(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

const SMALL: &str = r#"
seed = 4
[grid]
loads = [5.0, 12.0]
volatility = [0.1, 0.4]
train_traces_per_cell = 1
[rl]
episodes = 16
[rl.net]
filters = 8
scalar_units = 8
hidden = 8
[predictor]
hidden = [6]
source_traces = 1
target_traces = 1
[predictor.source]
duration = 400.0
[predictor.target]
duration = 300.0
[predictor.train]
epochs = 1
"#;

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.toml"), SMALL).unwrap();
    dir
}

#[test]
fn gen_traces_writes_one_file_per_cell_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["--out", "a", "gen-traces"]);
    ok(dir.path(), &["--out", "b", "gen-traces"]);
    let mut names: Vec<_> = fs::read_dir(dir.path().join("a/traces")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 9);
    for n in &names {
        let a = fs::read(dir.path().join("a/traces").join(n)).unwrap();
        let b = fs::read(dir.path().join("b/traces").join(n)).unwrap();
        assert_eq!(a, b);
        // default traces: 900 s at 1 s per sample, plus the header
        assert_eq!(String::from_utf8(a).unwrap().lines().count(), 901);
    }
}

#[test]
fn predictor_commands_emit_three_metric_rows() {
    let dir = setup();
    ok(dir.path(), &["--config", "cfg.toml", "train-predictor", "--h", "8", "--w", "4"]);
    assert!(dir.path().join("out/predictor/source.json").exists());
    ok(dir.path(), &["--config", "cfg.toml", "fine-tune", "--h", "8", "--w", "4", "--strategy", "all"]);
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/predictor/fine_tune_metrics.json")).unwrap()).unwrap();
    let rows = m["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r["r2"].as_f64().unwrap() <= 1.0));
    // a mismatched history is refused
    assert!(!abrlab(dir.path(), &["--config", "cfg.toml", "fine-tune", "--h", "9"]).status.success());
}

#[test]
fn simulate_bola_on_generous_trace_has_no_stalls() {
    let dir = setup();
    let mut csv = String::from("t_s,throughput_mbps,speed_kmh,dist_m,rssi_dbm,rsrp_dbm,rsrq_db,handovers,data_state\n");
    for t in 0..800 {
        csv.push_str(&format!("{t},30,0,100,-80,-105,-10,0,C\n"));
    }
    fs::write(dir.path().join("flat.csv"), csv).unwrap();
    ok(dir.path(), &["--config", "cfg.toml", "simulate", "--abr", "bola", "--trace", "flat.csv"]);
    let chunks = fs::read_to_string(dir.path().join("out/simulate/bola/flat.csv")).unwrap();
    let rows: Vec<&str> = chunks.lines().skip(1).collect();
    assert_eq!(rows.len(), 48);
    assert!(rows.iter().all(|r| r.split(',').nth(6) == Some("0.0") || r.split(',').nth(6) == Some("0")));
    assert!(dir.path().join("out/simulate/bola/flat.energy.json").exists());
}

#[test]
fn rl_without_checkpoint_is_an_error() {
    let dir = setup();
    let out = abrlab(dir.path(), &["--config", "cfg.toml", "simulate", "--abr", "rl"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("train-rl"));
    assert!(!abrlab(dir.path(), &["--config", "cfg.toml", "simulate", "--abr", "pensive"]).status.success());
}

#[test]
fn train_compare_and_report_round_trip() {
    let dir = setup();
    ok(dir.path(), &["--config", "cfg.toml", "train-rl", "--workers", "2", "--episodes", "8"]);
    assert!(dir.path().join("out/rl/buffer.json").exists());
    let history = fs::read_to_string(dir.path().join("out/rl/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 8);
    ok(dir.path(), &["--config", "cfg.toml", "compare"]);
    let csv = fs::read_to_string(dir.path().join("out/report/report.csv")).unwrap();
    // 5 policies x (aggregate + 4 scenarios)
    assert_eq!(csv.lines().count(), 1 + 5 * 5);
    let before: Vec<Vec<u8>> =
        ["report.md", "report.csv", "energy.svg"].iter().map(|f| fs::read(dir.path().join("out/report").join(f)).unwrap()).collect();
    ok(dir.path(), &["--config", "cfg.toml", "report"]);
    for (f, b) in ["report.md", "report.csv", "energy.svg"].iter().zip(before) {
        assert_eq!(fs::read(dir.path().join("out/report").join(f)).unwrap(), b, "{f}");
    }
}

#[test]
fn seed_flag_changes_traces() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["--out", "a", "--seed", "1", "gen-traces"]);
    ok(dir.path(), &["--out", "b", "--seed", "2", "gen-traces"]);
    let f = "traces/load-mid_vol-mid-r0.csv";
    assert_ne!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap());
}
