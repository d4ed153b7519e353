use std::path::Path;
use std::process::{Command, Output};

use recpipe::explore::read_points_csv;
use recpipe::trace::read_trace;

const BIN: &str = env!("CARGO_BIN_EXE_recpipe");

fn configs() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn recpipe(args: &[&str], out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("RECPIPE_SEED")
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let i = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|row| row.unwrap()[i].to_string()).collect()
}

#[test]
fn mm1_config_matches_closed_form_tail() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("mm1.json");
    ok(&recpipe(&["simulate", "--config", cfg.to_str().unwrap()], dir.path()));
    let p99: f64 = column(&dir.path().join("simulate.csv"), "p99_s")[0].parse().unwrap();
    // rate mu - lambda = 50/s gives p99 = ln(100) / 50
    let exact = 100f64.ln() / 50.0;
    assert!((p99 / exact - 1.0).abs() < 0.05, "p99 {p99} vs {exact}");
}

#[test]
fn explore_tiny_writes_points_and_frontier() {
    let dir = tempfile::tempdir().unwrap();
    let o = recpipe(&["explore", "--space", "tiny", "--jobs", "1"], dir.path());
    ok(&o);
    let points = read_points_csv(std::fs::File::open(dir.path().join("points.csv")).unwrap()).unwrap();
    let front = read_points_csv(std::fs::File::open(dir.path().join("frontier.csv")).unwrap()).unwrap();
    assert_eq!(points.len(), 3);
    assert!(!front.is_empty() && front.len() <= points.len());
    for f in &front {
        assert!(points.contains(f));
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "explore");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn footprint_reports_reductions() {
    let dir = tempfile::tempdir().unwrap();
    let o = recpipe(&["footprint"], dir.path());
    ok(&o);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("compute reduction 14.57x"), "{stdout}");
    assert!(stdout.contains("embedding reduction 5.33x"), "{stdout}");
    let totals: Vec<_> = csv_rows(&dir.path().join("footprint.csv"))
        .into_iter()
        .filter(|r| &r[1] == "total")
        .map(|r| r[4].parse::<u64>().unwrap())
        .collect();
    assert_eq!(totals, vec![737_280_000, 50_585_600]);
}

#[test]
fn trace_gen_is_seeded() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let cfg = a.path().join("run.json");
    std::fs::write(&cfg, r#"{"trace": {"n_rows": 5000, "n_accesses": 20000, "n_tables": 2}}"#).unwrap();
    let cfg = cfg.to_str().unwrap();
    ok(&recpipe(&["trace-gen", "--config", cfg, "--seed", "7"], a.path()));
    ok(&recpipe(&["trace-gen", "--config", cfg, "--seed", "7"], b.path()));
    ok(&recpipe(&["trace-gen", "--config", cfg, "--seed", "8"], c.path()));
    let bytes = |d: &Path| std::fs::read(d.join("trace.bin")).unwrap();
    assert_eq!(bytes(a.path()), bytes(b.path()));
    assert_ne!(bytes(a.path()), bytes(c.path()));
    let t = read_trace(bytes(a.path()).as_slice()).unwrap();
    assert_eq!(t.records.len(), 20_000);
}

#[test]
fn seed_env_matches_flag() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(&recpipe(&["calibrate", "--seed", "5"], a.path()));
    let o = Command::new(BIN)
        .args(["calibrate", "--out"])
        .arg(b.path())
        .env("RECPIPE_SEED", "5")
        .output()
        .unwrap();
    ok(&o);
    let read = |d: &Path| std::fs::read(d.join("calibration.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn errors_exit_nonzero_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"pipeline": "single_stage", "workload": {"qps": "fast"}}"#).unwrap();
    let missing = dir.path().join("missing.json");
    std::fs::write(&missing, r#"{"pipeline": "nope"}"#).unwrap();
    for (cfg, kind) in [(&bad, "parse"), (&missing, "config")] {
        let o = recpipe(&["simulate", "--config", cfg.to_str().unwrap()], dir.path());
        assert!(!o.status.success());
        let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
        assert_eq!(err["error"]["kind"], kind, "{err}");
    }
}
