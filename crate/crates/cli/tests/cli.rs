use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use vortex_core::diagnostics::{bootstrap_report, summarize, BootstrapOptions};
use vortex_core::io::read_checkpoint;
use vortex_core::PointVortexSystem;

fn vortexlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vortexlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = vortexlab(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Exit code and parsed error object.
fn fail(args: &[&str]) -> (i32, Value) {
    let out = vortexlab(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err: Value = serde_json::from_slice(&out.stderr).expect("error JSON on stderr");
    (out.status.code().unwrap(), err)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_run(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "patch-run",
        "--particles",
        "40",
        "--t-end",
        "103",
        "--snapshot-every",
        "3",
        "--checkpoint-every",
        "7",
        "--out",
        s(dir),
    ];
    args.extend_from_slice(extra);
    vortexlab(&args)
}

fn dir_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (PathBuf::from(p.file_name().unwrap()), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn config_find_default_passes() {
    let tmp = TempDir::new().unwrap();
    let out = ok(&["config-find", "--circulations", "-2,-2,1", "--out", s(tmp.path())]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
    let report = json(&tmp.path().join("report.json"));
    assert_eq!(report["passed"], true);
    assert!(report["angular_impulse"].as_f64().unwrap().abs() < 1e-10);
    assert!(report["lemma"]["x_norm"].as_f64().unwrap() < 1e-10);
    assert!(report["fit"]["alpha"].as_f64().unwrap() > 0.0);
    let sys: PointVortexSystem =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(sys.circulations(), &[-2.0, -2.0, 1.0]);
    assert!(tmp.path().join("report.txt").exists());
}

#[test]
fn config_find_rejects_non_harmonic_circulations() {
    let tmp = TempDir::new().unwrap();
    let (code, err) = fail(&["config-find", "--circulations", "1,1,1", "--out", s(tmp.path())]);
    assert_eq!(code, 2);
    assert_eq!(err["error"], "harmonic_violation");
    assert_eq!(err["class"], "validation");
}

#[test]
fn config_find_rejects_equilateral_outcome() {
    let tmp = TempDir::new().unwrap();
    let h = 0.75f64.sqrt().to_string();
    let seed = format!("1,0,-0.5,{h},-0.5,-{h}");
    let (code, err) = fail(&[
        "config-find",
        "--circulations",
        "1,1,-0.5",
        "--seed",
        &seed,
        "--out",
        s(tmp.path()),
    ]);
    assert_ne!(code, 0);
    assert!(err["message"].as_str().unwrap().contains("equilateral"), "{err}");
}

#[test]
fn pv_run_pair_orbit_closes() {
    let tmp = TempDir::new().unwrap();
    let period = (4.0 * std::f64::consts::PI).to_string();
    ok(&[
        "pv-run", "--example", "pair", "--t0", "0", "--t1", &period, "--samples", "4",
        "--scale-by-sqrt-t0", "false", "--out", s(tmp.path()),
    ]);
    let text = fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 5);
    let (first, last) = (&rows[0], &rows[4]);
    for c in 1..5 {
        assert!((first[c] - last[c]).abs() < 1e-8, "column {c}: {} vs {}", first[c], last[c]);
    }
    // Half a period swaps the two vortices.
    assert!((rows[2][1] - 1.0).abs() < 1e-8 && (rows[2][3] + 1.0).abs() < 1e-8);
}

#[test]
fn pv_run_triple_drift_is_small() {
    let tmp = TempDir::new().unwrap();
    let out = ok(&["pv-run", "--out", s(tmp.path())]);
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary, json(&tmp.path().join("drift.json")));
    for key in ["linear_impulse_drift", "angular_impulse_drift", "energy_drift"] {
        assert!(summary[key].as_f64().unwrap() < 1e-9, "{key}: {summary}");
    }
    assert_eq!(summary["rows"], 401);
}

#[test]
fn pv_run_reports_collisions() {
    let tmp = TempDir::new().unwrap();
    let rev = tmp.path().join("rev.json");
    fs::write(
        &rev,
        r#"{"positions": [[-1, 0], [1, 0], [1, 1.4142135623730951]], "circulations": [2, 2, -1]}"#,
    )
    .unwrap();
    let (code, err) = fail(&["pv-run", "--reference", s(&rev), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(code, 3);
    assert_eq!(err["error"], "near_collision");
}

#[test]
fn malformed_config_is_a_validation_error() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{\"schema_version\": 1, \"run\": {\"t0\": ").unwrap();
    let (code, err) = fail(&["pv-run", "--config", s(&bad)]);
    assert_eq!((code, err["error"].as_str().unwrap()), (2, "parse_error"));

    fs::write(&bad, r#"{"schema_version": 1, "run": {"t_zero": 3}}"#).unwrap();
    let (code, _) = fail(&["patch-run", "--config", s(&bad)]);
    assert_eq!(code, 2);

    fs::write(&bad, r#"{"schema_version": 7}"#).unwrap();
    let (code, err) = fail(&["patch-run", "--config", s(&bad)]);
    assert_eq!((code, err["error"].as_str().unwrap()), (2, "schema_version"));

    let (code, err) = fail(&["pv-run", "--config", s(&tmp.path().join("missing.json"))]);
    assert_eq!((code, err["class"].as_str().unwrap()), (4, "io"));
}

#[test]
fn usage_errors_are_json() {
    let (code, err) = fail(&["patch-run", "--particles", "many"]);
    assert_eq!((code, err["error"].as_str().unwrap()), (2, "usage"));
}

#[test]
fn patch_run_with_t_end_at_t0_writes_initial_snapshot_only() {
    let tmp = TempDir::new().unwrap();
    let out = ok(&["patch-run", "--particles", "20", "--t-end", "100", "--out", s(tmp.path())]);
    let lines: Vec<Value> = String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["event"], "snapshot");
    assert!(lines[0]["L"].is_f64() && lines[0]["I_x"].is_f64() && lines[0]["max_support"].is_f64());
    assert_eq!(lines[1]["event"], "finished");
    let snaps = dir_bytes(&tmp.path().join("snapshots"));
    assert_eq!(snaps.len(), 1);
    let table = fs::read_to_string(tmp.path().join("bootstrap.csv")).unwrap();
    assert_eq!(table.lines().count(), 2);
    assert_eq!(json(&tmp.path().join("summary.json"))["snapshots"], 1);
}

#[test]
fn resume_reproduces_the_uninterrupted_run() {
    let tmp = TempDir::new().unwrap();
    let full = tmp.path().join("full");
    let part = tmp.path().join("part");
    assert!(small_run(&full, &[]).status.success());
    assert!(small_run(&part, &["--stop-after", "11"]).status.success());
    assert!(!part.join("bootstrap.csv").exists());
    assert_eq!(read_checkpoint(&part).unwrap().0.step, 11);
    ok(&["patch-run", "--resume", s(&part), "--stop-after", "5"]);
    ok(&["patch-run", "--resume", s(&part)]);
    for f in ["bootstrap.csv", "summary.json", "checkpoint.csv"] {
        assert_eq!(fs::read(full.join(f)).unwrap(), fs::read(part.join(f)).unwrap(), "{f}");
    }
    assert_eq!(dir_bytes(&full.join("snapshots")), dir_bytes(&part.join("snapshots")));

    let (code, _) = fail(&["patch-run", "--resume", s(&part), "--t0", "5"]);
    assert_eq!(code, 2);
}

#[test]
fn config_echo_reproduces_outputs() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(small_run(&a, &["--profile", "radial-bump", "--format", "binary"]).status.success());
    ok(&["patch-run", "--config", s(&a.join("run.json")), "--out", s(&b)]);
    assert_eq!(dir_bytes(&a.join("snapshots")), dir_bytes(&b.join("snapshots")));
    assert_eq!(fs::read(a.join("bootstrap.csv")).unwrap(), fs::read(b.join("bootstrap.csv")).unwrap());
    let echo = json(&b.join("run.json"));
    assert_eq!(echo["schema_version"], 1);
    assert_eq!(echo["patches"]["profile"], "radial_bump");
    assert!(echo["reference"]["circulations"].is_array());
}

#[test]
fn blow_up_exits_nonzero_and_keeps_checkpoint() {
    let tmp = TempDir::new().unwrap();
    let out = small_run(tmp.path(), &["--max-speed", "1e-3"]);
    assert_eq!(out.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "blow_up");
    let (ck, state) = read_checkpoint(tmp.path()).unwrap();
    assert_eq!(ck.step, 0);
    assert_eq!(state.time, 100.0);
}

#[test]
fn diag_is_deterministic_and_matches_in_memory_fits() {
    let tmp = TempDir::new().unwrap();
    let run_dir = tmp.path().join("run");
    assert!(small_run(&run_dir, &["--backend", "tree"]).status.success());
    let before = fs::read(run_dir.join("summary.json")).unwrap();
    let d1 = tmp.path().join("d1");
    let d2 = tmp.path().join("d2");
    ok(&["diag", "--run", s(&run_dir), "--out", s(&d1)]);
    ok(&["diag", "--run", s(&run_dir), "--out", s(&d2)]);
    assert_eq!(dir_bytes(&d1), dir_bytes(&d2));
    assert_eq!(fs::read(d1.join("summary.json")).unwrap(), before);

    let (ck, _) = read_checkpoint(&run_dir).unwrap();
    let config = ck.config;
    let states: Vec<_> = vortex_core::run(config.clone()).unwrap().into_iter().map(|(_, s)| s).collect();
    let reference = config.prepared_reference().unwrap();
    let rows = bootstrap_report(&states, &reference, &BootstrapOptions::default()).unwrap();
    let mem = summarize(&rows, &reference, &states[0]).unwrap();
    let stored = json(&d1.join("summary.json"));
    for (i, fit) in mem.support_fits.iter().enumerate() {
        let got = stored["summary"]["support_fits"][i]["exponent"].as_f64().unwrap();
        assert!((got - fit.unwrap().exponent).abs() <= 1e-12);
    }
    let renorm = &stored["renormalization"][0];
    assert_eq!(renorm["k"], 2);
    assert!(renorm["relative"].is_f64(), "{renorm}");
}

#[test]
fn diag_validates_requests_and_inputs() {
    let tmp = TempDir::new().unwrap();
    ok(&["patch-run", "--particles", "30", "--t-end", "101", "--snapshot-every", "3", "--out", s(tmp.path())]);
    let (code, err) = fail(&["diag", "--run", s(tmp.path()), "--ks", "4,3"]);
    assert_eq!((code, err["error"].as_str().unwrap()), (2, "odd_moment_order"));
    let (code, _) = fail(&["diag", "--run", s(tmp.path()), "--fit-window", "1"]);
    assert_eq!(code, 2);
    let out = ok(&["diag", "--run", s(tmp.path()), "--ks", "4,6", "--fit-window", "100,101", "--out", s(&tmp.path().join("w"))]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["window_fits"]["window"], serde_json::json!([100.0, 101.0]));
    let header = fs::read_to_string(tmp.path().join("w/bootstrap.csv")).unwrap();
    assert!(header.lines().next().unwrap().contains("I6_2"));

    let (code, _) = fail(&["diag", "--run", s(&tmp.path().join("nowhere"))]);
    assert_eq!(code, 4);
    let snap = tmp.path().join("snapshots/snapshot_00000003.csv");
    fs::write(&snap, "not a snapshot\n").unwrap();
    let (code, err) = fail(&["diag", "--run", s(tmp.path())]);
    assert_eq!(code, 4);
    assert!(err["path"].as_str().unwrap().ends_with("snapshot_00000003.csv"));
}

#[test]
fn bench_prints_a_table() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("bench.json");
    let out = ok(&["bench", "--particles", "300", "--json", s(&path)]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with(" particles"));
    let rows = json(&path);
    assert_eq!(rows[0]["particles"], 300);
    assert!(rows[0]["max_relative_error"].as_f64().unwrap() < 1e-3);
}
