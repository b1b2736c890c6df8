use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bbconv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bbconv"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const SHORT_BOOST: &str = "\
name = \"short-boost\"
[converter]
vin = 2.5
l = 280e-9
c = 250e-9
r_l = 0.5
r_esr = 1e-4
r_load = 10
[controller]
kind = \"open_loop\"
d = 0.564459
[sim]
t_end = 2e-6
";

fn csv_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    names
}

#[test]
fn simulate_writes_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "boost.toml", SHORT_BOOST);
    let out = dir.path().join("boost.csv");
    let o = bbconv(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );

    let csv = fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,i_l,v_c,v_out,duty,phase"));
    let ts: Vec<f64> = lines
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    // 100 periods of 64 steps, one extra per period where the switching edge
    // splits a step, plus the initial sample
    assert_eq!(ts.len(), 6501);
    assert!(ts.windows(2).all(|w| w[1] > w[0]));

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("boost.metrics.json")).unwrap())
            .unwrap();
    assert_eq!(summary["name"], "short-boost");
    assert_eq!(summary["trace_rows"], 6501);
    assert!(summary["transient"]["final_mean"].as_f64().unwrap() > 2.0);
}

#[test]
fn simulate_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "b.toml", SHORT_BOOST);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let o = bbconv(&["simulate", "--config", &cfg, "--out", p.to_str().unwrap()]);
        assert!(o.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn simulate_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "b.toml", SHORT_BOOST);
    let out = dir.path().join("x.csv");
    let o = bbconv(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--integrator",
        "exact",
        "--steps-per-period",
        "16",
    ]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 1 + 1701);

    let o = bbconv(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        "x.csv",
        "--integrator",
        "euler",
    ]);
    assert!(!o.status.success());
}

#[test]
fn invalid_parameter_exits_1_naming_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[converter]\nl = -1\n");
    let out = dir.path().join("x.csv");
    let o = bbconv(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("converter.l"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
    assert!(!out.exists());
}

#[test]
fn unknown_key_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[sim]\nsteps = 10\n");
    let o = bbconv(&["simulate", "--config", &cfg, "--out", "unused.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("steps"));
}

#[test]
fn unrealizable_duty_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "dead.toml",
        "[converter]\nt_dead = 1e-9\n[controller]\nd = 0.99\n[sim]\nt_end = 1e-6\n",
    );
    let out = dir.path().join("x.csv");
    let o = bbconv(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unrealizable"));
}

#[test]
fn preset_dump_runs_through_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let o = bbconv(&["preset", "buck-digital"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("kind = \"digital_2p2z\""));
    let shortened = text.replace("t_end = 0.0004", "t_end = 1e-6");
    let cfg = write(dir.path(), "p.toml", &shortened);
    let out = dir.path().join("p.csv");
    let o = bbconv(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(!bbconv(&["preset", "buck-quantum"]).status.success());
}

#[test]
fn suite_two_names() {
    let dir = tempfile::tempdir().unwrap();
    let o = bbconv(&[
        "suite",
        "boost-open,boost-digital",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(
        csv_files(dir.path()),
        ["boost-digital.csv", "boost-open.csv"]
    );
    assert!(dir.path().join("report.json").exists());
}

#[test]
fn suite_all_writes_six_traces_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = bbconv(&["suite", "all", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(csv_files(dir.path()).len(), 6);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 6);
    assert_eq!(report["deltas"].as_array().unwrap().len(), 2);
}

#[test]
fn suite_step_tests_expand_to_fourteen_traces() {
    let dir = tempfile::tempdir().unwrap();
    let o = bbconv(&[
        "suite",
        "all",
        "--step-tests",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(csv_files(dir.path()).len(), 14);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let matched = report["matched"].as_array().unwrap();
    assert_eq!(matched.len(), 4);
    assert!(matched.iter().all(|d| d["digital_not_slower"] == true));
    // the boost stage on the digital-controller parts cannot hold 3.24 V into 5 Ω
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("boost-digital+load-step"), "{err}");
    assert_eq!(
        err.lines().filter(|l| l.starts_with("failed:")).count(),
        1,
        "{err}"
    );
}

#[test]
fn suite_rejects_unknown_name() {
    let dir = tempfile::tempdir().unwrap();
    let o = bbconv(&[
        "suite",
        "boost-open,warp-drive",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(csv_files(dir.path()).is_empty());
}

#[test]
fn verify_passes_and_negative_control_fails() {
    let o = bbconv(&["verify"]);
    assert_eq!(o.status.code(), Some(0));
    let table = String::from_utf8_lossy(&o.stdout);
    for d in ["d=0.25", "d=0.5", "d=0.75"] {
        assert!(table.contains(d), "{table}");
    }
    let o = bbconv(&["verify", "--corrupt-integrator"]);
    assert_ne!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rk4 vs exact"));
}
