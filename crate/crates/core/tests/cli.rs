use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ellipsum"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn ellipsum")
}

fn json_stdout(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn matrix(v: &Value) -> Vec<Vec<f64>> {
    serde_json::from_value(v.clone()).unwrap()
}

#[test]
fn malformed_inputs_exit_with_validation_codes() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/malformed");
    let manifest: Vec<Value> = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest.len() >= 12);
    for entry in manifest {
        let file = dir.join(entry["file"].as_str().unwrap());
        let out = run(&[entry["command"].as_str().unwrap(), "--in", file.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(1), "{}", file.display());
        let err: Value = serde_json::from_slice(&out.stderr).unwrap();
        assert_eq!(err["error"]["code"], entry["code"], "{}", file.display());
        assert_eq!(err["exit_code"], 1);
        assert!(out.stdout.is_empty());
    }
}

#[test]
fn sum_boundary_csv_has_one_row_per_direction() {
    let input = data("four_ellipsoids.json");
    let out = run(&["sum-boundary", "--in", input.to_str().unwrap(), "--grid", "720", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("l1,l2,x1,x2,support"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 720);
    for r in &rows {
        assert!((r[0] * r[2] + r[1] * r[3] - r[4]).abs() < 1e-12);
    }
}

#[test]
fn min_trace_report_schema() {
    let input = data("four_ellipsoids.json");
    let v = json_stdout(&run(&["bound-min-trace", "--in", input.to_str().unwrap()]));
    let q = matrix(&v["shape"]);
    assert!((q[0][0] - 3.382086).abs() < 1e-5 && (q[1][1] - 4.263879).abs() < 1e-5);
    assert_eq!(q[0][1], q[1][0]);
    assert_eq!(matrix(&v["q0"]), vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
    let f = &v["feasibility"];
    assert_eq!(f["pd_ok"], true);
    assert_eq!(f["support_ok"], true);
    assert_eq!(f["grid_count"], 720);
    assert!(f["min_margin"].as_f64().unwrap() > 0.0);
    assert!((v["trace"].as_f64().unwrap() - (q[0][0] + q[1][1])).abs() < 1e-12);
}

#[test]
fn tangent_report_touches_at_ell() {
    let input = data("four_ellipsoids.json");
    let v = json_stdout(&run(&["bound-tangent", "--in", input.to_str().unwrap(), "--ell", "1", "0"]));
    let q = matrix(&v["shape"]);
    let p: Vec<f64> = serde_json::from_value(v["tangency_point"].clone()).unwrap();
    assert!((q[0][0].sqrt() - p[0]).abs() < 1e-12);
    assert!(v["feasibility"]["min_margin"].as_f64().unwrap().abs() < 1e-12);

    let neg = json_stdout(&run(&["bound-tangent", "--in", input.to_str().unwrap(), "--ell", "-1", "0"]));
    assert_eq!(neg["shape"], v["shape"]);
}

#[test]
fn check_certifies_reference_regularizer() {
    let input = data("four_ellipsoids_q0.json");
    let v = json_stdout(&run(&["check", "--in", input.to_str().unwrap(), "--grid", "720"]));
    assert_eq!(v["pd_ok"], true);
    assert_eq!(v["support_ok"], true);
    assert!(v["trace_change"].as_f64().unwrap() < 0.0);
}

#[test]
fn check_failure_exits_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tight.json");
    std::fs::write(
        &path,
        r#"{"ellipsoids": [{"center": [0, 0], "shape": [[1, 0], [0, 1]]}, {"center": [0, 0], "shape": [[1, 0], [0, 1]]}],
            "bound": {"center": [0, 0], "shape": [[3.9, 0], [0, 4]]}}"#,
    )
    .unwrap();
    let out = run(&["check", "--in", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["contained"], false);
}

#[test]
fn outputs_are_deterministic_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let input = data("four_ellipsoids.json");
    let sys = data("f_system.json");
    let cases: Vec<Vec<String>> = vec![
        vec!["sum-boundary".into(), "--format".into(), "csv".into(), "--grid".into(), "64".into()],
        vec!["sum-boundary".into(), "--format".into(), "svg".into()],
        vec!["bound-refine-q0".into()],
        vec!["bound-min-trace".into(), "--format".into(), "svg".into()],
    ];
    for args in cases {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out = dir.path().join(format!("out{rep}"));
            let mut full = args.clone();
            full.extend(["--in".into(), input.to_str().unwrap().into(), "--out".into(), out.to_str().unwrap().into()]);
            let status = bin().args(&full).status().unwrap();
            assert!(status.success(), "{full:?}");
            outputs.push(std::fs::read(&out).unwrap());
        }
        assert_eq!(outputs[0], outputs[1], "{args:?}");
    }

    // seeded random grid in dimension 3
    let reach = |seed: &str| run(&["reach", "--in", sys.to_str().unwrap(), "--steps", "8", "--grid", "50", "--seed", seed, "--format", "csv"]).stdout;
    assert_eq!(reach("7"), reach("7"));

    let v = json_stdout(&run(&["bound-refine-q0", "--in", input.to_str().unwrap()]));
    let text = serde_json::to_string(&v).unwrap();
    let back: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(matrix(&back["shape"]), matrix(&v["shape"]));
    assert_eq!(matrix(&back["q0"]), matrix(&v["q0"]));
}

#[test]
fn reach_svg_writes_three_planes() {
    let dir = tempfile::tempdir().unwrap();
    let sys = data("f_system.json");
    let out = dir.path().join("reach.svg");
    let status = bin()
        .args(["reach", "--in", sys.to_str().unwrap(), "--steps", "20", "--grid", "200", "--format", "svg", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for plane in ["x1x2", "x1x3", "x2x3"] {
        let svg = std::fs::read_to_string(dir.path().join(format!("reach_{plane}.svg"))).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
}

#[test]
fn settle_reports_definition_and_step() {
    let sys = data("f_system.json");
    let v = json_stdout(&run(&["settle", "--in", sys.to_str().unwrap()]));
    let k = v["settling_horizon"].as_u64().unwrap();
    assert!((96..=150).contains(&k));
    assert!(v["definition"].as_str().unwrap().contains("tol"));
    assert_eq!(v["boundedness"]["converged"], true);
}

#[test]
fn flag_errors() {
    let input = data("four_ellipsoids.json");
    let input = input.to_str().unwrap();
    for args in [
        vec!["bound-tangent", "--in", input],
        vec!["sum-boundary", "--in", input, "--grid", "3"],
        vec!["check", "--in", input, "--tol", "0"],
        vec!["bound-min-trace", "--in", input, "--format", "csv"],
        vec!["nonsense"],
        vec!["sum-boundary", "--in", input, "--format", "svg", "--axes", "1", "1"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        let err: Value = serde_json::from_slice(&out.stderr).unwrap();
        assert!(err["error"]["code"].is_string());
    }
    let out = run(&["bound-min-trace", "--in", "/nonexistent/file.json"]);
    assert_eq!(out.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["code"], "IoError");
}

#[test]
fn reads_stdin_and_honors_thread_cap() {
    use std::io::Write;
    use std::process::Stdio;
    let text = std::fs::read(data("four_ellipsoids.json")).unwrap();
    let mut child = bin()
        .args(["bound-min-trace"])
        .env("ELLIPSUM_THREADS", "1")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(&text).unwrap();
    let out = child.wait_with_output().unwrap();
    let v = json_stdout(&out);
    assert_eq!(v["feasibility"]["grid_count"], 720);

    let out = bin()
        .args(["bound-min-trace", "--in", data("four_ellipsoids.json").to_str().unwrap()])
        .env("ELLIPSUM_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
