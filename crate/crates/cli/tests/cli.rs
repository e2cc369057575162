use std::path::Path;
use std::process::{Command, Output};

use mgeo::{ExperimentConfig, Report, Results};
use serde_json::{json, Value};
use tempfile::TempDir;

fn mgeo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mgeo"))
        .args(args)
        .output()
        .expect("spawn mgeo")
}

fn write(dir: &TempDir, name: &str, config: &Value) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, config.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

fn run(config: &Value, extra: &[&str]) -> (i32, String, String) {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "config.json", config);
    let mut args = vec![path.as_str()];
    args.extend_from_slice(extra);
    let out = mgeo(&args);
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn report(config: &Value) -> (i32, Report) {
    let (code, stdout, stderr) = run(config, &[]);
    let report = Report::from_json(&stdout).unwrap_or_else(|e| panic!("{e}\n{stderr}"));
    (code, report)
}

fn estimate(report: &Report, name: &str) -> martingale_geometry::ConstantEstimate {
    let Results::Estimate { estimates } = &report.results else {
        panic!("not an estimate report");
    };
    estimates
        .iter()
        .find(|r| r.name == name)
        .unwrap()
        .estimate
        .clone()
}

#[test]
fn estimates_of_the_catalog_examples() {
    let (code, r) = report(&json!({
        "space": {"kind": "euclidean", "dim": 3},
        "command": "estimate",
        "params": {"constants": ["smooth_2"]},
        "seed": 1
    }));
    assert_eq!(code, 0);
    let e = estimate(&r, "smooth_2");
    assert!(!e.unbounded && (e.lower_bound - 1.0).abs() <= 1e-6, "{e:?}");

    let (_, r) = report(&json!({
        "space": {"kind": "lp", "p": 1, "dim": 2},
        "command": "estimate",
        "params": {"constants": ["convex_2"]}
    }));
    assert!(estimate(&r, "convex_2").unbounded);

    let (_, r) = report(&json!({
        "space": {"kind": "lp", "p": 3, "dim": 2},
        "command": "estimate",
        "params": {"constants": ["convex_3"]}
    }));
    let e = estimate(&r, "convex_3");
    assert!(!e.unbounded && (e.lower_bound - 1.0).abs() <= 1e-3, "{e:?}");
}

#[test]
fn verify_passes_and_fails_with_witnesses() {
    let (code, r) =
        report(&json!({"space": {"kind": "euclidean", "dim": 2}, "command": "verify", "seed": 1}));
    assert_eq!(code, 0);
    let Results::Verify { suites } = &r.results else {
        panic!()
    };
    assert!(
        suites.iter().all(|s| s.passed && s.checks > 0),
        "{suites:?}"
    );

    let (code, r) = report(&json!({
        "space": {"kind": "euclidean", "dim": 2},
        "command": "verify",
        "params": {"c": 0.9}
    }));
    assert_eq!(code, 1);
    let Results::Verify { suites } = &r.results else {
        panic!()
    };
    let failed: Vec<_> = suites.iter().filter(|s| !s.passed).collect();
    assert!(!failed.is_empty());
    // an inequality failure carries its witness; an aborted suite says why
    assert!(failed.iter().any(|s| s.name == "smoothness"));
    for s in failed {
        assert!(s.worst_case.is_some() || s.note.is_some(), "{s:?}");
        if s.checks > 0 {
            let w = s.worst_case.as_ref().unwrap();
            assert!(w.value > s.tolerance);
        }
    }
}

#[test]
fn config_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(mgeo(&[empty.to_str().unwrap()]).status.code(), Some(2));
    for bad in [
        json!({}),
        json!({"space": {"kind": "euclidean", "dim": 2}}),
        json!({"space": {"kind": "euclidean", "dim": 2}, "command": "verify", "colour": 1}),
        json!({"space": {"kind": "euclidean", "dim": 2}, "command": "verify", "params": {"p": 0.5}}),
        json!({"space": {"kind": "euclidean", "dim": 2}, "command": "estimate"}),
    ] {
        let (code, _, stderr) = run(&bad, &[]);
        assert_eq!(code, 2, "{bad}: {stderr}");
        assert!(stderr.starts_with("mgeo: "), "{stderr}");
    }
    assert_eq!(mgeo(&[]).status.code(), Some(2));
    assert_eq!(mgeo(&["/nonexistent/config.json"]).status.code(), Some(2));
}

#[test]
fn renorm_tables() {
    let (code, r) = report(&json!({
        "space": {"kind": "euclidean", "dim": 2},
        "command": "renorm",
        "params": {"q": 2, "c": 1, "samples": 4},
        "seed": 2
    }));
    assert_eq!(code, 0);
    let Results::Renorm(ren) = &r.results else {
        panic!()
    };
    for row in &ren.rows {
        for b in &row.braces {
            assert!((b.value - row.norm).abs() <= 1e-9 * row.norm, "{row:?}");
        }
    }

    let (code, r) = report(&json!({
        "space": {"kind": "lp", "p": 3, "dim": 2},
        "command": "renorm",
        "params": {"q": 3, "c": 1, "samples": 4},
        "seed": 3
    }));
    assert_eq!(code, 0);
    let Results::Renorm(ren) = &r.results else {
        panic!()
    };
    assert!(ren.rows.iter().all(|row| row.monotone && row.within_bounds));
    assert!(ren.suites.iter().all(|s| s.passed));

    let (code, r) = report(&json!({
        "space": {"kind": "euclidean", "dim": 2},
        "command": "renorm",
        "params": {"q": 2, "c": 0.5},
        "seed": 3
    }));
    assert_eq!(code, 3);
    let Results::Renorm(ren) = &r.results else {
        panic!()
    };
    assert!(ren.violation.is_some());
}

#[test]
fn duality_gaps() {
    for (space, tol) in [
        (json!({"kind": "lp", "p": 1.5, "dim": 2}), 0.05),
        (json!({"kind": "euclidean", "dim": 2}), 1e-3),
    ] {
        let (code, r) = report(&json!({"space": space, "command": "duality", "seed": 4}));
        assert_eq!(code, 0);
        let Results::Duality(d) = &r.results else {
            panic!()
        };
        assert!(
            d.experiment.relative_gap <= tol,
            "{space}: {}",
            d.experiment.relative_gap
        );
    }

    let functionals: Vec<Vec<f64>> = (0..40)
        .map(|i| {
            (0..6)
                .map(|j| (((i * 7 + j * 3) % 11) as f64) - 5.0)
                .collect()
        })
        .collect();
    let (code, _, stderr) = run(
        &json!({
            "space": {"kind": "polyhedral", "functionals": functionals, "dim": 6},
            "command": "duality"
        }),
        &[],
    );
    assert_eq!(code, 2, "{stderr}");
    assert!(stderr.contains("dual"), "{stderr}");
}

fn configs() -> Vec<Value> {
    vec![
        json!({"space": {"kind": "lp", "p": 3, "dim": 2}, "command": "estimate",
               "params": {"constants": ["convex_3", "smooth_2"], "budget": 400}, "seed": 7}),
        json!({"space": {"kind": "lp", "p": 1.5, "dim": 2}, "command": "verify",
               "params": {"samples": 40}, "seed": 1}),
        json!({"space": {"kind": "lp", "p": 3, "dim": 2}, "command": "renorm",
               "params": {"q": 3, "c": 1, "samples": 3, "depth": 2}, "seed": 3}),
        json!({"space": {"kind": "lp", "p": 1.5, "dim": 2}, "command": "renorm",
               "params": {"direction": "type_sup", "p": 1.5, "c": 1, "samples": 3, "depth": 2}, "seed": 3}),
        json!({"space": {"kind": "euclidean", "dim": 2}, "command": "renorm",
               "params": {"q": 2, "c": 0.5}, "seed": 3}),
        json!({"space": {"kind": "lp", "p": 1.5, "dim": 2}, "command": "duality",
               "params": {"budget": 400}, "seed": 3}),
    ]
}

#[test]
fn every_report_replays() {
    let dir = TempDir::new().unwrap();
    for (i, config) in configs().into_iter().enumerate() {
        let path = write(&dir, &format!("c{i}.json"), &config);
        let out_path = dir.path().join(format!("r{i}.json"));
        let out = mgeo(&[&path, "--output", out_path.to_str().unwrap()]);
        assert!(out.stdout.is_empty());
        assert!(out.status.code().unwrap() != 2);
        let out = mgeo(&["--replay", out_path.to_str().unwrap()]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{config}\n{}",
            String::from_utf8_lossy(&out.stdout)
        );
        let replay: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(!replay["items"].as_array().unwrap().is_empty(), "{config}");
    }
}

#[test]
fn tampered_report_fails_replay() {
    let dir = TempDir::new().unwrap();
    let (_, stdout, _) = run(&configs()[0], &[]);
    let mut report: Value = serde_json::from_str(&stdout).unwrap();
    let bound = &mut report["results"]["estimates"][0]["estimate"]["lower_bound"];
    *bound = json!(bound.as_f64().unwrap() * 1.01);
    let path = write(&dir, "tampered.json", &report);
    assert_eq!(mgeo(&["--replay", &path]).status.code(), Some(1));
}

#[test]
fn flags_override_the_config() {
    let (code, stdout, _) = run(
        &configs()[0],
        &[
            "--seed", "11", "--budget", "300", "--depth", "2", "--tol", "1e-7",
        ],
    );
    assert_eq!(code, 0);
    let r: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(r["config"]["seed"], json!(11));
    assert_eq!(r["config"]["params"]["budget"], json!(300));
    assert_eq!(r["config"]["params"]["depth"], json!(2));
    assert_eq!(r["config"]["params"]["tol"], json!(1e-7));
}

#[test]
fn output_does_not_depend_on_threads() {
    for config in [&configs()[1], &configs()[2]] {
        let (_, one, _) = run(config, &["--threads", "1"]);
        let (_, two, _) = run(config, &["--threads", "2"]);
        assert_eq!(one, two);
        assert!(!one.contains("elapsed"));
    }
    let (code, _, _) = run(&configs()[0], &["--threads", "0"]);
    assert_eq!(code, 2);
}

#[test]
fn text_and_csv_formats() {
    let (_, csv, _) = run(&configs()[2], &["--format", "csv"]);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("point,norm,depth,brace"));
    // three points, depths 0 to 2
    assert_eq!(lines.count(), 9);

    let (_, text, _) = run(&configs()[1], &["--format", "text"]);
    assert!(text.starts_with("verify"));
    assert!(text.contains("suite") && text.contains("holder"));
}

#[test]
fn output_key_in_config_writes_a_file() {
    let dir = TempDir::new().unwrap();
    let target = dir.path().join("out.json");
    let mut config = configs()[0].clone();
    config["output"] = json!(target.to_str().unwrap());
    let path = write(&dir, "c.json", &config);
    let out = mgeo(&[&path]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    assert!(Report::from_json(&std::fs::read_to_string(Path::new(&target)).unwrap()).is_ok());
}

#[test]
fn configs_round_trip() {
    for config in configs() {
        let parsed = ExperimentConfig::from_json(&config.to_string()).unwrap();
        let again = ExperimentConfig::from_json(&parsed.to_json()).unwrap();
        assert_eq!(parsed, again);
    }
}
