use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gsp_fdi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gsp-fdi")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small, fast experiment settings.
fn write_config(dir: &Path) -> std::path::PathBuf {
    let cfg = serde_json::json!({
        "n_historic": 30,
        "trials": 3,
        "buses": [4, 9],
        "angle_grid": [0.0, 6.0, 12.0],
        "magnitude_grid": [0.0, 0.1],
        "noise_sigmas": [0.001],
        "alphas": [2.0],
        "smoothness_cases": ["ieee14"]
    });
    let p = dir.join("config.json");
    fs::write(&p, cfg.to_string()).unwrap();
    p
}

fn write_state(dir: &Path, name: &str, records: &Value) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, records.to_string()).unwrap();
    p
}

#[test]
fn case_validate_accepts_good_and_rejects_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("two.json");
    fs::write(
        &good,
        r#"{"base_mva": 100, "buses": [
            {"id": 1, "kind": "slack", "p": 0, "q": 0, "v": 1.0},
            {"id": 2, "kind": "pq", "p": -0.5, "q": -0.1}],
          "lines": [{"from": 1, "to": 2, "r": 0.01, "x": 0.1}]}"#,
    )
    .unwrap();
    let out = gsp_fdi(&["case", "validate", path(&good)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("2 buses, 1 lines, slack bus 1"));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"base_mva": 100, "buses": [{"id": 1, "kind": "pq", "p": 0, "q": 0}], "lines": []}"#).unwrap();
    let out = gsp_fdi(&["case", "validate", path(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn powerflow_prints_bus_records() {
    for extra in [None, Some("--dc")] {
        let mut args = vec!["powerflow", "ieee14"];
        args.extend(extra);
        let out = gsp_fdi(&args);
        assert!(out.status.success());
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        let buses = v["buses"].as_array().unwrap();
        assert_eq!(buses.len(), 14);
        assert_eq!(buses[0]["id"], 1);
        assert_eq!(buses[0]["angle_deg"].as_f64().unwrap(), 0.0);
        // bus 14 sits roughly 16 degrees behind the slack
        let a14 = buses[13]["angle_deg"].as_f64().unwrap();
        assert!((-18.0..-14.0).contains(&a14), "{a14}");
    }
}

#[test]
fn calibrate_detect_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let model = dir.path().join("model.json");
    let out = gsp_fdi(&["calibrate", "ieee14", "--config", path(&cfg), "-o", path(&model)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let flow = gsp_fdi(&["powerflow", "ieee14"]);
    let mut state: Value = serde_json::from_slice(&flow.stdout).unwrap();
    let clean = write_state(dir.path(), "clean.json", &state);
    let out = gsp_fdi(&["detect", path(&model), path(&clean)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["verdict"], "H0");
    assert_eq!(report["terms"].as_array().unwrap().len(), 4);

    let angle = &mut state["buses"][8]["angle_deg"];
    *angle = Value::from(angle.as_f64().unwrap() + 10.0);
    let attacked = write_state(dir.path(), "attacked.json", &state);
    let out = gsp_fdi(&["detect", path(&model), path(&attacked)]);
    assert_eq!(out.status.code(), Some(2));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["verdict"], "H1");

    let out = gsp_fdi(&["inspect", path(&model)]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for term in ["[yr/real]", "[yj/real]", "[yj/imag]", "[yr/imag]", "cutoff", "threshold"] {
        assert!(text.contains(term), "inspect output misses {term}");
    }
}

#[test]
fn dc_model_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let model = dir.path().join("dc.json");
    let out = gsp_fdi(&["calibrate", "ieee14", "--dc", "--config", path(&cfg), "-o", path(&model)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let flow = gsp_fdi(&["powerflow", "ieee14"]);
    let mut state: Value = serde_json::from_slice(&flow.stdout).unwrap();
    let angle = &mut state["buses"][8]["angle_deg"];
    *angle = Value::from(angle.as_f64().unwrap() + 10.0);
    let attacked = write_state(dir.path(), "attacked.json", &state);
    let out = gsp_fdi(&["detect", path(&model), path(&attacked)]);
    assert_eq!(out.status.code(), Some(2));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["terms"].as_array().unwrap().len(), 1);
}

#[test]
fn detect_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.json");
    let out = gsp_fdi(&["detect", path(&missing), path(&missing)]);
    assert_eq!(out.status.code(), Some(1));

    let model = dir.path().join("model.json");
    let cfg = write_config(dir.path());
    assert!(gsp_fdi(&["calibrate", "ieee14", "--config", path(&cfg), "-o", path(&model)]).status.success());
    let short = write_state(dir.path(), "short.json", &serde_json::json!({"buses": [{"id": 1, "v": 1.0, "angle_deg": 0.0}]}));
    let out = gsp_fdi(&["detect", path(&model), path(&short)]);
    assert_eq!(out.status.code(), Some(1));

    let mut m: Value = serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    m["format_version"] = Value::from(99);
    fs::write(&model, m.to_string()).unwrap();
    let out = gsp_fdi(&["inspect", path(&model)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn experiments_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out_dir = dir.path().join("out");
    let cases: [(&str, &[&str]); 5] = [
        ("tc1", &["tc1_smoothness.csv"]),
        ("tc2", &["tc2_angle.csv", "tc2_magnitude.csv", "tc2_attribution.csv"]),
        ("tc3", &["tc3_angle.csv", "tc3_magnitude.csv"]),
        ("tc4", &["tc4_report.json", "tc4_spectra.json"]),
        ("compare", &["tc5_compare.csv"]),
    ];
    for (which, files) in cases {
        let out = gsp_fdi(&["experiment", which, "--config", path(&cfg), "-o", path(&out_dir)]);
        assert!(out.status.success(), "{which}: {}", String::from_utf8_lossy(&out.stderr));
        for f in files {
            let text = fs::read_to_string(out_dir.join(f)).unwrap_or_else(|_| panic!("{f} missing"));
            assert!(!text.trim().is_empty(), "{f} is empty");
        }
    }
    // angle grid {0, 6, 12} gives one row per exceedance level and alpha
    let rows = fs::read_to_string(out_dir.join("tc2_angle.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 3);

    let first = fs::read(out_dir.join("tc2_angle.csv")).unwrap();
    let out = gsp_fdi(&["experiment", "tc2", "--config", path(&cfg), "-o", path(&out_dir)]);
    assert!(out.status.success());
    assert_eq!(first, fs::read(out_dir.join("tc2_angle.csv")).unwrap());
}
