use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mcdecomp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcdecomp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = mcdecomp(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| {
            let row: Result<Vec<f64>, _> = l.split(',').map(str::parse).collect();
            row.ok()
        })
        .collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_errors_exit_with_two() {
    let out = mcdecomp(&["fit", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(mcdecomp(&[]).status.code(), Some(2));
    assert_eq!(mcdecomp(&["frame", "--p", "1"]).status.code(), Some(2));
    assert_eq!(mcdecomp(&["theory", "proposition", "--which", "4"]).status.code(), Some(2));
    assert_eq!(mcdecomp(&["--help"]).status.code(), Some(0));
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1,2\n3,oops\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = mcdecomp(&["fit", "--input", p(&bad), "--output", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    let missing = dir.path().join("missing.csv");
    assert_eq!(mcdecomp(&["fit", "--input", p(&missing), "--output", p(&out_dir)]).status.code(), Some(2));

    let config = dir.path().join("c.json");
    std::fs::write(&config, r#"{"fit": {"folds": 3}}"#).unwrap();
    let out = mcdecomp(&["theory", "lambda0", "--config", p(&config)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field"));

    // A frame that needs more samples than the input has.
    let short = dir.path().join("short.csv");
    std::fs::write(&short, "1\n2\n3\n4\n5\n6\n7\n8\n").unwrap();
    assert_eq!(mcdecomp(&["fit", "--input", p(&short), "--output", p(&out_dir)]).status.code(), Some(2));
    assert_eq!(mcdecomp(&["theory", "lambda0", "--x", "-1"]).status.code(), Some(2));
}

#[test]
fn frame_dump_has_unit_columns() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("psi.csv");
    ok(&["frame", "--p", "1", "--q", "2", "--s", "1", "--J", "4", "--n", "256", "--output", p(&path)]);
    let rows = csv_rows(&path);
    assert_eq!(rows.len(), 256);
    assert!(rows.iter().all(|r| r.len() == 256));
    for j in 0..256 {
        let norm: f64 = rows.iter().map(|r| r[j] * r[j]).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }
    let side = json(&dir.path().join("psi.json"));
    assert_eq!(side["columns"], 256);
    assert_eq!(side["normalization"].as_array().unwrap().len(), 256);
    assert_eq!(side["spec"]["p"], 1);

    let out = ok(&["frame", "dump", "--p", "8", "--q", "9", "--s", "3", "--J", "10", "--n", "256"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 256);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 557);
    assert_eq!(
        mcdecomp(&["frame", "--p", "1", "--q", "3", "--s", "1", "--J", "2", "--n", "64"]).status.code(),
        Some(2)
    );
}

#[test]
fn theory_lambda0_report() {
    let out = ok(&["theory", "lambda0", "--x", "2", "--sigma", "1", "--n", "256", "--channels", "3"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!((v["d1"].as_u64(), v["d2"].as_u64()), (Some(256), Some(557)));
    let a = v["lambda0_alpha"].as_f64().unwrap();
    let b = v["lambda0_beta"].as_f64().unwrap();
    assert!((a - 0.2803).abs() < 1e-3 && (b - 1.1134).abs() < 1e-3);
    assert_eq!(v["lambda0"].as_f64().unwrap(), a.max(b / 3f64.sqrt()));
    assert!(v["timestamp"].is_string());
}

#[test]
fn proposition_report() {
    let out = ok(&["theory", "proposition", "--which", "2", "--trials", "1000", "--x", "2"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["check"], "proposition-2");
    assert_eq!(v["trials"], 1000);
    assert_eq!(v["meets_nominal"], true);
    assert!(v["chi_square_mean"].as_f64().is_some());
    assert_eq!(mcdecomp(&["theory", "proposition", "--which", "1", "--trials", "10"]).status.code(), Some(2));
}

#[test]
fn zero_input_gives_an_empty_fit() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("zeros.csv");
    std::fs::write(&input, "a,b\n".to_string() + &"0,0\n".repeat(256)).unwrap();
    let out_dir = dir.path().join("fit");
    ok(&["fit", "--input", p(&input), "--output", p(&out_dir)]);
    let v = json(&out_dir.join("fit.json"));
    assert_eq!(v["active_alpha"].as_array().unwrap().len(), 0);
    assert_eq!(v["active_beta"].as_array().unwrap().len(), 0);
    assert!(v["warning"].is_null());
    for file in ["c_hat.csv", "u_hat.csv", "fitted.csv"] {
        let rows = csv_rows(&out_dir.join(file));
        assert_eq!(rows.len(), 256);
        assert!(rows.iter().flatten().all(|v| *v == 0.0));
    }
    assert_eq!(csv_rows(&out_dir.join("u_hat.csv"))[0].len(), 2);
    assert_eq!(csv_rows(&out_dir.join("c_hat.csv"))[0].len(), 1);
}

#[test]
fn simulated_scenario_three_is_recovered() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&["simulate", "--scenario", "3", "--snr", "6", "--seed", "3", "--output", p(&sim)]);
    let truth = json(&sim.join("truth.json"));
    assert_eq!(truth["config"]["scenario"]["seed"], 3);
    let snr = truth["empirical_snr"].as_f64().unwrap();
    assert!((snr - 6.0).abs() < 1e-9);
    let fit = dir.path().join("fit");
    ok(&["fit", "--input", p(&sim.join("y.csv")), "--output", p(&fit), "--seed", "3"]);
    let alpha = csv_rows(&fit.join("alpha.csv"));
    let support: Vec<usize> = truth["support_alpha"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap() as usize)
        .collect();
    assert_eq!(support.len(), 6);
    assert!(support.iter().all(|&j| alpha[j][0] != 0.0));
    let report = json(&fit.join("fit.json"));
    assert_eq!(report["selection"], "cross-validation");
    let files: Vec<&str> = report["files"].as_array().unwrap().iter().map(|f| f.as_str().unwrap()).collect();
    for f in ["c_hat.csv", "u_hat.csv", "fitted.csv", "cv.csv"] {
        assert!(files.contains(&f));
    }
    let lambdas = report["cv"]["lambdas"].as_array().unwrap();
    let index = report["cv"]["index"].as_u64().unwrap() as usize;
    assert_eq!(lambdas[index], report["lambda"]);
}

#[test]
fn non_convergence_is_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&["simulate", "--scenario", "1", "--snr", "1.5", "--output", p(&sim)]);
    let fit = dir.path().join("fit");
    let out = ok(&[
        "fit", "--input", p(&sim.join("y.csv")), "--output", p(&fit),
        "--lambda", "0.0001", "--max-iterations", "1",
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let v = json(&fit.join("fit.json"));
    assert_eq!(v["converged"], false);
    assert!(v["warning"].is_string());
    assert_eq!(v["selection"], "fixed");
}

#[test]
fn baselines_write_decompositions() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&["simulate", "--scenario", "3", "--snr", "6", "--output", p(&sim)]);
    let y = sim.join("y.csv");
    for (cmd, report) in [("single-fit", "single_fit.json"), ("somp", "somp.json"), ("bcd", "bcd.json")] {
        let out = dir.path().join(cmd);
        ok(&[cmd, "--input", p(&y), "--output", p(&out)]);
        let low = csv_rows(&out.join("low.csv"));
        let high = csv_rows(&out.join("high.csv"));
        let fitted = csv_rows(&out.join("fitted.csv"));
        assert_eq!((low.len(), low[0].len()), (256, 3));
        for i in 0..256 {
            for k in 0..3 {
                assert!((low[i][k] + high[i][k] - fitted[i][k]).abs() < 1e-9);
            }
        }
        assert!(json(&out.join(report))["timestamp"].is_string());
    }
    let somp = json(&dir.path().join("somp").join("somp.json"));
    let budget = somp["budget"].as_u64().unwrap() as usize;
    assert_eq!(
        somp["selected_low"].as_array().unwrap().len() + somp["selected_high"].as_array().unwrap().len(),
        budget
    );
    let fixed = dir.path().join("somp5");
    ok(&["somp", "--input", p(&y), "--output", p(&fixed), "--budget", "5"]);
    assert_eq!(json(&fixed.join("somp.json"))["budget"], 5);
    let cv = dir.path().join("cv");
    ok(&["cv", "--input", p(&y), "--output", p(&cv), "--patience", "0", "--grid-size", "30"]);
    let v = json(&cv.join("cv.json"));
    assert_eq!(v["cv_error"].as_array().unwrap().len(), 30);
    assert_eq!(csv_rows(&cv.join("cv.csv")).len(), 30);
}

#[test]
fn segment_windows() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("long.csv");
    let mut text = String::from("x,y\n");
    for i in 0..1000 {
        text.push_str(&format!("{},{}\n", i, 0.5 * i as f64));
    }
    std::fs::write(&input, text).unwrap();
    let out = dir.path().join("w");
    ok(&["segment", "--input", p(&input), "--length", "300", "--stride", "250", "--output", p(&out)]);
    let index = json(&out.join("index.json"));
    let windows = index["windows"].as_array().unwrap();
    assert_eq!(windows.len(), (1000 - 300) / 250 + 1);
    let first = csv_rows(&out.join(windows[0]["file"].as_str().unwrap()));
    assert_eq!(first.len(), 300);
    assert!(first.iter().enumerate().all(|(i, r)| r[0] == i as f64 && r[1] == 0.5 * i as f64));
    assert_eq!(windows[2]["offset"], 500);
    let third = csv_rows(&out.join(windows[2]["file"].as_str().unwrap()));
    assert_eq!(third[0][0], 500.0);

    let whole = dir.path().join("whole");
    ok(&["segment", "--input", p(&input), "--length", "1000", "--output", p(&whole)]);
    assert_eq!(json(&whole.join("index.json"))["windows"].as_array().unwrap().len(), 1);
    let over = mcdecomp(&["segment", "--input", p(&input), "--length", "1001", "--output", p(&whole)]);
    assert_eq!(over.status.code(), Some(2));
}

#[test]
fn long_recording_gives_360_windows() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("eeg.csv");
    let text: String = (0..360_000).map(|i| format!("{}\n", i % 97)).collect();
    std::fs::write(&input, text).unwrap();
    let out = dir.path().join("w");
    ok(&["segment", "--input", p(&input), "--length", "1000", "--stride", "1000", "--output", p(&out)]);
    let index = json(&out.join("index.json"));
    assert_eq!(index["windows"].as_array().unwrap().len(), 360);
    assert_eq!(index["windows"][359]["offset"], 359_000);
}

#[test]
fn benchmark_manifest_echoes_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(
        &config,
        r#"{"seed": 5, "scenario": {"scenario": 3, "snr": 6, "replications": 2}, "fit": {"lambda_grid_size": 20}}"#,
    )
    .unwrap();
    let out = dir.path().join("bench");
    ok(&["benchmark", "--config", p(&config), "--seed", "9", "--methods", "multi-c", "--output", p(&out)]);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["seed"], 9);
    assert_eq!(m["config"]["seed"], 9);
    assert_eq!(m["config"]["scenario"]["replications"], 2);
    assert_eq!(m["config"]["fit"]["lambda_grid_size"], 20);
    assert_eq!(m["config"]["methods"], serde_json::json!(["multi-c"]));
    let files: Vec<&str> = m["files"].as_array().unwrap().iter().map(|f| f.as_str().unwrap()).collect();
    assert_eq!(files, ["s3_snr6_rmse.csv", "s3_snr6_selection.csv", "s3_snr6_summary.csv", "s3_snr6_replications.csv"]);
    let summary = std::fs::read_to_string(out.join("s3_snr6_summary.csv")).unwrap();
    assert!(summary.starts_with("method,channel,indicator,mean,sd"));
    // 3 channels x 7 indicators, plus the header.
    assert_eq!(summary.lines().count(), 22);
}
