use mcdecomp_core::io::{channel_header, number_tag, read_csv, write_benchmark, write_csv, write_json};
use mcdecomp_core::synthetic::{summarize, ReplicationRecord};
use mcdecomp_core::*;
use nalgebra::DMatrix;

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("y.csv");
    let m = DMatrix::from_fn(50, 3, |i, j| ((i * 7 + j) as f64).sin() * 1e3 / (j + 1) as f64);
    write_csv(&path, &m, Some(&channel_header("y", 3))).unwrap();
    let t = read_csv(&path).unwrap();
    assert_eq!(t.data, m);
    assert_eq!(t.header.unwrap(), vec!["y1", "y2", "y3"]);
    write_csv(&path, &m, None).unwrap();
    assert!(read_csv(&path).unwrap().header.is_none());
    assert!(write_csv(&path, &m, Some(&channel_header("y", 2))).is_err());
    assert!(matches!(read_csv(&dir.path().join("missing.csv")), Err(Error::Input(_))));
}

#[test]
fn whitespace_and_blank_lines_are_tolerated() {
    let t = io::parse_csv(" a , b \n\n 1 , 2\n3,4 \n".as_bytes()).unwrap();
    assert_eq!(t.data, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    assert!(io::parse_csv("".as_bytes()).is_err());
    assert!(io::parse_csv("a,b,c\n1,2\n".as_bytes()).is_err());
}

#[test]
fn json_is_pretty_and_parseable() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    let c = ScenarioConfig { snr: f64::INFINITY, ..Default::default() };
    write_json(&path, &c).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("\n  \"scenario\": 1"));
    let back: ScenarioConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, c);
}

#[test]
fn number_tags() {
    assert_eq!(number_tag(1.5), "1.5");
    assert_eq!(number_tag(6.0), "6");
    assert_eq!(number_tag(f64::INFINITY), "inf");
}

#[test]
fn benchmark_tables() {
    let config = ScenarioConfig { scenario: 1, snr: 1.5, channels: 2, replications: 2, ..Default::default() };
    let mut records = Vec::new();
    for r in 0..2 {
        for method in [Method::SingleC, Method::MultiC] {
            for channel in 1..=2 {
                for (indicator, value) in [("rmse", 0.1 * (r + 1) as f64), ("tp_low", 0.5)] {
                    records.push(ReplicationRecord {
                        replication: r,
                        method,
                        channel,
                        indicator: indicator.into(),
                        value,
                        converged: true,
                    });
                }
            }
        }
    }
    let summary = summarize(&records);
    let report = BenchmarkReport { config, options: BenchmarkOptions::default(), records, summary };
    let dir = tempfile::tempdir().unwrap();
    let written = write_benchmark(&dir.path().join("out"), &report).unwrap();
    let names: Vec<String> = written
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(
        names,
        ["s1_snr1.5_rmse.csv", "s1_snr1.5_selection.csv", "s1_snr1.5_summary.csv", "s1_snr1.5_replications.csv"]
    );
    let rmse = std::fs::read_to_string(&written[0]).unwrap();
    let mut lines = rmse.lines();
    assert_eq!(
        lines.next().unwrap(),
        "channel,rmse:single-c:mean,rmse:single-c:sd,rmse:multi-c:mean,rmse:multi-c:sd"
    );
    let row: Vec<f64> = lines.next().unwrap().split(',').skip(1).map(|v| v.parse().unwrap()).collect();
    assert!((row[0] - 0.15).abs() < 1e-12);
    assert!((row[1] - 0.05 * 2f64.sqrt()).abs() < 1e-12);
    let selection = std::fs::read_to_string(&written[1]).unwrap();
    assert!(selection.starts_with("channel,tp_low:single-c:mean"));
    let reps = std::fs::read_to_string(&written[3]).unwrap();
    assert_eq!(reps.lines().count(), 1 + report.records.len());
}
