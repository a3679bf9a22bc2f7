//! CSV and JSON interchange.
//!
//! Matrices are stored one time sample per row and one channel per column,
//! comma separated, with an optional header row. A first row is taken as a
//! header when any of its fields fails to parse as a number.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::synthetic::{BenchmarkReport, Method, RMSE_INDICATORS, SELECTION_INDICATORS};

/// A parsed numeric table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub data: DMatrix<f64>,
}

pub fn parse_csv<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(values) => {
                if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Input(format!(
                        "line {}: field {} is not finite",
                        i + 1,
                        pos + 1
                    )));
                }
                rows.push(values);
            }
            Err(_) if i == 0 => {
                header = Some(record.iter().map(str::to_string).collect());
            }
            Err(e) => {
                return Err(Error::Input(format!("line {}: {e}", i + 1)));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Input("no data rows".into()));
    }
    let width = rows[0].len();
    if let Some(h) = &header {
        if h.len() != width {
            return Err(Error::Input(format!(
                "header has {} fields, data rows have {width}",
                h.len()
            )));
        }
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != width) {
        return Err(Error::Input(format!(
            "data row {} has {} fields, expected {width}",
            bad + 1,
            rows[bad].len()
        )));
    }
    let data = DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]);
    Ok(Table { header, data })
}

pub fn read_csv(path: &Path) -> Result<Table> {
    let file = File::open(path)
        .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    parse_csv(file)
}

/// Writes `data` with an optional header. Values use the shortest
/// representation that round-trips.
pub fn write_matrix<W: Write>(writer: W, data: &DMatrix<f64>, header: Option<&[String]>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    if let Some(h) = header {
        if h.len() != data.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} header fields for {} columns",
                h.len(),
                data.ncols()
            )));
        }
        wtr.write_record(h)?;
    }
    for row in data.row_iter() {
        wtr.write_record(row.iter().map(|v| v.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_csv(path: &Path, data: &DMatrix<f64>, header: Option<&[String]>) -> Result<()> {
    write_matrix(BufWriter::new(File::create(path)?), data, header)
}

/// Column names `prefix1, ..., prefixK`.
pub fn channel_header(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("{prefix}{i}")).collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Formats a number for file names, e.g. `1.5`, `6` or `inf`.
pub fn number_tag(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v}")
    }
}

/// Wide summary table: one row per channel, a mean and a standard deviation
/// column per (indicator, method).
fn summary_table(report: &BenchmarkReport, indicators: &[&str]) -> (Vec<String>, Vec<Vec<String>>) {
    let methods: Vec<Method> = report.options.methods.clone();
    let mut header = vec!["channel".to_string()];
    let mut columns: Vec<(&str, Method)> = Vec::new();
    for &ind in indicators {
        for &m in &methods {
            if report
                .summary
                .iter()
                .any(|r| r.method == m && r.indicator == ind)
            {
                header.push(format!("{ind}:{m}:mean"));
                header.push(format!("{ind}:{m}:sd"));
                columns.push((ind, m));
            }
        }
    }
    let rows = (1..=report.config.channels)
        .map(|ch| {
            let mut row = vec![format!("ch{ch}")];
            for &(ind, m) in &columns {
                match report
                    .summary
                    .iter()
                    .find(|r| r.method == m && r.indicator == ind && r.channel == ch)
                {
                    Some(r) => {
                        row.push(r.mean.to_string());
                        row.push(r.sd.to_string());
                    }
                    None => {
                        row.push(String::new());
                        row.push(String::new());
                    }
                }
            }
            row
        })
        .collect();
    (header, rows)
}

fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(header)?;
    for r in rows {
        wtr.write_record(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes the RMSE and selection tables, the per-replication records and the
/// long-format summary of a benchmark into `dir`; returns the paths written.
pub fn write_benchmark(dir: &Path, report: &BenchmarkReport) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let stem = format!(
        "s{}_snr{}",
        report.config.scenario,
        number_tag(report.config.snr)
    );
    let mut written = Vec::new();
    for (suffix, indicators) in [
        ("rmse", &RMSE_INDICATORS[..]),
        ("selection", &SELECTION_INDICATORS[..]),
    ] {
        let path = dir.join(format!("{stem}_{suffix}.csv"));
        let (header, rows) = summary_table(report, indicators);
        write_rows(&path, &header, &rows)?;
        written.push(path);
    }

    let path = dir.join(format!("{stem}_summary.csv"));
    let mut wtr = csv::Writer::from_path(&path)?;
    for row in &report.summary {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    written.push(path);

    let path = dir.join(format!("{stem}_replications.csv"));
    let mut wtr = csv::Writer::from_path(&path)?;
    for row in &report.records {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    written.push(path);
    Ok(written)
}
