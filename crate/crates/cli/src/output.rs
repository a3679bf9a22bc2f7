//! Result files. Every JSON document carries exactly one volatile field,
//! `timestamp`; everything else is a function of the inputs and the seed.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mcdecomp_core::io;
use nalgebra::DMatrix;
use serde::Serialize;

/// A non-finite value in a result.
#[derive(Debug)]
pub struct NumericFailure(pub String);

impl fmt::Display for NumericFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "numeric failure: {}", self.0)
    }
}

impl std::error::Error for NumericFailure {}

pub fn ensure_finite<'a>(what: &str, values: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NumericFailure(format!("{what} contains non-finite values")).into())
    }
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    timestamp: String,
    #[serde(flatten)]
    body: &'a T,
}

fn stamp<T: Serialize>(body: &T) -> Stamped<'_, T> {
    Stamped {
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        body,
    }
}

pub fn json_string<T: Serialize>(body: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(&stamp(body))? + "\n")
}

pub fn write_json<T: Serialize>(path: &Path, body: &T) -> Result<()> {
    io::write_json(path, &stamp(body)).with_context(|| format!("cannot write {}", path.display()))
}

/// Writes to `path`, or prints to stdout when there is none.
pub fn emit_json<T: Serialize>(path: Option<&Path>, body: &T) -> Result<()> {
    match path {
        Some(p) => write_json(p, body),
        None => {
            print!("{}", json_string(body)?);
            Ok(())
        }
    }
}

/// Output directory that records the names of the files written into it.
pub struct OutDir {
    dir: PathBuf,
    pub files: Vec<String>,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn matrix(&mut self, name: &str, data: &DMatrix<f64>, prefix: &str) -> Result<()> {
        ensure_finite(name, data.iter())?;
        let header = io::channel_header(prefix, data.ncols());
        io::write_csv(&self.path(name), data, Some(&header))
            .with_context(|| format!("cannot write {name}"))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<()> {
        write_json(&self.path(name), body)?;
        self.files.push(name.to_string());
        Ok(())
    }
}
