//! File formats: cloud CSV, batch metadata JSON and report sidecars.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sample_cloud, sample_observations, Cloud, ObservationBatch, SeedSpec};

/// Stream index of the ground-truth cloud within a batch seed.
pub const CLOUD_STREAM: u64 = 0;
/// Stream index of the observations within a batch seed.
pub const OBSERVATION_STREAM: u64 = 1;

/// Everything needed to regenerate a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchMetadata {
    pub d: usize,
    pub k: usize,
    pub sigma: f64,
    pub n: usize,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub unit_frobenius: bool,
}

fn default_true() -> bool {
    true
}

impl BatchMetadata {
    pub fn cloud(&self) -> Result<Cloud> {
        sample_cloud(
            self.d,
            self.k,
            SeedSpec::new(self.seed, CLOUD_STREAM),
            self.unit_frobenius,
        )
    }

    pub fn batch(&self, cloud: &Cloud) -> Result<ObservationBatch> {
        sample_observations(
            cloud,
            self.sigma,
            self.n,
            SeedSpec::new(self.seed, OBSERVATION_STREAM),
        )
    }
}

pub(crate) fn io_at(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// Reads a file, naming the path in any error.
pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_at(path, e))
}

/// Writes a file, naming the path in any error.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_at(path, e))
}

/// Formats with 17 significant digits, which round-trips every `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Formats with 12 significant digits for human-readable output: positional
/// notation for magnitudes in `[1e-4, 1e15)`, scientific otherwise.
pub fn fmt_f64_12(x: f64) -> String {
    let a = x.abs();
    if !x.is_finite() || a == 0.0 {
        return format!("{x}");
    }
    if !(1e-4..1e15).contains(&a) {
        return format!("{x:.11e}");
    }
    // Round first so that 9.99999999999995 picks the exponent of 10.
    let sci = format!("{x:.11e}");
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    let decimals = (11 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

/// One row per coordinate, one column per point, no header.
pub fn cloud_to_csv(x: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in x.row_iter() {
        let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

pub fn cloud_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|c| {
                c.trim().parse::<f64>().map_err(|e| {
                    Error::Parse(format!("line {}: {:?}: {e}", lineno + 1, c.trim()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let Some(k) = rows.first().map(Vec::len) else {
        return Err(Error::Parse("empty cloud file".into()));
    };
    if let Some(bad) = rows.iter().position(|r| r.len() != k) {
        return Err(Error::Parse(format!(
            "line {}: expected {k} columns, found {}",
            bad + 1,
            rows[bad].len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]))
}

pub fn write_cloud(path: &Path, x: &DMatrix<f64>) -> Result<()> {
    write_text(path, &cloud_to_csv(x))
}

pub fn read_cloud(path: &Path) -> Result<DMatrix<f64>> {
    cloud_from_csv(&read_text(path)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

/// Parses JSON, reporting the line and column of the first error.
pub fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, origin: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        Error::Config(format!(
            "{origin}: line {} column {}: {e}",
            e.line(),
            e.column()
        ))
    })
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    parse_json(&text, &path.display().to_string())
}
