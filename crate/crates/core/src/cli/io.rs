//! Data loading, table writing and run manifests.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Failure;
use crate::criterion::Selector;
use crate::family::{Dataset, Family};
use crate::penalty::{PenaltyKind, PenaltySpec};
use crate::rng::RNG_ALGORITHM;
use crate::simbench::SimulationConfig;

pub const TOOL: &str = "pqs";

/// A dataset read from CSV, with the regressor names in file order.
pub struct LoadedData {
    pub columns: Vec<String>,
    pub data: Dataset,
}

/// Reads a CSV with a header row. The `y` column is the response and every
/// other column is a regressor.
pub fn read_dataset(path: &Path, family: Family) -> Result<LoadedData, Failure> {
    let usage = |m: String| Failure::Usage(format!("{}: {m}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| usage(e.to_string()))?;
    let headers = reader.headers().map_err(|e| usage(e.to_string()))?.clone();
    let y_col = headers
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| usage("no column named `y`".into()))?;
    let columns: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != y_col)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| usage(e.to_string()))?;
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                usage(format!("row {}, column `{}`: cannot parse {field:?}", row + 1, &headers[col]))
            })?;
            if col == y_col {
                ys.push(v);
            } else {
                xs.push(v);
            }
        }
    }
    let n = ys.len();
    let x = DMatrix::from_row_slice(n, columns.len(), &xs);
    let data = Dataset::new(family, x, DVector::from_vec(ys)).map_err(|e| usage(e.to_string()))?;
    Ok(LoadedData { columns, data })
}

/// Renders a float with the shortest decimal that round-trips.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(|e| runtime(path, e))?;
    w.write_record(header).map_err(|e| runtime(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| runtime(path, e))?;
    }
    w.flush().map_err(|e| runtime(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| runtime(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| runtime(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| runtime(dir, e))
}

fn runtime(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

/// Everything needed to rerun a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase", deny_unknown_fields)]
pub enum ResolvedCommand {
    Fit {
        model: Family,
        penalty: PenaltySpec,
        data: PathBuf,
    },
    Select {
        model: Family,
        penalty: PenaltyKind,
        lambdas: Vec<f64>,
        selector: Selector,
        folds: usize,
        mc_samples: usize,
        data: PathBuf,
    },
    Bench {
        config: SimulationConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub resolved: ResolvedCommand,
    pub seed: u64,
    pub rng_algorithm: String,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(resolved: ResolvedCommand, seed: u64) -> Self {
        Self {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            resolved,
            seed,
            rng_algorithm: RNG_ALGORITHM.into(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }
}

/// Parses JSON, reporting the path of the offending field.
pub fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        Failure::Usage(format!("{}: at `{field}`: {}", path.display(), e.inner()))
    })
}
