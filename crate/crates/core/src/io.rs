//! Plain CSV/JSON artifacts written by the command-line tool.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detect::{Pair, PsiEstimate};
use crate::error::{Error, Result};
use crate::moments::DataSet;

/// One entry of `support.json`; indices are 1-based original column positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportEntry {
    pub i: usize,
    pub j: usize,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub name_i: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub name_j: Option<String>,
}

pub fn support_entries(est: &PsiEstimate) -> Vec<SupportEntry> {
    est.support
        .iter()
        .map(|&pair| SupportEntry {
            i: pair.i + 1,
            j: pair.j + 1,
            value: est.value(pair),
            name_i: est.name_of(pair.i).map(str::to_string),
            name_j: est.name_of(pair.j).map(str::to_string),
        })
        .collect()
}

/// 1-based `[i, j]` pairs, as written to `truth.json`.
pub fn pairs_one_based(pairs: &[Pair]) -> Vec<[usize; 2]> {
    pairs.iter().map(|p| [p.i + 1, p.j + 1]).collect()
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// Dense matrix without header, one row per line.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row: k + 1,
            column: "-".into(),
            message: e.to_string(),
        })?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                cell.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    row: k + 1,
                    column: (j + 1).to_string(),
                    message: format!("non-numeric value {cell:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let p = rows.len();
    if p == 0 || rows.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidData(format!("{} is not a square matrix", path.display())));
    }
    Ok(DMatrix::from_row_iterator(p, p, rows.into_iter().flatten()))
}

/// `data.csv` with header `y,x1..xp` (or the data set's own names).
pub fn write_dataset_csv(path: &Path, data: &DataSet) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["y".to_string()];
    header.extend(data.names().iter().cloned());
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for i in 0..data.n() {
        let mut rec = vec![data.y()[i].to_string()];
        rec.extend(data.x().row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_rows_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub command_line: Vec<String>,
    pub parameters: serde_json::Value,
    pub seeds: Vec<u64>,
    /// Input path -> SHA-256.
    pub input_digests: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub tool_version: String,
    pub wall_time_seconds: f64,
    #[serde(default)]
    pub summary: serde_json::Value,
}

impl RunManifest {
    pub fn new(subcommand: &str, command_line: Vec<String>) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            command_line,
            parameters: serde_json::Value::Null,
            seeds: Vec::new(),
            input_digests: BTreeMap::new(),
            outputs: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_seconds: 0.0,
            summary: serde_json::Value::Null,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let digest = file_digest(path)?;
        self.input_digests.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        write_json(&path, self)?;
        Ok(path)
    }
}
