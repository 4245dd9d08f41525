//! Machine-readable result rows.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::data::write_atomic;
use crate::error::Result;

/// One result line. Empty fields are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub n: usize,
    pub p: usize,
    pub m: Option<usize>,
    pub r: Option<usize>,
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub nmse: Option<f64>,
    pub ni: Option<f64>,
    pub fit_seconds: Option<f64>,
    pub predict_seconds: Option<f64>,
    pub seed: u64,
}

pub fn write_rows<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn save_rows(path: impl AsRef<Path>, rows: &[ResultRow]) -> Result<()> {
    write_atomic(path, |f| write_rows(f, rows))
}

pub fn read_rows(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    reader
        .deserialize()
        .map(|r| r.map_err(Into::into))
        .collect()
}
