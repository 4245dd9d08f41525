//! Self-contained binary container for fitted entangled models.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"EKLMODEL" | u32 version | u64 header length | JSON header | f64 arrays
//! ```
//!
//! The header lists every array with its shape; arrays follow in that order,
//! each stored column-major as little-endian `f64`.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{EklError, Result};
use crate::features::{FeatureMap, FeatureMethod, FeatureParams, ScalarKernel};
use crate::harness::data::write_atomic;
use crate::ovk::EntangledModel;
use crate::solver::{entangled_fit_from_parts, FitMode, FitResult, Predictor};

pub const MAGIC: &[u8; 8] = b"EKLMODEL";
pub const VERSION: u32 = 1;

/// Refuse headers larger than this.
const MAX_HEADER: u64 = 1 << 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArraySpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub mode: FitMode,
    pub p: usize,
    pub m: usize,
    pub r: usize,
    pub n: usize,
    pub input_dim: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub seed: u64,
    pub kernel: ScalarKernel,
    pub features: FeatureMethod,
    pub arrays: Vec<ArraySpec>,
}

fn feature_arrays(fm: &FeatureMap) -> Vec<(&'static str, DMatrix<f64>)> {
    match fm.params() {
        FeatureParams::Identity => vec![],
        FeatureParams::Nystrom { landmarks, whitening } => {
            vec![("landmarks", landmarks.clone()), ("whitening", whitening.clone())]
        }
        FeatureParams::Rff { frequencies, phases } => vec![
            ("frequencies", frequencies.clone()),
            ("phases", DMatrix::from_column_slice(phases.len(), 1, phases.as_slice())),
        ],
    }
}

/// Serialize an entangled fit.
pub fn write_model<W: Write>(mut out: W, fit: &FitResult) -> Result<()> {
    let Predictor::Entangled { model, phi_train, .. } = &fit.predictor else {
        return Err(EklError::ModelFormat("only entangled fits can be saved".into()));
    };
    let fm = model.feature_map();
    let mut arrays = feature_arrays(fm);
    arrays.push(("q", model.q().clone()));
    arrays.push(("phi_train", phi_train.clone()));
    arrays.push(("coefficients", fit.coefficients.clone()));
    let header = ModelHeader {
        mode: fit.mode,
        p: model.outputs(),
        m: model.feature_dim(),
        r: model.rank(),
        n: phi_train.ncols(),
        input_dim: fm.input_dim(),
        gamma: model.gamma(),
        lambda: fit.lambda,
        seed: fm.seed(),
        kernel: *fm.kernel(),
        features: fm.method(),
        arrays: arrays
            .iter()
            .map(|(name, a)| ArraySpec {
                name: name.to_string(),
                rows: a.nrows(),
                cols: a.ncols(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    for (_, a) in &arrays {
        for v in a.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Header and arrays without rebuilding the model.
pub fn read_raw<R: Read>(mut input: R) -> Result<(ModelHeader, Vec<DMatrix<f64>>)> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(|_| EklError::ModelFormat("file too short".into()))?;
    if &magic != MAGIC {
        return Err(EklError::ModelFormat("not a model file".into()));
    }
    let mut b4 = [0u8; 4];
    input.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(EklError::ModelFormat(format!("unsupported version {version}")));
    }
    let mut b8 = [0u8; 8];
    input.read_exact(&mut b8)?;
    let len = u64::from_le_bytes(b8);
    if len > MAX_HEADER {
        return Err(EklError::ModelFormat(format!("header length {len} is implausible")));
    }
    let mut json = vec![0u8; len as usize];
    input
        .read_exact(&mut json)
        .map_err(|_| EklError::ModelFormat("truncated header".into()))?;
    let header: ModelHeader = serde_json::from_slice(&json)?;
    let mut arrays = Vec::with_capacity(header.arrays.len());
    for spec in &header.arrays {
        let count = spec
            .rows
            .checked_mul(spec.cols)
            .ok_or_else(|| EklError::ModelFormat("array too large".into()))?;
        let mut bytes = vec![0u8; count * 8];
        input
            .read_exact(&mut bytes)
            .map_err(|_| EklError::ModelFormat(format!("truncated array {}", spec.name)))?;
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")));
        arrays.push(DMatrix::from_iterator(spec.rows, spec.cols, values));
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(EklError::ModelFormat("trailing bytes after arrays".into()));
    }
    Ok((header, arrays))
}

/// Deserialize and rebuild an entangled fit.
pub fn read_model<R: Read>(input: R) -> Result<FitResult> {
    let (header, arrays) = read_raw(input)?;
    let mut named: Vec<(String, DMatrix<f64>)> = header
        .arrays
        .iter()
        .map(|s| s.name.clone())
        .zip(arrays)
        .collect();
    let mut take = |name: &str| -> Result<DMatrix<f64>> {
        let pos = named
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| EklError::ModelFormat(format!("missing array {name}")))?;
        Ok(named.swap_remove(pos).1)
    };
    let params = match header.features {
        FeatureMethod::Exact => FeatureParams::Identity,
        FeatureMethod::Nystrom { .. } => FeatureParams::Nystrom {
            landmarks: take("landmarks")?,
            whitening: take("whitening")?,
        },
        FeatureMethod::Rff { .. } => {
            let phases = take("phases")?;
            FeatureParams::Rff {
                frequencies: take("frequencies")?,
                phases: DVector::from_column_slice(phases.as_slice()),
            }
        }
    };
    let fm = FeatureMap::from_parts(header.kernel, header.features, header.input_dim, header.seed, params)?;
    let q = take("q")?;
    let phi = take("phi_train")?;
    let coefficients = take("coefficients")?;
    if q.shape() != (header.m * header.p, header.r) || phi.shape() != (header.m, header.n) {
        return Err(EklError::ModelFormat("array shapes disagree with header".into()));
    }
    let model = EntangledModel::new(q, header.p, fm, header.gamma, header.lambda)?;
    entangled_fit_from_parts(model, phi, coefficients, header.mode, header.lambda)
}

pub fn save_model(path: impl AsRef<Path>, fit: &FitResult) -> Result<()> {
    write_atomic(path, |f| write_model(std::io::BufWriter::new(f), fit))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<FitResult> {
    let file = std::fs::File::open(path)?;
    read_model(std::io::BufReader::new(file))
}
