//! Positive-partial-transpose test for block kernel matrices.
//!
//! A negative eigenvalue of the partial transpose proves that a psd block
//! matrix is not a sum of Kronecker products of psd factors. A
//! [`PptVerdict::PptHolds`] result does not prove separability.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{EklError, Result};
use crate::tensor::{check_psd, spectrum, BlockMatrix};

pub const DEFAULT_PPT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum PptVerdict {
    /// Smallest eigenvalue of the partial transpose is at least `−tol`.
    PptHolds { min_eig: f64 },
    /// The partial transpose has the given negative eigenvalue.
    Entangled { min_eig: f64 },
}

impl PptVerdict {
    pub fn min_eig(&self) -> f64 {
        match *self {
            PptVerdict::PptHolds { min_eig } | PptVerdict::Entangled { min_eig } => min_eig,
        }
    }

    pub fn is_entangled(&self) -> bool {
        matches!(self, PptVerdict::Entangled { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            PptVerdict::PptHolds { .. } => "ppt-holds",
            PptVerdict::Entangled { .. } => "entangled",
        }
    }
}

/// PPT verdict for a symmetric psd block matrix.
///
/// The matrix is scaled to unit trace first, so the reported eigenvalue is
/// that of the normalized matrix and `tol` is relative to its spectral norm.
pub fn ppt_check(a: &BlockMatrix, tol: f64) -> Result<PptVerdict> {
    if !(tol >= 0.0) {
        return Err(EklError::InvalidParameter(format!("tolerance must be non-negative, got {tol}")));
    }
    check_psd(a.data(), tol, "PPT input")?;
    let trace = a.data().trace();
    if !(trace > 0.0) {
        return Err(EklError::NotPsd("PPT input has zero trace".into()));
    }
    let normalized = BlockMatrix::new(a.data() / trace, a.block_size())?;
    let pt: DMatrix<f64> = normalized.partial_transpose().into_inner();
    let spec = spectrum(&pt);
    let min_eig = spec.min;
    Ok(if min_eig < -tol * spec.norm {
        PptVerdict::Entangled { min_eig }
    } else {
        PptVerdict::PptHolds { min_eig }
    })
}
