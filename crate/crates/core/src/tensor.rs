//! Block-structured dense linear algebra.
//!
//! Conventions used throughout the crate:
//!
//! * `vec_col` stacks the columns of a matrix top to bottom (column-major),
//!   so that `vec(A B) = (Bᵀ ⊗ I) vec(A)`. A `p × m` matrix therefore
//!   vectorizes to `m` consecutive chunks of length `p`, and any operator
//!   acting on such vectors is an `m × m` grid of `p × p` blocks.
//! * `kron(A, B)[i·q + k, j·q + l] = A[i, j] · B[k, l]` where `B` is `q × q`.
//! * A [`BlockMatrix`] of total size `(b·q) × (b·q)` with `block_size = q`
//!   is a `b × b` grid of `q × q` blocks. The partial trace keeps the grid and
//!   traces each block.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{EklError, Result};

/// Dense square matrix viewed as a `b × b` grid of `q × q` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    data: DMatrix<f64>,
    block_size: usize,
}

impl BlockMatrix {
    pub fn new(data: DMatrix<f64>, block_size: usize) -> Result<Self> {
        if block_size == 0 {
            return Err(EklError::Structure("block size must be positive".into()));
        }
        if !data.is_square() {
            return Err(EklError::Structure(format!(
                "block matrix must be square, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if !data.nrows().is_multiple_of(block_size) {
            return Err(EklError::Structure(format!(
                "dimension {} is not a multiple of block size {}",
                data.nrows(),
                block_size
            )));
        }
        Ok(Self { data, block_size })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Number of blocks along each side of the grid.
    pub fn grid_size(&self) -> usize {
        self.data.nrows() / self.block_size
    }

    /// Blockwise trace: entry `(l, m)` is the trace of block `(l, m)`.
    pub fn partial_trace(&self) -> DMatrix<f64> {
        let q = self.block_size;
        let b = self.grid_size();
        DMatrix::from_fn(b, b, |l, m| {
            (0..q).map(|k| self.data[(l * q + k, m * q + k)]).sum()
        })
    }

    /// Blockwise transpose: every `q × q` block is transposed in place,
    /// the block grid itself is left untouched.
    pub fn partial_transpose(&self) -> BlockMatrix {
        let q = self.block_size;
        let n = self.data.nrows();
        let data = DMatrix::from_fn(n, n, |row, col| {
            let (bi, k) = (row / q, row % q);
            let (bj, l) = (col / q, col % q);
            self.data[(bi * q + l, bj * q + k)]
        });
        BlockMatrix {
            data,
            block_size: q,
        }
    }
}

pub fn partial_trace(a: &BlockMatrix) -> DMatrix<f64> {
    a.partial_trace()
}

pub fn partial_transpose(a: &BlockMatrix) -> BlockMatrix {
    a.partial_transpose()
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(a.nrows() * br, a.ncols() * bc);
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            let mut view = out.view_mut((i * br, j * bc), (br, bc));
            view.zip_apply(b, |o, v| *o = s * v);
        }
    }
    out
}

/// Column-stacking vectorization.
pub fn vec_col(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_col`]: reshape a vector into a matrix with `rows` rows.
pub fn unvec_col(v: &DVector<f64>, rows: usize) -> Result<DMatrix<f64>> {
    if rows == 0 || !v.len().is_multiple_of(rows) {
        return Err(EklError::Dimension(format!(
            "vector of length {} cannot be reshaped into {} rows",
            v.len(),
            rows
        )));
    }
    Ok(DMatrix::from_column_slice(rows, v.len() / rows, v.as_slice()))
}

/// Double centering `H M H` with `H = I − 11ᵀ/n`.
///
/// Computed as `M − row means − column means + grand mean`.
pub fn center(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(EklError::Dimension(format!(
            "centering needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(m.clone());
    }
    let inv = 1.0 / n as f64;
    let row_means: Vec<f64> = (0..n).map(|i| m.row(i).sum() * inv).collect();
    let col_means: Vec<f64> = (0..n).map(|j| m.column(j).sum() * inv).collect();
    let grand = row_means.iter().sum::<f64>() * inv;
    Ok(DMatrix::from_fn(n, n, |i, j| {
        m[(i, j)] - row_means[i] - col_means[j] + grand
    }))
}

/// Largest absolute deviation from symmetry relative to the largest entry.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Eigendecomposition of the symmetric part of `m`.
pub fn sym_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
}

/// Spectral summary of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spectrum {
    pub min: f64,
    pub max: f64,
    /// Spectral norm, `max |λ|`.
    pub norm: f64,
}

pub fn spectrum(m: &DMatrix<f64>) -> Spectrum {
    if m.nrows() == 0 {
        return Spectrum {
            min: 0.0,
            max: 0.0,
            norm: 0.0,
        };
    }
    let eig = sym_eigen(m).eigenvalues;
    let min = eig.min();
    let max = eig.max();
    Spectrum {
        min,
        max,
        norm: min.abs().max(max.abs()),
    }
}

/// Symmetric positive semi-definite within `tol` relative to the spectral norm.
pub fn check_psd(m: &DMatrix<f64>, tol: f64, what: &str) -> Result<Spectrum> {
    if !m.is_square() {
        return Err(EklError::Dimension(format!("{what} must be square")));
    }
    if asymmetry(m) > tol.max(1e-12) {
        return Err(EklError::NotPsd(format!("{what} is not symmetric")));
    }
    let s = spectrum(m);
    if s.min < -tol * s.norm {
        return Err(EklError::NotPsd(format!(
            "{what} has eigenvalue {:.3e} below -{tol:e}·{:.3e}",
            s.min, s.norm
        )));
    }
    Ok(s)
}

/// Symmetric square root of a psd matrix, negative eigenvalues clipped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = sym_eigen(m);
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let scaled = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
    scaled * eig.eigenvectors.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        assert_eq!(a.shape(), b.shape());
        (a - b).amax()
    }

    #[test]
    fn partial_trace_of_identity() {
        let a = BlockMatrix::new(DMatrix::identity(4, 4), 2).unwrap();
        assert_eq!(a.partial_trace(), DMatrix::identity(2, 2) * 2.0);
    }

    #[test]
    fn partial_trace_of_product_operator() {
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let c = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 4.0]));
        let a = BlockMatrix::new(kron(&b, &c), 2).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![7.0, 14.0]));
        assert_eq!(a.partial_trace(), expected);
    }

    #[test]
    fn ragged_block_size_is_rejected() {
        let err = BlockMatrix::new(DMatrix::identity(5, 5), 2).unwrap_err();
        assert!(matches!(err, EklError::Structure(_)));
        assert!(BlockMatrix::new(DMatrix::zeros(2, 3), 1).is_err());
        assert!(BlockMatrix::new(DMatrix::identity(2, 2), 0).is_err());
    }

    #[test]
    fn partial_transpose_keeps_symmetric_blocks() {
        let k = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, 0.5, 3.0]);
        let t = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.3, 0.2, 2.0, 0.4, 0.3, 0.4, 5.0]);
        let a = BlockMatrix::new(kron(&k, &t), 3).unwrap();
        assert_eq!(a.partial_transpose(), a);
    }

    #[test]
    fn partial_transpose_moves_entries_within_blocks() {
        let a = BlockMatrix::new(DMatrix::from_fn(4, 4, |i, j| (4 * i + j) as f64), 2).unwrap();
        let t = a.partial_transpose();
        // block (0, 1) = [[2, 3], [6, 7]] becomes [[2, 6], [3, 7]]
        assert_eq!(t.data()[(0, 3)], 6.0);
        assert_eq!(t.data()[(1, 2)], 3.0);
        assert_eq!(t.partial_transpose(), a);
    }

    #[test]
    fn kron_identities() {
        let i6 = kron(&DMatrix::identity(2, 2), &DMatrix::identity(3, 3));
        assert_eq!(i6, DMatrix::identity(6, 6));
        let s = kron(&DMatrix::from_element(1, 1, 2.0), &DMatrix::identity(2, 2));
        assert_eq!(s, DMatrix::identity(2, 2) * 2.0);
    }

    #[test]
    fn vec_col_stacks_columns() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(vec_col(&m).as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(unvec_col(&vec_col(&m), 2).unwrap(), m);
        assert!(unvec_col(&DVector::zeros(5), 2).is_err());
    }

    #[test]
    fn centering_examples() {
        let ones = DMatrix::from_element(3, 3, 1.0);
        assert!(center(&ones).unwrap().amax() < 1e-15);
        let c = center(&DMatrix::identity(2, 2)).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]);
        assert!(max_diff(&c, &expected) < 1e-15);
    }

    #[test]
    fn psd_check_and_sqrt() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        check_psd(&m, 1e-8, "m").unwrap();
        let r = psd_sqrt(&m);
        assert!(max_diff(&(&r * &r), &m) < 1e-12);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(check_psd(&bad, 1e-8, "bad"), Err(EklError::NotPsd(_))));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(check_psd(&asym, 1e-8, "asym").is_err());
    }
}
