//! Operator-valued kernel families and their Gram matrices.
//!
//! Block layout: a Gram matrix over `n` samples with `p` outputs is an
//! `n × n` grid of `p × p` blocks (sample-major), matching `vec_col` of the
//! `p × n` label matrix `Y`. Row `i·p + s` is output `s` of sample `i`.
//!
//! The entangled family is parameterized by `Q` (`mp × r`), with
//! `D = QQᵀ` and `Ĝ = (Φᵀ ⊗ I_p) D (Φ ⊗ I_p)`. Column `j` of `Q` is
//! `vec_col(M_j)` for a `p × m` Kraus operator `M_j`. `D` is only formed by
//! [`EntangledModel::materialize_d`]; everything else goes through `Q`.

use nalgebra::{DMatrix, DVector};

use crate::error::{EklError, Result};
use crate::features::{gram_scalar, FeatureMap, ScalarKernel};
use crate::tensor::{check_psd, kron, sym_eigen};

/// Relative tolerance for psd checks on user-supplied output matrices.
pub const PSD_TOL: f64 = 1e-8;

/// Eigenvalues below this are treated as zero when splitting `T` into vectors.
pub const KRAUS_EIGEN_CLIP: f64 = 1e-12;

/// `K(x, z) = k(x, z) · T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableKernel {
    scalar: ScalarKernel,
    output: DMatrix<f64>,
}

impl SeparableKernel {
    pub fn new(scalar: ScalarKernel, output: DMatrix<f64>) -> Result<Self> {
        scalar.validate()?;
        check_psd(&output, PSD_TOL, "output matrix T")?;
        Ok(Self { scalar, output })
    }

    pub fn scalar(&self) -> &ScalarKernel {
        &self.scalar
    }

    pub fn output(&self) -> &DMatrix<f64> {
        &self.output
    }

    pub fn outputs(&self) -> usize {
        self.output.nrows()
    }
}

/// Block Gram `K(Z, X) ⊗ T`, of size `(t·p) × (n·p)`.
pub fn separable_gram(sk: &SeparableKernel, x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = gram_scalar(&sk.scalar, x, z)?;
    Ok(kron(&k, &sk.output))
}

/// `K(x, z) = Σᵢ Mᵢ φ(x) φ(z)ᵀ Mᵢᵀ`.
#[derive(Debug, Clone)]
pub struct ChoiKrausKernel {
    kraus: Vec<DMatrix<f64>>,
    feature_map: FeatureMap,
}

impl ChoiKrausKernel {
    pub fn new(kraus: Vec<DMatrix<f64>>, feature_map: FeatureMap) -> Result<Self> {
        let first = kraus
            .first()
            .ok_or_else(|| EklError::InvalidParameter("at least one Kraus operator is required".into()))?;
        let shape = first.shape();
        if kraus.iter().any(|k| k.shape() != shape) {
            return Err(EklError::Dimension("Kraus operators must share a shape".into()));
        }
        if shape.1 != feature_map.dim() {
            return Err(EklError::Dimension(format!(
                "Kraus operators have {} columns but the feature map has dimension {}",
                shape.1,
                feature_map.dim()
            )));
        }
        Ok(Self { kraus, feature_map })
    }

    pub fn operators(&self) -> &[DMatrix<f64>] {
        &self.kraus
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.feature_map
    }

    pub fn outputs(&self) -> usize {
        self.kraus[0].nrows()
    }

    /// Kraus rank `r`.
    pub fn rank(&self) -> usize {
        self.kraus.len()
    }
}

fn single_row(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, v.len(), v.as_slice())
}

/// Evaluate a Choi-Kraus kernel on two raw inputs, returning a `p × p` matrix.
pub fn choi_kraus_eval(ck: &ChoiKrausKernel, x: &DVector<f64>, z: &DVector<f64>) -> Result<DMatrix<f64>> {
    let fx = ck.feature_map.apply(&single_row(x))?;
    let fz = ck.feature_map.apply(&single_row(z))?;
    let p = ck.outputs();
    let mut out = DMatrix::zeros(p, p);
    for m in &ck.kraus {
        let a = m * &fx;
        let b = m * &fz;
        out.gemm(1.0, &a, &b.transpose(), 1.0);
    }
    Ok(out)
}

/// Kraus operators `t_j e_kᵀ` reproducing the separable kernel `k(x, z) T`,
/// where `T = Σ_j t_j t_jᵀ` comes from the eigendecomposition of `T` and
/// `k` is the feature-map kernel `⟨φ(x), φ(z)⟩`.
pub fn separable_to_choi_kraus(t: &DMatrix<f64>, feature_map: FeatureMap) -> Result<ChoiKrausKernel> {
    check_psd(t, PSD_TOL, "output matrix T")?;
    let eig = sym_eigen(t);
    let p = t.nrows();
    let m = feature_map.dim();
    let mut kraus = Vec::with_capacity(p * m);
    for j in 0..p {
        let lam = eig.eigenvalues[j];
        let scale = if lam > KRAUS_EIGEN_CLIP { lam.sqrt() } else { 0.0 };
        let tj = eig.eigenvectors.column(j) * scale;
        for k in 0..m {
            let mut op = DMatrix::zeros(p, m);
            op.column_mut(k).copy_from(&tj);
            kraus.push(op);
        }
    }
    ChoiKrausKernel::new(kraus, feature_map)
}

/// Learned entangled kernel: factor `Q` with `‖Q‖_F = 1`, mixing weight `γ`
/// and ridge weight `λ`, plus the scalar feature map.
#[derive(Debug, Clone)]
pub struct EntangledModel {
    q: DMatrix<f64>,
    p: usize,
    feature_map: FeatureMap,
    gamma: f64,
    lambda: f64,
}

/// Tolerance on `| ‖Q‖_F − 1 |` accepted by [`EntangledModel::new`].
pub const SPHERE_TOL: f64 = 1e-10;

impl EntangledModel {
    pub fn new(q: DMatrix<f64>, p: usize, feature_map: FeatureMap, gamma: f64, lambda: f64) -> Result<Self> {
        let m = feature_map.dim();
        check_factor_shape(&q, p, m)?;
        let norm = q.norm();
        if (norm - 1.0).abs() > SPHERE_TOL {
            return Err(EklError::InvalidParameter(format!(
                "Q must have unit Frobenius norm, got {norm}"
            )));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(EklError::InvalidParameter(format!("gamma must lie in [0, 1], got {gamma}")));
        }
        if !(lambda > 0.0) {
            return Err(EklError::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self {
            q,
            p,
            feature_map,
            gamma,
            lambda,
        })
    }

    /// Like [`EntangledModel::new`] but rescales `Q` onto the unit sphere first.
    pub fn normalized(q: DMatrix<f64>, p: usize, feature_map: FeatureMap, gamma: f64, lambda: f64) -> Result<Self> {
        let norm = q.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(EklError::InvalidParameter("Q must be finite and non-zero".into()));
        }
        Self::new(q / norm, p, feature_map, gamma, lambda)
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn outputs(&self) -> usize {
        self.p
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_map.dim()
    }

    /// Kraus rank `r`, the number of columns of `Q`.
    pub fn rank(&self) -> usize {
        self.q.ncols()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.feature_map
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(EklError::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        self.lambda = lambda;
        Ok(self)
    }

    /// Dense `D = QQᵀ` (`mp × mp`). Debug/oracle path only.
    pub fn materialize_d(&self) -> DMatrix<f64> {
        &self.q * self.q.transpose()
    }

    /// `tr_p(D)`, the `m × m` partial trace of `D` over the output blocks.
    pub fn output_trace(&self) -> DMatrix<f64> {
        block_gram(&self.q, self.p, self.feature_dim())
    }

    /// `Z = (Φᵀ ⊗ I_p) Q`, of size `tp × r`, so that `Ĝ = ZZᵀ`.
    pub fn low_rank_factor(&self, phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_features(phi)?;
        Ok(factor(&self.q, phi, self.p))
    }

    /// Dense entangled Gram `Ĝ` (`np × np`).
    pub fn assemble_gram(&self, phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let z = self.low_rank_factor(phi)?;
        Ok(&z * z.transpose())
    }

    /// Scalar kernel `Φ_aᵀ tr_p(D) Φ_b` (`s × n`).
    pub fn extract_scalar_kernel(&self, phi_a: &DMatrix<f64>, phi_b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_features(phi_a)?;
        self.check_features(phi_b)?;
        let b = self.output_trace();
        Ok(phi_a.transpose() * (b * phi_b))
    }

    /// The Kraus operators `M_j = unvec_col(Q[:, j])`, each `p × m`.
    pub fn kraus_operators(&self) -> Vec<DMatrix<f64>> {
        let (p, m) = (self.p, self.feature_dim());
        self.q
            .column_iter()
            .map(|c| DMatrix::from_iterator(p, m, c.iter().copied()))
            .collect()
    }

    pub fn to_choi_kraus(&self) -> Result<ChoiKrausKernel> {
        ChoiKrausKernel::new(self.kraus_operators(), self.feature_map.clone())
    }

    fn check_features(&self, phi: &DMatrix<f64>) -> Result<()> {
        if phi.nrows() != self.feature_dim() {
            return Err(EklError::Dimension(format!(
                "feature matrix has {} rows, model expects {}",
                phi.nrows(),
                self.feature_dim()
            )));
        }
        Ok(())
    }
}

pub fn assemble_gram_entangled(em: &EntangledModel, phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    em.assemble_gram(phi)
}

pub fn low_rank_factor(em: &EntangledModel, phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    em.low_rank_factor(phi)
}

pub fn extract_scalar_kernel(em: &EntangledModel, phi_a: &DMatrix<f64>, phi_b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    em.extract_scalar_kernel(phi_a, phi_b)
}

pub(crate) fn check_factor_shape(q: &DMatrix<f64>, p: usize, m: usize) -> Result<()> {
    if p == 0 || m == 0 {
        return Err(EklError::Dimension("p and m must be positive".into()));
    }
    if q.nrows() != m * p {
        return Err(EklError::Dimension(format!(
            "Q has {} rows, expected m·p = {}",
            q.nrows(),
            m * p
        )));
    }
    if q.ncols() == 0 || q.ncols() > m * p {
        return Err(EklError::Dimension(format!(
            "rank r = {} outside 1..={}",
            q.ncols(),
            m * p
        )));
    }
    Ok(())
}

// Structured kernels on Q. `Q` is `mp × r`; column j reshapes to the p × m
// matrix M_j. Each product is one GEMM between two block permutations.

/// `(Φᵀ ⊗ I_p) Q`: column j is `vec(M_j Φ)`.
pub(crate) fn factor(q: &DMatrix<f64>, phi: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
    let (m, n) = phi.shape();
    let rows = blocks_as_rows(q, p, m);
    rows_as_blocks(&(phi.transpose() * rows), p, n, q.ncols())
}

/// `(Φ ⊗ I_p) X` for `X` of size `np × r`: column j is `vec(X_j Φᵀ)`.
pub(crate) fn factor_adjoint(x: &DMatrix<f64>, phi: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
    let (m, n) = phi.shape();
    let rows = blocks_as_rows(x, p, n);
    rows_as_blocks(&(phi * rows), p, m, x.ncols())
}

/// Rearrange `X` (`bp × r`) into `b × (p·r)`: entry `(k, j·p + s)` is `X[k·p + s, j]`.
fn blocks_as_rows(x: &DMatrix<f64>, p: usize, b: usize) -> DMatrix<f64> {
    let r = x.ncols();
    let src = x.as_slice();
    let mut out = DMatrix::zeros(b, p * r);
    let dst = out.as_mut_slice();
    for (j, col) in src.chunks_exact(b * p).enumerate() {
        for (k, block) in col.chunks_exact(p).enumerate() {
            for (s, &v) in block.iter().enumerate() {
                dst[(j * p + s) * b + k] = v;
            }
        }
    }
    out
}

/// Inverse of [`blocks_as_rows`].
fn rows_as_blocks(rows: &DMatrix<f64>, p: usize, b: usize, r: usize) -> DMatrix<f64> {
    let src = rows.as_slice();
    let mut out = DMatrix::zeros(b * p, r);
    let dst = out.as_mut_slice();
    for (j, col) in dst.chunks_exact_mut(b * p).enumerate() {
        for (k, block) in col.chunks_exact_mut(p).enumerate() {
            for (s, v) in block.iter_mut().enumerate() {
                *v = src[(j * p + s) * b + k];
            }
        }
    }
    out
}

/// `tr_p(QQᵀ)`: entry (k, l) is `⟨Q_k, Q_l⟩_F` over the `p × r` blocks.
pub(crate) fn block_gram(q: &DMatrix<f64>, p: usize, m: usize) -> DMatrix<f64> {
    let rows = blocks_as_rows(q, p, m);
    &rows * rows.transpose()
}

/// `(W ⊗ I_p) Q`: block k of the result is `Σ_l W[k, l] Q_l`.
pub(crate) fn mix_blocks(w: &DMatrix<f64>, q: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
    let m = w.nrows();
    let rows = blocks_as_rows(q, p, m);
    rows_as_blocks(&(w * rows), p, m, q.ncols())
}
