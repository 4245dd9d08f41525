//! Stage two: ridge solutions for the learned kernel, baselines, prediction,
//! reduced features and the complexity bounds.
//!
//! Coefficients of vector-valued fits are indexed sample-major (`i·p + s`),
//! i.e. `c = vec_col(C)` for a `p × n` matrix `C`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{EklError, Result};
use crate::features::{gram_scalar, ScalarKernel};
use crate::ovk::{EntangledModel, PSD_TOL};
use crate::tensor::{check_psd, psd_sqrt, sym_eigen, unvec_col, vec_col};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMode {
    /// Operator-valued prediction with the entangled Gram `Ĝ`.
    Ovk,
    /// Scalar prediction with `tr_p(Ĝ)`.
    Scalar,
    KrrBaseline,
    SeparableBaseline,
}

impl FitMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FitMode::Ovk => "ovk",
            FitMode::Scalar => "scalar",
            FitMode::KrrBaseline => "krr-baseline",
            FitMode::SeparableBaseline => "separable-baseline",
        }
    }
}

/// What a fit needs to predict on new inputs.
#[derive(Debug, Clone)]
pub enum Predictor {
    /// `Ŷ = W Φ_t`; `W` is `p × m`.
    Entangled {
        model: EntangledModel,
        phi_train: DMatrix<f64>,
        weights: DMatrix<f64>,
    },
    /// `Ŷ = Cᵀ K(X, X_t)`.
    Krr {
        kernel: ScalarKernel,
        x_train: DMatrix<f64>,
    },
    /// `Ŷ = T C K(X, X_t)`.
    Separable {
        kernel: ScalarKernel,
        x_train: DMatrix<f64>,
        output: DMatrix<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub mode: FitMode,
    pub lambda: f64,
    /// `np × 1` for ovk and the separable baseline, `n × p` for scalar modes.
    pub coefficients: DMatrix<f64>,
    pub predictor: Predictor,
}

impl FitResult {
    pub fn outputs(&self) -> usize {
        match &self.predictor {
            Predictor::Entangled { model, .. } => model.outputs(),
            Predictor::Krr { .. } => self.coefficients.ncols(),
            Predictor::Separable { output, .. } => output.nrows(),
        }
    }

    pub fn model(&self) -> Option<&EntangledModel> {
        match &self.predictor {
            Predictor::Entangled { model, .. } => Some(model),
            _ => None,
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(EklError::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    Ok(())
}

fn check_labels(n: usize, y: &DMatrix<f64>) -> Result<()> {
    if y.ncols() != n {
        return Err(EklError::Dimension(format!(
            "labels cover {} samples, features {n}",
            y.ncols()
        )));
    }
    Ok(())
}

fn spd_solve(a: DMatrix<f64>, b: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = a
        .cholesky()
        .ok_or_else(|| EklError::Numerical(format!("{what} is not positive definite")))?;
    Ok(chol.solve(&b))
}

/// `(ZZᵀ + λI)⁻¹ v` through the `r × r` system `ZᵀZ + λI`.
pub fn woodbury_solve(z: &DMatrix<f64>, v: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    check_lambda(lambda)?;
    if z.nrows() != v.nrows() {
        return Err(EklError::Dimension(format!(
            "factor has {} rows, right-hand side {}",
            z.nrows(),
            v.nrows()
        )));
    }
    let zt = z.transpose();
    let mut inner = &zt * z;
    for i in 0..inner.nrows() {
        inner[(i, i)] += lambda;
    }
    let proj = spd_solve(inner, &zt * v, "Woodbury pivot")?;
    let mut out = v - z * proj;
    out /= lambda;
    Ok(out)
}

/// Coefficients `c = (Ĝ + λI)⁻¹ vec(Y)` for `Ĝ = ZZᵀ`.
pub fn ovk_coefficients(z: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<DVector<f64>> {
    let v = vec_col(y);
    let c = woodbury_solve(z, &DMatrix::from_column_slice(v.len(), 1, v.as_slice()), lambda)?;
    Ok(c.column(0).into_owned())
}

/// `p × m` weights `W` with `(Φ_tᵀ ⊗ I) Q Qᵀ (Φ ⊗ I) c = vec(W Φ_t)`.
pub fn entangled_weights(q: &DMatrix<f64>, phi: &DMatrix<f64>, c: &DVector<f64>, p: usize) -> Result<DMatrix<f64>> {
    let cm = unvec_col(c, p)?;
    if cm.ncols() != phi.ncols() {
        return Err(EklError::Dimension(format!(
            "coefficients cover {} samples, features {}",
            cm.ncols(),
            phi.ncols()
        )));
    }
    let back = vec_col(&(cm * phi.transpose()));
    let w = q * (q.tr_mul(&back));
    unvec_col(&w, p)
}

/// Operator-valued ridge fit with the entangled kernel.
pub fn fit_operator_valued(em: &EntangledModel, phi: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<FitResult> {
    check_lambda(lambda)?;
    check_labels(phi.ncols(), y)?;
    if y.nrows() != em.outputs() {
        return Err(EklError::Dimension(format!(
            "labels have {} outputs, model {}",
            y.nrows(),
            em.outputs()
        )));
    }
    let z = em.low_rank_factor(phi)?;
    let c = ovk_coefficients(&z, y, lambda)?;
    entangled_fit_from_parts(
        em.clone(),
        phi.clone(),
        DMatrix::from_column_slice(c.len(), 1, c.as_slice()),
        FitMode::Ovk,
        lambda,
    )
}

/// Rebuild an entangled fit from its model, training features and coefficients.
/// Fitting and loading both go through here, so predictions agree bit for bit.
pub fn entangled_fit_from_parts(
    model: EntangledModel,
    phi_train: DMatrix<f64>,
    coefficients: DMatrix<f64>,
    mode: FitMode,
    lambda: f64,
) -> Result<FitResult> {
    check_lambda(lambda)?;
    if phi_train.nrows() != model.feature_dim() {
        return Err(EklError::Dimension(format!(
            "feature matrix has {} rows, model expects {}",
            phi_train.nrows(),
            model.feature_dim()
        )));
    }
    let (n, p) = (phi_train.ncols(), model.outputs());
    let weights = match mode {
        FitMode::Ovk => {
            if coefficients.shape() != (n * p, 1) {
                return Err(EklError::Dimension(format!(
                    "ovk coefficients must be {}x1, got {:?}",
                    n * p,
                    coefficients.shape()
                )));
            }
            entangled_weights(model.q(), &phi_train, &coefficients.column(0).into_owned(), p)?
        }
        FitMode::Scalar => {
            if coefficients.nrows() != n {
                return Err(EklError::Dimension(format!(
                    "scalar coefficients must have {n} rows, got {}",
                    coefficients.nrows()
                )));
            }
            (model.output_trace() * &phi_train * &coefficients).transpose()
        }
        other => {
            return Err(EklError::InvalidParameter(format!(
                "{} is not an entangled fit mode",
                other.as_str()
            )))
        }
    };
    Ok(FitResult {
        mode,
        lambda,
        coefficients,
        predictor: Predictor::Entangled {
            model,
            phi_train,
            weights,
        },
    })
}

/// `C = (ΦᵀBΦ + λI)⁻¹ Yᵀ` through the `m × m` system `WWᵀ + λI`, `W = B^{1/2}Φ`.
pub fn scalar_coefficients(b: &DMatrix<f64>, phi: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    check_lambda(lambda)?;
    check_labels(phi.ncols(), y)?;
    if b.shape() != (phi.nrows(), phi.nrows()) {
        return Err(EklError::Dimension(format!(
            "output trace is {:?}, features have {} rows",
            b.shape(),
            phi.nrows()
        )));
    }
    let w = psd_sqrt(b) * phi;
    let yt = y.transpose();
    let mut inner = &w * w.transpose();
    for i in 0..inner.nrows() {
        inner[(i, i)] += lambda;
    }
    let proj = spd_solve(inner, &w * &yt, "scalar pivot")?;
    let mut c = yt - w.transpose() * proj;
    c /= lambda;
    Ok(c)
}

/// Ridge fit with the extracted scalar kernel `tr_p(Ĝ) = ΦᵀBΦ`.
pub fn fit_scalar(em: &EntangledModel, phi: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<FitResult> {
    if phi.nrows() != em.feature_dim() {
        return Err(EklError::Dimension(format!(
            "feature matrix has {} rows, model expects {}",
            phi.nrows(),
            em.feature_dim()
        )));
    }
    if y.nrows() != em.outputs() {
        return Err(EklError::Dimension(format!(
            "labels have {} outputs, model {}",
            y.nrows(),
            em.outputs()
        )));
    }
    let c = scalar_coefficients(&em.output_trace(), phi, y, lambda)?;
    entangled_fit_from_parts(em.clone(), phi.clone(), c, FitMode::Scalar, lambda)
}

/// Fit either entangled mode.
pub fn fit_entangled(em: &EntangledModel, phi: &DMatrix<f64>, y: &DMatrix<f64>, mode: FitMode) -> Result<FitResult> {
    match mode {
        FitMode::Ovk => fit_operator_valued(em, phi, y, em.lambda()),
        FitMode::Scalar => fit_scalar(em, phi, y, em.lambda()),
        other => Err(EklError::InvalidParameter(format!(
            "{} is not an entangled fit mode",
            other.as_str()
        ))),
    }
}

/// Kernel ridge coefficients `C = (K + λI)⁻¹ Yᵀ` (`n × p`).
pub fn krr_coefficients(k: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    check_lambda(lambda)?;
    check_labels(k.ncols(), y)?;
    check_psd(k, PSD_TOL, "scalar Gram matrix")?;
    let mut a = k.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += lambda;
    }
    spd_solve(a, y.transpose(), "K + λI")
}

pub fn fit_krr_baseline(kernel: &ScalarKernel, x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<FitResult> {
    let k = gram_scalar(kernel, x, x)?;
    let c = krr_coefficients(&k, y, lambda)?;
    Ok(FitResult {
        mode: FitMode::KrrBaseline,
        lambda,
        coefficients: c,
        predictor: Predictor::Krr {
            kernel: *kernel,
            x_train: x.clone(),
        },
    })
}

/// Solve `(K ⊗ T + λI) vec(C) = vec(Y)`, i.e. `TCK + λC = Y`, in the
/// eigenbases of `K` and `T`. Returns `C` (`p × n`).
pub fn separable_coefficients(k: &DMatrix<f64>, t: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    check_lambda(lambda)?;
    check_labels(k.ncols(), y)?;
    if t.shape() != (y.nrows(), y.nrows()) {
        return Err(EklError::Dimension(format!(
            "output matrix is {:?}, labels have {} outputs",
            t.shape(),
            y.nrows()
        )));
    }
    check_psd(k, PSD_TOL, "scalar Gram matrix")?;
    check_psd(t, PSD_TOL, "output matrix")?;
    let ek = sym_eigen(k);
    let et = sym_eigen(t);
    let mut yt = et.eigenvectors.transpose() * y * &ek.eigenvectors;
    for j in 0..yt.ncols() {
        for s in 0..yt.nrows() {
            yt[(s, j)] /= et.eigenvalues[s].max(0.0) * ek.eigenvalues[j].max(0.0) + lambda;
        }
    }
    Ok(&et.eigenvectors * yt * ek.eigenvectors.transpose())
}

/// Separable solve with `K = UUᵀ`, `U` of size `n × m`; cost `O(m³ + m²n + p³)`.
pub fn low_rank_separable_coefficients(
    u: &DMatrix<f64>,
    t: &DMatrix<f64>,
    y: &DMatrix<f64>,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    check_lambda(lambda)?;
    check_labels(u.nrows(), y)?;
    if t.shape() != (y.nrows(), y.nrows()) {
        return Err(EklError::Dimension("output matrix does not match labels".into()));
    }
    // K = P S Pᵀ with P = U R S^{-1/2} orthonormal, UᵀU = R S Rᵀ.
    let eu = sym_eigen(&(u.transpose() * u));
    let top = eu.eigenvalues.max().max(0.0);
    let keep: Vec<usize> = (0..eu.eigenvalues.len())
        .filter(|&i| eu.eigenvalues[i] > 1e-12 * top && eu.eigenvalues[i] > 0.0)
        .collect();
    let mut p_mat = DMatrix::zeros(u.nrows(), keep.len());
    let mut sig = DVector::zeros(keep.len());
    for (col, &i) in keep.iter().enumerate() {
        let s = eu.eigenvalues[i];
        sig[col] = s;
        p_mat.set_column(col, &(u * eu.eigenvectors.column(i) / s.sqrt()));
    }
    let et = sym_eigen(t);
    let v = &et.eigenvectors;
    // Rows of Y' = VᵀY solve τ_s c K + λ c = y.
    let yp = v.transpose() * y;
    let proj = &yp * &p_mat;
    let mut shrunk = proj.clone();
    for s in 0..shrunk.nrows() {
        let tau = et.eigenvalues[s].max(0.0);
        for j in 0..shrunk.ncols() {
            let a = tau * sig[j];
            shrunk[(s, j)] *= a / (a + lambda);
        }
    }
    let cp = (yp - shrunk * p_mat.transpose()) / lambda;
    Ok(v * cp)
}

pub fn fit_separable_baseline(
    kernel: &ScalarKernel,
    x: &DMatrix<f64>,
    t: &DMatrix<f64>,
    y: &DMatrix<f64>,
    lambda: f64,
) -> Result<FitResult> {
    let k = gram_scalar(kernel, x, x)?;
    let c = separable_coefficients(&k, t, y, lambda)?;
    let v = vec_col(&c);
    Ok(FitResult {
        mode: FitMode::SeparableBaseline,
        lambda,
        coefficients: DMatrix::from_column_slice(v.len(), 1, v.as_slice()),
        predictor: Predictor::Separable {
            kernel: *kernel,
            x_train: x.clone(),
            output: t.clone(),
        },
    })
}

/// Dense `(G + λI)⁻¹ v` for a general `np × np` Gram with no exploitable structure.
pub fn unstructured_coefficients(g: &DMatrix<f64>, v: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    if g.nrows() != v.len() || !g.is_square() {
        return Err(EklError::Dimension("Gram matrix and labels disagree".into()));
    }
    let mut a = g.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += lambda;
    }
    let rhs = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
    Ok(spd_solve(a, rhs, "G + λI")?.column(0).into_owned())
}

/// Predictions `Ŷ` (`p × t`) for the rows of `x_test` (`t × d`).
pub fn predict(fit: &FitResult, x_test: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    match &fit.predictor {
        Predictor::Entangled { model, weights, .. } => {
            let phi_t = model.feature_map().apply(x_test)?;
            Ok(weights * phi_t)
        }
        Predictor::Krr { kernel, x_train } => {
            check_inputs(x_train, x_test)?;
            let kt = gram_scalar(kernel, x_test, x_train)?;
            Ok(fit.coefficients.transpose() * kt)
        }
        Predictor::Separable {
            kernel,
            x_train,
            output,
        } => {
            check_inputs(x_train, x_test)?;
            let kt = gram_scalar(kernel, x_test, x_train)?;
            let c = unvec_col(&fit.coefficients.column(0).into_owned(), output.nrows())?;
            Ok(output * (c * kt))
        }
    }
}

/// Predictions from precomputed test features `Φ_t` (`m × t`); entangled fits only.
pub fn predict_features(fit: &FitResult, phi_t: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    match &fit.predictor {
        Predictor::Entangled { model, weights, .. } => {
            if phi_t.nrows() != model.feature_dim() {
                return Err(EklError::Dimension(format!(
                    "test features have {} rows, model expects {}",
                    phi_t.nrows(),
                    model.feature_dim()
                )));
            }
            Ok(weights * phi_t)
        }
        _ => Err(EklError::InvalidParameter(
            "baseline fits predict from inputs, not features".into(),
        )),
    }
}

fn check_inputs(x_train: &DMatrix<f64>, x_test: &DMatrix<f64>) -> Result<()> {
    if x_train.ncols() != x_test.ncols() {
        return Err(EklError::Dimension(format!(
            "model expects {} input columns, got {}",
            x_train.ncols(),
            x_test.ncols()
        )));
    }
    Ok(())
}

/// Reduced features `Z_t = (Φ_tᵀ ⊗ I_p) Q` (`tp × r`).
pub fn reduce_dimensions(em: &EntangledModel, phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    em.low_rank_factor(phi)
}

/// The `t × r` coordinates of output `s` inside reduced features `Z` (`tp × r`).
pub fn output_slice(z: &DMatrix<f64>, p: usize, s: usize) -> Result<DMatrix<f64>> {
    if p == 0 || !z.nrows().is_multiple_of(p) || s >= p {
        return Err(EklError::Dimension(format!(
            "cannot take output {s} of {p} from {} rows",
            z.nrows()
        )));
    }
    let t = z.nrows() / p;
    Ok(DMatrix::from_fn(t, z.ncols(), |i, j| z[(i * p + s, j)]))
}

/// `β √(κ p / n)`.
pub fn rademacher_bound(beta: f64, kappa: f64, p: f64, n: f64) -> Result<f64> {
    for (name, v) in [("beta", beta), ("kappa", kappa), ("p", p), ("n", n)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(EklError::InvalidParameter(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(beta * (kappa * p / n).sqrt())
}

/// `R̂ + 4√2 M √(β²κp/n) + 3M √(ln(2/δ) / 2n)`.
#[allow(clippy::too_many_arguments)]
pub fn generalization_bound(emp_risk: f64, beta: f64, kappa: f64, p: f64, n: f64, m_bound: f64, delta: f64) -> Result<f64> {
    let rad = rademacher_bound(beta, kappa, p, n)?;
    if !(emp_risk >= 0.0) || !emp_risk.is_finite() {
        return Err(EklError::InvalidParameter(format!("empirical risk must be non-negative, got {emp_risk}")));
    }
    if !(m_bound >= 0.0) || !m_bound.is_finite() {
        return Err(EklError::InvalidParameter(format!("M must be non-negative, got {m_bound}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(EklError::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")));
    }
    let complexity = 4.0 * std::f64::consts::SQRT_2 * m_bound * rad;
    let confidence = 3.0 * m_bound * ((2.0 / delta).ln() / (2.0 * n)).sqrt();
    Ok(emp_risk + complexity + confidence)
}

/// Reference implementations that materialize `np × np` matrices.
/// Refuse anything larger than [`dense::LIMIT`] rows.
pub mod dense {
    use nalgebra::{DMatrix, DVector};

    use crate::error::{EklError, Result};
    use crate::ovk::EntangledModel;
    use crate::tensor::kron;

    pub const LIMIT: usize = 2000;

    fn guard(size: usize) -> Result<()> {
        if size > LIMIT {
            return Err(EklError::InvalidParameter(format!(
                "dense reference path limited to {LIMIT} rows, got {size}"
            )));
        }
        Ok(())
    }

    /// `Ĝ = (Φᵀ ⊗ I) D (Φ ⊗ I)` built from explicit Kronecker products.
    pub fn entangled_gram(em: &EntangledModel, phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let p = em.outputs();
        guard(phi.ncols() * p)?;
        guard(phi.nrows() * p)?;
        let lift = kron(&phi.transpose(), &DMatrix::identity(p, p));
        Ok(&lift * em.materialize_d() * lift.transpose())
    }

    /// `(G + λI)⁻¹ v` by LU.
    pub fn ridge_solve(g: &DMatrix<f64>, v: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
        guard(g.nrows())?;
        let mut a = g.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += lambda;
        }
        a.lu()
            .solve(v)
            .ok_or_else(|| EklError::Numerical("singular dense system".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_arithmetic() {
        assert_eq!(rademacher_bound(1.0, 1.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(rademacher_bound(2.0, 4.0, 9.0, 36.0).unwrap(), 2.0);
        assert_eq!(generalization_bound(0.37, 2.0, 4.0, 9.0, 36.0, 0.0, 0.05).unwrap(), 0.37);
        assert!(rademacher_bound(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(generalization_bound(0.1, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn generalization_bound_formula() {
        let got = generalization_bound(0.5, 1.0, 2.0, 3.0, 50.0, 1.5, 0.1).unwrap();
        let expect = 0.5
            + 4.0 * 2f64.sqrt() * 1.5 * (6.0f64 / 50.0).sqrt()
            + 3.0 * 1.5 * ((20.0f64).ln() / 100.0).sqrt();
        assert!((got - expect).abs() < 1e-14);
    }

    #[test]
    fn zero_factor_gives_scaled_labels() {
        let z = DMatrix::zeros(6, 2);
        let y = DMatrix::from_fn(2, 3, |i, j| (i + 3 * j) as f64);
        let c = ovk_coefficients(&z, &y, 4.0).unwrap();
        assert_eq!(c, vec_col(&y) / 4.0);
    }

    #[test]
    fn identity_kernel_krr() {
        let k = DMatrix::identity(4, 4);
        let y = DMatrix::from_fn(2, 4, |i, j| (i as f64) - (j as f64));
        let c = krr_coefficients(&k, &y, 0.5).unwrap();
        assert!((c - y.transpose() / 1.5).norm() < 1e-14);
    }

    #[test]
    fn nonpositive_lambda_rejected() {
        let z = DMatrix::zeros(2, 1);
        let y = DMatrix::zeros(1, 2);
        assert!(ovk_coefficients(&z, &y, 0.0).is_err());
        assert!(krr_coefficients(&DMatrix::identity(2, 2), &y, -1.0).is_err());
    }

    #[test]
    fn output_slice_picks_rows() {
        let z = DMatrix::from_fn(6, 2, |i, j| (10 * i + j) as f64);
        let s1 = output_slice(&z, 2, 1).unwrap();
        assert_eq!(s1.shape(), (3, 2));
        assert_eq!(s1[(2, 1)], 51.0);
        assert!(output_slice(&z, 4, 0).is_err());
    }

    #[test]
    fn dense_guard() {
        let g = DMatrix::zeros(LIMIT_PLUS, LIMIT_PLUS);
        assert!(dense::ridge_solve(&g, &DVector::zeros(LIMIT_PLUS), 1.0).is_err());
    }

    const LIMIT_PLUS: usize = dense::LIMIT + 1;
}
