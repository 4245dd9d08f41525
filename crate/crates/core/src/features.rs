//! Scalar kernels and finite-dimensional feature approximations.
//!
//! A [`FeatureMap`] produces `φ̂(x) ∈ ℝᵐ` with `k(x, z) ≈ ⟨φ̂(x), φ̂(z)⟩`.
//! Inputs are stored one sample per row (`n × d`); feature matrices are
//! returned one sample per column (`m × n`).

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{EklError, Result};
use crate::tensor::sym_eigen;

/// Relative eigenvalue cutoff for the Nyström pseudo-inverse square root.
pub const NYSTROM_EIGEN_CUTOFF: f64 = 1e-10;

/// Scalar kernel `k(x, z)`.
///
/// The Gaussian kernel uses `exp(−‖x − z‖² / (2σ²))`, so `k(x, x) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScalarKernel {
    Linear,
    Gaussian { bandwidth: f64 },
}

impl ScalarKernel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ScalarKernel::Linear => Ok(()),
            ScalarKernel::Gaussian { bandwidth } if bandwidth > 0.0 && bandwidth.is_finite() => {
                Ok(())
            }
            ScalarKernel::Gaussian { bandwidth } => Err(EklError::InvalidParameter(format!(
                "gaussian bandwidth must be positive, got {bandwidth}"
            ))),
        }
    }

    fn eval_rows(&self, z: &DMatrix<f64>, i: usize, x: &DMatrix<f64>, j: usize) -> f64 {
        let d = x.ncols();
        match *self {
            ScalarKernel::Linear => (0..d).map(|c| z[(i, c)] * x[(j, c)]).sum(),
            ScalarKernel::Gaussian { bandwidth } => {
                let sq: f64 = (0..d)
                    .map(|c| {
                        let diff = z[(i, c)] - x[(j, c)];
                        diff * diff
                    })
                    .sum();
                (-sq / (2.0 * bandwidth * bandwidth)).exp()
            }
        }
    }

    /// Upper bound on `k(x, x)` over the given samples.
    pub fn diagonal_bound(&self, x: &DMatrix<f64>) -> f64 {
        match self {
            ScalarKernel::Gaussian { .. } => 1.0,
            ScalarKernel::Linear => x
                .row_iter()
                .map(|r| r.norm_squared())
                .fold(0.0, f64::max),
        }
    }
}

/// Exact Gram matrix between rows of `z` (`t × d`) and rows of `x` (`n × d`).
/// Entry `(i, j)` is `k(z_i, x_j)`.
pub fn gram_scalar(kernel: &ScalarKernel, x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    kernel.validate()?;
    if x.ncols() != z.ncols() {
        return Err(EklError::Dimension(format!(
            "input dimension mismatch: {} vs {}",
            x.ncols(),
            z.ncols()
        )));
    }
    if let ScalarKernel::Linear = kernel {
        return Ok(z * x.transpose());
    }
    Ok(DMatrix::from_fn(z.nrows(), x.nrows(), |i, j| {
        kernel.eval_rows(z, i, x, j)
    }))
}

/// How the feature approximation is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureMethod {
    /// `φ̂(x) = x`, only for the linear kernel.
    Exact,
    /// `m` uniformly sampled landmarks, whitened by `K_mm^{-1/2}`.
    Nystrom { m: usize },
    /// Random Fourier features `√(2/m) cos(wᵀx + b)`, Gaussian kernel only.
    Rff { m: usize },
}

/// Fitted parameters of a feature map.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureParams {
    Identity,
    Nystrom {
        /// `m × d`, one landmark per row.
        landmarks: DMatrix<f64>,
        /// `m × m` pseudo-inverse square root of the landmark Gram matrix.
        whitening: DMatrix<f64>,
    },
    Rff {
        /// `m × d`, one frequency per row.
        frequencies: DMatrix<f64>,
        phases: DVector<f64>,
    },
}

/// A fitted scalar-kernel feature map `x ↦ φ̂(x) ∈ ℝᵐ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    kernel: ScalarKernel,
    method: FeatureMethod,
    input_dim: usize,
    seed: u64,
    params: FeatureParams,
}

impl FeatureMap {
    /// Fit a feature map on the rows of `x` (`n × d`). Deterministic given `seed`.
    pub fn fit(kernel: ScalarKernel, method: FeatureMethod, x: &DMatrix<f64>, seed: u64) -> Result<Self> {
        kernel.validate()?;
        let (n, d) = x.shape();
        if d == 0 {
            return Err(EklError::Dimension("inputs have no features".into()));
        }
        let params = match method {
            FeatureMethod::Exact => match kernel {
                ScalarKernel::Linear => FeatureParams::Identity,
                ScalarKernel::Gaussian { .. } => {
                    return Err(EklError::InvalidParameter(
                        "exact features exist only for the linear kernel; use nystrom or rff".into(),
                    ))
                }
            },
            FeatureMethod::Nystrom { m } => {
                if m == 0 || m > n {
                    return Err(EklError::InvalidParameter(format!(
                        "nystrom needs 1 <= m <= n, got m={m}, n={n}"
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut picks = index::sample(&mut rng, n, m).into_vec();
                picks.sort_unstable();
                let landmarks = x.select_rows(&picks);
                let k_mm = gram_scalar(&kernel, &landmarks, &landmarks)?;
                let whitening = pinv_sqrt(&k_mm);
                FeatureParams::Nystrom {
                    landmarks,
                    whitening,
                }
            }
            FeatureMethod::Rff { m } => {
                let bandwidth = match kernel {
                    ScalarKernel::Gaussian { bandwidth } => bandwidth,
                    ScalarKernel::Linear => {
                        return Err(EklError::InvalidParameter(
                            "random Fourier features require the gaussian kernel".into(),
                        ))
                    }
                };
                if m == 0 {
                    return Err(EklError::InvalidParameter("rff needs m >= 1".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let frequencies = DMatrix::from_fn(m, d, |_, _| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z / bandwidth
                });
                let phases = DVector::from_fn(m, |_, _| rng.random::<f64>() * std::f64::consts::TAU);
                FeatureParams::Rff {
                    frequencies,
                    phases,
                }
            }
        };
        Ok(Self {
            kernel,
            method,
            input_dim: d,
            seed,
            params,
        })
    }

    /// Rebuild a map from stored parameters (model files).
    pub fn from_parts(
        kernel: ScalarKernel,
        method: FeatureMethod,
        input_dim: usize,
        seed: u64,
        params: FeatureParams,
    ) -> Result<Self> {
        kernel.validate()?;
        let ok = match (&method, &params) {
            (FeatureMethod::Exact, FeatureParams::Identity) => true,
            (FeatureMethod::Nystrom { m }, FeatureParams::Nystrom { landmarks, whitening }) => {
                landmarks.shape() == (*m, input_dim) && whitening.shape() == (*m, *m)
            }
            (FeatureMethod::Rff { m }, FeatureParams::Rff { frequencies, phases }) => {
                frequencies.shape() == (*m, input_dim) && phases.len() == *m
            }
            _ => false,
        };
        if !ok {
            return Err(EklError::ModelFormat(
                "feature map parameters do not match the declared method".into(),
            ));
        }
        Ok(Self {
            kernel,
            method,
            input_dim,
            seed,
            params,
        })
    }

    pub fn kernel(&self) -> &ScalarKernel {
        &self.kernel
    }

    pub fn method(&self) -> FeatureMethod {
        self.method
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &FeatureParams {
        &self.params
    }

    /// Feature dimension `m`.
    pub fn dim(&self) -> usize {
        match self.method {
            FeatureMethod::Exact => self.input_dim,
            FeatureMethod::Nystrom { m } | FeatureMethod::Rff { m } => m,
        }
    }

    /// Feature matrix `Φ` (`m × t`) for the rows of `x` (`t × d`).
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.input_dim {
            return Err(EklError::Dimension(format!(
                "feature map expects {} input columns, got {}",
                self.input_dim,
                x.ncols()
            )));
        }
        Ok(match &self.params {
            FeatureParams::Identity => x.transpose(),
            FeatureParams::Nystrom {
                landmarks,
                whitening,
            } => {
                // K(landmarks, x) is m × t.
                let k_mt = gram_scalar(&self.kernel, x, landmarks)?;
                whitening * k_mt
            }
            FeatureParams::Rff {
                frequencies,
                phases,
            } => {
                let m = frequencies.nrows();
                let scale = (2.0 / m as f64).sqrt();
                let mut proj = frequencies * x.transpose();
                for mut col in proj.column_iter_mut() {
                    for (v, b) in col.iter_mut().zip(phases.iter()) {
                        *v = scale * (*v + b).cos();
                    }
                }
                proj
            }
        })
    }
}

/// Convenience wrapper around [`FeatureMap::fit`].
pub fn fit_feature_map(
    kernel: ScalarKernel,
    method: FeatureMethod,
    x: &DMatrix<f64>,
    seed: u64,
) -> Result<FeatureMap> {
    FeatureMap::fit(kernel, method, x, seed)
}

/// Convenience wrapper around [`FeatureMap::apply`].
pub fn apply_feature_map(fm: &FeatureMap, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    fm.apply(x)
}

fn pinv_sqrt(k: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = sym_eigen(k);
    let top = eig.eigenvalues.max().max(0.0);
    let cutoff = NYSTROM_EIGEN_CUTOFF * top;
    let inv_roots = eig
        .eigenvalues
        .map(|v| if v > cutoff && v > 0.0 { 1.0 / v.sqrt() } else { 0.0 });
    let scaled = &eig.eigenvectors * DMatrix::from_diagonal(&inv_roots);
    scaled * eig.eigenvectors.transpose()
}

/// Median pairwise Euclidean distance between rows, a common default bandwidth.
pub fn median_distance(x: &DMatrix<f64>) -> f64 {
    let n = x.nrows();
    let mut dists = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push((x.row(i) - x.row(j)).norm());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(f64::total_cmp);
    let med = dists[dists.len() / 2];
    if med > 0.0 {
        med
    } else {
        1.0
    }
}
