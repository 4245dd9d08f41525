//! Cross-validation over `(λ, γ)` and single-split evaluation of the methods.

use std::cmp::Ordering;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::metrics::nmse;
use crate::alignment::{learn_entangled_kernel, EklObjectiveConfig};
use crate::error::{EklError, Result};
use crate::features::{FeatureMap, FeatureMethod, ScalarKernel};
use crate::ovk::EntangledModel;
use crate::solver::{fit_krr_baseline, fit_operator_valued, fit_scalar, fit_separable_baseline, predict, predict_features, FitResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Entangled kernel, operator-valued prediction.
    Ekl,
    /// Entangled kernel, prediction with the extracted scalar kernel.
    PtrEkl,
    Krr,
    Separable,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Ekl => "ekl",
            Method::PtrEkl => "ptr-ekl",
            Method::Krr => "krr",
            Method::Separable => "separable",
        }
    }

    pub fn is_entangled(&self) -> bool {
        matches!(self, Method::Ekl | Method::PtrEkl)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub lambda_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    pub rank_fraction: f64,
}

impl Default for CvPlan {
    fn default() -> Self {
        Self {
            lambda_grid: (-4..=2).map(|e| 10f64.powi(e)).collect(),
            gamma_grid: (0..=10).map(|g| g as f64 / 10.0).collect(),
            folds: 5,
            seed: 0,
            rank_fraction: 1.0,
        }
    }
}

impl CvPlan {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty() || self.gamma_grid.is_empty() {
            return Err(EklError::InvalidParameter("CV grids must be non-empty".into()));
        }
        if self.lambda_grid.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(EklError::InvalidParameter("lambda grid must be positive".into()));
        }
        if self.gamma_grid.iter().any(|g| !(0.0..=1.0).contains(g)) {
            return Err(EklError::InvalidParameter("gamma grid must lie in [0, 1]".into()));
        }
        if self.folds < 2 {
            return Err(EklError::InvalidParameter(format!("need at least 2 folds, got {}", self.folds)));
        }
        if !(self.rank_fraction > 0.0 && self.rank_fraction <= 1.0) {
            return Err(EklError::InvalidParameter(format!(
                "rank fraction must lie in (0, 1], got {}",
                self.rank_fraction
            )));
        }
        Ok(())
    }
}

/// Kernel, feature approximation and optimizer settings shared by every fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kernel: ScalarKernel,
    pub features: FeatureMethod,
    pub optimizer: EklObjectiveConfig,
}

impl ModelSpec {
    pub fn linear_exact() -> Self {
        Self {
            kernel: ScalarKernel::Linear,
            features: FeatureMethod::Exact,
            optimizer: EklObjectiveConfig::default(),
        }
    }
}

/// `⌈f · mp⌉`, at least 1.
pub fn rank_for(fraction: f64, m: usize, p: usize) -> usize {
    ((fraction * (m * p) as f64).ceil() as usize).clamp(1, m * p)
}

/// Output matrix for the separable baseline: `YYᵀ` scaled to trace `p`.
pub fn separable_output_matrix(y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let t = y * y.transpose();
    let tr = t.trace();
    if !(tr > 0.0) {
        return Err(EklError::Data("labels are identically zero".into()));
    }
    Ok(t * (y.nrows() as f64 / tr))
}

/// A learned entangled kernel with the training features it was learned on.
#[derive(Debug, Clone)]
pub struct LearnedKernel {
    pub model: EntangledModel,
    pub phi: DMatrix<f64>,
}

/// Fit the feature map and learn `Q` at rank `⌈f · mp⌉`.
pub fn learn_kernel(train: &Dataset, spec: &ModelSpec, gamma: f64, rank_fraction: f64) -> Result<LearnedKernel> {
    let fm = FeatureMap::fit(spec.kernel, spec.features, &train.x, spec.optimizer.seed)?;
    let phi = fm.apply(&train.x)?;
    learn_on_features(fm, phi, &train.y, &spec.optimizer, gamma, rank_fraction)
}

/// Learn `Q` for precomputed training features `phi = fm.apply(X)`.
pub fn learn_on_features(
    fm: FeatureMap,
    phi: DMatrix<f64>,
    y: &DMatrix<f64>,
    optimizer: &EklObjectiveConfig,
    gamma: f64,
    rank_fraction: f64,
) -> Result<LearnedKernel> {
    let r = rank_for(rank_fraction, fm.dim(), y.nrows());
    let cfg = optimizer.with_gamma(gamma);
    let out = learn_entangled_kernel(&phi, y, &cfg, r)?;
    // λ is replaced at fit time.
    let model = EntangledModel::normalized(out.q, y.nrows(), fm, gamma, 1.0)?;
    Ok(LearnedKernel { model, phi })
}

/// Second stage for an entangled method with a given `λ`.
pub fn fit_learned(lk: &LearnedKernel, y: &DMatrix<f64>, method: Method, lambda: f64) -> Result<FitResult> {
    let model = lk.model.clone().with_lambda(lambda)?;
    match method {
        Method::Ekl => fit_operator_valued(&model, &lk.phi, y, lambda),
        Method::PtrEkl => fit_scalar(&model, &lk.phi, y, lambda),
        other => Err(EklError::InvalidParameter(format!("{} is not an entangled method", other.name()))),
    }
}

fn fit_baseline(train: &Dataset, spec: &ModelSpec, method: Method, lambda: f64) -> Result<FitResult> {
    match method {
        Method::Krr => fit_krr_baseline(&spec.kernel, &train.x, &train.y, lambda),
        Method::Separable => {
            let t = separable_output_matrix(&train.y)?;
            fit_separable_baseline(&spec.kernel, &train.x, &t, &train.y, lambda)
        }
        other => Err(EklError::InvalidParameter(format!("{} is not a baseline", other.name()))),
    }
}

/// Random partition of `0..n` into `folds` near-equal groups.
pub fn fold_partition(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(EklError::InvalidParameter(format!("need at least 2 folds, got {folds}")));
    }
    if n < 2 * folds {
        return Err(EklError::InvalidParameter(format!(
            "{n} samples cannot form {folds} folds of at least 2"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perm = rand::seq::index::sample(&mut rng, n, n).into_vec();
    let mut out = vec![Vec::new(); folds];
    for (pos, &i) in perm.iter().enumerate() {
        out[pos * folds / n].push(i);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub lambda: f64,
    pub gamma: Option<f64>,
    pub mean_nmse: f64,
    pub fold_nmse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub method: Method,
    pub lambda: f64,
    pub gamma: Option<f64>,
    pub cells: Vec<CvCell>,
}

/// Lowest mean nMSE; ties go to the larger `λ`, then the smaller `γ`.
pub fn select_best(cells: &[CvCell]) -> Option<&CvCell> {
    cells.iter().min_by(|a, b| {
        a.mean_nmse
            .total_cmp(&b.mean_nmse)
            .then_with(|| b.lambda.total_cmp(&a.lambda))
            .then_with(|| match (a.gamma, b.gamma) {
                (Some(x), Some(y)) => x.total_cmp(&y),
                _ => Ordering::Equal,
            })
    })
}

/// K-fold cross-validation of each method over the plan's grids.
///
/// Entangled methods share one learned `Q` per fold and `γ`, which is then
/// reused for every `λ`. Baselines ignore the `γ` grid.
pub fn cross_validate(ds: &Dataset, plan: &CvPlan, spec: &ModelSpec, methods: &[Method]) -> Result<Vec<CvOutcome>> {
    plan.validate()?;
    let folds = fold_partition(ds.len(), plan.folds, plan.seed)?;
    let entangled: Vec<Method> = methods.iter().copied().filter(Method::is_entangled).collect();
    let baselines: Vec<Method> = methods.iter().copied().filter(|m| !m.is_entangled()).collect();
    let nl = plan.lambda_grid.len();
    let ng = plan.gamma_grid.len();

    // scores[method][gamma][lambda][fold]
    let mut ent_scores = vec![vec![vec![Vec::with_capacity(folds.len()); nl]; ng]; entangled.len()];
    let mut base_scores = vec![vec![Vec::with_capacity(folds.len()); nl]; baselines.len()];

    for (k, held) in folds.iter().enumerate() {
        let train_idx: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        let train = ds.subset(&train_idx);
        let valid = ds.subset(held);
        if !entangled.is_empty() {
            let fm = FeatureMap::fit(spec.kernel, spec.features, &train.x, spec.optimizer.seed)?;
            let phi = fm.apply(&train.x)?;
            let phi_valid = fm.apply(&valid.x)?;
            for (gi, &gamma) in plan.gamma_grid.iter().enumerate() {
                let lk = learn_on_features(fm.clone(), phi.clone(), &train.y, &spec.optimizer, gamma, plan.rank_fraction)?;
                for (li, &lambda) in plan.lambda_grid.iter().enumerate() {
                    for (mi, &method) in entangled.iter().enumerate() {
                        let fit = fit_learned(&lk, &train.y, method, lambda)?;
                        let pred = predict_features(&fit, &phi_valid)?;
                        ent_scores[mi][gi][li].push(nmse(&pred, &valid.y)?);
                    }
                }
            }
        }
        for (mi, &method) in baselines.iter().enumerate() {
            for (li, &lambda) in plan.lambda_grid.iter().enumerate() {
                let fit = fit_baseline(&train, spec, method, lambda)?;
                let pred = predict(&fit, &valid.x)?;
                base_scores[mi][li].push(nmse(&pred, &valid.y)?);
            }
        }
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mut outcomes = Vec::new();
    for &method in methods {
        let mut cells = Vec::new();
        if let Some(mi) = entangled.iter().position(|&m| m == method) {
            for (gi, &gamma) in plan.gamma_grid.iter().enumerate() {
                for (li, &lambda) in plan.lambda_grid.iter().enumerate() {
                    let fold_nmse = ent_scores[mi][gi][li].clone();
                    cells.push(CvCell {
                        lambda,
                        gamma: Some(gamma),
                        mean_nmse: mean(&fold_nmse),
                        fold_nmse,
                    });
                }
            }
        } else {
            let mi = baselines.iter().position(|&m| m == method).expect("method is a baseline");
            for (li, &lambda) in plan.lambda_grid.iter().enumerate() {
                let fold_nmse = base_scores[mi][li].clone();
                cells.push(CvCell {
                    lambda,
                    gamma: None,
                    mean_nmse: mean(&fold_nmse),
                    fold_nmse,
                });
            }
        }
        let best = select_best(&cells).expect("grids are non-empty").clone();
        outcomes.push(CvOutcome {
            method,
            lambda: best.lambda,
            gamma: best.gamma,
            cells,
        });
    }
    Ok(outcomes)
}

/// One evaluated method on a train/test split.
#[derive(Debug, Clone)]
pub struct Evaluated {
    pub method: Method,
    pub lambda: f64,
    pub gamma: Option<f64>,
    pub m: Option<usize>,
    pub r: Option<usize>,
    pub nmse: f64,
    pub fit_seconds: f64,
    pub predict_seconds: f64,
    pub fit: FitResult,
}

/// Fit `method` on `train` with fixed hyperparameters and score it on `test`.
/// For entangled methods the fit time includes learning `Q`.
pub fn fit_and_score(
    train: &Dataset,
    test: &Dataset,
    spec: &ModelSpec,
    method: Method,
    lambda: f64,
    gamma: Option<f64>,
    rank_fraction: f64,
) -> Result<Evaluated> {
    let start = Instant::now();
    let (fit, m, r) = if method.is_entangled() {
        let gamma = gamma.ok_or_else(|| EklError::InvalidParameter("entangled methods need gamma".into()))?;
        let lk = learn_kernel(train, spec, gamma, rank_fraction)?;
        let fit = fit_learned(&lk, &train.y, method, lambda)?;
        (fit, Some(lk.model.feature_dim()), Some(lk.model.rank()))
    } else {
        (fit_baseline(train, spec, method, lambda)?, None, None)
    };
    let fit_seconds = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let pred = predict(&fit, &test.x)?;
    let predict_seconds = start.elapsed().as_secs_f64();
    Ok(Evaluated {
        method,
        lambda,
        gamma: if method.is_entangled() { gamma } else { None },
        m,
        r,
        nmse: nmse(&pred, &test.y)?,
        fit_seconds,
        predict_seconds,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_partition_every_index_once() {
        let folds = fold_partition(23, 5, 3).unwrap();
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!(folds.iter().all(|f| f.len() >= 4));
        assert!(fold_partition(7, 4, 0).is_err());
        assert!(fold_partition(10, 1, 0).is_err());
    }

    #[test]
    fn tie_break_prefers_large_lambda_then_small_gamma() {
        let cell = |lambda, gamma, v| CvCell {
            lambda,
            gamma: Some(gamma),
            mean_nmse: v,
            fold_nmse: vec![v],
        };
        let cells = vec![cell(0.1, 0.0, 0.5), cell(1.0, 0.5, 0.5), cell(1.0, 0.2, 0.5), cell(10.0, 0.0, 0.7)];
        let best = select_best(&cells).unwrap();
        assert_eq!((best.lambda, best.gamma), (1.0, Some(0.2)));
        let mut rev = cells.clone();
        rev.reverse();
        let best = select_best(&rev).unwrap();
        assert_eq!((best.lambda, best.gamma), (1.0, Some(0.2)));
    }

    #[test]
    fn rank_rounds_up() {
        assert_eq!(rank_for(0.5, 3, 3), 5);
        assert_eq!(rank_for(1.0, 10, 100), 1000);
        assert_eq!(rank_for(1e-9, 4, 2), 1);
    }

    #[test]
    fn default_plan() {
        let plan = CvPlan::default();
        assert_eq!(plan.lambda_grid.len(), 7);
        assert_eq!(plan.gamma_grid.len(), 11);
        assert_eq!(plan.gamma_grid[10], 1.0);
        assert!(plan.validate().is_ok());
    }
}
