//! Computations behind the browser demo. The `web` module exports them to
//! JavaScript; everything else also builds natively for tests.

use ekl::alignment::{learn_entangled_kernel, EklObjectiveConfig};
use ekl::features::{FeatureMap, FeatureMethod, ScalarKernel};
use ekl::harness::cv::rank_for;
use ekl::harness::data::gen_bilinear;
use ekl::harness::metrics::nmse;
use ekl::ovk::EntangledModel;
use ekl::separability::{ppt_check, PptVerdict, DEFAULT_PPT_TOL};
use ekl::solver::{fit_krr_baseline, fit_operator_valued, generalization_bound, predict, predict_features, rademacher_bound};
use ekl::tensor::{partial_transpose, BlockMatrix};
use nalgebra::DMatrix;

/// `w |ψ⟩⟨ψ| + (1 − w) I/4` with `|ψ⟩ = cos θ |01⟩ − sin θ |10⟩`.
pub fn werner_state(w: f64, theta: f64) -> DMatrix<f64> {
    let (c, s) = (theta.cos(), theta.sin());
    let mut psi = DMatrix::zeros(4, 1);
    psi[(1, 0)] = c;
    psi[(2, 0)] = -s;
    &psi * psi.transpose() * w + DMatrix::identity(4, 4) * ((1.0 - w) / 4.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PptReport {
    pub entangled: bool,
    pub min_eig: f64,
    /// Ascending eigenvalues of the partial transpose.
    pub pt_eigenvalues: Vec<f64>,
}

pub fn werner_ppt(w: f64, theta: f64) -> ekl::Result<PptReport> {
    if !(0.0..=1.0).contains(&w) {
        return Err(ekl::EklError::InvalidParameter(format!("w must lie in [0, 1], got {w}")));
    }
    let rho = BlockMatrix::new(werner_state(w, theta), 2)?;
    let verdict = ppt_check(&rho, DEFAULT_PPT_TOL)?;
    let mut pt_eigenvalues: Vec<f64> = partial_transpose(&rho).into_inner().symmetric_eigenvalues().iter().copied().collect();
    pt_eigenvalues.sort_by(f64::total_cmp);
    Ok(PptReport {
        entangled: verdict.is_entangled(),
        min_eig: verdict.min_eig(),
        pt_eigenvalues,
    })
}

#[derive(Debug, Clone)]
pub struct LearnReport {
    pub objective_trace: Vec<f64>,
    pub rank: usize,
    pub ekl_nmse: f64,
    pub krr_nmse: f64,
    /// Smallest eigenvalue of the partial transpose of the learned `QQᵀ`, trace-normalized.
    pub operator_min_eig: f64,
    pub operator_entangled: bool,
}

pub struct LearnParams {
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub gamma: f64,
    pub rank_frac: f64,
    pub lambda: f64,
    pub iters: usize,
    pub seed: u64,
}

/// Learn on `n` synthetic samples and score against 50 held-out ones.
pub fn learn_run(a: &LearnParams) -> ekl::Result<LearnReport> {
    let ds = gen_bilinear(a.n + 50, a.p, a.d, 0.1, a.seed)?;
    let (train, test) = ds.split_at(a.n)?;
    let fm = FeatureMap::fit(ScalarKernel::Linear, FeatureMethod::Exact, &train.x, a.seed)?;
    let phi = fm.apply(&train.x)?;
    let cfg = EklObjectiveConfig::default()
        .with_gamma(a.gamma)
        .with_max_iters(a.iters)
        .with_seed(a.seed);
    let r = rank_for(a.rank_frac, fm.dim(), a.p);
    let out = learn_entangled_kernel(&phi, &train.y, &cfg, r)?;
    let em = EntangledModel::normalized(out.q.clone(), a.p, fm.clone(), a.gamma, a.lambda)?;
    let fit = fit_operator_valued(&em, &phi, &train.y, a.lambda)?;
    let ekl_nmse = nmse(&predict_features(&fit, &fm.apply(&test.x)?)?, &test.y)?;
    let krr = fit_krr_baseline(&ScalarKernel::Linear, &train.x, &train.y, a.lambda)?;
    let krr_nmse = nmse(&predict(&krr, &test.x)?, &test.y)?;
    let verdict: PptVerdict = ppt_check(&BlockMatrix::new(em.materialize_d(), a.p)?, DEFAULT_PPT_TOL)?;
    Ok(LearnReport {
        objective_trace: out.objective_trace,
        rank: r,
        ekl_nmse,
        krr_nmse,
        operator_min_eig: verdict.min_eig(),
        operator_entangled: verdict.is_entangled(),
    })
}

/// Rademacher bound for `n = 1..=n_max`, followed by the generalization
/// bound over the same range.
pub fn bound_curve(beta: f64, kappa: f64, p: f64, m_bound: f64, delta: f64, emp_risk: f64, n_max: usize) -> ekl::Result<Vec<f64>> {
    let mut rad = Vec::with_capacity(2 * n_max);
    let mut gen = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        rad.push(rademacher_bound(beta, kappa, p, n as f64)?);
        gen.push(generalization_bound(emp_risk, beta, kappa, p, n as f64, m_bound, delta)?);
    }
    rad.extend(gen);
    Ok(rad)
}

#[cfg(target_arch = "wasm32")]
mod web {
    use wasm_bindgen::prelude::*;

    fn js(e: ekl::EklError) -> JsError {
        JsError::new(&format!("{}: {e}", e.kind()))
    }

    /// `[entangled ? 1 : 0, min_eig, eig0, eig1, eig2, eig3]`.
    #[wasm_bindgen]
    pub fn werner_ppt(w: f64, theta: f64) -> Result<Vec<f64>, JsError> {
        let r = super::werner_ppt(w, theta).map_err(js)?;
        let mut out = vec![if r.entangled { 1.0 } else { 0.0 }, r.min_eig];
        out.extend(r.pt_eigenvalues);
        Ok(out)
    }

    /// `[rank, ekl_nmse, krr_nmse, operator_min_eig, operator_entangled, trace...]`.
    #[wasm_bindgen]
    #[allow(clippy::too_many_arguments)]
    pub fn learn_run(n: usize, p: usize, d: usize, gamma: f64, rank_frac: f64, lambda: f64, iters: usize, seed: u32) -> Result<Vec<f64>, JsError> {
        let r = super::learn_run(&super::LearnParams {
            n,
            p,
            d,
            gamma,
            rank_frac,
            lambda,
            iters,
            seed: seed as u64,
        })
        .map_err(js)?;
        let mut out = vec![
            r.rank as f64,
            r.ekl_nmse,
            r.krr_nmse,
            r.operator_min_eig,
            if r.operator_entangled { 1.0 } else { 0.0 },
        ];
        out.extend(r.objective_trace);
        Ok(out)
    }

    #[wasm_bindgen]
    pub fn bound_curve(beta: f64, kappa: f64, p: f64, m_bound: f64, delta: f64, emp_risk: f64, n_max: usize) -> Result<Vec<f64>, JsError> {
        super::bound_curve(beta, kappa, p, m_bound, delta, emp_risk, n_max).map_err(js)
    }
}
