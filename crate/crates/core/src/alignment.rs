//! Stage one of entangled kernel learning: centered kernel alignment and
//! Riemannian gradient ascent for `Q` on the unit Frobenius sphere.
//!
//! The objective is
//!
//! ```text
//! F(Q) = (1 − γ) · A(tr_p(Ĝ), YᵀY) + γ · A(Ĝ, yyᵀ),      y = vec_col(Y)
//! ```
//!
//! with `A(M, N) = ⟨M_c, N_c⟩ / (‖M_c‖ ‖N_c‖)` and `M_c = HMH`. `F` is
//! invariant to rescaling `Q`, and depends on `Q` only through `D = QQᵀ`.
//!
//! Gradient. Write each alignment as `f / g`. For the partial-trace term
//! `K̂ = Φᵀ B Φ` with `B = tr_p(QQᵀ)`:
//!
//! ```text
//! ∂A/∂K̂ = C_c / (‖K̂_c‖‖C_c‖) − A · K̂_c / ‖K̂_c‖²      (C = YᵀY)
//! ∂A/∂B = Φ (∂A/∂K̂) Φᵀ =: W
//! ∂A/∂Q = 2 (W ⊗ I_p) Q
//! ```
//!
//! For the full term with `Z = (Φᵀ ⊗ I_p) Q`, `ỹ = Hy`, `P = (Φ ⊗ I) H (Φᵀ ⊗ I)`
//! and `S = QᵀPQ = Z_cᵀ Z_c`:
//!
//! ```text
//! f = ‖Zᵀỹ‖²,  g = ‖S‖_F ‖ỹ‖²
//! ∂f/∂Q = 2 a (Zᵀỹ)ᵀ            a = (Φ ⊗ I) ỹ
//! ∂‖S‖/∂Q = 2 P Q S / ‖S‖
//! ```
//!
//! Centering of the full-block term is the plain `np × np` centering.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{EklError, Result};
use crate::ovk::{block_gram, factor, factor_adjoint, mix_blocks};
use crate::tensor::center;

/// Sufficient-increase constant of the Armijo rule.
pub const ARMIJO_C: f64 = 1e-4;

/// Line search gives up below this step length.
pub const MIN_STEP: f64 = 1e-14;

/// Relative size below which a centered matrix is treated as zero.
pub const DEGENERATE_TOL: f64 = 1e-12;

/// Configuration of the alignment ascent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EklObjectiveConfig {
    /// Weight of the full-block alignment; `1 − γ` goes to the partial-trace term.
    pub gamma: f64,
    pub max_iters: usize,
    /// Stop once the Riemannian gradient norm falls below this.
    pub grad_tol: f64,
    pub step_init: f64,
    pub backtrack_factor: f64,
    /// Seed for the random initial `Q`.
    pub seed: u64,
}

impl Default for EklObjectiveConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            max_iters: 500,
            grad_tol: 1e-6,
            step_init: 1.0,
            backtrack_factor: 0.5,
            seed: 0,
        }
    }
}

impl EklObjectiveConfig {
    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(EklError::InvalidParameter(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        if !(self.grad_tol > 0.0) || !(self.step_init > 0.0) {
            return Err(EklError::InvalidParameter(
                "grad_tol and step_init must be positive".into(),
            ));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(EklError::InvalidParameter(format!(
                "backtrack factor must lie in (0, 1), got {}",
                self.backtrack_factor
            )));
        }
        Ok(())
    }
}

/// Centered alignment `⟨M_c, N_c⟩_F / (‖M_c‖_F ‖N_c‖_F)`.
pub fn centered_alignment(m: &DMatrix<f64>, n: &DMatrix<f64>) -> Result<f64> {
    if m.shape() != n.shape() {
        return Err(EklError::Dimension(format!(
            "alignment of {:?} with {:?}",
            m.shape(),
            n.shape()
        )));
    }
    let mc = center(m)?;
    let nc = center(n)?;
    let (a, b) = (mc.norm(), nc.norm());
    if is_degenerate(a, m.norm()) || is_degenerate(b, n.norm()) {
        return Err(EklError::UndefinedAlignment(
            "a centered argument is zero".into(),
        ));
    }
    Ok(mc.dot(&nc) / (a * b))
}

fn is_degenerate(centered_norm: f64, raw_norm: f64) -> bool {
    !(centered_norm > DEGENERATE_TOL * raw_norm) || !centered_norm.is_finite()
}

/// Data-dependent parts of the objective, computed once per problem.
#[derive(Debug, Clone)]
pub struct AlignmentProblem {
    phi: DMatrix<f64>,
    p: usize,
    gamma: f64,
    /// Centered `YᵀY` and its norm (partial-trace target).
    target_c: DMatrix<f64>,
    target_norm: f64,
    /// `Hy` and `‖Hy‖²` (full-block target).
    y_centered: DVector<f64>,
    y_norm2: f64,
    /// `(Φ ⊗ I) Hy`, `mp × 1`.
    a: DMatrix<f64>,
}

/// Cached pieces of one objective evaluation, reused by the gradient.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub partial_trace_alignment: Option<f64>,
    pub full_alignment: Option<f64>,
    ptr: Option<PtrParts>,
    full: Option<FullParts>,
}

#[derive(Debug, Clone)]
struct PtrParts {
    k_c: DMatrix<f64>,
    k_norm: f64,
    align: f64,
}

#[derive(Debug, Clone)]
struct FullParts {
    zy: DVector<f64>,
    /// `PQ = (Φ ⊗ I) Z_c`, `mp × r`.
    pq: DMatrix<f64>,
    s: DMatrix<f64>,
    s_norm: f64,
    align: f64,
}

impl AlignmentProblem {
    /// `phi` is `m × n`, `y` is `p × n`.
    pub fn new(phi: &DMatrix<f64>, y: &DMatrix<f64>, gamma: f64) -> Result<Self> {
        if phi.ncols() != y.ncols() {
            return Err(EklError::Dimension(format!(
                "features cover {} samples, labels {}",
                phi.ncols(),
                y.ncols()
            )));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(EklError::InvalidParameter(format!("gamma must lie in [0, 1], got {gamma}")));
        }
        let p = y.nrows();
        if p == 0 || phi.nrows() == 0 || y.ncols() == 0 {
            return Err(EklError::Dimension("empty features or labels".into()));
        }
        let target = y.transpose() * y;
        let target_c = center(&target)?;
        let target_norm = target_c.norm();
        if gamma < 1.0 && is_degenerate(target_norm, target.norm()) {
            return Err(EklError::UndefinedAlignment(
                "centered output kernel YᵀY is zero".into(),
            ));
        }
        let yv = DVector::from_column_slice(y.as_slice());
        let y_centered = yv.add_scalar(-yv.mean());
        let y_norm2 = y_centered.norm_squared();
        if gamma > 0.0 && is_degenerate(y_norm2.sqrt(), yv.norm()) {
            return Err(EklError::UndefinedAlignment(
                "centered label vector is zero".into(),
            ));
        }
        let yc_mat = DMatrix::from_column_slice(y_centered.len(), 1, y_centered.as_slice());
        let a = factor_adjoint(&yc_mat, phi, p);
        Ok(Self {
            phi: phi.clone(),
            p,
            gamma,
            target_c,
            target_norm,
            y_centered,
            y_norm2,
            a,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn outputs(&self) -> usize {
        self.p
    }

    pub fn feature_dim(&self) -> usize {
        self.phi.nrows()
    }

    fn check_q(&self, q: &DMatrix<f64>) -> Result<()> {
        let mp = self.phi.nrows() * self.p;
        if q.nrows() != mp || q.ncols() == 0 {
            return Err(EklError::Dimension(format!(
                "Q must be {mp} x r with r >= 1, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        let norm = q.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(EklError::InvalidParameter("Q must be finite and non-zero".into()));
        }
        Ok(())
    }

    /// Objective value with everything the gradient needs.
    pub fn evaluate(&self, q: &DMatrix<f64>) -> Result<Evaluation> {
        self.check_q(q)?;
        let ptr = if self.gamma < 1.0 {
            Some(self.ptr_parts(q)?)
        } else {
            None
        };
        let full = if self.gamma > 0.0 {
            Some(self.full_parts(q)?)
        } else {
            None
        };
        let a1 = ptr.as_ref().map(|p| p.align);
        let a2 = full.as_ref().map(|f| f.align);
        let value = (1.0 - self.gamma) * a1.unwrap_or(0.0) + self.gamma * a2.unwrap_or(0.0);
        Ok(Evaluation {
            value,
            partial_trace_alignment: a1,
            full_alignment: a2,
            ptr,
            full,
        })
    }

    pub fn objective(&self, q: &DMatrix<f64>) -> Result<f64> {
        Ok(self.evaluate(q)?.value)
    }

    /// Euclidean gradient at `q`, reusing a prior evaluation at the same point.
    pub fn gradient(&self, q: &DMatrix<f64>, ev: &Evaluation) -> DMatrix<f64> {
        let mut grad = DMatrix::zeros(q.nrows(), q.ncols());
        if let Some(ptr) = &ev.ptr {
            let scale = 1.0 / (ptr.k_norm * self.target_norm);
            let dk = &self.target_c * scale - &ptr.k_c * (ptr.align / (ptr.k_norm * ptr.k_norm));
            let w = &self.phi * dk * self.phi.transpose();
            grad += mix_blocks(&w, q, self.p) * (2.0 * (1.0 - self.gamma));
        }
        if let Some(full) = &ev.full {
            let denom = full.s_norm * self.y_norm2;
            // ∂f/∂Q / (‖S‖‖ỹ‖²)
            let zy_row = full.zy.transpose();
            grad += &self.a * zy_row * (2.0 * self.gamma / denom);
            // − A · ∂‖S‖/∂Q / ‖S‖
            let coeff = -2.0 * self.gamma * full.align / (full.s_norm * full.s_norm);
            grad.gemm(coeff, &full.pq, &full.s, 1.0);
        }
        grad
    }

    pub fn objective_and_gradient(&self, q: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        let ev = self.evaluate(q)?;
        let g = self.gradient(q, &ev);
        Ok((ev.value, g))
    }

    fn ptr_parts(&self, q: &DMatrix<f64>) -> Result<PtrParts> {
        let b = block_gram(q, self.p, self.phi.nrows());
        let k = self.phi.transpose() * (b * &self.phi);
        let k_c = center(&k)?;
        let k_norm = k_c.norm();
        if is_degenerate(k_norm, k.norm()) {
            return Err(EklError::UndefinedAlignment(
                "centered partial-trace kernel is zero".into(),
            ));
        }
        let align = k_c.dot(&self.target_c) / (k_norm * self.target_norm);
        Ok(PtrParts { k_c, k_norm, align })
    }

    fn full_parts(&self, q: &DMatrix<f64>) -> Result<FullParts> {
        let mut z = factor(q, &self.phi, self.p);
        let zy = z.tr_mul(&self.y_centered);
        for mut col in z.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        let pq = factor_adjoint(&z, &self.phi, self.p);
        // S = Z_cᵀZ_c = QᵀPQ; pick the shorter inner dimension.
        let s = if z.nrows() <= q.nrows() {
            z.transpose() * &z
        } else {
            q.transpose() * &pq
        };
        let s_norm = s.norm();
        if is_degenerate(s_norm, q.norm_squared() * self.phi.norm_squared()) {
            return Err(EklError::UndefinedAlignment(
                "centered entangled Gram matrix is zero".into(),
            ));
        }
        let align = zy.norm_squared() / (s_norm * self.y_norm2);
        Ok(FullParts {
            zy,
            pq,
            s,
            s_norm,
            align,
        })
    }
}

/// Objective value for `Q` (`mp × r`), features `Φ` (`m × n`) and labels `Y` (`p × n`).
/// The value does not depend on the scale of `Q`.
pub fn ekl_objective(q: &DMatrix<f64>, phi: &DMatrix<f64>, y: &DMatrix<f64>, gamma: f64) -> Result<f64> {
    AlignmentProblem::new(phi, y, gamma)?.objective(q)
}

/// Euclidean gradient of [`ekl_objective`] with respect to `Q`.
pub fn ekl_gradient(q: &DMatrix<f64>, phi: &DMatrix<f64>, y: &DMatrix<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    Ok(AlignmentProblem::new(phi, y, gamma)?.objective_and_gradient(q)?.1)
}

/// Projection of an ambient gradient onto the tangent space of the sphere at `q`.
pub fn project_tangent(q: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    g - q * q.dot(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    GradientTolerance,
    MaxIterations,
    /// No step length down to [`MIN_STEP`] gave sufficient increase.
    LineSearchFailed,
}

/// Per-iteration snapshot passed to observers.
#[derive(Debug)]
pub struct IterationInfo<'a> {
    pub iteration: usize,
    pub q: &'a DMatrix<f64>,
    pub objective: f64,
    pub step: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub q: DMatrix<f64>,
    /// Objective at the initial point followed by every accepted iterate.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub stop: StopReason,
}

impl LearnOutcome {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial value")
    }
}

/// Seeded standard-normal `mp × r` matrix scaled to unit Frobenius norm.
pub fn random_sphere_point(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q: DMatrix<f64> = DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng));
    let norm = q.norm();
    q / norm
}

/// Learn `Q` (`mp × r`) by projected gradient ascent with Armijo backtracking,
/// starting from a seeded random point.
pub fn learn_entangled_kernel(
    phi: &DMatrix<f64>,
    y: &DMatrix<f64>,
    cfg: &EklObjectiveConfig,
    r: usize,
) -> Result<LearnOutcome> {
    let mp = phi.nrows() * y.nrows();
    if r == 0 || r > mp {
        return Err(EklError::InvalidParameter(format!("rank must lie in 1..={mp}, got {r}")));
    }
    let q0 = random_sphere_point(mp, r, cfg.seed);
    learn_from(phi, y, cfg, q0, |_| {})
}

/// Ascent from an explicit starting point; `observer` sees every accepted iterate.
pub fn learn_from(
    phi: &DMatrix<f64>,
    y: &DMatrix<f64>,
    cfg: &EklObjectiveConfig,
    q0: DMatrix<f64>,
    mut observer: impl FnMut(&IterationInfo<'_>),
) -> Result<LearnOutcome> {
    cfg.validate()?;
    let problem = AlignmentProblem::new(phi, y, cfg.gamma)?;
    problem.check_q(&q0)?;
    let norm = q0.norm();
    let mut q = q0 / norm;
    let mut ev = problem.evaluate(&q)?;
    let mut trace = vec![ev.value];
    let mut step = cfg.step_init;
    let mut grad_norm = f64::INFINITY;
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;

    observer(&IterationInfo {
        iteration: 0,
        q: &q,
        objective: ev.value,
        step: 0.0,
        grad_norm: f64::NAN,
    });

    for it in 0..cfg.max_iters {
        let xi = project_tangent(&q, &problem.gradient(&q, &ev));
        grad_norm = xi.norm();
        if grad_norm < cfg.grad_tol {
            stop = StopReason::GradientTolerance;
            break;
        }
        let slope = grad_norm * grad_norm;
        let mut t = step;
        let mut accepted = None;
        while t >= MIN_STEP {
            let mut cand = &q + &xi * t;
            let cn = cand.norm();
            cand /= cn;
            match problem.evaluate(&cand) {
                Ok(cev) if cev.value >= ev.value + ARMIJO_C * t * slope => {
                    accepted = Some((cand, cev));
                    break;
                }
                Ok(_) | Err(EklError::UndefinedAlignment(_)) => t *= cfg.backtrack_factor,
                Err(e) => return Err(e),
            }
        }
        let Some((cand, cev)) = accepted else {
            stop = StopReason::LineSearchFailed;
            break;
        };
        debug_assert!(cev.value >= ev.value, "accepted step decreased the objective");
        q = cand;
        ev = cev;
        trace.push(ev.value);
        iterations = it + 1;
        step = t / cfg.backtrack_factor;
        observer(&IterationInfo {
            iteration: iterations,
            q: &q,
            objective: ev.value,
            step: t,
            grad_norm,
        });
    }
    if stop == StopReason::MaxIterations && cfg.max_iters > 0 {
        grad_norm = project_tangent(&q, &problem.gradient(&q, &ev)).norm();
        if grad_norm < cfg.grad_tol {
            stop = StopReason::GradientTolerance;
        }
    }

    Ok(LearnOutcome {
        q,
        objective_trace: trace,
        iterations,
        final_grad_norm: grad_norm,
        stop,
    })
}
