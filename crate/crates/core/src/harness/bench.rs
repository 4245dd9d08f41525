//! Wall-clock comparison of ridge solves and predictions across kernel
//! structure classes, on random data with the kernel already given.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::cv::rank_for;
use super::results::ResultRow;
use crate::error::{EklError, Result};
use crate::ovk::{block_gram, factor};
use crate::solver::{
    entangled_weights, low_rank_separable_coefficients, ovk_coefficients, scalar_coefficients, separable_coefficients,
    unstructured_coefficients,
};
use crate::tensor::{unvec_col, vec_col};

/// Ridge weight used for every timed solve.
pub const BENCH_LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructureClass {
    /// Dense `np × np` Gram, Cholesky solve.
    NoStructure,
    /// `K ⊗ T`, eigendecompositions of `K` and `T`.
    Separable,
    /// `UUᵀ ⊗ T` with `U` of size `n × m`.
    LowRankSeparable,
    /// `Ĝ = ZZᵀ`, Woodbury on `r × r`.
    Entangled,
    /// `tr_p(Ĝ)`, Woodbury on `m × m`.
    EntangledPtr,
}

impl StructureClass {
    pub const ALL: [StructureClass; 5] = [
        StructureClass::NoStructure,
        StructureClass::Separable,
        StructureClass::LowRankSeparable,
        StructureClass::Entangled,
        StructureClass::EntangledPtr,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            StructureClass::NoStructure => "no-structure",
            StructureClass::Separable => "separable",
            StructureClass::LowRankSeparable => "low-rank-separable",
            StructureClass::Entangled => "entangled",
            StructureClass::EntangledPtr => "entangled-ptr",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| EklError::InvalidParameter(format!("unknown structure class {s:?}")))
    }
}

/// One grid point: `m = ⌈m_frac · n⌉`, `r = ⌈r_frac · mp⌉`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchSize {
    pub n: usize,
    pub p: usize,
    pub m_frac: f64,
    pub r_frac: f64,
}

impl BenchSize {
    pub fn m(&self) -> usize {
        ((self.m_frac * self.n as f64).ceil() as usize).max(1)
    }

    pub fn r(&self) -> usize {
        rank_for(self.r_frac, self.m(), self.p)
    }

    /// Parse `"n,p,m_frac,r_frac;..."`.
    pub fn parse_grid(spec: &str) -> Result<Vec<BenchSize>> {
        let mut out = Vec::new();
        for item in spec.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let parts: Vec<&str> = item.split(',').map(str::trim).collect();
            let bad = || EklError::InvalidParameter(format!("bad grid entry {item:?}, want n,p,m_frac,r_frac"));
            if parts.len() != 4 {
                return Err(bad());
            }
            let size = BenchSize {
                n: parts[0].parse().map_err(|_| bad())?,
                p: parts[1].parse().map_err(|_| bad())?,
                m_frac: parts[2].parse().map_err(|_| bad())?,
                r_frac: parts[3].parse().map_err(|_| bad())?,
            };
            if size.n == 0
                || size.p == 0
                || !(size.m_frac > 0.0 && size.m_frac <= 1.0)
                || !(size.r_frac > 0.0 && size.r_frac <= 1.0)
            {
                return Err(bad());
            }
            out.push(size);
        }
        if out.is_empty() {
            return Err(EklError::InvalidParameter("empty benchmark grid".into()));
        }
        Ok(out)
    }
}

/// Median fit and predict seconds for one class at one size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub class: StructureClass,
    pub size: BenchSize,
    pub fit_seconds: f64,
    pub predict_seconds: f64,
}

impl Timing {
    pub fn to_row(&self, seed: u64) -> ResultRow {
        ResultRow {
            method: self.class.name().to_string(),
            n: self.size.n,
            p: self.size.p,
            m: Some(self.size.m()),
            r: Some(self.size.r()),
            lambda: Some(BENCH_LAMBDA),
            gamma: None,
            nmse: None,
            ni: None,
            fit_seconds: Some(self.fit_seconds),
            predict_seconds: Some(self.predict_seconds),
            seed,
        }
    }
}

fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

/// Random inputs for one size; `t = n` test points.
struct Problem {
    phi: DMatrix<f64>,
    phi_t: DMatrix<f64>,
    q: DMatrix<f64>,
    t: DMatrix<f64>,
    y: DMatrix<f64>,
}

impl Problem {
    fn new(size: &BenchSize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, p, m, r) = (size.n, size.p, size.m(), size.r());
        let phi = randn(&mut rng, m, n);
        let phi_t = randn(&mut rng, m, n);
        let q = randn(&mut rng, m * p, r);
        let q = &q / q.norm();
        let a = randn(&mut rng, p, p);
        let t = &a * a.transpose();
        let y = randn(&mut rng, p, n);
        Self { phi, phi_t, q, t, y }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

/// Time `class` on `prob` once; returns (fit, predict) seconds and the predictions.
fn run_once(class: StructureClass, prob: &Problem, given: &Given, p: usize) -> Result<(f64, f64, DMatrix<f64>)> {
    let lambda = BENCH_LAMBDA;
    Ok(match class {
        StructureClass::NoStructure => {
            let (g, g_t) = given.dense.as_ref().expect("dense Gram prepared");
            let (c, fit) = timed(|| unstructured_coefficients(g, &vec_col(&prob.y), lambda))?;
            let (pred, pr) = timed(|| unvec_col(&(g_t * c), p))?;
            (fit, pr, pred)
        }
        StructureClass::Separable => {
            let (k, k_t) = given.scalar.as_ref().expect("scalar Gram prepared");
            let (c, fit) = timed(|| separable_coefficients(k, &prob.t, &prob.y, lambda))?;
            let (pred, pr) = timed(|| Ok(&prob.t * (c * k_t.transpose())))?;
            (fit, pr, pred)
        }
        StructureClass::LowRankSeparable => {
            let u = prob.phi.transpose();
            let (c, fit) = timed(|| low_rank_separable_coefficients(&u, &prob.t, &prob.y, lambda))?;
            let (pred, pr) = timed(|| Ok(&prob.t * ((c * u) * &prob.phi_t)))?;
            (fit, pr, pred)
        }
        StructureClass::Entangled => {
            let (c, fit) = timed(|| ovk_coefficients(&factor(&prob.q, &prob.phi, p), &prob.y, lambda))?;
            let (pred, pr) = timed(|| Ok(entangled_weights(&prob.q, &prob.phi, &c, p)? * &prob.phi_t))?;
            (fit, pr, pred)
        }
        StructureClass::EntangledPtr => {
            let m = prob.phi.nrows();
            let ((c, b), fit) = timed(|| {
                let b = block_gram(&prob.q, p, m);
                let c = scalar_coefficients(&b, &prob.phi, &prob.y, lambda)?;
                Ok((c, b))
            })?;
            let (pred, pr) = timed(|| Ok((b * &prob.phi * c).transpose() * &prob.phi_t))?;
            (fit, pr, pred)
        }
    })
}

/// Kernel matrices assumed known before timing starts.
struct Given {
    dense: Option<(DMatrix<f64>, DMatrix<f64>)>,
    scalar: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

/// Median fit/predict wall-clock over `repeats` runs for every size × class.
/// Rows come out size-major in the order of `classes`.
pub fn timing_benchmark(sizes: &[BenchSize], classes: &[StructureClass], repeats: usize, seed: u64) -> Result<Vec<Timing>> {
    if repeats == 0 {
        return Err(EklError::InvalidParameter("repeats must be positive".into()));
    }
    let mut out = Vec::with_capacity(sizes.len() * classes.len());
    for (si, size) in sizes.iter().enumerate() {
        let prob = Problem::new(size, seed.wrapping_add(si as u64));
        let p = size.p;
        let given = Given {
            dense: classes.contains(&StructureClass::NoStructure).then(|| {
                let z = factor(&prob.q, &prob.phi, p);
                let z_t = factor(&prob.q, &prob.phi_t, p);
                (&z * z.transpose(), &z_t * z.transpose())
            }),
            scalar: classes.contains(&StructureClass::Separable).then(|| {
                let k = prob.phi.transpose() * &prob.phi;
                let k_t = prob.phi_t.transpose() * &prob.phi;
                (k, k_t)
            }),
        };
        for &class in classes {
            let mut fits = Vec::with_capacity(repeats);
            let mut preds = Vec::with_capacity(repeats);
            for _ in 0..repeats {
                let (f, pr, yhat) = run_once(class, &prob, &given, p)?;
                debug_assert_eq!(yhat.shape(), (p, size.n));
                fits.push(f);
                preds.push(pr);
            }
            out.push(Timing {
                class,
                size: *size,
                fit_seconds: median(fits),
                predict_seconds: median(preds),
            });
        }
    }
    Ok(out)
}

/// Predictions of every class on one shared small problem, for consistency checks.
pub fn class_predictions(size: &BenchSize, seed: u64) -> Result<Vec<(StructureClass, DMatrix<f64>)>> {
    let prob = Problem::new(size, seed);
    let p = size.p;
    let z = factor(&prob.q, &prob.phi, p);
    let z_t = factor(&prob.q, &prob.phi_t, p);
    let given = Given {
        dense: Some((&z * z.transpose(), &z_t * z.transpose())),
        scalar: Some((prob.phi.transpose() * &prob.phi, prob.phi_t.transpose() * &prob.phi)),
    };
    StructureClass::ALL
        .iter()
        .map(|&c| Ok((c, run_once(c, &prob, &given, p)?.2)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g = BenchSize::parse_grid("400,8,0.5,0.5; 10,2,1,1").unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].m(), 200);
        assert_eq!(g[0].r(), 800);
        assert!(BenchSize::parse_grid("1,2,3").is_err());
        assert!(BenchSize::parse_grid("10,2,0,1").is_err());
        assert!(BenchSize::parse_grid("").is_err());
    }

    #[test]
    fn row_count_is_sizes_times_classes() {
        let sizes = BenchSize::parse_grid("6,2,0.5,0.5;5,3,1,1").unwrap();
        let rows = timing_benchmark(&sizes, &StructureClass::ALL, 2, 1).unwrap();
        assert_eq!(rows.len(), 10);
        assert_eq!(rows[5].class, StructureClass::NoStructure);
    }

    #[test]
    fn class_names_round_trip() {
        for c in StructureClass::ALL {
            assert_eq!(StructureClass::parse(c.name()).unwrap(), c);
        }
        assert!(StructureClass::parse("bogus").is_err());
    }
}
