//! Independent reference implementations for integration tests. Everything
//! here is written with plain loops and does not call the library's
//! structured routines.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(r: usize, c: usize, seed: u64) -> DMatrix<f64> {
    let mut g = rng(seed);
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut g))
}

pub fn rand_psd(n: usize, rank: usize, seed: u64) -> DMatrix<f64> {
    let a = randn(n, rank, seed);
    &a * a.transpose()
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn rel_err_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| 0.5 * (m[(i, j)] + m[(j, i)])).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>() + off;
        if off <= 1e-30 * scale.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (akp, akq) = (row[p], row[q]);
                    row[p] = c * akp - s * akq;
                    row[q] = s * akp + c * akq;
                }
                let (rp, rq) = (a[p].clone(), a[q].clone());
                for k in 0..n {
                    a[p][k] = c * rp[k] - s * rq[k];
                    a[q][k] = s * rp[k] + c * rq[k];
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn kron_loop(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}

pub fn partial_trace_loop(a: &DMatrix<f64>, q: usize) -> DMatrix<f64> {
    let b = a.nrows() / q;
    let mut out = DMatrix::zeros(b, b);
    for i in 0..b {
        for j in 0..b {
            for k in 0..q {
                out[(i, j)] += a[(i * q + k, j * q + k)];
            }
        }
    }
    out
}

pub fn partial_transpose_loop(a: &DMatrix<f64>, q: usize) -> DMatrix<f64> {
    let n = a.nrows();
    let mut out = DMatrix::zeros(n, n);
    let b = n / q;
    for i in 0..b {
        for j in 0..b {
            for k in 0..q {
                for l in 0..q {
                    out[(i * q + k, j * q + l)] = a[(i * q + l, j * q + k)];
                }
            }
        }
    }
    out
}

/// `(Φᵀ ⊗ I_p) QQᵀ (Φ ⊗ I_p)`, fully dense.
pub fn dense_entangled_gram(q: &DMatrix<f64>, phi: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
    let lift = kron_loop(&phi.transpose(), &DMatrix::identity(p, p));
    let d = q * q.transpose();
    &lift * d * lift.transpose()
}

/// `K(x, z) = Σ_j M_j φ(x) φ(z)ᵀ M_jᵀ`.
pub fn kraus_sum(ops: &[DMatrix<f64>], fx: &DVector<f64>, fz: &DVector<f64>) -> DMatrix<f64> {
    let p = ops[0].nrows();
    let mut out = DMatrix::zeros(p, p);
    for m in ops {
        let a = m * fx;
        let b = m * fz;
        for s in 0..p {
            for t in 0..p {
                out[(s, t)] += a[s] * b[t];
            }
        }
    }
    out
}

pub fn centering_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64)
}

/// Alignment through explicit `H M H` products.
pub fn alignment_h(m: &DMatrix<f64>, n: &DMatrix<f64>) -> f64 {
    let h = centering_matrix(m.nrows());
    let mc = &h * m * &h;
    let nc = &h * n * &h;
    mc.dot(&nc) / (mc.norm() * nc.norm())
}

/// Objective with every matrix materialized.
pub fn objective_dense(q: &DMatrix<f64>, phi: &DMatrix<f64>, y: &DMatrix<f64>, gamma: f64) -> f64 {
    let p = y.nrows();
    let g = dense_entangled_gram(q, phi, p);
    let ptr = partial_trace_loop(&g, p);
    let yy = y.transpose() * y;
    let yv = DVector::from_column_slice(y.as_slice());
    let full_target = &yv * yv.transpose();
    let a1 = if gamma < 1.0 { alignment_h(&ptr, &yy) } else { 0.0 };
    let a2 = if gamma > 0.0 { alignment_h(&g, &full_target) } else { 0.0 };
    (1.0 - gamma) * a1 + gamma * a2
}

/// Central differences of `f` at `x`.
pub fn central_differences(f: impl Fn(&DMatrix<f64>) -> f64, x: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(x.nrows(), x.ncols());
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[(i, j)] += h;
            xm[(i, j)] -= h;
            g[(i, j)] = (f(&xp) - f(&xm)) / (2.0 * h);
        }
    }
    g
}

/// Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut x = b.clone();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs())).unwrap();
        m.swap_rows(col, piv);
        x.swap_rows(col, piv);
        for row in (col + 1)..n {
            let f = m[(row, col)] / m[(col, col)];
            if f != 0.0 {
                for k in col..n {
                    m[(row, k)] -= f * m[(col, k)];
                }
                x[row] -= f * x[col];
            }
        }
    }
    for row in (0..n).rev() {
        let mut s = x[row];
        for k in (row + 1)..n {
            s -= m[(row, k)] * x[k];
        }
        x[row] = s / m[(row, row)];
    }
    x
}

pub fn ridge_dense(g: &DMatrix<f64>, v: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let n = g.nrows();
    gauss_solve(&(g + DMatrix::identity(n, n) * lambda), v)
}

/// Column-major vectorization by explicit indexing.
pub fn vec_loop(m: &DMatrix<f64>) -> DVector<f64> {
    let (r, c) = m.shape();
    DVector::from_fn(r * c, |k, _| m[(k % r, k / r)])
}

/// Random orthogonal matrix from Gram-Schmidt on a Gaussian matrix.
pub fn random_orthogonal(n: usize, seed: u64) -> DMatrix<f64> {
    let a = randn(n, n, seed);
    let mut q = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut v = a.column(j).into_owned();
        for k in 0..j {
            let u = q.column(k).into_owned();
            v -= &u * u.dot(&v);
        }
        let nv = v.norm();
        q.set_column(j, &(v / nv));
    }
    q
}
