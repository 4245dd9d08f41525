mod common;

use common::*;
use ekl::features::{gram_scalar, FeatureMap, FeatureMethod, ScalarKernel};
use ekl::ovk::EntangledModel;
use ekl::solver::*;
use ekl::tensor::{kron, vec_col};
use nalgebra::{DMatrix, DVector};

fn linear_map(d: usize) -> FeatureMap {
    FeatureMap::fit(ScalarKernel::Linear, FeatureMethod::Exact, &DMatrix::zeros(1, d), 0).unwrap()
}

struct Instance {
    em: EntangledModel,
    phi: DMatrix<f64>,
    y: DMatrix<f64>,
    lambda: f64,
}

fn instance(seed: u64) -> Instance {
    let s = seed as usize;
    let (n, p, m) = (3 + s % 28, 1 + s % 5, 2 + s % 9);
    let r = 1 + (s * 5) % (m * p);
    let em = EntangledModel::normalized(randn(m * p, r, seed), p, linear_map(m), 0.5, 1.0).unwrap();
    Instance {
        em,
        phi: randn(m, n, seed + 100),
        y: randn(p, n, seed + 200),
        lambda: 10f64.powi(s as i32 % 5 - 3),
    }
}

#[test]
fn woodbury_matches_dense_solve() {
    for seed in 0..20 {
        let it = instance(seed);
        let g = dense_entangled_gram(it.em.q(), &it.phi, it.em.outputs());
        let want = ridge_dense(&g, &vec_loop(&it.y), it.lambda);
        let z = it.em.low_rank_factor(&it.phi).unwrap();
        let got = ovk_coefficients(&z, &it.y, it.lambda).unwrap();
        assert!(rel_err_vec(&got, &want) < 1e-8, "seed {seed}: {}", rel_err_vec(&got, &want));
        let lu = dense::ridge_solve(&g, &vec_loop(&it.y), it.lambda).unwrap();
        assert!(rel_err_vec(&lu, &want) < 1e-8);
    }
}

#[test]
fn ovk_predictions_match_dense_cross_gram() {
    for seed in 0..20 {
        let it = instance(seed);
        let p = it.em.outputs();
        let fit = fit_operator_valued(&it.em, &it.phi, &it.y, it.lambda).unwrap();
        let phi_t = randn(it.phi.nrows(), 7, seed + 300);
        let got = predict_features(&fit, &phi_t).unwrap();
        let d = it.em.q() * it.em.q().transpose();
        let eye = DMatrix::identity(p, p);
        let cross = kron(&phi_t.transpose(), &eye) * d * kron(&it.phi, &eye);
        let c = DVector::from_column_slice(fit.coefficients.as_slice());
        let want = cross * c;
        assert!(rel_err_vec(&vec_col(&got), &want) < 1e-8, "seed {seed}");
    }
}

#[test]
fn scalar_mode_matches_dense_krr_on_extracted_kernel() {
    for seed in 0..20 {
        let it = instance(seed);
        let fit = fit_scalar(&it.em, &it.phi, &it.y, it.lambda).unwrap();
        let k = partial_trace_loop(&dense_entangled_gram(it.em.q(), &it.phi, it.em.outputs()), it.em.outputs());
        for s in 0..it.y.nrows() {
            let col = DVector::from_iterator(it.y.ncols(), it.y.row(s).iter().copied());
            let want = ridge_dense(&k, &col, it.lambda);
            let got = fit.coefficients.column(s).into_owned();
            assert!(rel_err_vec(&got, &want) < 1e-8, "seed {seed}");
        }
        let phi_t = randn(it.phi.nrows(), 4, seed + 1);
        let pred = predict_features(&fit, &phi_t).unwrap();
        let kt = it.em.extract_scalar_kernel(&phi_t, &it.phi).unwrap();
        assert!(rel_err(&pred, &(fit.coefficients.transpose() * kt.transpose())) < 1e-8);
    }
}

#[test]
fn separable_solvers_match_dense_kron() {
    for seed in 0..20 {
        let s = seed as usize;
        let (n, p) = (3 + s % 28, 1 + s % 5);
        let u = randn(n, 1 + s % 6, seed);
        let k = &u * u.transpose();
        let t = rand_psd(p, 1 + s % p, seed + 1);
        let y = randn(p, n, seed + 2);
        let lambda = 0.1 + s as f64 * 0.05;
        let want = ridge_dense(&kron_loop(&k, &t), &vec_loop(&y), lambda);
        let c = separable_coefficients(&k, &t, &y, lambda).unwrap();
        assert!(rel_err_vec(&vec_col(&c), &want) < 1e-8, "seed {seed}");
        let c = low_rank_separable_coefficients(&u, &t, &y, lambda).unwrap();
        assert!(rel_err_vec(&vec_col(&c), &want) < 1e-8, "seed {seed}");
    }
}

#[test]
fn krr_and_unstructured_match_gauss() {
    for seed in 0..20 {
        let x = randn(12, 3, seed);
        let kernel = ScalarKernel::Gaussian { bandwidth: 1.0 };
        let k = gram_scalar(&kernel, &x, &x).unwrap();
        let y = randn(2, 12, seed + 1);
        let fit = fit_krr_baseline(&kernel, &x, &y, 0.3).unwrap();
        for s in 0..2 {
            let col = DVector::from_iterator(12, y.row(s).iter().copied());
            let want = ridge_dense(&k, &col, 0.3);
            assert!(rel_err_vec(&fit.coefficients.column(s).into_owned(), &want) < 1e-8);
            assert!(rel_err_vec(&unstructured_coefficients(&k, &col, 0.3).unwrap(), &want) < 1e-8);
        }
    }
}

#[test]
fn coefficient_norm_shrinks_with_lambda() {
    for seed in 0..10 {
        let it = instance(seed);
        let z = it.em.low_rank_factor(&it.phi).unwrap();
        let mut last = f64::INFINITY;
        for e in -4..4 {
            let c = ovk_coefficients(&z, &it.y, 10f64.powi(e)).unwrap();
            assert!(c.norm() <= last * (1.0 + 1e-12));
            last = c.norm();
        }
    }
}

#[test]
fn predictions_are_linear_in_labels() {
    let it = instance(7);
    let a = fit_operator_valued(&it.em, &it.phi, &it.y, it.lambda).unwrap();
    let b = fit_operator_valued(&it.em, &it.phi, &(&it.y * 3.0), it.lambda).unwrap();
    let phi_t = randn(it.phi.nrows(), 5, 9);
    let pa = predict_features(&a, &phi_t).unwrap();
    let pb = predict_features(&b, &phi_t).unwrap();
    assert!(rel_err(&pb, &(pa * 3.0)) < 1e-12);
}

#[test]
fn reduced_features_reproduce_gram_and_slices() {
    let it = instance(11);
    let p = it.em.outputs();
    let z = reduce_dimensions(&it.em, &it.phi).unwrap();
    let g = dense_entangled_gram(it.em.q(), &it.phi, p);
    assert!(rel_err(&(&z * z.transpose()), &g) < 1e-10);
    for s in 0..p {
        let zs = output_slice(&z, p, s).unwrap();
        let gs = DMatrix::from_fn(it.phi.ncols(), it.phi.ncols(), |i, j| g[(i * p + s, j * p + s)]);
        assert!(rel_err(&(&zs * zs.transpose()), &gs) < 1e-10);
    }
    assert!(output_slice(&z, p, p).is_err());
}

#[test]
fn bounds() {
    assert_eq!(rademacher_bound(2.0, 4.0, 9.0, 36.0).unwrap(), 2.0);
    assert_eq!(generalization_bound(0.123, 2.0, 4.0, 9.0, 36.0, 0.0, 0.05).unwrap(), 0.123);
    let b1 = generalization_bound(0.1, 2.0, 4.0, 9.0, 36.0, 1.0, 0.05).unwrap();
    let b2 = generalization_bound(0.1, 2.0, 4.0, 9.0, 144.0, 1.0, 0.05).unwrap();
    assert!(b1 > b2 && b2 > 0.1);
    assert!(rademacher_bound(2.0, 4.0, 9.0, 0.0).is_err());
    assert!(generalization_bound(0.1, 2.0, 4.0, 9.0, 36.0, 1.0, 1.0).is_err());
}

#[test]
fn rejects_bad_inputs() {
    let it = instance(3);
    assert!(fit_operator_valued(&it.em, &it.phi, &it.y, 0.0).is_err());
    assert!(fit_operator_valued(&it.em, &it.phi, &randn(it.y.nrows(), it.y.ncols() + 1, 0), 1.0).is_err());
    assert!(fit_scalar(&it.em, &randn(it.phi.nrows() + 1, 4, 0), &randn(it.y.nrows(), 4, 0), 1.0).is_err());
    let em = EntangledModel::normalized(randn(4000, 1, 0), 2, linear_map(2000), 0.5, 1.0).unwrap();
    assert!(dense::entangled_gram(&em, &randn(2000, 1001, 0)).is_err());
}

#[test]
fn recovers_planted_coefficients() {
    for seed in 0..20 {
        let it = instance(seed);
        let p = it.em.outputs();
        let c_star = DVector::from_column_slice(randn(p * it.phi.ncols(), 1, seed + 77).as_slice());
        let g = dense_entangled_gram(it.em.q(), &it.phi, p);
        let mut a = g;
        for i in 0..a.nrows() {
            a[(i, i)] += it.lambda;
        }
        let y = ekl::tensor::unvec_col(&(a * &c_star), p).unwrap();
        let z = it.em.low_rank_factor(&it.phi).unwrap();
        let c = ovk_coefficients(&z, &y, it.lambda).unwrap();
        assert!(rel_err_vec(&c, &c_star) < 1e-8, "seed {seed}: {}", rel_err_vec(&c, &c_star));
    }
}
