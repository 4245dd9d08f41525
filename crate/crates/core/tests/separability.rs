mod common;

use common::*;
use ekl::separability::{ppt_check, DEFAULT_PPT_TOL};
use ekl::tensor::BlockMatrix;
use nalgebra::DMatrix;
use proptest::prelude::*;

#[test]
fn kron_of_psd_factors_holds() {
    for seed in 0..50u64 {
        let s = seed as usize;
        let k = rand_psd(2 + s % 6, 1 + s % 3, seed);
        let t = rand_psd(1 + s % 4, 1 + s % 2, seed + 1000);
        let a = BlockMatrix::new(kron_loop(&k, &t), t.nrows()).unwrap();
        let v = ppt_check(&a, DEFAULT_PPT_TOL).unwrap();
        assert!(!v.is_entangled(), "seed {seed}: {}", v.min_eig());
    }
}

#[test]
fn sums_of_kron_products_hold() {
    for seed in 0..20u64 {
        let mut a = DMatrix::zeros(12, 12);
        for j in 0..3 {
            a += kron_loop(&rand_psd(4, 2, seed * 10 + j), &rand_psd(3, 1, seed * 10 + j + 5));
        }
        let v = ppt_check(&BlockMatrix::new(a, 3).unwrap(), DEFAULT_PPT_TOL).unwrap();
        assert!(!v.is_entangled());
    }
}

#[test]
fn bell_state_min_eigenvalue() {
    let mut m = DMatrix::zeros(4, 4);
    for &(i, j) in &[(0, 0), (0, 3), (3, 0), (3, 3)] {
        m[(i, j)] = 0.5;
    }
    let v = ppt_check(&BlockMatrix::new(m.clone(), 2).unwrap(), DEFAULT_PPT_TOL).unwrap();
    assert!(v.is_entangled());
    assert!((v.min_eig() + 0.5).abs() <= 1e-10);
    let oracle = jacobi_eigenvalues(&partial_transpose_loop(&m, 2))[0];
    assert!((oracle + 0.5).abs() < 1e-12);
    // Scaling does not change the verdict or the normalized eigenvalue.
    let v = ppt_check(&BlockMatrix::new(m * 7.0, 2).unwrap(), DEFAULT_PPT_TOL).unwrap();
    assert!((v.min_eig() + 0.5).abs() <= 1e-10);
}

#[test]
fn werner_threshold() {
    // ρ = w |ψ⁻⟩⟨ψ⁻| + (1 − w) I/4 is entangled iff w > 1/3.
    let mut singlet = DMatrix::zeros(4, 4);
    singlet[(1, 1)] = 0.5;
    singlet[(2, 2)] = 0.5;
    singlet[(1, 2)] = -0.5;
    singlet[(2, 1)] = -0.5;
    for &(w, want) in &[(0.2, false), (0.33, false), (0.34, true), (0.9, true)] {
        let rho = &singlet * w + DMatrix::identity(4, 4) * ((1.0 - w) / 4.0);
        let v = ppt_check(&BlockMatrix::new(rho, 2).unwrap(), DEFAULT_PPT_TOL).unwrap();
        assert_eq!(v.is_entangled(), want, "w = {w}");
        assert!((v.min_eig() - (1.0 - 3.0 * w) / 4.0).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn relabeling_samples_keeps_verdict(seed in 0u64..500, perm_seed in 0u64..500) {
        let b = 4;
        let q = 2;
        let mut a = kron_loop(&rand_psd(b, 2, seed), &rand_psd(q, 2, seed + 1));
        if seed % 2 == 0 {
            // Mix in a Bell-like component on the first two samples.
            let mut bell = DMatrix::zeros(b * q, b * q);
            for &(i, j) in &[(0, 0), (0, 3), (3, 0), (3, 3)] {
                bell[(i, j)] = 5.0;
            }
            a += bell;
        }
        let base = ppt_check(&BlockMatrix::new(a.clone(), q).unwrap(), DEFAULT_PPT_TOL).unwrap();
        let mut order: Vec<usize> = (0..b).collect();
        let key = randn(b, 1, perm_seed);
        order.sort_by(|&i, &j| key[i].total_cmp(&key[j]));
        let permuted = DMatrix::from_fn(b * q, b * q, |r, c| a[(order[r / q] * q + r % q, order[c / q] * q + c % q)]);
        let v = ppt_check(&BlockMatrix::new(permuted, q).unwrap(), DEFAULT_PPT_TOL).unwrap();
        prop_assert_eq!(v.is_entangled(), base.is_entangled());
        prop_assert!((v.min_eig() - base.min_eig()).abs() < 1e-10);
    }

    #[test]
    fn partial_transpose_is_involution(seed in 0u64..1000, b in 1usize..5, q in 1usize..4) {
        let a = randn(b * q, b * q, seed);
        let bm = BlockMatrix::new(a.clone(), q).unwrap();
        prop_assert_eq!(bm.partial_transpose().partial_transpose().into_inner(), a);
    }

    #[test]
    fn partial_trace_preserves_trace(seed in 0u64..1000, b in 1usize..6, q in 1usize..5) {
        let a = randn(b * q, b * q, seed);
        let pt = BlockMatrix::new(a.clone(), q).unwrap().partial_trace();
        prop_assert!((pt.trace() - a.trace()).abs() < 1e-12 * (1.0 + a.norm()));
        prop_assert_eq!(pt, partial_trace_loop(&a, q));
    }
}
