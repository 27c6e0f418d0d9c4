//! Solver and condition-number checks against nalgebra oracles.

mod common;

use common::to_dense;
use cutfem_darcy::linalg::{
    condition_number, diag_preconditioner, preconditioned_condition, solve,
    spectral_condition_number, ConditionOptions, CsrMatrix, DENSE_LIMIT,
};
use cutfem_darcy::Error;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_dense(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

fn svd_condition(m: &DMatrix<f64>) -> f64 {
    let s = m.singular_values();
    s.max() / s.min()
}

#[test]
fn solve_examples() {
    let b = vec![1.0, -2.0, 3.5];
    assert_eq!(solve(&CsrMatrix::identity(3), &b).unwrap().solution, b);
    let toy = CsrMatrix::from_dense(&[vec![2.0, 1.0], vec![-1.0, 0.0]]);
    let x = solve(&toy, &[1.0, 0.0]).unwrap().solution;
    assert!(x[0].abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
}

#[test]
fn random_well_conditioned_solve() {
    let mut rows = random_dense(50, 42);
    for (i, r) in rows.iter_mut().enumerate() {
        r[i] += 10.0;
    }
    let c = CsrMatrix::from_dense(&rows);
    let b: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
    let report = solve(&c, &b).unwrap();
    let r = c.matvec(&report.solution);
    let res = r
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
        / b.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(res < 1e-12 && report.residual < 1e-12, "{res}");
}

#[test]
fn singular_matrix_is_rejected() {
    let c = CsrMatrix::from_dense(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
    assert!(matches!(solve(&c, &[1.0, 1.0]), Err(Error::Singular(_))));
}

#[test]
fn condition_examples() {
    assert!(
        (spectral_condition_number(&CsrMatrix::identity(4), DENSE_LIMIT).unwrap() - 1.0).abs()
            < 1e-14
    );
    let d = CsrMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 10.0]]);
    assert!((spectral_condition_number(&d, DENSE_LIMIT).unwrap() - 10.0).abs() < 1e-12);
    assert!(matches!(
        spectral_condition_number(&CsrMatrix::identity(5), 4),
        Err(Error::TooLarge { .. })
    ));
}

#[test]
fn spd_condition_matches_eigenvalue_ratio() {
    for seed in 0..5 {
        let g = DMatrix::from_fn(10, 10, |i, j| random_dense(10, seed)[i][j]);
        let spd = &g * g.transpose() + DMatrix::identity(10, 10) * 0.1;
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| (0..10).map(|j| spd[(i, j)]).collect())
            .collect();
        let eig = spd.clone().symmetric_eigen().eigenvalues;
        let oracle = eig.max() / eig.min();
        let k = spectral_condition_number(&CsrMatrix::from_dense(&rows), DENSE_LIMIT).unwrap();
        assert!((k - oracle).abs() < 1e-8 * oracle, "{k} vs {oracle}");
    }
}

/// Sparse nonsymmetric saddle-point-like matrix.
fn sparse_saddle(n: usize, m: usize, seed: u64) -> CsrMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = Vec::new();
    for i in 0..n {
        e.push((i, i, rng.gen_range(0.5..2.0)));
        if i + 1 < n {
            let v = rng.gen_range(-0.3..0.3);
            e.push((i, i + 1, v));
            e.push((i + 1, i, v));
        }
    }
    for q in 0..m {
        for _ in 0..3 {
            let u = rng.gen_range(0..n);
            let v = rng.gen_range(-1.0..1.0);
            e.push((u, n + q, v));
            e.push((n + q, u, -v));
        }
    }
    CsrMatrix::from_triplets(n + m, n + m, &e)
}

#[test]
fn iterative_condition_matches_dense_svd() {
    let opts = ConditionOptions {
        dense_threshold: 0,
        ..ConditionOptions::default()
    };
    for seed in 0..3 {
        let c = sparse_saddle(160, 40, seed);
        let oracle = svd_condition(&to_dense(&c));
        let k = condition_number(&c, &opts).unwrap();
        assert!((k - oracle).abs() < 1e-5 * oracle, "{k} vs {oracle}");
    }
}

#[test]
fn diagonal_preconditioner_examples() {
    let opts = ConditionOptions::default();
    let id = CsrMatrix::identity(3);
    let p = diag_preconditioner(&CsrMatrix::identity(2), &CsrMatrix::identity(1), 0).unwrap();
    assert!((preconditioned_condition(&id, &p, &opts).unwrap() - 1.0).abs() < 1e-14);
    let d = CsrMatrix::from_dense(&[
        vec![4.0, 0.0, 0.0],
        vec![0.0, 9.0, 0.0],
        vec![0.0, 0.0, 0.25],
    ]);
    let p = diag_preconditioner(
        &CsrMatrix::from_dense(&[vec![4.0, 0.0], vec![0.0, 9.0]]),
        &CsrMatrix::from_dense(&[vec![0.25]]),
        0,
    )
    .unwrap();
    assert!((preconditioned_condition(&d, &p, &opts).unwrap() - 1.0).abs() < 1e-14);
    let bad = CsrMatrix::from_dense(&[vec![-1.0]]);
    assert!(matches!(
        diag_preconditioner(&bad, &bad, 0),
        Err(Error::InvalidPreconditioner(_))
    ));
}
