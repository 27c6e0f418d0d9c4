//! Sparse storage, direct solves and spectral condition numbers.
//!
//! Matrices are assembled as triplets and compressed into CSR with a fixed
//! summation order, so assembly results do not depend on thread scheduling.
//! Factorizations and dense SVDs use `faer`.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::{Error, Result};

/// Unsorted `(row, col, value)` entries; duplicates are summed on compression.
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Triplets {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.nrows && j < self.ncols);
        if v != 0.0 {
            self.entries.push((i, j, v));
        }
    }

    pub fn extend(&mut self, other: Triplets) {
        self.entries.extend(other.entries);
    }

    pub fn to_csr(&self) -> CsrMatrix {
        CsrMatrix::from_triplets(self.nrows, self.ncols, &self.entries)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, &(0..n).map(|i| (i, i, 1.0)).collect::<Vec<_>>())
    }

    /// Stable sort by `(row, col)` then left-to-right summation of duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut sorted = entries.to_vec();
        sorted.sort_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0; nrows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut data: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            assert!(
                i < nrows && j < ncols,
                "entry ({i}, {j}) outside {nrows}x{ncols}"
            );
            if last == Some((i, j)) {
                *data.last_mut().expect("previous entry") += v;
            } else {
                indices.push(j);
                data.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let ncols = rows.first().map_or(0, Vec::len);
        let mut entries = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        Self::from_triplets(rows.len(), ncols, &entries)
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()]
            .iter()
            .copied()
            .zip(self.data[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(k) => self.data[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.nrows)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let entries: Vec<_> = self
            .triplets()
            .into_iter()
            .map(|(i, j, v)| (j, i, v))
            .collect();
        Self::from_triplets(self.ncols, self.nrows, &entries)
    }

    pub fn scale(&self, alpha: f64) -> CsrMatrix {
        CsrMatrix {
            data: self.data.iter().map(|v| alpha * v).collect(),
            ..self.clone()
        }
    }

    pub fn add(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut entries = self.triplets();
        entries.extend(other.triplets());
        Self::from_triplets(self.nrows, self.ncols, &entries)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        self.add(&t.scale(-1.0)).max_abs()
    }

    /// `diag(d) * self * diag(d)`.
    pub fn scale_symmetric(&self, d: &[f64]) -> CsrMatrix {
        let entries: Vec<_> = self
            .triplets()
            .into_iter()
            .map(|(i, j, v)| (i, j, d[i] * v * d[j]))
            .collect();
        Self::from_triplets(self.nrows, self.ncols, &entries)
    }

    /// `diag(dr) * self * diag(dc)`.
    pub fn scale_rows_cols(&self, dr: &[f64], dc: &[f64]) -> CsrMatrix {
        let mut out = self.clone();
        for (i, &r) in dr.iter().enumerate().take(self.nrows) {
            for k in self.indptr[i]..self.indptr[i + 1] {
                out.data[k] *= r * dc[self.indices[k]];
            }
        }
        out
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::<f64>::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    pub fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let t: Vec<Triplet<usize, usize, f64>> = self
            .triplets()
            .into_iter()
            .map(|(i, j, v)| Triplet::new(i, j, v))
            .collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &t)
            .map_err(|e| Error::Internal(format!("sparse conversion failed: {e:?}")))
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn col(m: &Mat<f64>) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, 0)]).collect()
}

fn as_mat(x: &[f64]) -> Mat<f64> {
    Mat::from_fn(x.len(), 1, |i, _| x[i])
}

/// Sparse LU factors of a square matrix.
pub struct Factorization {
    dim: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl Factorization {
    pub fn new(c: &CsrMatrix) -> Result<Self> {
        if c.nrows != c.ncols {
            return Err(Error::Internal(format!(
                "matrix is {}x{}, not square",
                c.nrows, c.ncols
            )));
        }
        let lu = c
            .to_faer()?
            .sp_lu()
            .map_err(|e| Error::Singular(format!("LU factorization failed: {e:?}")))?;
        Ok(Factorization { dim: c.nrows, lu })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.checked(col(&self.lu.solve(as_mat(b))))
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.checked(col(&self.lu.solve_transpose(as_mat(b))))
    }

    fn checked(&self, x: Vec<f64>) -> Result<Vec<f64>> {
        if x.len() != self.dim || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("non-finite solution".into()));
        }
        Ok(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solution: Vec<f64>,
    pub residual: f64,
    pub dim: usize,
    pub cond: Option<f64>,
    pub cond_pre: Option<f64>,
}

/// Relative residual above which a solve is reported as singular.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Row and column factors `(dr, dc)` such that `diag(dr) C diag(dc)` has
/// entries of magnitude at most one and unit max in every nonempty row and column.
pub fn ruiz_scaling(c: &CsrMatrix, iterations: usize) -> (Vec<f64>, Vec<f64>) {
    let mut dr = vec![1.0; c.nrows];
    let mut dc = vec![1.0; c.ncols];
    for _ in 0..iterations {
        let mut row_max = vec![0.0f64; c.nrows];
        let mut col_max = vec![0.0f64; c.ncols];
        for i in 0..c.nrows {
            for (j, v) in c.row(i) {
                let a = (dr[i] * v * dc[j]).abs();
                row_max[i] = row_max[i].max(a);
                col_max[j] = col_max[j].max(a);
            }
        }
        for (d, m) in dr.iter_mut().zip(&row_max) {
            if *m > 0.0 {
                *d /= m.sqrt();
            }
        }
        for (d, m) in dc.iter_mut().zip(&col_max) {
            if *m > 0.0 {
                *d /= m.sqrt();
            }
        }
    }
    (dr, dc)
}

/// Sparse LU of the Ruiz-equilibrated matrix with up to three steps of
/// iterative refinement on the original system.
pub fn solve(c: &CsrMatrix, b: &[f64]) -> Result<SolveReport> {
    if b.len() != c.nrows {
        return Err(Error::Internal(format!(
            "rhs length {} for dimension {}",
            b.len(),
            c.nrows
        )));
    }
    let (dr, dc) = ruiz_scaling(c, 8);
    let fact = Factorization::new(&c.scale_rows_cols(&dr, &dc))?;
    let apply = |rhs: &[f64]| -> Result<Vec<f64>> {
        let scaled: Vec<f64> = rhs.iter().zip(&dr).map(|(v, d)| v * d).collect();
        let y = fact.solve(&scaled)?;
        Ok(y.iter().zip(&dc).map(|(v, d)| v * d).collect())
    };
    let bnorm = norm(b);
    let mut x = apply(b)?;
    let residual_of =
        |x: &[f64]| -> Vec<f64> { c.matvec(x).iter().zip(b).map(|(a, b)| b - a).collect() };
    let mut r = residual_of(&x);
    let scale = if bnorm > 0.0 { bnorm } else { 1.0 };
    let mut rel = norm(&r) / scale;
    for _ in 0..3 {
        if rel < 1e-14 {
            break;
        }
        let dx = apply(&r)?;
        let candidate: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
        let rc = residual_of(&candidate);
        let relc = norm(&rc) / scale;
        if relc >= rel {
            break;
        }
        x = candidate;
        r = rc;
        rel = relc;
    }
    if !rel.is_finite() || rel > RESIDUAL_TOLERANCE {
        return Err(Error::Singular(format!("relative residual {rel:.3e}")));
    }
    Ok(SolveReport {
        solution: x,
        residual: rel,
        dim: c.nrows,
        cond: None,
        cond_pre: None,
    })
}

/// Default dimension limit of the dense SVD path.
pub const DENSE_LIMIT: usize = 20_000;

/// `sigma_max / sigma_min` by a full dense SVD.
pub fn spectral_condition_number(c: &CsrMatrix, dense_limit: usize) -> Result<f64> {
    if c.nrows != c.ncols {
        return Err(Error::Internal(
            "condition number of a non-square matrix".into(),
        ));
    }
    if c.nrows > dense_limit {
        return Err(Error::TooLarge {
            dim: c.nrows,
            limit: dense_limit,
        });
    }
    if c.nrows == 0 {
        return Ok(1.0);
    }
    let s = c
        .to_dense()
        .singular_values()
        .map_err(|e| Error::Internal(format!("SVD failed: {e:?}")))?;
    let max = s.iter().cloned().fold(0.0, f64::max);
    let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || !min.is_finite() {
        return Ok(f64::INFINITY);
    }
    Ok(max / min)
}

/// How condition numbers are evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionOptions {
    /// Largest dimension handled by dense SVD; larger matrices use Lanczos.
    pub dense_threshold: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for ConditionOptions {
    fn default() -> Self {
        ConditionOptions {
            dense_threshold: 1500,
            max_iterations: 300,
            tolerance: 1e-7,
        }
    }
}

/// Condition number by dense SVD or, above the threshold, by Lanczos.
pub fn condition_number(c: &CsrMatrix, opts: &ConditionOptions) -> Result<f64> {
    if c.nrows <= opts.dense_threshold {
        spectral_condition_number(c, opts.dense_threshold)
    } else {
        lanczos_condition_number(c, opts)
    }
}

/// Largest eigenvalue of a symmetric positive semidefinite operator by Lanczos
/// with full reorthogonalization.
fn lanczos_max<F: FnMut(&[f64]) -> Result<Vec<f64>>>(
    dim: usize,
    mut op: F,
    opts: &ConditionOptions,
) -> Result<f64> {
    // Deterministic start vector with all components nonzero.
    let mut q: Vec<f64> = (0..dim)
        .map(|i| 1.0 + 0.5 * ((i as f64 * 0.754_877_666).fract() - 0.5))
        .collect();
    let n0 = norm(&q);
    q.iter_mut().for_each(|v| *v /= n0);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut previous = 0.0;
    let steps = opts.max_iterations.min(dim);
    for k in 0..steps {
        let mut w = op(&basis[k])?;
        let a = dot(&w, &basis[k]);
        alpha.push(a);
        for _ in 0..2 {
            for v in &basis {
                let c = dot(&w, v);
                w.iter_mut().zip(v).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = norm(&w);
        let estimate = tridiagonal_max(&alpha, &beta)?;
        if k > 2 && (estimate - previous).abs() <= opts.tolerance * estimate.abs() {
            return Ok(estimate);
        }
        previous = estimate;
        if b <= 1e-14 * estimate.abs().max(f64::MIN_POSITIVE) {
            return Ok(estimate);
        }
        beta.push(b);
        basis.push(w.into_iter().map(|x| x / b).collect());
    }
    Ok(previous)
}

fn tridiagonal_max(alpha: &[f64], beta: &[f64]) -> Result<f64> {
    let k = alpha.len();
    let t = Mat::<f64>::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j || j + 1 == i {
            beta[i.min(j)]
        } else {
            0.0
        }
    });
    let s = t
        .singular_values()
        .map_err(|e| Error::Internal(format!("SVD failed: {e:?}")))?;
    Ok(s.iter().cloned().fold(0.0, f64::max))
}

/// `sigma_max` from Lanczos on `C^T C`; `sigma_min` from Lanczos on `(C^T C)^-1`
/// applied through the sparse LU factors.
pub fn lanczos_condition_number(c: &CsrMatrix, opts: &ConditionOptions) -> Result<f64> {
    let n = c.nrows;
    if n != c.ncols {
        return Err(Error::Internal(
            "condition number of a non-square matrix".into(),
        ));
    }
    let ct = c.transpose();
    let smax2 = lanczos_max(n, |x| Ok(ct.matvec(&c.matvec(x))), opts)?;
    let fact = Factorization::new(c)?;
    // (C^T C)^-1 x = C^-1 C^-T x
    let inv_smin2 = lanczos_max(n, |x| fact.solve(&fact.solve_transpose(x)?), opts)?;
    if !(inv_smin2.is_finite() && smax2.is_finite()) {
        return Err(Error::Singular("non-finite spectral estimate".into()));
    }
    Ok((smax2 * inv_smin2).sqrt())
}

/// Diagonal scaling `P = blockdiag(diag(P_u), diag(P_p))`, followed by
/// `extra` unit entries for constraint unknowns.
pub fn diag_preconditioner(p_u: &CsrMatrix, p_p: &CsrMatrix, extra: usize) -> Result<Vec<f64>> {
    let mut d = p_u.diagonal();
    d.extend(p_p.diagonal());
    if let Some((i, v)) = d
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
    {
        return Err(Error::InvalidPreconditioner(format!(
            "diagonal entry {i} is {v}"
        )));
    }
    d.extend(std::iter::repeat_n(1.0, extra));
    Ok(d)
}

/// Condition number of `P^{-1/2} C P^{-1/2}`.
pub fn preconditioned_condition(c: &CsrMatrix, p: &[f64], opts: &ConditionOptions) -> Result<f64> {
    if p.len() != c.nrows {
        return Err(Error::InvalidPreconditioner(format!(
            "length {} for dimension {}",
            p.len(),
            c.nrows
        )));
    }
    if let Some(v) = p.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidPreconditioner(format!(
            "non-positive entry {v}"
        )));
    }
    let d: Vec<f64> = p.iter().map(|v| 1.0 / v.sqrt()).collect();
    condition_number(&c.scale_symmetric(&d), opts)
}
