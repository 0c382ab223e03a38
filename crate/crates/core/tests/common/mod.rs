//! Independent dense reference implementations used by the integration tests.
//!
//! Nothing here calls the library's linear-algebra kernels; the matrices are
//! plain row-major `Vec<Vec<f64>>` work arrays converted from nalgebra inputs.

#![allow(dead_code)]

pub mod synthetic;

use bifirom::offline::RomArtifact;
use bifirom::problems::ProblemSpec;
use bifirom::sparse::SparseMatrix;
use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rows_of(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect()).collect()
}

/// Pivot order of Householder QR with column pivoting, recomputing the
/// trailing column norms from scratch at every step. Ties go to the lowest index.
pub fn householder_cpqr_pivots(a: &DMatrix<f64>, k: usize) -> Vec<usize> {
    let (m, n) = a.shape();
    let mut r = rows_of(a);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    for j in 0..k.min(n).min(m) {
        let norms: Vec<f64> = (j..n).map(|c| (j..m).map(|i| r[i][c] * r[i][c]).sum()).collect();
        let mut best = 0;
        for (t, &v) in norms.iter().enumerate() {
            if v > norms[best] {
                best = t;
            }
        }
        let p = j + best;
        for row in r.iter_mut() {
            row.swap(j, p);
        }
        perm.swap(j, p);
        out.push(perm[j]);

        let alpha = (j..m).map(|i| r[i][j] * r[i][j]).sum::<f64>().sqrt();
        if alpha == 0.0 {
            continue;
        }
        let sign = if r[j][j] >= 0.0 { 1.0 } else { -1.0 };
        let mut v: Vec<f64> = (j..m).map(|i| r[i][j]).collect();
        v[0] += sign * alpha;
        let vn: f64 = v.iter().map(|x| x * x).sum();
        for c in j..n {
            let dot: f64 = (j..m).map(|i| v[i - j] * r[i][c]).sum();
            let s = 2.0 * dot / vn;
            for i in j..m {
                r[i][c] -= s * v[i - j];
            }
        }
    }
    out
}

/// Singular values (descending) by one-sided Jacobi rotations.
pub fn jacobi_singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let (m, n) = a.shape();
    // Work on columns of Aᵀ when wide so rotations act on the short side.
    let b = if m >= n { a.clone() } else { a.transpose() };
    let (m, n) = b.shape();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| b[(i, j)]).collect()).collect();
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|x| x * x).sum();
                let beta: f64 = cols[q].iter().map(|x| x * x).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (cols[p][i], cols[q][i]);
                    cols[p][i] = c * x - s * y;
                    cols[q][i] = s * x + c * y;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut sv: Vec<f64> = cols.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

/// Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.nrows();
    let mut m = rows_of(a);
    let mut x: Vec<f64> = b.iter().copied().collect();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs())).unwrap();
        m.swap(k, p);
        x.swap(k, p);
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            for j in k..n {
                m[i][j] -= f * m[k][j];
            }
            x[i] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| m[k][j] * x[j]).sum();
        x[k] = (x[k] - s) / m[k][k];
    }
    DVector::from_vec(x)
}

/// Least squares `min ‖A x − b‖` by unpivoted Householder QR (A tall, full rank).
pub fn householder_lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let (m, n) = a.shape();
    let mut r = rows_of(a);
    let mut y: Vec<f64> = b.iter().copied().collect();
    for j in 0..n {
        let alpha = (j..m).map(|i| r[i][j] * r[i][j]).sum::<f64>().sqrt();
        let sign = if r[j][j] >= 0.0 { 1.0 } else { -1.0 };
        let mut v: Vec<f64> = (j..m).map(|i| r[i][j]).collect();
        v[0] += sign * alpha;
        let vn: f64 = v.iter().map(|x| x * x).sum();
        if vn == 0.0 {
            continue;
        }
        for c in j..n {
            let s = 2.0 * (j..m).map(|i| v[i - j] * r[i][c]).sum::<f64>() / vn;
            for i in j..m {
                r[i][c] -= s * v[i - j];
            }
        }
        let s = 2.0 * (j..m).map(|i| v[i - j] * y[i]).sum::<f64>() / vn;
        for i in j..m {
            y[i] -= s * v[i - j];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| r[k][j] * x[j]).sum();
        x[k] = (y[k] - s) / r[k][k];
    }
    DVector::from_vec(x)
}

/// `L Q` from the raw CSR arrays.
pub fn csr_times_dense(l: &SparseMatrix, q: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(l.n_rows(), q.ncols());
    for r in 0..l.n_rows() {
        for p in l.row_ptr()[r]..l.row_ptr()[r + 1] {
            let (c, v) = (l.col_idx()[p], l.values()[p]);
            for j in 0..q.ncols() {
                out[(r, j)] += v * q[(c, j)];
            }
        }
    }
    out
}

/// Exact Galerkin reduced solution `Q (QᵀL_h Q)⁻¹ Qᵀ f_h` for a linear problem,
/// with the fine system assembled fresh at `mu`.
pub fn galerkin_oracle(artifact: &RomArtifact, problem: &'static ProblemSpec, mu: &[f64]) -> DVector<f64> {
    let grid = artifact.meta.hf_grid;
    let (l, f) = bifirom::fem::assemble(problem, &grid, mu, None).expect("fine assembly");
    let q = &artifact.q;
    let k = q.ncols();
    let lq = csr_times_dense(&l, q);
    let mut reduced = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for a in 0..k {
        for b in 0..k {
            reduced[(a, b)] = (0..q.nrows()).map(|i| q[(i, a)] * lq[(i, b)]).sum();
        }
        rhs[a] = (0..q.nrows()).map(|i| q[(i, a)] * f[i]).sum();
    }
    let y = gauss_solve(&reduced, &rhs);
    DVector::from_fn(q.nrows(), |i, _| (0..k).map(|a| q[(i, a)] * y[a]).sum())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
}

/// Random `m × n` matrix with singular values spread over `[1, cond]`.
pub fn conditioned_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize, cond: f64) -> DMatrix<f64> {
    let u = random_matrix(rng, m, n).qr().q();
    let v = random_matrix(rng, n, n).qr().q();
    let s = DVector::from_fn(n, |i, _| if n == 1 { 1.0 } else { cond.powf(-(i as f64) / (n - 1) as f64) });
    u * DMatrix::from_diagonal(&s) * v.transpose()
}

pub fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm()
}
