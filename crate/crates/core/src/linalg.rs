//! Dense kernels: pivoted-Cholesky column selection, Gram-Schmidt,
//! Gramian least squares, spectral norm and the small reduced LU solve.
//!
//! Kernels that run in the online stage report analytic floating-point
//! operation counts so callers can check that they depend only on the
//! reduced sizes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative pivot level below which a selection is flagged rank deficient.
pub const RANK_TOL: f64 = 1e-14;

/// Columns whose norm after projection falls below this fraction of the original are dropped.
pub const GS_DROP_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub pivot_indices: Vec<usize>,
    /// Residual diagonal of each pivot at the time it was chosen.
    pub pivot_values: Vec<f64>,
    pub k: usize,
    /// Some pivot fell below `RANK_TOL` times the largest initial diagonal.
    pub rank_deficient: bool,
}

/// Greedy pivoted Cholesky on `G = SᵀS`, returning the first `k` pivots.
///
/// Ties go to the lowest index. Only the `n × n` Gramian is factored.
pub fn pivoted_cholesky_select(s: &DMatrix<f64>, k: usize) -> Result<SelectionResult> {
    let n = s.ncols();
    if k == 0 || k > n {
        return Err(Error::Contract(format!("cannot select {k} of {n} columns")));
    }
    let g = s.tr_mul(s);
    Ok(pivoted_cholesky_gram(&g, k))
}

/// Same as [`pivoted_cholesky_select`] with the Gramian already formed.
pub fn pivoted_cholesky_gram(g: &DMatrix<f64>, k: usize) -> SelectionResult {
    let n = g.nrows();
    let mut d: Vec<f64> = (0..n).map(|i| g[(i, i)]).collect();
    let max0 = d.iter().cloned().fold(0.0, f64::max);
    let mut selected = vec![false; n];
    let mut l = DMatrix::<f64>::zeros(n, k);
    let mut result = SelectionResult { pivot_indices: Vec::with_capacity(k), pivot_values: Vec::with_capacity(k), k, rank_deficient: false };

    for t in 0..k {
        let mut p = usize::MAX;
        for i in 0..n {
            if !selected[i] && (p == usize::MAX || d[i] > d[p]) {
                p = i;
            }
        }
        let dp = d[p];
        selected[p] = true;
        result.pivot_indices.push(p);
        result.pivot_values.push(dp);
        if !(dp > RANK_TOL * max0) {
            result.rank_deficient = true;
            d[p] = 0.0;
            continue;
        }
        let root = dp.sqrt();
        for i in 0..n {
            if selected[i] && i != p {
                continue;
            }
            let mut v = g[(i, p)];
            for s in 0..t {
                v -= l[(i, s)] * l[(p, s)];
            }
            l[(i, t)] = v / root;
        }
        for i in 0..n {
            if !selected[i] {
                d[i] = (d[i] - l[(i, t)] * l[(i, t)]).max(0.0);
            }
        }
        d[p] = 0.0;
    }
    result
}

/// Modified Gram-Schmidt with one reorthogonalization pass.
///
/// Returns the orthonormal columns together with the indices of the input
/// columns that survived.
pub fn gram_schmidt_kept(s: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(s.ncols());
    let mut kept = Vec::new();
    for j in 0..s.ncols() {
        let mut v = s.column(j).clone_owned();
        let original = v.norm();
        if original == 0.0 || !original.is_finite() {
            continue;
        }
        for _pass in 0..2 {
            for q in &cols {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm <= GS_DROP_TOL * original {
            continue;
        }
        cols.push(v / norm);
        kept.push(j);
    }
    if cols.is_empty() {
        return Err(Error::EmptyBasis);
    }
    Ok((DMatrix::from_columns(&cols), kept))
}

pub fn gram_schmidt(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    gram_schmidt_kept(s).map(|(q, _)| q)
}

/// Which route a Gramian solve took.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LsPath {
    Cholesky,
    /// Cholesky of `G + λI`.
    Jitter(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LsSolution {
    pub coeffs: DVector<f64>,
    pub path: LsPath,
    pub flops: u64,
}

/// Cholesky factor of a symmetric matrix, or `None` when a pivot is not
/// safely positive. Counts multiply-adds as two operations.
fn cholesky(a: &DMatrix<f64>, flops: &mut u64) -> Option<DMatrix<f64>> {
    let k = a.nrows();
    let max_diag = (0..k).map(|i| a[(i, i)]).fold(0.0, f64::max);
    let mut l = DMatrix::zeros(k, k);
    for j in 0..k {
        let mut d = a[(j, j)];
        for s in 0..j {
            d -= l[(j, s)] * l[(j, s)];
        }
        *flops += 2 * j as u64 + 1;
        if !(d > RANK_TOL * max_diag) {
            return None;
        }
        let r = d.sqrt();
        l[(j, j)] = r;
        for i in j + 1..k {
            let mut v = a[(i, j)];
            for s in 0..j {
                v -= l[(i, s)] * l[(j, s)];
            }
            l[(i, j)] = v / r;
        }
        *flops += (k - j - 1) as u64 * (2 * j as u64 + 1);
    }
    Some(l)
}

fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>, flops: &mut u64) -> DVector<f64> {
    let k = l.nrows();
    let mut y = b.clone();
    for i in 0..k {
        for s in 0..i {
            y[i] -= l[(i, s)] * y[s];
        }
        y[i] /= l[(i, i)];
    }
    for i in (0..k).rev() {
        for s in i + 1..k {
            y[i] -= l[(s, i)] * y[s];
        }
        y[i] /= l[(i, i)];
    }
    *flops += 2 * (k * k) as u64;
    y
}

/// Solves the normal equations `G a = g` by Cholesky, adding jitter
/// `λ = 1e-12·tr(G)/k`, `×10` per retry up to `1e-6·tr(G)/k`, when needed.
pub fn least_squares_gram(g: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<LsSolution> {
    let k = g.nrows();
    if g.ncols() != k || rhs.len() != k {
        return Err(Error::Contract(format!("Gramian {}x{} does not match rhs of length {}", k, g.ncols(), rhs.len())));
    }
    let mut flops = 0;
    if let Some(l) = cholesky(g, &mut flops) {
        let coeffs = cholesky_solve(&l, rhs, &mut flops);
        return Ok(LsSolution { coeffs, path: LsPath::Cholesky, flops });
    }
    let scale = g.trace() / k as f64;
    if !(scale > 0.0) {
        return Err(Error::IllConditionedGramian { jitter: 0.0 });
    }
    let mut lambda = 0.0;
    for e in 0..=6 {
        lambda = scale * 1e-12 * 10f64.powi(e);
        let mut shifted = g.clone();
        for i in 0..k {
            shifted[(i, i)] += lambda;
        }
        flops += k as u64;
        if let Some(l) = cholesky(&shifted, &mut flops) {
            let coeffs = cholesky_solve(&l, rhs, &mut flops);
            return Ok(LsSolution { coeffs, path: LsPath::Jitter(lambda), flops });
        }
    }
    Err(Error::IllConditionedGramian { jitter: lambda })
}

/// Least squares `min ‖A x − b‖` through a thin QR of the tall matrix.
///
/// Avoids squaring the condition number; used when the Gramian route is
/// switched off and by the diagnostics.
pub fn least_squares_qr(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() < a.ncols() || a.nrows() != b.nrows() {
        return Err(Error::Contract(format!("QR least squares needs a tall A, got {}x{}", a.nrows(), a.ncols())));
    }
    let qr = a.clone().qr();
    let qtb = qr.q().tr_mul(b);
    qr.r()
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::IllConditionedGramian { jitter: 0.0 })
}

/// Largest singular value by power iteration on `SᵀS`.
pub fn spectral_norm(s: &DMatrix<f64>) -> f64 {
    let n = s.ncols();
    if n == 0 || s.nrows() == 0 || s.amax() == 0.0 {
        return 0.0;
    }
    let g = s.tr_mul(s);
    // Fixed, non-symmetric start so no singular direction is missed by construction.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.754_877_666_2).fract());
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..20_000 {
        let w = &g * &v;
        let next = v.dot(&w);
        let wn = w.norm();
        if wn == 0.0 {
            return 0.0;
        }
        v = w / wn;
        if (next - lambda).abs() <= 1e-14 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda.max(0.0).sqrt()
}

/// Result of the small dense reduced solve.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseSolve {
    pub x: DVector<f64>,
    /// 1-norm condition number `‖A‖₁ ‖A⁻¹‖₁`.
    pub condition: f64,
    pub flops: u64,
}

/// LU with partial pivoting on a small square system.
pub fn dense_lu_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DenseSolve> {
    let k = a.nrows();
    if a.ncols() != k || b.len() != k {
        return Err(Error::Contract(format!("reduced system {}x{} with rhs {}", k, a.ncols(), b.len())));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::ReducedSolve { reason: "non-finite reduced system".into(), condition: f64::INFINITY });
    }
    let lu = a.clone().lu();
    let inverse = lu
        .try_inverse()
        .ok_or_else(|| Error::ReducedSolve { reason: "singular reduced operator".into(), condition: f64::INFINITY })?;
    let one_norm = |m: &DMatrix<f64>| (0..m.ncols()).map(|j| m.column(j).lp_norm(1)).fold(0.0, f64::max);
    let condition = one_norm(a) * one_norm(&inverse);
    let x = lu.solve(b).ok_or_else(|| Error::ReducedSolve { reason: "singular reduced operator".into(), condition })?;
    if !condition.is_finite() || condition > 1.0 / f64::EPSILON || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::ReducedSolve { reason: "reduced operator is numerically singular".into(), condition });
    }
    let kk = k as u64;
    // Factorization 2k³/3, two triangular solves per column of the inverse and for x.
    let flops = 2 * kk * kk * kk / 3 + 2 * kk * kk * (kk + 1) + 2 * kk * kk;
    Ok(DenseSolve { x, condition, flops })
}
