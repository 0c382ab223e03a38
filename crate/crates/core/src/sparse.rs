//! Compressed-row sparse operators with a shared, frozen sparsity pattern.
//!
//! Every operator assembled for one (problem, grid) pair points at the same
//! [`SparsityPattern`], so the CSR value arrays of different parameters line up
//! entry by entry. The direct solver caches its symbolic factorization on the
//! pattern for the same reason.

use std::sync::{Arc, Once, OnceLock};

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Residual contract of [`solve_sparse`].
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-12;

const MAX_REFINEMENT_STEPS: usize = 4;

pub struct SparsityPattern {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    factor_cache: OnceLock<FactorCache>,
}

struct FactorCache {
    // CSC layout of the same pattern: csc value k is CSR value `csr_of_csc[k]`.
    csc: SymbolicSparseColMat<usize>,
    csr_of_csc: Vec<usize>,
    symbolic: SymbolicLu<usize>,
}

impl SparsityPattern {
    pub fn new(n_rows: usize, n_cols: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>) -> Result<Self> {
        if row_ptr.len() != n_rows + 1 || row_ptr[0] != 0 || row_ptr[n_rows] != col_idx.len() {
            return Err(Error::PatternMismatch("row_ptr does not delimit col_idx".into()));
        }
        for r in 0..n_rows {
            let (a, b) = (row_ptr[r], row_ptr[r + 1]);
            if a > b {
                return Err(Error::PatternMismatch(format!("row_ptr decreases at row {r}")));
            }
            let row = &col_idx[a..b];
            if row.windows(2).any(|w| w[0] >= w[1]) || row.iter().any(|&c| c >= n_cols) {
                return Err(Error::PatternMismatch(format!("row {r} is not strictly increasing within bounds")));
            }
        }
        Ok(SparsityPattern { n_rows, n_cols, row_ptr, col_idx, factor_cache: OnceLock::new() })
    }

    /// Builds a pattern from per-row column lists (sorted and deduplicated here).
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<usize>>) -> Result<Self> {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut row in rows.iter().cloned() {
            row.sort_unstable();
            row.dedup();
            col_idx.extend(row);
            row_ptr.push(col_idx.len());
        }
        Self::new(rows.len(), n_cols, row_ptr, col_idx)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    /// Value slot of entry `(r, c)`, if structurally present.
    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        self.row(r).binary_search(&c).ok().map(|k| self.row_ptr[r] + k)
    }

    fn factor_cache(&self) -> Result<&FactorCache> {
        if let Some(cache) = self.factor_cache.get() {
            return Ok(cache);
        }
        let cache = self.build_factor_cache()?;
        Ok(self.factor_cache.get_or_init(|| cache))
    }

    fn build_factor_cache(&self) -> Result<FactorCache> {
        let nnz = self.nnz();
        let mut col_count = vec![0usize; self.n_cols + 1];
        for &c in &self.col_idx {
            col_count[c + 1] += 1;
        }
        for c in 0..self.n_cols {
            col_count[c + 1] += col_count[c];
        }
        let col_ptr = col_count.clone();
        let mut next = col_count;
        let mut row_idx = vec![0usize; nnz];
        let mut csr_of_csc = vec![0usize; nnz];
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                let slot = next[c];
                row_idx[slot] = r;
                csr_of_csc[slot] = k;
                next[c] += 1;
            }
        }
        let csc = SymbolicSparseColMat::new_checked(self.n_rows, self.n_cols, col_ptr, None, row_idx);
        let symbolic = SymbolicLu::try_new(csc.as_ref())
            .map_err(|e| Error::SolverFailure { reason: format!("symbolic factorization: {e:?}"), residual: f64::NAN })?;
        Ok(FactorCache { csc, csr_of_csc, symbolic })
    }
}

impl PartialEq for SparsityPattern {
    fn eq(&self, other: &Self) -> bool {
        self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && self.row_ptr == other.row_ptr
            && self.col_idx == other.col_idx
    }
}

impl std::fmt::Debug for SparsityPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparsityPattern")
            .field("n_rows", &self.n_rows)
            .field("n_cols", &self.n_cols)
            .field("nnz", &self.nnz())
            .finish()
    }
}

/// CSR matrix whose structure is a shared [`SparsityPattern`].
#[derive(Clone, Debug)]
pub struct SparseMatrix {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn new(pattern: Arc<SparsityPattern>, values: Vec<f64>) -> Result<Self> {
        if values.len() != pattern.nnz() {
            return Err(Error::PatternMismatch(format!(
                "{} values for a pattern with {} nonzeros",
                values.len(),
                pattern.nnz()
            )));
        }
        Ok(SparseMatrix { pattern, values })
    }

    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let nnz = pattern.nnz();
        SparseMatrix { pattern, values: vec![0.0; nnz] }
    }

    pub fn identity(n: usize) -> Self {
        let pattern = SparsityPattern::new(n, n, (0..=n).collect(), (0..n).collect()).expect("diagonal pattern");
        SparseMatrix { pattern: Arc::new(pattern), values: vec![1.0; n] }
    }

    /// Builds a matrix from triplets; duplicates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows = vec![Vec::new(); n_rows];
        for &(r, c, _) in triplets {
            if r >= n_rows || c >= n_cols {
                return Err(Error::PatternMismatch(format!("triplet ({r}, {c}) out of bounds")));
            }
            rows[r].push(c);
        }
        let pattern = Arc::new(SparsityPattern::from_rows(n_cols, rows)?);
        let mut m = SparseMatrix::zeros(pattern);
        for &(r, c, v) in triplets {
            let k = m.pattern.position(r, c).expect("entry inserted above");
            m.values[k] += v;
        }
        Ok(m)
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn n_rows(&self) -> usize {
        self.pattern.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.pattern.n_cols
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.pattern.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.pattern.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pattern.position(r, c).map_or(0.0, |k| self.values[k])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols());
        (0..self.n_rows())
            .map(|r| {
                let (a, b) = (self.pattern.row_ptr[r], self.pattern.row_ptr[r + 1]);
                self.pattern.col_idx[a..b]
                    .iter()
                    .zip(&self.values[a..b])
                    .map(|(&c, &v)| v * x[c])
                    .sum()
            })
            .collect()
    }

    /// Sparse times dense: `self * q`.
    pub fn mul_dense(&self, q: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(q.nrows(), self.n_cols());
        let mut out = DMatrix::zeros(self.n_rows(), q.ncols());
        for j in 0..q.ncols() {
            let col = q.column(j);
            let y = self.mul_vec(col.as_slice());
            out.column_mut(j).copy_from_slice(&y);
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n_rows(), self.n_cols());
        for r in 0..self.n_rows() {
            for k in self.pattern.row_ptr[r]..self.pattern.row_ptr[r + 1] {
                d[(r, self.pattern.col_idx[k])] += self.values[k];
            }
        }
        d
    }

    /// Largest relative asymmetry `|a_ij - a_ji| / max|a|`.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for r in 0..self.n_rows() {
            for k in self.pattern.row_ptr[r]..self.pattern.row_ptr[r + 1] {
                let c = self.pattern.col_idx[k];
                worst = worst.max((self.values[k] - self.get(c, r)).abs());
            }
        }
        worst / scale
    }
}

pub(crate) fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn relative_residual(l: &SparseMatrix, u: &[f64], f: &[f64], f_norm: f64) -> (Vec<f64>, f64) {
    let lu = l.mul_vec(u);
    let r: Vec<f64> = f.iter().zip(&lu).map(|(a, b)| a - b).collect();
    let rel = norm2(&r) / f_norm;
    (r, rel)
}

/// Solves `l u = f` by sparse LU with iterative refinement.
///
/// The returned solution satisfies `|l u - f| / |f| <= 1e-12`; otherwise a
/// [`Error::SolverFailure`] carries the residual that was reached.
pub fn solve_sparse(l: &SparseMatrix, f: &[f64]) -> Result<DVector<f64>> {
    static SEQUENTIAL: Once = Once::new();
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));

    let n = l.n_rows();
    if l.n_cols() != n {
        return Err(Error::Contract(format!("solve needs a square operator, got {}x{}", n, l.n_cols())));
    }
    if f.len() != n {
        return Err(Error::Contract(format!("rhs has length {}, operator is {n}x{n}", f.len())));
    }
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    let f_norm = norm2(f);
    if f_norm == 0.0 {
        return Ok(DVector::zeros(n));
    }
    if l.values.iter().any(|v| !v.is_finite()) || f.iter().any(|v| !v.is_finite()) {
        return Err(Error::SolverFailure { reason: "non-finite input".into(), residual: f64::NAN });
    }

    let cache = l.pattern.factor_cache()?;
    let csc_values: Vec<f64> = cache.csr_of_csc.iter().map(|&k| l.values[k]).collect();
    let mat = SparseColMat::new(cache.csc.clone(), csc_values);
    let lu = Lu::try_new_with_symbolic(cache.symbolic.clone(), mat.as_ref())
        .map_err(|e| Error::SolverFailure { reason: format!("numeric factorization: {e:?}"), residual: f64::NAN })?;

    let solve = |rhs: &[f64]| -> Vec<f64> {
        let b = faer::Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
        let x = lu.solve(&b);
        (0..n).map(|i| x[(i, 0)]).collect()
    };

    let mut u = solve(f);
    let (mut r, mut rel) = relative_residual(l, &u, f, f_norm);
    for _ in 0..MAX_REFINEMENT_STEPS {
        if !rel.is_finite() || rel <= SOLVE_RESIDUAL_TOL * 1e-2 {
            break;
        }
        let du = solve(&r);
        let candidate: Vec<f64> = u.iter().zip(&du).map(|(a, b)| a + b).collect();
        let (r_new, rel_new) = relative_residual(l, &candidate, f, f_norm);
        if !(rel_new < rel) {
            break;
        }
        u = candidate;
        r = r_new;
        rel = rel_new;
    }
    if !rel.is_finite() || rel > SOLVE_RESIDUAL_TOL {
        return Err(Error::SolverFailure { reason: "residual above contract after refinement".into(), residual: rel });
    }
    Ok(DVector::from_vec(u))
}
