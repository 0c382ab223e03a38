//! Parameter sets and column-stacked snapshot matrices.
//!
//! A [`SnapshotSet`] holds, column by column, the solution `u`, the
//! vectorized operator (its CSR values in canonical order) and the right-hand
//! side of one fidelity at each point of a [`ParameterSet`].

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::StructuredGrid;
use crate::nonlinear::{FidelitySolver, IterationConfig, LinearizedSystem};
use crate::problems::ProblemSpec;
use crate::sparse::{SparseMatrix, SparsityPattern};

/// Where a parameter set came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Candidates,
    GammaU,
    GammaL,
    GammaF,
    Test,
    Manual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub points: Vec<Vec<f64>>,
    pub provenance: Provenance,
    pub seed: Option<u64>,
    /// Indices into the candidate set for selected subsets.
    pub indices: Option<Vec<usize>>,
}

impl ParameterSet {
    pub fn manual(points: Vec<Vec<f64>>) -> Self {
        ParameterSet { points, provenance: Provenance::Manual, seed: None, indices: None }
    }

    /// `n` points drawn uniformly and independently from the problem's parameter box.
    pub fn sample(problem: &ProblemSpec, n: usize, seed: u64, provenance: Provenance) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..n)
            .map(|_| {
                problem
                    .param_domain
                    .iter()
                    .map(|&(lo, hi)| if hi > lo { rng.random_range(lo..hi) } else { lo })
                    .collect()
            })
            .collect();
        ParameterSet { points, provenance, seed: Some(seed), indices: None }
    }

    /// The points at `indices`, remembering which candidates they were.
    pub fn subset(&self, indices: &[usize], provenance: Provenance) -> Self {
        ParameterSet {
            points: indices.iter().map(|&i| self.points[i].clone()).collect(),
            provenance,
            seed: self.seed,
            indices: Some(indices.to_vec()),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.len())
    }

    /// Row-major `len × dim` coordinates.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), self.dim(), |i, j| self.points[i][j])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fidelity {
    Low,
    High,
}

#[derive(Clone, Debug)]
pub struct SnapshotSet {
    pub u: DMatrix<f64>,
    pub lvec: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub params: ParameterSet,
    pub fidelity: Fidelity,
    pub pattern: Arc<SparsityPattern>,
    pub iterations: Vec<usize>,
}

impl SnapshotSet {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Operator of column `j`, rebuilt from its vectorized values.
    pub fn operator(&self, j: usize) -> Result<SparseMatrix> {
        unvectorize_operator(self.lvec.column(j).as_slice(), &self.pattern)
    }

    /// Columns `cols` of `(U, Lvec, F)` as a new set.
    pub fn columns(&self, cols: &[usize], provenance: Provenance) -> Self {
        let pick = |m: &DMatrix<f64>| DMatrix::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])]);
        SnapshotSet {
            u: pick(&self.u),
            lvec: pick(&self.lvec),
            f: pick(&self.f),
            params: self.params.subset(cols, provenance),
            fidelity: self.fidelity,
            pattern: self.pattern.clone(),
            iterations: cols.iter().map(|&c| self.iterations[c]).collect(),
        }
    }
}

/// CSR values of `l` in canonical order, checked against `pattern`.
pub fn vectorize_operator(l: &SparseMatrix, pattern: &SparsityPattern) -> Result<DVector<f64>> {
    if !std::ptr::eq(l.pattern().as_ref(), pattern) && l.pattern().as_ref() != pattern {
        return Err(Error::PatternMismatch(format!(
            "operator has {} nonzeros in {} rows, pattern has {} in {}",
            l.values().len(),
            l.pattern().n_rows(),
            pattern.nnz(),
            pattern.n_rows()
        )));
    }
    Ok(DVector::from_column_slice(l.values()))
}

/// Inverse of [`vectorize_operator`].
pub fn unvectorize_operator(values: &[f64], pattern: &Arc<SparsityPattern>) -> Result<SparseMatrix> {
    SparseMatrix::new(pattern.clone(), values.to_vec())
}

/// Stacks solved systems column-wise.
pub fn stack(systems: &[LinearizedSystem], params: ParameterSet, pattern: Arc<SparsityPattern>, fidelity: Fidelity) -> Result<SnapshotSet> {
    let n = systems.first().map_or(0, |s| s.solution.len());
    let nnz = pattern.nnz();
    let mut u = DMatrix::zeros(n, systems.len());
    let mut lvec = DMatrix::zeros(nnz, systems.len());
    let mut f = DMatrix::zeros(n, systems.len());
    for (j, s) in systems.iter().enumerate() {
        u.set_column(j, &s.solution);
        lvec.set_column(j, &vectorize_operator(&s.operator, &pattern)?);
        f.set_column(j, &s.rhs);
    }
    let iterations = systems.iter().map(|s| s.iterations).collect();
    Ok(SnapshotSet { u, lvec, f, params, fidelity, pattern, iterations })
}

/// Solves every point in parallel, keeping input order.
///
/// Any failing point fails the whole sweep; the error lists every offender.
pub fn sweep_systems(solver: &FidelitySolver, params: &ParameterSet) -> Result<Vec<LinearizedSystem>> {
    if params.is_empty() {
        return Err(Error::Contract("cannot sweep an empty parameter set".into()));
    }
    let results: Vec<Result<LinearizedSystem>> = params.points.par_iter().map(|mu| solver.solve(mu)).collect();
    let mut offenders = Vec::new();
    let mut systems = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => systems.push(s),
            Err(e) => offenders.push((i, e.to_string())),
        }
    }
    if offenders.is_empty() {
        Ok(systems)
    } else {
        Err(Error::SweepFailure { offenders })
    }
}

/// [`sweep_systems`] followed by [`stack`].
pub fn sweep_with(solver: &FidelitySolver, params: &ParameterSet, fidelity: Fidelity) -> Result<SnapshotSet> {
    let systems = sweep_systems(solver, params)?;
    stack(&systems, params.clone(), solver.model().pattern().clone(), fidelity)
}

pub fn sweep(
    problem: &'static ProblemSpec,
    grid: &StructuredGrid,
    params: &ParameterSet,
    config: &IterationConfig,
) -> Result<SnapshotSet> {
    let solver = FidelitySolver::new(problem, *grid, config.clone())?;
    sweep_with(&solver, params, Fidelity::Low)
}

/// Deduplicated union of selected candidate indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Union {
    /// Candidate indices, in order of first appearance across `(γ_u, γ_L, γ_f)`.
    pub points: Vec<usize>,
    /// Position in `points` of each entry of γ_u, γ_L, γ_f.
    pub u_map: Vec<usize>,
    pub l_map: Vec<usize>,
    pub f_map: Vec<usize>,
}

pub fn dedup_union(gamma_u: &[usize], gamma_l: &[usize], gamma_f: &[usize]) -> Union {
    let mut points: Vec<usize> = Vec::new();
    let mut map = |set: &[usize]| -> Vec<usize> {
        set.iter()
            .map(|&i| match points.iter().position(|&p| p == i) {
                Some(k) => k,
                None => {
                    points.push(i);
                    points.len() - 1
                }
            })
            .collect()
    };
    let u_map = map(gamma_u);
    let l_map = map(gamma_l);
    let f_map = map(gamma_f);
    Union { points, u_map, l_map, f_map }
}
