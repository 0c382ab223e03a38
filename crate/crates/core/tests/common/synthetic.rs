//! A synthetic family where every span the method relies on is exact.
//!
//! Both fidelities share the affine coefficients θ(μ) = (1, μ1, μ2). The fine
//! operators are simultaneously diagonal in a random orthogonal basis V and the
//! fine load lies in the first three columns of V, so every fine solution lives
//! in that three-dimensional subspace. With N_rb = 3, n_L = 3, n_f = 1 the
//! online stage must reproduce the fine solution to rounding.

use std::collections::BTreeMap;
use std::sync::Arc;

use bifirom::fem::FemModel;
use bifirom::linalg::{gram_schmidt_kept, pivoted_cholesky_select};
use bifirom::nonlinear::{IterationConfig, LinearizedSystem};
use bifirom::offline::{BuildMeta, RomArtifact, StageTimings};
use bifirom::problems::get_problem;
use bifirom::snapshots::{vectorize_operator, ParameterSet, Provenance};
use bifirom::sparse::{solve_sparse, SparseMatrix, SparsityPattern};
use bifirom::{online::OnlineSolver, store};
use super::{gauss_solve, random_matrix, rel, rng};
use nalgebra::{DMatrix, DVector};
use rand::RngExt;

struct Family {
    lf_terms: Vec<SparseMatrix>,
    f_l: DVector<f64>,
    v: DMatrix<f64>,
    diag: Vec<DVector<f64>>,
    f_h: DVector<f64>,
}

fn theta(mu: &[f64]) -> [f64; 3] {
    [1.0, mu[0], mu[1]]
}

impl Family {
    fn new(pattern: &Arc<SparsityPattern>, n_h: usize) -> Self {
        let mut r = rng(4242);
        let n_l = pattern.n_rows();
        let lf_terms = (0..3)
            .map(|t| {
                let values = (0..pattern.n_rows())
                    .flat_map(|row| pattern.row(row).iter().map(move |&c| (row, c)))
                    .map(|(row, c)| match (t, row == c) {
                        (0, true) => 20.0 + r.random_range(0.0..1.0),
                        (_, true) => r.random_range(0.5..1.0),
                        _ => r.random_range(-0.5..0.5),
                    })
                    .collect();
                SparseMatrix::new(pattern.clone(), values).unwrap()
            })
            .collect();
        let f_l = DVector::from_fn(n_l, |_, _| r.random_range(-1.0..1.0));
        let v = random_matrix(&mut r, n_h, n_h).qr().q();
        let diag = vec![
            DVector::from_fn(n_h, |_, _| r.random_range(2.0..3.0)),
            DVector::from_fn(n_h, |_, _| r.random_range(0.1..0.5)),
            DVector::from_fn(n_h, |_, _| r.random_range(0.1..0.5)),
        ];
        let c = DVector::from_fn(3, |_, _| r.random_range(0.5..1.5));
        let f_h = v.columns(0, 3) * c;
        Family { lf_terms, f_l, v, diag, f_h }
    }

    fn lf_operator(&self, mu: &[f64]) -> SparseMatrix {
        let th = theta(mu);
        let mut values = vec![0.0; self.lf_terms[0].values().len()];
        for (t, term) in th.iter().zip(&self.lf_terms) {
            for (v, x) in values.iter_mut().zip(term.values()) {
                *v += t * x;
            }
        }
        SparseMatrix::new(self.lf_terms[0].pattern().clone(), values).unwrap()
    }

    fn hf_eigs(&self, mu: &[f64]) -> DVector<f64> {
        let th = theta(mu);
        &self.diag[0] * th[0] + &self.diag[1] * th[1] + &self.diag[2] * th[2]
    }

    fn hf_operator(&self, mu: &[f64]) -> DMatrix<f64> {
        &self.v * DMatrix::from_diagonal(&self.hf_eigs(mu)) * self.v.transpose()
    }

    fn hf_solution(&self, mu: &[f64]) -> DVector<f64> {
        let w = self.v.tr_mul(&self.f_h).component_div(&self.hf_eigs(mu));
        &self.v * w
    }
}

/// Builds the artifact by hand and returns the relative online error at
/// `n_test` random parameters.
pub fn recovery_errors(n_test: usize) -> Vec<f64> {
    let problem = get_problem("wavespeed").unwrap();
    let (lf_grid, hf_grid) = (problem.grid(4, 4).unwrap(), problem.grid(8, 8).unwrap());
    let pattern = FemModel::new(problem, lf_grid).unwrap().pattern().clone();
    let n_h = hf_grid.n_interior();
    let family = Family::new(&pattern, n_h);

    // Offline by hand on a candidate set, using the library's selection kernels.
    let candidates = ParameterSet::sample(problem, 40, 9, Provenance::Candidates);
    let lf_systems: Vec<(SparseMatrix, DVector<f64>)> = candidates
        .points
        .iter()
        .map(|mu| {
            let l = family.lf_operator(mu);
            let u = solve_sparse(&l, family.f_l.as_slice()).unwrap();
            (l, u)
        })
        .collect();
    let u_l = DMatrix::from_columns(&lf_systems.iter().map(|(_, u)| u.clone()).collect::<Vec<_>>());
    let l_vec = DMatrix::from_columns(
        &lf_systems.iter().map(|(l, _)| vectorize_operator(l, &pattern).unwrap()).collect::<Vec<_>>(),
    );
    let f_mat = DMatrix::from_columns(&vec![family.f_l.clone(); candidates.len()]);

    let gamma_u = pivoted_cholesky_select(&u_l, 3).unwrap().pivot_indices;
    let gamma_l = pivoted_cholesky_select(&l_vec, 3).unwrap().pivot_indices;
    let gamma_f = pivoted_cholesky_select(&f_mat, 1).unwrap().pivot_indices;

    let u_h_gamma = DMatrix::from_columns(&gamma_u.iter().map(|&i| family.hf_solution(&candidates.points[i])).collect::<Vec<_>>());
    let (q, kept) = gram_schmidt_kept(&u_h_gamma).unwrap();
    assert_eq!(q.ncols(), 3);
    let pick = |m: &DMatrix<f64>, idx: &[usize]| DMatrix::from_columns(&idx.iter().map(|&i| m.column(i)).collect::<Vec<_>>());
    let llow = pick(&l_vec, &gamma_l);
    let flow = pick(&f_mat, &gamma_f);

    let meta = BuildMeta {
        tool_version: "synthetic".into(),
        problem: problem.id.into(),
        hf_grid,
        lf_grid,
        n_p: candidates.len(),
        n_rb_requested: 3,
        n_l: 3,
        n_f: 1,
        seed: 9,
        hf_iteration: IterationConfig::default(),
        lf_iteration: IterationConfig::default(),
        hf_runs: 0,
        kept_columns: kept,
        rank_deficient: BTreeMap::new(),
        timings: StageTimings::default(),
    };
    let artifact = RomArtifact {
        meta,
        l_rb_basis: gamma_l.iter().map(|&i| q.transpose() * family.hf_operator(&candidates.points[i]) * &q).collect(),
        f_rb_basis: gamma_f.iter().map(|_| q.tr_mul(&family.f_h)).collect(),
        g_l: llow.tr_mul(&llow),
        g_f: flow.tr_mul(&flow),
        llow_gamma: llow,
        flow_gamma: flow,
        gamma_u: candidates.subset(&gamma_u, Provenance::GammaU),
        gamma_l: candidates.subset(&gamma_l, Provenance::GammaL),
        gamma_f: candidates.subset(&gamma_f, Provenance::GammaF),
        lf_pattern: pattern.clone(),
        ref_lf_u: pick(&u_l, &gamma_u),
        ref_hf_coeffs: q.tr_mul(&u_h_gamma),
        q,
    };
    artifact.validate().unwrap();
    // The hand-built artifact also survives persistence unchanged.
    let artifact = store::from_bytes(&store::to_bytes(&artifact).unwrap()).unwrap();

    let online = OnlineSolver::new(&artifact).unwrap();
    let test = ParameterSet::sample(problem, n_test, 31, Provenance::Test);
    let mut errors = Vec::new();
    for mu in &test.points {
        let l = family.lf_operator(mu);
        let u = solve_sparse(&l, family.f_l.as_slice()).unwrap();
        let lf = LinearizedSystem {
            operator: l,
            rhs: family.f_l.clone(),
            solution: u,
            iterations: 1,
            converged: true,
            residual_rel: 0.0,
            history: vec![],
        };
        let report = online.solve_from_lf(mu, &lf).unwrap();
        errors.push(rel(&report.u_r, &family.hf_solution(mu)));
    }
    errors
}

/// Relative gap between the closed-form fine solution and a dense solve.
pub fn closed_form_check(mu: &[f64]) -> f64 {
    let problem = get_problem("wavespeed").unwrap();
    let n_h = problem.grid(8, 8).unwrap().n_interior();
    let pattern = FemModel::new(problem, problem.grid(4, 4).unwrap()).unwrap().pattern().clone();
    let family = Family::new(&pattern, n_h);
    rel(&gauss_solve(&family.hf_operator(mu), &family.f_h), &family.hf_solution(mu))
}
