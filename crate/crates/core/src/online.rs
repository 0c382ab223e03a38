//! Online stage: one coarse solve, two Gramian least-squares fits, reduced
//! assembly and a small dense solve. Also the reference bi-fidelity method and
//! the error/timing evaluation over a test set.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dense_lu_solve, least_squares_gram, LsPath};
use crate::nonlinear::{FidelitySolver, LinearizedSystem};
use crate::offline::RomArtifact;
use crate::snapshots::{vectorize_operator, ParameterSet};

/// Seconds spent in each online step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OnlineTimings {
    pub lf_solve: f64,
    pub least_squares: f64,
    pub assembly: f64,
    pub reduced_solve: f64,
    pub reconstruction: f64,
}

impl OnlineTimings {
    pub fn total(&self) -> f64 {
        self.lf_solve + self.least_squares + self.assembly + self.reduced_solve + self.reconstruction
    }
}

/// Floating-point operations of the online steps after the coarse solve.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnlineFlops {
    /// `Llowᵀ vec(L_l)` and `Flowᵀ f_l`.
    pub projections: u64,
    pub least_squares: u64,
    pub assembly: u64,
    pub reduced_solve: u64,
}

impl OnlineFlops {
    pub fn total(&self) -> u64 {
        self.projections + self.least_squares + self.assembly + self.reduced_solve
    }
}

#[derive(Clone, Debug)]
pub struct OnlineReport {
    pub mu: Vec<f64>,
    pub a_l: DVector<f64>,
    pub b_l: DVector<f64>,
    pub u_rb: DVector<f64>,
    pub u_r: DVector<f64>,
    /// Low-fidelity solution at `mu`.
    pub u_l: DVector<f64>,
    pub lf_iterations: usize,
    pub timings: OnlineTimings,
    /// Relative residuals of the operator and rhs fits on the coarse grid.
    pub ls_residuals: (f64, f64),
    pub ls_paths: (LsPath, LsPath),
    /// `‖L̃ u_rb − f̃‖ / ‖f̃‖`.
    pub reduced_residual: f64,
    pub condition: f64,
    pub flops: OnlineFlops,
}

/// Online solver bound to one artifact; keeps the coarse model warm.
pub struct OnlineSolver<'a> {
    artifact: &'a RomArtifact,
    lf: FidelitySolver,
}

impl<'a> OnlineSolver<'a> {
    pub fn new(artifact: &'a RomArtifact) -> Result<Self> {
        let problem = artifact.problem()?;
        let lf = FidelitySolver::new(problem, artifact.meta.lf_grid, artifact.meta.lf_iteration.clone())?;
        if lf.model().pattern().as_ref() != artifact.lf_pattern.as_ref() {
            return Err(Error::PatternMismatch("artifact pattern differs from the coarse model".into()));
        }
        Ok(OnlineSolver { artifact, lf })
    }

    pub fn artifact(&self) -> &RomArtifact {
        self.artifact
    }

    /// The coarse solve of step 1, exposed for callers that time it separately.
    pub fn lf_solve(&self, mu: &[f64]) -> Result<LinearizedSystem> {
        self.lf.solve(mu)
    }

    pub fn solve(&self, mu: &[f64]) -> Result<OnlineReport> {
        let t = Instant::now();
        let lf = self.lf.solve(mu)?;
        let lf_time = t.elapsed().as_secs_f64();
        let mut report = self.solve_from_lf(mu, &lf)?;
        report.timings.lf_solve = lf_time;
        Ok(report)
    }

    /// Steps 2-6 given the converged coarse system at `mu`.
    pub fn solve_from_lf(&self, mu: &[f64], lf: &LinearizedSystem) -> Result<OnlineReport> {
        let art = self.artifact;
        let mut timings = OnlineTimings::default();
        let mut flops = OnlineFlops::default();

        let t = Instant::now();
        let vec_l = vectorize_operator(&lf.operator, &art.lf_pattern)?;
        let g_l = art.llow_gamma.tr_mul(&vec_l);
        let g_f = art.flow_gamma.tr_mul(&lf.rhs);
        flops.projections = 2 * (art.llow_gamma.len() + art.flow_gamma.len()) as u64;
        let a = least_squares_gram(&art.g_l, &g_l)?;
        let b = least_squares_gram(&art.g_f, &g_f)?;
        flops.least_squares = a.flops + b.flops;
        timings.least_squares = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let k = art.n_rb();
        let mut l_tilde = DMatrix::<f64>::zeros(k, k);
        for (c, m) in a.coeffs.iter().zip(&art.l_rb_basis) {
            l_tilde += m * *c;
        }
        let mut f_tilde = DVector::<f64>::zeros(k);
        for (c, v) in b.coeffs.iter().zip(&art.f_rb_basis) {
            f_tilde.axpy(*c, v, 1.0);
        }
        flops.assembly = 2 * (art.n_l() * k * k + art.n_f() * k) as u64;
        timings.assembly = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let solved = dense_lu_solve(&l_tilde, &f_tilde)?;
        flops.reduced_solve = solved.flops;
        timings.reduced_solve = t.elapsed().as_secs_f64();
        log::debug!("reduced condition estimate {:.3e}", solved.condition);

        let t = Instant::now();
        let u_r = &art.q * &solved.x;
        timings.reconstruction = t.elapsed().as_secs_f64();

        let rel = |r: DVector<f64>, target: &DVector<f64>| {
            let n = target.norm();
            if n > 0.0 { r.norm() / n } else { r.norm() }
        };
        let ls_residuals = (rel(&art.llow_gamma * &a.coeffs - &vec_l, &vec_l), rel(&art.flow_gamma * &b.coeffs - &lf.rhs, &lf.rhs));
        let reduced_residual = rel(&l_tilde * &solved.x - &f_tilde, &f_tilde);

        Ok(OnlineReport {
            mu: mu.to_vec(),
            a_l: a.coeffs,
            b_l: b.coeffs,
            u_rb: solved.x,
            u_r,
            u_l: lf.solution.clone(),
            lf_iterations: lf.iterations,
            timings,
            ls_residuals,
            ls_paths: (a.path, b.path),
            reduced_residual,
            condition: solved.condition,
            flops,
        })
    }

    /// Reference bi-fidelity approximation from the coarse solution at the query.
    pub fn reference(&self, u_l: &DVector<f64>) -> Result<DVector<f64>> {
        let art = self.artifact;
        let c = reference_coefficients(&art.ref_lf_u, u_l)?;
        Ok(&art.q * (&art.ref_hf_coeffs * c))
    }
}

/// Single query against an artifact.
pub fn online_solve(artifact: &RomArtifact, mu: &[f64]) -> Result<OnlineReport> {
    OnlineSolver::new(artifact)?.solve(mu)
}

/// `Σ c_j u_h(μ_j)` with `c` the least-squares fit of `u_l` in the coarse snapshots at γ_u.
pub fn reference_bifidelity_solve(lf_u_gamma: &DMatrix<f64>, hf_u_gamma: &DMatrix<f64>, u_l: &DVector<f64>) -> Result<DVector<f64>> {
    if lf_u_gamma.ncols() != hf_u_gamma.ncols() || lf_u_gamma.nrows() != u_l.len() {
        return Err(Error::Contract("reference method inputs disagree in shape".into()));
    }
    Ok(hf_u_gamma * reference_coefficients(lf_u_gamma, u_l)?)
}

fn reference_coefficients(lf_u_gamma: &DMatrix<f64>, u_l: &DVector<f64>) -> Result<DVector<f64>> {
    if lf_u_gamma.nrows() != u_l.len() {
        return Err(Error::Contract("coarse solution does not match the stored snapshots".into()));
    }
    Ok(least_squares_gram(&lf_u_gamma.tr_mul(lf_u_gamma), &lf_u_gamma.tr_mul(u_l))?.coeffs)
}

/// Relative l2 error `‖approx − exact‖ / ‖exact‖`.
pub fn relative_error(approx: &DVector<f64>, exact: &DVector<f64>) -> Result<f64> {
    let n = exact.norm();
    if n == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((approx - exact).norm() / n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub index: usize,
    pub mu: Vec<f64>,
    /// Proposed method.
    pub e_u: f64,
    /// Reference bi-fidelity method.
    pub e_u_ref: f64,
    /// Coarse solution interpolated to the fine grid.
    pub e_u_lf: f64,
    pub t_h: f64,
    pub t_l: f64,
    pub t_online: f64,
    pub t_ref: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub e_u: f64,
    pub e_u_ref: f64,
    pub e_u_lf: f64,
    pub t_h: f64,
    pub t_l: f64,
    pub t_online: f64,
    pub t_ref: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub problem: String,
    pub n_rb: usize,
    pub n_l: usize,
    pub n_f: usize,
    pub rows: Vec<ErrorRow>,
    /// Test points that failed, with the reason.
    pub excluded: Vec<(usize, String)>,
    pub means: Aggregate,
    pub medians: Aggregate,
}

impl ErrorTable {
    pub fn from_rows(problem: &str, n_rb: usize, n_l: usize, n_f: usize, rows: Vec<ErrorRow>, excluded: Vec<(usize, String)>) -> Self {
        let (means, medians) = aggregate(&rows);
        ErrorTable { problem: problem.to_string(), n_rb, n_l, n_f, rows, excluded, means, medians }
    }

    /// `median T_h / median T_online`.
    pub fn speedup_median(&self) -> f64 {
        self.medians.t_h / self.medians.t_online
    }

    pub fn speedup_mean(&self) -> f64 {
        self.means.t_h / self.means.t_online
    }
}

fn aggregate(rows: &[ErrorRow]) -> (Aggregate, Aggregate) {
    let col = |f: fn(&ErrorRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    let median = |v: &[f64]| {
        if v.is_empty() {
            return f64::NAN;
        }
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        let m = s.len() / 2;
        if s.len() % 2 == 1 { s[m] } else { 0.5 * (s[m - 1] + s[m]) }
    };
    let cols: [Vec<f64>; 7] = [
        col(|r| r.e_u),
        col(|r| r.e_u_ref),
        col(|r| r.e_u_lf),
        col(|r| r.t_h),
        col(|r| r.t_l),
        col(|r| r.t_online),
        col(|r| r.t_ref),
    ];
    let build = |f: &dyn Fn(&[f64]) -> f64| Aggregate {
        e_u: f(&cols[0]),
        e_u_ref: f(&cols[1]),
        e_u_lf: f(&cols[2]),
        t_h: f(&cols[3]),
        t_l: f(&cols[4]),
        t_online: f(&cols[5]),
        t_ref: f(&cols[6]),
    };
    (build(&mean), build(&median))
}

/// Fine-grid solver matching the artifact's problem, grid and iteration settings.
pub fn hf_solver(artifact: &RomArtifact) -> Result<FidelitySolver> {
    FidelitySolver::new(artifact.problem()?, artifact.meta.hf_grid, artifact.meta.hf_iteration.clone())
}

/// Runs HF, LF, the proposed method and the reference method at every test point.
///
/// Points run in parallel on the current rayon pool; failing points are
/// excluded and reported.
pub fn evaluate(artifact: &RomArtifact, test: &ParameterSet) -> Result<ErrorTable> {
    let hf = hf_solver(artifact)?;
    evaluate_many(&[artifact], &hf, test).map(|mut v| v.remove(0))
}

/// Evaluates several artifacts (e.g. truncations to different `N_rb`) that
/// share one problem and grids, solving each HF reference once.
pub fn evaluate_many(artifacts: &[&RomArtifact], hf: &FidelitySolver, test: &ParameterSet) -> Result<Vec<ErrorTable>> {
    let first = artifacts.first().ok_or_else(|| Error::Contract("no artifacts to evaluate".into()))?;
    let problem = first.problem()?;
    let solvers = artifacts.iter().map(|a| OnlineSolver::new(a)).collect::<Result<Vec<_>>>()?;
    let hf_grid = first.meta.hf_grid;
    let lf_grid = first.meta.lf_grid;

    let per_point: Vec<Result<Vec<ErrorRow>>> = test
        .points
        .par_iter()
        .enumerate()
        .map(|(index, mu)| {
            let t = Instant::now();
            let reference = hf.solve(mu)?;
            let t_h = t.elapsed().as_secs_f64();
            let u_h = &reference.solution;
            let t = Instant::now();
            let lf = solvers[0].lf_solve(mu)?;
            let t_l = t.elapsed().as_secs_f64();
            let u_lf = DVector::from_vec(lf_grid.prolongate(lf.solution.as_slice(), problem.n_fields, &hf_grid));
            let e_u_lf = relative_error(&u_lf, u_h)?;
            solvers
                .iter()
                .map(|s| {
                    let mut report = s.solve_from_lf(mu, &lf)?;
                    report.timings.lf_solve = t_l;
                    let t = Instant::now();
                    let u_ref = s.reference(&lf.solution)?;
                    let t_ref = t.elapsed().as_secs_f64() + t_l;
                    Ok(ErrorRow {
                        index,
                        mu: mu.clone(),
                        e_u: relative_error(&report.u_r, u_h)?,
                        e_u_ref: relative_error(&u_ref, u_h)?,
                        e_u_lf,
                        t_h,
                        t_l,
                        t_online: report.timings.total(),
                        t_ref,
                    })
                })
                .collect()
        })
        .collect();

    let mut rows: Vec<Vec<ErrorRow>> = vec![Vec::new(); artifacts.len()];
    let mut excluded = Vec::new();
    for (i, r) in per_point.into_iter().enumerate() {
        match r {
            Ok(point_rows) => {
                for (slot, row) in rows.iter_mut().zip(point_rows) {
                    slot.push(row);
                }
            }
            Err(e) => excluded.push((i, e.to_string())),
        }
    }
    if !excluded.is_empty() {
        log::warn!("{} test point(s) excluded", excluded.len());
    }
    Ok(artifacts
        .iter()
        .zip(rows)
        .map(|(a, r)| ErrorTable::from_rows(&a.meta.problem, a.n_rb(), a.n_l(), a.n_f(), r, excluded.clone()))
        .collect())
}
