//! The wavespeed operator is affine in μ with three terms, so with n_L = 3 the
//! online reduced system must coincide with the exact Galerkin projection.

mod common;

use bifirom::offline::{build_artifact, OfflineConfig};
use bifirom::online::{hf_solver, OnlineSolver};
use bifirom::problems::get_problem;
use bifirom::snapshots::{ParameterSet, Provenance};
use common::{galerkin_oracle, rel};

fn check(hf: usize, lf: usize, n_p: usize, n_rb: usize) -> (f64, f64) {
    let problem = get_problem("wavespeed").unwrap();
    let artifact = build_artifact(&OfflineConfig::new("wavespeed", (hf, hf), (lf, lf), n_p, n_rb, 3, 1)).unwrap();
    let online = OnlineSolver::new(&artifact).unwrap();
    let fine = hf_solver(&artifact).unwrap();
    let test = ParameterSet::sample(problem, 20, 77, Provenance::Test);
    let (mut worst_gap, mut mean_err) = (0.0f64, 0.0);
    for mu in &test.points {
        let report = online.solve(mu).unwrap();
        let u_oracle = galerkin_oracle(&artifact, problem, mu);
        let u_h = fine.solve(mu).unwrap().solution;
        worst_gap = worst_gap.max(rel(&report.u_r, &u_oracle));
        mean_err += rel(&report.u_r, &u_h) / test.len() as f64;
    }
    (worst_gap, mean_err)
}

#[test]
fn online_solution_equals_galerkin_projection() {
    let (gap, err) = check(32, 8, 100, 20);
    assert!(gap <= 1e-9, "online vs Galerkin oracle: {gap:e}");
    assert!(err <= 1e-3, "mean e_u = {err:e}");
}

#[test]
fn nine_bases_reach_one_per_mille() {
    let (gap, err) = check(32, 8, 100, 9);
    assert!(gap <= 1e-9, "online vs Galerkin oracle: {gap:e}");
    assert!(err < 1e-3, "mean e_u = {err:e}");
}
