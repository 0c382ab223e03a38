//! Picard / Newton driver that turns one parameter point into the final
//! linearized triple `(L, f, u)`.
//!
//! Both linearizations are written as `A(u_prev) u = g(u_prev)`, so a linear
//! problem, a Picard run and a Newton run all produce a [`LinearizedSystem`]
//! of the same shape.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::FemModel;
use crate::grid::StructuredGrid;
use crate::problems::{Linearization, ProblemSpec};
use crate::sparse::{norm2, solve_sparse, SparseMatrix};

/// Which linearization to use; `Auto` picks the problem's default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IterationMethod {
    #[default]
    Auto,
    Picard,
    Newton,
}

impl std::str::FromStr for IterationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "auto" => Ok(IterationMethod::Auto),
            "picard" => Ok(IterationMethod::Picard),
            "newton" => Ok(IterationMethod::Newton),
            other => Err(Error::Config(format!("unknown iteration method `{other}` (auto, picard, newton)"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum InitialGuess {
    #[default]
    Zero,
    Supplied(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationConfig {
    pub method: IterationMethod,
    /// Stop once `‖u^k − u^{k−1}‖ / ‖u^k‖` falls to this value.
    pub tol_rel: f64,
    pub max_iter: usize,
    #[serde(skip)]
    pub initial_guess: InitialGuess,
}

impl Default for IterationConfig {
    fn default() -> Self {
        IterationConfig { method: IterationMethod::Auto, tol_rel: 1e-10, max_iter: 50, initial_guess: InitialGuess::Zero }
    }
}

impl IterationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_rel > 0.0 && self.tol_rel < 1.0) {
            return Err(Error::Contract(format!("tol_rel must lie in (0, 1), got {}", self.tol_rel)));
        }
        if self.max_iter == 0 {
            return Err(Error::Contract("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    fn linearization(&self, model: &FemModel) -> Linearization {
        match self.method {
            IterationMethod::Auto => model.default_linearization(),
            IterationMethod::Picard => Linearization::Picard,
            IterationMethod::Newton => Linearization::Newton,
        }
    }
}

/// Final-iteration operator, right-hand side and solution at one parameter.
#[derive(Clone, Debug)]
pub struct LinearizedSystem {
    pub operator: SparseMatrix,
    pub rhs: DVector<f64>,
    pub solution: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `‖operator·solution − rhs‖ / ‖rhs‖`.
    pub residual_rel: f64,
    /// Relative step sizes, one per nonlinear iteration (empty for linear problems).
    pub history: Vec<f64>,
}

/// Solves `problem` on `grid` at `mu`.
pub fn solve_fidelity(
    problem: &'static ProblemSpec,
    grid: &StructuredGrid,
    mu: &[f64],
    config: &IterationConfig,
) -> Result<LinearizedSystem> {
    let model = FemModel::new(problem, *grid)?;
    solve_model(&model, mu, config)
}

/// Same as [`solve_fidelity`] with a prebuilt model, so the pattern and channel
/// table are shared across parameters.
pub fn solve_model(model: &FemModel, mu: &[f64], config: &IterationConfig) -> Result<LinearizedSystem> {
    config.validate()?;
    let lin = config.linearization(model);
    if model.problem().is_linear() {
        let (operator, rhs) = model.assemble(mu, None, lin)?;
        let solution = solve_sparse(&operator, rhs.as_slice())?;
        let residual_rel = relative_residual(&operator, &solution, &rhs);
        return Ok(LinearizedSystem { operator, rhs, solution, iterations: 1, converged: true, residual_rel, history: vec![] });
    }

    let n = model.n_dofs();
    let mut u = match &config.initial_guess {
        InitialGuess::Zero => DVector::zeros(n),
        InitialGuess::Supplied(v) if v.len() == n => DVector::from_column_slice(v),
        InitialGuess::Supplied(v) => {
            return Err(Error::Contract(format!("initial guess has length {}, expected {n}", v.len())))
        }
    };
    let mut history = Vec::new();
    for k in 1..=config.max_iter {
        let (operator, rhs) = model.assemble(mu, Some(u.as_slice()), lin)?;
        let next = solve_sparse(&operator, rhs.as_slice())?;
        let norm = next.norm();
        let step = if norm > 0.0 { (&next - &u).norm() / norm } else { (&next - &u).norm() };
        if !step.is_finite() {
            return Err(Error::NonConvergence { iterations: k, history });
        }
        history.push(step);
        u = next;
        if step <= config.tol_rel {
            let residual_rel = relative_residual(&operator, &u, &rhs);
            return Ok(LinearizedSystem { operator, rhs, solution: u, iterations: k, converged: true, residual_rel, history });
        }
    }
    Err(Error::NonConvergence { iterations: config.max_iter, history })
}

fn relative_residual(l: &SparseMatrix, u: &DVector<f64>, f: &DVector<f64>) -> f64 {
    let r: Vec<f64> = l.mul_vec(u.as_slice()).iter().zip(f.iter()).map(|(a, b)| a - b).collect();
    let fn_ = f.norm();
    if fn_ == 0.0 {
        norm2(&r)
    } else {
        norm2(&r) / fn_
    }
}

/// A solver for one fidelity that counts its invocations.
#[derive(Debug)]
pub struct FidelitySolver {
    model: FemModel,
    config: IterationConfig,
    calls: AtomicUsize,
}

impl FidelitySolver {
    pub fn new(problem: &'static ProblemSpec, grid: StructuredGrid, config: IterationConfig) -> Result<Self> {
        config.validate()?;
        Ok(FidelitySolver { model: FemModel::new(problem, grid)?, config, calls: AtomicUsize::new(0) })
    }

    pub fn model(&self) -> &FemModel {
        &self.model
    }

    pub fn config(&self) -> &IterationConfig {
        &self.config
    }

    pub fn solve(&self, mu: &[f64]) -> Result<LinearizedSystem> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        solve_model(&self.model, mu, &self.config)
    }

    /// Number of [`FidelitySolver::solve`] calls so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::get_problem;
    use proptest::prelude::*;

    fn cubic_on(n: usize, mu: [f64; 2], method: IterationMethod) -> LinearizedSystem {
        let p = get_problem("cubic").unwrap();
        let cfg = IterationConfig { method, ..Default::default() };
        solve_fidelity(p, &p.grid(n, n).unwrap(), &mu, &cfg).unwrap()
    }

    #[test]
    fn linear_problem_is_one_direct_solve() {
        let p = get_problem("wavespeed").unwrap();
        let g = p.grid(6, 6).unwrap();
        let sys = solve_fidelity(p, &g, &[2.0, 0.5], &IterationConfig::default()).unwrap();
        assert_eq!(sys.iterations, 1);
        assert!(sys.converged);
        let (l, f) = crate::fem::assemble(p, &g, &[2.0, 0.5], None).unwrap();
        assert_eq!(sys.operator.values(), l.values());
        assert_eq!(sys.rhs, f);
        assert!(sys.residual_rel <= 1e-12);
    }

    #[test]
    fn newton_contracts_quadratically() {
        let sys = cubic_on(8, [0.4, 0.7], IterationMethod::Newton);
        let h = &sys.history;
        assert!(sys.converged);
        let mut checked = 0;
        for w in h.windows(2) {
            if w[0] < 1e-2 && w[1] > 1e-13 {
                assert!(w[1].log10() / w[0].log10() >= 1.8, "history {h:?}");
                checked += 1;
            }
        }
        assert!(checked >= 1, "no step inside the basin: {h:?}");
    }

    #[test]
    fn picard_and_newton_agree() {
        let newton = cubic_on(8, [0.4, 0.7], IterationMethod::Newton);
        let picard = cubic_on(8, [0.4, 0.7], IterationMethod::Picard);
        let diff = (&newton.solution - &picard.solution).norm() / newton.solution.norm();
        assert!(diff <= 1e-9, "{diff}");
    }

    #[test]
    fn fixed_point_consistency() {
        let p = get_problem("nl-elliptic").unwrap();
        let model = FemModel::new(p, p.grid(8, 8).unwrap()).unwrap();
        let mu = [0.3, 0.8, 0.5];
        let sys = solve_model(&model, &mu, &IterationConfig::default()).unwrap();
        assert!(sys.residual_rel <= 1e-9);
        let (l, f) = model.assemble(&mu, Some(sys.solution.as_slice()), Linearization::Picard).unwrap();
        let again = solve_sparse(&l, f.as_slice()).unwrap();
        assert!((&again - &sys.solution).norm() / sys.solution.norm() <= 1e-9);
    }

    #[test]
    fn coupled_system_converges() {
        let p = get_problem("coupled").unwrap();
        let sys = solve_fidelity(p, &p.grid(8, 8).unwrap(), &[0.6, 0.9], &IterationConfig::default()).unwrap();
        assert_eq!(sys.solution.len(), 2 * 49);
        assert!(sys.solution.iter().all(|v| v.is_finite() && *v > 0.0));
    }

    #[test]
    fn non_convergence_carries_history() {
        let p = get_problem("nl-multiscale").unwrap();
        let cfg = IterationConfig { max_iter: 2, ..Default::default() };
        match solve_fidelity(p, &p.grid(6, 6).unwrap(), &[0.5, 0.5, 0.5], &cfg) {
            Err(Error::NonConvergence { iterations, history }) => {
                assert_eq!(iterations, 2);
                assert_eq!(history.len(), 2);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn counter_tracks_calls() {
        let p = get_problem("high-contrast").unwrap();
        let s = FidelitySolver::new(p, p.grid(4, 4).unwrap(), IterationConfig::default()).unwrap();
        s.solve(&[0.0, 0.0, 0.0]).unwrap();
        s.solve(&[0.5, 0.0, 0.0]).unwrap();
        assert_eq!(s.calls(), 2);
    }

    #[test]
    fn config_validation() {
        assert!(IterationConfig { tol_rel: 0.0, ..Default::default() }.validate().is_err());
        assert!(IterationConfig { max_iter: 0, ..Default::default() }.validate().is_err());
        assert_eq!("Newton".parse::<IterationMethod>().unwrap(), IterationMethod::Newton);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn newton_picard_agree_at_random_parameters(m1 in 0.4f64..5.0, m2 in 0.4f64..2.0) {
            let newton = cubic_on(6, [m1, m2], IterationMethod::Newton);
            let picard = cubic_on(6, [m1, m2], IterationMethod::Picard);
            let diff = (&newton.solution - &picard.solution).norm() / newton.solution.norm();
            prop_assert!(diff <= 1e-9, "{}", diff);
        }
    }
}
