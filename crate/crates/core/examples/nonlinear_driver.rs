//! Picard and Newton on the cubic-reaction problem, showing convergence histories.

use bifirom::nonlinear::{FidelitySolver, IterationConfig, IterationMethod};
use bifirom::problems::get_problem;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = get_problem("cubic")?;
    let grid = problem.grid(64, 64)?;
    let mu = [0.4, 0.6];
    for method in [IterationMethod::Picard, IterationMethod::Newton] {
        let config = IterationConfig { method, tol_rel: 1e-12, max_iter: 100, ..Default::default() };
        let solver = FidelitySolver::new(problem, grid, config)?;
        let sys = solver.solve(&mu)?;
        println!("{method:?}: {} iterations, converged {}, residual {:.2e}", sys.iterations, sys.converged, sys.residual_rel);
        let steps: Vec<String> = sys.history.iter().map(|s| format!("{s:.1e}")).collect();
        println!("  steps {}", steps.join(" "));
    }
    Ok(())
}
