//! Online stage: answer parameter queries from an artifact and check them
//! against the fine solver.

use bifirom::offline::{build_artifact, OfflineConfig};
use bifirom::online::{hf_solver, relative_error, OnlineSolver};
use std::time::Instant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let artifact = build_artifact(&OfflineConfig::new("wavespeed", (64, 64), (8, 8), 100, 12, 3, 1))?;
    let online = OnlineSolver::new(&artifact)?;
    let fine = hf_solver(&artifact)?;

    for mu in [[1.0, 0.2], [2.5, 1.1], [3.9, 1.9]] {
        let report = online.solve(&mu)?;
        let t = Instant::now();
        let u_h = fine.solve(&mu)?.solution;
        let t_h = t.elapsed().as_secs_f64();
        println!(
            "mu = {mu:?}: e_u = {:.3e}, online {:.1} us vs fine {:.1} us, {} flops, cond {:.2e}",
            relative_error(&report.u_r, &u_h)?,
            report.timings.total() * 1e6,
            t_h * 1e6,
            report.flops.total(),
            report.condition,
        );
        println!("    operator coefficients a_l = {:.4?}", report.a_l.as_slice());
    }
    Ok(())
}
