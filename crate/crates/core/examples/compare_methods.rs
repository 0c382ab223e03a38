//! Proposed vs reference bi-fidelity vs interpolated coarse solution, with a
//! log10 error histogram. Takes a run configuration path.
//!
//! `cargo run --release --example compare_methods -- crates/core/configs/nl-multiscale-desk.toml`

use bifirom::bench::{compare, histogram, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/nl-multiscale-desk.toml").into());
    let config = RunConfig::from_path(&path)?;
    let table = compare(&config, None)?;

    println!("{} with N_rb = {}, {} test points", table.problem, table.n_rb, table.rows.len());
    println!("mean   proposed {:.3e}  reference {:.3e}  coarse {:.3e}", table.means.e_u, table.means.e_u_ref, table.means.e_u_lf);
    println!("median proposed {:.3e}  reference {:.3e}  coarse {:.3e}", table.medians.e_u, table.medians.e_u_ref, table.medians.e_u_lf);
    for (i, why) in &table.excluded {
        println!("excluded test point {i}: {why}");
    }

    let h = histogram(&table);
    println!("\nlog10 bin      proposed reference coarse");
    for i in 0..h.edges.len() {
        println!("[{:>5.1}, {:>5.1})  {:>8} {:>9} {:>6}", h.edges[i], h.edges[i] + 0.5, h.proposed[i], h.reference[i], h.low_fidelity[i]);
    }
    Ok(())
}
