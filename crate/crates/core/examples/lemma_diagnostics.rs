//! Checks the interpolative-decomposition bounds on the coarse snapshot
//! matrices chosen during an offline build.

use bifirom::offline::{build_offline, lemma_diagnostics, OfflineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (id, n_l, n_f) in [("high-contrast", 5, 1), ("nl-elliptic", 12, 2), ("cubic", 10, 8)] {
        let build = build_offline(&OfflineConfig::new(id, (16, 16), (4, 4), 64, 6, n_l, n_f))?;
        let a = &build.artifact;
        let report = lemma_diagnostics(&build.lf_snapshots, a.gamma_l.indices.as_deref().unwrap(), a.gamma_f.indices.as_deref().unwrap());
        println!("{id}");
        for (name, s) in [("operator", &report.operator), ("rhs", &report.rhs)] {
            println!(
                "  {name:<8} k={:<2} |A|={:.2e} (factor {:.2e})  residual {:.2e} <= {:.2e}: {}",
                s.k, s.coeff_norm, s.factor, s.residual, s.bound, s.residual_bound_holds
            );
        }
        for v in report.violations() {
            println!("  note: {v}");
        }
    }
    Ok(())
}
