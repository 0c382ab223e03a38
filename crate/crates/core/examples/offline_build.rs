//! Offline stage: sample the coarse model, pick the fine runs, save an artifact.
//!
//! `cargo run --release --example offline_build -- wavespeed.bfrm`

use bifirom::offline::{build_offline, OfflineConfig};
use bifirom::store;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "wavespeed.bfrm".into());

    // 32x32 fine grid, 8x8 coarse grid, 100 candidates, N_rb = 12, n_L = 3, n_f = 1.
    let config = OfflineConfig::new("wavespeed", (32, 32), (8, 8), 100, 12, 3, 1);
    let build = build_offline(&config)?;
    let a = &build.artifact;

    println!("problem      {}", a.meta.problem);
    println!("N_h          {}", a.n_h());
    println!("N_rb         {} (requested {})", a.n_rb(), a.meta.n_rb_requested);
    println!("fine solves  {}", a.meta.hf_runs);
    println!("gamma_u      {:?}", a.gamma_u.indices);
    println!("gamma_l      {:?}", a.gamma_l.indices);
    println!("gamma_f      {:?}", a.gamma_f.indices);
    println!("timings      {:?}", a.meta.timings);

    store::save(a, &out)?;
    println!("saved to {out} ({} bytes)", std::fs::metadata(&out)?.len());
    Ok(())
}
