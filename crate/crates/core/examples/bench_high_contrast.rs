//! Error and speedup versus basis size on the high-contrast channel problem.
//! CSV tables go to `out/bench-high-contrast/`.

use bifirom::bench::{bench, RunConfig};
use std::path::Path;

const CONFIG: &str = r#"
[problem]
id = "high-contrast"
[grids]
hf = "64x64"
lf = "4x4"
[sampling]
n_p = 128
test_n = 64
seed_train = 20240601
seed_test = 20240602
[rom]
N_rb = 8
n_L = 5
n_f = 1
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = RunConfig::from_toml(CONFIG)?;
    let dir = Path::new("out/bench-high-contrast");
    std::fs::create_dir_all(dir)?;
    let outcome = bench(&config, Some(&[1, 2, 3, 4, 5, 6, 7, 8]), Some(dir))?;

    println!("{:>4} {:>11} {:>11} {:>11} {:>9}", "N_rb", "proposed", "reference", "coarse", "speedup");
    for t in &outcome.tables {
        let m = &t.means;
        println!("{:>4} {:>11.3e} {:>11.3e} {:>11.3e} {:>9.1}", t.n_rb, m.e_u, m.e_u_ref, m.e_u_lf, t.speedup_median());
    }
    println!("fine solves during the build: {}", outcome.artifact.meta.hf_runs);
    Ok(())
}
