//! Convergence of the Q1 solver against a manufactured solution.
//!
//! Run with `cargo run --release --example fem_verify -- 8 16 32 64`.

use bifirom::bench::fem_verify;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut sizes: Vec<usize> = std::env::args().skip(1).map(|s| s.parse()).collect::<Result<_, _>>()?;
    if sizes.is_empty() {
        sizes = vec![8, 16, 32, 64];
    }
    println!("{:>5} {:>12} {:>12} {:>7} {:>12} {:>7}", "n", "h", "L2 rel", "order", "H1 rel", "order");
    for row in fem_verify(&sizes)? {
        let o = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.2}"));
        println!("{:>5} {:>12.4e} {:>12.4e} {:>7} {:>12.4e} {:>7}", row.n, row.h, row.l2_rel, o(row.l2_order), row.h1_rel, o(row.h1_order));
    }
    Ok(())
}
