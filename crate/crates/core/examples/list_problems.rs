//! Prints the built-in problem registry.

use bifirom::problems::registry;

fn main() {
    for p in registry() {
        let domain: Vec<String> = p.param_domain.iter().map(|(lo, hi)| format!("[{lo}, {hi}]")).collect();
        println!("{:<14} fields={} linear={:<5} mu in {}", p.id, p.n_fields, p.is_linear(), domain.join(" x "));
        println!("    {}", p.summary);
    }
}
