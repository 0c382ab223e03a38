//! Command-line front end used by the `bifirom` binary.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 for
//! numerical failures.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::bench::{bench, compare, fem_verify, with_threads, RunConfig};
use crate::error::{Error, Result};
use crate::offline::build_artifact;
use crate::online::online_solve;
use crate::problems::registry;
use crate::store;

#[derive(Debug, Parser)]
#[command(name = "bifirom", version, about = "Bi-fidelity reduced-basis models for parametric PDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build an artifact from a run configuration and save it.
    Offline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer one parameter query from a saved artifact.
    Online {
        #[arg(long)]
        artifact: PathBuf,
        /// Comma-separated parameter coordinates.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        mu: Vec<f64>,
        /// Write the reconstructed solution as raw little-endian f64.
        #[arg(long)]
        dump_solution: Option<PathBuf>,
    },
    /// Sweep over basis sizes; writes errors.csv and summary.csv.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        nrb_list: Option<Vec<usize>>,
    },
    /// Proposed vs reference vs low fidelity; writes compare.csv and hist.csv.
    Compare {
        #[arg(long)]
        config: PathBuf,
    },
    /// Manufactured-solution convergence table.
    FemVerify {
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
        sizes: Vec<usize>,
    },
    /// List the registered problems.
    ListProblems,
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_to(argv, &mut std::io::stdout().lock())
}

/// [`run`] with the report written to `out` instead of stdout.
pub fn run_to<I, T>(argv: I, out: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() { 2 } else { 1 }
        }
    }
}

fn output_dir(config: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&config.output.dir)?;
    Ok(&config.output.dir)
}

fn join(v: impl IntoIterator<Item = f64>) -> String {
    v.into_iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(",")
}

fn execute(command: Command, out: &mut impl Write) -> Result<()> {
    match command {
        Command::Offline { config, out: path } => {
            let config = RunConfig::from_path(&config)?;
            let offline = config.offline()?;
            let artifact = with_threads(config.threads(), || build_artifact(&offline))??;
            store::save(&artifact, &path)?;
            writeln!(out, "artifact: {}", path.display())?;
            writeln!(out, "N_rb: {}", artifact.n_rb())?;
            writeln!(out, "hf_runs: {}", artifact.meta.hf_runs)?;
            writeln!(out, "build_seconds: {:.3}", artifact.meta.timings.total)?;
        }
        Command::Online { artifact, mu, dump_solution } => {
            let artifact = store::load(&artifact)?;
            let r = online_solve(&artifact, &mu)?;
            writeln!(out, "problem: {}", artifact.meta.problem)?;
            writeln!(out, "mu: {}", join(r.mu.iter().copied()))?;
            writeln!(out, "N_rb: {}", artifact.n_rb())?;
            writeln!(out, "n_L: {}", artifact.n_l())?;
            writeln!(out, "n_f: {}", artifact.n_f())?;
            writeln!(out, "lf_iterations: {}", r.lf_iterations)?;
            writeln!(out, "a_l: {}", join(r.a_l.iter().copied()))?;
            writeln!(out, "b_l: {}", join(r.b_l.iter().copied()))?;
            writeln!(out, "u_rb: {}", join(r.u_rb.iter().copied()))?;
            writeln!(out, "ls_residual_operator: {:.6e}", r.ls_residuals.0)?;
            writeln!(out, "ls_residual_rhs: {:.6e}", r.ls_residuals.1)?;
            writeln!(out, "reduced_residual: {:.6e}", r.reduced_residual)?;
            writeln!(out, "condition_estimate: {:.6e}", r.condition)?;
            writeln!(out, "t_lf_solve: {:.6e}", r.timings.lf_solve)?;
            writeln!(out, "t_least_squares: {:.6e}", r.timings.least_squares)?;
            writeln!(out, "t_assembly: {:.6e}", r.timings.assembly)?;
            writeln!(out, "t_reduced_solve: {:.6e}", r.timings.reduced_solve)?;
            writeln!(out, "t_reconstruction: {:.6e}", r.timings.reconstruction)?;
            writeln!(out, "online_flops: {}", r.flops.total())?;
            if let Some(path) = dump_solution {
                let bytes: Vec<u8> = r.u_r.iter().flat_map(|v| v.to_le_bytes()).collect();
                fs::write(&path, bytes)?;
                writeln!(out, "solution: {}", path.display())?;
            }
        }
        Command::Bench { config, nrb_list } => {
            let config = RunConfig::from_path(&config)?;
            let dir = output_dir(&config)?;
            let outcome = bench(&config, nrb_list.as_deref(), Some(dir))?;
            writeln!(out, "N_rb,mean_e_u,mean_e_u_ref,mean_e_u_lf,speedup_median")?;
            for t in &outcome.tables {
                writeln!(out, "{},{:.3e},{:.3e},{:.3e},{:.1}", t.n_rb, t.means.e_u, t.means.e_u_ref, t.means.e_u_lf, t.speedup_median())?;
            }
            writeln!(out, "wrote {}", dir.join("errors.csv").display())?;
            writeln!(out, "wrote {}", dir.join("summary.csv").display())?;
        }
        Command::Compare { config } => {
            let config = RunConfig::from_path(&config)?;
            let dir = output_dir(&config)?;
            let t = compare(&config, Some(dir))?;
            writeln!(out, "N_rb: {}", t.n_rb)?;
            writeln!(out, "mean_e_u_proposed: {:.6e}", t.means.e_u)?;
            writeln!(out, "mean_e_u_reference: {:.6e}", t.means.e_u_ref)?;
            writeln!(out, "mean_e_u_low_fidelity: {:.6e}", t.means.e_u_lf)?;
            writeln!(out, "excluded: {}", t.excluded.len())?;
            writeln!(out, "wrote {}", dir.join("compare.csv").display())?;
            writeln!(out, "wrote {}", dir.join("hist.csv").display())?;
        }
        Command::FemVerify { sizes } => {
            if sizes.is_empty() || sizes.contains(&0) {
                return Err(Error::Config("grid sizes must be positive".into()));
            }
            writeln!(out, "{:>6} {:>12} {:>14} {:>14} {:>8} {:>8}", "n", "h", "l2_rel", "h1_rel", "l2_ord", "h1_ord")?;
            for r in fem_verify(&sizes)? {
                let ord = |o: Option<f64>| o.map_or("-".to_string(), |v| format!("{v:.3}"));
                writeln!(
                    out,
                    "{:>6} {:>12.4e} {:>14.6e} {:>14.6e} {:>8} {:>8}",
                    r.n,
                    r.h,
                    r.l2_rel,
                    r.h1_rel,
                    ord(r.l2_order),
                    ord(r.h1_order)
                )?;
            }
        }
        Command::ListProblems => {
            for p in registry() {
                let domain: Vec<String> = p.param_domain.iter().map(|(lo, hi)| format!("[{lo}, {hi}]")).collect();
                writeln!(out, "{:<14} fields={} method={:?} params={} {}", p.id, p.n_fields, p.nonlinearity, domain.join("x"), p.summary)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run<const N: usize>(argv: [&str; N]) -> i32 {
        run_to(argv, &mut Vec::new())
    }

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(run(["bifirom", "frobnicate"]), 1);
        assert_eq!(run(["bifirom", "offline", "--config", "/nonexistent.toml", "--out", "/tmp/x"]), 1);
        assert_eq!(run(["bifirom", "list-problems"]), 0);
    }

    #[test]
    fn offline_then_online() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        fs::write(
            &cfg,
            "[problem]\nid = \"high-contrast\"\n[grids]\nhf = \"12x12\"\nlf = \"4x4\"\n[sampling]\nn_p = 12\ntest_n = 2\nseed_train = 3\nseed_test = 4\n[rom]\nN_rb = 3\nn_L = 3\nn_f = 1\n",
        )
        .unwrap();
        let art = dir.path().join("a.bfrm");
        let sol = dir.path().join("u.bin");
        assert_eq!(run(["bifirom", "offline", "--config", cfg.to_str().unwrap(), "--out", art.to_str().unwrap()]), 0);
        let code = run([
            "bifirom",
            "online",
            "--artifact",
            art.to_str().unwrap(),
            "--mu",
            "-0.5,0.25,0.1",
            "--dump-solution",
            sol.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        assert_eq!(fs::metadata(&sol).unwrap().len(), 121 * 8);
        // Outside the parameter box: a usage-class error.
        assert_eq!(run(["bifirom", "online", "--artifact", art.to_str().unwrap(), "--mu", "5,0,0"]), 1);
    }
}
