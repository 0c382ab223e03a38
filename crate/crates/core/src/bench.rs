//! Experiment drivers: run configuration files, benchmark sweeps over basis
//! sizes, method comparisons, error histograms and the FEM convergence table.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::fem_error_norms;
use crate::grid::GridSize;
use crate::nonlinear::{solve_fidelity, IterationConfig, IterationMethod};
use crate::offline::{build_offline, OfflineConfig, RomArtifact};
use crate::online::{evaluate_many, hf_solver, ErrorRow, ErrorTable};
use crate::problems::get_problem;
use crate::snapshots::{ParameterSet, Provenance};

/// Environment variable that overrides the worker count.
pub const THREADS_ENV: &str = "BIFIROM_THREADS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub grids: GridsSection,
    pub sampling: SamplingSection,
    pub rom: RomSection,
    #[serde(default)]
    pub iteration: IterationSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridsSection {
    pub hf: String,
    pub lf: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    pub n_p: usize,
    pub test_n: usize,
    pub seed_train: u64,
    pub seed_test: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RomSection {
    #[serde(rename = "N_rb")]
    pub n_rb: usize,
    #[serde(rename = "n_L")]
    pub n_l: usize,
    pub n_f: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IterationSection {
    pub method: String,
    pub tol_rel: f64,
    pub max_iter: usize,
}

impl Default for IterationSection {
    fn default() -> Self {
        let d = IterationConfig::default();
        IterationSection { method: "auto".into(), tol_rel: d.tol_rel, max_iter: d.max_iter }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Worker threads; 0 means one per logical core.
    pub threads: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out"), threads: 0 }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.offline()?;
        if config.sampling.test_n == 0 {
            return Err(Error::Config("test_n must be at least 1".into()));
        }
        Ok(config)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn iteration(&self) -> Result<IterationConfig> {
        let method: IterationMethod = self.iteration.method.parse()?;
        let c = IterationConfig { method, tol_rel: self.iteration.tol_rel, max_iter: self.iteration.max_iter, ..Default::default() };
        c.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(c)
    }

    pub fn offline(&self) -> Result<OfflineConfig> {
        let iteration = self.iteration()?;
        let config = OfflineConfig {
            problem: self.problem.id.clone(),
            hf_grid: self.grids.hf.parse::<GridSize>()?,
            lf_grid: self.grids.lf.parse::<GridSize>()?,
            n_p: self.sampling.n_p,
            n_rb: self.rom.n_rb,
            n_l: self.rom.n_l,
            n_f: self.rom.n_f,
            seed: self.sampling.seed_train,
            hf_iteration: iteration.clone(),
            lf_iteration: iteration,
        };
        config.validate().map_err(|e| match e {
            Error::UnknownProblem { .. } | Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })?;
        Ok(config)
    }

    pub fn test_set(&self) -> Result<ParameterSet> {
        let problem = get_problem(&self.problem.id)?;
        Ok(ParameterSet::sample(problem, self.sampling.test_n, self.sampling.seed_test, Provenance::Test))
    }

    /// Worker count: the environment override, then the config, then all cores.
    pub fn threads(&self) -> usize {
        std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(self.output.threads)
    }
}

/// Runs `f` on a dedicated pool of `threads` workers (0 = rayon default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?)
}

fn error_header(dim: usize) -> Vec<String> {
    let mut h = vec!["index".to_string()];
    h.extend((1..=dim).map(|i| format!("mu_{i}")));
    h.extend(["N_rb", "e_u", "e_u_ref", "e_u_lf", "t_h", "t_l", "t_online", "t_ref"].map(String::from));
    h
}

/// Writes per-point rows of one or more tables (e.g. one per `N_rb`).
pub fn emit_tables(tables: &[ErrorTable], path: impl AsRef<Path>) -> Result<()> {
    let first = tables.first().ok_or_else(|| Error::Contract("no tables to write".into()))?;
    let dim = get_problem(&first.problem)?.param_dim();
    let mut w = writer(path.as_ref())?;
    w.write_record(error_header(dim))?;
    for t in tables {
        for r in &t.rows {
            let mut rec = vec![r.index.to_string()];
            rec.extend(r.mu.iter().map(|&m| fmt(m)));
            rec.push(t.n_rb.to_string());
            rec.extend([r.e_u, r.e_u_ref, r.e_u_lf, r.t_h, r.t_l, r.t_online, r.t_ref].map(fmt));
            w.write_record(rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(table: &ErrorTable, path: impl AsRef<Path>) -> Result<()> {
    emit_tables(std::slice::from_ref(table), path)
}

/// Reads rows written by [`emit_tables`] back, returning `(N_rb, row)` pairs.
pub fn read_error_csv(path: impl AsRef<Path>) -> Result<Vec<(usize, ErrorRow)>> {
    let mut r = csv::Reader::from_path(path)?;
    let dim = r.headers()?.iter().filter(|h| h.starts_with("mu_")).count();
    let parse_f = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("`{s}`: {e}")));
    let parse_u = |s: &str| s.parse::<usize>().map_err(|e| Error::Format(format!("`{s}`: {e}")));
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let mu = (1..=dim).map(|i| parse_f(&rec[i])).collect::<Result<Vec<_>>>()?;
        let v = |j: usize| parse_f(&rec[dim + 2 + j]);
        out.push((
            parse_u(&rec[dim + 1])?,
            ErrorRow {
                index: parse_u(&rec[0])?,
                mu,
                e_u: v(0)?,
                e_u_ref: v(1)?,
                e_u_lf: v(2)?,
                t_h: v(3)?,
                t_l: v(4)?,
                t_online: v(5)?,
                t_ref: v(6)?,
            },
        ));
    }
    Ok(out)
}

pub fn emit_summary(tables: &[ErrorTable], path: impl AsRef<Path>) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record([
        "N_rb", "n_L", "n_f", "rows", "excluded", "mean_e_u", "mean_e_u_ref", "mean_e_u_lf", "median_e_u", "median_e_u_ref",
        "mean_t_h", "mean_t_l", "mean_t_online", "median_t_h", "median_t_online", "speedup_mean", "speedup_median",
    ])?;
    for t in tables {
        let mut rec = vec![t.n_rb.to_string(), t.n_l.to_string(), t.n_f.to_string(), t.rows.len().to_string(), t.excluded.len().to_string()];
        rec.extend(
            [
                t.means.e_u,
                t.means.e_u_ref,
                t.means.e_u_lf,
                t.medians.e_u,
                t.medians.e_u_ref,
                t.means.t_h,
                t.means.t_l,
                t.means.t_online,
                t.medians.t_h,
                t.medians.t_online,
                t.speedup_mean(),
                t.speedup_median(),
            ]
            .map(fmt),
        );
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Counts of log10 errors in bins of width 0.5.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    /// Lower edge of each bin, in log10 units.
    pub edges: Vec<f64>,
    pub proposed: Vec<usize>,
    pub reference: Vec<usize>,
    pub low_fidelity: Vec<usize>,
}

pub const HIST_BIN_WIDTH: f64 = 0.5;

pub fn histogram(table: &ErrorTable) -> Histogram {
    let log = |e: f64| e.max(1e-300).log10();
    let all: Vec<f64> = table.rows.iter().flat_map(|r| [log(r.e_u), log(r.e_u_ref), log(r.e_u_lf)]).collect();
    if all.is_empty() {
        return Histogram { edges: vec![], proposed: vec![], reference: vec![], low_fidelity: vec![] };
    }
    let lo = (all.iter().cloned().fold(f64::INFINITY, f64::min) / HIST_BIN_WIDTH).floor() as i64;
    let hi = (all.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / HIST_BIN_WIDTH).floor() as i64;
    let n = (hi - lo + 1) as usize;
    let bin = |e: f64| ((log(e) / HIST_BIN_WIDTH).floor() as i64 - lo) as usize;
    let mut h = Histogram {
        edges: (0..n).map(|i| (lo + i as i64) as f64 * HIST_BIN_WIDTH).collect(),
        proposed: vec![0; n],
        reference: vec![0; n],
        low_fidelity: vec![0; n],
    };
    for r in &table.rows {
        h.proposed[bin(r.e_u)] += 1;
        h.reference[bin(r.e_u_ref)] += 1;
        h.low_fidelity[bin(r.e_u_lf)] += 1;
    }
    h
}

pub fn emit_histogram(h: &Histogram, path: impl AsRef<Path>) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["log10_lo", "log10_hi", "proposed", "reference", "low_fidelity"])?;
    for i in 0..h.edges.len() {
        w.write_record([
            fmt(h.edges[i]),
            fmt(h.edges[i] + HIST_BIN_WIDTH),
            h.proposed[i].to_string(),
            h.reference[i].to_string(),
            h.low_fidelity[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Result of a benchmark sweep.
pub struct BenchOutcome {
    pub artifact: RomArtifact,
    pub tables: Vec<ErrorTable>,
}

/// Builds once at the largest requested `N_rb`, evaluates every truncation on
/// the test set and writes `errors.csv` and `summary.csv` when `out_dir` is given.
pub fn bench(config: &RunConfig, nrb_list: Option<&[usize]>, out_dir: Option<&Path>) -> Result<BenchOutcome> {
    let list: Vec<usize> = nrb_list.map(<[usize]>::to_vec).unwrap_or_else(|| vec![config.rom.n_rb]);
    let max = *list.iter().max().ok_or_else(|| Error::Config("empty N_rb list".into()))?;
    let mut offline = config.offline()?;
    offline.n_rb = max;
    offline.validate().map_err(|e| Error::Config(e.to_string()))?;
    let test = config.test_set()?;
    with_threads(config.threads(), || {
        let build = build_offline(&offline)?;
        log::info!("offline build done: N_rb = {}, {} HF runs", build.artifact.n_rb(), build.artifact.meta.hf_runs);
        let truncated = list.iter().map(|&n| build.artifact.truncate(n)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<&RomArtifact> = truncated.iter().collect();
        let hf = hf_solver(&build.artifact)?;
        let tables = evaluate_many(&refs, &hf, &test)?;
        for t in &tables {
            log::info!(
                "N_rb = {:>3}: mean e_u {:.3e}, reference {:.3e}, low-fidelity {:.3e}, speedup {:.1}",
                t.n_rb,
                t.means.e_u,
                t.means.e_u_ref,
                t.means.e_u_lf,
                t.speedup_median()
            );
        }
        if let Some(dir) = out_dir {
            emit_tables(&tables, dir.join("errors.csv"))?;
            emit_summary(&tables, dir.join("summary.csv"))?;
        }
        Ok(BenchOutcome { artifact: build.artifact, tables })
    })?
}

/// Proposed vs reference vs low fidelity at the configured `N_rb`; writes
/// `compare.csv` and `hist.csv` when `out_dir` is given.
pub fn compare(config: &RunConfig, out_dir: Option<&Path>) -> Result<ErrorTable> {
    let outcome = bench(config, None, None)?;
    let table = outcome.tables.into_iter().next().expect("one table per N_rb");
    if let Some(dir) = out_dir {
        emit_csv(&table, dir.join("compare.csv"))?;
        emit_histogram(&histogram(&table), dir.join("hist.csv"))?;
    }
    Ok(table)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FemVerifyRow {
    pub n: usize,
    pub h: f64,
    pub l2_rel: f64,
    pub h1_rel: f64,
    /// Observed order against the previous row.
    pub l2_order: Option<f64>,
    pub h1_order: Option<f64>,
}

/// Manufactured-solution convergence of the Laplace solver on `n × n` grids.
pub fn fem_verify(sizes: &[usize]) -> Result<Vec<FemVerifyRow>> {
    let problem = get_problem("manufactured")?;
    let mut rows: Vec<FemVerifyRow> = Vec::new();
    for &n in sizes {
        let grid = problem.grid(n, n)?;
        let sys = solve_fidelity(problem, &grid, &[], &IterationConfig::default())?;
        let exact = |x: f64, y: f64| problem.exact_solution(x, y).expect("manufactured problem has an exact solution");
        let (l2_rel, h1_rel) = fem_error_norms(sys.solution.as_slice(), exact, &grid)?;
        let h = grid.hx();
        let order = |prev: f64, cur: f64, prev_h: f64| (prev / cur).ln() / (prev_h / h).ln();
        let (l2_order, h1_order) = match rows.last() {
            Some(p) => (Some(order(p.l2_rel, l2_rel, p.h)), Some(order(p.h1_rel, h1_rel, p.h))),
            None => (None, None),
        };
        rows.push(FemVerifyRow { n, h, l2_rel, h1_rel, l2_order, h1_order });
    }
    Ok(rows)
}
