//! Offline stage: low-fidelity sweep, point selection, the few high-fidelity
//! runs and every parameter-independent reduced object.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSize, StructuredGrid};
use crate::linalg::{gram_schmidt_kept, least_squares_qr, pivoted_cholesky_select, SelectionResult};
use crate::nonlinear::{FidelitySolver, IterationConfig, LinearizedSystem};
use crate::problems::{get_problem, ProblemSpec};
use crate::snapshots::{dedup_union, sweep_systems, sweep_with, Fidelity, ParameterSet, Provenance, SnapshotSet};
use crate::sparse::SparsityPattern;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OfflineConfig {
    pub problem: String,
    pub hf_grid: GridSize,
    pub lf_grid: GridSize,
    pub n_p: usize,
    pub n_rb: usize,
    pub n_l: usize,
    pub n_f: usize,
    pub seed: u64,
    pub hf_iteration: IterationConfig,
    pub lf_iteration: IterationConfig,
}

impl OfflineConfig {
    /// Defaults for everything but the problem, grids and counts.
    pub fn new(problem: &str, hf: (usize, usize), lf: (usize, usize), n_p: usize, n_rb: usize, n_l: usize, n_f: usize) -> Self {
        OfflineConfig {
            problem: problem.to_string(),
            hf_grid: GridSize { nx: hf.0, ny: hf.1 },
            lf_grid: GridSize { nx: lf.0, ny: lf.1 },
            n_p,
            n_rb,
            n_l,
            n_f,
            seed: 20_240_601,
            hf_iteration: IterationConfig::default(),
            lf_iteration: IterationConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(&'static ProblemSpec, StructuredGrid, StructuredGrid)> {
        let problem = get_problem(&self.problem)?;
        let hf = self.hf_grid.on(problem.domain)?;
        let lf = self.lf_grid.on(problem.domain)?;
        for (name, v) in [("n_p", self.n_p), ("N_rb", self.n_rb), ("n_L", self.n_l), ("n_f", self.n_f)] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, v) in [("N_rb", self.n_rb), ("n_L", self.n_l), ("n_f", self.n_f)] {
            if v > self.n_p {
                return Err(Error::Config(format!("{name} = {v} exceeds n_p = {}", self.n_p)));
            }
        }
        if lf.n_interior() >= hf.n_interior() {
            return Err(Error::Config(format!("low-fidelity grid {lf} is not coarser than {hf}")));
        }
        self.hf_iteration.validate()?;
        self.lf_iteration.validate()?;
        Ok((problem, hf, lf))
    }
}

/// Wall-clock seconds per offline stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub lf_sweep: f64,
    pub selection: f64,
    pub hf_runs: f64,
    pub projection: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildMeta {
    pub tool_version: String,
    pub problem: String,
    pub hf_grid: StructuredGrid,
    pub lf_grid: StructuredGrid,
    pub n_p: usize,
    pub n_rb_requested: usize,
    pub n_l: usize,
    pub n_f: usize,
    pub seed: u64,
    pub hf_iteration: IterationConfig,
    pub lf_iteration: IterationConfig,
    /// Fine-grid solves performed during the build.
    pub hf_runs: usize,
    /// Positions in γ_u whose snapshots survived Gram-Schmidt.
    pub kept_columns: Vec<usize>,
    pub rank_deficient: BTreeMap<String, bool>,
    pub timings: StageTimings,
}

/// Everything the online stage needs.
#[derive(Clone, Debug)]
pub struct RomArtifact {
    pub meta: BuildMeta,
    /// `N_h × N_rb` orthonormal basis.
    pub q: DMatrix<f64>,
    /// `Qᵀ L_h(μ_j^L) Q`, one per operator point.
    pub l_rb_basis: Vec<DMatrix<f64>>,
    /// `Qᵀ f_h(μ_j^f)`, one per rhs point.
    pub f_rb_basis: Vec<DVector<f64>>,
    pub g_l: DMatrix<f64>,
    pub g_f: DMatrix<f64>,
    /// Vectorized low-fidelity operators at γ_L, `nnz_l × n_L`.
    pub llow_gamma: DMatrix<f64>,
    /// Low-fidelity right-hand sides at γ_f, `N_l × n_f`.
    pub flow_gamma: DMatrix<f64>,
    pub gamma_u: ParameterSet,
    pub gamma_l: ParameterSet,
    pub gamma_f: ParameterSet,
    pub lf_pattern: Arc<SparsityPattern>,
    /// Low-fidelity solutions at γ_u (reference method).
    pub ref_lf_u: DMatrix<f64>,
    /// `Qᵀ U_h(γ_u)`, so the reference method can rebuild HF snapshots as `Q C`.
    pub ref_hf_coeffs: DMatrix<f64>,
}

impl RomArtifact {
    pub fn problem(&self) -> Result<&'static ProblemSpec> {
        get_problem(&self.meta.problem)
    }

    /// Effective reduced dimension (after any Gram-Schmidt drops).
    pub fn n_rb(&self) -> usize {
        self.q.ncols()
    }

    pub fn n_h(&self) -> usize {
        self.q.nrows()
    }

    pub fn n_l(&self) -> usize {
        self.l_rb_basis.len()
    }

    pub fn n_f(&self) -> usize {
        self.f_rb_basis.len()
    }

    /// Checks shapes, orthonormality of `Q` and the stored Gramians.
    pub fn validate(&self) -> Result<()> {
        let problem = self.problem()?;
        let nf = problem.n_fields;
        let (n_h, k) = self.q.shape();
        let lf_dofs = self.meta.lf_grid.n_interior() * nf;
        let shape_err = |what: &str| Error::Corrupt(format!("inconsistent shape of {what}"));
        if n_h != self.meta.hf_grid.n_interior() * nf || k == 0 {
            return Err(shape_err("Q"));
        }
        if self.l_rb_basis.iter().any(|m| m.shape() != (k, k)) || self.f_rb_basis.iter().any(|v| v.len() != k) {
            return Err(shape_err("reduced bases"));
        }
        if self.l_rb_basis.len() != self.meta.n_l || self.f_rb_basis.len() != self.meta.n_f {
            return Err(shape_err("reduced basis counts"));
        }
        if self.llow_gamma.shape() != (self.lf_pattern.nnz(), self.n_l()) || self.flow_gamma.shape() != (lf_dofs, self.n_f()) {
            return Err(shape_err("low-fidelity bases"));
        }
        if self.lf_pattern.n_rows() != lf_dofs {
            return Err(shape_err("low-fidelity pattern"));
        }
        if self.gamma_u.len() != self.ref_lf_u.ncols() || self.ref_hf_coeffs.shape() != (k, self.gamma_u.len()) {
            return Err(shape_err("reference data"));
        }
        if self.gamma_l.len() != self.n_l() || self.gamma_f.len() != self.n_f() {
            return Err(shape_err("selected parameter sets"));
        }
        let ortho = (self.q.tr_mul(&self.q) - DMatrix::identity(k, k)).amax();
        if !(ortho <= 1e-10) {
            return Err(Error::Corrupt(format!("QᵀQ deviates from identity by {ortho:e}")));
        }
        for (name, g, basis) in [("G_L", &self.g_l, &self.llow_gamma), ("G_F", &self.g_f, &self.flow_gamma)] {
            let recomputed = basis.tr_mul(basis);
            let scale = recomputed.amax().max(f64::MIN_POSITIVE);
            let dev = (g - &recomputed).amax() / scale;
            if !(dev <= 1e-12) {
                return Err(Error::Corrupt(format!("{name} disagrees with its factors by {dev:e}")));
            }
        }
        Ok(())
    }

    /// The artifact that a build with a smaller `N_rb` would produce.
    ///
    /// Pivot selections are nested and Gram-Schmidt is sequential, so the
    /// leading columns and blocks are exactly what a direct build computes.
    pub fn truncate(&self, n_rb: usize) -> Result<RomArtifact> {
        if n_rb == 0 || n_rb > self.gamma_u.len() {
            return Err(Error::Contract(format!("cannot truncate {} selected points to {n_rb}", self.gamma_u.len())));
        }
        let k = self.meta.kept_columns.iter().filter(|&&c| c < n_rb).count();
        if k == 0 {
            return Err(Error::EmptyBasis);
        }
        let mut out = self.clone();
        out.q = self.q.columns(0, k).clone_owned();
        out.l_rb_basis = self.l_rb_basis.iter().map(|m| m.view((0, 0), (k, k)).clone_owned()).collect();
        out.f_rb_basis = self.f_rb_basis.iter().map(|v| v.rows(0, k).clone_owned()).collect();
        let idx: Vec<usize> = self.gamma_u.indices.clone().unwrap_or_default().into_iter().take(n_rb).collect();
        out.gamma_u = ParameterSet { points: self.gamma_u.points[..n_rb].to_vec(), indices: Some(idx), ..self.gamma_u.clone() };
        out.ref_lf_u = self.ref_lf_u.columns(0, n_rb).clone_owned();
        out.ref_hf_coeffs = self.ref_hf_coeffs.view((0, 0), (k, n_rb)).clone_owned();
        out.meta.n_rb_requested = n_rb;
        out.meta.kept_columns.retain(|&c| c < n_rb);
        Ok(out)
    }
}

/// High-fidelity systems keyed by candidate index, solved at most once each.
pub struct HfCache<'a> {
    solver: &'a FidelitySolver,
    candidates: &'a ParameterSet,
    systems: BTreeMap<usize, LinearizedSystem>,
}

impl<'a> HfCache<'a> {
    pub fn new(solver: &'a FidelitySolver, candidates: &'a ParameterSet) -> Self {
        HfCache { solver, candidates, systems: BTreeMap::new() }
    }

    /// Solves (in parallel) every index not yet cached.
    pub fn ensure(&mut self, indices: &[usize]) -> Result<()> {
        let mut missing: Vec<usize> = indices.iter().copied().filter(|i| !self.systems.contains_key(i)).collect();
        missing.sort_unstable();
        missing.dedup();
        if missing.is_empty() {
            return Ok(());
        }
        let params = self.candidates.subset(&missing, Provenance::Manual);
        let systems = sweep_systems(self.solver, &params)?;
        self.systems.extend(missing.into_iter().zip(systems));
        Ok(())
    }

    pub fn get(&self, index: usize) -> &LinearizedSystem {
        &self.systems[&index]
    }

    pub fn len(&self) -> usize {
        self.systems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.systems.is_empty()
    }
}

pub struct ReducedBasis {
    pub selection: SelectionResult,
    pub q: DMatrix<f64>,
    pub kept: Vec<usize>,
    /// `Qᵀ U_h(γ_u)`.
    pub hf_coeffs: DMatrix<f64>,
}

/// Selects γ_u on the low-fidelity solutions, runs HF there and orthonormalizes.
pub fn build_reduced_basis(lf: &SnapshotSet, n_rb: usize, hf: &mut HfCache) -> Result<ReducedBasis> {
    let selection = pivoted_cholesky_select(&lf.u, n_rb)?;
    hf.ensure(&selection.pivot_indices)?;
    let cols: Vec<_> = selection.pivot_indices.iter().map(|&i| hf.get(i).solution.clone()).collect();
    let snapshots = DMatrix::from_columns(&cols);
    let (q, kept) = gram_schmidt_kept(&snapshots)?;
    let hf_coeffs = q.tr_mul(&snapshots);
    Ok(ReducedBasis { selection, q, kept, hf_coeffs })
}

pub struct ReducedSystemBases {
    pub gamma_l: SelectionResult,
    pub gamma_f: SelectionResult,
    pub l_rb_basis: Vec<DMatrix<f64>>,
    pub f_rb_basis: Vec<DVector<f64>>,
    pub llow_gamma: DMatrix<f64>,
    pub flow_gamma: DMatrix<f64>,
    pub g_l: DMatrix<f64>,
    pub g_f: DMatrix<f64>,
}

/// Selects γ_L and γ_f, runs the remaining HF points and projects.
pub fn build_reduced_system_bases(
    lf: &SnapshotSet,
    q: &DMatrix<f64>,
    n_l: usize,
    n_f: usize,
    hf: &mut HfCache,
) -> Result<ReducedSystemBases> {
    let gamma_l = pivoted_cholesky_select(&lf.lvec, n_l)?;
    let gamma_f = pivoted_cholesky_select(&lf.f, n_f)?;
    let mut needed = gamma_l.pivot_indices.clone();
    needed.extend(&gamma_f.pivot_indices);
    hf.ensure(&needed)?;
    let l_rb_basis = gamma_l.pivot_indices.iter().map(|&i| q.tr_mul(&hf.get(i).operator.mul_dense(q))).collect();
    let f_rb_basis = gamma_f.pivot_indices.iter().map(|&i| q.tr_mul(&hf.get(i).rhs)).collect();
    let pick = |m: &DMatrix<f64>, idx: &[usize]| DMatrix::from_columns(&idx.iter().map(|&i| m.column(i)).collect::<Vec<_>>());
    let llow_gamma = pick(&lf.lvec, &gamma_l.pivot_indices);
    let flow_gamma = pick(&lf.f, &gamma_f.pivot_indices);
    let g_l = llow_gamma.tr_mul(&llow_gamma);
    let g_f = flow_gamma.tr_mul(&flow_gamma);
    Ok(ReducedSystemBases { gamma_l, gamma_f, l_rb_basis, f_rb_basis, llow_gamma, flow_gamma, g_l, g_f })
}

/// An artifact together with the data the diagnostics need.
pub struct OfflineBuild {
    pub artifact: RomArtifact,
    pub lf_snapshots: SnapshotSet,
    pub candidates: ParameterSet,
}

pub fn build_artifact(config: &OfflineConfig) -> Result<RomArtifact> {
    build_offline(config).map(|b| b.artifact)
}

/// Runs the whole offline stage.
pub fn build_offline(config: &OfflineConfig) -> Result<OfflineBuild> {
    let (problem, hf_grid, lf_grid) = config.validate()?;
    let start = Instant::now();
    let candidates = ParameterSet::sample(problem, config.n_p, config.seed, Provenance::Candidates);
    let lf_solver = FidelitySolver::new(problem, lf_grid, config.lf_iteration.clone())?;
    let hf_solver = FidelitySolver::new(problem, hf_grid, config.hf_iteration.clone())?;

    let t = Instant::now();
    let lf = sweep_with(&lf_solver, &candidates, Fidelity::Low)?;
    let lf_sweep = t.elapsed().as_secs_f64();
    log::info!("low-fidelity sweep: {} points on {lf_grid} in {lf_sweep:.3}s", candidates.len());

    let mut cache = HfCache::new(&hf_solver, &candidates);
    let t = Instant::now();
    let basis = build_reduced_basis(&lf, config.n_rb, &mut cache)?;
    let after_basis = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let bases = build_reduced_system_bases(&lf, &basis.q, config.n_l, config.n_f, &mut cache)?;
    let after_bases = t.elapsed().as_secs_f64();

    let union = dedup_union(&basis.selection.pivot_indices, &bases.gamma_l.pivot_indices, &bases.gamma_f.pivot_indices);
    let hf_runs = hf_solver.calls();
    debug_assert_eq!(hf_runs, union.points.len());
    log::info!("high-fidelity runs: {hf_runs} (union of selections) on {hf_grid}");
    if basis.kept.len() < config.n_rb {
        log::warn!("Gram-Schmidt kept {} of {} snapshots", basis.kept.len(), config.n_rb);
    }

    let mut rank_deficient = BTreeMap::new();
    rank_deficient.insert("gamma_u".to_string(), basis.selection.rank_deficient);
    rank_deficient.insert("gamma_L".to_string(), bases.gamma_l.rank_deficient);
    rank_deficient.insert("gamma_f".to_string(), bases.gamma_f.rank_deficient);

    let ref_lf_u = DMatrix::from_columns(&basis.selection.pivot_indices.iter().map(|&i| lf.u.column(i)).collect::<Vec<_>>());
    let meta = BuildMeta {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        problem: problem.id.to_string(),
        hf_grid,
        lf_grid,
        n_p: config.n_p,
        n_rb_requested: config.n_rb,
        n_l: config.n_l,
        n_f: config.n_f,
        seed: config.seed,
        hf_iteration: config.hf_iteration.clone(),
        lf_iteration: config.lf_iteration.clone(),
        hf_runs,
        kept_columns: basis.kept.clone(),
        rank_deficient,
        timings: StageTimings {
            lf_sweep,
            // Selection is interleaved with the HF runs; the split is approximate.
            selection: 0.0,
            hf_runs: after_basis,
            projection: after_bases,
            total: start.elapsed().as_secs_f64(),
        },
    };
    let artifact = RomArtifact {
        meta,
        q: basis.q,
        l_rb_basis: bases.l_rb_basis,
        f_rb_basis: bases.f_rb_basis,
        g_l: bases.g_l,
        g_f: bases.g_f,
        llow_gamma: bases.llow_gamma,
        flow_gamma: bases.flow_gamma,
        gamma_u: candidates.subset(&basis.selection.pivot_indices, Provenance::GammaU),
        gamma_l: candidates.subset(&bases.gamma_l.pivot_indices, Provenance::GammaL),
        gamma_f: candidates.subset(&bases.gamma_f.pivot_indices, Provenance::GammaF),
        lf_pattern: lf.pattern.clone(),
        ref_lf_u,
        ref_hf_coeffs: basis.hf_coeffs,
    };
    artifact.validate()?;
    Ok(OfflineBuild { artifact, lf_snapshots: lf, candidates })
}

/// One side (operator or rhs) of the interpolative-decomposition check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaSide {
    pub k: usize,
    pub n_p: usize,
    /// `√(k (n_p − k) + 1)`.
    pub factor: f64,
    /// `‖A‖₂` of the least-squares coefficients of all columns in the selected ones.
    pub coeff_norm: f64,
    pub coeff_bound_holds: bool,
    /// `‖S − S_γ A‖₂`.
    pub residual: f64,
    /// `σ_{k+1}(S)`, zero when `k` reaches the rank bound.
    pub sigma_next: f64,
    pub bound: f64,
    pub residual_bound_holds: bool,
    pub snapshot_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub operator: LemmaSide,
    pub rhs: LemmaSide,
}

impl LemmaReport {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, s) in [("operator", &self.operator), ("rhs", &self.rhs)] {
            if !s.coeff_bound_holds {
                out.push(format!("{name}: ‖A‖ = {:.3e} exceeds {:.3e}", s.coeff_norm, s.factor));
            }
            if !s.residual_bound_holds {
                out.push(format!("{name}: residual {:.3e} exceeds {:.3e}", s.residual, s.bound));
            }
        }
        out
    }
}

fn lemma_side(s: &DMatrix<f64>, gamma: &[usize]) -> LemmaSide {
    let (k, n_p) = (gamma.len(), s.ncols());
    let factor = ((k * (n_p - k)) as f64 + 1.0).sqrt();
    let sigma = s.clone().singular_values();
    let mut sv: Vec<f64> = sigma.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let snapshot_norm = sv.first().copied().unwrap_or(0.0);
    let sigma_next = sv.get(k).copied().unwrap_or(0.0);
    let selected = DMatrix::from_columns(&gamma.iter().map(|&i| s.column(i)).collect::<Vec<_>>());
    let (coeff_norm, residual) = match least_squares_qr(&selected, s) {
        Ok(a) => {
            let res = s - &selected * &a;
            (a.singular_values().max(), res.singular_values().max())
        }
        // Numerically rank-deficient selection: fall back to the minimum-norm fit.
        Err(_) => {
            let svd = selected.clone().svd(true, true);
            let eps = 1e-12 * svd.singular_values.max();
            match svd.solve(s, eps) {
                Ok(a) => {
                    let res = s - &selected * &a;
                    (a.singular_values().max(), res.singular_values().max())
                }
                Err(_) => (f64::INFINITY, f64::NAN),
            }
        }
    };
    let bound = factor * sigma_next;
    let floor = 1e-12 * snapshot_norm;
    LemmaSide {
        k,
        n_p,
        factor,
        coeff_norm,
        coeff_bound_holds: coeff_norm <= factor * (1.0 + 1e-12),
        residual,
        sigma_next,
        bound,
        residual_bound_holds: residual <= bound + floor,
        snapshot_norm,
    }
}

/// Empirical check of the interpolative-decomposition bounds on the
/// low-fidelity operator and rhs snapshots.
pub fn lemma_diagnostics(lf: &SnapshotSet, gamma_l: &[usize], gamma_f: &[usize]) -> LemmaReport {
    LemmaReport { operator: lemma_side(&lf.lvec, gamma_l), rhs: lemma_side(&lf.f, gamma_f) }
}
