//! Bilinear (Q1) finite elements on structured grids with 2x2 Gauss quadrature.
//!
//! A [`FemModel`] fixes a problem and a grid, computes the union sparsity
//! pattern once and reuses it for every parameter and iterate, so assembled
//! operators are always comparable value by value.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::grid::StructuredGrid;
use crate::problems::{CellTable, Linearization, Nonlinearity, ProblemSpec, MAX_FIELDS};
use crate::sparse::{SparseMatrix, SparsityPattern};

const GAUSS: [f64; 2] = [0.5 - 0.288_675_134_594_812_9, 0.5 + 0.288_675_134_594_812_9];

// Local node order: (0,0), (1,0), (1,1), (0,1) in reference coordinates.
const CORNERS: [(usize, usize); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];

/// Shape values and reference gradients at the four quadrature points.
struct Reference {
    points: [(f64, f64); 4],
    n: [[f64; 4]; 4],
    dxi: [[f64; 4]; 4],
    deta: [[f64; 4]; 4],
}

impl Reference {
    fn new() -> Self {
        let mut r = Reference { points: [(0.0, 0.0); 4], n: [[0.0; 4]; 4], dxi: [[0.0; 4]; 4], deta: [[0.0; 4]; 4] };
        let mut q = 0;
        for &eta in &GAUSS {
            for &xi in &GAUSS {
                r.points[q] = (xi, eta);
                for (a, &(ca, cb)) in CORNERS.iter().enumerate() {
                    let sx = if ca == 1 { xi } else { 1.0 - xi };
                    let sy = if cb == 1 { eta } else { 1.0 - eta };
                    let dsx = if ca == 1 { 1.0 } else { -1.0 };
                    let dsy = if cb == 1 { 1.0 } else { -1.0 };
                    r.n[q][a] = sx * sy;
                    r.dxi[q][a] = dsx * sy;
                    r.deta[q][a] = sx * dsy;
                }
                q += 1;
            }
        }
        r
    }
}

/// A problem discretized on one grid.
#[derive(Debug)]
pub struct FemModel {
    problem: &'static ProblemSpec,
    grid: StructuredGrid,
    pattern: Arc<SparsityPattern>,
    cells: CellTable,
}

impl FemModel {
    pub fn new(problem: &'static ProblemSpec, grid: StructuredGrid) -> Result<Self> {
        let pattern = Arc::new(union_pattern(&grid, problem.n_fields)?);
        let cells = problem.cell_table(&grid);
        Ok(FemModel { problem, grid, pattern, cells })
    }

    pub fn problem(&self) -> &'static ProblemSpec {
        self.problem
    }

    pub fn grid(&self) -> &StructuredGrid {
        &self.grid
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    /// Number of unknowns (interior nodes times fields).
    pub fn n_dofs(&self) -> usize {
        self.grid.n_interior() * self.problem.n_fields
    }

    /// The linearization a nonlinear problem uses unless told otherwise.
    pub fn default_linearization(&self) -> Linearization {
        match self.problem.nonlinearity {
            Nonlinearity::Newton => Linearization::Newton,
            _ => Linearization::Picard,
        }
    }

    /// Assembles the operator and load over interior unknowns.
    ///
    /// `state` is the previous iterate and must be given exactly when the
    /// problem is nonlinear.
    pub fn assemble(&self, mu: &[f64], state: Option<&[f64]>, lin: Linearization) -> Result<(SparseMatrix, DVector<f64>)> {
        let problem = self.problem;
        problem.check_mu(mu)?;
        let n = self.grid.n_interior();
        let nf = problem.n_fields;
        match (problem.is_linear(), state) {
            (false, None) => {
                return Err(Error::Contract(format!("problem `{}` is nonlinear and needs a state", problem.id)))
            }
            (true, Some(_)) => {
                return Err(Error::Contract(format!("problem `{}` is linear and takes no state", problem.id)))
            }
            (_, Some(s)) if s.len() != n * nf => {
                return Err(Error::Contract(format!("state has length {}, expected {}", s.len(), n * nf)))
            }
            _ => {}
        }
        if lin == Linearization::Newton && !problem.is_linear() && !problem.newton_available {
            return Err(Error::Contract(format!("problem `{}` provides no Newton linearization", problem.id)));
        }

        let reference = Reference::new();
        let (hx, hy) = (self.grid.hx(), self.grid.hy());
        let weight = 0.25 * hx * hy;
        let mut matrix = SparseMatrix::zeros(self.pattern.clone());
        let mut load = vec![0.0; n * nf];
        let mut u_local = [[0.0; 4]; MAX_FIELDS];

        for ey in 0..self.grid.ny {
            for ex in 0..self.grid.nx {
                let e = ey * self.grid.nx + ex;
                let dofs: [Option<usize>; 4] = CORNERS.map(|(a, b)| self.grid.interior_index(ex + a, ey + b));
                if let Some(s) = state {
                    for f in 0..nf {
                        for (a, dof) in dofs.iter().enumerate() {
                            u_local[f][a] = dof.map_or(0.0, |k| s[f * n + k]);
                        }
                    }
                }
                let cell = if self.cells.stride > 0 { self.cells.cell(e) } else { &[][..] };
                let (x0, y0) = self.grid.node_xy(ex, ey);

                let mut ke = [[[[0.0; 4]; 4]; MAX_FIELDS]; MAX_FIELDS];
                let mut fe = [[0.0; 4]; MAX_FIELDS];
                for q in 0..4 {
                    let (xi, eta) = reference.points[q];
                    let x = (x0 + xi * hx, y0 + eta * hy);
                    let shape = &reference.n[q];
                    let mut u_q = [0.0; MAX_FIELDS];
                    for f in 0..nf {
                        u_q[f] = (0..4).map(|a| shape[a] * u_local[f][a]).sum();
                    }
                    let c = problem.point_coeffs(lin, mu, x, cell, &u_q[..nf]);
                    for f in 0..nf {
                        let [kx, ky] = c.diffusion[f];
                        for a in 0..4 {
                            let (dxa, dya) = (reference.dxi[q][a] / hx, reference.deta[q][a] / hy);
                            fe[f][a] += weight * c.source[f] * shape[a];
                            for b in 0..4 {
                                let (dxb, dyb) = (reference.dxi[q][b] / hx, reference.deta[q][b] / hy);
                                ke[f][f][a][b] += weight * (kx * dxa * dxb + ky * dya * dyb);
                                for g in 0..nf {
                                    ke[f][g][a][b] += weight * c.reaction[f][g] * shape[a] * shape[b];
                                }
                            }
                        }
                    }
                }

                let values = matrix.values_mut();
                for f in 0..nf {
                    for (a, row_dof) in dofs.iter().enumerate() {
                        let Some(ra) = row_dof else { continue };
                        let row = f * n + ra;
                        load[row] += fe[f][a];
                        for g in 0..nf {
                            for (b, col_dof) in dofs.iter().enumerate() {
                                let Some(cb) = col_dof else { continue };
                                let k = self.pattern.position(row, g * n + cb).expect("union pattern covers element couplings");
                                values[k] += ke[f][g][a][b];
                            }
                        }
                    }
                }
            }
        }
        Ok((matrix, DVector::from_vec(load)))
    }
}

/// 9-point Q1 connectivity per field pair, the union over all terms of any problem.
fn union_pattern(grid: &StructuredGrid, n_fields: usize) -> Result<SparsityPattern> {
    let n = grid.n_interior();
    let mut rows = Vec::with_capacity(n * n_fields);
    for _f in 0..n_fields {
        for k in 0..n {
            let (i, j) = grid.interior_node(k);
            let mut cols = Vec::with_capacity(9 * n_fields);
            for g in 0..n_fields {
                for dj in [-1i64, 0, 1] {
                    for di in [-1i64, 0, 1] {
                        let (ii, jj) = (i as i64 + di, j as i64 + dj);
                        if ii < 0 || jj < 0 {
                            continue;
                        }
                        if let Some(c) = grid.interior_index(ii as usize, jj as usize) {
                            cols.push(g * n + c);
                        }
                    }
                }
            }
            rows.push(cols);
        }
    }
    SparsityPattern::from_rows(n * n_fields, rows)
}

/// Assembles `problem` on `grid` at `mu` with the problem's default linearization.
pub fn assemble(
    problem: &'static ProblemSpec,
    grid: &StructuredGrid,
    mu: &[f64],
    state: Option<&[f64]>,
) -> Result<(SparseMatrix, DVector<f64>)> {
    let model = FemModel::new(problem, *grid)?;
    let lin = model.default_linearization();
    model.assemble(mu, state, lin)
}

/// Relative L2 and H1-seminorm errors of a scalar interior field against an
/// analytic solution `exact(x, y) = (u, (u_x, u_y))`.
///
/// The bilinear interpolant of `u_num` (zero on the boundary) is compared with
/// the exact field using 3x3 Gauss quadrature on every element.
pub fn fem_error_norms(
    u_num: &[f64],
    exact: impl Fn(f64, f64) -> (f64, (f64, f64)),
    grid: &StructuredGrid,
) -> Result<(f64, f64)> {
    if u_num.len() != grid.n_interior() {
        return Err(Error::Contract(format!("field has length {}, grid has {} unknowns", u_num.len(), grid.n_interior())));
    }
    const G3: [(f64, f64); 3] = [
        (0.5 - 0.387_298_334_620_741_7, 5.0 / 18.0),
        (0.5, 8.0 / 18.0),
        (0.5 + 0.387_298_334_620_741_7, 5.0 / 18.0),
    ];
    let full = grid.full_field(u_num);
    let (hx, hy) = (grid.hx(), grid.hy());
    let (mut e_l2, mut r_l2, mut e_h1, mut r_h1) = (0.0, 0.0, 0.0, 0.0);
    for ey in 0..grid.ny {
        for ex in 0..grid.nx {
            let v = CORNERS.map(|(a, b)| full[(ey + b) * (grid.nx + 1) + ex + a]);
            let (x0, y0) = grid.node_xy(ex, ey);
            for &(eta, wy) in &G3 {
                for &(xi, wx) in &G3 {
                    let uh = v[0] * (1.0 - xi) * (1.0 - eta) + v[1] * xi * (1.0 - eta) + v[2] * xi * eta + v[3] * (1.0 - xi) * eta;
                    let ux = ((v[1] - v[0]) * (1.0 - eta) + (v[2] - v[3]) * eta) / hx;
                    let uy = ((v[3] - v[0]) * (1.0 - xi) + (v[2] - v[1]) * xi) / hy;
                    let (u, (gx, gy)) = exact(x0 + xi * hx, y0 + eta * hy);
                    let w = wx * wy * hx * hy;
                    e_l2 += w * (uh - u).powi(2);
                    r_l2 += w * u * u;
                    e_h1 += w * ((ux - gx).powi(2) + (uy - gy).powi(2));
                    r_h1 += w * (gx * gx + gy * gy);
                }
            }
        }
    }
    if r_l2 == 0.0 || r_h1 == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(((e_l2 / r_l2).sqrt(), (e_h1 / r_h1).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::get_problem;
    use crate::sparse::solve_sparse;

    #[test]
    fn one_dof_laplace_matches_hand_integration() {
        let p = get_problem("manufactured").unwrap();
        let model = FemModel::new(p, StructuredGrid::unit(2, 2).unwrap()).unwrap();
        let (l, _) = model.assemble(&[], None, Linearization::Picard).unwrap();
        assert_eq!(l.n_rows(), 1);
        assert!((l.values()[0] - 8.0 / 3.0).abs() < 1e-14);
        // Unit load: ∫ N_center = 4 * h^2 / 4 = 1/4.
        let u = solve_sparse(&l, &[0.25]).unwrap();
        assert!((u[0] - 3.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn assembly_is_bit_deterministic() {
        let p = get_problem("nl-multiscale").unwrap();
        let model = FemModel::new(p, StructuredGrid::unit(6, 5).unwrap()).unwrap();
        let state: Vec<f64> = (0..model.n_dofs()).map(|k| (k as f64 * 0.37).sin() * 0.1).collect();
        let (a1, f1) = model.assemble(&[0.2, 0.4, 0.6], Some(&state), Linearization::Picard).unwrap();
        let (a2, f2) = model.assemble(&[0.2, 0.4, 0.6], Some(&state), Linearization::Picard).unwrap();
        assert_eq!(a1.row_ptr(), a2.row_ptr());
        assert_eq!(a1.col_idx(), a2.col_idx());
        assert_eq!(a1.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), a2.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(f1, f2);
    }

    #[test]
    fn pattern_is_parameter_independent() {
        let p = get_problem("wavespeed").unwrap();
        let model = FemModel::new(p, p.grid(4, 4).unwrap()).unwrap();
        let (a, _) = model.assemble(&[0.5, 0.3], None, Linearization::Picard).unwrap();
        let (b, _) = model.assemble(&[3.0, 1.7], None, Linearization::Picard).unwrap();
        assert_eq!(a.row_ptr(), b.row_ptr());
        assert_eq!(a.col_idx(), b.col_idx());
        assert_ne!(a.values(), b.values());
    }

    #[test]
    fn diffusion_operators_are_symmetric() {
        let p = get_problem("high-contrast").unwrap();
        let model = FemModel::new(p, StructuredGrid::unit(9, 7).unwrap()).unwrap();
        let (a, _) = model.assemble(&[0.1, -0.5, 0.9], None, Linearization::Picard).unwrap();
        assert!(a.asymmetry() <= 1e-13);
    }

    #[test]
    fn coupled_operator_has_block_structure() {
        let p = get_problem("coupled").unwrap();
        let model = FemModel::new(p, StructuredGrid::unit(4, 4).unwrap()).unwrap();
        let state = vec![0.0; model.n_dofs()];
        let (a, f) = model.assemble(&[0.5, 0.5], Some(&state), Linearization::Picard).unwrap();
        assert_eq!(a.n_rows(), 18);
        assert_eq!(f.len(), 18);
        // Off-diagonal block carries the -c mass coupling.
        assert!(a.get(0, 9) < 0.0);
        assert!(a.asymmetry() <= 1e-13);
    }

    #[test]
    fn contract_errors() {
        let p = get_problem("cubic").unwrap();
        let model = FemModel::new(p, StructuredGrid::unit(3, 3).unwrap()).unwrap();
        assert!(matches!(model.assemble(&[1.0, 1.0], None, Linearization::Newton), Err(Error::Contract(_))));
        assert!(matches!(
            model.assemble(&[9.0, 1.0], Some(&[0.0; 4]), Linearization::Newton),
            Err(Error::DomainViolation { .. })
        ));
        let nl = get_problem("nl-elliptic").unwrap();
        let model = FemModel::new(nl, nl.grid(3, 3).unwrap()).unwrap();
        assert!(matches!(
            model.assemble(&[0.1, 0.1, 0.1], Some(&[0.0; 4]), Linearization::Newton),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn error_norms_trivial_cases() {
        use std::f64::consts::PI;
        let exact = |x: f64, y: f64| {
            let (sx, sy) = ((PI * x).sin(), (PI * y).sin());
            (sx * sy, (PI * (PI * x).cos() * sy, PI * sx * (PI * y).cos()))
        };
        let g = StructuredGrid::unit(6, 6).unwrap();
        let (l2, h1) = fem_error_norms(&vec![0.0; g.n_interior()], exact, &g).unwrap();
        assert!((l2 - 1.0).abs() < 1e-14 && (h1 - 1.0).abs() < 1e-14);
        assert!(matches!(fem_error_norms(&vec![1.0; g.n_interior()], |_, _| (0.0, (0.0, 0.0)), &g), Err(Error::ZeroNorm)));

        // Nodal interpolation error: second order in L2, first order in H1.
        let interp = |n: usize| {
            let g = StructuredGrid::unit(n, n).unwrap();
            let nodal: Vec<f64> = g.interior_points().iter().map(|&(x, y)| exact(x, y).0).collect();
            fem_error_norms(&nodal, exact, &g).unwrap()
        };
        let (a, b) = (interp(16), interp(32));
        assert!(((a.0 / b.0).log2() - 2.0).abs() < 0.05);
        assert!(((a.1 / b.1).log2() - 1.0).abs() < 0.05);
    }
}
