//! Structured rectangular grids of bilinear quadrilaterals.
//!
//! Nodes are numbered lexicographically with `x` fastest. Boundary nodes carry
//! homogeneous Dirichlet data and are eliminated, so the unknowns of one scalar
//! field are the `(nx-1)*(ny-1)` interior nodes in the same lexicographic order.
//! Coupled systems stack their fields one after another.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle `[x_lo, x_hi] x [y_lo, y_hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect { x_lo: 0.0, x_hi: 1.0, y_lo: 0.0, y_hi: 1.0 };

    pub const fn new(x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) -> Self {
        Rect { x_lo, x_hi, y_lo, y_hi }
    }

    pub fn square(lo: f64, hi: f64) -> Self {
        Rect::new(lo, hi, lo, hi)
    }

    pub fn width(&self) -> f64 {
        self.x_hi - self.x_lo
    }

    pub fn height(&self) -> f64 {
        self.y_hi - self.y_lo
    }

    /// Maps a point of the unit square affinely into this rectangle.
    pub fn from_unit(&self, s: f64, t: f64) -> (f64, f64) {
        (self.x_lo + s * self.width(), self.y_lo + t * self.height())
    }

    /// Inverse of [`Rect::from_unit`].
    pub fn to_unit(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.x_lo) / self.width(), (y - self.y_lo) / self.height())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructuredGrid {
    pub nx: usize,
    pub ny: usize,
    pub domain: Rect,
}

impl StructuredGrid {
    pub fn new(nx: usize, ny: usize, domain: Rect) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Contract(format!("grid needs at least one element per axis, got {nx}x{ny}")));
        }
        if !(domain.x_lo < domain.x_hi && domain.y_lo < domain.y_hi) {
            return Err(Error::Contract(format!("degenerate grid domain {domain:?}")));
        }
        Ok(StructuredGrid { nx, ny, domain })
    }

    pub fn unit(nx: usize, ny: usize) -> Result<Self> {
        Self::new(nx, ny, Rect::UNIT)
    }

    pub fn hx(&self) -> f64 {
        self.domain.width() / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.domain.height() / self.ny as f64
    }

    pub fn n_elements(&self) -> usize {
        self.nx * self.ny
    }

    /// Interior (free) nodes of one scalar field.
    pub fn n_interior(&self) -> usize {
        (self.nx - 1) * (self.ny - 1)
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn node_xy(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.domain.x_lo + i as f64 * self.hx(),
            self.domain.y_lo + j as f64 * self.hy(),
        )
    }

    /// Unknown index of node `(i, j)`, or `None` on the boundary.
    pub fn interior_index(&self, i: usize, j: usize) -> Option<usize> {
        if i == 0 || j == 0 || i >= self.nx || j >= self.ny {
            None
        } else {
            Some((j - 1) * (self.nx - 1) + (i - 1))
        }
    }

    /// Node `(i, j)` of an interior unknown index.
    pub fn interior_node(&self, k: usize) -> (usize, usize) {
        let m = self.nx - 1;
        (k % m + 1, k / m + 1)
    }

    /// Coordinates of all interior nodes in unknown order.
    pub fn interior_points(&self) -> Vec<(f64, f64)> {
        (0..self.n_interior())
            .map(|k| {
                let (i, j) = self.interior_node(k);
                self.node_xy(i, j)
            })
            .collect()
    }

    /// Full nodal field (boundary included, zeros there) from interior values of one field.
    pub fn full_field(&self, interior: &[f64]) -> Vec<f64> {
        assert_eq!(interior.len(), self.n_interior());
        let mut full = vec![0.0; self.n_nodes()];
        for (k, &v) in interior.iter().enumerate() {
            let (i, j) = self.interior_node(k);
            full[j * (self.nx + 1) + i] = v;
        }
        full
    }

    /// Evaluates the bilinear interpolant of one interior field at `(x, y)`.
    pub fn evaluate(&self, interior: &[f64], x: f64, y: f64) -> f64 {
        let (s, t) = self.domain.to_unit(x, y);
        let fx = (s * self.nx as f64).clamp(0.0, self.nx as f64);
        let fy = (t * self.ny as f64).clamp(0.0, self.ny as f64);
        let ex = (fx.floor() as usize).min(self.nx - 1);
        let ey = (fy.floor() as usize).min(self.ny - 1);
        let xi = fx - ex as f64;
        let eta = fy - ey as f64;
        let value = |i: usize, j: usize| self.interior_index(i, j).map_or(0.0, |k| interior[k]);
        (1.0 - xi) * (1.0 - eta) * value(ex, ey)
            + xi * (1.0 - eta) * value(ex + 1, ey)
            + xi * eta * value(ex + 1, ey + 1)
            + (1.0 - xi) * eta * value(ex, ey + 1)
    }

    /// Interpolates a stacked `n_fields` vector from this grid onto the interior nodes of `target`.
    pub fn prolongate(&self, u: &[f64], n_fields: usize, target: &StructuredGrid) -> Vec<f64> {
        let n = self.n_interior();
        assert_eq!(u.len(), n * n_fields);
        let points = target.interior_points();
        let mut out = Vec::with_capacity(points.len() * n_fields);
        for field in 0..n_fields {
            let slice = &u[field * n..(field + 1) * n];
            out.extend(points.iter().map(|&(x, y)| self.evaluate(slice, x, y)));
        }
        out
    }
}

impl fmt::Display for StructuredGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.nx, self.ny)
    }
}

/// Element counts parsed from strings like `"128x128"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSize {
    pub nx: usize,
    pub ny: usize,
}

impl GridSize {
    pub fn on(self, domain: Rect) -> Result<StructuredGrid> {
        StructuredGrid::new(self.nx, self.ny, domain)
    }
}

impl FromStr for GridSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("grid size `{s}` is not of the form NXxNY"));
        let (a, b) = s.trim().split_once(['x', 'X']).ok_or_else(bad)?;
        let nx: usize = a.trim().parse().map_err(|_| bad())?;
        let ny: usize = b.trim().parse().map_err(|_| bad())?;
        if nx == 0 || ny == 0 {
            return Err(bad());
        }
        Ok(GridSize { nx, ny })
    }
}

impl fmt::Display for GridSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.nx, self.ny)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_numbering_roundtrips() {
        let g = StructuredGrid::unit(5, 4).unwrap();
        assert_eq!(g.n_interior(), 12);
        for k in 0..g.n_interior() {
            let (i, j) = g.interior_node(k);
            assert_eq!(g.interior_index(i, j), Some(k));
        }
        assert_eq!(g.interior_index(0, 2), None);
        assert_eq!(g.interior_index(5, 2), None);
    }

    #[test]
    fn full_field_is_zero_on_boundary() {
        let g = StructuredGrid::unit(4, 3).unwrap();
        let full = g.full_field(&vec![1.0; g.n_interior()]);
        for j in 0..=3 {
            for i in 0..=4 {
                let v = full[j * 5 + i];
                if i == 0 || j == 0 || i == 4 || j == 3 {
                    assert_eq!(v, 0.0);
                } else {
                    assert_eq!(v, 1.0);
                }
            }
        }
    }

    #[test]
    fn prolongation_reproduces_bilinear_fields_on_nested_grids() {
        let coarse = StructuredGrid::new(4, 4, Rect::square(-1.0, 1.0)).unwrap();
        let fine = StructuredGrid::new(8, 8, Rect::square(-1.0, 1.0)).unwrap();
        // (1 - x^2)(1 - y^2) sampled at coarse nodes; the interpolant at coincident
        // fine nodes must return the coarse nodal values.
        let f = |x: f64, y: f64| (1.0 - x * x) * (1.0 - y * y);
        let u: Vec<f64> = coarse.interior_points().iter().map(|&(x, y)| f(x, y)).collect();
        let up = coarse.prolongate(&u, 1, &fine);
        for (k, &(x, y)) in fine.interior_points().iter().enumerate() {
            let (i, j) = fine.interior_node(k);
            if i % 2 == 0 && j % 2 == 0 {
                assert!((up[k] - f(x, y)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn grid_size_parsing() {
        assert_eq!("128x64".parse::<GridSize>().unwrap(), GridSize { nx: 128, ny: 64 });
        assert!("128".parse::<GridSize>().is_err());
        assert!("0x4".parse::<GridSize>().is_err());
        assert!(StructuredGrid::new(0, 3, Rect::UNIT).is_err());
        assert!(StructuredGrid::new(2, 3, Rect::new(1.0, 0.0, 0.0, 1.0)).is_err());
    }
}
