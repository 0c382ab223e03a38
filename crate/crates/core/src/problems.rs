//! Registry of parametric benchmark problems.
//!
//! Every problem is posed with homogeneous Dirichlet data on a rectangle and is
//! described pointwise: given a parameter, a quadrature point, per-element
//! channel data and the previous iterate, it returns the coefficients of the
//! linearized weak form
//!
//! ```text
//!   sum_a ∫ (kx_a ∂x u_a ∂x v_a + ky_a ∂y u_a ∂y v_a) + sum_ab ∫ r_ab u_b v_a = sum_a ∫ s_a v_a
//! ```
//!
//! Linear problems ignore the iterate. Picard linearizations freeze the
//! solution-dependent coefficients; Newton linearizations return `r = h'(u)`
//! and `s = f - h(u) + h'(u) u`, which is `J u = -R + J u_prev` rearranged.

use std::f64::consts::PI;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Rect, StructuredGrid};

pub const MAX_FIELDS: usize = 2;

/// Value of a high-contrast field inside its channels.
pub const CHANNEL_VALUE: f64 = 1e4;

/// Coupling strength of the two-field system.
pub const COUPLING: f64 = 1e5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    Linear,
    Picard,
    Newton,
}

/// How a nonlinear problem is linearized at the previous iterate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linearization {
    Picard,
    Newton,
}

/// Coefficients of the linearized weak form at one quadrature point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PointCoeffs {
    /// `(kx, ky)` per field.
    pub diffusion: [[f64; 2]; MAX_FIELDS],
    /// `reaction[a][b]` multiplies `u_b v_a`.
    pub reaction: [[f64; MAX_FIELDS]; MAX_FIELDS],
    pub source: [f64; MAX_FIELDS],
}

impl PointCoeffs {
    fn scalar(kx: f64, ky: f64, r: f64, s: f64) -> Self {
        let mut c = PointCoeffs::default();
        c.diffusion[0] = [kx, ky];
        c.reaction[0][0] = r;
        c.source[0] = s;
        c
    }
}

/// Piecewise-constant channel field on the unit square, mapped into a problem domain.
///
/// Classes are sets of axis-aligned rectangles in unit coordinates. A point
/// belongs to the first class containing it, or to the background.
#[derive(Clone, Debug, PartialEq)]
pub struct HighContrastField {
    pub domain: Rect,
    pub classes: Vec<Vec<Rect>>,
    pub inside: f64,
    pub background: f64,
}

impl HighContrastField {
    /// Channel layout of the five-term coefficient κ = Σ α_i(μ) κ_i.
    pub fn five_term(domain: Rect) -> Self {
        let horizontal = |lo: f64, hi: f64| Rect::new(0.0, 1.0, lo, hi);
        let vertical = |lo: f64, hi: f64| Rect::new(lo, hi, 0.0, 1.0);
        HighContrastField {
            domain,
            classes: vec![
                vec![horizontal(0.20, 0.25), horizontal(0.70, 0.75)],
                vec![vertical(0.30, 0.35), vertical(0.80, 0.85)],
                vec![horizontal(0.45, 0.50)],
                vec![vertical(0.55, 0.60)],
            ],
            inside: CHANNEL_VALUE,
            background: 1.0,
        }
    }

    /// The four single-class fields κ_{1,1}, κ_{1,2}, κ_{2,1}, κ_{2,2} of the coupled system.
    pub fn coupled_family(domain: Rect) -> [Self; 4] {
        let one = |rects: Vec<Rect>| HighContrastField {
            domain,
            classes: vec![rects],
            inside: CHANNEL_VALUE,
            background: 1.0,
        };
        [
            one(vec![Rect::new(0.0, 1.0, 0.15, 0.20), Rect::new(0.0, 1.0, 0.60, 0.65)]),
            one(vec![Rect::new(0.25, 0.30, 0.0, 1.0), Rect::new(0.70, 0.75, 0.0, 1.0)]),
            one(vec![Rect::new(0.0, 1.0, 0.35, 0.40), Rect::new(0.0, 1.0, 0.85, 0.90)]),
            one(vec![Rect::new(0.45, 0.50, 0.0, 1.0), Rect::new(0.90, 0.95, 0.0, 1.0)]),
        ]
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Class index of a physical point; `n_classes()` means background.
    pub fn classify(&self, x: f64, y: f64) -> usize {
        let (s, t) = self.domain.to_unit(x, y);
        self.classify_unit(s, t)
    }

    fn classify_unit(&self, s: f64, t: f64) -> usize {
        self.classes
            .iter()
            .position(|rects| rects.iter().any(|r| s >= r.x_lo && s <= r.x_hi && t >= r.y_lo && t <= r.y_hi))
            .unwrap_or(self.classes.len())
    }

    /// Spatial part κ_i(x) of class `i` (the background class takes `background`).
    pub fn component(&self, i: usize, x: f64, y: f64) -> f64 {
        let c = self.classify(x, y);
        match (c == i, i == self.classes.len()) {
            (true, true) => self.background,
            (true, false) => self.inside,
            _ => 0.0,
        }
    }

    /// Exact area fraction of a physical cell covered by each class (background last).
    pub fn cell_fractions(&self, cell: Rect) -> Vec<f64> {
        let (s0, t0) = self.domain.to_unit(cell.x_lo, cell.y_lo);
        let (s1, t1) = self.domain.to_unit(cell.x_hi, cell.y_hi);
        let mut xs = vec![s0, s1];
        let mut ys = vec![t0, t1];
        for r in self.classes.iter().flatten() {
            xs.extend([r.x_lo, r.x_hi].into_iter().filter(|&v| v > s0 && v < s1));
            ys.extend([r.y_lo, r.y_hi].into_iter().filter(|&v| v > t0 && v < t1));
        }
        xs.sort_by(f64::total_cmp);
        ys.sort_by(f64::total_cmp);
        let area = (s1 - s0) * (t1 - t0);
        let mut fractions = vec![0.0; self.classes.len() + 1];
        for wx in xs.windows(2) {
            for wy in ys.windows(2) {
                let a = (wx[1] - wx[0]) * (wy[1] - wy[0]);
                if a > 0.0 {
                    let c = self.classify_unit(0.5 * (wx[0] + wx[1]), 0.5 * (wy[0] + wy[1]));
                    fractions[c] += a / area;
                }
            }
        }
        fractions
    }
}

/// Weights α_1..α_5 of the five-term high-contrast coefficient.
pub fn alphas(mu: &[f64]) -> [f64; 5] {
    let (m1, m2, m3) = (mu[0], mu[1], mu[2]);
    [
        (0.8 + 1.6 * m1.powi(4)) / (1.0 + m1.powi(4)),
        1.1 + 0.8 * (m1 + m2 + m3).sin(),
        1.1 + 0.7 * (m1 * m1 + m2 * m2 + m3 * m3).cos(),
        1.2 - 0.3 * m3 * m3 / (1.0 + m2 * m2 * m3 * m3),
        1.0,
    ]
}

/// Pointwise κ(x, μ) = Σ α_i(μ) κ_i(x) of the five-term family.
pub fn eval_kappa(field: &HighContrastField, mu: &[f64], x: (f64, f64)) -> f64 {
    let a = alphas(mu);
    let c = field.classify(x.0, x.1);
    if c == field.n_classes() {
        a[4] * field.background
    } else {
        a[c] * field.inside
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Wavespeed,
    NlElliptic,
    Cubic,
    HighContrast,
    NlMultiscale,
    Coupled,
    Manufactured,
}

/// Per-element data a problem needs at quadrature points (channel area fractions).
#[derive(Clone, Debug, PartialEq)]
pub struct CellTable {
    pub stride: usize,
    pub data: Vec<f64>,
}

impl CellTable {
    pub fn cell(&self, e: usize) -> &[f64] {
        &self.data[e * self.stride..(e + 1) * self.stride]
    }
}

#[derive(Debug)]
pub struct ProblemSpec {
    pub id: &'static str,
    pub summary: &'static str,
    pub n_fields: usize,
    pub param_domain: Vec<(f64, f64)>,
    pub domain: Rect,
    /// Default solution method.
    pub nonlinearity: Nonlinearity,
    pub newton_available: bool,
    pub rhs_parametric: bool,
    kind: Kind,
    channels: Vec<HighContrastField>,
}

impl ProblemSpec {
    pub fn param_dim(&self) -> usize {
        self.param_domain.len()
    }

    pub fn is_linear(&self) -> bool {
        self.nonlinearity == Nonlinearity::Linear
    }

    pub fn contains(&self, mu: &[f64]) -> bool {
        mu.len() == self.param_dim()
            && mu.iter().zip(&self.param_domain).all(|(&m, &(lo, hi))| m.is_finite() && m >= lo && m <= hi)
    }

    pub fn check_mu(&self, mu: &[f64]) -> Result<()> {
        if self.contains(mu) {
            Ok(())
        } else {
            Err(Error::DomainViolation { problem: self.id.to_string(), mu: mu.to_vec() })
        }
    }

    /// Channel fields used by the coefficient (empty for smooth problems).
    pub fn channel_fields(&self) -> &[HighContrastField] {
        &self.channels
    }

    pub fn grid(&self, nx: usize, ny: usize) -> Result<StructuredGrid> {
        StructuredGrid::new(nx, ny, self.domain)
    }

    /// Channel area fractions of every element of `grid`.
    pub fn cell_table(&self, grid: &StructuredGrid) -> CellTable {
        let stride: usize = self.channels.iter().map(|f| f.n_classes() + 1).sum();
        let mut data = Vec::with_capacity(stride * grid.n_elements());
        if stride > 0 {
            for ey in 0..grid.ny {
                for ex in 0..grid.nx {
                    let (x0, y0) = grid.node_xy(ex, ey);
                    let (x1, y1) = grid.node_xy(ex + 1, ey + 1);
                    let cell = Rect::new(x0, x1, y0, y1);
                    for field in &self.channels {
                        data.extend(field.cell_fractions(cell));
                    }
                }
            }
        }
        CellTable { stride, data }
    }

    /// Exact solution and its gradient, where known.
    pub fn exact_solution(&self, x: f64, y: f64) -> Option<(f64, (f64, f64))> {
        match self.kind {
            Kind::Manufactured => {
                let (sx, cx, sy, cy) = ((PI * x).sin(), (PI * x).cos(), (PI * y).sin(), (PI * y).cos());
                Some((sx * sy, (PI * cx * sy, PI * sx * cy)))
            }
            _ => None,
        }
    }

    pub fn has_exact_solution(&self) -> bool {
        self.kind == Kind::Manufactured
    }

    /// Linearized weak-form coefficients at one quadrature point.
    ///
    /// `cell` is this element's row of [`ProblemSpec::cell_table`] and `u` the
    /// previous iterate interpolated at the point (one value per field).
    pub fn point_coeffs(&self, lin: Linearization, mu: &[f64], x: (f64, f64), cell: &[f64], u: &[f64]) -> PointCoeffs {
        let (x1, x2) = x;
        match self.kind {
            Kind::Wavespeed => PointCoeffs::scalar(1.0, mu[0], -mu[1], -10.0 * (8.0 * x1 * (x2 - 1.0)).sin()),
            Kind::NlElliptic => {
                let k = 2.0 + (2.0 * PI * mu[1] * u[0] + mu[0]).sin();
                let f = (4.0 * x1).sin() / (1.0 + mu[2] * mu[2]) + mu[1] * x2;
                PointCoeffs::scalar(k, k, 0.0, f)
            }
            Kind::Cubic => {
                let f = 100.0 * (2.0 * PI * x1).sin() * (2.0 * PI * x1).cos();
                let d = u[0] - mu[0];
                match lin {
                    Linearization::Picard => PointCoeffs::scalar(mu[1], mu[1], d * d, f),
                    Linearization::Newton => {
                        let h = u[0] * d * d;
                        let dh = d * (3.0 * u[0] - mu[0]);
                        PointCoeffs::scalar(mu[1], mu[1], dh, f - h + dh * u[0])
                    }
                }
            }
            Kind::HighContrast => {
                let k = five_term_kappa(mu, cell);
                PointCoeffs::scalar(k, k, 0.0, (PI * x1).sin() * (PI * x2).sin())
            }
            Kind::NlMultiscale => {
                let k = five_term_kappa(mu, cell) * u[0].exp();
                PointCoeffs::scalar(k, k, 0.0, 2.0 + x1.sin() * x2.cos())
            }
            Kind::Coupled => {
                // cell = [m11, bg, m12, bg, m21, bg, m22, bg]
                let blend = |w: f64, a: f64, b: f64| 1.0 + (CHANNEL_VALUE - 1.0) * (w * a + (1.0 - w) * b);
                let w1 = mu[0] * mu[1];
                let w2 = mu[0] * mu[1] * mu[1];
                let k1 = blend(w1, cell[0], cell[2]) / (1.0 + u[0].abs());
                let k2 = blend(w2, cell[4], cell[6]) / (1.0 + u[1].abs());
                let c = COUPLING / (1.0 + (u[0] + u[1]).abs());
                PointCoeffs {
                    diffusion: [[k1, k1], [k2, k2]],
                    reaction: [[c, -c], [-c, c]],
                    source: [1.0, 1.0],
                }
            }
            Kind::Manufactured => {
                PointCoeffs::scalar(1.0, 1.0, 0.0, 2.0 * PI * PI * (PI * x1).sin() * (PI * x2).sin())
            }
        }
    }
}

fn five_term_kappa(mu: &[f64], fractions: &[f64]) -> f64 {
    let a = alphas(mu);
    (0..4).map(|i| a[i] * CHANNEL_VALUE * fractions[i]).sum::<f64>() + a[4] * fractions[4]
}

static REGISTRY: LazyLock<Vec<ProblemSpec>> = LazyLock::new(|| {
    let unit = Rect::UNIT;
    vec![
        ProblemSpec {
            id: "wavespeed",
            summary: "-u_xx - mu1 u_yy - mu2 u = -10 sin(8x(y-1)) on [-1,1]^2",
            n_fields: 1,
            param_domain: vec![(0.1, 4.0), (0.0, 2.0)],
            domain: Rect::square(-1.0, 1.0),
            nonlinearity: Nonlinearity::Linear,
            newton_available: false,
            rhs_parametric: false,
            kind: Kind::Wavespeed,
            channels: vec![],
        },
        ProblemSpec {
            id: "nl-elliptic",
            summary: "-div((2 + sin(2 pi mu2 u + mu1)) grad u) = sin(4x1)/(1+mu3^2) + mu2 x2 on [-pi/2,pi/2]^2",
            n_fields: 1,
            param_domain: vec![(0.0, 1.0); 3],
            domain: Rect::square(-PI / 2.0, PI / 2.0),
            nonlinearity: Nonlinearity::Picard,
            newton_available: false,
            rhs_parametric: true,
            kind: Kind::NlElliptic,
            channels: vec![],
        },
        ProblemSpec {
            id: "cubic",
            summary: "-mu2 lap u + u (u - mu1)^2 = 100 sin(2 pi x1) cos(2 pi x1) on [0,1]^2",
            n_fields: 1,
            param_domain: vec![(0.4, 5.0), (0.4, 2.0)],
            domain: unit,
            nonlinearity: Nonlinearity::Newton,
            newton_available: true,
            rhs_parametric: false,
            kind: Kind::Cubic,
            channels: vec![],
        },
        ProblemSpec {
            id: "high-contrast",
            summary: "-div(kappa(x,mu) grad u) = sin(pi x1) sin(pi x2), five-term channel coefficient",
            n_fields: 1,
            param_domain: vec![(-1.0, 1.0); 3],
            domain: unit,
            nonlinearity: Nonlinearity::Linear,
            newton_available: false,
            rhs_parametric: false,
            kind: Kind::HighContrast,
            channels: vec![HighContrastField::five_term(unit)],
        },
        ProblemSpec {
            id: "nl-multiscale",
            summary: "-div(kappa(x,mu) exp(p) grad p) = 2 + sin(x1) cos(x2) on [0,1]^2",
            n_fields: 1,
            param_domain: vec![(0.0, 1.0); 3],
            domain: unit,
            nonlinearity: Nonlinearity::Picard,
            newton_available: false,
            rhs_parametric: false,
            kind: Kind::NlMultiscale,
            channels: vec![HighContrastField::five_term(unit)],
        },
        ProblemSpec {
            id: "coupled",
            summary: "two-field channel system with coupling 1e5/(1+|p1+p2|), unit sources",
            n_fields: 2,
            param_domain: vec![(0.0, 1.0); 2],
            domain: unit,
            nonlinearity: Nonlinearity::Picard,
            newton_available: false,
            rhs_parametric: false,
            kind: Kind::Coupled,
            channels: HighContrastField::coupled_family(unit).into(),
        },
        ProblemSpec {
            id: "manufactured",
            summary: "-lap u = f with exact u = sin(pi x) sin(pi y) on [0,1]^2",
            n_fields: 1,
            param_domain: vec![],
            domain: unit,
            nonlinearity: Nonlinearity::Linear,
            newton_available: false,
            rhs_parametric: false,
            kind: Kind::Manufactured,
            channels: vec![],
        },
    ]
});

pub fn registry() -> &'static [ProblemSpec] {
    &REGISTRY
}

pub fn get_problem(id: &str) -> Result<&'static ProblemSpec> {
    REGISTRY.iter().find(|p| p.id == id).ok_or_else(|| Error::UnknownProblem {
        id: id.to_string(),
        known: REGISTRY.iter().map(|p| p.id.to_string()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn registry_flags() {
        assert_eq!(get_problem("wavespeed").unwrap().nonlinearity, Nonlinearity::Linear);
        assert!(get_problem("nl-elliptic").unwrap().rhs_parametric);
        assert_eq!(get_problem("cubic").unwrap().nonlinearity, Nonlinearity::Newton);
        assert_eq!(get_problem("coupled").unwrap().n_fields, 2);
        let err = get_problem("nope").unwrap_err();
        assert!(err.to_string().contains("high-contrast"), "{err}");
    }

    #[test]
    fn alpha_substitutions() {
        assert_eq!(alphas(&[0.0, 0.0, 0.0])[0], 0.8);
        assert!((alphas(&[1.0, 0.0, 0.0])[0] - 1.2).abs() < 1e-15);
    }

    #[test]
    fn kappa_background_and_channel_values() {
        let field = HighContrastField::five_term(Rect::UNIT);
        for mu in [[0.0, 0.0, 0.0], [0.3, -0.7, 0.9], [-1.0, 1.0, -1.0]] {
            assert_eq!(eval_kappa(&field, &mu, (0.1, 0.1)), 1.0);
        }
        // x = 0.32 lies in the first κ2 strip, y = 0.1 in no horizontal strip.
        assert!((eval_kappa(&field, &[0.0, 0.0, 0.0], (0.32, 0.1)) - 1.1e4).abs() < 1e-9);
        assert_eq!(field.component(1, 0.32, 0.1), CHANNEL_VALUE);
        assert_eq!(field.component(4, 0.32, 0.1), 0.0);
        assert_eq!(field.component(4, 0.1, 0.1), 1.0);
    }

    #[test]
    fn cell_fractions_partition_each_cell() {
        let field = HighContrastField::five_term(Rect::UNIT);
        let grid = StructuredGrid::unit(7, 5).unwrap();
        let p = get_problem("high-contrast").unwrap();
        let table = p.cell_table(&grid);
        for e in 0..grid.n_elements() {
            let s: f64 = table.cell(e).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        // Whole domain: strip areas minus the overlaps claimed by earlier classes.
        let whole = field.cell_fractions(Rect::UNIT);
        assert!((whole[0] - 0.10).abs() < 1e-12);
        assert!((whole[1] - 0.10 * 0.9).abs() < 1e-12);
        assert!((whole[2] - 0.05 * 0.9).abs() < 1e-12);
        assert!((whole[3] - 0.05 * 0.85).abs() < 1e-12);
    }

    #[test]
    fn coarse_cells_see_every_channel_class() {
        let p = get_problem("high-contrast").unwrap();
        let table = p.cell_table(&StructuredGrid::unit(4, 4).unwrap());
        for class in 0..4 {
            assert!((0..16).any(|e| table.cell(e)[class] > 0.0), "class {class} invisible on 4x4");
        }
    }

    #[test]
    fn contrast_ratio_is_high() {
        let field = HighContrastField::five_term(Rect::UNIT);
        let mut rng_state = 7u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..10 {
            let mu = [2.0 * next() - 1.0, 2.0 * next() - 1.0, 2.0 * next() - 1.0];
            let values: Vec<f64> = (0..=40)
                .flat_map(|i| (0..=40).map(move |j| (i as f64 / 40.0, j as f64 / 40.0)))
                .map(|x| eval_kappa(&field, &mu, x))
                .collect();
            let max = values.iter().cloned().fold(f64::MIN, f64::max);
            let min = values.iter().cloned().fold(f64::MAX, f64::min);
            assert!(max / min >= 1e3);
        }
    }

    proptest! {
        #[test]
        fn alphas_stay_positive(m1 in -1.0f64..=1.0, m2 in -1.0f64..=1.0, m3 in -1.0f64..=1.0) {
            for a in alphas(&[m1, m2, m3]) {
                prop_assert!((0.3 - 1e-12..=1.9 + 1e-12).contains(&a));
            }
        }
    }
}
