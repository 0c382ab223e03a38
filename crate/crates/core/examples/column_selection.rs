//! The dense kernels on their own: greedy column selection, orthonormalization
//! and least-squares fitting of a snapshot matrix.

use bifirom::linalg::{gram_schmidt, least_squares_gram, pivoted_cholesky_select};
use nalgebra::{DMatrix, DVector};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Columns sampled from a smooth two-parameter family, so the numerical rank is small.
    let xs: Vec<f64> = (0..200).map(|i| i as f64 / 199.0).collect();
    let mus: Vec<f64> = (0..40).map(|j| 0.5 + j as f64 / 13.0).collect();
    let s = DMatrix::from_fn(xs.len(), mus.len(), |i, j| (-mus[j] * xs[i]).exp() * (1.0 + xs[i] * mus[j]).sin());

    let sel = pivoted_cholesky_select(&s, 6)?;
    println!("selected columns {:?}", sel.pivot_indices);

    let picked = s.select_columns(&sel.pivot_indices);
    let q = gram_schmidt(&picked)?;
    let proj_err = (&s - &q * q.tr_mul(&s)).norm() / s.norm();
    println!("projection error of all columns onto the span: {proj_err:.2e}");

    let target: DVector<f64> = s.column(17).into();
    let fit = least_squares_gram(&picked.tr_mul(&picked), &picked.tr_mul(&target))?;
    println!("column 17 as a combination of the selected ones: {:.4?}", fit.coeffs.as_slice());
    println!("fit residual {:.2e}", (&picked * &fit.coeffs - &target).norm() / target.norm());
    Ok(())
}
