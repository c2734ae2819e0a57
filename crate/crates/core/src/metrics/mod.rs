//! Wasserstein-2 distances and the three-term error decomposition.

pub mod assignment;
mod decompose;

pub use decompose::{
    coupled_early_stopping_draws, decompose_errors, early_stopping_bound, early_stopping_term, ErrorReport,
    FINE_GRID_FACTOR,
};

use ndarray::{ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Largest point cloud accepted by [`w2_exact`].
pub const MAX_ASSIGNMENT: usize = 4096;

/// Empirical `W2` between equal-size clouds:
/// `W2² = min_π (1/n) Σ_i ‖a_i - b_{π(i)}‖²`, solved exactly.
pub fn w2_exact(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::InvalidArgument(format!(
            "point clouds differ in shape: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let n = a.nrows();
    if n > MAX_ASSIGNMENT {
        return Err(Error::BudgetExceeded { n, max: MAX_ASSIGNMENT });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("point clouds are empty".into()));
    }
    let a = a.as_standard_layout();
    let b = b.as_standard_layout();
    let (ra, rb) = (a.as_slice().unwrap(), b.as_slice().unwrap());
    let d = a.ncols();
    let cost = |i: usize, j: usize| -> f64 {
        ra[i * d..(i + 1) * d]
            .iter()
            .zip(&rb[j * d..(j + 1) * d])
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    };
    let mut matrix = vec![0.0; n * n];
    for (i, row) in matrix.chunks_mut(n).enumerate() {
        for (j, c) in row.iter_mut().enumerate() {
            *c = cost(i, j);
        }
    }
    let assign = assignment::solve(n, &matrix);
    let total: f64 = assign.iter().enumerate().map(|(i, &j)| cost(i, j)).sum();
    Ok((total / n as f64).sqrt())
}

/// Closed-form `W2` between `N(m1, s1² I)` and `N(m2, s2² I)`:
/// `W2² = ‖m1 - m2‖² + d (s1 - s2)²`.
pub fn w2_gaussian_closed_form(m1: ArrayView1<f64>, m2: ArrayView1<f64>, s1: f64, s2: f64) -> Result<f64> {
    if m1.len() != m2.len() {
        return Err(Error::DimensionMismatch { expected: m1.len(), got: m2.len() });
    }
    if s1 < 0.0 || s2 < 0.0 {
        return Err(Error::InvalidArgument("standard deviations must be nonnegative".into()));
    }
    let shift: f64 = m1.iter().zip(m2.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((shift + m1.len() as f64 * (s1 - s2).powi(2)).sqrt())
}

/// Least-squares slope of `ln ys` against `ln xs`; all values must be positive.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    least_squares_slope(&lx, &ly)
}

/// Least-squares slope of `ys` against `xs`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
