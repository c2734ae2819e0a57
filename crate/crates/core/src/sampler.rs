//! Forward Euler for `dX/dt = v(t, X)` on a [`TimeGrid`].

use std::io::Write;

use ndarray::{s, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::VelocityField;
use crate::grid::TimeGrid;

/// Rows integrated together; chunks are independent.
const CHUNK_ROWS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EulerMode {
    Endpoints,
    Trajectory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EulerOutput {
    pub endpoints: Array2<f64>,
    /// State at every knot (`K + 1` entries) in trajectory mode.
    pub trajectory: Option<Vec<Array2<f64>>>,
}

/// `X̂_{t_k} = X̂_{t_{k-1}} + (t_k - t_{k-1}) v(t_{k-1}, X̂_{t_{k-1}})`.
pub fn euler_integrate(
    field: &dyn VelocityField,
    grid: &TimeGrid,
    x0: ArrayView2<f64>,
    mode: EulerMode,
) -> Result<EulerOutput> {
    if x0.ncols() != field.dim() {
        return Err(Error::DimensionMismatch { expected: field.dim(), got: x0.ncols() });
    }
    let n = x0.nrows();
    let starts: Vec<usize> = (0..n).step_by(CHUNK_ROWS).collect();
    let keep = mode == EulerMode::Trajectory;
    let chunks: Vec<Result<(Array2<f64>, Vec<Array2<f64>>)>> = starts
        .par_iter()
        .map(|&lo| {
            let hi = (lo + CHUNK_ROWS).min(n);
            integrate_chunk(field, grid, x0.slice(s![lo..hi, ..]), lo, keep)
        })
        .collect();

    let mut endpoints = Array2::zeros(x0.raw_dim());
    let mut trajectory = keep.then(|| vec![Array2::zeros(x0.raw_dim()); grid.steps() + 1]);
    for (&lo, chunk) in starts.iter().zip(chunks) {
        let (end, path) = chunk?;
        let hi = lo + end.nrows();
        endpoints.slice_mut(s![lo..hi, ..]).assign(&end);
        if let Some(traj) = trajectory.as_mut() {
            for (frame, part) in traj.iter_mut().zip(path) {
                frame.slice_mut(s![lo..hi, ..]).assign(&part);
            }
        }
    }
    Ok(EulerOutput { endpoints, trajectory })
}

fn integrate_chunk(
    field: &dyn VelocityField,
    grid: &TimeGrid,
    x0: ArrayView2<f64>,
    row_offset: usize,
    keep: bool,
) -> Result<(Array2<f64>, Vec<Array2<f64>>)> {
    let mut x = x0.to_owned();
    let mut path = Vec::new();
    if keep {
        path.push(x.clone());
    }
    for (k, w) in grid.knots().windows(2).enumerate() {
        let v = field.eval_at(w[0], x.view());
        if let Some(pos) = v.iter().position(|e| !e.is_finite()) {
            return Err(Error::NonFinite { step: k + 1, row: row_offset + pos / v.ncols() });
        }
        x.scaled_add(w[1] - w[0], &v);
        if keep {
            path.push(x.clone());
        }
    }
    Ok((x, path))
}

/// Exact flow of the standard-Gaussian oracle, `X_t = x_0 √(2t² - 2t + 1)`.
pub fn exact_gaussian_flow(t: f64, x0: ArrayView1<f64>) -> Result<ndarray::Array1<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::TimeOutOfRange(t));
    }
    Ok(&x0 * (2.0 * t * t - 2.0 * t + 1.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepCondition {
    /// `Σ_k (t_k - t_{k-1})³`
    pub sum_cubed: f64,
    /// `Υ = √(Σ_k Δ_k³)`, the step that makes a general grid comparable to a uniform one.
    pub implied_step: f64,
    pub max_step: f64,
    /// Uniform grid whose common step satisfies `Σ Δ³ ≤ Υ²`.
    pub uniform_ok: bool,
    /// The implied step never exceeds the largest step.
    pub general_ok: bool,
}

pub fn check_step_condition(grid: &TimeGrid) -> StepCondition {
    let deltas: Vec<f64> = grid.knots().windows(2).map(|w| w[1] - w[0]).collect();
    let sum_cubed: f64 = deltas.iter().map(|d| d.powi(3)).sum();
    let implied_step = sum_cubed.sqrt();
    let max_step = deltas.iter().cloned().fold(0.0, f64::max);
    let uniform_ok = grid
        .step()
        .is_some_and(|u| sum_cubed <= u * u * (1.0 + 1e-12));
    StepCondition {
        sum_cubed,
        implied_step,
        max_step,
        uniform_ok,
        general_ok: implied_step.is_finite() && implied_step <= max_step * (1.0 + 1e-12),
    }
}

/// Endpoints as CSV with header `x0,...,x{d-1}`.
pub fn write_points_csv<W: Write>(out: W, points: ArrayView2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record((0..points.ncols()).map(|j| format!("x{j}")))?;
    for row in points.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Trajectory as CSV with columns `k,t,i,x0..x{d-1}`.
pub fn write_trajectory_csv<W: Write>(out: W, grid: &TimeGrid, trajectory: &[Array2<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = trajectory.first().map_or(0, |f| f.ncols());
    let mut header = vec!["k".to_string(), "t".to_string(), "i".to_string()];
    header.extend((0..d).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for (k, (frame, t)) in trajectory.iter().zip(grid.knots()).enumerate() {
        for (i, row) in frame.rows().into_iter().enumerate() {
            let mut rec = vec![k.to_string(), t.to_string(), i.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}
