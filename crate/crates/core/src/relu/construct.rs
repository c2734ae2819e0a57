use ndarray::{array, s, Array1, Array2, ArrayView2};

use super::network::{Layer, ReluNetwork};
use crate::error::{Error, Result};

/// `ψ(z)`: 1 on `|z| ≤ 1`, `2 - |z|` on `1 ≤ |z| ≤ 2`, 0 beyond.
pub fn trapezoid(z: f64) -> f64 {
    let a = z.abs();
    if a <= 1.0 {
        1.0
    } else if a <= 2.0 {
        2.0 - a
    } else {
        0.0
    }
}

/// `x = ρ(x) - ρ(-x)` coordinate-wise: depth 1, width `2d`.
pub fn build_identity(d: usize) -> Result<ReluNetwork> {
    let eye = Array2::<f64>::eye(d);
    let mut w1 = Array2::zeros((2 * d, d));
    w1.slice_mut(s![..d, ..]).assign(&eye);
    w1.slice_mut(s![d.., ..]).assign(&(-&eye));
    let mut w2 = Array2::zeros((d, 2 * d));
    w2.slice_mut(s![.., ..d]).assign(&eye);
    w2.slice_mut(s![.., d..]).assign(&(-&eye));
    ReluNetwork::new(vec![Layer::new(w1, Array1::zeros(2 * d))?, Layer::new(w2, Array1::zeros(d))?])
}

/// `C_A(x) = ρ(x + A1) - ρ(x - A1) - A1`, the coordinate-wise clamp to
/// `[-A, A]`: depth 1, width `2d`.
pub fn build_clipper(a: f64, d: usize) -> Result<ReluNetwork> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidArgument(format!("clipping level must be positive, got {a}")));
    }
    let eye = Array2::<f64>::eye(d);
    let mut w1 = Array2::zeros((2 * d, d));
    w1.slice_mut(s![..d, ..]).assign(&eye);
    w1.slice_mut(s![d.., ..]).assign(&eye);
    let mut b1 = Array1::from_elem(2 * d, a);
    b1.slice_mut(s![d..]).fill(-a);
    let mut w2 = Array2::zeros((d, 2 * d));
    w2.slice_mut(s![.., ..d]).assign(&eye);
    w2.slice_mut(s![.., d..]).assign(&(-&eye));
    ReluNetwork::new(vec![Layer::new(w1, b1)?, Layer::new(w2, Array1::from_elem(d, -a))?])
}

// ψ(z) = ρ(z+2) - ρ(z+1) - ρ(z-1) + ρ(z-2)
const HAT_SHIFTS: [f64; 4] = [2.0, 1.0, -1.0, -2.0];
const HAT_SIGNS: [f64; 4] = [1.0, -1.0, -1.0, 1.0];

fn check_m(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidArgument("the time partition needs M ≥ 1".into()));
    }
    Ok(())
}

/// Hidden layer of the four ReLUs of `φ_j(t) = ψ(3M(t - j/M))`, `j = 0..=M`.
fn hat_layer(m: usize) -> Layer {
    let scale = 3.0 * m as f64;
    let n = 4 * (m + 1);
    let w = Array2::from_elem((n, 1), scale);
    let b = Array1::from_shape_fn(n, |i| HAT_SHIFTS[i % 4] - 3.0 * (i / 4) as f64);
    Layer { w, b }
}

/// `φ_0, ..., φ_M` with `φ_j(t) = ψ(3M(t - j/M))`, each a depth-1, width-4
/// network; they sum to one on `[0, 1]`.
pub fn build_time_pou(m: usize) -> Result<Vec<ReluNetwork>> {
    check_m(m)?;
    let scale = 3.0 * m as f64;
    (0..=m)
        .map(|j| {
            let w1 = Array2::from_elem((4, 1), scale);
            let b1 = Array1::from_iter(HAT_SHIFTS.iter().map(|s| s - 3.0 * j as f64));
            let w2 = Array2::from_shape_vec((1, 4), HAT_SIGNS.to_vec()).unwrap();
            ReluNetwork::new(vec![Layer::new(w1, b1)?, Layer::new(w2, array![0.0])?])
        })
        .collect()
}

fn time_output_layer(values: ArrayView2<f64>) -> Layer {
    let (knots, k) = values.dim();
    let w = Array2::from_shape_fn((k, 4 * knots), |(r, i)| HAT_SIGNS[i % 4] * values[(i / 4, r)]);
    Layer { w, b: Array1::zeros(k) }
}

fn check_samples(values: ArrayView2<f64>, m: usize) -> Result<()> {
    check_m(m)?;
    if values.nrows() != m + 1 {
        return Err(Error::DimensionMismatch { expected: m + 1, got: values.nrows() });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("knot values must be finite".into()));
    }
    Ok(())
}

/// `f̃(t) = Σ_j φ_j(t) f(j/M)` from the samples `f(0), f(1/M), ..., f(1)`:
/// depth 1, width `4(M+1)`.
pub fn build_time_approximant(samples: &[f64], m: usize) -> Result<ReluNetwork> {
    let values = Array2::from_shape_vec((samples.len(), 1), samples.to_vec()).unwrap();
    check_samples(values.view(), m)?;
    ReluNetwork::new(vec![hat_layer(m), time_output_layer(values.view())])
}

/// Time-direction skeleton of a space-time approximant: on input `(t, x)`
/// returns `(Σ_j φ_j(t) v_j, C_A(x))`, where row `j` of `values` is `v_j`.
pub fn build_time_skeleton(values: ArrayView2<f64>, m: usize, a: f64, d: usize) -> Result<ReluNetwork> {
    check_samples(values, m)?;
    let time = ReluNetwork::new(vec![hat_layer(m), time_output_layer(values)])?;
    time.parallel(&build_clipper(a, d)?)
}

/// Kinks of a depth-1 network on scalar input that lie in `[lo, hi]`,
/// together with the endpoints, sorted.
fn breakpoints(net: &ReluNetwork, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if net.input_dim() != 1 || net.stats().depth != 1 {
        return Err(Error::InvalidArgument("breakpoints are enumerated for depth-1 scalar networks only".into()));
    }
    let first = &net.layers()[0];
    let mut pts: Vec<f64> = first
        .w
        .column(0)
        .iter()
        .zip(first.b.iter())
        .filter(|(w, _)| **w != 0.0)
        .map(|(w, b)| -b / w)
        .filter(|t| (lo..=hi).contains(t))
        .collect();
    pts.extend([lo, hi]);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    Ok(pts)
}

fn eval_scalar(net: &ReluNetwork, t: f64) -> f64 {
    net.eval(array![t].view()).expect("scalar network")[0]
}

/// `max |net(t) - f(t)|` over `n_grid + 1` uniform points of `[0, 1]` and
/// every kink of the network.
pub fn max_error_1d(net: &ReluNetwork, f: impl Fn(f64) -> f64, n_grid: usize) -> Result<f64> {
    let mut ts = breakpoints(net, 0.0, 1.0)?;
    ts.extend((0..=n_grid).map(|i| i as f64 / n_grid as f64));
    Ok(ts.iter().map(|&t| (eval_scalar(net, t) - f(t)).abs()).fold(0.0, f64::max))
}

/// Lipschitz constant of a depth-1 scalar network on `[0, 1]`: the largest
/// slope between consecutive kinks, which is exact for piecewise-linear maps.
pub fn max_slope_1d(net: &ReluNetwork) -> Result<f64> {
    let ts = breakpoints(net, 0.0, 1.0)?;
    let vals: Vec<f64> = ts.iter().map(|&t| eval_scalar(net, t)).collect();
    Ok(ts
        .windows(2)
        .zip(vals.windows(2))
        .filter(|(t, _)| t[1] > t[0])
        .map(|(t, v)| ((v[1] - v[0]) / (t[1] - t[0])).abs())
        .fold(0.0, f64::max))
}
