//! Central finite-difference stencils.

use ndarray::{Array1, Array2, ArrayView1};

/// Step used for spatial derivatives.
pub const STEP_X: f64 = 1e-4;
/// Step used for time derivatives.
pub const STEP_T: f64 = 1e-5;
/// Step used for second derivatives; the `h⁻²` round-off of a 1e-4 step is too large.
pub const STEP_HESSIAN: f64 = 1e-3;

pub fn derivative<F>(f: F, t: f64, h: f64) -> Array1<f64>
where
    F: Fn(f64) -> Array1<f64>,
{
    (f(t + h) - f(t - h)) / (2.0 * h)
}

pub fn gradient<F>(f: F, x: ArrayView1<f64>, h: f64) -> Array1<f64>
where
    F: Fn(ArrayView1<f64>) -> f64,
{
    let mut probe = x.to_owned();
    Array1::from_shape_fn(x.len(), |j| {
        let base = probe[j];
        probe[j] = base + h;
        let up = f(probe.view());
        probe[j] = base - h;
        let down = f(probe.view());
        probe[j] = base;
        (up - down) / (2.0 * h)
    })
}

/// `J[i][j] = ∂f_i / ∂x_j`.
pub fn jacobian<F>(f: F, x: ArrayView1<f64>, h: f64) -> Array2<f64>
where
    F: Fn(ArrayView1<f64>) -> Array1<f64>,
{
    let d = x.len();
    let mut probe = x.to_owned();
    let mut cols = Vec::with_capacity(d);
    for j in 0..d {
        let base = probe[j];
        probe[j] = base + h;
        let up = f(probe.view());
        probe[j] = base - h;
        let down = f(probe.view());
        probe[j] = base;
        cols.push((up - down) / (2.0 * h));
    }
    let m = cols.first().map_or(0, |c| c.len());
    Array2::from_shape_fn((m, d), |(i, j)| cols[j][i])
}

pub fn hessian<F>(f: F, x: ArrayView1<f64>, h: f64) -> Array2<f64>
where
    F: Fn(ArrayView1<f64>) -> f64,
{
    let d = x.len();
    let mut probe = x.to_owned();
    let centre = f(x);
    let mut out = Array2::zeros((d, d));
    for a in 0..d {
        let base = probe[a];
        probe[a] = base + h;
        let up = f(probe.view());
        probe[a] = base - h;
        let down = f(probe.view());
        probe[a] = base;
        out[(a, a)] = (up - 2.0 * centre + down) / (h * h);
        for b in (a + 1)..d {
            let mut eval = |sa: f64, sb: f64| {
                let (ba, bb) = (probe[a], probe[b]);
                probe[a] = ba + sa * h;
                probe[b] = bb + sb * h;
                let v = f(probe.view());
                probe[a] = ba;
                probe[b] = bb;
                v
            };
            let mixed = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * h * h);
            out[(a, b)] = mixed;
            out[(b, a)] = mixed;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn polynomial_derivatives() {
        let f = |x: ArrayView1<f64>| x[0] * x[0] * x[1] + 3.0 * x[1];
        let x = array![1.5, -2.0];
        let g = gradient(f, x.view(), STEP_X);
        assert!((g[0] - 2.0 * 1.5 * -2.0).abs() < 1e-8);
        assert!((g[1] - (1.5 * 1.5 + 3.0)).abs() < 1e-8);
        let h = hessian(f, x.view(), STEP_HESSIAN);
        assert!((h[(0, 0)] - 2.0 * -2.0).abs() < 1e-6);
        assert!((h[(0, 1)] - 3.0).abs() < 1e-6);
        assert!(h[(1, 1)].abs() < 1e-6);

        let j = jacobian(|x| array![x[0] * x[1], x[1].sin()], x.view(), STEP_X);
        assert!((j[(0, 0)] + 2.0).abs() < 1e-8 && (j[(0, 1)] - 1.5).abs() < 1e-8);
        assert!(j[(1, 0)].abs() < 1e-12 && (j[(1, 1)] - (-2.0f64).cos()).abs() < 1e-8);

        let d = derivative(|t| array![t.powi(3)], 0.5, STEP_T);
        assert!((d[0] - 0.75).abs() < 1e-8);
    }
}
