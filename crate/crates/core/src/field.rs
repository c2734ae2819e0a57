//! Velocity fields `v(t, x)` as consumed by the sampler and the metrics.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::oracle;
use crate::target::GaussianMixtureTarget;

pub trait VelocityField: Sync {
    fn dim(&self) -> usize;

    fn eval(&self, t: f64, x: ArrayView1<f64>) -> Array1<f64>;

    /// Row-wise evaluation with one time per row.
    fn eval_batch(&self, t: ArrayView1<f64>, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.dim()));
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            row.assign(&self.eval(t[i], x.row(i)));
        }
        out
    }

    /// Row-wise evaluation at a shared time.
    fn eval_at(&self, t: f64, x: ArrayView2<f64>) -> Array2<f64> {
        let ts = Array1::from_elem(x.nrows(), t);
        self.eval_batch(ts.view(), x)
    }
}

/// The closed-form velocity `v*` of a Gaussian-mixture target.
#[derive(Debug, Clone)]
pub struct OracleField {
    target: GaussianMixtureTarget,
}

impl OracleField {
    pub fn new(target: GaussianMixtureTarget) -> Self {
        Self { target }
    }

    pub fn target(&self) -> &GaussianMixtureTarget {
        &self.target
    }
}

impl VelocityField for OracleField {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn eval(&self, t: f64, x: ArrayView1<f64>) -> Array1<f64> {
        oracle::velocity_unchecked(&self.target, t, x)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroField(pub usize);

impl VelocityField for ZeroField {
    fn dim(&self) -> usize {
        self.0
    }

    fn eval(&self, _t: f64, _x: ArrayView1<f64>) -> Array1<f64> {
        Array1::zeros(self.0)
    }
}

/// Adapts a closure `(t, x) -> v` to [`VelocityField`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(f64, ArrayView1<f64>) -> Array1<f64> + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> VelocityField for FnField<F>
where
    F: Fn(f64, ArrayView1<f64>) -> Array1<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, x: ArrayView1<f64>) -> Array1<f64> {
        (self.f)(t, x)
    }
}
