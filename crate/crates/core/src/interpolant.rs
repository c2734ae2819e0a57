//! Training triples for flow matching: `Z ~ γ_d`, `X_1 ~ ν`, `t ~ U(0, τ)`,
//! with `X_t = (1 - t) Z + t X_1` and regression target `Y = X_1 - Z`.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{seeded_stream, stream};
use crate::target::{standard_normal, GaussianMixtureTarget};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTriples {
    pub z: Array2<f64>,
    pub x1: Array2<f64>,
    pub t: Array1<f64>,
    pub xt: Array2<f64>,
    pub y: Array2<f64>,
    pub tau: f64,
    pub seed: u64,
}

impl TrainingTriples {
    /// Assembles triples from given noise, data and times.
    pub fn from_parts(z: Array2<f64>, x1: Array2<f64>, t: Array1<f64>, tau: f64, seed: u64) -> Result<Self> {
        check_tau(tau)?;
        if z.dim() != x1.dim() {
            return Err(Error::InvalidArgument(format!(
                "noise shape {:?} differs from data shape {:?}",
                z.dim(),
                x1.dim()
            )));
        }
        if t.len() != z.nrows() {
            return Err(Error::DimensionMismatch { expected: z.nrows(), got: t.len() });
        }
        if let Some(bad) = t.iter().find(|&&s| !(0.0..=tau).contains(&s)) {
            return Err(Error::TimeOutOfRange(*bad));
        }
        let mut xt = Array2::zeros(z.dim());
        for (i, mut row) in xt.rows_mut().into_iter().enumerate() {
            let s = t[i];
            for j in 0..row.len() {
                row[j] = (1.0 - s) * z[(i, j)] + s * x1[(i, j)];
            }
        }
        let y = &x1 - &z;
        Ok(Self { z, x1, t, xt, y, tau, seed })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    /// Input matrix `[t, X_t]` with one row per triple.
    pub fn inputs(&self) -> Array2<f64> {
        let n = self.len();
        let d = self.dim();
        let mut out = Array2::zeros((n, d + 1));
        for i in 0..n {
            out[(i, 0)] = self.t[i];
            for j in 0..d {
                out[(i, j + 1)] = self.xt[(i, j)];
            }
        }
        out
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("tau must lie in (0, 1], got {tau}")))
    }
}

/// Samples `n` i.i.d. training triples with times uniform on `[0, tau]`.
pub fn sample_interpolant(
    target: &GaussianMixtureTarget,
    n: usize,
    tau: f64,
    seed: u64,
) -> Result<TrainingTriples> {
    check_tau(tau)?;
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let z = standard_normal(n, target.dim(), seed);
    let x1 = target.sample(n, seed);
    let mut rng = seeded_stream(seed, stream::TIME);
    let t = Array1::from_shape_simple_fn(n, || tau * rng.random::<f64>());
    TrainingTriples::from_parts(z, x1, t, tau, seed)
}
