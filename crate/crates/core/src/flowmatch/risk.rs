use ndarray::Array1;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{OracleField, VelocityField};
use crate::rng::{seeded_stream, stream};
use crate::target::{standard_normal, GaussianMixtureTarget};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExcessRisk {
    pub mean: f64,
    pub std_error: f64,
    pub n_mc: usize,
}

/// Monte-Carlo estimate of `E‖v̂(t, X_t) - v*(t, X_t)‖²` with `t ~ U(0, τ)`.
pub fn excess_risk_vs_oracle(
    model: &dyn VelocityField,
    target: &GaussianMixtureTarget,
    tau: f64,
    n_mc: usize,
    seed: u64,
) -> Result<ExcessRisk> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidArgument(format!("tau must lie in (0, 1], got {tau}")));
    }
    if n_mc < 2 {
        return Err(Error::InvalidArgument("need at least two Monte-Carlo draws".into()));
    }
    if model.dim() != target.dim() {
        return Err(Error::DimensionMismatch { expected: target.dim(), got: model.dim() });
    }
    let d = target.dim();
    let z = standard_normal(n_mc, d, seed);
    let x1 = target.sample(n_mc, seed);
    let mut rng = seeded_stream(seed, stream::TIME);
    let t = Array1::from_shape_simple_fn(n_mc, || tau * rng.random::<f64>());
    let mut xt = z;
    for (i, mut row) in xt.rows_mut().into_iter().enumerate() {
        let s = t[i];
        row *= 1.0 - s;
        row.scaled_add(s, &x1.row(i));
    }
    let oracle = OracleField::new(target.clone());
    let truth = oracle.eval_batch(t.view(), xt.view());
    let fit = model.eval_batch(t.view(), xt.view());
    let sq: Vec<f64> = (&fit - &truth).rows().into_iter().map(|r| r.dot(&r)).collect();
    let n = sq.len() as f64;
    let mean = sq.iter().sum::<f64>() / n;
    let var = sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(ExcessRisk { mean, std_error: (var / n).sqrt(), n_mc })
}
