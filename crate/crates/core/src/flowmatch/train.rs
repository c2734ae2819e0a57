use ndarray::{s, Array2, ArrayView2};
use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mlp::MlpVelocityModel;
use crate::error::{Error, Result};
use crate::interpolant::TrainingTriples;
use crate::rng::{seeded_stream, stream};

/// Rows per gradient shard. Shards are reduced in index order so the summed
/// gradient does not depend on thread scheduling.
const SHARD_ROWS: usize = 512;

/// Abort when the loss stays above this multiple of the initial loss ...
const DIVERGENCE_FACTOR: f64 = 10.0;
/// ... for this many consecutive steps.
const DIVERGENCE_PATIENCE: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Gradient descent with heavy-ball momentum.
    #[default]
    Momentum,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    #[serde(default)]
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub iterations: usize,
    #[serde(default)]
    pub momentum: f64,
    /// `None` trains on the full sample every step.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Momentum,
            learning_rate: 1e-2,
            iterations: 1000,
            momentum: 0.9,
            batch_size: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Full-data loss before each update, then once more after the last one.
    pub trace: Vec<LossPoint>,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Loss and gradient over all rows, sharded across threads.
pub fn empirical_risk_and_grad(model: &MlpVelocityModel, triples: &TrainingTriples) -> (f64, Vec<f64>) {
    let inputs = triples.inputs();
    sharded_loss_and_grad(model, inputs.view(), triples.y.view())
}

fn sharded_loss_and_grad(model: &MlpVelocityModel, inputs: ArrayView2<f64>, targets: ArrayView2<f64>) -> (f64, Vec<f64>) {
    let n = inputs.nrows();
    if n <= SHARD_ROWS {
        return model.loss_and_grad(inputs, targets);
    }
    let starts: Vec<usize> = (0..n).step_by(SHARD_ROWS).collect();
    let parts: Vec<(f64, Vec<f64>, usize)> = starts
        .par_iter()
        .map(|&lo| {
            let hi = (lo + SHARD_ROWS).min(n);
            let (l, g) = model.loss_and_grad(inputs.slice(s![lo..hi, ..]), targets.slice(s![lo..hi, ..]));
            (l, g, hi - lo)
        })
        .collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; model.param_count()];
    for (l, g, rows) in parts {
        let w = rows as f64 / n as f64;
        loss += w * l;
        for (acc, gi) in grad.iter_mut().zip(g) {
            *acc += w * gi;
        }
    }
    (loss, grad)
}

fn sharded_loss(model: &MlpVelocityModel, inputs: ArrayView2<f64>, targets: ArrayView2<f64>) -> f64 {
    let n = inputs.nrows();
    let starts: Vec<usize> = (0..n).step_by(SHARD_ROWS).collect();
    let parts: Vec<(f64, usize)> = starts
        .par_iter()
        .map(|&lo| {
            let hi = (lo + SHARD_ROWS).min(n);
            (model.loss(inputs.slice(s![lo..hi, ..]), targets.slice(s![lo..hi, ..])), hi - lo)
        })
        .collect();
    parts.into_iter().map(|(l, rows)| l * rows as f64 / n as f64).sum()
}

/// Minimises the empirical flow-matching risk in place.
pub fn train_erm(model: &mut MlpVelocityModel, triples: &TrainingTriples, cfg: &OptimizerConfig) -> Result<TrainOutcome> {
    if triples.dim() != model.architecture().d {
        return Err(Error::DimensionMismatch { expected: model.architecture().d, got: triples.dim() });
    }
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate > 0.0) {
        return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", cfg.learning_rate)));
    }
    if !(0.0..1.0).contains(&cfg.momentum) {
        return Err(Error::InvalidArgument(format!("momentum must lie in [0, 1), got {}", cfg.momentum)));
    }
    let n = triples.len();
    let inputs = triples.inputs();
    let targets = &triples.y;
    let batch = cfg.batch_size.filter(|&b| b > 0 && b < n);
    let mut batch_rng = seeded_stream(cfg.seed, stream::BATCH);

    let p = model.param_count();
    let mut velocity = vec![0.0; p];
    let mut second = vec![0.0; p];
    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);

    let initial_loss = sharded_loss(model, inputs.view(), targets.view());
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    let mut above = 0usize;

    for step in 0..cfg.iterations {
        let (full_loss, grad) = match batch {
            None => sharded_loss_and_grad(model, inputs.view(), targets.view()),
            Some(b) => {
                let idx = sample_indices(&mut batch_rng, n, b).into_vec();
                let bx = Array2::from_shape_fn((b, inputs.ncols()), |(i, j)| inputs[(idx[i], j)]);
                let by = Array2::from_shape_fn((b, targets.ncols()), |(i, j)| targets[(idx[i], j)]);
                let (_, g) = sharded_loss_and_grad(model, bx.view(), by.view());
                (sharded_loss(model, inputs.view(), targets.view()), g)
            }
        };
        trace.push(LossPoint { step, loss: full_loss });

        if !full_loss.is_finite() || full_loss > DIVERGENCE_FACTOR * initial_loss {
            above += 1;
            if above >= DIVERGENCE_PATIENCE || !full_loss.is_finite() {
                return Err(Error::Diverged { step, loss: full_loss, initial: initial_loss });
            }
        } else {
            above = 0;
        }

        let params = model.params_mut();
        match cfg.kind {
            OptimizerKind::Momentum => {
                for ((w, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                    *v = cfg.momentum * *v - cfg.learning_rate * g;
                    *w += *v;
                }
            }
            OptimizerKind::Adam => {
                let k = (step + 1) as i32;
                let c1 = 1.0 - beta1.powi(k);
                let c2 = 1.0 - beta2.powi(k);
                for (((w, m), v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(second.iter_mut()).zip(&grad) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *w -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
        }
    }
    let final_loss = sharded_loss(model, inputs.view(), targets.view());
    trace.push(LossPoint { step: cfg.iterations, loss: final_loss });
    Ok(TrainOutcome { trace, initial_loss, final_loss })
}
