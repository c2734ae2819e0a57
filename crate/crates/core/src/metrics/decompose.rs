use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::w2_exact;
use crate::error::Result;
use crate::field::{OracleField, VelocityField};
use crate::grid::TimeGrid;
use crate::rng::child_seed;
use crate::sampler::{euler_integrate, EulerMode};
use crate::target::{standard_normal, GaussianMixtureTarget};

/// The reference grid is this many times finer than the run grid.
pub const FINE_GRID_FACTOR: usize = 8;

/// Empirical terms of `W2(p̂_{1-t̲}, p_1) ≤ disc + vel + early`.
///
/// All terms are exact empirical `W2` values between `n`-point clouds.
/// `sampling_floor` links the oracle flow (started from the run noise) to an
/// independent coupled draw of `X_{1-t̲}`, so that
/// `total ≤ discretization + velocity_estimation + sampling_floor + early_stopping`
/// holds exactly by the triangle inequality on empirical measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub discretization: f64,
    pub velocity_estimation: f64,
    pub early_stopping: f64,
    pub total: f64,
    pub sampling_floor: f64,
    /// `t̲ √(E‖Z‖² + E‖X_1‖²)`, the coupling bound on the early-stopping term.
    pub early_stopping_bound: f64,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub t_floor: f64,
    pub seed: u64,
}

impl ErrorReport {
    pub fn sum_of_terms(&self) -> f64 {
        self.discretization + self.velocity_estimation + self.early_stopping
    }

    /// Triangle-inequality consistency of the four measured legs.
    pub fn is_consistent(&self) -> bool {
        self.total <= self.sum_of_terms() + self.sampling_floor + 1e-9
    }
}

/// `t̲ √(E‖Z‖² + E‖X_1‖²)`.
pub fn early_stopping_bound(target: &GaussianMixtureTarget, t_floor: f64) -> f64 {
    t_floor * (target.dim() as f64 + target.second_moment()).sqrt()
}

/// `(X_{1-t̲}, X_1)` built from one shared draw of `(Z, X_1)`.
pub fn coupled_early_stopping_draws(
    target: &GaussianMixtureTarget,
    t_floor: f64,
    n: usize,
    seed: u64,
) -> (Array2<f64>, Array2<f64>) {
    let noise = standard_normal(n, target.dim(), seed);
    let x1 = target.sample(n, seed);
    (&noise * t_floor + &x1 * (1.0 - t_floor), x1)
}

/// Coupled estimate of `W2(p_{1-t̲}, p_1)`.
pub fn early_stopping_term(target: &GaussianMixtureTarget, t_floor: f64, n: usize, seed: u64) -> Result<f64> {
    let (early, x1) = coupled_early_stopping_draws(target, t_floor, n, seed);
    w2_exact(early.view(), x1.view())
}

pub fn decompose_errors(
    target: &GaussianMixtureTarget,
    model: &dyn VelocityField,
    grid: &TimeGrid,
    n: usize,
    seed: u64,
) -> Result<ErrorReport> {
    let d = target.dim();
    let t_floor = 1.0 - grid.end();
    let fine = grid.refine(FINE_GRID_FACTOR);
    let oracle = OracleField::new(target.clone());

    let z = standard_normal(n, d, seed);
    let run = euler_integrate(model, grid, z.view(), EulerMode::Endpoints)?.endpoints;
    let model_fine = euler_integrate(model, &fine, z.view(), EulerMode::Endpoints)?.endpoints;
    let oracle_fine = euler_integrate(&oracle, &fine, z.view(), EulerMode::Endpoints)?.endpoints;

    let (early, x1) = coupled_early_stopping_draws(target, t_floor, n, child_seed(seed, 1));

    Ok(ErrorReport {
        discretization: w2_exact(run.view(), model_fine.view())?,
        velocity_estimation: w2_exact(model_fine.view(), oracle_fine.view())?,
        early_stopping: w2_exact(early.view(), x1.view())?,
        total: w2_exact(run.view(), x1.view())?,
        sampling_floor: w2_exact(oracle_fine.view(), early.view())?,
        early_stopping_bound: early_stopping_bound(target, t_floor),
        n,
        k: grid.steps(),
        t_floor,
        seed,
    })
}
