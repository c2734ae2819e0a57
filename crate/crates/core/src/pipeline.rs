//! Experiment configuration and the sample → train → integrate → evaluate chain.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VelocityField;
use crate::flowmatch::{train_erm, MlpVelocityModel, OptimizerConfig, TrainOutcome};
use crate::grid::TimeGrid;
use crate::interpolant::sample_interpolant;
use crate::metrics::{w2_exact, MAX_ASSIGNMENT};
use crate::regularity::RegularityConfig;
use crate::rng::child_seed;
use crate::sampler::{euler_integrate, EulerMode};
use crate::target::{standard_normal, GaussianMixtureTarget, TargetConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub widths: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Scale of the initial output layer; 0 starts from the zero field.
    #[serde(default = "one")]
    pub output_scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Number of training triples.
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    /// Upper end of the training times; defaults to `1 - t̲`.
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub t_floor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Thresholds used when a run is scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub oracle_exact: f64,
    pub identity_residual: f64,
    pub sandwich: f64,
    pub lt_slope_max: f64,
    pub moment_refinement: f64,
    pub tail_std_errors: f64,
    pub truncation_ratio: f64,
    /// Slack on the early-stopping coupling bound.
    pub early_stopping_slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            oracle_exact: 1e-12,
            identity_residual: 1e-4,
            sandwich: 1e-8,
            lt_slope_max: 2.3,
            moment_refinement: 0.2,
            tail_std_errors: 3.0,
            truncation_ratio: 3.0,
            early_stopping_slack: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Checks {
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub target: TargetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub grid: GridConfig,
    pub eval: EvalConfig,
    #[serde(default)]
    pub checks: Checks,
    #[serde(default)]
    pub regularity: RegularityConfig,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Checks everything that can be checked before any computation starts.
    pub fn validate(&self) -> Result<()> {
        self.build_target()?;
        self.time_grid()?;
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.model.widths.is_empty() || self.model.widths.contains(&0) {
            return bad("model.widths must be a nonempty list of positive widths".into());
        }
        if self.train.n == 0 {
            return bad("train.n must be positive".into());
        }
        let tau = self.tau();
        if !(tau > 0.0 && tau <= 1.0) {
            return bad(format!("train.tau must lie in (0, 1], got {tau}"));
        }
        if self.eval.n == 0 {
            return bad("eval.n must be positive".into());
        }
        if self.eval.n > MAX_ASSIGNMENT {
            return Err(Error::BudgetExceeded { n: self.eval.n, max: MAX_ASSIGNMENT });
        }
        let opt = &self.train.optimizer;
        if !(opt.learning_rate > 0.0 && opt.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", opt.learning_rate));
        }
        Ok(())
    }

    pub fn build_target(&self) -> Result<GaussianMixtureTarget> {
        GaussianMixtureTarget::from_config(&self.target)
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::uniform(self.grid.k, self.grid.t_floor)
    }

    pub fn tau(&self) -> f64 {
        self.train.tau.unwrap_or(1.0 - self.grid.t_floor)
    }
}

pub struct TrainedModel {
    pub model: MlpVelocityModel,
    pub outcome: TrainOutcome,
    /// Empirical risk of `v̂ ≡ 0` on the same triples, `mean ‖X_1 - Z‖²`.
    pub zero_model_loss: f64,
}

/// Draws the training triples and fits the model by flow matching.
pub fn train_from_config(cfg: &ExperimentConfig) -> Result<TrainedModel> {
    let target = cfg.build_target()?;
    let triples = sample_interpolant(&target, cfg.train.n, cfg.tau(), cfg.train.seed)?;
    let mut model = MlpVelocityModel::new(target.dim(), &cfg.model.widths, cfg.model.seed, cfg.model.output_scale)?;
    let outcome = train_erm(&mut model, &triples, &cfg.train.optimizer)?;
    let zero_model_loss = triples.y.iter().map(|v| v * v).sum::<f64>() / triples.len() as f64;
    Ok(TrainedModel { model, outcome, zero_model_loss })
}

/// Euler endpoints from the evaluation noise of `seed`.
pub fn generate(field: &dyn VelocityField, grid: &TimeGrid, n: usize, seed: u64) -> Result<ndarray::Array2<f64>> {
    let z = standard_normal(n, field.dim(), seed);
    Ok(euler_integrate(field, grid, z.view(), EulerMode::Endpoints)?.endpoints)
}

/// The reference target sample paired with the evaluation noise of `seed`.
pub fn reference_sample(target: &GaussianMixtureTarget, n: usize, seed: u64) -> ndarray::Array2<f64> {
    target.sample(n, child_seed(seed, 1))
}

/// `W2` between generated points and a target sample. The noise and the
/// target sample depend only on `(n, seed)`, so different fields evaluated
/// with the same seed are compared on common random numbers.
pub fn w2_to_target(
    target: &GaussianMixtureTarget,
    field: &dyn VelocityField,
    grid: &TimeGrid,
    n: usize,
    seed: u64,
) -> Result<f64> {
    let generated = generate(field, grid, n, seed)?;
    w2_exact(generated.view(), reference_sample(target, n, seed).view())
}
