//! Flow matching: a ReLU velocity model fitted by empirical risk minimisation
//! on interpolant triples.

mod mlp;
mod risk;
mod train;

pub use mlp::{Architecture, Checkpoint, MlpVelocityModel};
pub use risk::{excess_risk_vs_oracle, ExcessRisk};
pub use train::{empirical_risk_and_grad, train_erm, LossPoint, OptimizerConfig, OptimizerKind, TrainOutcome};
