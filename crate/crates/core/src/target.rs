//! Gaussian-mixture targets `ν = N(0, σ²I) * ρ` with `ρ` a finite discrete
//! measure, and the marginal law of the linear interpolant
//! `X_t = (1 - t) Z + t X_1`.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded_stream, stream};

/// Plain-text description of a target, as read from JSON configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetConfig {
    pub dim: usize,
    pub sigma: f64,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
}

/// Isotropic Gaussian mixture with a shared component standard deviation.
///
/// Construction normalises the weights and re-centres the means so that the
/// mixture has zero mean; the applied shift is kept in [`Self::recentered_by`].
#[derive(Debug, Clone)]
pub struct GaussianMixtureTarget {
    weights: Array1<f64>,
    means: Array2<f64>,
    sigma: f64,
    radius: f64,
    recentered_by: Option<Array1<f64>>,
}

const WEIGHT_SUM_SLACK: f64 = 1e-6;
const MEAN_TOLERANCE: f64 = 1e-9;

impl GaussianMixtureTarget {
    pub fn new(weights: Vec<f64>, means: Array2<f64>, sigma: f64) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::InvalidTarget("at least one component is required".into()));
        }
        if means.nrows() != k {
            return Err(Error::InvalidTarget(format!(
                "{k} weights but {} means",
                means.nrows()
            )));
        }
        if means.ncols() == 0 {
            return Err(Error::InvalidTarget("dimension must be positive".into()));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidTarget(format!("sigma must be positive, got {sigma}")));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidTarget("weights must be finite and positive".into()));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidTarget("means must be finite".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_SLACK {
            return Err(Error::InvalidTarget(format!("weights sum to {total}, expected 1")));
        }
        let weights = Array1::from(weights) / total;

        let mut means = means;
        let centre = weights.dot(&means);
        let recentered_by = if centre.iter().any(|c| c.abs() > MEAN_TOLERANCE) {
            for mut row in means.rows_mut() {
                row -= &centre;
            }
            Some(centre)
        } else {
            None
        };
        let radius = means
            .rows()
            .into_iter()
            .map(|m| m.dot(&m).sqrt())
            .fold(0.0, f64::max);

        Ok(Self { weights, means, sigma, radius, recentered_by })
    }

    pub fn from_config(cfg: &TargetConfig) -> Result<Self> {
        let k = cfg.means.len();
        let mut means = Array2::zeros((k, cfg.dim));
        for (i, m) in cfg.means.iter().enumerate() {
            if m.len() != cfg.dim {
                return Err(Error::InvalidTarget(format!(
                    "mean {i} has length {}, expected dim {}",
                    m.len(),
                    cfg.dim
                )));
            }
            means.row_mut(i).assign(&ArrayView1::from(m.as_slice()));
        }
        Self::new(cfg.weights.clone(), means, cfg.sigma)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: TargetConfig = serde_json::from_str(&text)?;
        Self::from_config(&cfg)
    }

    pub fn to_config(&self) -> TargetConfig {
        TargetConfig {
            dim: self.dim(),
            sigma: self.sigma,
            weights: self.weights.to_vec(),
            means: self.means.rows().into_iter().map(|r| r.to_vec()).collect(),
        }
    }

    /// The standard Gaussian `γ_d`.
    pub fn standard_gaussian(dim: usize) -> Self {
        Self::new(vec![1.0], Array2::zeros((1, dim)), 1.0).expect("valid target")
    }

    /// Equal-weight pair of components at `±mean`.
    pub fn symmetric_pair(mean: &[f64], sigma: f64) -> Result<Self> {
        let d = mean.len();
        let mut means = Array2::zeros((2, d));
        for j in 0..d {
            means[(0, j)] = mean[j];
            means[(1, j)] = -mean[j];
        }
        Self::new(vec![0.5, 0.5], means, sigma)
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn means(&self) -> &Array2<f64> {
        &self.means
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `R = max_k ‖μ_k‖₂`.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn recentered_by(&self) -> Option<&Array1<f64>> {
        self.recentered_by.as_ref()
    }

    /// `E‖X_1‖²`.
    pub fn second_moment(&self) -> f64 {
        let spread: f64 = self
            .means
            .rows()
            .into_iter()
            .zip(self.weights.iter())
            .map(|(m, w)| w * m.dot(&m))
            .sum();
        spread + self.dim() as f64 * self.sigma * self.sigma
    }

    /// `Cov(X_1) = Σ_k w_k μ_k μ_kᵀ + σ² I` (the mixture mean is zero).
    pub fn covariance(&self) -> Array2<f64> {
        let d = self.dim();
        let mut cov = Array2::eye(d) * (self.sigma * self.sigma);
        for (m, w) in self.means.rows().into_iter().zip(self.weights.iter()) {
            for a in 0..d {
                for b in 0..d {
                    cov[(a, b)] += w * m[a] * m[b];
                }
            }
        }
        cov
    }

    /// Per-component variance of `X_t`: `(1 - t)² + t² σ²`.
    pub fn marginal_variance(&self, t: f64) -> f64 {
        (1.0 - t).powi(2) + t * t * self.sigma * self.sigma
    }

    /// Draws `n` i.i.d. samples together with their component labels.
    pub fn sample_labelled(&self, n: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = seeded_stream(seed, stream::TARGET);
        let d = self.dim();
        let cumulative: Vec<f64> = self
            .weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        let last = cumulative.len() - 1;
        let mut out = Array2::zeros((n, d));
        let mut labels = Vec::with_capacity(n);
        for mut row in out.rows_mut() {
            let u: f64 = rng.random::<f64>() * cumulative[last];
            let k = cumulative.iter().position(|&c| u < c).unwrap_or(last);
            labels.push(k);
            for j in 0..d {
                let e: f64 = StandardNormal.sample(&mut rng);
                row[j] = self.means[(k, j)] + self.sigma * e;
            }
        }
        (out, labels)
    }

    /// Draws `n` i.i.d. samples from the target; bit-identical for a fixed seed.
    pub fn sample(&self, n: usize, seed: u64) -> Array2<f64> {
        self.sample_labelled(n, seed).0
    }

    /// Log density of `X_t` at `x`: `Σ_k w_k N(x; t μ_k, ((1-t)² + t²σ²) I)`.
    pub fn log_marginal_pdf(&self, t: f64, x: ArrayView1<f64>) -> f64 {
        let v = self.marginal_variance(t);
        let d = self.dim() as f64;
        let logs: Vec<f64> = self
            .means
            .rows()
            .into_iter()
            .zip(self.weights.iter())
            .map(|(m, w)| {
                let sq: f64 = x.iter().zip(m.iter()).map(|(xi, mi)| (xi - t * mi).powi(2)).sum();
                w.ln() - sq / (2.0 * v)
            })
            .collect();
        log_sum_exp(&logs) - 0.5 * d * (2.0 * PI * v).ln()
    }

    pub fn marginal_pdf(&self, t: f64, x: ArrayView1<f64>) -> f64 {
        self.log_marginal_pdf(t, x).exp()
    }

    /// Draws `n` samples of `X_t = (1 - t) Z + t X_1`.
    pub fn sample_marginal(&self, t: f64, n: usize, seed: u64) -> Array2<f64> {
        let x1 = self.sample(n, seed);
        let z = standard_normal(n, self.dim(), seed);
        z * (1.0 - t) + x1 * t
    }
}

/// `n × d` standard normal draws on the noise stream of `seed`.
pub fn standard_normal(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = seeded_stream(seed, stream::NOISE);
    Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut rng))
}

/// Numerically stable `log Σ exp(a_i)`.
pub fn log_sum_exp(a: &[f64]) -> f64 {
    let max = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + a.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Column means of a sample.
pub fn empirical_mean(x: &Array2<f64>) -> Array1<f64> {
    x.mean_axis(Axis(0)).expect("non-empty sample")
}

/// Unbiased column covariance of a sample.
pub fn empirical_covariance(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows() as f64;
    let centred = x - &empirical_mean(x);
    centred.t().dot(&centred) / (n - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn pair() -> GaussianMixtureTarget {
        GaussianMixtureTarget::symmetric_pair(&[1.0, 0.0], 0.5).unwrap()
    }

    #[test]
    fn rejects_bad_targets() {
        let m = Array2::zeros((1, 2));
        assert!(GaussianMixtureTarget::new(vec![1.0], m.clone(), 0.0).is_err());
        assert!(GaussianMixtureTarget::new(vec![0.5], m.clone(), 1.0).is_err());
        assert!(GaussianMixtureTarget::new(vec![-1.0, 2.0], Array2::zeros((2, 2)), 1.0).is_err());
        assert!(GaussianMixtureTarget::new(vec![0.5, 0.5], m, 1.0).is_err());
    }

    #[test]
    fn recenters_off_centre_mixture() {
        let means = array![[1.0, 1.0], [3.0, 1.0]];
        let t = GaussianMixtureTarget::new(vec![0.5, 0.5], means, 1.0).unwrap();
        let shift = t.recentered_by().unwrap();
        assert!((shift[0] - 2.0).abs() < 1e-12 && (shift[1] - 1.0).abs() < 1e-12);
        let centre = t.weights().dot(t.means());
        assert!(centre.iter().all(|c| c.abs() < 1e-12));
        assert!((t.radius() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn standard_gaussian_sample_mean() {
        let d = 3;
        let n = 100_000;
        let x = GaussianMixtureTarget::standard_gaussian(d).sample(n, 11);
        let tol = 3.0 * (d as f64 / n as f64).sqrt();
        assert!(empirical_mean(&x).iter().all(|m| m.abs() < tol));
    }

    #[test]
    fn component_fractions_match_weights() {
        let (_, labels) = pair().sample_labelled(100_000, 5);
        let frac = labels.iter().filter(|&&k| k == 0).count() as f64 / labels.len() as f64;
        // CLT s.e. is 0.0016, so 0.02 is > 12 s.e.
        assert!((frac - 0.5).abs() < 0.02, "fraction {frac}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = pair().sample(257, 42);
        let b = pair().sample(257, 42);
        assert_eq!(a, b);
        assert_ne!(a, pair().sample(257, 43));
    }

    #[test]
    fn marginal_pdf_endpoints() {
        let target = pair();
        let x = array![0.3, -0.7];
        let gauss = (-(0.09f64 + 0.49) / 2.0).exp() / (2.0 * PI);
        assert!((target.marginal_pdf(0.0, x.view()) - gauss).abs() < 1e-15);

        let g = GaussianMixtureTarget::new(vec![1.0], Array2::zeros((1, 2)), 0.5).unwrap();
        let s2 = 0.25;
        let expected = (-(0.09f64 + 0.49) / (2.0 * s2)).exp() / (2.0 * PI * s2);
        assert!((g.marginal_pdf(1.0, x.view()) - expected).abs() < 1e-14);
    }

    #[test]
    fn marginal_pdf_integrates_to_one() {
        let target =
            GaussianMixtureTarget::new(vec![0.3, 0.7], array![[1.4], [-0.6]], 0.4).unwrap();
        for &t in &[0.0, 0.3, 0.8, 1.0] {
            let knots = 10_000;
            let h = 20.0 / (knots - 1) as f64;
            let mut mass = 0.0;
            for i in 0..knots {
                let x = -10.0 + i as f64 * h;
                let w = if i == 0 || i == knots - 1 { 0.5 } else { 1.0 };
                mass += w * target.marginal_pdf(t, array![x].view());
            }
            mass *= h;
            assert!((mass - 1.0).abs() < 1e-6, "t={t} mass={mass}");
        }
    }

    #[test]
    fn interpolant_covariance_matches_theory() {
        let target =
            GaussianMixtureTarget::new(vec![0.25, 0.75], array![[1.5, -0.3], [-0.5, 0.1]], 0.6)
                .unwrap();
        let cov1 = target.covariance();
        for (i, &t) in [0.0, 0.25, 0.5, 0.9, 1.0].iter().enumerate() {
            let xt = target.sample_marginal(t, 100_000, 100 + i as u64);
            let emp = empirical_covariance(&xt);
            let theory = &cov1 * (t * t) + Array2::<f64>::eye(2) * (1.0 - t).powi(2);
            let err = (&emp - &theory).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
            assert!(err < 5e-2, "t={t} err={err}");
        }
    }

    #[test]
    fn config_round_trip() {
        let cfg = pair().to_config();
        let json = serde_json::to_string(&cfg).unwrap();
        let back = GaussianMixtureTarget::from_config(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.to_config(), cfg);
    }
}
