//! Closed-form velocity field of a Gaussian-mixture target.
//!
//! For component `k`, `X_1 | (X_t = x, k)` is Gaussian with mean
//! `m_k = ((1-t)²/V) μ_k + (tσ²/V) x` and covariance `s² I`,
//! `s² = σ²(1-t)²/V`, where `V = (1-t)² + t²σ²`. The component posteriors
//! (responsibilities) are computed in log space. Every derived quantity is a
//! responsibility-weighted combination of these per-component Gaussians.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numdiff;
use crate::target::GaussianMixtureTarget;

/// Moments of `X_1 | X_t = x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMoments {
    pub responsibilities: Array1<f64>,
    /// `E[X_1 | X_t = x]`
    pub m1: Array1<f64>,
    /// `E[X_1ᵀX_1 | X_t = x]`
    pub m2: f64,
    /// `Cov(X_1 | X_t = x)`
    pub m2c: Array2<f64>,
    /// `E[X_1 X_1ᵀX_1 | X_t = x]`
    pub m3: Array1<f64>,
    /// `M3 - M2 M1`, assembled from centred per-component terms so that it
    /// keeps full relative precision when the posterior is concentrated.
    pub m3_centred: Array1<f64>,
}

impl PosteriorMoments {
    /// Eigenvalues of `M2c`, ascending.
    pub fn m2c_eigenvalues(&self) -> Vec<f64> {
        symmetric_eigenvalues(&self.m2c)
    }
}

pub(crate) fn symmetric_eigenvalues(m: &Array2<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mat = DMatrix::from_fn(d, d, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let mut eig: Vec<f64> = SymmetricEigen::new(mat).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    eig
}

fn check_point(target: &GaussianMixtureTarget, x: ArrayView1<f64>) -> Result<()> {
    if x.len() != target.dim() {
        return Err(Error::DimensionMismatch { expected: target.dim(), got: x.len() });
    }
    Ok(())
}

fn check_open_time(t: f64) -> Result<()> {
    if (0.0..1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::TimeOutOfRange(t))
    }
}

/// Component responsibilities `P(k | X_t = x)`.
pub fn responsibilities(target: &GaussianMixtureTarget, t: f64, x: ArrayView1<f64>) -> Array1<f64> {
    let v = target.marginal_variance(t);
    let logs: Vec<f64> = target
        .means()
        .rows()
        .into_iter()
        .zip(target.weights().iter())
        .map(|(m, w)| {
            let sq: f64 = x.iter().zip(m.iter()).map(|(xi, mi)| (xi - t * mi).powi(2)).sum();
            w.ln() - sq / (2.0 * v)
        })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut r = Array1::from_iter(logs.iter().map(|l| (l - max).exp()));
    let total = r.sum();
    r /= total;
    r
}

/// Responsibility-weighted component mean `Σ_k r_k μ_k`.
fn mixed_mean(target: &GaussianMixtureTarget, r: &Array1<f64>) -> Array1<f64> {
    r.dot(target.means())
}

pub fn posterior_moments(target: &GaussianMixtureTarget, t: f64, x: ArrayView1<f64>) -> Result<PosteriorMoments> {
    check_point(target, x)?;
    check_open_time(t)?;
    Ok(posterior_moments_unchecked(target, t, x))
}

pub(crate) fn posterior_moments_unchecked(target: &GaussianMixtureTarget, t: f64, x: ArrayView1<f64>) -> PosteriorMoments {
    let d = target.dim();
    let sigma2 = target.sigma() * target.sigma();
    let v = target.marginal_variance(t);
    let shrink = (1.0 - t).powi(2) / v;
    let gain = t * sigma2 / v;
    let s2 = sigma2 * (1.0 - t).powi(2) / v;

    let r = responsibilities(target, t, x);
    let mu_bar = mixed_mean(target, &r);
    let m1 = &mu_bar * shrink + &x * gain;

    let mut m2 = 0.0;
    let mut m3 = Array1::zeros(d);
    let mut m2c = Array2::eye(d) * s2;
    let mut third_centred = Array1::zeros(d);
    for (mu, &rk) in target.means().rows().into_iter().zip(r.iter()) {
        if rk == 0.0 {
            continue;
        }
        let mk = &mu * shrink + &x * gain;
        let nk = mk.dot(&mk);
        m2 += rk * (nk + d as f64 * s2);
        m3.scaled_add(rk * (nk + (d as f64 + 2.0) * s2), &mk);

        let ck = (&mu - &mu_bar) * shrink;
        for a in 0..d {
            for b in 0..d {
                m2c[(a, b)] += rk * ck[a] * ck[b];
            }
        }
        let nc = ck.dot(&ck);
        third_centred.scaled_add(rk * (nc + (d as f64 + 2.0) * s2), &ck);
    }
    let m3_centred = m2c.dot(&m1) * 2.0 + third_centred;

    PosteriorMoments { responsibilities: r, m1, m2, m2c, m3, m3_centred }
}

/// `v*(t, x) = E[X_1 - Z | X_t = x]` for `t ∈ [0, 1]`.
///
/// Evaluated as `Σ_k r_k [((σ²+1)t - 1) x + (1-t) μ_k] / V`, which equals
/// `(M1 - x)/(1 - t)` for `t < 1` and reduces to the limit `v*(1, x) = x`.
pub fn velocity(target: &GaussianMixtureTarget, t: f64, x: ArrayView1<f64>) -> Result<Array1<f64>> {
    check_point(target, x)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::TimeOutOfRange(t));
    }
    Ok(velocity_unchecked(target, t, x))
}

pub(crate) fn velocity_unchecked(target: &GaussianMixtureTarget, t: f64, x: ArrayView1<f64>) -> Array1<f64> {
    let sigma2 = target.sigma() * target.sigma();
    let v = target.marginal_variance(t);
    let r = responsibilities(target, t, x);
    let mu_bar = mixed_mean(target, &r);
    (&x * ((sigma2 + 1.0) * t - 1.0) + mu_bar * (1.0 - t)) / v
}

/// `∇_x v* = t/(1-t)³ M2c - 1/(1-t) I`.
pub fn velocity_jacobian(target: &GaussianMixtureTarget, t: f64, x: ArrayView1<f64>) -> Result<Array2<f64>> {
    let pm = posterior_moments(target, t, x)?;
    Ok(jacobian_from_moments(&pm, t))
}

pub(crate) fn jacobian_from_moments(pm: &PosteriorMoments, t: f64) -> Array2<f64> {
    let d = pm.m1.len();
    let u = 1.0 - t;
    &pm.m2c * (t / u.powi(3)) - Array2::<f64>::eye(d) / u
}

/// `∂_t v* = (M1 - x)/(1-t)² + (t+1)/(1-t)⁴ M2c x - t/(1-t)⁴ (M3 - M2 M1)`.
pub fn velocity_time_derivative(target: &GaussianMixtureTarget, t: f64, x: ArrayView1<f64>) -> Result<Array1<f64>> {
    let pm = posterior_moments(target, t, x)?;
    Ok(time_derivative_from_moments(&pm, t, x))
}

pub(crate) fn time_derivative_from_moments(pm: &PosteriorMoments, t: f64, x: ArrayView1<f64>) -> Array1<f64> {
    let u = 1.0 - t;
    let u2 = u * u;
    let u4 = u2 * u2;
    (&pm.m1 - &x) / u2 + pm.m2c.dot(&x) * ((t + 1.0) / u4) - &pm.m3_centred * (t / u4)
}

/// Residuals of the Gaussian-channel identities at one `(t, x)`.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub t: f64,
    pub x: Vec<f64>,
    /// `‖M1 - (x + (1-t)² ∇log p_t(x)) / t‖∞`
    pub tweedie: f64,
    /// `max |∇_x M1 - t/(1-t)² M2c|`
    pub mean_gradient: f64,
    /// `max |M2c - (1-t)²/t² (I + (1-t)² ∇² log p_t(x))|`
    pub hatsell_nolte: f64,
    pub max_residual: f64,
}

/// Checks Tweedie's formula and the Hatsell–Nolte identity for the channel
/// `X_t / t = X_1 + ((1-t)/t) Z`, with scores taken by finite differences of
/// the log marginal density.
pub fn identity_cross_checks(target: &GaussianMixtureTarget, t: f64, x: ArrayView1<f64>) -> Result<IdentityReport> {
    check_point(target, x)?;
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::TimeOutOfRange(t));
    }
    let d = target.dim();
    let u2 = (1.0 - t).powi(2);
    let pm = posterior_moments_unchecked(target, t, x);
    let log_p = |y: ArrayView1<f64>| target.log_marginal_pdf(t, y);

    let score = numdiff::gradient(log_p, x, numdiff::STEP_X);
    let tweedie_mean = (&x + &(score * u2)) / t;
    let tweedie = max_abs(&(&pm.m1 - &tweedie_mean));

    let grad_m1 = numdiff::jacobian(
        |y| posterior_moments_unchecked(target, t, y).m1,
        x,
        numdiff::STEP_X,
    );
    let mean_gradient = max_abs(&(&grad_m1 - &(&pm.m2c * (t / u2))));

    let hess = numdiff::hessian(log_p, x, numdiff::STEP_HESSIAN);
    let hn = (Array2::<f64>::eye(d) + hess * u2) * (u2 / (t * t));
    let hatsell_nolte = max_abs(&(&pm.m2c - &hn));

    Ok(IdentityReport {
        t,
        x: x.to_vec(),
        tweedie,
        mean_gradient,
        hatsell_nolte,
        max_residual: tweedie.max(mean_gradient).max(hatsell_nolte),
    })
}

fn max_abs<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}
