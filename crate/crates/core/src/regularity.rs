//! Numerical checks of the regularity of the oracle velocity field.
//!
//! Everything here evaluates the closed-form field on probe sets: a Halton
//! point set over the box `Ω_A = [-A, A]^d` plus seeded uniform points, and
//! deterministic time grids. Sup-norms are estimated as maxima over the
//! probes; asymptotic claims without explicit constants are reported as
//! ratios whose boundedness is checked instead of absolute thresholds.

use std::io::Write;

use ndarray::{Array2, ArrayView1, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::log_log_slope;
use crate::oracle::{self, symmetric_eigenvalues};
use crate::rng::{child_seed, seeded_stream, stream};
use crate::target::GaussianMixtureTarget;

/// Tolerance for the eigenvalue sandwich.
pub const SANDWICH_TOL: f64 = 1e-8;

/// Two-sided bounds on the eigenvalues of `∇_x v*(t, ·)`:
/// `((σ²+1)t - 1)/V ≤ λ ≤ ((σ²+1)t - 1)/V + t(1-t)R²/V²`.
pub fn jacobian_sandwich(target: &GaussianMixtureTarget, t: f64) -> (f64, f64) {
    let s2 = target.sigma().powi(2);
    let r2 = target.radius().powi(2);
    let v = target.marginal_variance(t);
    let lo = ((s2 + 1.0) * t - 1.0) / v;
    (lo, lo + t * (1.0 - t) * r2 / (v * v))
}

/// Two-sided bounds on the eigenvalues of `Cov(X_1 | X_t = x)`:
/// `σ²(1-t)²/V ≤ λ ≤ σ²(1-t)²/V + ((1-t)²/V)² R²`.
pub fn covariance_sandwich(target: &GaussianMixtureTarget, t: f64) -> (f64, f64) {
    let s2 = target.sigma().powi(2);
    let v = target.marginal_variance(t);
    let u2 = (1.0 - t).powi(2);
    let lo = s2 * u2 / v;
    (lo, lo + (u2 / v).powi(2) * target.radius().powi(2))
}

/// `sup_{t∈[0,1]} max(|lo(t)|, |hi(t)|)` over the Jacobian sandwich: a bound on
/// `‖∇_x v*‖₂` that does not depend on any early-stopping time.
pub fn spectral_ceiling(target: &GaussianMixtureTarget) -> f64 {
    const POINTS: usize = 10_000;
    (0..=POINTS)
        .map(|i| {
            let (lo, hi) = jacobian_sandwich(target, i as f64 / POINTS as f64);
            lo.abs().max(hi.abs())
        })
        .fold(0.0, f64::max)
}

fn first_primes(n: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(n);
    let mut c = 2u64;
    while primes.len() < n {
        if primes.iter().take_while(|&&p| p * p <= c).all(|&p| c % p != 0) {
            primes.push(c);
        }
        c += 1;
    }
    primes
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    out
}

/// `n_grid` Halton points followed by `n_random` uniform points in `[-A, A]^d`.
/// The origin is always the first probe.
pub fn probe_points(d: usize, a: f64, n_grid: usize, n_random: usize, seed: u64) -> Array2<f64> {
    if a == 0.0 {
        return Array2::zeros((1, d));
    }
    let primes = first_primes(d);
    let mut out = Array2::zeros((1 + n_grid + n_random, d));
    for i in 0..n_grid {
        for (j, &p) in primes.iter().enumerate() {
            // offset by half a cell so the sequence is symmetric about 0
            let u = (radical_inverse(i as u64 + 1, p) + 0.5 / p as f64) % 1.0;
            out[(1 + i, j)] = a * (2.0 * u - 1.0);
        }
    }
    let mut rng = seeded_stream(seed, stream::PROBE);
    for i in 0..n_random {
        for j in 0..d {
            out[(1 + n_grid + i, j)] = rng.random_range(-a..=a);
        }
    }
    out
}

/// `n + 1` uniform knots on `[0, end]`, merged with geometric knots that
/// resolve `1 - t` from `1 - end` up to 1.
pub fn probe_times(end: f64, n: usize) -> Vec<f64> {
    let floor = 1.0 - end;
    let mut ts: Vec<f64> = (0..=n).map(|i| end * i as f64 / n as f64).collect();
    if floor > 0.0 {
        ts.extend((0..=n).map(|j| 1.0 - floor * (1.0 / floor).powf(j as f64 / n as f64)));
    }
    ts.retain(|t| (0.0..=end).contains(t));
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    ts
}

/// Probe-set sizes shared by the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// Half-width of the box `Ω_A`.
    pub a: f64,
    pub n_grid: usize,
    pub n_random: usize,
    pub seed: u64,
}

impl ProbeConfig {
    fn points(&self, d: usize) -> Array2<f64> {
        probe_points(d, self.a, self.n_grid, self.n_random, self.seed)
    }

    fn refined(&self) -> Self {
        ProbeConfig { n_grid: 2 * self.n_grid, n_random: 2 * self.n_random, ..*self }
    }
}

fn check_probe(cfg: &ProbeConfig) -> Result<()> {
    if !(cfg.a >= 0.0 && cfg.a.is_finite()) {
        return Err(Error::InvalidArgument(format!("box half-width must be nonnegative, got {}", cfg.a)));
    }
    Ok(())
}

fn check_times(ts: &[f64]) -> Result<()> {
    if ts.is_empty() {
        return Err(Error::InvalidArgument("empty time set".into()));
    }
    match ts.iter().find(|t| !(0.0..1.0).contains(*t)) {
        Some(&t) => Err(Error::TimeOutOfRange(t)),
        None => Ok(()),
    }
}

fn inf_norm(m: &Array2<f64>) -> f64 {
    m.rows().into_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn max_abs(v: ArrayView1<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichRow {
    pub t: f64,
    pub bound_lo: f64,
    pub eig_min: f64,
    pub eig_max: f64,
    pub bound_hi: f64,
    /// `max_x ‖∇_x v*(t, x)‖∞`
    pub max_inf_norm: f64,
    /// `max_x ‖∇_x v*(t, x)‖₂`
    pub max_spectral_norm: f64,
    pub cov_lo: f64,
    pub cov_eig_min: f64,
    pub cov_eig_max: f64,
    pub cov_hi: f64,
}

impl SandwichRow {
    pub fn violations(&self, tol: f64) -> usize {
        [
            self.eig_min < self.bound_lo - tol,
            self.eig_max > self.bound_hi + tol,
            self.cov_eig_min < self.cov_lo - tol,
            self.cov_eig_max > self.cov_hi + tol,
        ]
        .iter()
        .filter(|&&v| v)
        .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzXReport {
    pub probe: ProbeConfig,
    pub n_points: usize,
    pub rows: Vec<SandwichRow>,
    pub sup_inf_norm: f64,
    pub sup_spectral_norm: f64,
    /// Bound on `‖∇_x v*‖₂` uniform over `t ∈ [0, 1]`.
    pub spectral_ceiling: f64,
    /// `√d` times the spectral ceiling, bounding the `∞`-operator norm.
    pub inf_ceiling: f64,
    /// Per-point sandwich violations at [`SANDWICH_TOL`].
    pub violations: usize,
}

struct PointStats {
    eig: (f64, f64),
    cov: (f64, f64),
    inf: f64,
    spectral: f64,
    out_of_bounds: usize,
}

fn sandwich_at(target: &GaussianMixtureTarget, t: f64, x: ArrayView1<f64>, bounds: [(f64, f64); 2]) -> PointStats {
    let pm = oracle::posterior_moments_unchecked(target, t, x);
    let cov = pm.m2c_eigenvalues();
    let jac = oracle::jacobian_from_moments(&pm, t);
    let eig = symmetric_eigenvalues(&jac);
    let (lo, hi) = (eig[0], eig[eig.len() - 1]);
    let (clo, chi) = (cov[0], cov[cov.len() - 1]);
    let [(blo, bhi), (cblo, cbhi)] = bounds;
    let out_of_bounds = [lo < blo - SANDWICH_TOL, hi > bhi + SANDWICH_TOL, clo < cblo - SANDWICH_TOL, chi > cbhi + SANDWICH_TOL]
        .iter()
        .filter(|&&v| v)
        .count();
    PointStats { eig: (lo, hi), cov: (clo, chi), inf: inf_norm(&jac), spectral: lo.abs().max(hi.abs()), out_of_bounds }
}

/// Sup of `‖∇_x v*‖` over the probe set at each `t`, with the eigenvalues of
/// the Jacobian and of the posterior covariance checked against their
/// closed-form sandwiches at every point.
pub fn estimate_lipschitz_x(target: &GaussianMixtureTarget, ts: &[f64], probe: &ProbeConfig) -> Result<LipschitzXReport> {
    check_probe(probe)?;
    check_times(ts)?;
    let pts = probe.points(target.dim());
    let mut rows = Vec::with_capacity(ts.len());
    let mut violations = 0;
    for &t in ts {
        let bounds = [jacobian_sandwich(target, t), covariance_sandwich(target, t)];
        let stats: Vec<PointStats> =
            (0..pts.nrows()).into_par_iter().map(|i| sandwich_at(target, t, pts.row(i), bounds)).collect();
        violations += stats.iter().map(|s| s.out_of_bounds).sum::<usize>();
        rows.push(SandwichRow {
            t,
            bound_lo: bounds[0].0,
            eig_min: stats.iter().map(|s| s.eig.0).fold(f64::INFINITY, f64::min),
            eig_max: stats.iter().map(|s| s.eig.1).fold(f64::NEG_INFINITY, f64::max),
            bound_hi: bounds[0].1,
            max_inf_norm: stats.iter().map(|s| s.inf).fold(0.0, f64::max),
            max_spectral_norm: stats.iter().map(|s| s.spectral).fold(0.0, f64::max),
            cov_lo: bounds[1].0,
            cov_eig_min: stats.iter().map(|s| s.cov.0).fold(f64::INFINITY, f64::min),
            cov_eig_max: stats.iter().map(|s| s.cov.1).fold(f64::NEG_INFINITY, f64::max),
            cov_hi: bounds[1].1,
        });
    }
    let ceiling = spectral_ceiling(target);
    Ok(LipschitzXReport {
        probe: *probe,
        n_points: pts.nrows() * ts.len(),
        sup_inf_norm: rows.iter().map(|r| r.max_inf_norm).fold(0.0, f64::max),
        sup_spectral_norm: rows.iter().map(|r| r.max_spectral_norm).fold(0.0, f64::max),
        rows,
        spectral_ceiling: ceiling,
        inf_ceiling: ceiling * (target.dim() as f64).sqrt(),
        violations,
    })
}

/// Writes the sandwich table as CSV: `t,bound_lo,eig_min,eig_max,bound_hi`.
pub fn write_sandwich_csv<W: Write>(out: W, rows: &[SandwichRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "bound_lo", "eig_min", "eig_max", "bound_hi"])?;
    for r in rows {
        w.write_record([r.t, r.bound_lo, r.eig_min, r.eig_max, r.bound_hi].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzTRow {
    pub t_floor: f64,
    /// `max ‖∂_t v*(t, x)‖∞` over `t ∈ [0, 1 - t̲]`, `x` in the probe set.
    pub l_t: f64,
    pub argmax_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzTReport {
    pub probe: ProbeConfig,
    pub n_times: usize,
    pub rows: Vec<LipschitzTRow>,
    /// Log-log slope of `L_t` against `1/t̲`; `None` if some `L_t` vanishes.
    pub slope: Option<f64>,
}

/// `L_t(t̲)` for each early-stopping time, over [`probe_times`] on `[0, 1 - t̲]`.
pub fn estimate_lipschitz_t(
    target: &GaussianMixtureTarget,
    t_floors: &[f64],
    n_times: usize,
    probe: &ProbeConfig,
) -> Result<LipschitzTReport> {
    check_probe(probe)?;
    if t_floors.is_empty() || n_times == 0 {
        return Err(Error::InvalidArgument("need at least one early-stopping time and one time step".into()));
    }
    if let Some(&f) = t_floors.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::InvalidArgument(format!("early-stopping time must lie in (0, 1], got {f}")));
    }
    let pts = probe.points(target.dim());
    let mut rows = Vec::with_capacity(t_floors.len());
    for &floor in t_floors {
        let ts = probe_times(1.0 - floor, n_times);
        let per_t: Vec<f64> = ts
            .par_iter()
            .map(|&t| {
                pts.axis_iter(Axis(0))
                    .map(|x| {
                        let pm = oracle::posterior_moments_unchecked(target, t, x);
                        max_abs(oracle::time_derivative_from_moments(&pm, t, x).view())
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        let (i, &l_t) = per_t.iter().enumerate().fold((0, &0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        rows.push(LipschitzTRow { t_floor: floor, l_t, argmax_t: ts[i] });
    }
    // [0, 1 - t̲] contains every interval of a larger t̲, so each sup also
    // covers the probe times used for those
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&i, &j| rows[j].t_floor.total_cmp(&rows[i].t_floor));
    for w in 1..order.len() {
        let (prev, cur) = (order[w - 1], order[w]);
        if rows[prev].l_t > rows[cur].l_t {
            rows[cur].l_t = rows[prev].l_t;
            rows[cur].argmax_t = rows[prev].argmax_t;
        }
    }
    let slope = if rows.len() >= 2 && rows.iter().all(|r| r.l_t > 0.0) {
        let inv: Vec<f64> = rows.iter().map(|r| 1.0 / r.t_floor).collect();
        let l: Vec<f64> = rows.iter().map(|r| r.l_t).collect();
        Some(log_log_slope(&inv, &l))
    } else {
        None
    };
    Ok(LipschitzTReport { probe: *probe, n_times, rows, slope })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub t: f64,
    pub sup_m1: f64,
    /// Largest spectral norm of `M2c`.
    pub sup_m2c: f64,
    /// Largest Euclidean norm of `M3 - M2 M1`.
    pub sup_m3c: f64,
    /// `sup_m1 / A`
    pub ratio_m1: f64,
    /// `sup_m2c / (1-t)²`
    pub ratio_m2c: f64,
    /// `sup_m3c / (A (1-t)²)`
    pub ratio_m3c: f64,
    /// Largest relative residual of `M2 = tr M2c + ‖M1‖²`.
    pub trace_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub probe: ProbeConfig,
    pub rows: Vec<MomentRow>,
    /// Maxima of the three ratios over the time grid.
    pub constants: [f64; 3],
    pub max_trace_residual: f64,
}

impl MomentReport {
    pub fn is_finite(&self) -> bool {
        self.constants.iter().all(|c| c.is_finite())
    }
}

/// Empirical sups of the posterior moments over `Ω_A`, normalised by the
/// rates `A`, `(1-t)²` and `A(1-t)²`.
pub fn check_moment_bounds(target: &GaussianMixtureTarget, ts: &[f64], probe: &ProbeConfig) -> Result<MomentReport> {
    check_probe(probe)?;
    check_times(ts)?;
    if probe.a <= 0.0 {
        return Err(Error::InvalidArgument("moment ratios need a box half-width A > 0".into()));
    }
    let a = probe.a;
    let pts = probe.points(target.dim());
    let rows: Vec<MomentRow> = ts
        .par_iter()
        .map(|&t| {
            let (mut m1, mut m2c, mut m3c, mut residual) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
            for x in pts.axis_iter(Axis(0)) {
                let pm = oracle::posterior_moments_unchecked(target, t, x);
                m1 = m1.max(pm.m1.dot(&pm.m1).sqrt());
                let eig = pm.m2c_eigenvalues();
                m2c = m2c.max(eig[eig.len() - 1].abs().max(eig[0].abs()));
                m3c = m3c.max(pm.m3_centred.dot(&pm.m3_centred).sqrt());
                let rebuilt = pm.m2c.diag().sum() + pm.m1.dot(&pm.m1);
                residual = residual.max((pm.m2 - rebuilt).abs() / pm.m2.abs().max(f64::MIN_POSITIVE));
            }
            let u2 = (1.0 - t).powi(2);
            MomentRow {
                t,
                sup_m1: m1,
                sup_m2c: m2c,
                sup_m3c: m3c,
                ratio_m1: m1 / a,
                ratio_m2c: m2c / u2,
                ratio_m3c: m3c / (a * u2),
                trace_residual: residual,
            }
        })
        .collect();
    let constants = [
        rows.iter().map(|r| r.ratio_m1).fold(0.0, f64::max),
        rows.iter().map(|r| r.ratio_m2c).fold(0.0, f64::max),
        rows.iter().map(|r| r.ratio_m3c).fold(0.0, f64::max),
    ];
    let max_trace_residual = rows.iter().map(|r| r.trace_residual).fold(0.0, f64::max);
    Ok(MomentReport { probe: *probe, rows, constants, max_trace_residual })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentStability {
    pub coarse: MomentReport,
    pub fine: MomentReport,
    /// `|fine - coarse| / coarse` for each of the three constants.
    pub relative_change: [f64; 3],
}

impl MomentStability {
    pub fn is_stable(&self, tol: f64) -> bool {
        self.coarse.is_finite() && self.fine.is_finite() && self.relative_change.iter().all(|c| *c <= tol)
    }
}

/// Runs [`check_moment_bounds`] on `n_times` knots of `[0, 1 - t̲]` and again
/// with twice the knots and twice the probes.
pub fn moment_bound_stability(
    target: &GaussianMixtureTarget,
    t_floor: f64,
    n_times: usize,
    probe: &ProbeConfig,
) -> Result<MomentStability> {
    let coarse = check_moment_bounds(target, &probe_times(1.0 - t_floor, n_times), probe)?;
    let fine = check_moment_bounds(target, &probe_times(1.0 - t_floor, 2 * n_times), &probe.refined())?;
    let mut relative_change = [0.0; 3];
    for (i, c) in relative_change.iter_mut().enumerate() {
        let (a, b) = (coarse.constants[i], fine.constants[i]);
        *c = if a == b { 0.0 } else { (b - a).abs() / a.abs() };
    }
    Ok(MomentStability { coarse, fine, relative_change })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub a: f64,
    pub t: f64,
    /// Monte-Carlo `P(X_t ∉ Ω_A)`.
    pub prob: f64,
    pub std_error: f64,
    /// `2d exp(-(A - tR)₊² / (2V))`, from the component-wise Gaussian tails.
    pub bound: f64,
    /// Monte-Carlo `E[‖v*(t, X_t)‖² 1{X_t ∉ Ω_A}]`.
    pub truncation: f64,
    pub truncation_std_error: f64,
    /// Monte-Carlo `E‖v*(t, X_t)‖²`.
    pub velocity_second_moment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub n_mc: usize,
    pub seed: u64,
    pub rows: Vec<TailRow>,
    /// Per time, the slope of `ln P` against `A²` over the `A` with `P > 0`.
    pub log_prob_slopes: Vec<Option<f64>>,
    /// Time-averaged truncation proxy for each `A`.
    pub truncation_by_a: Vec<f64>,
    /// `proxy(A_i) / proxy(A_{i+1})`; `None` when the larger box saw no exits.
    pub truncation_ratios: Vec<Option<f64>>,
}

impl TailReport {
    pub fn rows_at(&self, a: f64) -> impl Iterator<Item = &TailRow> {
        self.rows.iter().filter(move |r| r.a == a)
    }

    /// Every computable `ln P`-vs-`A²` slope is negative.
    pub fn slopes_negative(&self) -> bool {
        self.log_prob_slopes.iter().flatten().all(|s| *s < 0.0)
    }

    /// Each step up in `A` shrinks the proxy by more than `factor` (a step
    /// after which no exits are observed counts as decay).
    pub fn truncation_decays(&self, factor: f64) -> bool {
        self.truncation_ratios.iter().all(|r| r.is_none_or(|r| r > factor))
    }
}

/// Tail probability of `X_t` outside `Ω_A` and the truncation proxy, by
/// Monte Carlo with `n_mc` draws per time (shared across the `A` values).
pub fn estimate_tail_and_truncation(
    target: &GaussianMixtureTarget,
    a_set: &[f64],
    ts: &[f64],
    n_mc: usize,
    seed: u64,
) -> Result<TailReport> {
    if n_mc < 2 || a_set.is_empty() {
        return Err(Error::InvalidArgument("need n_mc ≥ 2 and at least one box".into()));
    }
    if let Some(&a) = a_set.iter().find(|a| !(**a > 0.0)) {
        return Err(Error::InvalidArgument(format!("box half-width must be positive, got {a}")));
    }
    if let Some(&t) = ts.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::TimeOutOfRange(t));
    }
    let d = target.dim();
    let n = n_mc as f64;
    let mut rows = Vec::with_capacity(a_set.len() * ts.len());
    for (ti, &t) in ts.iter().enumerate() {
        let xt = target.sample_marginal(t, n_mc, child_seed(seed, ti as u64));
        // (max |x_j|, ‖v*‖²) per draw
        let draws: Vec<(f64, f64)> = (0..n_mc)
            .into_par_iter()
            .map(|i| {
                let x = xt.row(i);
                let v = oracle::velocity_unchecked(target, t, x);
                (max_abs(x), v.dot(&v))
            })
            .collect();
        let full = draws.iter().map(|d| d.1).sum::<f64>() / n;
        let v = target.marginal_variance(t);
        for &a in a_set {
            let (mut hits, mut s1, mut s2) = (0usize, 0.0, 0.0);
            for &(m, e) in &draws {
                if m > a {
                    hits += 1;
                    s1 += e;
                    s2 += e * e;
                }
            }
            let p = hits as f64 / n;
            let mean = s1 / n;
            let gap = (a - t * target.radius()).max(0.0);
            rows.push(TailRow {
                a,
                t,
                prob: p,
                std_error: (p * (1.0 - p) / n).sqrt(),
                bound: (2.0 * d as f64 * (-gap * gap / (2.0 * v)).exp()).min(1.0),
                truncation: mean,
                truncation_std_error: ((s2 / n - mean * mean).max(0.0) / n).sqrt(),
                velocity_second_moment: full,
            });
        }
    }
    let log_prob_slopes = ts
        .iter()
        .map(|&t| {
            let (xs, ys): (Vec<f64>, Vec<f64>) =
                rows.iter().filter(|r| r.t == t && r.prob > 0.0).map(|r| (r.a * r.a, r.prob.ln())).unzip();
            (xs.len() >= 2).then(|| crate::metrics::least_squares_slope(&xs, &ys))
        })
        .collect();
    let truncation_by_a: Vec<f64> = a_set
        .iter()
        .map(|&a| {
            let vals: Vec<f64> = rows.iter().filter(|r| r.a == a).map(|r| r.truncation).collect();
            vals.iter().sum::<f64>() / vals.len().max(1) as f64
        })
        .collect();
    let truncation_ratios = truncation_by_a.windows(2).map(|w| (w[1] > 0.0).then(|| w[0] / w[1])).collect();
    Ok(TailReport { n_mc, seed, rows, log_prob_slopes, truncation_by_a, truncation_ratios })
}

/// Settings for [`run_regularity_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegularityConfig {
    pub probe: ProbeConfig,
    pub t_floors: Vec<f64>,
    pub n_times: usize,
    pub tail_a: Vec<f64>,
    pub tail_times: usize,
    pub n_mc: usize,
}

impl Default for RegularityConfig {
    fn default() -> Self {
        RegularityConfig {
            probe: ProbeConfig { a: 3.0, n_grid: 256, n_random: 256, seed: 0 },
            t_floors: (2..=7).map(|k| 0.5f64.powi(k)).collect(),
            n_times: 64,
            tail_a: vec![1.0, 2.0, 3.0],
            tail_times: 9,
            n_mc: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub lipschitz_x: LipschitzXReport,
    pub lipschitz_t: LipschitzTReport,
    pub moments: MomentStability,
    pub tail: TailReport,
}

/// All four checks; the `x`-Lipschitz and moment sweeps run up to the
/// smallest early-stopping time.
pub fn run_regularity_suite(target: &GaussianMixtureTarget, cfg: &RegularityConfig) -> Result<RegularityReport> {
    let smallest = cfg.t_floors.iter().copied().fold(f64::INFINITY, f64::min);
    if !smallest.is_finite() {
        return Err(Error::InvalidArgument("no early-stopping times".into()));
    }
    let ts = probe_times(1.0 - smallest, cfg.n_times);
    let tail_ts: Vec<f64> = (0..cfg.tail_times).map(|i| i as f64 / (cfg.tail_times.max(2) - 1) as f64).collect();
    Ok(RegularityReport {
        lipschitz_x: estimate_lipschitz_x(target, &ts, &cfg.probe)?,
        lipschitz_t: estimate_lipschitz_t(target, &cfg.t_floors, cfg.n_times, &cfg.probe)?,
        moments: moment_bound_stability(target, smallest, cfg.n_times, &cfg.probe)?,
        tail: estimate_tail_and_truncation(target, &cfg.tail_a, &tail_ts, cfg.n_mc, cfg.probe.seed)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn pair() -> GaussianMixtureTarget {
        GaussianMixtureTarget::symmetric_pair(&[1.0, 0.0], 0.5).unwrap()
    }

    fn probe(a: f64) -> ProbeConfig {
        ProbeConfig { a, n_grid: 128, n_random: 64, seed: 3 }
    }

    #[test]
    fn gaussian_lipschitz_x_is_one() {
        let g = GaussianMixtureTarget::standard_gaussian(2);
        let ts: Vec<f64> = (0..=20).map(|i| i as f64 / 21.0).collect();
        let rep = estimate_lipschitz_x(&g, &ts, &probe(2.0)).unwrap();
        assert_eq!(rep.violations, 0);
        assert!((rep.sup_spectral_norm - 1.0).abs() < 1e-12);
        // the Jacobian is c(t) I, so its ∞-norm equals |c(t)|
        assert!((rep.sup_inf_norm - 1.0).abs() < 1e-12);
        assert!((rep.spectral_ceiling - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sandwich_collapses_without_spread() {
        let g = GaussianMixtureTarget::standard_gaussian(3);
        for i in 0..=50 {
            let t = i as f64 / 50.0;
            let (lo, hi) = jacobian_sandwich(&g, t);
            assert_eq!(lo, hi);
            assert!((lo - (2.0 * t - 1.0) / ((1.0 - t).powi(2) + t * t)).abs() < 1e-15);
        }
    }

    #[test]
    fn mixture_eigenvalues_inside_sandwich() {
        let target = pair();
        let ts = probe_times(1.0 - 1.0 / 64.0, 32);
        let rep = estimate_lipschitz_x(&target, &ts, &probe(3.0)).unwrap();
        assert_eq!(rep.violations, 0);
        for r in &rep.rows {
            assert!(r.bound_lo - SANDWICH_TOL <= r.eig_min && r.eig_max <= r.bound_hi + SANDWICH_TOL, "{r:?}");
            assert!(r.max_spectral_norm <= rep.spectral_ceiling + 1e-8);
            assert!(r.max_inf_norm <= rep.inf_ceiling + 1e-8);
        }
    }

    #[test]
    fn probes_are_deterministic_and_in_the_box() {
        let p = probe_points(3, 2.0, 50, 50, 9);
        assert_eq!(p, probe_points(3, 2.0, 50, 50, 9));
        assert_eq!(p.nrows(), 101);
        assert!(p.iter().all(|v| v.abs() <= 2.0));
        assert!(p.row(0).iter().all(|&v| v == 0.0));
        assert_eq!(probe_points(2, 0.0, 50, 50, 9), Array2::<f64>::zeros((1, 2)));
    }

    #[test]
    fn probe_times_cover_the_interval() {
        let ts = probe_times(0.75, 8);
        assert_eq!(ts[0], 0.0);
        assert!((ts[ts.len() - 1] - 0.75).abs() < 1e-14);
        assert!(ts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn gaussian_time_lipschitz_does_not_grow() {
        let g = GaussianMixtureTarget::standard_gaussian(1);
        let floors: Vec<f64> = (2..=7).map(|k| 0.5f64.powi(k)).collect();
        let rep = estimate_lipschitz_t(&g, &floors, 32, &probe(2.0)).unwrap();
        // c'(t) = 4t(1-t)/V² peaks at t = ½ with value 4, so L_t ≤ 4 A, and
        // the grid resolves the peak to well under a percent
        for r in &rep.rows {
            assert!(r.l_t <= 8.0 + 1e-9 && r.l_t > 7.95, "{r:?}");
        }
        assert!(rep.slope.unwrap().abs() < 1e-3);
    }

    #[test]
    fn symmetric_mixture_has_no_drift_at_the_origin() {
        let rep = estimate_lipschitz_t(&pair(), &[0.25, 0.125], 16, &probe(0.0)).unwrap();
        assert!(rep.rows.iter().all(|r| r.l_t == 0.0));
        assert_eq!(rep.slope, None);
    }

    #[test]
    fn separated_mixture_time_lipschitz_rate() {
        let target = GaussianMixtureTarget::symmetric_pair(&[2.0, 0.0], 0.2).unwrap();
        let floors: Vec<f64> = (2..=7).map(|k| 0.5f64.powi(k)).collect();
        let rep = estimate_lipschitz_t(&target, &floors, 48, &probe(3.0)).unwrap();
        assert!(rep.rows.windows(2).all(|w| w[1].l_t >= w[0].l_t));
        assert!(rep.rows[5].l_t > rep.rows[0].l_t);
        let slope = rep.slope.unwrap();
        assert!(slope <= 2.3, "slope {slope}");
    }

    #[test]
    fn gaussian_moment_ratios() {
        let g = GaussianMixtureTarget::standard_gaussian(2);
        let ts: Vec<f64> = (0..=40).map(|i| 0.5 + 0.49 * i as f64 / 40.0).collect();
        let rep = check_moment_bounds(&g, &ts, &probe(2.0)).unwrap();
        for r in &rep.rows {
            let v = (1.0 - r.t).powi(2) + r.t * r.t;
            assert!((r.sup_m2c - (1.0 - r.t).powi(2) / v).abs() < 1e-12);
            assert!(r.ratio_m2c <= 2.0 + 1e-12);
        }
        assert!(rep.max_trace_residual < 1e-9);
    }

    #[test]
    fn symmetric_third_moment_vanishes_at_time_zero() {
        let pm = oracle::posterior_moments(&pair(), 0.0, array![0.7, -0.2].view()).unwrap();
        assert!(pm.m3_centred.iter().all(|v| v.abs() < 1e-14));
        assert!(pm.m1.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn late_ratios_stay_comparable_to_midway() {
        let rep = check_moment_bounds(&pair(), &[0.5, 0.9], &probe(3.0)).unwrap();
        let (mid, late) = (&rep.rows[0], &rep.rows[1]);
        assert!(late.ratio_m1 < 10.0 * mid.ratio_m1);
        assert!(late.ratio_m2c < 10.0 * mid.ratio_m2c);
        assert!(late.ratio_m3c < 10.0 * mid.ratio_m3c);
    }

    #[test]
    fn moment_constants_stable_under_refinement() {
        let st = moment_bound_stability(&pair(), 1.0 / 64.0, 32, &probe(3.0)).unwrap();
        assert!(st.is_stable(0.2), "{:?}", st.relative_change);
        assert!(st.fine.max_trace_residual < 1e-9);
    }

    #[test]
    fn gaussian_tail_under_variance_bound() {
        let g = GaussianMixtureTarget::standard_gaussian(2);
        let ts: Vec<f64> = (0..9).map(|i| i as f64 / 8.0).collect();
        let rep = estimate_tail_and_truncation(&g, &[1.0, 2.0, 3.0], &ts, 20_000, 5).unwrap();
        for r in &rep.rows {
            let bound = 4.0 * (-r.a * r.a / 2.0).exp();
            assert!(r.prob <= bound + 3.0 * r.std_error, "{r:?}");
            assert!(r.prob <= r.bound + 3.0 * r.std_error, "{r:?}");
        }
        assert!(rep.slopes_negative());
        assert!(rep.truncation_decays(3.0), "{:?}", rep.truncation_ratios);
    }

    #[test]
    fn huge_box_sees_no_exits() {
        let g = GaussianMixtureTarget::standard_gaussian(1);
        let rep = estimate_tail_and_truncation(&g, &[50.0], &[0.3], 1000, 1).unwrap();
        assert_eq!(rep.rows[0].prob, 0.0);
        assert_eq!(rep.rows[0].truncation, 0.0);
    }

    fn std_normal_upper_tail(x: f64) -> f64 {
        // Simpson on [x, x + 12]
        let n = 20_000;
        let h = 12.0 / n as f64;
        let phi = |z: f64| (-z * z / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                w * phi(x + i as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0
    }

    #[test]
    fn one_dimensional_truncation_is_negligible() {
        let target = GaussianMixtureTarget::symmetric_pair(&[1.0], 0.5).unwrap();
        let ts: Vec<f64> = (0..9).map(|i| i as f64 / 8.0).collect();
        let rep = estimate_tail_and_truncation(&target, &[4.0], &ts, 1_000_000, 2).unwrap();
        let full = rep.rows.iter().map(|r| r.velocity_second_moment).sum::<f64>() / 9.0;
        assert!(rep.truncation_by_a[0] < 1e-3 * full, "{} vs {full}", rep.truncation_by_a[0]);

        // at t = 0, X_t = Z and v* = -x: the proxy is 2(4φ(4) + Φ̄(4))
        let phi4 = (-8.0f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let exact = 2.0 * (4.0 * phi4 + std_normal_upper_tail(4.0));
        let r0 = &rep.rows[0];
        assert!((r0.truncation - exact).abs() < 3.0 * r0.truncation_std_error, "{r0:?} vs {exact}");
        assert!((r0.prob - 2.0 * std_normal_upper_tail(4.0)).abs() < 3.0 * r0.std_error);
    }

    #[test]
    fn rejects_bad_arguments() {
        let g = GaussianMixtureTarget::standard_gaussian(1);
        assert!(estimate_lipschitz_x(&g, &[1.0], &probe(1.0)).is_err());
        assert!(estimate_lipschitz_x(&g, &[0.5], &probe(-1.0)).is_err());
        assert!(estimate_lipschitz_t(&g, &[0.0], 8, &probe(1.0)).is_err());
        assert!(check_moment_bounds(&g, &[0.5], &probe(0.0)).is_err());
        assert!(estimate_tail_and_truncation(&g, &[0.0], &[0.5], 10, 0).is_err());
    }

    #[test]
    fn sandwich_csv_header() {
        let rep = estimate_lipschitz_x(&pair(), &[0.0, 0.5], &probe(1.0)).unwrap();
        let mut buf = Vec::new();
        write_sandwich_csv(&mut buf, &rep.rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,bound_lo,eig_min,eig_max,bound_hi\n"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn suite_report_round_trips() {
        let cfg = RegularityConfig {
            probe: ProbeConfig { a: 2.0, n_grid: 16, n_random: 16, seed: 1 },
            t_floors: vec![0.25, 0.125],
            n_times: 8,
            tail_a: vec![1.0, 2.0],
            tail_times: 3,
            n_mc: 500,
        };
        let rep = run_regularity_suite(&pair(), &cfg).unwrap();
        let json = serde_json::to_string(&rep).unwrap();
        let back: RegularityReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rep);
        assert_eq!(json, serde_json::to_string(&run_regularity_suite(&pair(), &cfg).unwrap()).unwrap());
    }
}
