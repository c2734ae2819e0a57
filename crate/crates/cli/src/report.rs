//! Named pass/fail checks and the plain-text run summary.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Result;
use linflow::metrics::ErrorReport;
use linflow::pipeline::{ExperimentConfig, Tolerances};
use linflow::regularity::RegularityReport;
use serde::{Deserialize, Serialize};

use crate::artifacts::{self, ArtifactDir};
use crate::status::{Incomplete, Status};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

pub fn check(name: &str, pass: bool, detail: impl Into<String>) -> Check {
    Check { name: name.to_string(), pass, detail: detail.into() }
}

pub fn overall(checks: &[Check]) -> Status {
    Status::from_pass(checks.iter().all(|c| c.pass))
}

pub fn format_checks(checks: &[Check]) -> String {
    let mut s = String::new();
    for c in checks {
        let _ = writeln!(s, "  {}  {:<34} {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    s
}

/// Successive-difference ratio `‖X_K - X_2K‖ / ‖X_2K - X_4K‖` of Euler
/// endpoints under the oracle field; about 2 for a first-order scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EulerOrder {
    #[serde(rename = "K")]
    pub k: usize,
    pub n: usize,
    pub diff_coarse: f64,
    pub diff_fine: f64,
    pub ratio: f64,
}

/// Contents of `checks.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunChecks {
    pub euler_order: EulerOrder,
    pub checks: Vec<Check>,
}

pub fn error_checks(rep: &ErrorReport, tol: &Tolerances) -> Vec<Check> {
    let terms = [rep.discretization, rep.velocity_estimation, rep.early_stopping, rep.total, rep.sampling_floor];
    let allowed = rep.early_stopping_bound * (1.0 + tol.early_stopping_slack);
    vec![
        check("error terms finite", terms.iter().all(|v| v.is_finite()), format!("total {:.4e}", rep.total)),
        check(
            "triangle consistency",
            rep.is_consistent(),
            format!("total {:.4e} <= {:.4e}", rep.total, rep.sum_of_terms() + rep.sampling_floor),
        ),
        check(
            "early stopping within bound",
            rep.early_stopping <= allowed,
            format!("{:.4e} <= {:.4e}", rep.early_stopping, allowed),
        ),
    ]
}

pub fn euler_check(e: &EulerOrder) -> Check {
    check("Euler first order", (1.7..=2.3).contains(&e.ratio), format!("ratio {:.3} at K={}", e.ratio, e.k))
}

pub fn regularity_checks(rep: &RegularityReport, tol: &Tolerances) -> Vec<Check> {
    let lx = &rep.lipschitz_x;
    let violations: usize = lx.rows.iter().map(|r| r.violations(tol.sandwich)).sum();
    let lt = match rep.lipschitz_t.slope {
        Some(s) => check("L_t growth rate", s <= tol.lt_slope_max, format!("slope {s:.3} <= {}", tol.lt_slope_max)),
        None => check("L_t growth rate", true, "L_t vanishes"),
    };
    let worst_tail = rep
        .tail
        .rows
        .iter()
        .map(|r| r.prob - r.bound - tol.tail_std_errors * r.std_error)
        .fold(f64::NEG_INFINITY, f64::max);
    let ratios: Vec<String> =
        rep.tail.truncation_ratios.iter().map(|r| r.map_or("no exits".into(), |r| format!("{r:.2}"))).collect();
    let slopes: Vec<String> =
        rep.tail.log_prob_slopes.iter().map(|s| s.map_or("n/a".into(), |s| format!("{s:.3}"))).collect();
    vec![
        check(
            "eigenvalue sandwiches",
            violations == 0,
            format!("{violations} violations over {} rows, {} points", lx.rows.len(), lx.n_points),
        ),
        check(
            "spatial Lipschitz below ceiling",
            lx.sup_spectral_norm <= lx.spectral_ceiling * (1.0 + 1e-12),
            format!("{:.4} <= {:.4}", lx.sup_spectral_norm, lx.spectral_ceiling),
        ),
        lt,
        check(
            "moment constants stable",
            rep.moments.is_stable(tol.moment_refinement),
            format!("relative changes {:.3?}", rep.moments.relative_change),
        ),
        check(
            "tail below bound",
            worst_tail <= 0.0,
            format!("max P - bound - {}se = {worst_tail:.3e}", tol.tail_std_errors),
        ),
        check(
            "tail log-probability decreasing",
            rep.tail.slopes_negative(),
            format!("slopes against A^2 [{}]", slopes.join(", ")),
        ),
        check(
            "truncation decay",
            rep.tail.truncation_decays(tol.truncation_ratio),
            format!("ratios [{}] > {}", ratios.join(", "), tol.truncation_ratio),
        ),
    ]
}

/// One-page summary of a completed run. Fails with [`Incomplete`] when the
/// error report or the check list is missing.
pub fn emit_report(dir: &Path) -> Result<(String, Status)> {
    let dir = ArtifactDir::open(dir);
    for required in [artifacts::ERROR_REPORT, artifacts::CHECKS] {
        if !dir.has(required) {
            return Err(Incomplete(format!("{} has no {required}", dir.path().display())).into());
        }
    }
    let rep: ErrorReport = dir.read_json(artifacts::ERROR_REPORT)?;
    let run: RunChecks = dir.read_json(artifacts::CHECKS)?;
    let cfg: Option<ExperimentConfig> =
        if dir.has(artifacts::CONFIG) { Some(dir.read_json(artifacts::CONFIG)?) } else { None };
    let reg: Option<RegularityReport> =
        if dir.has(artifacts::REGULARITY) { Some(dir.read_json(artifacts::REGULARITY)?) } else { None };

    let mut s = String::new();
    let _ = writeln!(s, "run: {}", dir.path().display());
    if let Some(cfg) = &cfg {
        let t = &cfg.target;
        let _ = writeln!(
            s,
            "target: d={} with {} components, sigma {}; train n={}, model widths {:?}",
            t.dim,
            t.weights.len(),
            t.sigma,
            cfg.train.n,
            cfg.model.widths
        );
    }
    let _ = writeln!(s, "grid: K={}, t_floor {}; eval n={}, seed {}", rep.k, rep.t_floor, rep.n, rep.seed);
    let _ = writeln!(s);
    let _ = writeln!(s, "error terms (empirical W2)");
    let _ = writeln!(s, "  discretization       {:.4e}", rep.discretization);
    let _ = writeln!(s, "  velocity estimation  {:.4e}", rep.velocity_estimation);
    let _ = writeln!(s, "  early stopping       {:.4e}  (bound {:.4e})", rep.early_stopping, rep.early_stopping_bound);
    let _ = writeln!(s, "  total                {:.4e}  (sum of terms {:.4e}, sampling floor {:.4e})", rep.total, rep.sum_of_terms(), rep.sampling_floor);
    let _ = writeln!(s);
    let e = &run.euler_order;
    let _ = writeln!(
        s,
        "Euler order: |X_K - X_2K| / |X_2K - X_4K| = {:.4e} / {:.4e} = {:.3} (K={}, n={})",
        e.diff_coarse, e.diff_fine, e.ratio, e.k, e.n
    );
    match reg.as_ref().map(|r| &r.lipschitz_t) {
        Some(lt) => {
            let slope = lt.slope.map_or("undefined".into(), |v| format!("{v:.3}"));
            let _ = writeln!(s, "Lipschitz in t: log-log slope of L_t against 1/t_floor = {slope}");
        }
        None => {
            let _ = writeln!(s, "Lipschitz in t: no regularity report");
        }
    }
    let _ = writeln!(s);
    let passed = run.checks.iter().filter(|c| c.pass).count();
    let _ = writeln!(s, "checks");
    s.push_str(&format_checks(&run.checks));
    let _ = writeln!(s, "{passed} passed, {} failed", run.checks.len() - passed);
    let status = overall(&run.checks);
    let _ = writeln!(s, "status: {}", if status == Status::Pass { "PASS" } else { "FAIL" });
    Ok((s, status))
}

/// Side-by-side error terms of two runs, with the discretization ratio set
/// against the ratio of step counts.
pub fn compare(a: &Path, b: &Path) -> Result<String> {
    let load = |p: &Path| -> Result<ErrorReport> {
        let dir = ArtifactDir::open(p);
        if !dir.has(artifacts::ERROR_REPORT) {
            return Err(Incomplete(format!("{} has no {}", p.display(), artifacts::ERROR_REPORT)).into());
        }
        dir.read_json(artifacts::ERROR_REPORT)
    };
    let (ra, rb) = (load(a)?, load(b)?);
    let mut s = String::new();
    let _ = writeln!(s, "comparison: {} vs {}", a.display(), b.display());
    let _ = writeln!(s, "  {:<20} {:>12} {:>12} {:>8}", "", "A", "B", "A/B");
    let rows = [
        ("K", ra.k as f64, rb.k as f64),
        ("discretization", ra.discretization, rb.discretization),
        ("velocity estimation", ra.velocity_estimation, rb.velocity_estimation),
        ("early stopping", ra.early_stopping, rb.early_stopping),
        ("total", ra.total, rb.total),
    ];
    for (name, x, y) in rows {
        let _ = writeln!(s, "  {name:<20} {x:>12.4e} {y:>12.4e} {:>8.3}", x / y);
    }
    let _ = writeln!(
        s,
        "discretization scales as K^{:.3} (first order predicts K^-1)",
        (ra.discretization / rb.discretization).ln() / (ra.k as f64 / rb.k as f64).ln()
    );
    Ok(s)
}
