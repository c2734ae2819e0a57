//! Subcommand implementations. Each writes its artifacts and reports a
//! [`Status`]; errors carry enough type information to pick an exit code.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use linflow::flowmatch::{Checkpoint, MlpVelocityModel, TrainOutcome};
use linflow::metrics::decompose_errors;
use linflow::oracle::{identity_cross_checks, velocity, velocity_jacobian, velocity_time_derivative};
use linflow::pipeline::{generate, reference_sample, train_from_config, ExperimentConfig, Tolerances};
use linflow::regularity::{probe_points, run_regularity_suite, write_sandwich_csv, RegularityReport};
use linflow::relu::{
    build_clipper, build_identity, build_time_approximant, build_time_pou, max_error_1d, max_slope_1d,
    write_stats_csv, ReluNetwork,
};
use linflow::sampler::{check_step_condition, euler_integrate, write_points_csv, write_trajectory_csv, EulerMode};
use linflow::target::standard_normal;
use linflow::{numdiff, GaussianMixtureTarget, OracleField, TimeGrid, VelocityField};
use ndarray::{array, Array2};
use rayon::prelude::*;
use serde::Serialize;

use crate::artifacts::{self, load_config, resolve_dir, ArtifactDir};
use crate::plot;
use crate::report::{self, check, Check, EulerOrder, RunChecks};
use crate::status::{Incomplete, Status};

/// Endpoints used by the Euler-order check.
const EULER_ORDER_POINTS: usize = 1024;

fn max_abs<'a>(v: impl IntoIterator<Item = &'a f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn print_checks(title: &str, checks: &[Check]) {
    println!("{title}");
    print!("{}", report::format_checks(checks));
}

// ---- verify ----

#[derive(Debug, Serialize)]
struct VerifyReport {
    points_per_target: usize,
    seed: u64,
    checks: Vec<Check>,
}

fn builtin_targets() -> Vec<(String, GaussianMixtureTarget)> {
    let triple = GaussianMixtureTarget::new(
        vec![0.2, 0.5, 0.3],
        array![[1.5, 0.0, -0.5], [-0.5, 1.0, 0.0], [0.0, -1.0, 1.0]],
        0.6,
    )
    .expect("valid built-in target");
    vec![
        ("gaussian".into(), GaussianMixtureTarget::standard_gaussian(2)),
        ("pair".into(), GaussianMixtureTarget::symmetric_pair(&[1.0, 0.0], 0.5).expect("valid built-in target")),
        ("triple".into(), triple),
    ]
}

/// Low-discrepancy times in `[lo, hi)`.
fn spread_times(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    const GOLDEN: f64 = 0.618_033_988_749_894_8;
    (0..n).map(|i| lo + (hi - lo) * ((i as f64 + 0.5) * GOLDEN).fract()).collect()
}

/// Oracle exactness on the standard Gaussian, derivative identities by
/// finite differences, and the Tweedie / Hatsell–Nolte cross-checks.
pub fn verify_checks(targets: &[(String, GaussianMixtureTarget)], points: usize, seed: u64, tol: &Tolerances) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let mut dims: Vec<usize> = targets.iter().map(|(_, t)| t.dim()).collect();
    dims.sort_unstable();
    dims.dedup();
    for d in dims {
        let g = GaussianMixtureTarget::standard_gaussian(d);
        let xs = probe_points(d, 4.0, points, 0, seed);
        let mut worst = 0.0f64;
        for (x, t) in xs.rows().into_iter().zip(spread_times(points, 0.0, 1.0)) {
            let c = (2.0 * t - 1.0) / (2.0 * t * t - 2.0 * t + 1.0);
            let v = velocity(&g, t, x)?;
            worst = worst.max(max_abs((&v - &(&x * c)).iter()));
        }
        checks.push(check(
            &format!("gaussian d={d}: oracle closed form"),
            worst <= tol.oracle_exact,
            format!("max error {worst:.2e}"),
        ));
    }

    for (name, target) in targets {
        let d = target.dim();
        let xs = probe_points(d, 3.0, points, 0, seed);
        let (mut jac, mut dt, mut ident) = (0.0f64, 0.0f64, 0.0f64);
        for (x, t) in xs.rows().into_iter().zip(spread_times(points, 0.05, 0.9)) {
            let analytic = velocity_jacobian(target, t, x)?;
            let fd = numdiff::jacobian(|y| velocity(target, t, y).expect("checked point"), x, numdiff::STEP_X);
            jac = jac.max(max_abs((&analytic - &fd).iter()));
            let analytic = velocity_time_derivative(target, t, x)?;
            let fd = numdiff::derivative(|s| velocity(target, s, x).expect("checked point"), t, numdiff::STEP_T);
            dt = dt.max(max_abs((&analytic - &fd).iter()));
            ident = ident.max(identity_cross_checks(target, t, x)?.max_residual);
        }
        let r = tol.identity_residual;
        checks.push(check(&format!("{name}: Jacobian vs finite differences"), jac <= r, format!("max entry error {jac:.2e}")));
        checks.push(check(&format!("{name}: time derivative vs finite differences"), dt <= r, format!("max error {dt:.2e}")));
        checks.push(check(&format!("{name}: Tweedie / Hatsell-Nolte"), ident <= r, format!("max residual {ident:.2e}")));
    }
    Ok(checks)
}

pub fn verify(config: Option<&Path>, points: usize, seed: u64, out: Option<&Path>) -> Result<Status> {
    let (targets, tol) = match config {
        Some(p) => {
            let cfg = load_config(p)?;
            (vec![("config".to_string(), cfg.build_target()?)], cfg.checks.tolerances)
        }
        None => (builtin_targets(), Tolerances::default()),
    };
    let checks = verify_checks(&targets, points, seed, &tol)?;
    print_checks("oracle verification", &checks);
    if let Some(out) = out {
        ArtifactDir::create(out)?.write_json(artifacts::VERIFY, &VerifyReport { points_per_target: points, seed, checks: checks.clone() })?;
    }
    Ok(report::overall(&checks))
}

// ---- train / sample / evaluate / regularity ----

#[derive(Debug, Serialize)]
struct TrainingSummary {
    iterations: usize,
    initial_loss: f64,
    final_loss: f64,
    zero_model_loss: f64,
    parameters: usize,
}

fn write_loss_csv(dir: &ArtifactDir, outcome: &TrainOutcome) -> Result<()> {
    let mut w = csv::Writer::from_writer(dir.writer(artifacts::LOSS_CSV)?);
    w.write_record(["step", "loss"])?;
    for p in &outcome.trace {
        w.write_record([p.step.to_string(), p.loss.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Trains, then writes the checkpoint, loss trace and loss plot. Returns the
/// model and the check that the trained risk is below the zero model's.
fn train_into(cfg: &ExperimentConfig, dir: &ArtifactDir) -> Result<(MlpVelocityModel, Check)> {
    let trained = train_from_config(cfg).context("training")?;
    dir.write_json(artifacts::CHECKPOINT, &trained.model.to_checkpoint())?;
    write_loss_csv(dir, &trained.outcome)?;
    plot::loss_curve(&dir.file(artifacts::LOSS_SVG), &trained.outcome.trace)?;
    let o = &trained.outcome;
    dir.write_json(
        artifacts::TRAINING,
        &TrainingSummary {
            iterations: o.trace.len().saturating_sub(1),
            initial_loss: o.initial_loss,
            final_loss: o.final_loss,
            zero_model_loss: trained.zero_model_loss,
            parameters: trained.model.param_count(),
        },
    )?;
    let c = check(
        "trained risk below zero model",
        o.final_loss <= trained.zero_model_loss,
        format!("{:.4e} <= {:.4e}", o.final_loss, trained.zero_model_loss),
    );
    Ok((trained.model, c))
}

fn load_model(dir: &ArtifactDir, checkpoint: Option<&Path>, d: usize) -> Result<MlpVelocityModel> {
    let path = checkpoint.map_or_else(|| dir.file(artifacts::CHECKPOINT), Path::to_path_buf);
    if !path.is_file() {
        return Err(Incomplete(format!("no checkpoint at {}; run `train` first", path.display())).into());
    }
    let text = std::fs::read_to_string(&path)?;
    let ckpt: Checkpoint = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let model = MlpVelocityModel::from_checkpoint(ckpt)?;
    if model.dim() != d {
        return Err(linflow::Error::DimensionMismatch { expected: d, got: model.dim() }.into());
    }
    Ok(model)
}

pub fn train(config: &Path, out: Option<&Path>) -> Result<Status> {
    let cfg = load_config(config)?;
    let dir = ArtifactDir::create(resolve_dir(out, Some(config), "run"))?;
    dir.write_json(artifacts::CONFIG, &cfg)?;
    let (_, c) = train_into(&cfg, &dir)?;
    print_checks(&format!("trained -> {}", dir.path().display()), std::slice::from_ref(&c));
    Ok(Status::from_pass(c.pass))
}

pub struct SampleOptions<'a> {
    pub checkpoint: Option<&'a Path>,
    pub oracle: bool,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub trajectory: bool,
}

pub fn sample(config: &Path, opts: &SampleOptions, out: Option<&Path>) -> Result<Status> {
    let cfg = load_config(config)?;
    let dir = ArtifactDir::create(resolve_dir(out, Some(config), "run"))?;
    let target = cfg.build_target()?;
    let grid = cfg.time_grid()?;
    let field: Box<dyn VelocityField> = if opts.oracle {
        Box::new(OracleField::new(target.clone()))
    } else {
        Box::new(load_model(&dir, opts.checkpoint, target.dim())?)
    };
    let n = opts.n.unwrap_or(cfg.eval.n);
    let seed = opts.seed.unwrap_or(cfg.eval.seed);
    let z = standard_normal(n, target.dim(), seed);
    let mode = if opts.trajectory { EulerMode::Trajectory } else { EulerMode::Endpoints };
    let run = euler_integrate(field.as_ref(), &grid, z.view(), mode)?;
    write_points_csv(dir.writer(artifacts::ENDPOINTS_CSV)?, run.endpoints.view())?;
    if let Some(traj) = &run.trajectory {
        write_trajectory_csv(dir.writer(artifacts::TRAJECTORY_CSV)?, &grid, traj)?;
    }
    println!("{n} endpoints ({} steps) -> {}", grid.steps(), dir.path().display());
    Ok(Status::Pass)
}

fn evaluate_into(cfg: &ExperimentConfig, model: &MlpVelocityModel, dir: &ArtifactDir) -> Result<Vec<Check>> {
    let target = cfg.build_target()?;
    let grid = cfg.time_grid()?;
    let rep = decompose_errors(&target, model, &grid, cfg.eval.n, cfg.eval.seed)?;
    dir.write_json(artifacts::ERROR_REPORT, &rep)?;
    let generated = generate(model, &grid, cfg.eval.n, cfg.eval.seed)?;
    let reference = reference_sample(&target, cfg.eval.n, cfg.eval.seed);
    write_points_csv(dir.writer(artifacts::ENDPOINTS_CSV)?, generated.view())?;
    write_points_csv(dir.writer(artifacts::REFERENCE_CSV)?, reference.view())?;
    plot::scatter(&dir.file(artifacts::SCATTER_SVG), generated.view(), reference.view())?;
    Ok(report::error_checks(&rep, &cfg.checks.tolerances))
}

pub fn evaluate(config: &Path, checkpoint: Option<&Path>, out: Option<&Path>) -> Result<Status> {
    let cfg = load_config(config)?;
    let dir = ArtifactDir::create(resolve_dir(out, Some(config), "run"))?;
    let model = load_model(&dir, checkpoint, cfg.target.dim)?;
    let checks = evaluate_into(&cfg, &model, &dir)?;
    print_checks(&format!("evaluated -> {}", dir.path().display()), &checks);
    Ok(report::overall(&checks))
}

fn regularity_into(cfg: &ExperimentConfig, dir: &ArtifactDir) -> Result<Vec<Check>> {
    let target = cfg.build_target()?;
    let rep: RegularityReport = run_regularity_suite(&target, &cfg.regularity)?;
    dir.write_json(artifacts::REGULARITY, &rep)?;
    write_sandwich_csv(dir.writer(artifacts::SANDWICH_CSV)?, &rep.lipschitz_x.rows)?;
    plot::lipschitz_t(&dir.file(artifacts::LIPSCHITZ_T_SVG), &rep.lipschitz_t.rows, rep.lipschitz_t.slope)?;
    Ok(report::regularity_checks(&rep, &cfg.checks.tolerances))
}

pub fn regularity(config: &Path, out: Option<&Path>) -> Result<Status> {
    let cfg = load_config(config)?;
    let dir = ArtifactDir::create(resolve_dir(out, Some(config), "run"))?;
    let checks = regularity_into(&cfg, &dir)?;
    print_checks(&format!("regularity -> {}", dir.path().display()), &checks);
    Ok(report::overall(&checks))
}

// ---- Euler order ----

fn oracle_endpoints(target: &GaussianMixtureTarget, k: usize, t_floor: f64, z: &Array2<f64>) -> Result<Array2<f64>> {
    let grid = TimeGrid::uniform(k, t_floor)?;
    Ok(euler_integrate(&OracleField::new(target.clone()), &grid, z.view(), EulerMode::Endpoints)?.endpoints)
}

fn rms(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    ((a - b).iter().map(|v| v * v).sum::<f64>() / a.nrows() as f64).sqrt()
}

pub fn euler_order(cfg: &ExperimentConfig) -> Result<EulerOrder> {
    let target = cfg.build_target()?;
    let (k, t_floor) = (cfg.grid.k, cfg.grid.t_floor);
    let n = cfg.eval.n.min(EULER_ORDER_POINTS);
    let z = standard_normal(n, target.dim(), cfg.eval.seed);
    let e1 = oracle_endpoints(&target, k, t_floor, &z)?;
    let e2 = oracle_endpoints(&target, 2 * k, t_floor, &z)?;
    let e4 = oracle_endpoints(&target, 4 * k, t_floor, &z)?;
    let (diff_coarse, diff_fine) = (rms(&e1, &e2), rms(&e2, &e4));
    Ok(EulerOrder { k, n, diff_coarse, diff_fine, ratio: diff_coarse / diff_fine })
}

// ---- experiment ----

/// Every pipeline step for one config, written under `dir`.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &ArtifactDir) -> Result<Status> {
    dir.write_json(artifacts::CONFIG, cfg)?;
    let (model, trained) = train_into(cfg, dir)?;
    let mut checks = vec![trained];
    checks.extend(evaluate_into(cfg, &model, dir)?);

    let euler_order = euler_order(cfg)?;
    checks.push(report::euler_check(&euler_order));
    let step = check_step_condition(&cfg.time_grid()?);
    checks.push(check(
        "step-size condition",
        step.uniform_ok,
        format!("sum of cubed steps {:.3e}, max step {:.3e}", step.sum_cubed, step.max_step),
    ));
    checks.extend(regularity_into(cfg, dir)?);

    dir.write_json(artifacts::CHECKS, &RunChecks { euler_order, checks })?;
    let (summary, status) = report::emit_report(dir.path())?;
    dir.write_text(artifacts::SUMMARY, &summary)?;
    Ok(status)
}

/// Runs the configs concurrently; each gets its own artifact directory.
pub fn experiment(configs: &[PathBuf], out: Option<&Path>) -> Result<Status> {
    if out.is_some() && configs.len() > 1 {
        return Err(crate::status::ConfigError("--out takes a single config; use LINFLOW_ARTIFACTS for several".into()).into());
    }
    let loaded: Vec<(PathBuf, ExperimentConfig)> =
        configs.iter().map(|p| Ok((p.clone(), load_config(p)?))).collect::<Result<_>>()?;
    let results: Vec<(PathBuf, Result<Status>)> = loaded
        .par_iter()
        .map(|(path, cfg)| {
            let dir = resolve_dir(out, Some(path), "run");
            let res = ArtifactDir::create(&dir)
                .and_then(|d| run_experiment(cfg, &d))
                .with_context(|| format!("experiment {}", path.display()));
            (dir, res)
        })
        .collect();

    let mut status = Status::Pass;
    let mut first_err = None;
    for (dir, res) in results {
        match res {
            Ok(s) => {
                let summary = std::fs::read_to_string(dir.join(artifacts::SUMMARY)).unwrap_or_default();
                print!("{summary}");
                println!();
                status = status.and(s);
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                first_err.get_or_insert(e);
            }
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(status),
    }
}

// ---- approx ----

#[derive(Debug, Serialize)]
struct NetworkSummary {
    name: String,
    width: usize,
    depth: usize,
    size: usize,
}

#[derive(Debug, Serialize)]
struct KnotRow {
    #[serde(rename = "M")]
    m: usize,
    partition_error: f64,
    /// `f(t) = t`: sup error, its prediction `1/(3M)`, and the exact Lipschitz constant.
    linear_error: f64,
    linear_error_predicted: f64,
    linear_lipschitz: f64,
    linear_size: usize,
    /// `f(t) = sin(2πt)` for comparison.
    sine_error: f64,
    sine_lipschitz: f64,
}

#[derive(Debug, Serialize)]
struct ApproxReport {
    a: f64,
    d: usize,
    clipper_error: f64,
    identity_error: f64,
    networks: Vec<NetworkSummary>,
    knots: Vec<KnotRow>,
    checks: Vec<Check>,
}

fn clamp_error(net: &ReluNetwork, a: f64, d: usize) -> Result<f64> {
    let xs = probe_points(d, 2.0 * a, 512, 0, 0);
    let out = net.eval_batch(xs.view())?;
    Ok(max_abs((&out - &xs.mapv(|v| v.clamp(-a, a))).iter()))
}

fn samples(m: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    (0..=m).map(|j| f(j as f64 / m as f64)).collect()
}

pub fn approx(ms: &[usize], a: f64, d: usize, out: Option<&Path>) -> Result<Status> {
    let dir = ArtifactDir::create(resolve_dir(out, None, "approx"))?;
    let net_dir = ArtifactDir::create(dir.file("networks"))?;
    let clipper = build_clipper(a, d)?;
    let identity = build_identity(d)?;
    let clipper_error = clamp_error(&clipper, a, d)?;
    let xs = probe_points(d, 2.0 * a, 256, 0, 1);
    let identity_error = max_abs((&identity.eval_batch(xs.view())? - &xs).iter());
    net_dir.write_json("clipper.json", &clipper)?;
    net_dir.write_json("identity.json", &identity)?;

    let mut checks = vec![
        check(
            "clipper reproduces clamp",
            clipper_error <= 4.0 * f64::EPSILON * a.max(1.0),
            format!("max error {clipper_error:.2e}"),
        ),
        check(
            "clipper shape",
            clipper.stats().depth == 1 && clipper.stats().width == 2 * d,
            format!("{:?}", clipper.stats()),
        ),
        check("identity network exact", identity_error == 0.0, format!("max error {identity_error:.2e}")),
    ];
    let mut nets: Vec<(String, ReluNetwork)> = vec![("clipper".into(), clipper), ("identity".into(), identity)];
    let mut knots = Vec::new();
    for &m in ms {
        let pou = build_time_pou(m)?;
        let mut partition_error = 0.0f64;
        for i in 0..=4096 {
            let t = i as f64 / 4096.0;
            let s: f64 = pou.iter().map(|p| p.eval(array![t].view()).map(|v| v[0])).sum::<linflow::Result<f64>>()?;
            partition_error = partition_error.max((s - 1.0).abs());
        }
        let linear = build_time_approximant(&samples(m, |t| t), m)?;
        let sine_fn = |t: f64| (2.0 * std::f64::consts::PI * t).sin();
        let sine = build_time_approximant(&samples(m, sine_fn), m)?;
        let row = KnotRow {
            m,
            partition_error,
            linear_error: max_error_1d(&linear, |t| t, 4096)?,
            linear_error_predicted: 1.0 / (3.0 * m as f64),
            linear_lipschitz: max_slope_1d(&linear)?,
            linear_size: linear.stats().size,
            sine_error: max_error_1d(&sine, sine_fn, 4096)?,
            sine_lipschitz: max_slope_1d(&sine)?,
        };
        checks.push(check(&format!("M={m}: partition of unity"), partition_error <= 1e-12, format!("{partition_error:.2e}")));
        checks.push(check(
            &format!("M={m}: error for f(t)=t"),
            (row.linear_error - row.linear_error_predicted).abs() <= 1e-12,
            format!("{:.6e} vs 1/(3M) = {:.6e}", row.linear_error, row.linear_error_predicted),
        ));
        checks.push(check(
            &format!("M={m}: Lipschitz for f(t)=t"),
            row.linear_lipschitz <= 3.0 + 1e-9,
            format!("{:.6}", row.linear_lipschitz),
        ));
        checks.push(check(
            &format!("M={m}: approximant size"),
            row.linear_size == 12 * (m + 1) - 4 && linear.stats().width == 4 * (m + 1),
            format!("{:?}", linear.stats()),
        ));
        net_dir.write_json(&format!("time_approximant_M{m}.json"), &linear)?;
        nets.push((format!("time_approximant_M{m}"), linear));
        nets.push((format!("sine_approximant_M{m}"), sine));
        knots.push(row);
    }

    let named: Vec<(&str, &ReluNetwork)> = nets.iter().map(|(n, net)| (n.as_str(), net)).collect();
    write_stats_csv(dir.writer(artifacts::NETWORK_STATS_CSV)?, &named)?;
    let networks = nets
        .iter()
        .map(|(name, net)| {
            let s = net.stats();
            NetworkSummary { name: name.clone(), width: s.width, depth: s.depth, size: s.size }
        })
        .collect();
    let rep = ApproxReport { a, d, clipper_error, identity_error, networks, knots, checks };
    dir.write_json(artifacts::APPROX, &rep)?;
    print_checks(&format!("ReLU constructions -> {}", dir.path().display()), &rep.checks);
    Ok(report::overall(&rep.checks))
}

// ---- report ----

pub fn report(dir: &Path, compare: Option<&Path>) -> Result<Status> {
    let (text, status) = report::emit_report(dir)?;
    print!("{text}");
    if let Some(other) = compare {
        println!();
        print!("{}", report::compare(dir, other)?);
    }
    Ok(status)
}
