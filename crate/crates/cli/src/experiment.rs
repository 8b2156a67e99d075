//! Building problems from a [`Config`], running them and writing reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use ocflow::field::{EuclideanField, GaussianSchedule, So3Field};
use ocflow::mlp::{FeedForward, DEFAULT_HIDDEN};
use ocflow::oc_euclidean::{run_guidance_euclidean, GuidanceConfig, GuidanceMode};
use ocflow::oc_so3::{run_guidance_so3, So3GuidanceConfig, So3Mode};
use ocflow::ode::{integrate_euclidean, integrate_so3, trajectory_csv, ControlSchedule, CostateScheme, TimeGrid};
use ocflow::report::{GuidanceReport, IterationRecord, RunStatus};
use ocflow::reward::{PriorPoint, RewardSpec};
use ocflow::so3::{exp_so3, hat, RotationMatrix, So3Matrix};

use crate::config::{Config, ConfigError};

pub const SCHEMA_VERSION: u32 = 1;
pub const CURVES_HEADER: &str = "iter,J,terminal_reward,running_cost,eps_k";
/// Successive-change threshold for the plateau summary.
pub const PLATEAU_TOL: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) | CliError::Io { .. } => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Problem {
    Euclidean { field: EuclideanField, x0: DVector<f64>, reward: RewardSpec, config: GuidanceConfig },
    So3 { field: So3Field, x0: RotationMatrix, reward: RewardSpec, config: So3GuidanceConfig },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Manifold {
    Euclidean,
    So3,
}

fn vector3(c: &Config, key: &str) -> Result<Vector3<f64>, ConfigError> {
    let v = c.require_list(key)?;
    if v.len() != 3 {
        return Err(c.error(key, format!("expected 3 numbers, got {}", v.len())));
    }
    Ok(Vector3::new(v[0], v[1], v[2]))
}

fn feed_forward(c: &Config, input: usize, output: usize) -> Result<FeedForward, ConfigError> {
    let net = if let Some(path) = c.path("problem.field.weights") {
        FeedForward::load(&path).map_err(|e| c.error("problem.field.weights", e.to_string()))?
    } else {
        let seed = c.require::<u64>("problem.field.seed")?;
        let hidden = c.get_or("problem.field.hidden", DEFAULT_HIDDEN)?;
        let scale = c.get_or("problem.field.scale", 1.0)?;
        FeedForward::random(input, hidden, output, scale, seed)
    };
    if net.input_dim() != input || net.output_dim() != output {
        return Err(c.error(
            "problem.field.weights",
            format!("network maps {} -> {}, expected {input} -> {output}", net.input_dim(), net.output_dim()),
        ));
    }
    Ok(net)
}

fn euclidean_field(c: &Config) -> Result<EuclideanField, ConfigError> {
    let key = "problem.field.variant";
    let variant = c.required(key)?;
    let dim = |c: &Config| c.require::<usize>("problem.field.dim");
    match variant {
        "zero" => Ok(EuclideanField::Zero { dim: dim(c)? }),
        "linear" => {
            let d = dim(c)?;
            let m = c.require_list("problem.field.matrix")?;
            if m.len() != d * d {
                return Err(c.error("problem.field.matrix", format!("expected {} entries", d * d)));
            }
            EuclideanField::linear(DMatrix::from_row_slice(d, d, &m))
                .map_err(|e| c.error("problem.field.matrix", e.to_string()))
        }
        "gaussian_path" => {
            let x1 = DVector::from_vec(c.require_list("problem.field.x1")?);
            let schedule = match c.get_or("problem.field.schedule", "ot".to_string())?.as_str() {
                "ot" => GaussianSchedule::OptimalTransport { sigma_min: c.get_or("problem.field.sigma_min", 0.0)? },
                "trig" => GaussianSchedule::Trigonometric,
                other => return Err(c.error("problem.field.schedule", format!("unknown schedule '{other}'"))),
            };
            Ok(EuclideanField::AffineGaussianPath { schedule, x1 })
        }
        "feed_forward" => {
            let d = dim(c)?;
            EuclideanField::feed_forward(feed_forward(c, d + 1, d)?).map_err(|e| c.error(key, e.to_string()))
        }
        other => Err(c.error(key, format!("unknown euclidean field '{other}'"))),
    }
}

fn so3_field(c: &Config) -> Result<So3Field, ConfigError> {
    let key = "problem.field.variant";
    match c.required(key)? {
        "zero" => Ok(So3Field::Zero),
        "constant_body" => Ok(So3Field::ConstantBody(hat(&vector3(c, "problem.field.omega")?))),
        "geodesic_pull" => Ok(So3Field::GeodesicPull { target: exp_so3(&hat(&vector3(c, "problem.field.target")?)) }),
        "feed_forward" => So3Field::feed_forward(feed_forward(c, 10, 3)?).map_err(|e| c.error(key, e.to_string())),
        other => Err(c.error(key, format!("unknown so3 field '{other}'"))),
    }
}

fn base_reward(c: &Config, variant: &str, key: &str, manifold: Manifold) -> Result<RewardSpec, ConfigError> {
    match (variant, manifold) {
        ("quadratic", _) => {
            Ok(RewardSpec::QuadraticTarget { target: DVector::from_vec(c.require_list("problem.reward.target")?) })
        }
        ("linear_probe", _) => {
            Ok(RewardSpec::LinearProbe { weights: DVector::from_vec(c.require_list("problem.reward.weights")?) })
        }
        ("geodesic", Manifold::So3) => {
            Ok(RewardSpec::GeodesicTarget { target: exp_so3(&hat(&vector3(c, "problem.reward.target")?)) })
        }
        (other, _) => Err(c.error(key, format!("reward '{other}' is not available on this manifold"))),
    }
}

enum Start {
    Euclidean(DVector<f64>),
    So3(RotationMatrix),
}

fn initial_state(c: &Config, manifold: Manifold, dim: usize) -> Result<Start, ConfigError> {
    let key = "problem.x0";
    let seed = c.get_or("optimizer.seed", 0u64)?;
    if c.raw(key) == Some("random") {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        return Ok(match manifold {
            Manifold::Euclidean => Start::Euclidean(DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng))),
            Manifold::So3 => {
                let w = Vector3::from_fn(|_, _| StandardNormal.sample(&mut rng));
                Start::So3(exp_so3(&hat(&w)))
            }
        });
    }
    match manifold {
        Manifold::Euclidean => {
            let v = c.require_list(key)?;
            if v.len() != dim {
                return Err(c.error(key, format!("expected {dim} numbers, got {}", v.len())));
            }
            Ok(Start::Euclidean(DVector::from_vec(v)))
        }
        Manifold::So3 => match c.raw(key) {
            None => Ok(Start::So3(RotationMatrix::identity())),
            Some(_) => Ok(Start::So3(exp_so3(&hat(&vector3(c, key)?)))),
        },
    }
}

fn parse_mode<T>(c: &Config, key: &str, options: &[(&str, T)], default: T) -> Result<T, ConfigError>
where
    T: Copy,
{
    match c.raw(key) {
        None => Ok(default),
        Some(v) => options.iter().find(|(n, _)| *n == v).map(|(_, m)| *m).ok_or_else(|| {
            let names: Vec<_> = options.iter().map(|(n, _)| *n).collect();
            c.error(key, format!("expected one of {names:?}, got '{v}'"))
        }),
    }
}

pub fn build_problem(c: &Config) -> Result<Problem, ConfigError> {
    let manifold = match c.required("problem.manifold")? {
        "euclidean" => Manifold::Euclidean,
        "so3" => Manifold::So3,
        other => return Err(c.error("problem.manifold", format!("expected euclidean or so3, got '{other}'"))),
    };
    let n_steps: usize = c.require("optimizer.n_steps")?;
    let n_controls: usize = c.get_or("optimizer.n_controls", n_steps)?;
    let max_iters: usize = c.require("optimizer.max_iters")?;
    let alpha: f64 = c.get_or("optimizer.alpha", 1.0)?;
    if n_steps == 0 {
        return Err(c.error("optimizer.n_steps", "must be positive"));
    }
    if n_controls == 0 || !n_steps.is_multiple_of(n_controls) {
        return Err(c.error("optimizer.n_controls", "must be positive and divide optimizer.n_steps"));
    }
    let early_stop = c.bool_or("optimizer.early_stop", false)?;

    let (field_e, field_s, dim) = match manifold {
        Manifold::Euclidean => {
            let f = euclidean_field(c)?;
            let d = f.dim();
            (Some(f), None, d)
        }
        Manifold::So3 => (None, Some(so3_field(c)?), 3),
    };
    let start = initial_state(c, manifold, dim)?;

    let rkey = "problem.reward.variant";
    let variant = c.required(rkey)?;
    let reward = if variant == "composite" {
        let base_variant = c.required("problem.reward.base")?;
        let base = base_reward(c, base_variant, "problem.reward.base", manifold)?;
        let lambda: f64 = c.require("problem.reward.lambda")?;
        let prior = match (c.raw("problem.reward.prior"), &start) {
            (None | Some("unguided"), Start::Euclidean(x0)) => {
                let f = field_e.as_ref().expect("euclidean field");
                let grid = TimeGrid::new(n_steps).map_err(|e| c.error("optimizer.n_steps", e.to_string()))?;
                let zero = ControlSchedule::constant(DVector::zeros(dim), 1, grid).expect("one control divides");
                let traj = integrate_euclidean(f, &zero, x0, grid)
                    .map_err(|e| c.error("problem.reward.prior", e.to_string()))?;
                PriorPoint::Euclidean(traj.terminal().clone())
            }
            (None | Some("unguided"), Start::So3(x0)) => {
                let f = field_s.as_ref().expect("so3 field");
                let grid = TimeGrid::new(n_steps).map_err(|e| c.error("optimizer.n_steps", e.to_string()))?;
                let zero = ControlSchedule::constant(So3Matrix::zero(), 1, grid).expect("one control divides");
                let traj =
                    integrate_so3(f, &zero, x0, grid).map_err(|e| c.error("problem.reward.prior", e.to_string()))?;
                PriorPoint::Rotation(*traj.terminal())
            }
            (Some(_), Start::Euclidean(_)) => {
                PriorPoint::Euclidean(DVector::from_vec(c.require_list("problem.reward.prior")?))
            }
            (Some(_), Start::So3(_)) => PriorPoint::Rotation(exp_so3(&hat(&vector3(c, "problem.reward.prior")?))),
        };
        RewardSpec::composite(base, lambda, prior).map_err(|e| c.error("problem.reward.lambda", e.to_string()))?
    } else {
        base_reward(c, variant, rkey, manifold)?
    };

    Ok(match (start, field_e, field_s) {
        (Start::Euclidean(x0), Some(field), _) => {
            let mode = parse_mode(
                c,
                "optimizer.mode",
                &[
                    ("ocflow", GuidanceMode::OcFlow),
                    ("flowgrad", GuidanceMode::FlowGrad),
                    ("dflow", GuidanceMode::DFlow),
                    ("naive", GuidanceMode::Naive),
                ],
                GuidanceMode::OcFlow,
            )?;
            let mut config = if let Some(gamma) = c.get::<f64>("optimizer.gamma")? {
                if c.raw("optimizer.beta").is_some() {
                    return Err(c.error("optimizer.beta", "give either optimizer.gamma or optimizer.beta"));
                }
                GuidanceConfig::from_gamma(gamma, alpha, n_steps, n_controls, max_iters)
            } else {
                let beta = match mode {
                    GuidanceMode::FlowGrad | GuidanceMode::DFlow => c.get_or("optimizer.beta", 1.0)?,
                    _ => c.require("optimizer.beta")?,
                };
                GuidanceConfig::new(c.require("optimizer.eta")?, beta, n_steps, n_controls, max_iters)
            };
            if let Some(eta) = c.get::<f64>("optimizer.eta")? {
                config.eta = eta;
            }
            config.alpha = alpha;
            config.mode = mode;
            config.early_stop = early_stop;
            config.dflow_step = c.get_or("optimizer.dflow_step", 1.0)?;
            config.validate().map_err(|e| c.error("optimizer.mode", e.to_string()))?;
            if reward_dim(&reward).is_some_and(|d| d != dim) {
                return Err(c.error(rkey, format!("reward dimension differs from the state dimension {dim}")));
            }
            Problem::Euclidean { field, x0, reward, config }
        }
        (Start::So3(x0), _, Some(field)) => {
            let mode = parse_mode(
                c,
                "optimizer.mode",
                &[("ocflow", So3Mode::OcFlow), ("naive", So3Mode::Naive)],
                So3Mode::OcFlow,
            )?;
            let mut config = So3GuidanceConfig::new(c.require("optimizer.gamma")?, n_steps, n_controls, max_iters);
            config.mode = mode;
            config.alpha = alpha;
            config.early_stop = early_stop;
            config.scheme = parse_mode(
                c,
                "optimizer.scheme",
                &[("exact", CostateScheme::Exact), ("basis", CostateScheme::Basis)],
                CostateScheme::Exact,
            )?;
            config.validate().map_err(|e| c.error("optimizer.gamma", e.to_string()))?;
            if reward_dim(&reward).is_some_and(|d| d != 9) {
                return Err(c.error(rkey, "so3 quadratic and linear rewards take 9 entries"));
            }
            Problem::So3 { field, x0, reward, config }
        }
        _ => unreachable!("field and start built for the same manifold"),
    })
}

fn reward_dim(r: &RewardSpec) -> Option<usize> {
    match r {
        RewardSpec::QuadraticTarget { target } => Some(target.len()),
        RewardSpec::LinearProbe { weights } => Some(weights.len()),
        RewardSpec::GeodesicTarget { .. } => None,
        RewardSpec::CompositeWithPrior { base, .. } => reward_dim(base),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub final_j: Option<f64>,
    pub best_j: Option<f64>,
    pub best_iter: Option<usize>,
    /// First iteration after which every successive change in `J` is below
    /// `PLATEAU_TOL`.
    pub plateau_iter: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsOut {
    pub costate_bound_violated: bool,
    pub max_orthogonality_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReportFile {
    pub schema_version: u32,
    pub config: BTreeMap<String, String>,
    pub manifold: String,
    pub mode: String,
    pub alpha: f64,
    /// `completed`, `converged` or `failed`.
    pub status: String,
    pub status_detail: Option<String>,
    pub records: Vec<IterationRecord>,
    pub summary: Summary,
    pub diagnostics: DiagnosticsOut,
    pub final_controls: Vec<Vec<f64>>,
}

impl RunReportFile {
    /// Largest `|J - (alpha Phi - running_cost)|` over the records.
    pub fn consistency_error(&self) -> f64 {
        self.records
            .iter()
            .map(|r| (r.objective - (self.alpha * r.terminal_reward - r.running_cost)).abs())
            .fold(0.0, f64::max)
    }

    pub fn failed(&self) -> bool {
        self.status == "failed"
    }

    pub fn curves_csv(&self) -> String {
        let mut out = String::from(CURVES_HEADER);
        out.push('\n');
        for r in &self.records {
            let eps = r.eps_k.map(|e| e.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{}", r.iter, r.objective, r.terminal_reward, r.running_cost, eps);
        }
        out
    }
}

fn summarize(records: &[IterationRecord]) -> Summary {
    let best = records.iter().fold(None::<&IterationRecord>, |acc, r| match acc {
        Some(b) if b.objective >= r.objective => Some(b),
        _ => Some(r),
    });
    let j: Vec<f64> = records.iter().map(|r| r.objective).collect();
    let plateau_iter = (1..j.len()).find(|&k| j[k - 1..].windows(2).all(|w| (w[1] - w[0]).abs() < PLATEAU_TOL));
    Summary {
        final_j: j.last().copied(),
        best_j: best.map(|r| r.objective),
        best_iter: best.map(|r| r.iter),
        plateau_iter,
    }
}

fn status_fields(status: &RunStatus) -> (String, Option<String>) {
    match status {
        RunStatus::Completed => ("completed".into(), None),
        RunStatus::Converged { iter } => {
            ("converged".into(), Some(format!("control change below threshold at iteration {iter}")))
        }
        RunStatus::Failed { iter, message } => ("failed".into(), Some(format!("iteration {iter}: {message}"))),
    }
}

pub struct RunOutput {
    pub report: RunReportFile,
    pub trajectory_csv: Option<String>,
}

fn assemble<S, V, C>(
    config: &Config,
    manifold: &str,
    mode: &str,
    alpha: f64,
    report: GuidanceReport<S, V, C>,
    controls: Vec<Vec<f64>>,
    traj_csv: Option<String>,
) -> RunOutput {
    let (status, status_detail) = status_fields(&report.status);
    RunOutput {
        report: RunReportFile {
            schema_version: SCHEMA_VERSION,
            config: config.entries().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            manifold: manifold.into(),
            mode: mode.into(),
            alpha,
            status,
            status_detail,
            summary: summarize(&report.records),
            records: report.records,
            diagnostics: DiagnosticsOut {
                costate_bound_violated: report.diagnostics.costate_bound_violated,
                max_orthogonality_residual: report.diagnostics.max_orthogonality_residual,
            },
            final_controls: controls,
        },
        trajectory_csv: traj_csv,
    }
}

/// Runs the configured optimizer. Optimizer failures mid-run are reported
/// through the status field; only invalid setups return an error.
pub fn run(config: &Config) -> Result<RunOutput, CliError> {
    let problem = build_problem(config)?;
    let want_traj = config.bool_or("output.trajectory", false)?;
    match problem {
        Problem::Euclidean { field, x0, reward, config: gc } => {
            let report =
                run_guidance_euclidean(&field, &x0, &reward, &gc).map_err(|e| CliError::Runtime(e.to_string()))?;
            let controls = report.final_controls.controls().iter().map(|c| c.iter().copied().collect()).collect();
            let traj = want_traj.then(|| report.final_trajectory.as_ref().map(trajectory_csv)).flatten();
            let mode = format!("{:?}", gc.mode).to_lowercase();
            Ok(assemble(config, "euclidean", &mode, gc.alpha, report, controls, traj))
        }
        Problem::So3 { field, x0, reward, config: sc } => {
            let report = run_guidance_so3(&field, &x0, &reward, &sc).map_err(|e| CliError::Runtime(e.to_string()))?;
            let controls =
                report.final_controls.controls().iter().map(|c| c.vector().iter().copied().collect()).collect();
            let traj = want_traj.then(|| report.final_trajectory.as_ref().map(trajectory_csv)).flatten();
            let mode = format!("{:?}", sc.mode).to_lowercase();
            Ok(assemble(config, "so3", &mode, sc.alpha, report, controls, traj))
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.into(), source })?;
    }
    std::fs::write(path, contents).map_err(|source| CliError::Io { path: path.into(), source })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputPaths {
    pub report: PathBuf,
    pub curves: PathBuf,
    pub trajectory: PathBuf,
}

impl OutputPaths {
    pub fn from_config(c: &Config) -> Self {
        let dir = c.base_dir();
        OutputPaths {
            report: c.path("output.report").unwrap_or_else(|| dir.join("report.json")),
            curves: c.path("output.curves").unwrap_or_else(|| dir.join("curves.csv")),
            trajectory: c.path("output.trajectory_path").unwrap_or_else(|| dir.join("trajectory.csv")),
        }
    }

    pub fn in_dir(dir: &Path) -> Self {
        OutputPaths {
            report: dir.join("report.json"),
            curves: dir.join("curves.csv"),
            trajectory: dir.join("trajectory.csv"),
        }
    }
}

pub fn write_outputs(out: &RunOutput, paths: &OutputPaths) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(&out.report).map_err(|e| CliError::Runtime(e.to_string()))?;
    write(&paths.report, &json)?;
    write(&paths.curves, &out.report.curves_csv())?;
    if let Some(t) = &out.trajectory_csv {
        write(&paths.trajectory, t)?;
    }
    Ok(())
}

pub fn read_report(path: &Path) -> Result<RunReportFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Loads, runs and writes one experiment; returns the report.
pub fn run_experiment(config_path: &Path, paths: Option<OutputPaths>) -> Result<RunReportFile, CliError> {
    let config = Config::load(config_path)?;
    let out = run(&config)?;
    let paths = paths.unwrap_or_else(|| OutputPaths::from_config(&config));
    write_outputs(&out, &paths)?;
    Ok(out.report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> Config {
        Config::parse(text, Path::new(".")).unwrap()
    }

    const LQ: &str = "problem.manifold = euclidean
problem.field.variant = zero
problem.field.dim = 1
problem.x0 = 0
problem.reward.variant = quadratic
problem.reward.target = 1
optimizer.alpha = 0.5
optimizer.beta = 0.5
optimizer.eta = 0.25
optimizer.n_steps = 50
optimizer.max_iters = 200
";

    #[test]
    fn lq_run_reaches_optimum() {
        let out = run(&cfg(LQ)).unwrap();
        assert_eq!(out.report.records.len(), 201);
        assert!((out.report.summary.final_j.unwrap() + 0.25).abs() < 1e-4);
        assert!(out.report.consistency_error() < 1e-12);
        assert!(out.report.curves_csv().starts_with("iter,J,terminal_reward,running_cost,eps_k\n0,-0.5,-1,0,\n"));
    }

    #[test]
    fn config_errors_point_at_keys() {
        let e = build_problem(&cfg(
            &LQ.replace("optimizer.n_steps = 50", "optimizer.n_steps = 50\noptimizer.n_controls = 7")
        ))
        .unwrap_err();
        assert_eq!(e.key, "optimizer.n_controls");
        assert_eq!(e.line, 11);
        let e = build_problem(&cfg(&LQ.replace("problem.x0 = 0", "problem.x0 = 0, 1"))).unwrap_err();
        assert_eq!((e.key.as_str(), e.line), ("problem.x0", 4));
        let e = build_problem(&cfg(&LQ.replace("zero", "spiral"))).unwrap_err();
        assert_eq!(e.key, "problem.field.variant");
    }

    #[test]
    fn random_start_depends_on_seed_only() {
        let text = LQ
            .replace("problem.x0 = 0", "problem.x0 = random")
            .replace("problem.field.dim = 1", "problem.field.dim = 1\noptimizer.seed = 5");
        let a = build_problem(&cfg(&text)).unwrap();
        let b = build_problem(&cfg(&text)).unwrap();
        match (a, b) {
            (Problem::Euclidean { x0: xa, .. }, Problem::Euclidean { x0: xb, .. }) => assert_eq!(xa, xb),
            _ => panic!("expected euclidean problems"),
        }
    }

    #[test]
    fn composite_prior_defaults_to_unguided_terminal() {
        let text = LQ
            .replace(
                "problem.reward.variant = quadratic",
                "problem.reward.variant = composite\nproblem.reward.base = quadratic\nproblem.reward.lambda = 0.7",
            )
            .replace("problem.x0 = 0", "problem.x0 = 0.3");
        match build_problem(&cfg(&text)).unwrap() {
            Problem::Euclidean {
                reward: RewardSpec::CompositeWithPrior { prior: PriorPoint::Euclidean(p), .. },
                ..
            } => {
                assert!((p[0] - 0.3).abs() < 1e-15);
            }
            other => panic!("unexpected problem {other:?}"),
        }
    }

    #[test]
    fn plateau_summary() {
        let rec = |iter, objective| IterationRecord {
            iter,
            objective,
            terminal_reward: objective,
            running_cost: 0.0,
            control_change_norm: 0.0,
            eps_k: None,
        };
        let s = summarize(&[rec(0, -1.0), rec(1, -0.5), rec(2, -0.4999999), rec(3, -0.4999999)]);
        assert_eq!(s.plateau_iter, Some(2));
        assert_eq!(s.best_iter, Some(2));
    }
}
