//! Executable verification suites and the seeded problem families they run on.
//!
//! Each check records its tolerance and the observed value so a driver can
//! print or serialize the outcome.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::field::{EuclideanField, GaussianSchedule, So3Field};
use crate::metrics::{gaussian_kl_bound_check, GaussianPathCase};
use crate::mlp::{FeedForward, DEFAULT_HIDDEN};
use crate::oc_euclidean::{calibrate_gamma_euclidean, run_guidance_euclidean, GuidanceConfig, GuidanceMode};
use crate::oc_so3::{calibrate_gamma_so3, run_guidance_so3, So3GuidanceConfig, So3Mode};
use crate::ode::{
    backward_grad_chain, costate_solve_so3, integrate_euclidean, integrate_so3, ControlSchedule, CostateScheme,
    CostateTrajectory, EuclideanTrajectory, TimeGrid,
};
use crate::oracle::{
    brute_force_constant_control_so3, finite_diff_gradient, finite_diff_gradient_so3, lq_closed_form, BruteForceSpec,
};
use crate::report::ASCENT_TOL;
use crate::reward::{PriorPoint, RewardSpec};
use crate::so3::{
    basis_coords, basis_reconstruct, canonical_basis, exp_so3, frobenius_inner, geodesic_distance, hat, lie_bracket,
    log_so3, rotation_angle, vee, RotationMatrix, So3Matrix,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Suite {
    Geometry,
    Gradients,
    Bounds,
    Convergence,
    Baselines,
}

impl Suite {
    pub const ALL: [Suite; 5] =
        [Suite::Geometry, Suite::Gradients, Suite::Bounds, Suite::Convergence, Suite::Baselines];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Geometry => "geometry",
            Suite::Gradients => "gradients",
            Suite::Bounds => "bounds",
            Suite::Convergence => "convergence",
            Suite::Baselines => "baselines",
        }
    }

    pub fn parse(name: &str) -> Result<Suite> {
        Suite::ALL.into_iter().find(|s| s.name() == name).ok_or_else(|| invalid(format!("unknown suite '{name}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    /// Human-readable acceptance rule, e.g. `<= 1e-9`.
    pub tolerance: String,
    pub observed: f64,
    pub passed: bool,
}

impl CheckResult {
    /// Passes when `observed <= tol`.
    pub fn at_most(name: &str, observed: f64, tol: f64) -> Self {
        CheckResult { name: name.into(), tolerance: format!("<= {tol:e}"), observed, passed: observed <= tol }
    }

    /// Passes when `observed >= tol`.
    pub fn at_least(name: &str, observed: f64, tol: f64) -> Self {
        CheckResult { name: name.into(), tolerance: format!(">= {tol:e}"), observed, passed: observed >= tol }
    }

    /// Passes when `lo <= observed <= hi`.
    pub fn within(name: &str, observed: f64, lo: f64, hi: f64) -> Self {
        CheckResult {
            name: name.into(),
            tolerance: format!("in [{lo}, {hi}]"),
            observed,
            passed: (lo..=hi).contains(&observed),
        }
    }

    fn failed_with(name: &str, tolerance: String, err: impl fmt::Display) -> Self {
        CheckResult { name: name.into(), tolerance: format!("{tolerance} ({err})"), observed: f64::NAN, passed: false }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {} observed={:.3e} tol {}", self.name, self.observed, self.tolerance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub suite: String,
    pub checks: Vec<CheckResult>,
}

impl SuiteSummary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Adjoint routine under test: `(field, trajectory, terminal gradient, controls)`.
pub type AdjointFn<'a> = dyn Fn(
        &EuclideanField,
        &EuclideanTrajectory,
        &DVector<f64>,
        &ControlSchedule<DVector<f64>>,
    ) -> Result<CostateTrajectory<DVector<f64>>>
    + 'a;

pub fn run_suite(suite: Suite) -> SuiteSummary {
    let checks = match suite {
        Suite::Geometry => geometry_checks(),
        Suite::Gradients => gradient_checks(&backward_grad_chain),
        Suite::Bounds => bound_checks(),
        Suite::Convergence => convergence_checks(),
        Suite::Baselines => baseline_checks(),
    };
    SuiteSummary { suite: suite.name().into(), checks }
}

fn unwrap_check(name: &str, tolerance: &str, r: Result<CheckResult>) -> CheckResult {
    r.unwrap_or_else(|e| CheckResult::failed_with(name, tolerance.into(), e))
}

fn random_vector3(rng: &mut ChaCha8Rng, radius: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.random_range(-radius..radius))
}

fn random_rotation(rng: &mut ChaCha8Rng, max_angle: f64) -> RotationMatrix {
    let axis: Vector3<f64> = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
    exp_so3(&hat(&(axis.normalize() * rng.random_range(0.0..max_angle))))
}

pub fn relative_error(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}

// ---------------------------------------------------------------- problems

#[derive(Debug, Clone)]
pub struct EuclideanProblem {
    pub field: EuclideanField,
    pub x0: DVector<f64>,
    pub reward: RewardSpec,
}

#[derive(Debug, Clone)]
pub struct So3Problem {
    pub field: So3Field,
    pub x0: RotationMatrix,
    pub reward: RewardSpec,
}

/// Feed-forward prior on R^4 with a quadratic target.
pub fn seeded_euclidean_problem(seed: u64) -> EuclideanProblem {
    let d = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = FeedForward::random(d + 1, DEFAULT_HIDDEN, d, 1.0, seed.wrapping_mul(7919).wrapping_add(1));
    let x0 = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
    let target = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
    EuclideanProblem {
        field: EuclideanField::feed_forward(net).expect("dimensions chain"),
        x0,
        reward: RewardSpec::QuadraticTarget { target },
    }
}

/// Feed-forward prior on SO(3) steered toward a geodesic target at most 1.5
/// rad from the start.
pub fn seeded_so3_problem(seed: u64) -> So3Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = FeedForward::random(10, DEFAULT_HIDDEN, 3, 0.5, seed.wrapping_mul(104_729).wrapping_add(3));
    let x0 = random_rotation(&mut rng, 1.0);
    let target = x0 * random_rotation(&mut rng, 1.5);
    So3Problem {
        field: So3Field::feed_forward(net).expect("dimensions chain"),
        x0,
        reward: RewardSpec::GeodesicTarget { target },
    }
}

// ---------------------------------------------------------------- geometry

pub fn geometry_checks() -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut checks = Vec::new();

    let mut roundtrip: f64 = 0.0;
    let mut log_roundtrip: f64 = 0.0;
    let mut hat_vee: f64 = 0.0;
    for _ in 0..500 {
        let w = Vector3::from_fn(|_, _| StandardNormal.sample(&mut rng)).normalize() * rng.random_range(0.0..3.0);
        let a = hat(&w);
        hat_vee = hat_vee.max((vee(a.matrix()).expect("skew") - w).amax());
        let r = exp_so3(&a);
        let back = log_so3(&r).expect("angle below pi");
        roundtrip = roundtrip.max((back - a).matrix().amax());
        let r2 = exp_so3(&back);
        log_roundtrip = log_roundtrip.max((r2.matrix() - r.matrix()).amax());
    }
    checks.push(CheckResult::at_most("geometry.hat_vee_roundtrip", hat_vee, 1e-15));
    checks.push(CheckResult::at_most("geometry.log_exp_roundtrip", roundtrip, 1e-9));
    checks.push(CheckResult::at_most("geometry.exp_log_roundtrip", log_roundtrip, 1e-9));

    let mut r = RotationMatrix::identity();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        r = r * exp_so3(&hat(&random_vector3(&mut rng, 1.0)));
        worst = worst.max(r.orthogonality_residual());
    }
    checks.push(CheckResult::at_most("geometry.orthogonality_1000_compositions", worst, 1e-9));

    let e = canonical_basis();
    let mut gram: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let expect = if i == j { 2.0 } else { 0.0 };
            gram = gram.max((frobenius_inner(&e[i], &e[j]) - expect).abs());
        }
    }
    checks.push(CheckResult::at_most("geometry.basis_gram", gram, 1e-15));

    let mut completeness: f64 = 0.0;
    for _ in 0..200 {
        let a = hat(&random_vector3(&mut rng, 2.0));
        completeness = completeness.max((basis_reconstruct(&basis_coords(&a)) - a).matrix().amax());
    }
    checks.push(CheckResult::at_most("geometry.completeness", completeness, 1e-14));

    let structure = [(0, 1, 2), (1, 2, 0), (2, 0, 1)]
        .iter()
        .map(|&(i, j, k)| (lie_bracket(&e[i], &e[j]) - e[k]).matrix().amax())
        .fold(0.0, f64::max);
    checks.push(CheckResult::at_most("geometry.bracket_structure_constants", structure, 1e-15));

    let mut jacobi: f64 = 0.0;
    for _ in 0..100 {
        let (a, b, c) = (
            hat(&random_vector3(&mut rng, 1.0)),
            hat(&random_vector3(&mut rng, 1.0)),
            hat(&random_vector3(&mut rng, 1.0)),
        );
        let s = lie_bracket(&a, &lie_bracket(&b, &c))
            + lie_bracket(&b, &lie_bracket(&c, &a))
            + lie_bracket(&c, &lie_bracket(&a, &b));
        jacobi = jacobi.max(s.matrix().amax());
    }
    checks.push(CheckResult::at_most("geometry.jacobi_identity", jacobi, 1e-12));

    let mut triangle: f64 = f64::NEG_INFINITY;
    for _ in 0..200 {
        let (a, b, c) =
            (random_rotation(&mut rng, 1.0), random_rotation(&mut rng, 1.0), random_rotation(&mut rng, 1.0));
        let d = |x: &RotationMatrix, y: &RotationMatrix| geodesic_distance(x, y).expect("angles well below pi");
        triangle = triangle.max(d(&a, &c) - d(&a, &b) - d(&b, &c));
    }
    checks.push(CheckResult::at_most("geometry.triangle_inequality_excess", triangle.max(0.0), 1e-12));

    let antipodal = exp_so3(&hat(&Vector3::new(PI - 1e-8, 0.0, 0.0)));
    let rejected = if log_so3(&antipodal).is_err() { 0.0 } else { 1.0 };
    checks.push(CheckResult::at_most("geometry.near_antipodal_rejected", rejected, 0.0));
    checks
}

// ---------------------------------------------------------------- gradients

/// Field variants exercised by the Euclidean adjoint checks.
pub fn euclidean_gradient_fields() -> Vec<(&'static str, EuclideanField)> {
    let d = 3;
    vec![
        ("zero", EuclideanField::Zero { dim: d }),
        (
            "linear",
            EuclideanField::linear(DMatrix::from_row_slice(d, d, &[0.3, -0.8, 0.1, 0.5, -0.2, 0.4, -0.1, 0.6, 0.2]))
                .expect("square"),
        ),
        (
            "ot_path",
            EuclideanField::AffineGaussianPath {
                schedule: GaussianSchedule::OptimalTransport { sigma_min: 0.05 },
                x1: DVector::from_row_slice(&[1.0, -0.5, 0.25]),
            },
        ),
        (
            "trig_path",
            EuclideanField::AffineGaussianPath {
                schedule: GaussianSchedule::Trigonometric,
                x1: DVector::from_row_slice(&[0.2, 0.7, -1.0]),
            },
        ),
        (
            "feed_forward",
            EuclideanField::feed_forward(FeedForward::random(d + 1, DEFAULT_HIDDEN, d, 1.0, 404)).expect("dims"),
        ),
    ]
}

/// Worst relative error between `adjoint` and central differences of
/// `w . x_N` over `probes` random (x0, w, controls) draws.
pub fn euclidean_adjoint_error(
    field: &EuclideanField,
    adjoint: &AdjointFn,
    probes: usize,
    n_steps: usize,
    seed: u64,
) -> Result<f64> {
    let d = field.dim();
    let grid = TimeGrid::new(n_steps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let x0 = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let w = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let controls = ControlSchedule::new(
            (0..n_steps / 2).map(|_| DVector::from_fn(d, |_, _| rng.random_range(-0.5..0.5))).collect(),
            grid,
        )?;
        let traj = integrate_euclidean(field, &controls, &x0, grid)?;
        let co = adjoint(field, &traj, &w, &controls)?;
        let fd =
            finite_diff_gradient(|x| Ok(w.dot(integrate_euclidean(field, &controls, x, grid)?.terminal())), &x0, 1e-5)?;
        worst = worst.max(relative_error(&co.values[0], &fd));
    }
    Ok(worst)
}

/// Fields used for the SO(3) co-state check. The geodesic pull is left out:
/// its last step maps every state onto the target, so the terminal pairing
/// has no sensitivity to compare against.
pub fn so3_gradient_fields() -> Vec<(&'static str, So3Field)> {
    vec![
        ("zero", So3Field::Zero),
        ("constant_body", So3Field::ConstantBody(hat(&Vector3::new(0.4, -0.3, 0.9)))),
        ("feed_forward", So3Field::feed_forward(FeedForward::random(10, DEFAULT_HIDDEN, 3, 1.0, 505)).expect("dims")),
    ]
}

/// Worst relative error of `<mu_k, E_i>` against central differences of the
/// reward under `x_k -> x_k exp(+-h E_i)` at several probe steps.
pub fn so3_costate_error(field: &So3Field, scheme: CostateScheme, n_steps: usize, seed: u64) -> Result<f64> {
    let grid = TimeGrid::new(n_steps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let controls = ControlSchedule::new((0..n_steps / 4).map(|_| hat(&random_vector3(&mut rng, 0.6))).collect(), grid)?;
    let x0 = random_rotation(&mut rng, 1.0);
    let target = x0 * random_rotation(&mut rng, 1.2);
    let reward = RewardSpec::GeodesicTarget { target };
    let traj = integrate_so3(field, &controls, &x0, grid)?;
    let grad = reward.eval_so3(traj.terminal())?.1;
    let co = costate_solve_so3(field, &controls, &traj, &grad, scheme)?;
    let tail = |k: usize, start: &RotationMatrix| -> Result<f64> {
        let mut x = *start;
        for j in k..n_steps {
            let f = field.eval(grid.t(j), &x)?;
            x = x * exp_so3(&((f + controls.applied(j)) * grid.dt()));
        }
        Ok(reward.eval_so3(&x)?.0)
    };
    let mut worst: f64 = 0.0;
    for k in [0, n_steps / 3, n_steps / 2, n_steps - 1] {
        let fd = finite_diff_gradient_so3(|x| tail(k, x), &traj.states[k], 1e-6)?;
        let got = basis_coords(&co.values[k]);
        let scale = fd.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-12);
        for i in 0..3 {
            worst = worst.max((got[i] - fd[i]).abs() / scale);
        }
    }
    Ok(worst)
}

/// Worst relative error of each reward gradient against central differences
/// over 50 probes per variant.
pub fn reward_gradient_errors() -> Vec<(&'static str, Result<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let d = 3;
    let euclid = [
        ("quadratic", RewardSpec::QuadraticTarget { target: DVector::from_row_slice(&[0.5, -1.0, 2.0]) }),
        ("linear_probe", RewardSpec::LinearProbe { weights: DVector::from_row_slice(&[1.0, 2.0, -0.5]) }),
        (
            "composite",
            RewardSpec::composite(
                RewardSpec::QuadraticTarget { target: DVector::from_row_slice(&[0.5, -1.0, 2.0]) },
                0.7,
                PriorPoint::Euclidean(DVector::from_row_slice(&[3.0, 3.0, 3.0])),
            )
            .expect("lambda in range"),
        ),
    ];
    let mut out = Vec::new();
    for (name, spec) in euclid {
        let res = (|| -> Result<f64> {
            let mut worst: f64 = 0.0;
            for _ in 0..50 {
                let x = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
                let g = spec.eval_euclidean(&x)?.1;
                let fd = finite_diff_gradient(|y| Ok(spec.eval_euclidean(y)?.0), &x, 1e-5)?;
                worst = worst.max(relative_error(&g, &fd));
            }
            Ok(worst)
        })();
        out.push((name, res));
    }
    let target = exp_so3(&hat(&Vector3::new(0.3, -0.5, 0.8)));
    let prior = exp_so3(&hat(&Vector3::new(-0.9, 0.2, 0.1)));
    let so3 = [
        ("geodesic", RewardSpec::GeodesicTarget { target }),
        (
            "geodesic_composite",
            RewardSpec::composite(RewardSpec::GeodesicTarget { target }, 0.6, PriorPoint::Rotation(prior))
                .expect("lambda in range"),
        ),
    ];
    for (name, spec) in so3 {
        let res = (|| -> Result<f64> {
            let mut worst: f64 = 0.0;
            let mut accepted = 0;
            while accepted < 50 {
                let x = target * random_rotation(&mut rng, 2.0);
                // Stay clear of the prior's cut locus.
                if rotation_angle(&(x.transpose() * prior)) > PI - 0.3 {
                    continue;
                }
                accepted += 1;
                let g = spec.eval_so3(&x)?.1;
                let flat = DVector::from_column_slice(x.matrix().as_slice());
                let fd = finite_diff_gradient(
                    |y| {
                        let m = Matrix3::from_column_slice(y.as_slice());
                        Ok(spec.eval_so3(&RotationMatrix::from_matrix_unchecked(m))?.0)
                    },
                    &flat,
                    1e-6,
                )?;
                worst = worst.max(relative_error(&DVector::from_column_slice(g.as_slice()), &fd));
            }
            Ok(worst)
        })();
        out.push((name, res));
    }
    out
}

pub fn gradient_checks(adjoint: &AdjointFn) -> Vec<CheckResult> {
    let mut checks = Vec::new();
    for (name, field) in euclidean_gradient_fields() {
        let label = format!("gradients.adjoint.{name}");
        checks.push(unwrap_check(
            &label,
            "<= 1e-5",
            euclidean_adjoint_error(&field, adjoint, 50, 40, 2024).map(|e| CheckResult::at_most(&label, e, 1e-5)),
        ));
    }
    for (name, field) in so3_gradient_fields() {
        for (tag, scheme) in [("basis", CostateScheme::Basis), ("exact", CostateScheme::Exact)] {
            let label = format!("gradients.costate_so3.{tag}.{name}");
            checks.push(unwrap_check(
                &label,
                "<= 1e-3",
                so3_costate_error(&field, scheme, 400, 77).map(|e| CheckResult::at_most(&label, e, 1e-3)),
            ));
        }
    }
    for (name, err) in reward_gradient_errors() {
        let label = format!("gradients.reward.{name}");
        checks.push(unwrap_check(&label, "<= 1e-6", err.map(|e| CheckResult::at_most(&label, e, 1e-6))));
    }
    checks
}

// ---------------------------------------------------------------- bounds

/// `n` random piecewise-constant schedules on dimension <= 4; a quarter of
/// them are constant in time. Returns `(case, is_constant)`.
pub fn random_kl_cases(n: usize, seed: u64) -> Vec<(GaussianPathCase, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let d = rng.random_range(1..=4);
            let nodes = 41;
            let constant = i % 4 == 0;
            let pieces = if constant { 1 } else { rng.random_range(2..=8) };
            let mut levels: Vec<DVector<f64>> =
                (0..pieces).map(|_| DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0))).collect();
            if !constant {
                // keep the profile genuinely non-constant
                levels[1][0] = levels[0][0] + 0.5;
            }
            let theta = (0..nodes).map(|j| levels[(j * pieces / nodes).min(pieces - 1)].clone()).collect();
            let case = GaussianPathCase {
                sigma1: rng.random_range(0.1..3.0),
                prior_mean: DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)),
                theta,
            };
            (case, constant)
        })
        .collect()
}

pub fn bound_checks() -> Vec<CheckResult> {
    let mut violations = 0usize;
    let mut flag_mismatch = 0usize;
    for (case, constant) in random_kl_cases(1000, 7) {
        match gaussian_kl_bound_check(&case) {
            Ok(r) => {
                if !r.holds {
                    violations += 1;
                }
                if r.equality != constant {
                    flag_mismatch += 1;
                }
            }
            Err(_) => violations += 1,
        }
    }
    let mut checks = vec![
        CheckResult::at_most("bounds.kl_violations_1000", violations as f64, 0.0),
        CheckResult::at_most("bounds.kl_equality_flag_mismatches", flag_mismatch as f64, 0.0),
    ];

    let mut flagged = 0usize;
    for seed in 0..5 {
        let p = seeded_so3_problem(seed);
        let config = So3GuidanceConfig::new(2.0, 50, 50, 3);
        match run_guidance_so3(&p.field, &p.x0, &p.reward, &config) {
            Ok(r) if !r.diagnostics.costate_bound_violated => {}
            _ => flagged += 1,
        }
    }
    checks.push(CheckResult::at_most("bounds.costate_growth_flags", flagged as f64, 0.0));
    checks
}

// ---------------------------------------------------------------- convergence

/// Least-squares slope of `log err` against `log dt`.
pub fn fitted_order(dts: &[f64], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

pub const ORDER_STEPS: [usize; 4] = [50, 100, 200, 400];

/// Terminal-error order of the Euler scheme for `x' = A x`, against the
/// matrix exponential.
pub fn euclidean_order() -> Result<f64> {
    let a = DMatrix::from_row_slice(3, 3, &[-0.5, 1.0, 0.0, -1.0, -0.5, 0.3, 0.2, 0.0, 0.4]);
    let x0 = DVector::from_row_slice(&[1.0, -0.5, 0.8]);
    let exact = a.clone().exp() * &x0;
    let field = EuclideanField::linear(a)?;
    let mut dts = Vec::new();
    let mut errs = Vec::new();
    for n in ORDER_STEPS {
        let grid = TimeGrid::new(n)?;
        let zero = ControlSchedule::constant(DVector::zeros(3), n, grid)?;
        let traj = integrate_euclidean(&field, &zero, &x0, grid)?;
        dts.push(grid.dt());
        errs.push((traj.terminal() - &exact).norm());
    }
    Ok(fitted_order(&dts, &errs))
}

/// Terminal-error order of geometric Euler on a time-dependent feed-forward
/// field, against a run with 64 times more steps.
pub fn so3_order() -> Result<f64> {
    let field = So3Field::feed_forward(FeedForward::random(10, DEFAULT_HIDDEN, 3, 1.0, 808))?;
    let x0 = exp_so3(&hat(&Vector3::new(0.3, -0.6, 0.2)));
    let run = |n: usize| -> Result<RotationMatrix> {
        let grid = TimeGrid::new(n)?;
        let zero = ControlSchedule::constant(So3Matrix::zero(), n, grid)?;
        Ok(*integrate_so3(&field, &zero, &x0, grid)?.terminal())
    };
    let reference = run(ORDER_STEPS[ORDER_STEPS.len() - 1] * 64)?;
    let mut dts = Vec::new();
    let mut errs = Vec::new();
    for n in ORDER_STEPS {
        dts.push(1.0 / n as f64);
        errs.push(geodesic_distance(&run(n)?, &reference)?);
    }
    Ok(fitted_order(&dts, &errs))
}

/// Calibrated Euclidean run; returns the largest drop `max(J_k - J_{k+1})`.
pub fn euclidean_ascent_drop(p: &EuclideanProblem, n_steps: usize, iters: usize) -> Result<f64> {
    let base = GuidanceConfig::from_gamma(1.0, 1.0, n_steps, n_steps, iters);
    let gamma = calibrate_gamma_euclidean(&p.field, &p.x0, &p.reward, &base, 0.125, 20, 40)?;
    let config = GuidanceConfig::from_gamma(gamma, 1.0, n_steps, n_steps, iters);
    let report = run_guidance_euclidean(&p.field, &p.x0, &p.reward, &config)?;
    if !report.succeeded() {
        return Err(invalid(format!("run failed: {:?}", report.status)));
    }
    Ok(max_drop(&report.objectives()))
}

pub fn max_drop(j: &[f64]) -> f64 {
    j.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct So3AscentOutcome {
    pub max_drop: f64,
    pub final_eps: f64,
    pub final_change: f64,
    pub gamma: f64,
}

/// A run counts as converging when its last control change is below this.
pub const CONVERGING_CHANGE: f64 = 1e-4;

pub fn so3_ascent(p: &So3Problem, n_steps: usize, iters: usize) -> Result<So3AscentOutcome> {
    let base = So3GuidanceConfig::new(1.0, n_steps, n_steps, iters);
    let gamma = calibrate_gamma_so3(&p.field, &p.x0, &p.reward, &base, 0.125, 20, 40)?;
    let config = So3GuidanceConfig { gamma, ..base };
    let report = run_guidance_so3(&p.field, &p.x0, &p.reward, &config)?;
    if !report.succeeded() {
        return Err(invalid(format!("run failed: {:?}", report.status)));
    }
    Ok(So3AscentOutcome {
        max_drop: max_drop(&report.objectives()),
        final_eps: report.last_eps().unwrap_or(f64::NAN),
        final_change: report.records.last().map_or(f64::NAN, |r| r.control_change_norm),
        gamma,
    })
}

/// `(final J, oracle J)` for the scalar LQ problem.
pub fn lq_gap(iters: usize) -> Result<(f64, f64)> {
    let mut config = GuidanceConfig::new(0.25, 0.5, 50, 50, iters);
    config.alpha = 0.5;
    let reward = RewardSpec::QuadraticTarget { target: DVector::from_element(1, 1.0) };
    let report = run_guidance_euclidean(&EuclideanField::Zero { dim: 1 }, &DVector::zeros(1), &reward, &config)?;
    let oracle = lq_closed_form(0.0, 0.0, 1.0, 0.5, 50)?;
    Ok((report.final_objective().unwrap_or(f64::NAN), oracle.j_star))
}

/// `(final J, brute-force J)` for steering from the identity toward a
/// rotation of 0.8 rad about x.
pub fn geodesic_steering_gap(iters: usize) -> Result<(f64, f64)> {
    let axis = Vector3::x();
    let reward = RewardSpec::GeodesicTarget { target: exp_so3(&hat(&(axis * 0.8))) };
    let config = So3GuidanceConfig::new(3.0, 100, 100, iters);
    let report = run_guidance_so3(&So3Field::Zero, &RotationMatrix::identity(), &reward, &config)?;
    let oracle = brute_force_constant_control_so3(
        &So3Field::Zero,
        &RotationMatrix::identity(),
        &reward,
        1.0,
        TimeGrid::new(100)?,
        &[axis],
        &BruteForceSpec::new(vec![-1.0], vec![2.0]),
    )?;
    Ok((report.final_objective().unwrap_or(f64::NAN), oracle.best_j))
}

pub fn convergence_checks() -> Vec<CheckResult> {
    let mut checks = Vec::new();
    checks.push(unwrap_check(
        "convergence.lq_gap",
        "<= 1e-4",
        lq_gap(200).map(|(j, o)| CheckResult::at_most("convergence.lq_gap", (j - o).abs(), 1e-4)),
    ));
    checks.push(unwrap_check(
        "convergence.geodesic_steering_gap",
        "<= 2e-3",
        geodesic_steering_gap(300)
            .map(|(j, o)| CheckResult::at_most("convergence.geodesic_steering_gap", (j - o).abs(), 2e-3)),
    ));
    checks.push(unwrap_check(
        "convergence.euler_order_euclidean",
        "in [0.8, 1.2]",
        euclidean_order().map(|s| CheckResult::within("convergence.euler_order_euclidean", s, 0.8, 1.2)),
    ));
    checks.push(unwrap_check(
        "convergence.euler_order_so3",
        "in [0.8, 1.2]",
        so3_order().map(|s| CheckResult::within("convergence.euler_order_so3", s, 0.8, 1.2)),
    ));
    for seed in 0..3 {
        let label = format!("convergence.ascent_euclidean.seed{seed}");
        checks.push(unwrap_check(
            &label,
            "<= 1e-10",
            euclidean_ascent_drop(&seeded_euclidean_problem(seed), 100, 50)
                .map(|d| CheckResult::at_most(&label, d, ASCENT_TOL)),
        ));
        let label = format!("convergence.ascent_so3.seed{seed}");
        checks.push(unwrap_check(
            &label,
            "<= 1e-10",
            so3_ascent(&seeded_so3_problem(seed), 100, 50)
                .map(|o| CheckResult::at_most(&label, o.max_drop, ASCENT_TOL)),
        ));
    }
    checks
}

// ---------------------------------------------------------------- baselines

/// Max difference between FlowGrad controls and OC-Flow controls at
/// `beta = 1`, over `1..=max_iters` iterations.
pub fn flowgrad_gap(p: &EuclideanProblem, max_iters: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in 1..=max_iters {
        let mut fg = GuidanceConfig::new(0.2, 0.5, 40, 20, k);
        fg.mode = GuidanceMode::FlowGrad;
        let oc = GuidanceConfig::new(0.2, 1.0, 40, 20, k);
        let a = run_guidance_euclidean(&p.field, &p.x0, &p.reward, &fg)?;
        let b = run_guidance_euclidean(&p.field, &p.x0, &p.reward, &oc)?;
        for (x, y) in a.final_controls.controls().iter().zip(b.final_controls.controls()) {
            worst = worst.max((x - y).amax());
        }
    }
    Ok(worst)
}

/// Independent x0 ascent for `x' = A x`: the terminal map is the matrix
/// power `P = (I + dt A)^N`, so the gradient of `alpha Phi(P x0)` is
/// `alpha P^T grad Phi`. Returns the terminal state after each iteration.
pub fn x0_ascent_reference(
    a: &DMatrix<f64>,
    x0: &DVector<f64>,
    reward: &RewardSpec,
    alpha: f64,
    n_steps: usize,
    step0: f64,
    iters: usize,
) -> Result<Vec<DVector<f64>>> {
    let d = x0.len();
    let dt = 1.0 / n_steps as f64;
    let p = (DMatrix::identity(d, d) + a * dt).pow(n_steps as u32);
    let mut x = x0.clone();
    let mut out = vec![&p * &x];
    for _ in 0..iters {
        let (phi, g) = reward.eval_euclidean(&(&p * &x))?;
        let grad = p.transpose() * g * alpha;
        let slope = grad.norm_squared();
        let mut step = step0;
        for _ in 0..=20 {
            let cand = &x + &grad * step;
            if alpha * reward.eval_euclidean(&(&p * &cand))?.0 >= alpha * phi + 1e-4 * step * slope {
                x = cand;
                break;
            }
            step *= 0.5;
        }
        out.push(&p * &x);
    }
    Ok(out)
}

/// Max terminal-state difference between D-Flow mode and the matrix-power
/// reference, per iteration count `1..=iters`.
pub fn dflow_gap(iters: usize) -> Result<f64> {
    let a = DMatrix::from_row_slice(2, 2, &[0.2, -0.7, 0.5, -0.1]);
    let field = EuclideanField::linear(a.clone())?;
    let x0 = DVector::from_row_slice(&[0.3, -0.4]);
    let reward = RewardSpec::QuadraticTarget { target: DVector::from_row_slice(&[1.0, 0.5]) };
    let n = 50;
    let reference = x0_ascent_reference(&a, &x0, &reward, 1.0, n, 1.0, iters)?;
    let mut worst: f64 = 0.0;
    for k in 0..=iters {
        let mut config = GuidanceConfig::new(1.0, 1.0, n, 1, k);
        config.mode = GuidanceMode::DFlow;
        let report = run_guidance_euclidean(&field, &x0, &reward, &config)?;
        let terminal = report.final_trajectory.as_ref().ok_or_else(|| invalid("no trajectory"))?.terminal();
        worst = worst.max((terminal - &reference[k]).amax());
    }
    Ok(worst)
}

/// `(OC-Flow final J, naive final J)` on a seeded SO(3) problem with the
/// same gamma and iteration budget.
pub fn so3_head_to_head(seed: u64, n_steps: usize, n_controls: usize, iters: usize) -> Result<(f64, f64)> {
    let p = seeded_so3_problem(seed);
    let oc = So3GuidanceConfig::new(1.0, n_steps, n_controls, iters);
    let naive = So3GuidanceConfig { mode: So3Mode::Naive, ..oc.clone() };
    let a = run_guidance_so3(&p.field, &p.x0, &p.reward, &oc)?;
    let b = run_guidance_so3(&p.field, &p.x0, &p.reward, &naive)?;
    Ok((a.final_objective().unwrap_or(f64::NAN), b.final_objective().unwrap_or(f64::NAN)))
}

pub fn baseline_checks() -> Vec<CheckResult> {
    let mut checks = Vec::new();
    checks.push(unwrap_check(
        "baselines.flowgrad_equals_unit_beta",
        "<= 1e-12",
        flowgrad_gap(&seeded_euclidean_problem(11), 5)
            .map(|g| CheckResult::at_most("baselines.flowgrad_equals_unit_beta", g, 1e-12)),
    ));
    checks.push(unwrap_check(
        "baselines.dflow_matches_x0_ascent",
        "<= 1e-10",
        dflow_gap(8).map(|g| CheckResult::at_most("baselines.dflow_matches_x0_ascent", g, 1e-10)),
    ));
    let mut wins = 0usize;
    for seed in 0..10 {
        if let Ok((oc, naive)) = so3_head_to_head(seed, 50, 10, 20) {
            if oc >= naive {
                wins += 1;
            }
        }
    }
    checks.push(CheckResult::at_least("baselines.ocflow_beats_naive_so3", wins as f64, 9.0));
    checks
}
