//! Ground-truth solvers: grid search over constant controls, the discrete
//! LQ stationarity system, and central finite differences.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{EuclideanField, So3Field};
use crate::metrics::objective_j;
use crate::ode::{integrate_euclidean, integrate_so3, ControlSchedule, TimeGrid};
use crate::reward::RewardSpec;
use crate::so3::{canonical_basis, exp_so3, hat, RotationMatrix, So3Matrix};

/// Grid over up to three scalar coordinates, refined around the incumbent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForceSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Points per axis, in every round.
    pub points: usize,
    pub refinements: usize,
}

impl BruteForceSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        BruteForceSpec { lower, upper, points: 21, refinements: 4 }
    }

    fn validate(&self) -> Result<()> {
        let d = self.lower.len();
        if d == 0 || d > 3 || self.upper.len() != d {
            return Err(invalid("brute force needs one to three bounded coordinates"));
        }
        if self.points < 2 {
            return Err(invalid("brute force needs at least two points per axis"));
        }
        for (lo, hi) in self.lower.iter().zip(&self.upper) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(invalid("grid bounds must be finite with lower < upper"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForceResult {
    pub best_control: Vec<f64>,
    pub best_j: f64,
    /// Best objective after each round (initial grid first).
    pub history: Vec<f64>,
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).find(|(x, y)| x != y).is_some_and(|(x, y)| x < y)
}

/// Maximizes `objective` over a box, shrinking the span tenfold each round
/// around the incumbent. Evaluation failures count as `-inf`. Ties go to the
/// lexicographically smallest point.
pub fn brute_force<F>(spec: &BruteForceSpec, mut objective: F) -> Result<BruteForceResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    spec.validate()?;
    let d = spec.lower.len();
    let mut center: Vec<f64> = spec.lower.iter().zip(&spec.upper).map(|(l, u)| 0.5 * (l + u)).collect();
    let mut half: Vec<f64> = spec.lower.iter().zip(&spec.upper).map(|(l, u)| 0.5 * (u - l)).collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut history = Vec::new();
    let n = spec.points;
    for _ in 0..=spec.refinements {
        let total = n.pow(d as u32);
        for flat in 0..total {
            let mut idx = flat;
            let point: Vec<f64> = (0..d)
                .map(|a| {
                    let i = idx % n;
                    idx /= n;
                    center[a] - half[a] + 2.0 * half[a] * i as f64 / (n - 1) as f64
                })
                .collect();
            let j = objective(&point).unwrap_or(f64::NEG_INFINITY);
            let better = match &best {
                None => true,
                Some((bp, bj)) => j > *bj || (j == *bj && lex_less(&point, bp)),
            };
            if better {
                best = Some((point, j));
            }
        }
        let (bp, bj) = best.as_ref().expect("grid is non-empty");
        history.push(*bj);
        center.clone_from(bp);
        for h in &mut half {
            *h /= 10.0;
        }
    }
    let (best_control, best_j) = best.expect("grid is non-empty");
    if !best_j.is_finite() {
        return Err(Error::Degenerate("objective failed at every grid point".into()));
    }
    Ok(BruteForceResult { best_control, best_j, history })
}

/// A single constant control on R^d, one scalar per coordinate (d <= 3).
pub fn brute_force_constant_control(
    field: &EuclideanField,
    x0: &DVector<f64>,
    reward: &RewardSpec,
    alpha: f64,
    grid: TimeGrid,
    spec: &BruteForceSpec,
) -> Result<BruteForceResult> {
    if spec.lower.len() != x0.len() {
        return Err(invalid("search dimension must equal the state dimension"));
    }
    brute_force(spec, |p| {
        let sched = ControlSchedule::constant(DVector::from_row_slice(p), grid.n_steps(), grid)?;
        let traj = integrate_euclidean(field, &sched, x0, grid)?;
        Ok(objective_j(reward.eval_euclidean(traj.terminal())?.0, &sched, alpha))
    })
}

/// Constant so(3) control `hat(sum_i p_i axes_i)` with one scalar per axis.
pub fn brute_force_constant_control_so3(
    field: &So3Field,
    x0: &RotationMatrix,
    reward: &RewardSpec,
    alpha: f64,
    grid: TimeGrid,
    axes: &[Vector3<f64>],
    spec: &BruteForceSpec,
) -> Result<BruteForceResult> {
    if spec.lower.len() != axes.len() {
        return Err(invalid("one search coordinate per axis"));
    }
    brute_force(spec, |p| {
        let w: Vector3<f64> = axes.iter().zip(p).map(|(a, s)| a * *s).sum();
        let sched = ControlSchedule::constant(hat(&w), grid.n_steps(), grid)?;
        let traj = integrate_so3(field, &sched, x0, grid)?;
        Ok(objective_j(reward.eval_so3(traj.terminal())?.0, &sched, alpha))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqSolution {
    /// One control per step.
    pub theta: Vec<f64>,
    pub j_star: f64,
}

/// Stationary point of the discrete scalar problem
/// `x' = a x + theta`, `J = -alpha (x_N - target)^2 - 1/2 sum dt theta_k^2`
/// under the Euler scheme with one control per step.
pub fn lq_closed_form(a: f64, x0: f64, target: f64, alpha: f64, n_steps: usize) -> Result<LqSolution> {
    let grid = TimeGrid::new(n_steps)?;
    if !(alpha >= 0.0) || !a.is_finite() || !x0.is_finite() || !target.is_finite() {
        return Err(invalid("lq problem parameters must be finite with alpha >= 0"));
    }
    let dt = grid.dt();
    let n = n_steps;
    let (theta, xn) = if a == 0.0 {
        let t = 2.0 * alpha * (target - x0) / (1.0 + 2.0 * alpha);
        (vec![t; n], x0 + t)
    } else {
        // x_N = p^N x0 + dt sum_k p^{N-1-k} theta_k with p = 1 + a dt; setting
        // dJ/dtheta_k = 0 gives (I + 2 alpha dt c c^T) theta = 2 alpha (target - p^N x0) c.
        let p = 1.0 + a * dt;
        let c = DVector::from_fn(n, |k, _| p.powi((n - 1 - k) as i32));
        let free = p.powi(n as i32) * x0;
        let mut lhs = DMatrix::identity(n, n);
        lhs += &c * c.transpose() * (2.0 * alpha * dt);
        let rhs = &c * (2.0 * alpha * (target - free));
        let sol = lhs.lu().solve(&rhs).ok_or_else(|| Error::Degenerate("singular lq system".into()))?;
        if !sol.iter().all(|v| v.is_finite()) {
            return Err(Error::Degenerate("lq system is ill-conditioned".into()));
        }
        let xn = free + dt * c.dot(&sol);
        (sol.iter().copied().collect(), xn)
    };
    let cost = 0.5 * dt * theta.iter().map(|t| t * t).sum::<f64>();
    Ok(LqSolution { j_star: -alpha * (xn - target).powi(2) - cost, theta })
}

/// Central differences per coordinate.
pub fn finite_diff_gradient<F>(mut f: F, x: &DVector<f64>, step: f64) -> Result<DVector<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<f64>,
{
    let mut g = DVector::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = f(&probe)?;
        probe[i] = x[i] - step;
        let down = f(&probe)?;
        probe[i] = x[i];
        g[i] = (up - down) / (2.0 * step);
    }
    Ok(g)
}

/// Directional derivatives `d/de f(x exp(e E_i))` at `e = 0`, returned as the
/// coordinates `<grad, x E_i>` in the canonical basis.
pub fn finite_diff_gradient_so3<F>(mut f: F, x: &RotationMatrix, step: f64) -> Result<[f64; 3]>
where
    F: FnMut(&RotationMatrix) -> Result<f64>,
{
    let basis = canonical_basis();
    let mut out = [0.0; 3];
    for (i, e) in basis.iter().enumerate() {
        let up = f(&x.retract(&(*e * step)))?;
        let down = f(&x.retract(&(*e * -step)))?;
        out[i] = (up - down) / (2.0 * step);
    }
    Ok(out)
}

/// `exp(hat(axis * s))`.
pub fn axis_rotation(axis: &Vector3<f64>, s: f64) -> RotationMatrix {
    exp_so3(&hat(&(axis * s)))
}

/// `hat(axis * s)` on every step.
pub fn constant_axis_schedule(axis: &Vector3<f64>, s: f64, grid: TimeGrid) -> Result<ControlSchedule<So3Matrix>> {
    ControlSchedule::constant(hat(&(axis * s)), grid.n_steps(), grid)
}
