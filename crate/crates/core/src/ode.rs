//! Euler integration of controlled dynamics, backward co-state chains and
//! control scheduling.
//!
//! Time runs on the uniform grid `t_k = k / N`. A [`ControlSchedule`] holds
//! `M` control elements, `M | N`; element `m` is active on fine steps
//! `m F .. (m + 1) F` with `F = N / M` and enters each of them with weight
//! `1 / F`, so one block displaces the state by `dt * theta_m` in total.

use std::fmt::Write as _;
use std::io::Write as _;
use std::ops::Range;
use std::path::Path;

use nalgebra::{DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{EuclideanField, So3Field};
use crate::so3::{
    basis_reconstruct, canonical_basis, exp_so3, frobenius_inner, hat, lie_bracket, right_jacobian, RotationMatrix,
    So3Matrix,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(invalid("time grid needs at least one step"));
        }
        Ok(TimeGrid { n_steps })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.n_steps as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 / self.n_steps as f64
    }
}

/// Vector-space operations shared by Euclidean and so(3) controls.
pub trait ControlElement: Clone + std::fmt::Debug + PartialEq {
    fn zero_like(&self) -> Self;
    fn add_scaled(&mut self, other: &Self, scale: f64);
    fn inner(&self, other: &Self) -> f64;

    fn norm_squared(&self) -> f64 {
        self.inner(self)
    }

    fn scaled(&self, scale: f64) -> Self {
        let mut out = self.zero_like();
        out.add_scaled(self, scale);
        out
    }
}

impl ControlElement for DVector<f64> {
    fn zero_like(&self) -> Self {
        DVector::zeros(self.len())
    }

    fn add_scaled(&mut self, other: &Self, scale: f64) {
        self.axpy(scale, other, 1.0);
    }

    fn inner(&self, other: &Self) -> f64 {
        self.dot(other)
    }
}

impl ControlElement for So3Matrix {
    fn zero_like(&self) -> Self {
        So3Matrix::zero()
    }

    fn add_scaled(&mut self, other: &Self, scale: f64) {
        *self += *other * scale;
    }

    fn inner(&self, other: &Self) -> f64 {
        frobenius_inner(self, other)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule<C> {
    controls: Vec<C>,
    n_steps: usize,
}

impl<C: ControlElement> ControlSchedule<C> {
    pub fn new(controls: Vec<C>, grid: TimeGrid) -> Result<Self> {
        let m = controls.len();
        if m == 0 || !grid.n_steps().is_multiple_of(m) {
            return Err(invalid(format!(
                "number of controls ({m}) must divide the number of steps ({})",
                grid.n_steps()
            )));
        }
        Ok(ControlSchedule { controls, n_steps: grid.n_steps() })
    }

    /// `m` copies of `value`.
    pub fn constant(value: C, m: usize, grid: TimeGrid) -> Result<Self> {
        Self::new(vec![value; m], grid)
    }

    pub fn controls(&self) -> &[C] {
        &self.controls
    }

    pub fn into_controls(self) -> Vec<C> {
        self.controls
    }

    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid { n_steps: self.n_steps }
    }

    /// Fine steps per control element.
    pub fn async_factor(&self) -> usize {
        self.n_steps / self.controls.len()
    }

    /// Per-fine-step weight of a control element.
    pub fn step_weight(&self) -> f64 {
        1.0 / self.async_factor() as f64
    }

    pub fn block(&self, m: usize) -> Range<usize> {
        let f = self.async_factor();
        m * f..(m + 1) * f
    }

    pub fn element_for_step(&self, k: usize) -> &C {
        &self.controls[k / self.async_factor()]
    }

    /// Effective control applied on fine step `k`.
    pub fn applied(&self, k: usize) -> C {
        self.element_for_step(k).scaled(self.step_weight())
    }

    fn check_grid(&self, grid: TimeGrid) -> Result<()> {
        if grid.n_steps() != self.n_steps {
            return Err(invalid(format!(
                "control schedule built for {} steps, grid has {}",
                self.n_steps,
                grid.n_steps()
            )));
        }
        Ok(())
    }

    /// `1/2 sum_m dt ||theta_m||^2`: each element acts for an effective
    /// duration `dt` (its total displacement is `dt * theta_m`).
    pub fn running_cost(&self) -> f64 {
        let dt = 1.0 / self.n_steps as f64;
        0.5 * dt * self.controls.iter().map(ControlElement::norm_squared).sum::<f64>()
    }

    /// Root-mean-square difference between corresponding elements.
    pub fn change_norm(&self, other: &Self) -> f64 {
        let sum: f64 = self
            .controls
            .iter()
            .zip(&other.controls)
            .map(|(a, b)| {
                let mut d = a.clone();
                d.add_scaled(b, -1.0);
                d.norm_squared()
            })
            .sum();
        (sum / self.controls.len() as f64).sqrt()
    }

    pub fn map<F: Fn(usize, &C) -> C>(&self, f: F) -> Self {
        ControlSchedule {
            controls: self.controls.iter().enumerate().map(|(m, c)| f(m, c)).collect(),
            n_steps: self.n_steps,
        }
    }

    /// Block average `(1/F) sum_{k in block m} g_k` of per-step quantities.
    pub fn aggregate(&self, per_step: &[C]) -> Result<Vec<C>> {
        if per_step.len() != self.n_steps {
            return Err(invalid(format!("expected {} per-step values, got {}", self.n_steps, per_step.len())));
        }
        let w = self.step_weight();
        Ok((0..self.controls.len())
            .map(|m| {
                let range = self.block(m);
                let mut acc = per_step[range.start].zero_like();
                for g in &per_step[range] {
                    acc.add_scaled(g, w);
                }
                acc
            })
            .collect())
    }
}

/// States `x_0 .. x_N` and the prior field values `f(t_k, x_k)` for
/// `k < N`, cached for the backward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<S, V> {
    pub states: Vec<S>,
    pub velocities: Vec<V>,
}

impl<S, V> Trajectory<S, V> {
    pub fn terminal(&self) -> &S {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn n_steps(&self) -> usize {
        self.states.len() - 1
    }
}

pub type EuclideanTrajectory = Trajectory<DVector<f64>, DVector<f64>>;
pub type So3Trajectory = Trajectory<RotationMatrix, So3Matrix>;

/// Growth bound `max_t ||mu_t|| <= ||mu_T|| exp(K)` with `K`
/// accumulated from per-step operator norms of the backward map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostateBound {
    pub k_hat: f64,
    pub terminal_norm: f64,
    pub max_norm: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostateTrajectory<T> {
    /// Co-state at every grid point `0..=N`.
    pub values: Vec<T>,
    /// Sensitivity of the terminal reward to the control applied on step `k`,
    /// normalized by `dt * step_weight`. Block-averaging these gives the
    /// per-element co-state used by the control update.
    pub step_sensitivities: Vec<T>,
    pub bound: Option<CostateBound>,
}

fn check_trajectory<S, V>(traj: &Trajectory<S, V>, grid: TimeGrid) -> Result<()> {
    if traj.states.len() != grid.n_steps() + 1 || traj.velocities.len() != grid.n_steps() {
        return Err(invalid(format!(
            "trajectory has {} states / {} velocities, grid expects {} / {}",
            traj.states.len(),
            traj.velocities.len(),
            grid.n_steps() + 1,
            grid.n_steps()
        )));
    }
    Ok(())
}

/// `x_{k+1} = x_k + dt (f(t_k, x_k) + theta_k / F)`.
pub fn integrate_euclidean(
    field: &EuclideanField,
    control: &ControlSchedule<DVector<f64>>,
    x0: &DVector<f64>,
    grid: TimeGrid,
) -> Result<EuclideanTrajectory> {
    control.check_grid(grid)?;
    if control.controls()[0].len() != x0.len() {
        return Err(invalid("control and state dimensions differ"));
    }
    let dt = grid.dt();
    let w = control.step_weight();
    let mut states = Vec::with_capacity(grid.n_steps() + 1);
    let mut velocities = Vec::with_capacity(grid.n_steps());
    states.push(x0.clone());
    for k in 0..grid.n_steps() {
        let x = &states[k];
        let f = field.eval(grid.t(k), x)?;
        let mut next = x + &f * dt;
        next.axpy(dt * w, control.element_for_step(k), 1.0);
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { step: k + 1 });
        }
        velocities.push(f);
        states.push(next);
    }
    Ok(Trajectory { states, velocities })
}

/// Geometric Euler: `x_{k+1} = x_k exp(dt (f(t_k, x_k) + theta_k / F))`.
pub fn integrate_so3(
    field: &So3Field,
    control: &ControlSchedule<So3Matrix>,
    x0: &RotationMatrix,
    grid: TimeGrid,
) -> Result<So3Trajectory> {
    control.check_grid(grid)?;
    let dt = grid.dt();
    let mut states = Vec::with_capacity(grid.n_steps() + 1);
    let mut velocities = Vec::with_capacity(grid.n_steps());
    states.push(*x0);
    for k in 0..grid.n_steps() {
        let x = states[k];
        let f = field.eval(grid.t(k), &x)?;
        let next = x * exp_so3(&((f + control.applied(k)) * dt));
        if !next.is_finite() {
            return Err(Error::Divergence { step: k + 1 });
        }
        velocities.push(f);
        states.push(next);
    }
    Ok(Trajectory { states, velocities })
}

/// Reverse-mode derivative of the Euler map:
/// `g_N = terminal_grad`, `g_k = g_{k+1} + dt (df/dx)^T(t_k, x_k) g_{k+1}`.
pub fn backward_grad_chain(
    field: &EuclideanField,
    traj: &EuclideanTrajectory,
    terminal_grad: &DVector<f64>,
    control: &ControlSchedule<DVector<f64>>,
) -> Result<CostateTrajectory<DVector<f64>>> {
    let grid = control.grid();
    check_trajectory(traj, grid)?;
    if terminal_grad.len() != traj.terminal().len() {
        return Err(invalid("terminal gradient dimension differs from state dimension"));
    }
    let n = grid.n_steps();
    let dt = grid.dt();
    let mut values = vec![terminal_grad.clone(); n + 1];
    for k in (0..n).rev() {
        let vjp = field.vjp(grid.t(k), &traj.states[k], &values[k + 1])?;
        let mut g = values[k + 1].clone();
        g.axpy(dt, &vjp, 1.0);
        values[k] = g;
    }
    // Normalized sensitivity of step k is g_{k+1}.
    let step_sensitivities = values[1..].to_vec();
    Ok(CostateTrajectory { values, step_sensitivities, bound: None })
}

/// How the SO(3) co-state is propagated backward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CostateScheme {
    /// Basis-decomposed first-order recursion
    /// `mu_{k,i} = mu_{k+1,i} - dt <mu, [xi_k, E_i]> + dt <mu, Df(x_k E_i)>`.
    Basis,
    /// Exact pullback through the geometric Euler step, using
    /// `Ad_{exp(-dt xi)}` and the right Jacobian of exp.
    Exact,
}

/// Backward co-state solve in so(3) coordinates `mu_i = <mu, E_i>`.
///
/// The terminal value pairs the Euclidean matrix gradient with the tangent
/// directions: `mu_{T,i} = <grad Phi(x_T), x_T E_i>`.
pub fn costate_solve_so3(
    field: &So3Field,
    control: &ControlSchedule<So3Matrix>,
    traj: &So3Trajectory,
    terminal_reward_grad: &Matrix3<f64>,
    scheme: CostateScheme,
) -> Result<CostateTrajectory<So3Matrix>> {
    let grid = control.grid();
    check_trajectory(traj, grid)?;
    let n = grid.n_steps();
    let dt = grid.dt();
    let basis = canonical_basis();

    let x_t = traj.terminal().matrix();
    let mut coords: Vec<Vector3<f64>> = vec![Vector3::zeros(); n + 1];
    coords[n] = Vector3::from_fn(|i, _| terminal_reward_grad.dot(&(x_t * basis[i].matrix())));

    let mut step_sensitivities = vec![So3Matrix::zero(); n];
    let mut k_hat = 0.0;
    for k in (0..n).rev() {
        let x = &traj.states[k];
        let xi = traj.velocities[k] + control.applied(k);
        let derivs = (0..3)
            .map(|i| field.dirderiv(grid.t(k), x, &(x.matrix() * basis[i].matrix())))
            .collect::<Result<Vec<_>>>()?;

        // Column i holds the image of E_i; c_k = step^T c_{k+1} / 2 in
        // coordinates where <E_i, E_j> = 2 delta_ij.
        let mut images = [So3Matrix::zero(); 3];
        let mut jr = Matrix3::identity();
        match scheme {
            CostateScheme::Basis => {
                for i in 0..3 {
                    images[i] = basis[i] - lie_bracket(&xi, &basis[i]) * dt + derivs[i] * dt;
                }
            }
            CostateScheme::Exact => {
                let step = exp_so3(&(xi * dt));
                let r = step.matrix();
                jr = right_jacobian(&(xi.vector() * dt));
                for i in 0..3 {
                    let ad = So3Matrix::project(&(r.transpose() * basis[i].matrix() * r));
                    images[i] = ad + hat(&(jr * derivs[i].vector())) * dt;
                }
            }
        }
        let step_map = Matrix3::from_fn(|i, j| 0.5 * frobenius_inner(&basis[j], &images[i]));
        coords[k] = step_map * coords[k + 1];
        k_hat += (step_map - Matrix3::identity()).norm();

        let mu_next = basis_reconstruct(&coords[k + 1].into());
        step_sensitivities[k] = match scheme {
            CostateScheme::Basis => mu_next,
            CostateScheme::Exact => hat(&(jr.transpose() * mu_next.vector())),
        };
    }

    let values: Vec<So3Matrix> = coords.iter().map(|c| basis_reconstruct(&(*c).into())).collect();
    let terminal_norm = values[n].norm();
    let max_norm = values.iter().map(So3Matrix::norm).fold(0.0, f64::max);
    let bound = CostateBound {
        k_hat,
        terminal_norm,
        max_norm,
        violated: max_norm > terminal_norm * k_hat.exp() * (1.0 + 1e-12) + 1e-300,
    };
    Ok(CostateTrajectory { values, step_sensitivities, bound: Some(bound) })
}

/// Row formatting for trajectory CSV export.
pub trait StateRow {
    fn column_names(&self) -> Vec<String>;
    fn row_values(&self) -> Vec<f64>;
}

impl StateRow for DVector<f64> {
    fn column_names(&self) -> Vec<String> {
        (0..self.len()).map(|i| format!("x{i}")).collect()
    }

    fn row_values(&self) -> Vec<f64> {
        self.iter().copied().collect()
    }
}

impl StateRow for RotationMatrix {
    fn column_names(&self) -> Vec<String> {
        (0..3).flat_map(|r| (0..3).map(move |c| format!("r{r}{c}"))).collect()
    }

    fn row_values(&self) -> Vec<f64> {
        let m = self.matrix();
        (0..3).flat_map(|r| (0..3).map(move |c| m[(r, c)])).collect()
    }
}

/// CSV with columns `step, t, <state components>`.
pub fn trajectory_csv<S: StateRow, V>(traj: &Trajectory<S, V>) -> String {
    let grid_n = traj.n_steps().max(1) as f64;
    let mut out = String::new();
    let header = traj.states[0].column_names().join(",");
    let _ = writeln!(out, "step,t,{header}");
    for (k, s) in traj.states.iter().enumerate() {
        let vals: Vec<String> = s.row_values().iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{k},{},{}", k as f64 / grid_n, vals.join(","));
    }
    out
}

pub fn write_trajectory_csv<S: StateRow, V>(traj: &Trajectory<S, V>, path: &Path) -> std::io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(trajectory_csv(traj).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::{FeedForward, DEFAULT_HIDDEN};
    use crate::so3::{basis_coords, geodesic_distance, rotation_angle};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_vec(v.to_vec())
    }

    fn zero_controls(d: usize, m: usize, grid: TimeGrid) -> ControlSchedule<DVector<f64>> {
        ControlSchedule::constant(DVector::zeros(d), m, grid).unwrap()
    }

    #[test]
    fn schedule_requires_divisibility() {
        let grid = TimeGrid::new(10).unwrap();
        assert!(ControlSchedule::constant(dv(&[0.0]), 3, grid).is_err());
        assert!(ControlSchedule::<DVector<f64>>::new(vec![], grid).is_err());
        let s = ControlSchedule::constant(dv(&[0.0]), 5, grid).unwrap();
        assert_eq!(s.async_factor(), 2);
        assert_eq!(s.block(2), 4..6);
        assert!(TimeGrid::new(0).is_err());
    }

    #[test]
    fn euclidean_integration_examples() {
        let grid = TimeGrid::new(20).unwrap();
        let x0 = dv(&[1.0, 2.0]);
        let traj =
            integrate_euclidean(&EuclideanField::Zero { dim: 2 }, &zero_controls(2, 20, grid), &x0, grid).unwrap();
        assert!(traj.states.iter().all(|s| *s == x0));

        let c = dv(&[0.3, -0.7]);
        let sched = ControlSchedule::constant(c.clone(), 20, grid).unwrap();
        let traj = integrate_euclidean(&EuclideanField::Zero { dim: 2 }, &sched, &x0, grid).unwrap();
        assert!((traj.terminal() - (&x0 + &c)).amax() < 1e-14);
    }

    #[test]
    fn euler_is_first_order_on_exponential_growth() {
        let field = EuclideanField::linear(DMatrix::identity(1, 1)).unwrap();
        let err = |n: usize| {
            let grid = TimeGrid::new(n).unwrap();
            let traj = integrate_euclidean(&field, &zero_controls(1, n, grid), &dv(&[1.0]), grid).unwrap();
            (traj.terminal()[0] - std::f64::consts::E).abs()
        };
        let e1000 = err(1000);
        assert!((e1000 / (std::f64::consts::E / 2000.0) - 1.0).abs() < 0.01);
        let order = (err(1000) / err(2000)).log2();
        assert!((0.9..=1.1).contains(&order), "{order}");
    }

    #[test]
    fn divergence_names_the_step() {
        let field = EuclideanField::linear(DMatrix::from_element(1, 1, 1e200)).unwrap();
        let grid = TimeGrid::new(10).unwrap();
        let err = integrate_euclidean(&field, &zero_controls(1, 10, grid), &dv(&[1e200]), grid).unwrap_err();
        assert_eq!(err, Error::Divergence { step: 1 });
    }

    #[test]
    fn async_blocks_match_repeated_weighted_controls() {
        let grid = TimeGrid::new(12).unwrap();
        let field = EuclideanField::Zero { dim: 2 };
        let blocks = vec![dv(&[1.0, 0.0]), dv(&[0.5, -2.0]), dv(&[0.0, 3.0])];
        let coarse = ControlSchedule::new(blocks.clone(), grid).unwrap();
        let fine = ControlSchedule::new((0..12).map(|k| blocks[k / 4].clone() * 0.25).collect(), grid).unwrap();
        let x0 = dv(&[0.1, 0.2]);
        let a = integrate_euclidean(&field, &coarse, &x0, grid).unwrap();
        let b = integrate_euclidean(&field, &fine, &x0, grid).unwrap();
        assert_eq!(a.terminal(), b.terminal());
    }

    #[test]
    fn backward_chain_examples() {
        let grid = TimeGrid::new(16).unwrap();
        let controls = zero_controls(1, 16, grid);
        let g = dv(&[0.7]);
        let traj = integrate_euclidean(&EuclideanField::Zero { dim: 1 }, &controls, &dv(&[0.3]), grid).unwrap();
        let co = backward_grad_chain(&EuclideanField::Zero { dim: 1 }, &traj, &g, &controls).unwrap();
        assert!(co.values.iter().all(|v| *v == g));

        let lin = EuclideanField::linear(DMatrix::identity(1, 1)).unwrap();
        let traj = integrate_euclidean(&lin, &controls, &dv(&[0.3]), grid).unwrap();
        let co = backward_grad_chain(&lin, &traj, &g, &controls).unwrap();
        let expect = 0.7 * (1.0 + grid.dt()).powi(16);
        assert!((co.values[0][0] - expect).abs() < 1e-14);

        let other = TimeGrid::new(8).unwrap();
        assert!(backward_grad_chain(&lin, &traj, &g, &zero_controls(1, 8, other)).is_err());
    }

    #[test]
    fn backward_chain_is_the_exact_adjoint() {
        let d = 3;
        let grid = TimeGrid::new(40).unwrap();
        let field = EuclideanField::feed_forward(FeedForward::random(d + 1, DEFAULT_HIDDEN, d, 1.0, 31)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let controls = ControlSchedule::new(
            (0..20).map(|_| DVector::from_fn(d, |_, _| rng.random_range(-0.5..0.5))).collect(),
            grid,
        )
        .unwrap();
        let w = dv(&[0.4, -1.0, 0.25]);
        let x0 = dv(&[0.2, 0.1, -0.3]);
        let traj = integrate_euclidean(&field, &controls, &x0, grid).unwrap();
        let co = backward_grad_chain(&field, &traj, &w, &controls).unwrap();
        let h = 1e-5;
        for i in 0..d {
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp[i] += h;
            xm[i] -= h;
            let phi = |x: &DVector<f64>| w.dot(integrate_euclidean(&field, &controls, x, grid).unwrap().terminal());
            let fd = (phi(&xp) - phi(&xm)) / (2.0 * h);
            assert!((fd - co.values[0][i]).abs() / co.values[0].norm() < 1e-7);
        }
    }

    #[test]
    fn so3_integration_examples() {
        let grid = TimeGrid::new(50).unwrap();
        let zero = ControlSchedule::constant(So3Matrix::zero(), 50, grid).unwrap();
        let x0 = exp_so3(&hat(&Vector3::new(0.2, 0.1, -0.4)));
        let traj = integrate_so3(&So3Field::Zero, &zero, &x0, grid).unwrap();
        assert!(traj.states.iter().all(|s| *s == x0));

        let c = hat(&Vector3::new(0.3, -1.2, 0.8));
        for n in [1, 7, 50] {
            let grid = TimeGrid::new(n).unwrap();
            let zero = ControlSchedule::constant(So3Matrix::zero(), n, grid).unwrap();
            let traj = integrate_so3(&So3Field::ConstantBody(c), &zero, &RotationMatrix::identity(), grid).unwrap();
            assert!((traj.terminal().matrix() - exp_so3(&c).matrix()).amax() < 1e-13);
        }
    }

    #[test]
    fn geodesic_pull_approaches_target_monotonically() {
        let target = exp_so3(&hat(&Vector3::new(0.6, -0.9, 0.3)));
        let grid = TimeGrid::new(200).unwrap();
        let zero = ControlSchedule::constant(So3Matrix::zero(), 200, grid).unwrap();
        let x0 = exp_so3(&hat(&Vector3::new(0.1, 0.2, 0.0)));
        assert!(rotation_angle(&(x0.transpose() * target)) < std::f64::consts::FRAC_PI_2);
        let traj = integrate_so3(&So3Field::GeodesicPull { target }, &zero, &x0, grid).unwrap();
        let d: Vec<f64> = traj.states.iter().map(|s| geodesic_distance(s, &target).unwrap()).collect();
        assert!(d.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(d[200] < 1e-9);
        assert!(traj.states.iter().all(|s| s.orthogonality_residual() < 1e-9));
    }

    #[test]
    fn costate_constant_for_state_independent_dynamics() {
        let grid = TimeGrid::new(30).unwrap();
        let zero = ControlSchedule::constant(So3Matrix::zero(), 30, grid).unwrap();
        let x0 = exp_so3(&hat(&Vector3::new(0.3, 0.1, 0.2)));
        let traj = integrate_so3(&So3Field::Zero, &zero, &x0, grid).unwrap();
        let grad = Matrix3::from_fn(|r, c| (r as f64) - 0.5 * c as f64);
        for scheme in [CostateScheme::Basis, CostateScheme::Exact] {
            let co = costate_solve_so3(&So3Field::Zero, &zero, &traj, &grad, scheme).unwrap();
            assert!(co.values.iter().all(|v| (v.matrix() - co.values[30].matrix()).amax() < 1e-15));
        }
    }

    #[test]
    fn constant_body_costate_follows_bracket_recursion() {
        let grid = TimeGrid::new(25).unwrap();
        let zero = ControlSchedule::constant(So3Matrix::zero(), 25, grid).unwrap();
        let c = hat(&Vector3::new(0.4, -0.3, 0.9));
        let field = So3Field::ConstantBody(c);
        let traj = integrate_so3(&field, &zero, &RotationMatrix::identity(), grid).unwrap();
        let grad = Matrix3::from_fn(|r, col| ((r * 3 + col) as f64).sin());
        let co = costate_solve_so3(&field, &zero, &traj, &grad, CostateScheme::Basis).unwrap();
        let e = canonical_basis();
        for k in 0..25 {
            let mu = co.values[k + 1];
            let expect: [f64; 3] = std::array::from_fn(|i| {
                frobenius_inner(&mu, &e[i]) - grid.dt() * frobenius_inner(&mu, &lie_bracket(&c, &e[i]))
            });
            let got = basis_coords(&co.values[k]);
            for i in 0..3 {
                assert!((got[i] - expect[i]).abs() < 1e-14);
            }
        }
        let bound = co.bound.unwrap();
        assert!(!bound.violated);
    }

    /// Max relative error of `<mu_k, E_i>` against central differences of
    /// `<w, x_N>` under `x_k -> x_k exp(+-h E_i)`.
    fn costate_fd_error(field: &So3Field, n: usize, scheme: CostateScheme, probes: &[usize]) -> f64 {
        let grid = TimeGrid::new(n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let controls = ControlSchedule::new(
            (0..n / 4).map(|_| hat(&Vector3::from_fn(|_, _| rng.random_range(-0.6..0.6)))).collect(),
            grid,
        )
        .unwrap();
        let x0 = exp_so3(&hat(&Vector3::new(0.4, -0.2, 0.7)));
        let w = Matrix3::new(0.3, -1.0, 0.2, 0.8, 0.1, -0.4, -0.6, 0.5, 0.9);
        let traj = integrate_so3(field, &controls, &x0, grid).unwrap();
        let co = costate_solve_so3(field, &controls, &traj, &w, scheme).unwrap();
        let tail = |k: usize, x: RotationMatrix| -> f64 {
            let mut x = x;
            for j in k..n {
                let f = field.eval(grid.t(j), &x).unwrap();
                x = x * exp_so3(&((f + controls.applied(j)) * grid.dt()));
            }
            w.dot(x.matrix())
        };
        let e = canonical_basis();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for &k in probes {
            let coords = basis_coords(&co.values[k]);
            let scale = coords.iter().map(|c| c.abs()).fold(0.0, f64::max);
            for i in 0..3 {
                let xk = traj.states[k];
                let fd = (tail(k, xk.retract(&(e[i] * h))) - tail(k, xk.retract(&(e[i] * -h)))) / (2.0 * h);
                worst = worst.max((fd - coords[i]).abs() / scale);
            }
        }
        worst
    }

    #[test]
    fn so3_costate_matches_finite_differences() {
        let net = FeedForward::random(10, 16, 3, 1.0, 5);
        let fields = [So3Field::ConstantBody(hat(&Vector3::new(0.4, -0.3, 0.9))), So3Field::feed_forward(net).unwrap()];
        let probes = [0, 57, 200, 399];
        for field in &fields {
            let exact = costate_fd_error(field, 400, CostateScheme::Exact, &probes);
            assert!(exact < 1e-6, "exact scheme: {exact}");
            let basis = costate_fd_error(field, 400, CostateScheme::Basis, &probes);
            assert!(basis < 1e-3, "basis scheme: {basis}");
        }
    }

    #[test]
    fn csv_export_has_expected_columns() {
        let grid = TimeGrid::new(2).unwrap();
        let zero = ControlSchedule::constant(So3Matrix::zero(), 2, grid).unwrap();
        let traj = integrate_so3(&So3Field::Zero, &zero, &RotationMatrix::identity(), grid).unwrap();
        let csv = trajectory_csv(&traj);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "step,t,r00,r01,r02,r10,r11,r12,r20,r21,r22");
        assert_eq!(lines.next().unwrap(), "0,0,1,0,0,0,1,0,0,0,1");
        assert_eq!(csv.lines().count(), 4);
    }
}
