//! Guidance on SO(3): successive approximations with an extended
//! Hamiltonian, plus a direct finite-difference gradient baseline.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::So3Field;
use crate::metrics::objective_j;
use crate::ode::{
    costate_solve_so3, integrate_so3, ControlElement, ControlSchedule, CostateScheme, CostateTrajectory, So3Trajectory,
    TimeGrid,
};
use crate::report::{Diagnostics, GuidanceReport, HamiltonianRecord, IterationRecord, RunStatus, ASCENT_TOL};
use crate::reward::RewardSpec;
use crate::so3::{basis_reconstruct, canonical_basis, frobenius_inner, RotationMatrix, So3Matrix};

pub type So3Report = GuidanceReport<RotationMatrix, So3Matrix, So3Matrix>;

/// Early-stop threshold on the control change norm.
pub const CONVERGED_CHANGE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum So3Mode {
    OcFlow,
    /// Gradient of the terminal reward with respect to each control element
    /// by central differences, projected onto so(3).
    Naive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct So3GuidanceConfig {
    /// Proximal weight; `beta = gamma / (1 + gamma)`, `eta = 1 / (1 + gamma)`.
    pub gamma: f64,
    pub n_steps: usize,
    pub n_controls: usize,
    pub max_iters: usize,
    pub mode: So3Mode,
    pub alpha: f64,
    pub scheme: CostateScheme,
    /// Probe size for the naive baseline.
    pub fd_step: f64,
    pub early_stop: bool,
}

impl So3GuidanceConfig {
    pub fn new(gamma: f64, n_steps: usize, n_controls: usize, max_iters: usize) -> Self {
        So3GuidanceConfig {
            gamma,
            n_steps,
            n_controls,
            max_iters,
            mode: So3Mode::OcFlow,
            alpha: 1.0,
            scheme: CostateScheme::Exact,
            fd_step: 1e-5,
            early_stop: false,
        }
    }

    pub fn beta(&self) -> f64 {
        self.gamma / (1.0 + self.gamma)
    }

    pub fn eta(&self) -> f64 {
        1.0 / (1.0 + self.gamma)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(invalid(format!("gamma must be positive and finite, got {}", self.gamma)));
        }
        if !(self.alpha >= 0.0) {
            return Err(invalid("alpha must be non-negative"));
        }
        if self.n_steps == 0 || self.n_controls == 0 || !self.n_steps.is_multiple_of(self.n_controls) {
            return Err(invalid("n_controls must be positive and divide n_steps"));
        }
        if !(self.fd_step > 0.0) {
            return Err(invalid("fd_step must be positive"));
        }
        Ok(())
    }
}

/// `H = <mu, f + theta> - 1/2 ||theta||^2`.
pub fn hamiltonian_so3(mu: &So3Matrix, f_plus_theta: &So3Matrix, theta: &So3Matrix) -> f64 {
    frobenius_inner(mu, f_plus_theta) - 0.5 * theta.norm_squared()
}

/// `H~ = H(theta) - gamma/2 ||theta - theta_prev||^2`.
pub fn extended_hamiltonian(
    mu: &So3Matrix,
    f: &So3Matrix,
    theta: &So3Matrix,
    theta_prev: &So3Matrix,
    gamma: f64,
) -> f64 {
    hamiltonian_so3(mu, &(*f + *theta), theta) - 0.5 * gamma * (*theta - *theta_prev).norm_squared()
}

/// Maximizer of the extended Hamiltonian: `theta' = beta theta + eta mu`,
/// with `mu` the block-averaged co-state of each element.
pub fn update_control_so3(
    theta: &ControlSchedule<So3Matrix>,
    costates: &CostateTrajectory<So3Matrix>,
    config: &So3GuidanceConfig,
) -> Result<ControlSchedule<So3Matrix>> {
    let mu = theta.aggregate(&costates.step_sensitivities)?;
    let (beta, eta) = (config.beta(), config.eta());
    Ok(theta.map(|m, th| *th * beta + mu[m] * eta))
}

/// `eps_k = int_0^1 [H(theta') - H(theta)] dt` under the co-states of
/// `theta`, by the trapezoid rule on the state grid. The prior-field term of
/// `H` cancels in the difference.
pub fn epsilon_k<C: ControlElement>(
    prev: &ControlSchedule<C>,
    next: &ControlSchedule<C>,
    costates: &CostateTrajectory<C>,
    grid: TimeGrid,
) -> Result<f64> {
    if prev.len() != next.len() || prev.grid() != grid || next.grid() != grid {
        return Err(invalid("schedules do not share the grid"));
    }
    let mu = prev.aggregate(&costates.step_sensitivities)?;
    let gain: Vec<f64> = (0..prev.len())
        .map(|m| {
            let (a, b) = (&prev.controls()[m], &next.controls()[m]);
            (mu[m].inner(b) - 0.5 * b.norm_squared()) - (mu[m].inner(a) - 0.5 * a.norm_squared())
        })
        .collect();
    let n = grid.n_steps();
    let f = prev.async_factor();
    let node = |j: usize| gain[j.min(n - 1) / f];
    let interior: f64 = (1..n).map(node).sum();
    Ok(grid.dt() * (0.5 * node(0) + interior + 0.5 * node(n)))
}

#[allow(clippy::too_many_arguments)]
fn hamiltonian_record(
    iter: usize,
    theta: &ControlSchedule<So3Matrix>,
    next: &ControlSchedule<So3Matrix>,
    traj: &So3Trajectory,
    costates: &CostateTrajectory<So3Matrix>,
    gamma: f64,
    eps_k: f64,
    objective: f64,
) -> Result<HamiltonianRecord> {
    let h_values = (0..traj.n_steps())
        .map(|k| {
            let th = theta.element_for_step(k);
            hamiltonian_so3(&costates.step_sensitivities[k], &(traj.velocities[k] + theta.applied(k)), th)
        })
        .collect();
    let mu = theta.aggregate(&costates.step_sensitivities)?;
    let delta_h_ext = (0..theta.len())
        .map(|m| {
            let (a, b) = (&theta.controls()[m], &next.controls()[m]);
            let zero = So3Matrix::zero();
            extended_hamiltonian(&mu[m], &zero, b, a, gamma) - extended_hamiltonian(&mu[m], &zero, a, a, gamma)
        })
        .collect();
    Ok(HamiltonianRecord { iter, h_values, delta_h_ext, eps_k, objective })
}

/// `d(alpha Phi)/d theta_m` by central differences along each generator,
/// returned as the so(3) element with those basis coordinates.
fn naive_gradient(
    field: &So3Field,
    x0: &RotationMatrix,
    reward: &RewardSpec,
    theta: &ControlSchedule<So3Matrix>,
    config: &So3GuidanceConfig,
) -> Result<Vec<So3Matrix>> {
    let grid = theta.grid();
    let basis = canonical_basis();
    let h = config.fd_step;
    let phi = |sched: &ControlSchedule<So3Matrix>| -> Result<f64> {
        let traj = integrate_so3(field, sched, x0, grid)?;
        Ok(config.alpha * reward.eval_so3(traj.terminal())?.0)
    };
    (0..theta.len())
        .map(|m| {
            let mut coords = [0.0; 3];
            for (i, e) in basis.iter().enumerate() {
                let plus = theta.map(|j, th| if j == m { *th + *e * h } else { *th });
                let minus = theta.map(|j, th| if j == m { *th - *e * h } else { *th });
                coords[i] = (phi(&plus)? - phi(&minus)?) / (2.0 * h);
            }
            Ok(basis_reconstruct(&coords))
        })
        .collect()
}

pub fn run_guidance_so3(
    field: &So3Field,
    x0: &RotationMatrix,
    reward: &RewardSpec,
    config: &So3GuidanceConfig,
) -> Result<So3Report> {
    config.validate()?;
    if x0.orthogonality_residual() >= crate::so3::ROTATION_TOL {
        return Err(invalid("initial state is not a rotation"));
    }
    let grid = TimeGrid::new(config.n_steps)?;
    let mut theta = ControlSchedule::constant(So3Matrix::zero(), config.n_controls, grid)?;
    let mut records = Vec::new();
    let mut hamiltonian = Vec::new();
    let mut diagnostics = Diagnostics { max_orthogonality_residual: Some(0.0), ..Default::default() };
    let mut last_traj = None;
    let mut change = 0.0;
    let mut status = RunStatus::Completed;
    let (beta, eta) = (config.beta(), config.eta());

    for k in 0..=config.max_iters {
        let step = (|| -> Result<(So3Trajectory, f64, nalgebra::Matrix3<f64>)> {
            let traj = integrate_so3(field, &theta, x0, grid)?;
            let (phi, grad) = reward.eval_so3(traj.terminal())?;
            Ok((traj, phi, grad))
        })();
        let (traj, phi, grad) = match step {
            Ok(v) => v,
            Err(e) => {
                status = RunStatus::Failed { iter: k, message: e.to_string() };
                break;
            }
        };
        let ortho = traj.states.iter().map(RotationMatrix::orthogonality_residual).fold(0.0, f64::max);
        diagnostics.max_orthogonality_residual = diagnostics.max_orthogonality_residual.map(|m| m.max(ortho));
        let objective = objective_j(phi, &theta, config.alpha);
        records.push(IterationRecord {
            iter: k,
            objective,
            terminal_reward: phi,
            running_cost: theta.running_cost(),
            control_change_norm: change,
            eps_k: None,
        });
        let converged = config.early_stop && k > 0 && change < CONVERGED_CHANGE;
        if k == config.max_iters || converged {
            if converged {
                status = RunStatus::Converged { iter: k };
            }
            last_traj = Some(traj);
            break;
        }

        let next = match config.mode {
            So3Mode::OcFlow => {
                let co = match costate_solve_so3(field, &theta, &traj, &(grad * config.alpha), config.scheme) {
                    Ok(co) => co,
                    Err(e) => {
                        status = RunStatus::Failed { iter: k, message: e.to_string() };
                        last_traj = Some(traj);
                        break;
                    }
                };
                if co.bound.is_some_and(|b| b.violated) {
                    diagnostics.costate_bound_violated = true;
                }
                let next = update_control_so3(&theta, &co, config)?;
                let eps = epsilon_k(&theta, &next, &co, grid)?;
                records.last_mut().expect("record pushed above").eps_k = Some(eps);
                hamiltonian.push(hamiltonian_record(k, &theta, &next, &traj, &co, config.gamma, eps, objective)?);
                next
            }
            So3Mode::Naive => match naive_gradient(field, x0, reward, &theta, config) {
                Ok(g) => theta.map(|m, th| *th * beta + g[m] * eta),
                Err(e) => {
                    status = RunStatus::Failed { iter: k, message: e.to_string() };
                    last_traj = Some(traj);
                    break;
                }
            },
        };
        change = theta.change_norm(&next);
        theta = next;
        last_traj = Some(traj);
    }

    Ok(GuidanceReport { records, hamiltonian, final_trajectory: last_traj, final_controls: theta, status, diagnostics })
}

/// Doubles `gamma` (starting from `gamma0`) until a `probe_iters`-iteration
/// run ascends monotonically; returns the accepted value.
pub fn calibrate_gamma_so3(
    field: &So3Field,
    x0: &RotationMatrix,
    reward: &RewardSpec,
    base: &So3GuidanceConfig,
    gamma0: f64,
    probe_iters: usize,
    max_doublings: usize,
) -> Result<f64> {
    let mut gamma = gamma0;
    for _ in 0..=max_doublings {
        let config = So3GuidanceConfig { gamma, max_iters: probe_iters, ..base.clone() };
        let report = run_guidance_so3(field, x0, reward, &config)?;
        if report.succeeded() && report.is_monotone(ASCENT_TOL) {
            return Ok(gamma);
        }
        gamma *= 2.0;
    }
    Err(Error::Degenerate(format!("no monotone gamma up to {}", gamma / 2.0)))
}

/// so(3) element along a fixed axis, used by scalar oracles.
pub fn axis_control(axis: &Vector3<f64>, s: f64) -> So3Matrix {
    crate::so3::hat(&(axis * s))
}
