//! Guidance on R^d: the (beta, eta) control update and the FlowGrad,
//! D-Flow and naive-gradient variants.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::EuclideanField;
use crate::metrics::objective_j;
use crate::ode::{
    backward_grad_chain, integrate_euclidean, ControlSchedule, CostateTrajectory, EuclideanTrajectory, TimeGrid,
};
use crate::report::{Diagnostics, GuidanceReport, IterationRecord, RunStatus, ASCENT_TOL};
use crate::reward::RewardSpec;

pub type EuclideanReport = GuidanceReport<DVector<f64>, DVector<f64>, DVector<f64>>;

/// Early-stop threshold on the control change norm.
pub const CONVERGED_CHANGE: f64 = 1e-10;
/// Sufficient-increase constant of the D-Flow line search.
pub const ARMIJO_C: f64 = 1e-4;
pub const MAX_HALVINGS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GuidanceMode {
    OcFlow,
    /// `beta = 1`: plain gradient steps on the controls.
    FlowGrad,
    /// Ascent on the initial state only.
    DFlow,
    /// `theta <- beta theta + eta dPhi/dtheta` with the raw (dt-scaled)
    /// gradient.
    Naive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    pub eta: f64,
    pub beta: f64,
    pub n_steps: usize,
    pub n_controls: usize,
    pub max_iters: usize,
    pub mode: GuidanceMode,
    /// Initial line-search step for D-Flow.
    pub dflow_step: f64,
    pub alpha: f64,
    pub early_stop: bool,
}

impl GuidanceConfig {
    pub fn new(eta: f64, beta: f64, n_steps: usize, n_controls: usize, max_iters: usize) -> Self {
        GuidanceConfig {
            eta,
            beta,
            n_steps,
            n_controls,
            max_iters,
            mode: GuidanceMode::OcFlow,
            dflow_step: 1.0,
            alpha: 1.0,
            early_stop: false,
        }
    }

    /// `beta = gamma / (1 + gamma)`, `eta = alpha / (1 + gamma)`.
    pub fn from_gamma(gamma: f64, alpha: f64, n_steps: usize, n_controls: usize, max_iters: usize) -> Self {
        let mut c = Self::new(alpha / (1.0 + gamma), gamma / (1.0 + gamma), n_steps, n_controls, max_iters);
        c.alpha = alpha;
        c
    }

    /// `beta / (1 - beta)`; infinite for `beta = 1`.
    pub fn gamma(&self) -> f64 {
        self.beta / (1.0 - self.beta)
    }

    /// Effective decay: FlowGrad always uses 1.
    pub fn effective_beta(&self) -> f64 {
        match self.mode {
            GuidanceMode::FlowGrad => 1.0,
            _ => self.beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(invalid(format!("eta must be positive, got {}", self.eta)));
        }
        if self.mode != GuidanceMode::FlowGrad && !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(invalid(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(invalid("alpha must be non-negative"));
        }
        if self.n_steps == 0 || self.n_controls == 0 || !self.n_steps.is_multiple_of(self.n_controls) {
            return Err(invalid("n_controls must be positive and divide n_steps"));
        }
        if self.mode == GuidanceMode::DFlow {
            if self.n_controls != 1 {
                return Err(invalid("dflow mode uses a single control"));
            }
            if !(self.dflow_step > 0.0) {
                return Err(invalid("dflow_step must be positive"));
            }
        }
        Ok(())
    }
}

/// `theta_m <- beta theta_m + eta g_m`, with `g_m` the block mean of the
/// step sensitivities.
pub fn update_control_euclidean(
    theta: &ControlSchedule<DVector<f64>>,
    costates: &CostateTrajectory<DVector<f64>>,
    config: &GuidanceConfig,
) -> Result<ControlSchedule<DVector<f64>>> {
    let g = theta.aggregate(&costates.step_sensitivities)?;
    if g[0].len() != theta.controls()[0].len() {
        return Err(invalid("co-state and control dimensions differ"));
    }
    let (beta, eta) = (config.effective_beta(), config.eta);
    Ok(theta.map(|m, th| th * beta + &g[m] * eta))
}

struct Evaluated {
    traj: EuclideanTrajectory,
    phi: f64,
    grad: DVector<f64>,
}

fn evaluate(
    field: &EuclideanField,
    theta: &ControlSchedule<DVector<f64>>,
    x0: &DVector<f64>,
    reward: &RewardSpec,
) -> Result<Evaluated> {
    let traj = integrate_euclidean(field, theta, x0, theta.grid())?;
    let (phi, grad) = reward.eval_euclidean(traj.terminal())?;
    Ok(Evaluated { traj, phi, grad })
}

pub fn run_guidance_euclidean(
    field: &EuclideanField,
    x0: &DVector<f64>,
    reward: &RewardSpec,
    config: &GuidanceConfig,
) -> Result<EuclideanReport> {
    config.validate()?;
    if x0.len() != field.dim() {
        return Err(invalid(format!("x0 has dimension {}, field expects {}", x0.len(), field.dim())));
    }
    if config.mode == GuidanceMode::DFlow {
        return run_dflow(field, x0, reward, config);
    }
    let grid = TimeGrid::new(config.n_steps)?;
    let mut theta = ControlSchedule::constant(DVector::zeros(x0.len()), config.n_controls, grid)?;
    let mut records = Vec::new();
    let mut last_traj = None;
    let mut change = 0.0;
    let mut status = RunStatus::Completed;
    let beta = config.effective_beta();

    for k in 0..=config.max_iters {
        let ev = match evaluate(field, &theta, x0, reward) {
            Ok(ev) => ev,
            Err(e) => {
                status = RunStatus::Failed { iter: k, message: e.to_string() };
                break;
            }
        };
        records.push(IterationRecord {
            iter: k,
            objective: objective_j(ev.phi, &theta, config.alpha),
            terminal_reward: ev.phi,
            running_cost: theta.running_cost(),
            control_change_norm: change,
            eps_k: None,
        });
        let converged = config.early_stop && k > 0 && change < CONVERGED_CHANGE;
        if k == config.max_iters || converged {
            if converged {
                status = RunStatus::Converged { iter: k };
            }
            last_traj = Some(ev.traj);
            break;
        }
        let co = backward_grad_chain(field, &ev.traj, &ev.grad, &theta)?;
        let next = match config.mode {
            GuidanceMode::Naive => {
                let g = theta.aggregate(&co.step_sensitivities)?;
                let dt = grid.dt();
                theta.map(|m, th| th * beta + &g[m] * (config.eta * dt))
            }
            _ => update_control_euclidean(&theta, &co, config)?,
        };
        change = theta.change_norm(&next);
        theta = next;
        last_traj = Some(ev.traj);
    }

    Ok(GuidanceReport {
        records,
        hamiltonian: Vec::new(),
        final_trajectory: last_traj,
        final_controls: theta,
        status,
        diagnostics: Diagnostics::default(),
    })
}

/// Backtracking ascent of `alpha Phi(x_N(x0))` over `x0`. The shift
/// `x0_k - x0` is reported as a single control `theta = shift / dt`, so the
/// running cost is `1/2 ||shift||^2 / dt`; the trajectory starts from the
/// shifted state and carries no control.
fn run_dflow(
    field: &EuclideanField,
    x0: &DVector<f64>,
    reward: &RewardSpec,
    config: &GuidanceConfig,
) -> Result<EuclideanReport> {
    let grid = TimeGrid::new(config.n_steps)?;
    let dt = grid.dt();
    let zero = ControlSchedule::constant(DVector::zeros(x0.len()), 1, grid)?;
    let as_control = |start: &DVector<f64>| -> Result<ControlSchedule<DVector<f64>>> {
        ControlSchedule::new(vec![(start - x0) / dt], grid)
    };

    let mut start = x0.clone();
    let mut records = Vec::new();
    let mut status = RunStatus::Completed;
    let mut change = 0.0;
    let mut current = match evaluate(field, &zero, &start, reward) {
        Ok(ev) => ev,
        Err(e) => {
            return Ok(GuidanceReport {
                records,
                hamiltonian: Vec::new(),
                final_trajectory: None,
                final_controls: zero,
                status: RunStatus::Failed { iter: 0, message: e.to_string() },
                diagnostics: Diagnostics::default(),
            })
        }
    };

    for k in 0..=config.max_iters {
        let theta = as_control(&start)?;
        records.push(IterationRecord {
            iter: k,
            objective: objective_j(current.phi, &theta, config.alpha),
            terminal_reward: current.phi,
            running_cost: theta.running_cost(),
            control_change_norm: change,
            eps_k: None,
        });
        let converged = config.early_stop && k > 0 && change < CONVERGED_CHANGE;
        if k == config.max_iters || converged {
            if converged {
                status = RunStatus::Converged { iter: k };
            }
            break;
        }
        let co = backward_grad_chain(field, &current.traj, &current.grad, &zero)?;
        let grad = &co.values[0] * config.alpha;
        let base = config.alpha * current.phi;
        let slope = grad.norm_squared();
        let mut step = config.dflow_step;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let candidate = &start + &grad * step;
            if let Ok(ev) = evaluate(field, &zero, &candidate, reward) {
                if config.alpha * ev.phi >= base + ARMIJO_C * step * slope {
                    accepted = Some((candidate, ev));
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((candidate, ev)) => {
                change = ((&candidate - &start) / dt).norm();
                start = candidate;
                current = ev;
            }
            None => {
                change = 0.0;
            }
        }
    }
    Ok(GuidanceReport {
        records,
        hamiltonian: Vec::new(),
        final_controls: as_control(&start)?,
        final_trajectory: Some(current.traj),
        status,
        diagnostics: Diagnostics::default(),
    })
}

/// Doubles `gamma` from `gamma0` until a `probe_iters`-iteration OC-Flow run
/// ascends monotonically (within `ASCENT_TOL`).
pub fn calibrate_gamma_euclidean(
    field: &EuclideanField,
    x0: &DVector<f64>,
    reward: &RewardSpec,
    base: &GuidanceConfig,
    gamma0: f64,
    probe_iters: usize,
    max_doublings: usize,
) -> Result<f64> {
    let mut gamma = gamma0;
    for _ in 0..=max_doublings {
        let mut config = GuidanceConfig::from_gamma(gamma, base.alpha, base.n_steps, base.n_controls, probe_iters);
        config.mode = GuidanceMode::OcFlow;
        let report = run_guidance_euclidean(field, x0, reward, &config)?;
        if report.succeeded() && report.is_monotone(ASCENT_TOL) {
            return Ok(gamma);
        }
        gamma *= 2.0;
    }
    Err(Error::Degenerate(format!("no monotone gamma up to {}", gamma / 2.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::FeedForward;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    fn lq_reward() -> RewardSpec {
        RewardSpec::QuadraticTarget { target: v(&[1.0]) }
    }

    fn costates(g: Vec<DVector<f64>>) -> CostateTrajectory<DVector<f64>> {
        let mut values = g.clone();
        values.push(g.last().unwrap().clone());
        CostateTrajectory { values, step_sensitivities: g, bound: None }
    }

    #[test]
    fn update_examples() {
        let grid = TimeGrid::new(3).unwrap();
        let g: Vec<_> = (0..3).map(|i| v(&[i as f64 - 1.0, 2.0])).collect();
        let co = costates(g.clone());
        let zero = ControlSchedule::constant(DVector::zeros(2), 3, grid).unwrap();
        let next = update_control_euclidean(&zero, &co, &GuidanceConfig::new(0.1, 0.9, 3, 3, 1)).unwrap();
        for (a, b) in next.controls().iter().zip(&g) {
            assert!((a - b * 0.1).norm() < 1e-16);
        }

        let theta = ControlSchedule::new(vec![v(&[1.0, -1.0]); 3], grid).unwrap();
        let decayed = update_control_euclidean(
            &theta,
            &costates(vec![DVector::zeros(2); 3]),
            &GuidanceConfig::new(0.1, 0.9, 3, 3, 1),
        )
        .unwrap();
        assert!(decayed.controls().iter().all(|c| *c == v(&[0.9, -0.9])));

        let config = GuidanceConfig::new(2.5, 0.995, 1, 1, 1);
        let g = v(&[0.3, -0.7]);
        let co = costates(vec![g.clone()]);
        let once = update_control_euclidean(
            &ControlSchedule::constant(DVector::zeros(2), 1, TimeGrid::new(1).unwrap()).unwrap(),
            &co,
            &config,
        )
        .unwrap();
        let twice = update_control_euclidean(&once, &co, &config).unwrap();
        assert!((&twice.controls()[0] - &g * (2.5 * 1.995)).norm() < 1e-14);

        let wrong = costates(vec![v(&[1.0])]);
        assert!(update_control_euclidean(&once, &wrong, &config).is_err());
    }

    #[test]
    fn lq_converges_to_stationary_point() {
        let mut config = GuidanceConfig::new(0.25, 0.5, 50, 50, 200);
        config.alpha = 0.5;
        let report =
            run_guidance_euclidean(&EuclideanField::Zero { dim: 1 }, &v(&[0.0]), &lq_reward(), &config).unwrap();
        assert_eq!(report.records.len(), 201);
        for c in report.final_controls.controls() {
            assert!((c[0] - 0.5).abs() < 1e-4);
        }
        let xt = report.final_trajectory.as_ref().unwrap().terminal()[0];
        assert!((xt - 0.5).abs() < 1e-4);
        assert!((report.final_objective().unwrap() + 0.25).abs() < 1e-4);
        assert!(report.is_monotone(ASCENT_TOL));
        for r in &report.records {
            assert!((r.objective - (0.5 * r.terminal_reward - r.running_cost)).abs() < 1e-12);
        }
    }

    #[test]
    fn lq_fixed_point_residual() {
        let mut config = GuidanceConfig::new(0.25, 0.5, 20, 20, 500);
        config.alpha = 0.5;
        config.early_stop = true;
        let field = EuclideanField::Zero { dim: 1 };
        let report = run_guidance_euclidean(&field, &v(&[0.0]), &lq_reward(), &config).unwrap();
        assert!(matches!(report.status, RunStatus::Converged { .. }));
        let traj = integrate_euclidean(&field, &report.final_controls, &v(&[0.0]), TimeGrid::new(20).unwrap()).unwrap();
        let (_, grad) = lq_reward().eval_euclidean(traj.terminal()).unwrap();
        let co = backward_grad_chain(&field, &traj, &grad, &report.final_controls).unwrap();
        let g = report.final_controls.aggregate(&co.step_sensitivities).unwrap();
        let ratio = config.eta / (1.0 - config.beta);
        for (th, gm) in report.final_controls.controls().iter().zip(&g) {
            assert!((th - gm * ratio).norm() < 1e-8);
        }
    }

    #[test]
    fn zero_gradient_keeps_controls_at_zero() {
        let reward = RewardSpec::LinearProbe { weights: DVector::zeros(2) };
        let field = EuclideanField::linear(nalgebra::DMatrix::from_row_slice(2, 2, &[0.1, 0.2, -0.3, 0.0])).unwrap();
        let report =
            run_guidance_euclidean(&field, &v(&[1.0, 2.0]), &reward, &GuidanceConfig::new(0.5, 0.5, 10, 5, 4)).unwrap();
        assert!(report.final_controls.controls().iter().all(|c| c.norm() == 0.0));
        let j0 = report.records[0].objective;
        assert!(report.records.iter().all(|r| r.objective == j0));
    }

    #[test]
    fn flowgrad_matches_unit_beta() {
        let net = FeedForward::random(3, 8, 2, 0.8, 17);
        let field = EuclideanField::feed_forward(net).unwrap();
        let reward = RewardSpec::QuadraticTarget { target: v(&[0.5, -0.5]) };
        let x0 = v(&[0.2, 0.1]);
        for k in [1, 3, 7] {
            let mut fg = GuidanceConfig::new(0.3, 0.7, 20, 10, k);
            fg.mode = GuidanceMode::FlowGrad;
            let oc = GuidanceConfig::new(0.3, 1.0, 20, 10, k);
            let a = run_guidance_euclidean(&field, &x0, &reward, &fg).unwrap();
            let b = run_guidance_euclidean(&field, &x0, &reward, &oc).unwrap();
            for (ca, cb) in a.final_controls.controls().iter().zip(b.final_controls.controls()) {
                assert!((ca - cb).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn running_cost_shrinks_with_stronger_decay() {
        let field = EuclideanField::Zero { dim: 1 };
        let eta = 0.2;
        let betas = [0.1, 0.3, 0.5, 0.7, 0.9];
        let costs: Vec<f64> = betas
            .iter()
            .map(|&beta| {
                let mut c = GuidanceConfig::new(eta, beta, 10, 10, 300);
                c.alpha = 0.5;
                let r = run_guidance_euclidean(&field, &v(&[0.0]), &lq_reward(), &c).unwrap();
                r.records.last().unwrap().running_cost
            })
            .collect();
        // fixed point of theta = r * 2 (1 - theta), r = eta / (1 - beta)
        for (beta, cost) in betas.iter().zip(&costs) {
            let r = eta / (1.0 - beta);
            let theta = 2.0 * r / (1.0 + 2.0 * r);
            assert!((cost - 0.5 * theta * theta).abs() < 1e-9);
        }
        // smaller beta decays harder toward the prior
        for w in costs.windows(2) {
            assert!(w[0] <= w[1] + 1e-12, "{costs:?}");
        }
    }

    #[test]
    fn dflow_moves_initial_state() {
        let reward = lq_reward();
        let mut config = GuidanceConfig::new(1.0, 1.0, 10, 1, 10);
        config.mode = GuidanceMode::DFlow;
        config.dflow_step = 1.0;
        let report = run_guidance_euclidean(&EuclideanField::Zero { dim: 1 }, &v(&[0.0]), &reward, &config).unwrap();
        let terminal = report.final_trajectory.as_ref().unwrap().terminal()[0];
        assert!((terminal - 1.0).abs() < 1e-6);
        let shift = report.final_controls.controls()[0][0] * 0.1;
        assert!((shift - terminal).abs() < 1e-12);
        let last = report.records.last().unwrap();
        assert!((last.running_cost - 0.5 * shift * shift / 0.1).abs() < 1e-12);

        config.n_controls = 2;
        assert!(run_guidance_euclidean(&EuclideanField::Zero { dim: 1 }, &v(&[0.0]), &reward, &config).is_err());
    }

    #[test]
    fn divergence_yields_partial_report() {
        let field = EuclideanField::linear(nalgebra::DMatrix::from_element(1, 1, 1e200)).unwrap();
        let report =
            run_guidance_euclidean(&field, &v(&[1e200]), &lq_reward(), &GuidanceConfig::new(0.1, 0.5, 10, 10, 3))
                .unwrap();
        assert!(matches!(report.status, RunStatus::Failed { iter: 0, .. }));
        assert!(report.records.is_empty());
    }

    #[test]
    fn zero_iterations_give_baseline_only() {
        let report = run_guidance_euclidean(
            &EuclideanField::Zero { dim: 1 },
            &v(&[0.0]),
            &lq_reward(),
            &GuidanceConfig::new(0.1, 0.5, 10, 10, 0),
        )
        .unwrap();
        assert_eq!(report.records.len(), 1);
        assert_eq!(report.records[0].objective, -1.0);
    }

    #[test]
    fn calibration_returns_monotone_gamma() {
        let net = FeedForward::random(5, 16, 4, 1.0, 3);
        let field = EuclideanField::feed_forward(net).unwrap();
        let reward = RewardSpec::QuadraticTarget { target: v(&[1.0, 0.0, -1.0, 0.5]) };
        let x0 = v(&[0.1, 0.2, 0.3, 0.4]);
        let base = GuidanceConfig::from_gamma(1.0, 1.0, 50, 50, 20);
        let gamma = calibrate_gamma_euclidean(&field, &x0, &reward, &base, 0.125, 20, 30).unwrap();
        let r =
            run_guidance_euclidean(&field, &x0, &reward, &GuidanceConfig::from_gamma(gamma, 1.0, 50, 50, 20)).unwrap();
        assert!(r.is_monotone(ASCENT_TOL));
    }
}
