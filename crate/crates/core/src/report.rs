//! Per-iteration records shared by the Euclidean and SO(3) optimizers.

use serde::{Deserialize, Serialize};

use crate::ode::{ControlSchedule, Trajectory};

/// Tolerance for the monotone-ascent check `J_{k+1} >= J_k - tol`.
pub const ASCENT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// `J(theta^k)`.
    pub objective: f64,
    /// `Phi(x_N)` (unscaled).
    pub terminal_reward: f64,
    pub running_cost: f64,
    /// RMS change from `theta^{k-1}` to `theta^k`; zero for the baseline.
    pub control_change_norm: f64,
    /// Integrated Hamiltonian gain of the update `theta^k -> theta^{k+1}`.
    pub eps_k: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianRecord {
    pub iter: usize,
    /// `H` at every fine step under `theta^k`.
    pub h_values: Vec<f64>,
    /// Extended-Hamiltonian gain per control element.
    pub delta_h_ext: Vec<f64>,
    pub eps_k: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RunStatus {
    Completed,
    /// Stopped early because the control change fell below the threshold.
    Converged {
        iter: usize,
    },
    /// Integration or reward evaluation failed; records hold the iterations
    /// completed before the failure.
    Failed {
        iter: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub costate_bound_violated: bool,
    pub max_orthogonality_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceReport<S, V, C> {
    pub records: Vec<IterationRecord>,
    pub hamiltonian: Vec<HamiltonianRecord>,
    pub final_trajectory: Option<Trajectory<S, V>>,
    pub final_controls: ControlSchedule<C>,
    pub status: RunStatus,
    pub diagnostics: Diagnostics,
}

impl<S, V, C> GuidanceReport<S, V, C> {
    pub fn final_objective(&self) -> Option<f64> {
        self.records.last().map(|r| r.objective)
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    /// Whether `J` never drops by more than `tol` between records.
    pub fn is_monotone(&self, tol: f64) -> bool {
        is_monotone(&self.objectives(), tol)
    }

    /// Last computed `eps_k`.
    pub fn last_eps(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.eps_k)
    }

    pub fn succeeded(&self) -> bool {
        !matches!(self.status, RunStatus::Failed { .. })
    }
}

pub fn is_monotone(values: &[f64], tol: f64) -> bool {
    values.windows(2).all(|w| w[1] >= w[0] - tol)
}
