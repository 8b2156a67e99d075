//! Objective evaluation, Euclidean Hamiltonian and the running-cost / KL
//! bound for affine Gaussian paths.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::ode::{ControlElement, ControlSchedule};

/// `J = alpha * Phi(x_N) - 1/2 sum_m dt ||theta_m||^2`.
pub fn objective_j<C: ControlElement>(terminal_reward: f64, controls: &ControlSchedule<C>, alpha: f64) -> f64 {
    alpha * terminal_reward - controls.running_cost()
}

/// `H = mu . (f + theta) - 1/2 ||theta||^2`.
pub fn hamiltonian_euclidean(mu: &DVector<f64>, velocity: &DVector<f64>, theta: &DVector<f64>) -> Result<f64> {
    if mu.len() != velocity.len() || mu.len() != theta.len() {
        return Err(invalid("hamiltonian arguments have different dimensions"));
    }
    Ok(mu.dot(velocity) - 0.5 * theta.norm_squared())
}

/// One controlled affine Gaussian path conditioned on a data point.
///
/// Controls shift the terminal mean by `int theta_t dt` and leave the
/// covariance `sigma1^2 I` untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPathCase {
    pub sigma1: f64,
    /// Terminal mean of the uncontrolled path.
    pub prior_mean: DVector<f64>,
    /// Control samples on the uniform nodes `t_j = j / (n - 1)`.
    pub theta: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlBoundCheck {
    /// `1/2 int ||theta||^2 dt`.
    pub lhs: f64,
    /// `sigma1^2 * KL = 1/2 ||delta mu||^2`.
    pub rhs: f64,
    pub kl: f64,
    pub holds: bool,
    /// `|lhs - rhs| <= KL_TOL`.
    pub equality: bool,
}

pub const KL_TOL: f64 = 1e-12;

fn trapezoid_weights(n: usize) -> Vec<f64> {
    let h = 1.0 / (n - 1) as f64;
    (0..n).map(|j| if j == 0 || j == n - 1 { 0.5 * h } else { h }).collect()
}

/// Checks `1/2 int ||theta||^2 >= sigma1^2 KL(p_theta || p_prior)` with both
/// integrals taken by the trapezoid rule on the schedule's nodes.
pub fn gaussian_kl_bound_check(case: &GaussianPathCase) -> Result<KlBoundCheck> {
    if !(case.sigma1 > 0.0) {
        return Err(invalid("sigma1 must be positive"));
    }
    let n = case.theta.len();
    if n < 2 {
        return Err(invalid("control profile needs at least two nodes"));
    }
    let d = case.prior_mean.len();
    if case.theta.iter().any(|th| th.len() != d) {
        return Err(invalid("control dimension differs from the mean dimension"));
    }
    let weights = trapezoid_weights(n);
    let mut shift = DVector::zeros(d);
    let mut energy = 0.0;
    for (w, th) in weights.iter().zip(&case.theta) {
        shift.axpy(*w, th, 1.0);
        energy += w * th.norm_squared();
    }
    let guided_mean = &case.prior_mean + &shift;
    let delta = guided_mean - &case.prior_mean;
    let s2 = case.sigma1 * case.sigma1;
    let kl = delta.norm_squared() / (2.0 * s2);
    let lhs = 0.5 * energy;
    let rhs = s2 * kl;
    Ok(KlBoundCheck { lhs, rhs, kl, holds: lhs >= rhs - KL_TOL, equality: (lhs - rhs).abs() <= KL_TOL })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::TimeGrid;

    fn profile(n: usize, f: impl Fn(f64) -> f64) -> Vec<DVector<f64>> {
        (0..n).map(|j| DVector::from_element(1, f(j as f64 / (n - 1) as f64))).collect()
    }

    #[test]
    fn objective_examples() {
        let grid = TimeGrid::new(4).unwrap();
        let zero = ControlSchedule::constant(DVector::zeros(1), 4, grid).unwrap();
        assert_eq!(objective_j(-0.3, &zero, 2.0), -0.6);
        let c = ControlSchedule::constant(DVector::from_element(1, 0.5), 4, grid).unwrap();
        let j1 = objective_j(-0.25, &c, 1.0);
        let j2 = objective_j(-0.25, &c, 2.0);
        assert_eq!(j2 - j1, -0.25);
        assert_eq!(c.running_cost(), 0.125);
    }

    #[test]
    fn hamiltonian_examples() {
        let z = DVector::zeros(2);
        assert_eq!(hamiltonian_euclidean(&z, &z, &z).unwrap(), 0.0);
        let mu = DVector::from_vec(vec![1.0, 0.0]);
        let v = DVector::from_vec(vec![0.5, 0.0]);
        let th = DVector::from_vec(vec![0.2, 0.0]);
        assert!((hamiltonian_euclidean(&mu, &v, &th).unwrap() - 0.48).abs() < 1e-15);

        // with f independent of theta, H(theta) = mu.(f + theta) - |theta|^2/2 peaks at theta = mu
        let f = DVector::from_vec(vec![0.3, -0.1]);
        let mu = DVector::from_vec(vec![0.7, 0.2]);
        let h = |th: &DVector<f64>| hamiltonian_euclidean(&mu, &(&f + th), th).unwrap();
        let best = h(&mu);
        for dir in [[1.0, 0.0], [0.0, 1.0], [0.6, -0.8]] {
            let d = DVector::from_row_slice(&dir) * 1e-3;
            assert!(h(&(&mu + &d)) < best && h(&(&mu - &d)) < best);
        }
        assert!(hamiltonian_euclidean(&mu, &f, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn kl_bound_examples() {
        let zero = GaussianPathCase { sigma1: 1.0, prior_mean: DVector::zeros(1), theta: profile(11, |_| 0.0) };
        let r = gaussian_kl_bound_check(&zero).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
        assert!(r.holds && r.equality);

        let constant = GaussianPathCase { sigma1: 1.0, prior_mean: DVector::zeros(1), theta: profile(11, |_| 0.6) };
        let r = gaussian_kl_bound_check(&constant).unwrap();
        assert!((r.lhs - 0.18).abs() < 1e-15 && (r.rhs - 0.18).abs() < 1e-15 && (r.kl - 0.18).abs() < 1e-15);
        assert!(r.equality);

        let ramp = GaussianPathCase { sigma1: 1.0, prior_mean: DVector::zeros(1), theta: profile(2001, |t| 1.2 * t) };
        let r = gaussian_kl_bound_check(&ramp).unwrap();
        assert!((r.lhs - 0.24).abs() < 1e-6, "{}", r.lhs);
        assert!((r.rhs - 0.18).abs() < 1e-12);
        assert!(r.holds && !r.equality);

        let bad = GaussianPathCase { sigma1: 0.0, ..ramp };
        assert!(gaussian_kl_bound_check(&bad).is_err());
    }
}
