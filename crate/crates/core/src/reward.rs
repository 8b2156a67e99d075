//! Terminal rewards `Phi` and their exact gradients.
//!
//! SO(3) rewards return the Euclidean gradient over the nine matrix entries.
//! Distances built on the matrix logarithm use the trace formula
//! `theta = acos((tr Y - 1) / 2)`, `log Y = theta / (2 sin theta) (Y - Y^T)`,
//! which extends smoothly to matrices near the group; that extension is what
//! the gradient differentiates.

use std::f64::consts::PI;

use nalgebra::{DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::so3::{RotationMatrix, ANTIPODAL_MARGIN, SMALL_ANGLE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PriorPoint {
    Euclidean(DVector<f64>),
    Rotation(RotationMatrix),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RewardSpec {
    /// `-||x - target||^2` (Frobenius on SO(3), target given row-major).
    QuadraticTarget { target: DVector<f64> },
    /// `-1/2 d(x, target)^2` with `d(R1, R2) = ||log(R1^T R2)||_F`.
    GeodesicTarget { target: RotationMatrix },
    /// `w . x` (row-major entries on SO(3)).
    LinearProbe { weights: DVector<f64> },
    /// `lambda * base - (1 - lambda) d(x, prior)` with the Euclidean norm or
    /// the geodesic distance. The penalty uses a zero subgradient where
    /// `x = prior`.
    CompositeWithPrior { base: Box<RewardSpec>, lambda: f64, prior: PriorPoint },
}

impl RewardSpec {
    pub fn composite(base: RewardSpec, lambda: f64, prior: PriorPoint) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(invalid(format!("lambda must lie in [0, 1], got {lambda}")));
        }
        Ok(RewardSpec::CompositeWithPrior { base: Box::new(base), lambda, prior })
    }

    /// Value and gradient at a Euclidean state.
    pub fn eval_euclidean(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        match self {
            RewardSpec::QuadraticTarget { target } => {
                check_len(target.len(), x.len())?;
                let diff = x - target;
                Ok((-diff.norm_squared(), diff * -2.0))
            }
            RewardSpec::LinearProbe { weights } => {
                check_len(weights.len(), x.len())?;
                Ok((weights.dot(x), weights.clone()))
            }
            RewardSpec::GeodesicTarget { .. } => Err(invalid("geodesic reward needs an SO(3) state")),
            RewardSpec::CompositeWithPrior { base, lambda, prior } => {
                let PriorPoint::Euclidean(p) = prior else {
                    return Err(invalid("Euclidean composite reward needs a Euclidean prior point"));
                };
                check_len(p.len(), x.len())?;
                let (v, g) = base.eval_euclidean(x)?;
                let diff = x - p;
                let dist = diff.norm();
                let pen_grad = if dist > 0.0 { diff / dist } else { DVector::zeros(x.len()) };
                Ok((lambda * v - (1.0 - lambda) * dist, g * *lambda - pen_grad * (1.0 - lambda)))
            }
        }
    }

    /// Value and 9-entry matrix gradient at a rotation. The argument may lie
    /// slightly off the group (finite-difference probes do this).
    pub fn eval_so3(&self, x: &RotationMatrix) -> Result<(f64, Matrix3<f64>)> {
        let xm = x.matrix();
        match self {
            RewardSpec::QuadraticTarget { target } => {
                check_len(target.len(), 9)?;
                let t = Matrix3::from_row_slice(target.as_slice());
                let diff = xm - t;
                Ok((-diff.norm_squared(), diff * -2.0))
            }
            RewardSpec::LinearProbe { weights } => {
                check_len(weights.len(), 9)?;
                let w = Matrix3::from_row_slice(weights.as_slice());
                Ok((w.dot(xm), w))
            }
            RewardSpec::GeodesicTarget { target } => half_sq_log_norm(xm, target.matrix()),
            RewardSpec::CompositeWithPrior { base, lambda, prior } => {
                let PriorPoint::Rotation(p) = prior else {
                    return Err(invalid("SO(3) composite reward needs a rotation prior point"));
                };
                let (v, g) = base.eval_so3(x)?;
                let (dist, dgrad) = geodesic_dist_with_grad(xm, p.matrix())?;
                Ok((lambda * v - (1.0 - lambda) * dist, g * *lambda - dgrad * (1.0 - lambda)))
            }
        }
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(invalid(format!("reward expects dimension {expected}, got {got}")));
    }
    Ok(())
}

/// Angle of `Y = X^T R` from the trace, rejecting the antipodal region.
fn trace_angle(y: &Matrix3<f64>) -> Result<f64> {
    let s = (0.5 * (y.trace() - 1.0)).clamp(-1.0, 1.0);
    let theta = s.acos();
    if !theta.is_finite() {
        return Err(invalid("non-finite rotation in reward"));
    }
    if theta > PI - ANTIPODAL_MARGIN {
        return Err(Error::NearAntipodal { angle: theta });
    }
    Ok(theta)
}

/// `-1/2 ||log(X^T R)||_F^2` and its gradient in `X`.
fn half_sq_log_norm(x: &Matrix3<f64>, r: &Matrix3<f64>) -> Result<(f64, Matrix3<f64>)> {
    let y = x.transpose() * r;
    let theta = trace_angle(&y)?;
    let a = y - y.transpose();
    let a2 = a.norm_squared();
    // k = theta / (2 sin theta), q = k'(theta) / sin(theta)
    let (k, q) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (0.5 * (1.0 + t2 / 6.0), 1.0 / 6.0 + t2 / 15.0)
    } else {
        let (s, c) = theta.sin_cos();
        (theta / (2.0 * s), (s - theta * c) / (2.0 * s * s * s))
    };
    let value = -0.5 * k * k * a2;
    let grad_y = Matrix3::identity() * (0.5 * k * q * a2) - a * (2.0 * k * k);
    Ok((value, r * grad_y.transpose()))
}

/// `||log(X^T P)||_F = sqrt(2) theta` and its gradient in `X`.
fn geodesic_dist_with_grad(x: &Matrix3<f64>, p: &Matrix3<f64>) -> Result<(f64, Matrix3<f64>)> {
    let y = x.transpose() * p;
    let theta = trace_angle(&y)?;
    let dist = std::f64::consts::SQRT_2 * theta;
    if theta == 0.0 {
        return Ok((0.0, Matrix3::zeros()));
    }
    let grad = p * (-std::f64::consts::SQRT_2 / (2.0 * theta.sin()));
    Ok((dist, grad))
}
