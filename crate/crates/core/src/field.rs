//! Prior vector fields on R^d and SO(3).
//!
//! Euclidean fields return `f(t, x)` as a d-vector and support
//! vector-Jacobian products. SO(3) fields are left-trivialized: they return
//! the body velocity `xi` in `x' = x xi`, and support directional derivatives
//! along tangent directions `x E`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mlp::FeedForward;
use crate::so3::{hat, left_jacobian_inverse, log_so3_unchecked, RotationMatrix, So3Matrix};

/// Smallest denominator used by [`So3Field::GeodesicPull`].
pub const GEODESIC_PULL_CLAMP: f64 = 1e-3;

/// Mean and standard-deviation schedules of an affine Gaussian path
/// `x_t ~ N(m_t x1, sigma_t^2 I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GaussianSchedule {
    /// `m_t = t`, `sigma_t = 1 - (1 - sigma_min) t`.
    OptimalTransport { sigma_min: f64 },
    /// `m_t = sin(pi t / 2)`, `sigma_t = cos(pi t / 2)`.
    Trigonometric,
}

impl GaussianSchedule {
    /// `(m_t, m'_t, sigma_t, sigma'_t)`.
    pub fn coefficients(&self, t: f64) -> (f64, f64, f64, f64) {
        match *self {
            GaussianSchedule::OptimalTransport { sigma_min } => {
                (t, 1.0, 1.0 - (1.0 - sigma_min) * t, -(1.0 - sigma_min))
            }
            GaussianSchedule::Trigonometric => {
                let a = FRAC_PI_2 * t;
                (a.sin(), FRAC_PI_2 * a.cos(), a.cos(), -FRAC_PI_2 * a.sin())
            }
        }
    }

    fn checked(&self, t: f64) -> Result<(f64, f64, f64, f64)> {
        let c = self.coefficients(t);
        if !(c.2 > 0.0) {
            return Err(Error::SingularSchedule { t, sigma: c.2 });
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EuclideanField {
    Zero {
        dim: usize,
    },
    Linear {
        a: DMatrix<f64>,
    },
    /// Conditional field `u_t(x | x1) = mu'_t + (sigma'_t / sigma_t)(x - mu_t)`.
    AffineGaussianPath {
        schedule: GaussianSchedule,
        x1: DVector<f64>,
    },
    /// Network with input `x ++ [t]` and output of the same dimension as `x`.
    FeedForward(FeedForward),
}

impl EuclideanField {
    pub fn linear(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(invalid("linear field matrix must be square"));
        }
        Ok(EuclideanField::Linear { a })
    }

    pub fn feed_forward(net: FeedForward) -> Result<Self> {
        if net.input_dim() != net.output_dim() + 1 {
            return Err(invalid(format!(
                "feed-forward field needs input dim = output dim + 1, got {} -> {}",
                net.input_dim(),
                net.output_dim()
            )));
        }
        Ok(EuclideanField::FeedForward(net))
    }

    pub fn dim(&self) -> usize {
        match self {
            EuclideanField::Zero { dim } => *dim,
            EuclideanField::Linear { a } => a.nrows(),
            EuclideanField::AffineGaussianPath { x1, .. } => x1.len(),
            EuclideanField::FeedForward(net) => net.output_dim(),
        }
    }

    fn check(&self, x: &DVector<f64>, what: &str) -> Result<()> {
        if x.len() != self.dim() {
            return Err(invalid(format!("{what} has dimension {}, field has {}", x.len(), self.dim())));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(x, "state")?;
        match self {
            EuclideanField::Zero { dim } => Ok(DVector::zeros(*dim)),
            EuclideanField::Linear { a } => Ok(a * x),
            EuclideanField::AffineGaussianPath { schedule, x1 } => {
                let (m, dm, s, ds) = schedule.checked(t)?;
                Ok(x1 * dm + (x - x1 * m) * (ds / s))
            }
            EuclideanField::FeedForward(net) => net.forward(&with_time(x, t)),
        }
    }

    /// `(df/dx)^T g`.
    pub fn vjp(&self, t: f64, x: &DVector<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(x, "state")?;
        self.check(g, "cotangent")?;
        match self {
            EuclideanField::Zero { dim } => Ok(DVector::zeros(*dim)),
            EuclideanField::Linear { a } => Ok(a.tr_mul(g)),
            EuclideanField::AffineGaussianPath { schedule, .. } => {
                let (_, _, s, ds) = schedule.checked(t)?;
                Ok(g * (ds / s))
            }
            EuclideanField::FeedForward(net) => {
                let full = net.vjp(&with_time(x, t), g)?;
                Ok(full.rows(0, x.len()).into_owned())
            }
        }
    }
}

fn with_time(x: &DVector<f64>, t: f64) -> DVector<f64> {
    let mut v = x.clone().resize_vertically(x.len() + 1, 0.0);
    v[x.len()] = t;
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum So3Field {
    Zero,
    ConstantBody(So3Matrix),
    /// Body velocity `log(x^T target) / max(1 - t, GEODESIC_PULL_CLAMP)`.
    GeodesicPull {
        target: RotationMatrix,
    },
    /// Network with input `vec(x) ++ [t]` (row-major, 10 entries) and 3
    /// outputs hatted into so(3).
    FeedForward(FeedForward),
}

impl So3Field {
    pub fn feed_forward(net: FeedForward) -> Result<Self> {
        if net.input_dim() != 10 || net.output_dim() != 3 {
            return Err(invalid("SO(3) feed-forward field needs 10 inputs and 3 outputs"));
        }
        Ok(So3Field::FeedForward(net))
    }

    pub fn eval(&self, t: f64, x: &RotationMatrix) -> Result<So3Matrix> {
        match self {
            So3Field::Zero => Ok(So3Matrix::zero()),
            So3Field::ConstantBody(c) => Ok(*c),
            So3Field::GeodesicPull { target } => {
                let log = log_so3_unchecked(&(x.transpose() * *target))?;
                Ok(log * (1.0 / pull_denominator(t)))
            }
            So3Field::FeedForward(net) => {
                let out = net.forward(&flatten_with_time(x.matrix(), t))?;
                Ok(hat(&nalgebra::Vector3::new(out[0], out[1], out[2])))
            }
        }
    }

    /// Derivative of the body velocity along the tangent direction `v` at
    /// `x`, where `v = x E` for some `E` in so(3).
    pub fn dirderiv(&self, t: f64, x: &RotationMatrix, v: &Matrix3<f64>) -> Result<So3Matrix> {
        match self {
            So3Field::Zero | So3Field::ConstantBody(_) => Ok(So3Matrix::zero()),
            So3Field::GeodesicPull { target } => {
                // x exp(sE) gives x^T target -> exp(-sE) x^T target.
                let e = So3Matrix::project(&(x.matrix().transpose() * v)).vector();
                let w = log_so3_unchecked(&(x.transpose() * *target))?.vector();
                let dw = -(left_jacobian_inverse(&w) * e);
                Ok(hat(&dw) * (1.0 / pull_denominator(t)))
            }
            So3Field::FeedForward(net) => {
                // time is not perturbed
                let tangent = flatten_with_time(v, 0.0);
                let d = net.jvp(&flatten_with_time(x.matrix(), t), &tangent)?;
                Ok(hat(&nalgebra::Vector3::new(d[0], d[1], d[2])))
            }
        }
    }
}

fn pull_denominator(t: f64) -> f64 {
    (1.0 - t).max(GEODESIC_PULL_CLAMP)
}

fn flatten_with_time(m: &Matrix3<f64>, t: f64) -> DVector<f64> {
    let mut v = DVector::zeros(10);
    for r in 0..3 {
        for c in 0..3 {
            v[3 * r + c] = m[(r, c)];
        }
    }
    v[9] = t;
    v
}
