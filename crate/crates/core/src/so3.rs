//! SO(3) group and so(3) algebra primitives.
//!
//! Rotations are stored as plain 3x3 matrices. The algebra uses the
//! Frobenius inner product `<A, B> = tr(A^T B)`, so `||hat(w)||_F = sqrt(2) |w|`
//! and the canonical generators `E_i = hat(e_i)` satisfy `<E_i, E_j> = 2 delta_ij`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type RotationVector = Vector3<f64>;

/// Tolerance for the `R^T R = I` and `det R = 1` checks.
pub const ROTATION_TOL: f64 = 1e-9;
/// Tolerance for accepting a matrix as skew-symmetric.
pub const SKEW_TOL: f64 = 1e-9;
/// Below this angle exp/log switch to Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-4;
/// Logs of rotations with angle above `pi - ANTIPODAL_MARGIN` are rejected.
pub const ANTIPODAL_MARGIN: f64 = 1e-6;

/// Element of the Lie algebra so(3): a skew-symmetric 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct So3Matrix(Matrix3<f64>);

impl So3Matrix {
    pub fn zero() -> Self {
        So3Matrix(Matrix3::zeros())
    }

    /// Accepts `m` if it is skew within [`SKEW_TOL`]; the stored value is
    /// the exact skew part.
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let residual = (m + m.transpose()).norm();
        if !residual.is_finite() || residual >= SKEW_TOL {
            return Err(invalid(format!("matrix is not skew-symmetric (residual {residual:e})")));
        }
        Ok(Self::project(&m))
    }

    /// Skew part `(M - M^T) / 2` of an arbitrary matrix.
    pub fn project(m: &Matrix3<f64>) -> Self {
        So3Matrix((m - m.transpose()) * 0.5)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn vector(&self) -> RotationVector {
        Vector3::new(self.0[(2, 1)], self.0[(0, 2)], self.0[(1, 0)])
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn norm_squared(&self) -> f64 {
        self.0.norm_squared()
    }
}

impl Add for So3Matrix {
    type Output = So3Matrix;
    fn add(self, rhs: So3Matrix) -> So3Matrix {
        So3Matrix(self.0 + rhs.0)
    }
}

impl AddAssign for So3Matrix {
    fn add_assign(&mut self, rhs: So3Matrix) {
        self.0 += rhs.0;
    }
}

impl Sub for So3Matrix {
    type Output = So3Matrix;
    fn sub(self, rhs: So3Matrix) -> So3Matrix {
        So3Matrix(self.0 - rhs.0)
    }
}

impl Neg for So3Matrix {
    type Output = So3Matrix;
    fn neg(self) -> So3Matrix {
        So3Matrix(-self.0)
    }
}

impl Mul<f64> for So3Matrix {
    type Output = So3Matrix;
    fn mul(self, rhs: f64) -> So3Matrix {
        So3Matrix(self.0 * rhs)
    }
}

impl Mul<So3Matrix> for f64 {
    type Output = So3Matrix;
    fn mul(self, rhs: So3Matrix) -> So3Matrix {
        So3Matrix(rhs.0 * self)
    }
}

/// Element of SO(3).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        RotationMatrix(Matrix3::identity())
    }

    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let orth = orthogonality_residual(&m);
        let det = (m.determinant() - 1.0).abs();
        if !(orth < ROTATION_TOL && det < ROTATION_TOL) {
            return Err(invalid(format!("not a rotation (orthogonality residual {orth:e}, det residual {det:e})")));
        }
        Ok(RotationMatrix(m))
    }

    /// Wraps `m` without checking the group invariants. Used for products of
    /// rotations, which are rotations up to rounding.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        RotationMatrix(m)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        RotationMatrix(self.0.transpose())
    }

    /// `||R^T R - I||_F`.
    pub fn orthogonality_residual(&self) -> f64 {
        orthogonality_residual(&self.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Right perturbation `R exp(A)`.
    pub fn retract(&self, a: &So3Matrix) -> Self {
        *self * exp_so3(a)
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;
    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

fn orthogonality_residual(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).norm()
}

/// Cross-product matrix: `hat(w) v = w x v`.
#[rustfmt::skip]
pub fn hat(w: &RotationVector) -> So3Matrix {
    So3Matrix(Matrix3::new(
         0.0, -w.z,  w.y,
         w.z,  0.0, -w.x,
        -w.y,  w.x,  0.0,
    ))
}

/// Inverse of [`hat`]. Rejects matrices that are not skew within [`SKEW_TOL`].
pub fn vee(a: &Matrix3<f64>) -> Result<RotationVector> {
    Ok(So3Matrix::new(*a)?.vector())
}

/// Canonical generators `E_i = hat(e_i)`.
pub fn canonical_basis() -> [So3Matrix; 3] {
    [hat(&Vector3::x()), hat(&Vector3::y()), hat(&Vector3::z())]
}

/// Rodrigues exponential.
pub fn exp_so3(a: &So3Matrix) -> RotationMatrix {
    let w = a.vector();
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let (s, c) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let m = a.matrix();
    RotationMatrix(Matrix3::identity() + m * s + m * m * c)
}

/// Rotation angle in `[0, pi]`, computed with atan2 for accuracy at both ends.
pub fn rotation_angle(r: &RotationMatrix) -> f64 {
    let m = r.matrix();
    let axis = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    let sin = 0.5 * axis.norm();
    let cos = 0.5 * (m.trace() - 1.0);
    sin.atan2(cos)
}

/// Principal matrix logarithm. Requires the angle to stay `ANTIPODAL_MARGIN`
/// away from pi.
pub fn log_so3(r: &RotationMatrix) -> Result<So3Matrix> {
    if r.orthogonality_residual() >= ROTATION_TOL || (r.matrix().determinant() - 1.0).abs() >= ROTATION_TOL {
        return Err(invalid("log_so3 input is not a rotation"));
    }
    log_so3_unchecked(r)
}

/// [`log_so3`] without the group-invariant check (still rejects near-antipodal).
pub fn log_so3_unchecked(r: &RotationMatrix) -> Result<So3Matrix> {
    let theta = rotation_angle(r);
    if !theta.is_finite() {
        return Err(invalid("non-finite rotation"));
    }
    if theta > std::f64::consts::PI - ANTIPODAL_MARGIN {
        return Err(Error::NearAntipodal { angle: theta });
    }
    let skew = So3Matrix::project(r.matrix());
    let scale = if theta < SMALL_ANGLE { 1.0 + theta * theta / 6.0 } else { theta / theta.sin() };
    Ok(skew * scale)
}

/// `||log(R1^T R2)||_F`, equal to `sqrt(2)` times the relative angle.
pub fn geodesic_distance(r1: &RotationMatrix, r2: &RotationMatrix) -> Result<f64> {
    Ok(log_so3_unchecked(&(r1.transpose() * *r2))?.norm())
}

pub fn frobenius_inner(a: &So3Matrix, b: &So3Matrix) -> f64 {
    a.matrix().dot(b.matrix())
}

/// Matrix commutator `[A, B] = AB - BA`.
pub fn lie_bracket(a: &So3Matrix, b: &So3Matrix) -> So3Matrix {
    let (a, b) = (a.matrix(), b.matrix());
    So3Matrix::project(&(a * b - b * a))
}

/// Coordinates `c_i = <A, E_i>` in the canonical basis.
pub fn basis_coords(a: &So3Matrix) -> [f64; 3] {
    let e = canonical_basis();
    [frobenius_inner(a, &e[0]), frobenius_inner(a, &e[1]), frobenius_inner(a, &e[2])]
}

/// Inverse of [`basis_coords`]: `A = 1/2 sum_i c_i E_i`.
pub fn basis_reconstruct(c: &[f64; 3]) -> So3Matrix {
    hat(&Vector3::new(0.5 * c[0], 0.5 * c[1], 0.5 * c[2]))
}

/// Right Jacobian of the exponential: `exp(w + d) ~ exp(w) exp(J_r(w) d)`.
pub fn right_jacobian(w: &RotationVector) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let k = hat(w);
    let k = k.matrix();
    let (a, b) = if theta < SMALL_ANGLE {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        ((1.0 - theta.cos()) / theta2, (theta - theta.sin()) / (theta2 * theta))
    };
    Matrix3::identity() - k * a + k * k * b
}

/// Inverse left Jacobian: `log(exp(d) exp(w)) ~ w + J_l^{-1}(w) d`.
pub fn left_jacobian_inverse(w: &RotationVector) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let k = hat(w);
    let k = k.matrix();
    let c = if theta < 1e-3 {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        1.0 / theta2 - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    };
    Matrix3::identity() - k * 0.5 + k * k * c
}
