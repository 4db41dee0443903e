//! Continuous 6D rotation encoding and helpers on rotation matrices.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

const DEGENERATE_EPS: f64 = 1e-12;
const ROTATION_CHECK_EPS: f64 = 1e-6;

/// Two column directions that Gram–Schmidt maps onto SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rot6D {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
}

impl Rot6D {
    pub fn new(a: Vector3<f64>, b: Vector3<f64>) -> Self {
        Self { a, b }
    }

    pub fn identity() -> Self {
        Self::new(Vector3::x(), Vector3::y())
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(Vector3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5]))
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.a.x, self.a.y, self.a.z, self.b.x, self.b.y, self.b.z]
    }

    pub fn to_matrix(&self) -> Result<Matrix3<f64>> {
        rot6d_to_matrix(self)
    }

    /// Re-expresses the encoding as the first two columns of its own matrix.
    pub fn normalized(&self) -> Result<Self> {
        Ok(matrix_to_rot6d_unchecked(&self.to_matrix()?))
    }

    pub fn is_valid(&self) -> bool {
        self.to_matrix().is_ok()
    }
}

pub fn rot6d_to_matrix(r: &Rot6D) -> Result<Matrix3<f64>> {
    let na = r.a.norm();
    if !na.is_finite() || na < DEGENERATE_EPS {
        return Err(Error::DegenerateRotation("first column has zero length"));
    }
    let c1 = r.a / na;
    let ortho = r.b - c1 * r.b.dot(&c1);
    let no = ortho.norm();
    if !no.is_finite() || no < DEGENERATE_EPS {
        return Err(Error::DegenerateRotation("second column is parallel to the first"));
    }
    let c2 = ortho / no;
    let c3 = c1.cross(&c2);
    Ok(Matrix3::from_columns(&[c1, c2, c3]))
}

/// Orthonormality plus determinant error of a candidate rotation.
pub fn rotation_error(m: &Matrix3<f64>) -> f64 {
    let ortho = (m.transpose() * m - Matrix3::identity()).abs().max();
    ortho.max((m.determinant() - 1.0).abs())
}

pub fn matrix_to_rot6d(m: &Matrix3<f64>) -> Result<Rot6D> {
    let err = rotation_error(m);
    if !err.is_finite() || err > ROTATION_CHECK_EPS {
        return Err(Error::InvalidRotation(err));
    }
    Ok(matrix_to_rot6d_unchecked(m))
}

pub(crate) fn matrix_to_rot6d_unchecked(m: &Matrix3<f64>) -> Rot6D {
    Rot6D::new(m.column(0).into_owned(), m.column(1).into_owned())
}

pub fn axis_angle(axis: Vector3<f64>, angle: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).into_inner()
}

/// Minimal angle (radians) of the relative rotation `aᵀ b`.
pub fn geodesic_angle(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let r = a.transpose() * b;
    let cos2 = r.trace() - 1.0;
    let sin2 = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm();
    sin2.atan2(cos2)
}

/// Geodesic interpolation between two rotation matrices, `t` in [0, 1].
pub fn slerp(a: &Matrix3<f64>, b: &Matrix3<f64>, t: f64) -> Matrix3<f64> {
    let qa = UnitQuaternion::from_matrix(a);
    let qb = UnitQuaternion::from_matrix(b);
    // `slerp` falls back to nlerp-like behaviour only for antipodal inputs.
    let q = qa.try_slerp(&qb, t, 1e-12).unwrap_or_else(|| qa.nlerp(&qb, t));
    q.to_rotation_matrix().into_inner()
}

/// Rotation taking unit direction `from` onto unit direction `to` about their common normal.
pub fn rotation_between(from: &Vector3<f64>, to: &Vector3<f64>) -> Option<Matrix3<f64>> {
    Rotation3::rotation_between(from, to).map(|r| r.into_inner())
}
