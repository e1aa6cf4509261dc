//! Primitives on SO(3) and the unit sphere S².
//!
//! The reduced attitude of the vehicle is the thrust axis `q = R e3`. The
//! attitude controller measures its distance to a commanded direction with
//! the error function `psi`, whose sphere differential `d1_psi` stays nonzero
//! all the way to the antipode. `transport` carries a tangent vector at the
//! commanded direction over to the tangent plane at the current direction so
//! the two velocities can be compared.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Default tolerance used by [`vee`] when checking skew-symmetry.
pub const TOL_SKEW: f64 = 1e-9;
/// Inputs with `q_d . q <= -1 + EPS_ANTIPODAL` are treated as antipodal.
pub const EPS_ANTIPODAL: f64 = 1e-9;
/// Allowed `|<base, value>|` for a vector to count as tangent.
pub const TOL_TANGENT: f64 = 1e-9;
/// Rodrigues coefficients switch to their series below this angle.
const EXP_SERIES_CUTOFF: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("not skew-symmetric (|S + S^T|_F = {0:e})")]
    NotSkewSymmetric(f64),
    #[error("error differential undefined at antipode (q_d.q = {0})")]
    Antipodal(f64),
    #[error("vector not in tangent space (|<base, v>| = {0:e})")]
    NotTangent(f64),
    #[error("cannot normalize a zero or non-finite vector")]
    Degenerate,
    #[error("matrix is not a rotation (orthonormality error {orth:e}, det {det})")]
    NotRotation { orth: f64, det: f64 },
}

/// Skew-symmetric matrix with `hat(v) * w == v.cross(w)`.
pub fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`] with the default skew tolerance.
pub fn vee(s: &Mat3) -> Result<Vec3, GeometryError> {
    vee_with_tol(s, TOL_SKEW)
}

pub fn vee_with_tol(s: &Mat3, tol: f64) -> Result<Vec3, GeometryError> {
    let asym = (s + s.transpose()).norm();
    if !(asym <= tol) {
        return Err(GeometryError::NotSkewSymmetric(asym));
    }
    Ok(Vec3::new(s[(2, 1)], s[(0, 2)], s[(1, 0)]))
}

/// Exponential map from a rotation vector (rad) to SO(3) via Rodrigues.
pub fn exp_so3(v: &Vec3) -> Mat3 {
    let theta2 = v.norm_squared();
    let theta = theta2.sqrt();
    let k = hat(v);
    let (a, b) = if theta < EXP_SERIES_CUTOFF {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Mat3::identity() + k * a + k * k * b
}

/// A direction on S². Construction renormalizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct UnitVector3(Vec3);

impl UnitVector3 {
    pub fn new(v: Vec3) -> Result<Self, GeometryError> {
        let n = v.norm();
        if !n.is_finite() || n == 0.0 {
            return Err(GeometryError::Degenerate);
        }
        Ok(Self(v / n))
    }

    pub fn e1() -> Self {
        Self(Vec3::x())
    }

    pub fn e2() -> Self {
        Self(Vec3::y())
    }

    pub fn e3() -> Self {
        Self(Vec3::z())
    }

    pub fn as_vec(&self) -> &Vec3 {
        &self.0
    }

    pub fn into_inner(self) -> Vec3 {
        self.0
    }

    pub fn neg(&self) -> Self {
        Self(-self.0)
    }

    /// Angle to another direction, in `[0, pi]`.
    pub fn angle_to(&self, other: &UnitVector3) -> f64 {
        // atan2 keeps precision near 0 and pi.
        self.0.cross(&other.0).norm().atan2(self.0.dot(&other.0))
    }

    /// Orthogonal projection onto the tangent plane at this point.
    pub fn project(&self, v: &Vec3) -> Vec3 {
        v - self.0 * self.0.dot(v)
    }
}

impl TryFrom<[f64; 3]> for UnitVector3 {
    type Error = GeometryError;
    fn try_from(a: [f64; 3]) -> Result<Self, Self::Error> {
        Self::new(Vec3::from(a))
    }
}

impl From<UnitVector3> for [f64; 3] {
    fn from(u: UnitVector3) -> Self {
        u.0.into()
    }
}

/// A vector in the tangent plane `T_base S²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentVector {
    base: UnitVector3,
    value: Vec3,
}

impl TangentVector {
    pub fn new(base: UnitVector3, value: Vec3) -> Result<Self, GeometryError> {
        let off = base.as_vec().dot(&value).abs();
        // Relative slack for large vectors; absolute for small ones.
        if !(off <= TOL_TANGENT * value.norm().max(1.0)) {
            return Err(GeometryError::NotTangent(off));
        }
        Ok(Self { base, value })
    }

    /// Project an arbitrary vector onto the tangent plane at `base`.
    pub fn projected(base: UnitVector3, v: &Vec3) -> Self {
        Self {
            base,
            value: base.project(v),
        }
    }

    pub fn zero(base: UnitVector3) -> Self {
        Self {
            base,
            value: Vec3::zeros(),
        }
    }

    pub fn base(&self) -> &UnitVector3 {
        &self.base
    }

    pub fn value(&self) -> &Vec3 {
        &self.value
    }

    pub fn norm(&self) -> f64 {
        self.value.norm()
    }
}

/// An element of SO(3). Columns are the body axes in the inertial frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
pub struct RotationMatrix(Mat3);

impl RotationMatrix {
    pub const ORTHONORMAL_TOL: f64 = 1e-9;

    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    pub fn new(m: Mat3) -> Result<Self, GeometryError> {
        let orth = orthonormality_error(&m);
        let det = m.determinant();
        if !(orth <= Self::ORTHONORMAL_TOL) || !((det - 1.0).abs() <= Self::ORTHONORMAL_TOL) {
            return Err(GeometryError::NotRotation { orth, det });
        }
        Ok(Self(m))
    }

    /// Wrap without checking; for matrices that are rotations by construction.
    pub fn from_matrix_unchecked(m: Mat3) -> Self {
        Self(m)
    }

    pub fn exp(v: &Vec3) -> Self {
        Self(exp_so3(v))
    }

    /// Rotation by `angle` about the inertial x axis.
    pub fn about_x(angle: f64) -> Self {
        Self::exp(&(Vec3::x() * angle))
    }

    pub fn about_y(angle: f64) -> Self {
        Self::exp(&(Vec3::y() * angle))
    }

    pub fn about_z(angle: f64) -> Self {
        Self::exp(&(Vec3::z() * angle))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    /// Body axis `i` (0-based) expressed in the inertial frame.
    pub fn axis(&self, i: usize) -> Vec3 {
        self.0.column(i).into_owned()
    }

    /// The reduced attitude `R e3`.
    pub fn reduced_attitude(&self) -> UnitVector3 {
        UnitVector3(self.axis(2))
    }

    /// `self * exp(hat(v))`, i.e. a body-frame increment.
    pub fn right_increment(&self, v: &Vec3) -> Self {
        Self(self.0 * exp_so3(v))
    }

    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.0)
    }

    /// Nearest rotation in the Frobenius sense (polar factor).
    pub fn reorthonormalized(&self) -> Self {
        let svd = self.0.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut r = u * vt;
        if r.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * vt;
        }
        Self(r)
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }
}

impl std::ops::Mul for RotationMatrix {
    type Output = RotationMatrix;
    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

impl TryFrom<[[f64; 3]; 3]> for RotationMatrix {
    type Error = GeometryError;
    fn try_from(rows: [[f64; 3]; 3]) -> Result<Self, Self::Error> {
        let m = Mat3::from_fn(|i, j| rows[i][j]);
        // Hand-typed matrices carry a few digits; snap them onto SO(3)
        // when they are close enough to be meant as rotations.
        let orth = orthonormality_error(&m);
        if orth < 1e-3 && m.determinant() > 0.0 {
            Ok(RotationMatrix(m).reorthonormalized())
        } else {
            RotationMatrix::new(m)
        }
    }
}

impl From<RotationMatrix> for [[f64; 3]; 3] {
    fn from(r: RotationMatrix) -> Self {
        let m = r.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }
}

/// `|R^T R - I|_F`.
/// Serde adapter writing a matrix as three rows.
pub mod mat3_rows {
    use super::Mat3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Mat3, s: S) -> Result<S::Ok, S::Error> {
        let rows: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]));
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat3, D::Error> {
        let rows = <[[f64; 3]; 3]>::deserialize(d)?;
        Ok(Mat3::from_fn(|i, j| rows[i][j]))
    }
}

pub fn orthonormality_error(m: &Mat3) -> f64 {
    (m.transpose() * m - Mat3::identity()).norm()
}

/// Which reduced-attitude error function the controller uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorFunction {
    /// `2 - sqrt(2) sqrt(1 + q_d.q)`; differential nonvanishing near the antipode.
    #[default]
    Paper,
    /// `1 - q_d.q`; smooth everywhere but carries no stability guarantee here.
    Mollified,
}

impl ErrorFunction {
    pub fn psi(self, q: &UnitVector3, q_d: &UnitVector3) -> f64 {
        match self {
            ErrorFunction::Paper => psi(q, q_d),
            ErrorFunction::Mollified => 1.0 - q_d.as_vec().dot(q.as_vec()),
        }
    }

    pub fn d1(self, q: &UnitVector3, q_d: &UnitVector3) -> Result<TangentVector, GeometryError> {
        match self {
            ErrorFunction::Paper => d1_psi(q, q_d),
            ErrorFunction::Mollified => {
                let (q, qd) = (q.as_vec(), q_d.as_vec());
                Ok(TangentVector::projected(
                    UnitVector3(*q),
                    &q.cross(&q.cross(qd)),
                ))
            }
        }
    }
}

/// Reduced attitude error `2 - (2/sqrt 2) sqrt(1 + q_d.q)`, in `[0, 2]`.
pub fn psi(q: &UnitVector3, q_d: &UnitVector3) -> f64 {
    // For unit vectors sqrt(2) sqrt(1 + q_d.q) = |q + q_d|, which avoids the
    // cancellation in 1 + q_d.q near the antipode.
    (2.0 - (q.as_vec() + q_d.as_vec()).norm()).clamp(0.0, 2.0)
}

fn antipodal_denominator(q: &UnitVector3, q_d: &UnitVector3) -> Result<f64, GeometryError> {
    let c = q_d.as_vec().dot(q.as_vec());
    if !(c > -1.0 + EPS_ANTIPODAL) {
        return Err(GeometryError::Antipodal(c));
    }
    Ok((q.as_vec() + q_d.as_vec()).norm())
}

/// Differential of [`psi`] in its first argument, a tangent vector at `q`.
pub fn d1_psi(q: &UnitVector3, q_d: &UnitVector3) -> Result<TangentVector, GeometryError> {
    let den = antipodal_denominator(q, q_d)?;
    let (a, b) = (q.as_vec(), q_d.as_vec());
    Ok(TangentVector::projected(*q, &(a.cross(&a.cross(b)) / den)))
}

/// Differential of [`psi`] in its second argument, a tangent vector at `q_d`.
pub fn d2_psi(q: &UnitVector3, q_d: &UnitVector3) -> Result<TangentVector, GeometryError> {
    let den = antipodal_denominator(q, q_d)?;
    let (a, b) = (q.as_vec(), q_d.as_vec());
    Ok(TangentVector::projected(*q_d, &(b.cross(&b.cross(a)) / den)))
}

/// Transport `v in T_{q_d}S²` to `T_q S²` as `(q_d x v) x q`.
pub fn transport(
    q: &UnitVector3,
    q_d: &UnitVector3,
    v: &TangentVector,
) -> Result<TangentVector, GeometryError> {
    let off = q_d.as_vec().dot(v.value()).abs();
    if !(off <= TOL_TANGENT * v.norm().max(1.0)) {
        return Err(GeometryError::NotTangent(off));
    }
    let out = q_d.as_vec().cross(v.value()).cross(q.as_vec());
    Ok(TangentVector::projected(*q, &out))
}
