//! Rigid-body transforms on SE(3).
//!
//! Rotations are stored as 3x3 matrices so that the exponential and
//! logarithm stay in their direct Rodrigues form. Quaternions appear only
//! at the JSON boundary (`{"q": [w, x, y, z], "t": [x, y, z]}`).
//!
//! Twists are ordered `[angular, linear]` and use the right-trivialized
//! convention `T = exp(xi)`, with `T(s) = T0 * exp(s * xi)` a screw motion
//! whose body-frame velocity is constant.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Below this angle the Rodrigues coefficients switch to Taylor series.
const SMALL_ANGLE: f64 = 1e-6;
/// Below this angle the third-order coefficients, which cancel catastrophically,
/// use a three-term series (truncation error below 1e-15).
const SERIES_ANGLE: f64 = 1e-2;
/// Distance from pi at which the logarithm is reported as ambiguous.
const PI_BRANCH_GUARD: f64 = 1e-9;

/// A direction in 3-D space with unit norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitVec3(Vector3<f64>);

impl UnitVec3 {
    /// Normalizes `(x, y, z)`. Returns `None` for a zero or non-finite vector.
    pub fn new(x: f64, y: f64, z: f64) -> Option<Self> {
        Self::from_vector(Vector3::new(x, y, z))
    }

    pub fn from_vector(v: Vector3<f64>) -> Option<Self> {
        let n = v.norm();
        if n > 0.0 && n.is_finite() {
            Some(UnitVec3(v / n))
        } else {
            None
        }
    }

    /// Wraps a vector that is already unit length (re-normalized once more).
    pub(crate) fn renormalized(v: Vector3<f64>) -> Self {
        UnitVec3(v / v.norm())
    }

    pub fn x_axis() -> Self {
        UnitVec3(Vector3::x())
    }

    pub fn y_axis() -> Self {
        UnitVec3(Vector3::y())
    }

    pub fn z_axis() -> Self {
        UnitVec3(Vector3::z())
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }

    pub fn y(&self) -> f64 {
        self.0.y
    }

    pub fn z(&self) -> f64 {
        self.0.z
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Vector3<f64> {
        self.0
    }

    pub fn dot(&self, other: &UnitVec3) -> f64 {
        self.0.dot(&other.0)
    }

    /// Angle from the +z axis, in radians.
    pub fn polar_angle(&self) -> f64 {
        self.0.xy().norm().atan2(self.0.z)
    }

    /// Azimuth about the +z axis measured from +x, in `(-pi, pi]`.
    pub fn azimuth(&self) -> f64 {
        self.0.y.atan2(self.0.x)
    }

    /// Rotates the direction by a rotation matrix.
    pub fn rotated(&self, rotation: &Matrix3<f64>) -> Self {
        UnitVec3::renormalized(rotation * self.0)
    }
}

impl std::ops::Neg for UnitVec3 {
    type Output = UnitVec3;

    fn neg(self) -> UnitVec3 {
        UnitVec3(-self.0)
    }
}

/// Lie-algebra coordinates of a rigid transform.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Twist {
    /// Rotation vector, radians.
    pub angular: Vector3<f64>,
    /// Translational part, meters.
    pub linear: Vector3<f64>,
}

impl Twist {
    pub fn new(angular: Vector3<f64>, linear: Vector3<f64>) -> Self {
        Twist { angular, linear }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// `[angular; linear]` as a 6-vector.
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.angular.x,
            self.angular.y,
            self.angular.z,
            self.linear.x,
            self.linear.y,
            self.linear.z,
        )
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Twist {
            angular: Vector3::new(v[0], v[1], v[2]),
            linear: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Twist {
            angular: self.angular * s,
            linear: self.linear * s,
        }
    }
}

/// A rigid transform: `x -> rotation * x + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose, checking that `rotation` is orthonormal with det +1.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        let det = rotation.determinant();
        if !(ortho < 1e-10 && (det - 1.0).abs() < 1e-10) || !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::config(format!(
                "rotation is not a proper orthonormal matrix (orthogonality residual {ortho:e}, det {det})"
            )));
        }
        Ok(Pose {
            rotation,
            translation,
        })
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation about `axis_angle / |axis_angle|` by `|axis_angle|`, no translation.
    pub fn from_rotation_vector(axis_angle: Vector3<f64>) -> Self {
        Pose {
            rotation: so3_exp(&axis_angle),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation: *q.to_rotation_matrix().matrix(),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation))
    }

    /// Rotation angle in `[0, pi]`.
    pub fn rotation_angle(&self) -> f64 {
        let w = vee_skew_part(&self.rotation);
        let cos = (self.rotation.trace() - 1.0) * 0.5;
        w.norm().atan2(cos)
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// `self * other * self^-1`.
    pub fn conjugate(&self, other: &Pose) -> Pose {
        self.compose(other).compose(&self.inverse())
    }

    /// Builds a pose from a nearly orthonormal rotation, projecting it onto SO(3).
    pub(crate) fn new_projected(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Pose {
        Pose {
            rotation,
            translation,
        }
        .orthonormalized()
    }

    /// Projects the rotation back onto SO(3); used after long products.
    pub fn orthonormalized(&self) -> Pose {
        let svd = self.rotation.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * v_t;
        }
        Pose {
            rotation: r,
            translation: self.translation,
        }
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl Mul<&Pose> for &Pose {
    type Output = Pose;

    fn mul(self, rhs: &Pose) -> Pose {
        self.compose(rhs)
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = self.quaternion();
        let t = self.translation;
        write!(
            f,
            "Pose(q: [{:.6}, {:.6}, {:.6}, {:.6}], t: [{:.6}, {:.6}, {:.6}])",
            q.w, q.i, q.j, q.k, t.x, t.y, t.z
        )
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseJson {
    q: [f64; 4],
    t: [f64; 3],
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let q = self.quaternion();
        // Canonical hemisphere keeps the output byte-stable.
        let s = if q.w < 0.0 { -1.0 } else { 1.0 };
        PoseJson {
            q: [s * q.w, s * q.i, s * q.j, s * q.k],
            t: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = PoseJson::deserialize(deserializer)?;
        let [w, x, y, z] = raw.q;
        let q = nalgebra::Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if !(norm > 1e-12 && norm.is_finite()) {
            return Err(serde::de::Error::custom("pose quaternion must be non-zero"));
        }
        if raw.t.iter().any(|v| !v.is_finite()) {
            return Err(serde::de::Error::custom("pose translation must be finite"));
        }
        Ok(Pose::from_quaternion(
            &UnitQuaternion::from_quaternion(q),
            Vector3::from(raw.t),
        ))
    }
}

/// Skew-symmetric matrix of `v`, so that `hat(v) * u = v x u`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// `vee(M - M^T) / 2`, which equals `sin(theta) * axis` for a rotation.
fn vee_skew_part(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]) * 0.5
}

/// Rodrigues coefficients `(sin t / t, (1 - cos t) / t^2, (t - sin t) / t^3)`.
fn rodrigues_coefficients(theta: f64) -> (f64, f64, f64) {
    let t2 = theta * theta;
    let c = if theta < SERIES_ANGLE {
        1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
    } else {
        (theta - theta.sin()) / (t2 * theta)
    };
    if theta < SMALL_ANGLE {
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0, c)
    } else {
        let half = (0.5 * theta).sin();
        (theta.sin() / theta, 2.0 * half * half / t2, c)
    }
}

/// Exponential map of SO(3).
pub fn so3_exp(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta = omega.norm();
    let (a, b, _) = rodrigues_coefficients(theta);
    let w = hat(omega);
    Matrix3::identity() + w * a + w * w * b
}

/// Principal logarithm of SO(3).
pub fn so3_log(r: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let s = vee_skew_part(r);
    let sin = s.norm();
    let cos = (r.trace() - 1.0) * 0.5;
    let theta = sin.atan2(cos);
    if PI - theta < PI_BRANCH_GUARD {
        return Err(Error::BranchAmbiguity { angle: theta });
    }
    if theta < SMALL_ANGLE {
        return Ok(s * (1.0 + theta * theta / 6.0));
    }
    if cos > -0.5 {
        return Ok(s * (theta / sin));
    }
    // Near pi the skew part vanishes; recover the axis from the symmetric part
    // `(R + R^T)/2 - cos I = (1 - cos) n n^T`.
    let sym = (r + r.transpose()) * 0.5 - Matrix3::identity() * cos;
    let k = (0..3)
        .max_by(|&i, &j| sym[(i, i)].total_cmp(&sym[(j, j)]))
        .unwrap_or(0);
    let mut axis: Vector3<f64> = sym.column(k).into();
    axis /= axis.norm();
    if axis.dot(&s) < 0.0 {
        axis = -axis;
    }
    Ok(axis * theta)
}

/// Exponential map `se(3) -> SE(3)`.
pub fn exp_se3(t: &Twist) -> Pose {
    let theta = t.angular.norm();
    let (a, b, c) = rodrigues_coefficients(theta);
    let w = hat(&t.angular);
    let w2 = w * w;
    let rotation = Matrix3::identity() + w * a + w2 * b;
    let v = Matrix3::identity() + w * b + w2 * c;
    Pose {
        rotation,
        translation: v * t.linear,
    }
}

/// Principal logarithm `SE(3) -> se(3)`.
///
/// Fails with [`Error::BranchAmbiguity`] when the rotation angle is pi.
pub fn log_se3(p: &Pose) -> Result<Twist> {
    let omega = so3_log(&p.rotation)?;
    let theta = omega.norm();
    let w = hat(&omega);
    let d = if theta < SERIES_ANGLE {
        let t2 = theta * theta;
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    } else {
        let (s, c) = theta.sin_cos();
        (1.0 - theta * s / (2.0 * (1.0 - c))) / (theta * theta)
    };
    let v_inv = Matrix3::identity() - w * 0.5 + w * w * d;
    Ok(Twist {
        angular: omega,
        linear: v_inv * p.translation,
    })
}
