//! Rigid-body transforms and pose-error metrics.
//!
//! All lengths are millimetres and all reported angles are degrees. Rotations
//! are stored as unit quaternions with a canonical non-negative scalar part.

use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::Error;

/// A point or direction in 3D, millimetres.
pub type Vec3 = Vector3<f64>;

/// Tolerance on quaternion norm accepted when reading external data.
pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-6;

/// A rotation followed by a translation.
///
/// Applying the transform to a point computes `rotation * p + translation`.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransformRepr", into = "TransformRepr")]
pub struct RigidTransform {
    rotation: UnitQuaternion<f64>,
    translation: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self {
            rotation: canonical(rotation),
            translation,
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    pub fn from_rotation(rotation: UnitQuaternion<f64>) -> Self {
        Self::new(rotation, Vec3::zeros())
    }

    /// Rotation of `angle_deg` about `axis` (need not be normalised), then `translation`.
    pub fn from_axis_angle_deg(axis: Vec3, angle_deg: f64, translation: Vec3) -> Self {
        let rotation = match Unit::try_new(axis, 1e-12) {
            Some(axis) => UnitQuaternion::from_axis_angle(&axis, angle_deg.to_radians()),
            None => UnitQuaternion::identity(),
        };
        Self::new(rotation, translation)
    }

    /// Builds a transform from a rotation vector (axis * angle, radians).
    pub fn from_rotation_vector(rotation_vector: Vec3, translation: Vec3) -> Self {
        Self::new(UnitQuaternion::from_scaled_axis(rotation_vector), translation)
    }

    /// Builds a transform from a 3x3 rotation matrix. The matrix is projected
    /// onto the nearest rotation first, so slightly non-orthonormal input is fine.
    pub fn from_matrix(rotation: &Matrix3<f64>, translation: Vec3) -> Self {
        let projected = nalgebra::Rotation3::from_matrix(rotation);
        Self::new(UnitQuaternion::from_rotation_matrix(&projected), translation)
    }

    /// Builds a transform from a `[w, x, y, z]` quaternion, rejecting
    /// quaternions whose norm is off by more than [`QUATERNION_NORM_TOLERANCE`].
    pub fn from_wxyz(wxyz: [f64; 4], translation: Vec3) -> Result<Self, Error> {
        let [w, x, y, z] = wxyz;
        let q = Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
            return Err(Error::NonUnitQuaternion(norm));
        }
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("translation"));
        }
        // Leave already-unit input bit-for-bit intact so serialisation round trips.
        let unit = if (norm - 1.0).abs() <= 4.0 * f64::EPSILON {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::new_normalize(q)
        };
        Ok(Self::new(unit, translation))
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    /// Quaternion components as `[w, x, y, z]`, with `w >= 0`.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        *self.rotation.to_rotation_matrix().matrix()
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn inverse(&self) -> Self {
        invert(self)
    }

    /// Rotation angle of this transform, degrees in `[0, 180]`.
    pub fn angle_deg(&self) -> f64 {
        rotation_angle(&self.rotation).to_degrees()
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl fmt::Debug for RigidTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [w, x, y, z] = self.wxyz();
        let t = self.translation;
        write!(
            f,
            "RigidTransform {{ q: [{w:.9}, {x:.9}, {y:.9}, {z:.9}], t: [{:.6}, {:.6}, {:.6}] }}",
            t.x, t.y, t.z
        )
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        compose(&self, &rhs)
    }
}

impl Mul<&RigidTransform> for &RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: &RigidTransform) -> RigidTransform {
        compose(self, rhs)
    }
}

fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    // Renormalise to stop drift accumulating through long composition chains.
    let q = UnitQuaternion::new_normalize(*q.quaternion());
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

/// Geodesic angle of a rotation in radians, `[0, pi]`.
pub fn rotation_angle(q: &UnitQuaternion<f64>) -> f64 {
    let q = q.quaternion();
    2.0 * q.imag().norm().atan2(q.w.abs())
}

/// `a * b`: applies `b` first, then `a`.
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    RigidTransform::new(
        a.rotation * b.rotation,
        a.rotation * b.translation + a.translation,
    )
}

pub fn invert(t: &RigidTransform) -> RigidTransform {
    let inv = t.rotation.inverse();
    RigidTransform::new(inv, -(inv * t.translation))
}

/// Pose of `t_q` expressed in the frame of `t_p`: `t_p^-1 * t_q`.
pub fn relative_pose(t_p: &RigidTransform, t_q: &RigidTransform) -> RigidTransform {
    compose(&invert(t_p), t_q)
}

/// Translation and rotation discrepancy between two poses.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseError {
    pub translation_mm: f64,
    pub rotation_deg: f64,
}

impl PoseError {
    pub fn within(&self, translation_mm: f64, rotation_deg: f64) -> bool {
        self.translation_mm < translation_mm && self.rotation_deg < rotation_deg
    }
}

/// Euclidean distance between translations and geodesic angle between rotations.
pub fn pose_error(a: &RigidTransform, b: &RigidTransform) -> PoseError {
    let delta = a.rotation.inverse() * b.rotation;
    PoseError {
        translation_mm: (a.translation - b.translation).norm(),
        rotation_deg: rotation_angle(&delta).to_degrees(),
    }
}

#[derive(Serialize, Deserialize)]
struct TransformRepr {
    quaternion: [f64; 4],
    translation_mm: [f64; 3],
}

impl TryFrom<TransformRepr> for RigidTransform {
    type Error = Error;

    fn try_from(r: TransformRepr) -> Result<Self, Error> {
        RigidTransform::from_wxyz(r.quaternion, Vec3::from(r.translation_mm))
    }
}

impl From<RigidTransform> for TransformRepr {
    fn from(t: RigidTransform) -> Self {
        TransformRepr {
            quaternion: t.wxyz(),
            translation_mm: t.translation.into(),
        }
    }
}
