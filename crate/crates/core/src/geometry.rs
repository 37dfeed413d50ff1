//! Rigid poses, the linearized pose update, and the pinhole camera.
//!
//! Conventions used throughout the crate:
//!
//! * Camera frame: `+x` right, `+y` down, `+z` forward (the camera looks down `+z`).
//! * Pixel `(col, row)` samples the continuous image position `(col, row)`; the
//!   image origin is the top-left pixel center.
//! * A pose maps object coordinates into camera coordinates: `X_cam = R * X_obj + t`.

use nalgebra::{Matrix2x3, Matrix3, SMatrix, Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix3x6 = SMatrix<f64, 3, 6>;

/// Tolerance on `||R^T R - I||_F` for a matrix to count as a rotation.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

/// Minimum column norm accepted by [`orthonormalize`].
const MIN_COLUMN_NORM: f64 = 1e-9;

/// Rigid transform from object to camera frame. Translation is in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RigidPose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("pose contains non-finite entries"));
        }
        let err = orthonormality_error(&rotation);
        if err > ROTATION_TOLERANCE || rotation.determinant() <= 0.0 {
            return Err(Error::invalid(format!(
                "rotation is not a proper rotation (||R^T R - I|| = {err:e}, det = {})",
                rotation.determinant()
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    /// `self * other` (apply `other` first).
    pub fn compose(&self, other: &RigidPose) -> RigidPose {
        RigidPose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidPose {
        let rt = self.rotation.transpose();
        RigidPose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Row-major rotation followed by translation.
    pub fn to_array(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t[0],
            t[1],
            t[2],
        ]
    }

    pub fn from_array(v: &[f64]) -> Result<Self> {
        if v.len() != 12 {
            return Err(Error::invalid(format!(
                "pose needs 12 numbers, got {}",
                v.len()
            )));
        }
        let rotation = Matrix3::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]);
        Self::new(rotation, Vector3::new(v[9], v[10], v[11]))
    }

    /// Angle in radians of the relative rotation between two poses.
    pub fn rotation_angle_to(&self, other: &RigidPose) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

impl TryFrom<Vec<f64>> for RigidPose {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        RigidPose::from_array(&v)
    }
}

impl From<RigidPose> for Vec<f64> {
    fn from(p: RigidPose) -> Self {
        p.to_array().to_vec()
    }
}

/// Frobenius norm of `R^T R - I`.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).norm()
}

/// First-order pose increment: small rotation angles `(alpha, beta, gamma)` in
/// radians about the object x, y, z axes and translation `(a, b, c)` in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseDelta {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl PoseDelta {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            alpha: v[0],
            beta: v[1],
            gamma: v[2],
            a: v[3],
            b: v[4],
            c: v[5],
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.alpha, self.beta, self.gamma, self.a, self.b, self.c)
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }

    pub fn rotation_part(&self) -> Vector3<f64> {
        Vector3::new(self.alpha, self.beta, self.gamma)
    }

    pub fn translation_part(&self) -> Vector3<f64> {
        Vector3::new(self.a, self.b, self.c)
    }

    /// The 4x4 linearized transform as its rotation block `I + [w]x` and
    /// translation column.
    pub fn linearized(&self) -> (Matrix3<f64>, Vector3<f64>) {
        (
            Matrix3::identity() + skew(&self.rotation_part()),
            self.translation_part(),
        )
    }
}

pub fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0)
}

/// Euclidean norm that does not overflow for entries near `f64::MAX`.
fn scaled_norm(v: &Vector3<f64>) -> f64 {
    let s = v.amax();
    if s == 0.0 {
        0.0
    } else {
        s * (v / s).norm()
    }
}

/// Gram-Schmidt on the columns (x axis first) followed by a determinant sign fix.
pub fn orthonormalize(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix contains non-finite entries"));
    }
    let c0 = m.column(0).into_owned();
    let n0 = scaled_norm(&c0);
    if n0 < MIN_COLUMN_NORM {
        return Err(Error::DegenerateMatrix {
            column: 0,
            norm: n0,
        });
    }
    let e0 = c0 / n0;

    // Each projection runs twice so that nearly parallel columns stay orthogonal.
    let mut c1 = m.column(1).into_owned();
    for _ in 0..2 {
        c1 -= e0 * e0.dot(&c1);
    }
    let n1 = scaled_norm(&c1);
    if n1 < MIN_COLUMN_NORM {
        return Err(Error::DegenerateMatrix {
            column: 1,
            norm: n1,
        });
    }
    let e1 = c1 / n1;

    let mut c2 = m.column(2).into_owned();
    for _ in 0..2 {
        c2 -= e0 * e0.dot(&c2);
        c2 -= e1 * e1.dot(&c2);
    }
    let n2 = scaled_norm(&c2);
    if n2 < MIN_COLUMN_NORM {
        return Err(Error::DegenerateMatrix {
            column: 2,
            norm: n2,
        });
    }
    let mut e2 = c2 / n2;
    if e0.cross(&e1).dot(&e2) < 0.0 {
        e2 = -e2;
    }
    Ok(Matrix3::from_columns(&[e0, e1, e2]))
}

/// Applies a linearized increment in the object frame, `T0 * M(delta)`, and
/// re-orthonormalizes the rotation. A zero increment returns `base` bit for
/// bit, so a converged pose is not nudged by rounding in the re-orthonormalization.
pub fn pose_update(base: &RigidPose, delta: &PoseDelta) -> Result<RigidPose> {
    if !delta.is_finite() {
        return Err(Error::invalid("pose delta contains non-finite entries"));
    }
    if delta.to_vector().iter().all(|v| *v == 0.0) {
        return Ok(*base);
    }
    let (m_rot, m_trans) = delta.linearized();
    let rotation = orthonormalize(&(base.rotation * m_rot))?;
    let translation = base.translation + base.rotation * m_trans;
    RigidPose::new(rotation, translation)
}

/// Derivative of `T0 * M(delta) * x_obj` with respect to `delta` at zero.
/// Columns are ordered `(alpha, beta, gamma, a, b, c)`.
pub fn pose_jacobian(base: &RigidPose, x_obj: &Vector3<f64>) -> Matrix3x6 {
    let r = &base.rotation;
    let rot_block = r * (-skew(x_obj));
    let mut j = Matrix3x6::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot_block);
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(r);
    j
}

/// Pinhole camera without distortion. Focal lengths and principal point are in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
}

impl PinholeCamera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        near: f64,
        far: f64,
    ) -> Result<Self> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            near,
            far,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy, self.near, self.far]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::invalid("camera focal lengths must be finite and positive"));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(Error::invalid("camera needs 0 < near < far"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera image size must be at least 1x1"));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    fn check_depth(&self, z: f64) -> Result<()> {
        if z < self.near || !z.is_finite() {
            return Err(Error::BehindCamera { z, near: self.near });
        }
        Ok(())
    }

    pub fn project(&self, p: &Vector3<f64>) -> Result<Vector2<f64>> {
        self.check_depth(p[2])?;
        Ok(self.project_unchecked(p))
    }

    #[inline]
    pub(crate) fn project_unchecked(&self, p: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(
            self.fx * p[0] / p[2] + self.cx,
            self.fy * p[1] / p[2] + self.cy,
        )
    }

    /// Camera-frame point at camera depth `z` (not ray length) seen at `pixel`.
    #[inline]
    pub fn unproject(&self, pixel: &Vector2<f64>, z: f64) -> Vector3<f64> {
        Vector3::new(
            (pixel[0] - self.cx) / self.fx * z,
            (pixel[1] - self.cy) / self.fy * z,
            z,
        )
    }

    pub fn projection_jacobian(&self, p: &Vector3<f64>) -> Result<Matrix2x3<f64>> {
        self.check_depth(p[2])?;
        Ok(self.projection_jacobian_unchecked(p))
    }

    #[inline]
    pub(crate) fn projection_jacobian_unchecked(&self, p: &Vector3<f64>) -> Matrix2x3<f64> {
        let iz = 1.0 / p[2];
        let iz2 = iz * iz;
        Matrix2x3::new(
            self.fx * iz,
            0.0,
            -self.fx * p[0] * iz2,
            0.0,
            self.fy * iz,
            -self.fy * p[1] * iz2,
        )
    }
}
