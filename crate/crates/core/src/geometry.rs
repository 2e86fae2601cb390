//! Rotation parameterization, pinhole camera and decoupled translation.
//!
//! Lengths are millimetres, image coordinates are pixels. Pixel centers sit
//! at integer coordinates, so the principal point `(cx, cy)` of a camera
//! looking straight at a point is exactly where that point lands.
//!
//! A network predicts rotation as the first two columns of the rotation
//! matrix ([`Rot6D`], column-major) and translation as a projected 2D center
//! plus depth. [`rot6d_to_matrix`] and [`recover_translation`] turn those
//! outputs back into a [`Pose`].

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Gram–Schmidt residual below which a 6D rotation is rejected.
pub const DEGENERACY_EPS: f64 = 1e-9;
/// Orthonormality / determinant tolerance for [`Pose`] rotations.
pub const ROTATION_TOL: f64 = 1e-6;
/// Depth at or below which a point counts as behind the camera (mm).
pub const MIN_DEPTH_MM: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate 6D rotation: Gram-Schmidt residual {0:e} below {DEGENERACY_EPS:e}")]
    DegenerateRotation(f64),
    #[error("matrix is not a rotation (orthonormality error {ortho:e}, det {det})")]
    InvalidRotation { ortho: f64, det: f64 },
    #[error("point is behind the camera (z = {0} mm)")]
    BehindCamera(f64),
    #[error("non-positive depth {0} mm")]
    NonPositiveDepth(f64),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Rigid object-to-camera transform: `x_cam = R x_obj + t`, `t` in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    /// Builds a pose after checking the rotation invariants.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        check_rotation(&rotation, ROTATION_TOL)?;
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("translation"));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose { rotation: self.rotation * other.rotation, translation: self.rotation * other.translation + self.translation }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose { rotation: rt, translation: -(rt * self.translation) }
    }

    /// Rotation as nine row-major values (BOP `cam_R_m2c` layout).
    pub fn rotation_row_major(&self) -> [f64; 9] {
        row_major(&self.rotation)
    }
}

pub fn row_major(m: &Matrix3<f64>) -> [f64; 9] {
    let mut out = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            out[r * 3 + c] = m[(r, c)];
        }
    }
    out
}

pub fn from_row_major(v: &[f64; 9]) -> Matrix3<f64> {
    Matrix3::from_row_slice(v)
}

/// Largest entry of `|RᵀR − I|`.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

/// Checks `‖RᵀR − I‖∞ ≤ tol` and `|det R − 1| ≤ tol`.
pub fn check_rotation(r: &Matrix3<f64>, tol: f64) -> Result<(), GeometryError> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(GeometryError::NonFinite("rotation"));
    }
    let ortho = orthonormality_error(r);
    let det = r.determinant();
    if ortho > tol || (det - 1.0).abs() > tol {
        return Err(GeometryError::InvalidRotation { ortho, det });
    }
    Ok(())
}

/// First two columns of a rotation matrix, `[col1, col2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rot6D(pub [f64; 6]);

impl Rot6D {
    pub fn identity() -> Self {
        Rot6D([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
    }

    pub fn col1(&self) -> Vector3<f64> {
        Vector3::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn col2(&self) -> Vector3<f64> {
        Vector3::new(self.0[3], self.0[4], self.0[5])
    }

    pub fn from_columns(c1: &Vector3<f64>, c2: &Vector3<f64>) -> Self {
        Rot6D([c1.x, c1.y, c1.z, c2.x, c2.y, c2.z])
    }
}

/// Gram–Schmidt reconstruction of a rotation from its 6D representation.
pub fn rot6d_to_matrix(r: &Rot6D) -> Result<Matrix3<f64>, GeometryError> {
    if !r.0.iter().all(|v| v.is_finite()) {
        return Err(GeometryError::NonFinite("rot6d"));
    }
    let a1 = r.col1();
    let a2 = r.col2();
    let n1 = a1.norm();
    if n1 < DEGENERACY_EPS {
        return Err(GeometryError::DegenerateRotation(n1));
    }
    let e1 = a1 / n1;
    let residual = a2 - e1 * e1.dot(&a2);
    let n2 = residual.norm();
    if n2 < DEGENERACY_EPS {
        return Err(GeometryError::DegenerateRotation(n2));
    }
    let e2 = residual / n2;
    let e3 = e1.cross(&e2);
    Ok(Matrix3::from_columns(&[e1, e2, e3]))
}

pub fn matrix_to_rot6d(r: &Matrix3<f64>) -> Result<Rot6D, GeometryError> {
    check_rotation(r, ROTATION_TOL)?;
    Ok(Rot6D::from_columns(&r.column(0).into_owned(), &r.column(1).into_owned()))
}

/// Rotation by `angle` radians about the camera optical axis.
pub fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn rot_x(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

/// Rotation of `angle` radians about a unit `axis` (Rodrigues).
pub fn axis_angle(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let k = axis.normalize();
    let kx = k.cross_matrix();
    Matrix3::identity() + kx * angle.sin() + kx * kx * (1.0 - angle.cos())
}

/// Uniformly distributed rotation (Shoemake's subgroup algorithm).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Matrix3<f64> {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let u3: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let (w, x, y, z) = (a * u2.sin(), a * u2.cos(), b * u3.sin(), b * u3.cos());
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - z * w),
        2.0 * (x * z + y * w),
        2.0 * (x * y + z * w),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - x * w),
        2.0 * (x * z - y * w),
        2.0 * (y * z + x * w),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// World-to-camera pose of a camera at `eye` looking at `target`, in the
/// x-right / y-down / z-forward convention with world `+z` as up. When the
/// view direction is vertical, world `+y` serves as the up reference.
pub fn look_at_pose(eye: &Vector3<f64>, target: &Vector3<f64>) -> Pose {
    let forward = (target - eye).normalize();
    let mut right = forward.cross(&Vector3::z());
    if right.norm() < DEGENERACY_EPS {
        right = forward.cross(&Vector3::y());
    }
    let right = right.normalize();
    let down = forward.cross(&right);
    let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    Pose { rotation, translation: -(rotation * eye) }
}

/// Pinhole intrinsics without distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx.is_finite() && self.fy.is_finite() && self.cx.is_finite() && self.cy.is_finite()) {
            return Err(GeometryError::NonFinite("intrinsics"));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidIntrinsics("image size must be at least 1x1".into()));
        }
        Ok(())
    }

    pub fn principal_point(&self) -> Vector2<f64> {
        Vector2::new(self.cx, self.cy)
    }

    /// Row-major 3×3 `K` (BOP `cam_K`).
    pub fn k_row_major(&self) -> [f64; 9] {
        [self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0]
    }

    /// Whether an image coordinate lies on the sensor, pixel centers `0..w-1`.
    pub fn contains(&self, uv: &Vector2<f64>) -> bool {
        uv.x >= -0.5 && uv.y >= -0.5 && uv.x < self.width as f64 - 0.5 && uv.y < self.height as f64 - 0.5
    }
}

pub fn project(p: &Vector3<f64>, k: &CameraIntrinsics) -> Result<Vector2<f64>, GeometryError> {
    if p.z <= MIN_DEPTH_MM {
        return Err(GeometryError::BehindCamera(p.z));
    }
    Ok(Vector2::new(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy))
}

/// Translation from a projected center and a depth; inverse of [`project`].
pub fn recover_translation(center: &Vector2<f64>, tz: f64, k: &CameraIntrinsics) -> Result<Vector3<f64>, GeometryError> {
    if !(tz > 0.0) {
        return Err(GeometryError::NonPositiveDepth(tz));
    }
    Ok(Vector3::new((center.x - k.cx) * tz / k.fx, (center.y - k.cy) * tz / k.fy, tz))
}
