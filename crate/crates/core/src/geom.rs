//! Geometry kernels: rotations, rigid placements, pinhole projection.
//!
//! Conventions used throughout the crate:
//!
//! - Camera poses map world coordinates into the camera frame
//!   (`p_c = R * p_w + t`), serialized as a row-major 3×3 matrix plus a
//!   translation.
//! - The camera frame is x right, y down, z forward. A pixel's integer
//!   coordinates address its center, so the principal point `(cx, cy)` is a
//!   continuous location in the same units.
//! - Everything is `f64` internally; file formats carry `f32` where noted.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 3D vector in meters, world or camera frame depending on context.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Orthonormality drift (Frobenius norm of `RᵀR - I`) tolerated without correction.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-9;

/// Largest drift that is still repaired by polar correction. Matrices further
/// from SO(3) than this are rejected.
pub const REPAIR_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum GeomError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid depth {0}: must be positive and finite")]
    InvalidDepth(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("matrix is not a rotation (orthonormality drift {drift:.3e}, det {det:.6})")]
    NotARotation { drift: f64, det: f64 },
}

fn is_finite(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}

/// A rotation in SO(3), stored as a 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Accepts a matrix within [`ORTHONORMAL_TOLERANCE`] unchanged, repairs
    /// one within [`REPAIR_TOLERANCE`] by projecting onto the nearest
    /// rotation, and rejects anything else.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeomError> {
        if !m.iter().all(|c| c.is_finite()) {
            return Err(GeomError::InvalidGeometry("non-finite rotation entry".into()));
        }
        let drift = orthonormality_drift(&m);
        let det = m.determinant();
        if drift <= ORTHONORMAL_TOLERANCE && (det - 1.0).abs() <= ORTHONORMAL_TOLERANCE {
            return Ok(Rotation(m));
        }
        if drift <= REPAIR_TOLERANCE && det > 0.0 {
            return Ok(Rotation(nearest_rotation(&m)));
        }
        Err(GeomError::NotARotation { drift, det })
    }

    pub fn from_row_major(values: [f64; 9]) -> Result<Self, GeomError> {
        Self::from_matrix(Matrix3::from_row_slice(&values))
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)], m[(0, 1)], m[(0, 2)],
            m[(1, 0)], m[(1, 1)], m[(1, 2)],
            m[(2, 0)], m[(2, 1)], m[(2, 2)],
        ]
    }

    /// Rodrigues' formula. The axis need not be normalized but must be non-zero.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Result<Self, GeomError> {
        let norm = axis.norm();
        if !(norm > 0.0) || !norm.is_finite() || !angle.is_finite() {
            return Err(GeomError::InvalidArgument(
                "rotation axis must be finite and non-zero".into(),
            ));
        }
        let k = axis / norm;
        let (s, c) = angle.sin_cos();
        let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
        let m = Matrix3::identity() + kx * s + kx * kx * (1.0 - c);
        Ok(Self::reorthonormalized(m))
    }

    /// `self * other`: applies `other` first.
    pub fn compose(&self, other: &Rotation) -> Rotation {
        Self::reorthonormalized(self.0 * other.0)
    }

    pub fn inverse(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn drift(&self) -> f64 {
        orthonormality_drift(&self.0)
    }

    fn reorthonormalized(m: Matrix3<f64>) -> Rotation {
        if orthonormality_drift(&m) > ORTHONORMAL_TOLERANCE {
            Rotation(nearest_rotation(&m))
        } else {
            Rotation(m)
        }
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

fn orthonormality_drift(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).norm()
}

/// Polar projection onto SO(3): `U Vᵀ` from the SVD, with the last singular
/// direction flipped if needed to keep `det = +1`.
fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Matrix3::identity();
    };
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

#[derive(Serialize, Deserialize)]
struct RigidPlacementRepr {
    scale: f64,
    #[serde(rename = "R")]
    rotation: [f64; 9],
    t: [f64; 3],
}

/// Similarity transform `y' = s·R·y + t` positioning an object in the scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RigidPlacementRepr", into = "RigidPlacementRepr")]
pub struct RigidPlacement {
    pub scale: f64,
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl RigidPlacement {
    pub fn new(scale: f64, rotation: Rotation, translation: Vec3) -> Result<Self, GeomError> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(GeomError::InvalidArgument(format!(
                "placement scale must be positive and finite, got {scale}"
            )));
        }
        if !is_finite(&translation) {
            return Err(GeomError::InvalidGeometry("non-finite placement translation".into()));
        }
        Ok(RigidPlacement {
            scale,
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        RigidPlacement {
            scale: 1.0,
            rotation: Rotation::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn translated(&self, offset: &Vec3) -> Self {
        RigidPlacement {
            translation: self.translation + offset,
            ..*self
        }
    }

    pub fn transform_point(&self, y: &Vec3) -> Vec3 {
        self.rotation.apply(y) * self.scale + self.translation
    }
}

impl TryFrom<RigidPlacementRepr> for RigidPlacement {
    type Error = GeomError;

    fn try_from(r: RigidPlacementRepr) -> Result<Self, Self::Error> {
        RigidPlacement::new(
            r.scale,
            Rotation::from_row_major(r.rotation)?,
            Vec3::from(r.t),
        )
    }
}

impl From<RigidPlacement> for RigidPlacementRepr {
    fn from(p: RigidPlacement) -> Self {
        RigidPlacementRepr {
            scale: p.scale,
            rotation: p.rotation.to_row_major(),
            t: p.translation.into(),
        }
    }
}

/// Maps object-local points into the scene with `s·R·y + t`, preserving order.
pub fn apply_placement(placement: &RigidPlacement, points: &[Vec3]) -> Result<Vec<Vec3>, GeomError> {
    points
        .iter()
        .enumerate()
        .map(|(i, y)| {
            if is_finite(y) {
                Ok(placement.transform_point(y))
            } else {
                Err(GeomError::InvalidGeometry(format!("point {i} is not finite")))
            }
        })
        .collect()
}

/// Pinhole intrinsics in pixels.
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
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeomError> {
        let k = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(GeomError::InvalidArgument("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeomError::InvalidArgument("image dimensions must be positive".into()));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(GeomError::InvalidArgument(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// True when the pixel whose center is nearest to `px` exists.
    pub fn contains(&self, px: &PixelCoord) -> bool {
        px.u >= -0.5 && px.v >= -0.5 && px.u < self.width as f64 - 0.5 && px.v < self.height as f64 - 0.5
    }
}

#[derive(Serialize, Deserialize)]
struct CameraPoseRepr {
    #[serde(rename = "R")]
    rotation: [f64; 9],
    t: [f64; 3],
}

/// World→camera extrinsics `[R | t]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraPoseRepr", into = "CameraPoseRepr")]
pub struct CameraPose {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl CameraPose {
    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        CameraPose {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        CameraPose::new(Rotation::identity(), Vec3::zeros())
    }

    /// Camera at `eye` looking at `target`, with `up` roughly toward image top.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Self, GeomError> {
        let forward = target - eye;
        if forward.norm() == 0.0 {
            return Err(GeomError::InvalidArgument("eye and target coincide".into()));
        }
        let z = forward.normalize();
        let x = z.cross(&up);
        if x.norm() < 1e-12 {
            return Err(GeomError::InvalidArgument("up vector parallel to view direction".into()));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        // Rows are the camera axes expressed in world coordinates.
        let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let rotation = Rotation::from_matrix(r)?;
        let translation = -rotation.apply(&eye);
        Ok(CameraPose::new(rotation, translation))
    }

    pub fn to_camera(&self, p_world: &Vec3) -> Vec3 {
        self.rotation.apply(p_world) + self.translation
    }

    pub fn to_world(&self, p_cam: &Vec3) -> Vec3 {
        self.rotation.inverse().apply(&(p_cam - self.translation))
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        -self.rotation.inverse().apply(&self.translation)
    }

    /// Optical axis (camera +z) in world coordinates.
    pub fn optical_axis(&self) -> Vec3 {
        self.rotation.inverse().apply(&Vec3::z())
    }
}

impl TryFrom<CameraPoseRepr> for CameraPose {
    type Error = GeomError;

    fn try_from(r: CameraPoseRepr) -> Result<Self, Self::Error> {
        let t = Vec3::from(r.t);
        if !is_finite(&t) {
            return Err(GeomError::InvalidGeometry("non-finite pose translation".into()));
        }
        Ok(CameraPose::new(Rotation::from_row_major(r.rotation)?, t))
    }
}

impl From<CameraPose> for CameraPoseRepr {
    fn from(p: CameraPose) -> Self {
        CameraPoseRepr {
            rotation: p.rotation.to_row_major(),
            t: p.translation.into(),
        }
    }
}

/// Inverse rigid transform: turns world→camera into camera→world and back.
pub fn invert_pose(pose: &CameraPose) -> CameraPose {
    let r_inv = pose.rotation.inverse();
    CameraPose::new(r_inv, -r_inv.apply(&pose.translation))
}

pub fn compose_rotations(a: &Rotation, b: &Rotation) -> Rotation {
    a.compose(b)
}

pub fn rotation_from_axis_angle(axis: Vec3, angle: f64) -> Result<Rotation, GeomError> {
    Rotation::from_axis_angle(axis, angle)
}

/// Continuous pixel location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelCoord {
    pub u: f64,
    pub v: f64,
}

impl PixelCoord {
    pub fn new(u: f64, v: f64) -> Self {
        PixelCoord { u, v }
    }

    /// Index of the pixel whose center is nearest.
    pub fn nearest_pixel(&self) -> (i64, i64) {
        (self.u.round() as i64, self.v.round() as i64)
    }
}

/// Projects a world point into the image. Returns `None` when the point is on
/// or behind the image plane; otherwise the pixel (possibly outside the image)
/// and the camera-frame depth.
pub fn project(intrinsics: &CameraIntrinsics, pose: &CameraPose, point_world: &Vec3) -> Option<(PixelCoord, f64)> {
    let p = pose.to_camera(point_world);
    if !(p.z > 0.0) {
        return None;
    }
    let u = intrinsics.fx * p.x / p.z + intrinsics.cx;
    let v = intrinsics.fy * p.y / p.z + intrinsics.cy;
    Some((PixelCoord { u, v }, p.z))
}

/// Lifts a pixel at the given camera-frame depth back into world coordinates.
pub fn unproject(
    intrinsics: &CameraIntrinsics,
    pose: &CameraPose,
    pixel: &PixelCoord,
    depth: f64,
) -> Result<Vec3, GeomError> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(GeomError::InvalidDepth(depth));
    }
    let x = (pixel.u - intrinsics.cx) / intrinsics.fx * depth;
    let y = (pixel.v - intrinsics.cy) / intrinsics.fy * depth;
    Ok(pose.to_world(&Vec3::new(x, y, depth)))
}
