//! Shared 3D geometry: vectors, unit axes, rigid frames, pinhole
//! deprojection and point clouds.
//!
//! The camera frame doubles as the world frame: the optical axis is world
//! +Z, so a table seen from above has its "up" direction along world -Z.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Tolerance on `‖dir‖ = 1` for [`UnitAxis`].
pub const UNIT_TOL: f64 = 1e-9;

/// Angle beyond which two axes are treated as antiparallel.
const ANTIPARALLEL_EPS: f64 = 1e-6;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum GeometryError {
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("pixel ({u}, {v}) outside {width}x{height} image")]
    OutOfBounds {
        u: f64,
        v: f64,
        width: u32,
        height: u32,
    },
    #[error("vector has zero or non-finite length")]
    ZeroVector,
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
}

/// A direction of unit length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct UnitAxis(Vec3);

impl UnitAxis {
    pub const X: UnitAxis = UnitAxis(Vector3::new(1.0, 0.0, 0.0));
    pub const Y: UnitAxis = UnitAxis(Vector3::new(0.0, 1.0, 0.0));
    pub const Z: UnitAxis = UnitAxis(Vector3::new(0.0, 0.0, 1.0));

    /// Normalizes `v`. Fails on zero-length or non-finite input.
    pub fn new(v: Vec3) -> Result<Self, GeometryError> {
        let n = v.norm();
        if !n.is_finite() || n < 1e-300 {
            return Err(GeometryError::ZeroVector);
        }
        Ok(UnitAxis(v / n))
    }

    /// Wraps a vector the caller guarantees is already unit length.
    pub fn new_unchecked(v: Vec3) -> Self {
        debug_assert!((v.norm() - 1.0).abs() < 1e-6);
        UnitAxis(v)
    }

    pub fn as_vec(&self) -> &Vec3 {
        &self.0
    }

    pub fn into_vec(self) -> Vec3 {
        self.0
    }

    pub fn dot(&self, other: &UnitAxis) -> f64 {
        self.0.dot(&other.0)
    }

    /// Angle to `other` in radians, in `[0, π]`.
    pub fn angle_to(&self, other: &UnitAxis) -> f64 {
        let c = self.0.dot(&other.0);
        let s = self.0.cross(&other.0).norm();
        s.atan2(c)
    }

    pub fn rotate(&self, r: &Rotation3<f64>) -> UnitAxis {
        UnitAxis::new_unchecked(r * self.0)
    }
}

impl std::ops::Neg for UnitAxis {
    type Output = UnitAxis;
    fn neg(self) -> UnitAxis {
        UnitAxis(-self.0)
    }
}

impl TryFrom<[f64; 3]> for UnitAxis {
    type Error = GeometryError;
    fn try_from(a: [f64; 3]) -> Result<Self, Self::Error> {
        UnitAxis::new(Vec3::new(a[0], a[1], a[2]))
    }
}

impl From<UnitAxis> for [f64; 3] {
    fn from(a: UnitAxis) -> [f64; 3] {
        [a.0.x, a.0.y, a.0.z]
    }
}

/// Pinhole intrinsics. Pixel `(u, v)` is the center of column `u`, row `v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawIntrinsics")]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Deserialize)]
struct RawIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

impl TryFrom<RawIntrinsics> for CameraIntrinsics {
    type Error = GeometryError;
    fn try_from(r: RawIntrinsics) -> Result<Self, Self::Error> {
        CameraIntrinsics::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height)
    }
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics(
                "focal lengths must be positive".into(),
            ));
        }
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidIntrinsics(
                "image must be non-empty".into(),
            ));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(GeometryError::InvalidIntrinsics(
                "principal point must lie inside the image".into(),
            ));
        }
        Ok(CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }

    /// Lateral extent of one pixel at `depth`, using the coarser focal axis.
    pub fn pixel_quantum(&self, depth: f64) -> f64 {
        depth / self.fx.min(self.fy)
    }
}

/// Back-projects pixel `(u, v)` at `depth` meters into the camera frame.
pub fn deproject_pixel(
    u: f64,
    v: f64,
    depth: f64,
    intr: &CameraIntrinsics,
) -> Result<Vec3, GeometryError> {
    if !intr.contains(u, v) {
        return Err(GeometryError::OutOfBounds {
            u,
            v,
            width: intr.width,
            height: intr.height,
        });
    }
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(GeometryError::NonPositiveDepth(depth));
    }
    Ok(Vec3::new(
        (u - intr.cx) * depth / intr.fx,
        (v - intr.cy) * depth / intr.fy,
        depth,
    ))
}

/// Inverse of [`deproject_pixel`]: returns `(u, v, depth)`. Points behind
/// the camera have no projection.
pub fn project_point(p: &Vec3, intr: &CameraIntrinsics) -> Option<(f64, f64, f64)> {
    if !(p.z > 0.0) {
        return None;
    }
    Some((
        p.x * intr.fx / p.z + intr.cx,
        p.y * intr.fy / p.z + intr.cy,
        p.z,
    ))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    /// Source pixel of each point, when the cloud came from a depth image.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixels: Option<Vec<[u32; 2]>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        PointCloud {
            points,
            pixels: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|p| p.iter().all(|c| c.is_finite()))
    }

    /// Points within `radius` of `at`, in cloud order.
    pub fn neighbors_within(&self, at: &Vec3, radius: f64) -> Vec<Vec3> {
        let r2 = radius * radius;
        self.points
            .iter()
            .filter(|p| (*p - at).norm_squared() <= r2)
            .copied()
            .collect()
    }

    /// Parses the JSON array-of-triples form `[[x,y,z], ...]`.
    pub fn from_json_triples(text: &str) -> Result<Self, serde_json::Error> {
        let raw: Vec<[f64; 3]> = serde_json::from_str(text)?;
        Ok(PointCloud::new(
            raw.into_iter().map(|a| Vec3::new(a[0], a[1], a[2])).collect(),
        ))
    }

    pub fn to_json_triples(&self) -> String {
        let raw: Vec<[f64; 3]> = self.points.iter().map(|p| [p.x, p.y, p.z]).collect();
        serde_json::to_string(&raw).expect("finite floats serialize")
    }
}

/// A rigid transform: `world = rotation * local + origin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub origin: Vec3,
    pub rotation: Rotation3<f64>,
}

impl Default for Frame {
    fn default() -> Self {
        Frame::identity()
    }
}

impl Frame {
    pub fn identity() -> Self {
        Frame {
            origin: Vec3::zeros(),
            rotation: Rotation3::identity(),
        }
    }

    pub fn new(origin: Vec3, rotation: Rotation3<f64>) -> Self {
        Frame { origin, rotation }
    }

    /// Frame from an origin and extrinsic X-Y-Z Euler angles in degrees.
    pub fn from_rpy_deg(origin: Vec3, rpy_deg: [f64; 3]) -> Self {
        Frame {
            origin,
            rotation: euler_xyz_deg(rpy_deg),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.origin
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn inverse(&self) -> Frame {
        let rinv = self.rotation.inverse();
        Frame {
            origin: -(rinv * self.origin),
            rotation: rinv,
        }
    }

    /// `self ∘ other`: maps `other`'s local coordinates through `self`.
    pub fn compose(&self, other: &Frame) -> Frame {
        Frame {
            origin: self.transform_point(&other.origin),
            rotation: self.rotation * other.rotation,
        }
    }

    pub fn column(&self, i: usize) -> Vec3 {
        self.rotation.matrix().column(i).into_owned()
    }

    /// Largest absolute entry difference over the 3x4 matrix form.
    pub fn max_abs_diff(&self, other: &Frame) -> f64 {
        let dr = (self.rotation.matrix() - other.rotation.matrix()).abs().max();
        let dt = (self.origin - other.origin).abs().max();
        dr.max(dt)
    }
}

/// Rotation for extrinsic X-Y-Z Euler angles (degrees): `Rz · Ry · Rx`.
pub fn euler_xyz_deg(rpy_deg: [f64; 3]) -> Rotation3<f64> {
    Rotation3::from_euler_angles(
        rpy_deg[0].to_radians(),
        rpy_deg[1].to_radians(),
        rpy_deg[2].to_radians(),
    )
}

/// Deterministic right-handed frame whose third column is `z`.
///
/// The first column is built from world X, or from world Y when `|z·X| > 0.9`.
pub fn orthonormal_completion(z: &UnitAxis) -> Frame {
    let zv = *z.as_vec();
    let seed = if zv.x.abs() > 0.9 {
        Vec3::y()
    } else {
        Vec3::x()
    };
    let x = (seed - zv * seed.dot(&zv)).normalize();
    let y = zv.cross(&x);
    let m = Matrix3::from_columns(&[x, y, zv]);
    Frame {
        origin: Vec3::zeros(),
        rotation: Rotation3::from_matrix_unchecked(m),
    }
}

/// Rotation vector (axis · angle) taking `a` onto `b`.
///
/// Near-antiparallel inputs rotate about the first column of
/// `orthonormal_completion(a)`.
pub fn rotation_between_axes(a: &UnitAxis, b: &UnitAxis) -> Vec3 {
    let cross = a.as_vec().cross(b.as_vec());
    let s = cross.norm();
    let c = a.dot(b);
    let angle = s.atan2(c);
    if angle > std::f64::consts::PI - ANTIPARALLEL_EPS {
        let axis = orthonormal_completion(a).column(0);
        return axis * angle;
    }
    if s == 0.0 {
        return Vec3::zeros();
    }
    cross * (angle / s)
}

/// Rotation matrix from a rotation vector.
pub fn rotation_from_vector(w: &Vec3) -> Rotation3<f64> {
    let angle = w.norm();
    if angle == 0.0 {
        return Rotation3::identity();
    }
    Rotation3::from_axis_angle(&Unit::new_unchecked(w / angle), angle)
}
