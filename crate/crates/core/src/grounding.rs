//! Binding lifted keypoints and axes to a concrete scene.
//!
//! Keypoints are transferred by feature matching and deprojected through
//! the target depth. Axes are resolved afterwards, in one of four ways:
//! a fixed global direction, the difference of two grounded keypoints, or
//! the local surface normal / edge direction of the point cloud around a
//! grounded keypoint.

use crate::geometry::{deproject_pixel, CameraIntrinsics, GeometryError, PointCloud, UnitAxis, Vec3};
use crate::matching::{match_keypoint, DepthMask, FeatureGrid, MatchConfig, MatchError};
use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub const DEFAULT_MIN_SCORE: f64 = 0.4;
pub const DEFAULT_NEIGHBOR_RADIUS: f64 = 0.02;
pub const DEFAULT_MIN_NEIGHBORS: usize = 8;

/// Minimum separation of the two points defining a keypoint axis.
const MIN_AXIS_SEPARATION: f64 = 1e-6;
/// Relative tolerance for two covariance eigenvalues to count as equal.
const EIGEN_TIE_TOL: f64 = 1e-9;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum GroundingError {
    #[error("matching failed: {0}")]
    Match(#[from] MatchError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("match score {score:.3} below threshold {min:.3}")]
    MatchBelowThreshold { score: f64, min: f64 },
    #[error("axis endpoints coincide")]
    DegenerateAxis,
    #[error("only {found} points within radius, need {required}")]
    InsufficientNeighbors { found: usize, required: usize },
    #[error("neighborhood has no unique principal direction")]
    DegenerateNeighborhood,
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("axis `{axis}` references unknown keypoint `{keypoint}`")]
    UnknownKeypoint { axis: String, keypoint: String },
    #[error("no valid depth in target image")]
    NoDepth,
    #[error("`{label}`: {source}")]
    AtLabel {
        label: String,
        #[source]
        source: Box<GroundingError>,
    },
}

impl GroundingError {
    fn at(self, label: &str) -> GroundingError {
        GroundingError::AtLabel {
            label: label.to_string(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with label annotations stripped.
    pub fn root(&self) -> &GroundingError {
        match self {
            GroundingError::AtLabel { source, .. } => source.root(),
            e => e,
        }
    }
}

/// An annotated pixel on the reference image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointRef {
    pub object: String,
    pub label: String,
    /// `[u, v]` in the reference image.
    pub pixel: [u32; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "args", rename_all = "snake_case")]
pub enum AxisKind {
    Global {
        dir: UnitAxis,
    },
    /// `(a - b) / ‖a - b‖` over two grounded keypoints.
    FromKeypoints {
        a: String,
        b: String,
    },
    SurfaceNormal {
        at: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        radius: Option<f64>,
    },
    EdgeDirection {
        at: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        radius: Option<f64>,
    },
}

impl AxisKind {
    pub fn name(&self) -> &'static str {
        match self {
            AxisKind::Global { .. } => "global",
            AxisKind::FromKeypoints { .. } => "from_keypoints",
            AxisKind::SurfaceNormal { .. } => "surface_normal",
            AxisKind::EdgeDirection { .. } => "edge_direction",
        }
    }

    fn referenced_keypoints(&self) -> Vec<&str> {
        match self {
            AxisKind::Global { .. } => vec![],
            AxisKind::FromKeypoints { a, b } => vec![a, b],
            AxisKind::SurfaceNormal { at, .. } | AxisKind::EdgeDirection { at, .. } => vec![at],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub label: String,
    #[serde(flatten)]
    pub kind: AxisKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingSpec {
    pub reference_image: String,
    pub keypoints: Vec<KeypointRef>,
    #[serde(default)]
    pub axes: Vec<AxisSpec>,
}

impl GroundingSpec {
    /// Checks label uniqueness (keypoints and axes share one namespace)
    /// and that every axis refers to a declared keypoint.
    pub fn validate(&self) -> Result<(), GroundingError> {
        let mut seen = BTreeSet::new();
        for label in self
            .keypoints
            .iter()
            .map(|k| &k.label)
            .chain(self.axes.iter().map(|a| &a.label))
        {
            if !seen.insert(label.as_str()) {
                return Err(GroundingError::DuplicateLabel(label.clone()));
            }
        }
        for axis in &self.axes {
            for kp in axis.kind.referenced_keypoints() {
                if !self.keypoints.iter().any(|k| k.label == kp) {
                    return Err(GroundingError::UnknownKeypoint {
                        axis: axis.label.clone(),
                        keypoint: kp.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn keypoint(&self, label: &str) -> Option<&KeypointRef> {
        self.keypoints.iter().find(|k| k.label == label)
    }

    pub fn axis(&self, label: &str) -> Option<&AxisSpec> {
        self.axes.iter().find(|a| a.label == label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundedKeypoint {
    pub position: Vec3,
    pub score: f64,
}

/// Scene-anchored keypoints (meters) and unit axes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundedParams {
    pub keypoints: BTreeMap<String, GroundedKeypoint>,
    pub axes: BTreeMap<String, UnitAxis>,
    pub timestamp: u64,
}

impl GroundedParams {
    pub fn keypoint(&self, label: &str) -> Option<Vec3> {
        self.keypoints.get(label).map(|k| k.position)
    }

    pub fn axis(&self, label: &str) -> Option<UnitAxis> {
        self.axes.get(label).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundingConfig {
    pub matching: MatchConfig,
    pub min_score: f64,
    pub neighbor_radius: f64,
    pub min_neighbors: usize,
}

impl Default for GroundingConfig {
    fn default() -> Self {
        GroundingConfig {
            matching: MatchConfig::default(),
            min_score: DEFAULT_MIN_SCORE,
            neighbor_radius: DEFAULT_NEIGHBOR_RADIUS,
            min_neighbors: DEFAULT_MIN_NEIGHBORS,
        }
    }
}

/// Deprojects every valid depth pixel.
pub fn cloud_from_depth(depth: &DepthMask, intr: &CameraIntrinsics) -> PointCloud {
    let mut points = Vec::with_capacity(depth.valid_count());
    let mut pixels = Vec::with_capacity(points.capacity());
    for v in 0..depth.height() {
        for u in 0..depth.width() {
            if let Some(d) = depth.depth(u, v) {
                if let Ok(p) = deproject_pixel(u as f64, v as f64, d, intr) {
                    points.push(p);
                    pixels.push([u as u32, v as u32]);
                }
            }
        }
    }
    PointCloud {
        points,
        pixels: Some(pixels),
    }
}

/// Nearest valid depth pixel to `(u, v)`; row-major order breaks ties.
fn nearest_valid_pixel(depth: &DepthMask, u: f64, v: f64) -> Option<(usize, usize)> {
    let ru = (u.round() as usize).min(depth.width() - 1);
    let rv = (v.round() as usize).min(depth.height() - 1);
    if depth.is_valid(ru, rv) {
        return Some((ru, rv));
    }
    let mut best: Option<(usize, usize, f64)> = None;
    for vv in 0..depth.height() {
        for uu in 0..depth.width() {
            if depth.is_valid(uu, vv) {
                let d2 = (uu as f64 - u).powi(2) + (vv as f64 - v).powi(2);
                if best.is_none_or(|(_, _, b)| d2 < b) {
                    best = Some((uu, vv, d2));
                }
            }
        }
    }
    best.map(|(a, b, _)| (a, b))
}

/// Transfers one keypoint into the target scene. Returns the 3D point and
/// the peak cosine score.
///
/// The depth is read at the rounded matched pixel (or the nearest valid
/// pixel when that one has no depth); the lateral position uses the
/// possibly sub-pixel match.
pub fn ground_keypoint(
    reference: &FeatureGrid,
    kp: &KeypointRef,
    target: &FeatureGrid,
    target_depth: &DepthMask,
    intr: &CameraIntrinsics,
    cfg: &GroundingConfig,
) -> Result<(Vec3, f64), GroundingError> {
    let px = (kp.pixel[0] as usize, kp.pixel[1] as usize);
    let m = match_keypoint(reference, px, target, target_depth, &cfg.matching)?;
    if m.peak_score < cfg.min_score {
        return Err(GroundingError::MatchBelowThreshold {
            score: m.peak_score,
            min: cfg.min_score,
        });
    }
    let (du, dv) = nearest_valid_pixel(target_depth, m.u, m.v).ok_or(GroundingError::NoDepth)?;
    let depth = target_depth.depth(du, dv).ok_or(GroundingError::NoDepth)?;
    let p = deproject_pixel(m.u, m.v, depth, intr)?;
    Ok((p, m.peak_score))
}

pub fn axis_from_keypoints(a: &Vec3, b: &Vec3) -> Result<UnitAxis, GroundingError> {
    let d = a - b;
    if !(d.norm() > MIN_AXIS_SEPARATION) {
        return Err(GroundingError::DegenerateAxis);
    }
    Ok(UnitAxis::new(d)?)
}

/// Eigen-decomposition of the neighborhood covariance, eigenvalues ascending.
fn neighborhood_pca(
    cloud: &PointCloud,
    at: &Vec3,
    radius: f64,
    min_points: usize,
) -> Result<([f64; 3], [Vec3; 3]), GroundingError> {
    let pts = cloud.neighbors_within(at, radius);
    if pts.len() < min_points.max(3) {
        return Err(GroundingError::InsufficientNeighbors {
            found: pts.len(),
            required: min_points.max(3),
        });
    }
    let n = pts.len() as f64;
    let centroid = pts.iter().fold(Vec3::zeros(), |acc, p| acc + p) / n;
    let cov = pts.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p - centroid;
        acc + d * d.transpose()
    }) / n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.map(|i| eig.eigenvalues[i]);
    let vecs = order.map(|i| eig.eigenvectors.column(i).into_owned());
    if vals.iter().chain(vecs.iter().flat_map(|v| v.iter())).any(|x| !x.is_finite()) {
        return Err(GroundingError::DegenerateNeighborhood);
    }
    Ok((vals, vecs))
}

fn eigen_tie(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= EIGEN_TIE_TOL * scale.max(f64::MIN_POSITIVE)
}

/// Local surface normal at `at`: the least-variance direction of the
/// points within `radius`, oriented toward the camera at the origin
/// (ties toward world +Z).
pub fn surface_normal(
    cloud: &PointCloud,
    at: &Vec3,
    radius: f64,
    min_points: usize,
) -> Result<UnitAxis, GroundingError> {
    let (vals, vecs) = neighborhood_pca(cloud, at, radius, min_points)?;
    if eigen_tie(vals[0], vals[1], vals[2]) {
        return Err(GroundingError::DegenerateNeighborhood);
    }
    let mut n = vecs[0];
    let view = n.dot(at);
    if view.abs() <= 1e-12 * at.norm() {
        if n.z < 0.0 {
            n = -n;
        }
    } else if view > 0.0 {
        n = -n;
    }
    Ok(UnitAxis::new(n)?)
}

/// Orientation rule for edge directions: non-negative along world X, then
/// Y, then Z.
pub fn canonical_edge_sign(d: Vec3) -> Vec3 {
    for c in [d.x, d.y, d.z] {
        if c.abs() > 1e-12 {
            return if c < 0.0 { -d } else { d };
        }
    }
    d
}

/// Dominant elongation of the points within `radius` of `at`.
pub fn edge_direction(
    cloud: &PointCloud,
    at: &Vec3,
    radius: f64,
    min_points: usize,
) -> Result<UnitAxis, GroundingError> {
    let (vals, vecs) = neighborhood_pca(cloud, at, radius, min_points)?;
    if eigen_tie(vals[2], vals[1], vals[2]) {
        return Err(GroundingError::DegenerateNeighborhood);
    }
    Ok(UnitAxis::new(canonical_edge_sign(vecs[2]))?)
}

/// Grounds every keypoint of `spec`, then resolves its axes.
#[allow(clippy::too_many_arguments)]
pub fn ground_spec(
    spec: &GroundingSpec,
    reference: &FeatureGrid,
    target: &FeatureGrid,
    target_depth: &DepthMask,
    cloud: &PointCloud,
    intr: &CameraIntrinsics,
    cfg: &GroundingConfig,
) -> Result<GroundedParams, GroundingError> {
    spec.validate()?;
    let mut out = GroundedParams::default();
    for kp in &spec.keypoints {
        let (position, score) = ground_keypoint(reference, kp, target, target_depth, intr, cfg)
            .map_err(|e| e.at(&kp.label))?;
        out.keypoints
            .insert(kp.label.clone(), GroundedKeypoint { position, score });
    }
    for axis in &spec.axes {
        let kp = |label: &str| out.keypoints[label].position;
        let resolved = match &axis.kind {
            AxisKind::Global { dir } => Ok(*dir),
            AxisKind::FromKeypoints { a, b } => axis_from_keypoints(&kp(a), &kp(b)),
            AxisKind::SurfaceNormal { at, radius } => surface_normal(
                cloud,
                &kp(at),
                radius.unwrap_or(cfg.neighbor_radius),
                cfg.min_neighbors,
            ),
            AxisKind::EdgeDirection { at, radius } => edge_direction(
                cloud,
                &kp(at),
                radius.unwrap_or(cfg.neighbor_radius),
                cfg.min_neighbors,
            ),
        }
        .map_err(|e| e.at(&axis.label))?;
        out.axes.insert(axis.label.clone(), resolved);
    }
    Ok(out)
}
