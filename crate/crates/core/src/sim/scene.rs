//! Scene description: camera, objects built from analytic primitives or
//! point clouds, ground-truth keypoints and axes, and contact surfaces.

use super::SimError;
use crate::geometry::{CameraIntrinsics, Frame, PointCloud, UnitAxis, Vec3};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

pub const DEFAULT_DT: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSpec {
    pub origin: [f64; 3],
    #[serde(default)]
    pub rpy_deg: [f64; 3],
}

impl PoseSpec {
    pub fn frame(&self) -> Frame {
        Frame::from_rpy_deg(Vec3::from(self.origin), self.rpy_deg)
    }
}

impl Default for PoseSpec {
    fn default() -> Self {
        PoseSpec {
            origin: [0.0; 3],
            rpy_deg: [0.0; 3],
        }
    }
}

/// Local geometry of a primitive; flat shapes lie in their local XY plane,
/// solids are centered on their local origin with the cylinder along Z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    #[serde(alias = "plane")]
    Rect { size: [f64; 2] },
    Disc { radius: f64 },
    Box { size: [f64; 3] },
    Cylinder { radius: f64, height: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    #[serde(flatten)]
    pub shape: Shape,
    #[serde(default)]
    pub offset: [f64; 3],
    #[serde(default)]
    pub rpy_deg: [f64; 3],
}

impl Primitive {
    pub fn local_frame(&self) -> Frame {
        Frame::from_rpy_deg(Vec3::from(self.offset), self.rpy_deg)
    }

    fn validate(&self) -> Result<(), String> {
        let dims: Vec<f64> = match self.shape {
            Shape::Rect { size } => size.to_vec(),
            Shape::Disc { radius } => vec![radius],
            Shape::Box { size } => size.to_vec(),
            Shape::Cylinder { radius, height } => vec![radius, height],
        };
        if dims.iter().all(|d| d.is_finite() && *d > 0.0) {
            Ok(())
        } else {
            Err(format!("primitive dimensions must be positive: {:?}", self.shape))
        }
    }

    /// Nearest ray parameter `t > 0` hitting the primitive, for a ray given
    /// in the primitive's local frame.
    pub fn intersect_local(&self, o: &Vec3, d: &Vec3) -> Option<f64> {
        const EPS: f64 = 1e-12;
        let plane_hit = |inside: &dyn Fn(f64, f64) -> bool| {
            if d.z.abs() < EPS {
                return None;
            }
            let t = -o.z / d.z;
            let p = o + d * t;
            (t > 0.0 && inside(p.x, p.y)).then_some(t)
        };
        match self.shape {
            Shape::Rect { size } => {
                let (hx, hy) = (size[0] / 2.0, size[1] / 2.0);
                plane_hit(&|x, y| x.abs() <= hx && y.abs() <= hy)
            }
            Shape::Disc { radius } => plane_hit(&|x, y| x * x + y * y <= radius * radius),
            Shape::Box { size } => {
                let half = Vec3::from(size) / 2.0;
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for i in 0..3 {
                    if d[i].abs() < EPS {
                        if o[i].abs() > half[i] {
                            return None;
                        }
                        continue;
                    }
                    let a = (-half[i] - o[i]) / d[i];
                    let b = (half[i] - o[i]) / d[i];
                    t0 = t0.max(a.min(b));
                    t1 = t1.min(a.max(b));
                }
                if t0 > t1 || t1 <= 0.0 {
                    return None;
                }
                Some(if t0 > 0.0 { t0 } else { t1 })
            }
            Shape::Cylinder { radius, height } => {
                let h = height / 2.0;
                let mut best: Option<f64> = None;
                let mut consider = |t: f64| {
                    if t > 0.0 && best.is_none_or(|b| t < b) {
                        best = Some(t);
                    }
                };
                let a = d.x * d.x + d.y * d.y;
                if a > EPS {
                    let b = 2.0 * (o.x * d.x + o.y * d.y);
                    let c = o.x * o.x + o.y * o.y - radius * radius;
                    let disc = b * b - 4.0 * a * c;
                    if disc >= 0.0 {
                        let sq = disc.sqrt();
                        for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                            if (o.z + d.z * t).abs() <= h {
                                consider(t);
                            }
                        }
                    }
                }
                if d.z.abs() > EPS {
                    for zc in [-h, h] {
                        let t = (zc - o.z) / d.z;
                        let p = o + d * t;
                        if p.x * p.x + p.y * p.y <= radius * radius {
                            consider(t);
                        }
                    }
                }
                best
            }
        }
    }
}

/// Penalty-contact plane in object coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSpec {
    pub point: [f64; 3],
    /// Outward normal.
    pub normal: [f64; 3],
    /// N/m
    pub stiffness: f64,
    /// Radius around `point` within which the plane is solid; unbounded when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub name: String,
    pub pose: PoseSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primitive: Option<Primitive>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub primitives: Vec<Primitive>,
    /// JSON `[[x,y,z], ...]` in object coordinates, relative to the scene file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cloud_file: Option<String>,
    #[serde(default)]
    pub keypoints: BTreeMap<String, [f64; 3]>,
    /// Ground-truth directions in object coordinates.
    #[serde(default)]
    pub axes: BTreeMap<String, [f64; 3]>,
    #[serde(default)]
    pub surfaces: Vec<SurfaceSpec>,
    #[serde(default)]
    pub graspable: bool,
    /// Keypoints tested against other objects' surfaces when this object is held.
    #[serde(default)]
    pub contact_points: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub camera: CameraIntrinsics,
    #[serde(default)]
    pub ee: PoseSpec,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub objects: Vec<ObjectSpec>,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surface {
    pub point: Vec3,
    pub normal: UnitAxis,
    pub stiffness: f64,
    pub extent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub name: String,
    /// Initial pose.
    pub pose: Frame,
    pub primitives: Vec<(Primitive, Frame)>,
    pub cloud: PointCloud,
    pub keypoints: BTreeMap<String, Vec3>,
    pub axes: BTreeMap<String, UnitAxis>,
    pub surfaces: Vec<Surface>,
    pub graspable: bool,
    pub contact_points: Vec<String>,
}

impl SceneObject {
    pub fn keypoint_world(&self, pose: &Frame, label: &str) -> Option<Vec3> {
        self.keypoints.get(label).map(|p| pose.transform_point(p))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub camera: CameraIntrinsics,
    pub ee: Frame,
    pub dt: f64,
    pub objects: Vec<SceneObject>,
}

impl Scene {
    /// Loads a scene file; cloud files resolve relative to its directory.
    pub fn load(path: &Path) -> Result<Scene, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        let spec: SceneSpec = serde_json::from_str(&text)
            .map_err(|e| SimError::InvalidScene(format!("{}: {e}", path.display())))?;
        Scene::from_spec(&spec, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn from_json(text: &str) -> Result<Scene, SimError> {
        let spec: SceneSpec =
            serde_json::from_str(text).map_err(|e| SimError::InvalidScene(e.to_string()))?;
        Scene::from_spec(&spec, Path::new("."))
    }

    pub fn from_spec(spec: &SceneSpec, base_dir: &Path) -> Result<Scene, SimError> {
        let bad = |m: String| Err(SimError::InvalidScene(m));
        if !(spec.dt > 0.0 && spec.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", spec.dt));
        }
        let mut names = BTreeSet::new();
        let mut objects = Vec::with_capacity(spec.objects.len());
        for o in &spec.objects {
            if !names.insert(o.name.clone()) {
                return bad(format!("duplicate object name `{}`", o.name));
            }
            let mut prims: Vec<Primitive> = o.primitive.iter().copied().collect();
            prims.extend(o.primitives.iter().copied());
            for p in &prims {
                p.validate().map_err(|m| SimError::InvalidScene(format!("{}: {m}", o.name)))?;
            }
            let cloud = match &o.cloud_file {
                Some(f) => {
                    let path = base_dir.join(f);
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
                    PointCloud::from_json_triples(&text).map_err(|e| {
                        SimError::InvalidScene(format!("{}: {e}", path.display()))
                    })?
                }
                None => PointCloud::default(),
            };
            let mut surfaces = Vec::new();
            for s in &o.surfaces {
                if !(s.stiffness > 0.0 && s.stiffness.is_finite()) {
                    return bad(format!("{}: stiffness must be positive", o.name));
                }
                let normal = UnitAxis::new(Vec3::from(s.normal))
                    .map_err(|e| SimError::InvalidScene(format!("{}: {e}", o.name)))?;
                surfaces.push(Surface {
                    point: Vec3::from(s.point),
                    normal,
                    stiffness: s.stiffness,
                    extent: s.extent,
                });
            }
            for c in &o.contact_points {
                if !o.keypoints.contains_key(c) {
                    return bad(format!("{}: contact point `{c}` is not a keypoint", o.name));
                }
            }
            let mut axes = BTreeMap::new();
            for (label, a) in &o.axes {
                let axis = UnitAxis::new(Vec3::from(*a))
                    .map_err(|e| SimError::InvalidScene(format!("{}.{label}: {e}", o.name)))?;
                axes.insert(label.clone(), axis);
            }
            objects.push(SceneObject {
                name: o.name.clone(),
                pose: o.pose.frame(),
                primitives: prims.iter().map(|p| (*p, p.local_frame())).collect(),
                cloud,
                keypoints: o.keypoints.iter().map(|(k, v)| (k.clone(), Vec3::from(*v))).collect(),
                axes,
                surfaces,
                graspable: o.graspable,
                contact_points: o.contact_points.clone(),
            });
        }
        Ok(Scene {
            camera: spec.camera,
            ee: spec.ee.frame(),
            dt: spec.dt,
            objects,
        })
    }

    pub fn object(&self, name: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn object_index(&self, name: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.name == name)
    }

    pub fn initial_poses(&self) -> Vec<Frame> {
        self.objects.iter().map(|o| o.pose).collect()
    }

    pub fn max_stiffness(&self) -> f64 {
        self.objects
            .iter()
            .flat_map(|o| o.surfaces.iter().map(|s| s.stiffness))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn prim(shape: Shape) -> Primitive {
        Primitive { shape, offset: [0.0; 3], rpy_deg: [0.0; 3] }
    }

    #[test]
    fn primitive_intersections() {
        let o = Vec3::new(0.0, 0.0, -1.0);
        let d = Vec3::z();
        assert_eq!(prim(Shape::Rect { size: [0.1, 0.1] }).intersect_local(&o, &d), Some(1.0));
        assert_eq!(prim(Shape::Disc { radius: 0.1 }).intersect_local(&o, &d), Some(1.0));
        let off = Vec3::new(0.2, 0.0, -1.0);
        assert_eq!(prim(Shape::Disc { radius: 0.1 }).intersect_local(&off, &d), None);
        let b = prim(Shape::Box { size: [0.2, 0.2, 0.4] }).intersect_local(&o, &d).unwrap();
        assert_abs_diff_eq!(b, 0.8, epsilon = 1e-12);
        let c = prim(Shape::Cylinder { radius: 0.1, height: 0.4 }).intersect_local(&o, &d).unwrap();
        assert_abs_diff_eq!(c, 0.8, epsilon = 1e-12);
        // Side hit from along X.
        let c = prim(Shape::Cylinder { radius: 0.1, height: 0.4 })
            .intersect_local(&Vec3::new(-1.0, 0.0, 0.0), &Vec3::x())
            .unwrap();
        assert_abs_diff_eq!(c, 0.9, epsilon = 1e-12);
        // Origin inside a box exits through the far face.
        let b = prim(Shape::Box { size: [0.2, 0.2, 0.2] }).intersect_local(&Vec3::zeros(), &d).unwrap();
        assert_abs_diff_eq!(b, 0.1, epsilon = 1e-12);
        // Ray pointing away.
        assert_eq!(prim(Shape::Rect { size: [0.1, 0.1] }).intersect_local(&o, &-d), None);
    }

    #[test]
    fn scene_validation() {
        let text = r#"{
            "camera": {"fx": 100, "fy": 100, "cx": 32, "cy": 24, "width": 64, "height": 48},
            "objects": [
                {"name": "a", "pose": {"origin": [0, 0, 0.5]},
                 "primitive": {"shape": "plane", "size": [0.1, 0.1]},
                 "keypoints": {"k": [0, 0, 0]}, "contact_points": ["k"],
                 "surfaces": [{"point": [0, 0, 0], "normal": [0, 0, 2], "stiffness": 100}]}
            ]
        }"#;
        let s = Scene::from_json(text).unwrap();
        assert_eq!(s.dt, DEFAULT_DT);
        assert_eq!(*s.objects[0].surfaces[0].normal.as_vec(), Vec3::z());
        assert!(matches!(s.objects[0].primitives[0].0.shape, Shape::Rect { .. }));

        let dup = text.replace("\"objects\": [", "\"objects\": [{\"name\": \"a\", \"pose\": {\"origin\": [0,0,1]}},");
        assert!(matches!(Scene::from_json(&dup), Err(SimError::InvalidScene(_))));
        let soft = text.replace("\"stiffness\": 100", "\"stiffness\": 0");
        assert!(matches!(Scene::from_json(&soft), Err(SimError::InvalidScene(_))));
        let contact = text.replace("\"contact_points\": [\"k\"]", "\"contact_points\": [\"q\"]");
        assert!(matches!(Scene::from_json(&contact), Err(SimError::InvalidScene(_))));
    }
}
