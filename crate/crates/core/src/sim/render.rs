//! Synthetic feature rendering.
//!
//! Each pixel is ray-cast against the scene; its descriptor is a set of
//! random Fourier features of the hit point in the hit object's own frame,
//! so the same physical point carries the same descriptor in every render.

use super::scene::{Primitive, Scene, SceneObject};
use super::SimError;
use crate::geometry::{deproject_pixel, project_point, Frame, Vec3};
use crate::grounding::KeypointRef;
use crate::matching::{DepthMask, FeatureGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MIN_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub dim: usize,
    /// Standard deviation of per-component Gaussian descriptor noise.
    pub noise_sigma: f64,
    /// Spatial frequency scale of the descriptors, rad/m.
    pub feature_scale: f64,
    pub seed: u64,
    /// Selects an independent noise sequence for the same seed.
    pub stream: u64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            dim: 32,
            noise_sigma: 0.0,
            feature_scale: 150.0,
            seed: 0,
            stream: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub features: FeatureGrid,
    pub depth: DepthMask,
    /// Index into the scene's objects per pixel, `None` for background.
    pub object_ids: Vec<Option<usize>>,
}

impl Rendered {
    pub fn object_at(&self, u: usize, v: usize) -> Option<usize> {
        self.object_ids[v * self.features.width() + u]
    }
}

/// Per-object descriptor function `φ_k(p) = sin(w_k·p + b_k)`.
#[derive(Debug, Clone)]
pub struct FeatureField {
    w: Vec<Vec3>,
    b: Vec<f64>,
}

impl FeatureField {
    pub fn for_object(name: &str, dim: usize, scale: f64) -> Self {
        let digest = Sha256::digest(name.as_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        let normal = Normal::new(0.0, scale).expect("finite scale");
        let w = (0..dim)
            .map(|_| Vec3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)))
            .collect();
        let b = (0..dim)
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();
        FeatureField { w, b }
    }

    pub fn eval(&self, p: &Vec3, out: &mut [f32]) {
        for ((o, w), b) in out.iter_mut().zip(&self.w).zip(&self.b) {
            *o = (w.dot(p) + b).sin() as f32;
        }
    }
}

/// A primitive with the transform taking camera coordinates into its
/// local frame.
struct Placed {
    object: usize,
    primitive: Primitive,
    to_local: Frame,
}

fn place(objects: &[SceneObject], poses: &[Frame]) -> Vec<Placed> {
    objects
        .iter()
        .zip(poses)
        .enumerate()
        .flat_map(|(i, (obj, pose))| {
            obj.primitives.iter().map(move |(prim, local)| Placed {
                object: i,
                primitive: *prim,
                to_local: pose.compose(local).inverse(),
            })
        })
        .collect()
}

/// Nearest hit along the camera ray `dir`: `(t, object index)`.
fn cast(placed: &[Placed], dir: &Vec3) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for p in placed {
        let d = p.to_local.transform_vector(dir);
        if let Some(t) = p.primitive.intersect_local(&p.to_local.origin, &d) {
            if best.is_none_or(|b| t < b.0) {
                best = Some((t, p.object));
            }
        }
    }
    best
}

/// Renders `scene` with objects at `poses` (camera at the origin, looking
/// along +Z).
pub fn render(scene: &Scene, poses: &[Frame], cfg: &RenderConfig) -> Result<Rendered, SimError> {
    if scene.objects.is_empty() {
        return Err(SimError::EmptyScene);
    }
    if cfg.dim < MIN_DIM {
        return Err(SimError::InvalidConfig(format!("descriptor dim must be at least {MIN_DIM}")));
    }
    if !(cfg.noise_sigma >= 0.0 && cfg.noise_sigma.is_finite()) {
        return Err(SimError::InvalidConfig("noise sigma must be non-negative".into()));
    }
    let intr = &scene.camera;
    let (w, h) = (intr.width as usize, intr.height as usize);
    let fields: Vec<FeatureField> = scene
        .objects
        .iter()
        .map(|o| FeatureField::for_object(&o.name, cfg.dim, cfg.feature_scale))
        .collect();

    let mut depth = vec![f32::NAN; w * h];
    let mut ids = vec![None; w * h];
    let mut local = vec![Vec3::zeros(); w * h];
    let placed = place(&scene.objects, poses);
    let inverse: Vec<Frame> = poses.iter().map(Frame::inverse).collect();
    for v in 0..h {
        for u in 0..w {
            let dir = deproject_pixel(u as f64, v as f64, 1.0, intr).expect("pixel inside image");
            if let Some((t, i)) = cast(&placed, &dir) {
                let k = v * w + u;
                depth[k] = (dir.z * t) as f32;
                ids[k] = Some(i);
                local[k] = inverse[i].transform_point(&(dir * t));
            }
        }
    }
    for (i, (obj, pose)) in scene.objects.iter().zip(poses).enumerate() {
        for p in &obj.cloud.points {
            let Some((pu, pv, z)) = project_point(&pose.transform_point(p), intr) else {
                continue;
            };
            let (u, v) = (pu.round(), pv.round());
            if !intr.contains(u, v) {
                continue;
            }
            let k = v as usize * w + u as usize;
            if depth[k].is_nan() || (z as f32) < depth[k] {
                depth[k] = z as f32;
                ids[k] = Some(i);
                local[k] = *p;
            }
        }
    }

    let mut features = FeatureGrid::zeros(h, w, cfg.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(cfg.stream);
    let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    for v in 0..h {
        for u in 0..w {
            let k = v * w + u;
            if let Some(i) = ids[k] {
                let d = features.descriptor_mut(u, v);
                fields[i].eval(&local[k], d);
                if cfg.noise_sigma > 0.0 {
                    for x in d.iter_mut() {
                        *x += noise.sample(&mut rng) as f32;
                    }
                }
            }
        }
    }
    let depth = DepthMask::new(h, w, depth).expect("matching size");
    Ok(Rendered {
        features,
        depth,
        object_ids: ids,
    })
}

pub fn render_scene(scene: &Scene, cfg: &RenderConfig) -> Result<Rendered, SimError> {
    render(scene, &scene.initial_poses(), cfg)
}

/// Pixels of `object`'s truth keypoints in a render of `scene` at its
/// initial poses, rounded to the nearest pixel. Each pixel must show the
/// object itself.
pub fn annotate(
    scene: &Scene,
    object: &str,
    labels: &[String],
    cfg: &RenderConfig,
) -> Result<Vec<KeypointRef>, SimError> {
    let idx = scene
        .object_index(object)
        .ok_or_else(|| SimError::UnknownObject(object.to_string()))?;
    let poses = scene.initial_poses();
    let rendered = render(scene, &poses, cfg)?;
    labels
        .iter()
        .map(|label| {
            let p = scene.objects[idx]
                .keypoint_world(&poses[idx], label)
                .ok_or_else(|| SimError::UnknownKeypoint {
                    object: object.to_string(),
                    keypoint: label.clone(),
                })?;
            let hidden = || SimError::InvalidScene(format!("keypoint `{object}.{label}` is not visible"));
            let (u, v, _) = project_point(&p, &scene.camera).ok_or_else(hidden)?;
            let (u, v) = (u.round(), v.round());
            if !scene.camera.contains(u, v) || rendered.object_at(u as usize, v as usize) != Some(idx) {
                return Err(hidden());
            }
            Ok(KeypointRef {
                object: object.to_string(),
                label: label.clone(),
                pixel: [u as u32, v as u32],
            })
        })
        .collect()
}
