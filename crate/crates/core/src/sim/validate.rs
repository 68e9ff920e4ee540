//! Grounding accuracy sweeps over randomized rigid transforms of reference
//! scenes, scored against exact synthetic correspondences.

use super::render::{render, RenderConfig};
use super::scene::Scene;
use super::SimError;
use crate::controllers::ControllerKind;
use crate::geometry::{deproject_pixel, Frame, UnitAxis, Vec3};
use crate::grounding::{cloud_from_depth, ground_spec, AxisKind, GroundingConfig, GroundingSpec};
use crate::matching::FeatureGrid;
use nalgebra::{Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A single-object reference scene and the grounding spec annotated on it.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationObject {
    pub scene: Scene,
    pub object: String,
    pub spec: GroundingSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    pub trials: usize,
    pub seed: u64,
    pub render: RenderConfig,
    pub grounding: GroundingConfig,
    pub max_tilt_deg: f64,
    /// Largest lateral shift, m.
    pub max_shift: f64,
    /// Largest move toward the camera, m.
    pub max_lift: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            trials: 100,
            seed: 0,
            render: RenderConfig::default(),
            grounding: GroundingConfig::default(),
            max_tilt_deg: 8.0,
            max_shift: 0.04,
            max_lift: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointError {
    pub label: String,
    /// m
    pub error: f64,
    /// Lateral size of one pixel at the true depth, m.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisError {
    pub label: String,
    pub kind: String,
    pub error_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub index: usize,
    pub object: String,
    pub keypoints: Vec<KeypointError>,
    pub axes: Vec<AxisError>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Noiseless reference render per object, shared across trials.
pub fn reference_features(
    objects: &[ValidationObject],
    render_cfg: &RenderConfig,
) -> Result<Vec<FeatureGrid>, SimError> {
    let cfg = RenderConfig {
        noise_sigma: 0.0,
        ..*render_cfg
    };
    objects
        .iter()
        .map(|o| Ok(render(&o.scene, &o.scene.initial_poses(), &cfg)?.features))
        .collect()
}

/// Random rigid motion about the object origin: any yaw about the camera
/// axis, a bounded tilt, a lateral shift and a move toward the camera.
fn perturb(pose: &Frame, rng: &mut ChaCha8Rng, cfg: &ValidationConfig) -> Frame {
    let yaw = rng.random_range(0.0..std::f64::consts::TAU);
    let tilt_dir = rng.random_range(0.0..std::f64::consts::TAU);
    let tilt = rng.random_range(0.0..=cfg.max_tilt_deg.to_radians());
    let shift = Vec3::new(
        rng.random_range(-cfg.max_shift..=cfg.max_shift),
        rng.random_range(-cfg.max_shift..=cfg.max_shift),
        -rng.random_range(0.0..=cfg.max_lift),
    );
    let tilt_axis = Unit::new_normalize(Vec3::new(tilt_dir.cos(), tilt_dir.sin(), 0.0));
    let r = Rotation3::from_axis_angle(&tilt_axis, tilt) * Rotation3::from_axis_angle(&Vec3::z_axis(), yaw);
    Frame::new(pose.origin + shift, r * pose.rotation)
}

fn line_angle(a: &UnitAxis, b: &UnitAxis) -> f64 {
    let t = a.angle_to(b);
    t.min(std::f64::consts::PI - t)
}

pub fn run_trial(
    objects: &[ValidationObject],
    references: &[FeatureGrid],
    index: usize,
    cfg: &ValidationConfig,
) -> TrialResult {
    let which = index % objects.len();
    let obj = &objects[which];
    let mut result = TrialResult {
        index,
        object: obj.object.clone(),
        keypoints: Vec::new(),
        axes: Vec::new(),
        failure: None,
    };
    if let Err(e) = trial_inner(obj, &references[which], index, cfg, &mut result) {
        result.failure = Some(e);
    }
    result
}

fn trial_inner(
    obj: &ValidationObject,
    reference: &FeatureGrid,
    index: usize,
    cfg: &ValidationConfig,
    out: &mut TrialResult,
) -> Result<(), String> {
    let scene = &obj.scene;
    let idx = scene
        .object_index(&obj.object)
        .ok_or_else(|| format!("object `{}` not in its reference scene", obj.object))?;
    let ref_poses = scene.initial_poses();
    let ref_depth = render(scene, &ref_poses, &RenderConfig { noise_sigma: 0.0, ..cfg.render })
        .map_err(|e| e.to_string())?
        .depth;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let mut poses = ref_poses.clone();
    poses[idx] = perturb(&ref_poses[idx], &mut rng, cfg);
    let motion = poses[idx].compose(&ref_poses[idx].inverse());

    let rcfg = RenderConfig {
        seed: cfg.seed,
        stream: index as u64,
        ..cfg.render
    };
    let target = render(scene, &poses, &rcfg).map_err(|e| e.to_string())?;
    let cloud = cloud_from_depth(&target.depth, &scene.camera);
    let grounded = ground_spec(
        &obj.spec,
        reference,
        &target.features,
        &target.depth,
        &cloud,
        &scene.camera,
        &cfg.grounding,
    )
    .map_err(|e| e.to_string())?;

    let mut truth = BTreeMap::new();
    for kp in &obj.spec.keypoints {
        let (u, v) = (kp.pixel[0] as usize, kp.pixel[1] as usize);
        let d = ref_depth
            .depth(u, v)
            .ok_or_else(|| format!("annotated pixel of `{}` has no depth", kp.label))?;
        let p_ref = deproject_pixel(u as f64, v as f64, d, &scene.camera).map_err(|e| e.to_string())?;
        let p = motion.transform_point(&p_ref);
        truth.insert(kp.label.clone(), p);
        out.keypoints.push(KeypointError {
            label: kp.label.clone(),
            error: (grounded.keypoints[&kp.label].position - p).norm(),
            bound: scene.camera.pixel_quantum(p.z),
        });
    }
    let truth_axes = &scene.objects[idx].axes;
    for a in &obj.spec.axes {
        let got = grounded.axes[&a.label];
        let error = match &a.kind {
            AxisKind::Global { dir } => got.angle_to(dir),
            AxisKind::FromKeypoints { a: ka, b: kb } => {
                let t = UnitAxis::new(truth[ka] - truth[kb]).map_err(|e| e.to_string())?;
                got.angle_to(&t)
            }
            AxisKind::SurfaceNormal { .. } | AxisKind::EdgeDirection { .. } => {
                let local = truth_axes
                    .get(&a.label)
                    .ok_or_else(|| format!("no ground-truth axis `{}`", a.label))?;
                line_angle(&got, &local.rotate(&poses[idx].rotation))
            }
        };
        out.axes.push(AxisError {
            label: a.label.clone(),
            kind: a.kind.name().to_string(),
            error_deg: error.to_degrees(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub count: usize,
    pub median: Option<f64>,
    pub mean: Option<f64>,
    pub p90: Option<f64>,
    pub max: Option<f64>,
}

impl ErrorStats {
    pub fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return ErrorStats::default();
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        };
        let p90 = v[((n as f64 * 0.9).ceil() as usize).clamp(1, n) - 1];
        ErrorStats {
            count: n,
            median: Some(median),
            mean: Some(v.iter().sum::<f64>() / n as f64),
            p90: Some(p90),
            max: Some(v[n - 1]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub trials: usize,
    pub noise_sigma: f64,
    /// m
    pub keypoint_error: ErrorStats,
    /// Median per-keypoint pixel quantum, m.
    pub keypoint_bound: Option<f64>,
    pub keypoint_within_bound: Option<f64>,
    pub axis_error_deg: ErrorStats,
    pub axis_error_deg_by_kind: BTreeMap<String, ErrorStats>,
    /// Error of the grounded parameter each controller kind acts on: m for
    /// the position controllers, degrees for the axis-driven ones.
    pub by_controller_kind: BTreeMap<String, ErrorStats>,
    pub failures: Vec<String>,
}

pub fn summarize(trials: &[TrialResult], noise_sigma: f64) -> ValidationReport {
    let kp: Vec<&KeypointError> = trials.iter().flat_map(|t| &t.keypoints).collect();
    let errors: Vec<f64> = kp.iter().map(|k| k.error).collect();
    let bounds: Vec<f64> = kp.iter().map(|k| k.bound).collect();
    let within = (!kp.is_empty())
        .then(|| kp.iter().filter(|k| k.error <= k.bound).count() as f64 / kp.len() as f64);
    let axes: Vec<&AxisError> = trials.iter().flat_map(|t| &t.axes).collect();
    let mut by_kind: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for a in &axes {
        by_kind.entry(a.kind.clone()).or_default().push(a.error_deg);
    }
    let keypoint_error = ErrorStats::from_values(&errors);
    let axis_error_deg = ErrorStats::from_values(&axes.iter().map(|a| a.error_deg).collect::<Vec<_>>());
    let by_controller_kind = ControllerKind::ALL
        .iter()
        .map(|k| {
            let stats = match k {
                ControllerKind::PosAlign | ControllerKind::PosWaypoint => keypoint_error.clone(),
                ControllerKind::AxisAlign | ControllerKind::ForceAlign => axis_error_deg.clone(),
            };
            (k.name().to_string(), stats)
        })
        .collect();
    ValidationReport {
        trials: trials.len(),
        noise_sigma,
        keypoint_error,
        keypoint_bound: ErrorStats::from_values(&bounds).median,
        keypoint_within_bound: within,
        axis_error_deg,
        axis_error_deg_by_kind: by_kind
            .into_iter()
            .map(|(k, v)| (k, ErrorStats::from_values(&v)))
            .collect(),
        by_controller_kind,
        failures: trials
            .iter()
            .filter_map(|t| t.failure.as_ref().map(|f| format!("trial {} ({}): {f}", t.index, t.object)))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_examples() {
        assert_eq!(ErrorStats::from_values(&[]), ErrorStats::default());
        let s = ErrorStats::from_values(&[3.0, 1.0, 2.0, 4.0]);
        assert_eq!(s.median, Some(2.5));
        assert_eq!(s.mean, Some(2.5));
        assert_eq!(s.max, Some(4.0));
        assert_eq!(s.p90, Some(4.0));
        let s = ErrorStats::from_values(&[5.0, 1.0, 3.0]);
        assert_eq!(s.median, Some(3.0));
    }

    #[test]
    fn empty_summary() {
        let r = summarize(&[], 0.1);
        assert_eq!(r.trials, 0);
        assert_eq!(r.keypoint_error.count, 0);
        assert_eq!(r.keypoint_within_bound, None);
        assert!(r.failures.is_empty());
    }

    #[test]
    fn line_angle_ignores_sign() {
        let a = UnitAxis::X;
        assert_eq!(line_angle(&a, &-a), 0.0);
        assert!((line_angle(&a, &UnitAxis::Y) - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }
}
