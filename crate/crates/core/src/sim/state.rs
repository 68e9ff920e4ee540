//! Kinematic stepping of a free-flying end effector with rigid tool
//! attachment and penalty contact.

use super::scene::Scene;
use super::SimError;
use crate::geometry::{rotation_from_vector, Frame, Vec3};
use crate::skill::executor::RobotInterface;
use crate::skill::projection::Twist;
use serde::{Deserialize, Serialize};

pub const DEFAULT_GRASP_TOL: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub object: usize,
    /// Object pose in the end-effector frame.
    pub grip: Frame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub ee: Frame,
    pub poses: Vec<Frame>,
    pub attached: Option<Attachment>,
    /// Contact force acting on the held object, N.
    pub contact_force: Vec3,
    pub t: u64,
    pub dt: f64,
}

impl SimState {
    pub fn initial(scene: &Scene) -> Self {
        SimState {
            ee: scene.ee,
            poses: scene.initial_poses(),
            attached: None,
            contact_force: Vec3::zeros(),
            t: 0,
            dt: scene.dt,
        }
    }
}

/// Penalty force on the held object: `Σ k·depth·n` over its contact points
/// penetrating other objects' surfaces.
pub fn contact_force(scene: &Scene, poses: &[Frame], attached: Option<&Attachment>) -> Vec3 {
    let Some(att) = attached else {
        return Vec3::zeros();
    };
    let tool = &scene.objects[att.object];
    let tool_pose = &poses[att.object];
    let mut f = Vec3::zeros();
    for label in &tool.contact_points {
        let p = tool_pose.transform_point(&tool.keypoints[label]);
        for (i, obj) in scene.objects.iter().enumerate() {
            if i == att.object {
                continue;
            }
            for s in &obj.surfaces {
                let point = poses[i].transform_point(&s.point);
                let n = poses[i].transform_vector(s.normal.as_vec());
                let depth = (point - p).dot(&n);
                if depth <= 0.0 {
                    continue;
                }
                if let Some(r) = s.extent {
                    let lateral = (p - point) - n * (p - point).dot(&n);
                    if lateral.norm() > r {
                        continue;
                    }
                }
                f += n * (s.stiffness * depth);
            }
        }
    }
    f
}

/// One explicit Euler step under perfect twist tracking.
pub fn step(state: &SimState, twist: &Twist, scene: &Scene) -> SimState {
    let dt = state.dt;
    let mut rotation = state.ee.rotation;
    if twist.w != Vec3::zeros() {
        rotation = rotation_from_vector(&(twist.w * dt)) * rotation;
        rotation.renormalize();
    }
    let ee = Frame::new(state.ee.origin + twist.v * dt, rotation);
    let mut poses = state.poses.clone();
    if let Some(att) = &state.attached {
        poses[att.object] = ee.compose(&att.grip);
    }
    let contact_force = contact_force(scene, &poses, state.attached.as_ref());
    SimState {
        ee,
        poses,
        attached: state.attached,
        contact_force,
        t: state.t + 1,
        dt,
    }
}

/// Rigidly attaches `object` when the end effector is within `tol` of its
/// `keypoint`.
pub fn grasp(
    state: &SimState,
    scene: &Scene,
    object: &str,
    keypoint: &str,
    tol: f64,
) -> Result<SimState, SimError> {
    let idx = scene
        .object_index(object)
        .ok_or_else(|| SimError::UnknownObject(object.to_string()))?;
    let obj = &scene.objects[idx];
    if !obj.graspable {
        return Err(SimError::NotGraspable(object.to_string()));
    }
    let k = obj
        .keypoint_world(&state.poses[idx], keypoint)
        .ok_or_else(|| SimError::UnknownKeypoint {
            object: object.to_string(),
            keypoint: keypoint.to_string(),
        })?;
    let distance = (k - state.ee.origin).norm();
    if distance > tol {
        return Err(SimError::GraspTooFar { distance });
    }
    let attached = Attachment {
        object: idx,
        grip: state.ee.inverse().compose(&state.poses[idx]),
    };
    Ok(SimState {
        attached: Some(attached),
        contact_force: contact_force(scene, &state.poses, Some(&attached)),
        ..state.clone()
    })
}

/// A scene plus its evolving state, driven through [`RobotInterface`].
#[derive(Debug, Clone)]
pub struct Simulator {
    pub scene: Scene,
    pub state: SimState,
}

impl Simulator {
    pub fn new(scene: Scene) -> Self {
        let state = SimState::initial(&scene);
        Simulator { scene, state }
    }

    pub fn grasp(&mut self, object: &str, keypoint: &str, tol: f64) -> Result<(), SimError> {
        self.state = grasp(&self.state, &self.scene, object, keypoint, tol)?;
        Ok(())
    }

    pub fn pose_of(&self, name: &str) -> Option<Frame> {
        self.scene.object_index(name).map(|i| self.state.poses[i])
    }

    /// World position of an object's ground-truth keypoint.
    pub fn truth_keypoint(&self, object: &str, label: &str) -> Option<Vec3> {
        let i = self.scene.object_index(object)?;
        self.scene.objects[i].keypoint_world(&self.state.poses[i], label)
    }
}

impl RobotInterface for Simulator {
    fn end_effector(&self) -> Frame {
        self.state.ee
    }

    fn measured_force(&self) -> Vec3 {
        -self.state.contact_force
    }

    fn object_pose(&self, name: &str) -> Option<Frame> {
        self.pose_of(name)
    }

    fn apply(&mut self, twist: &Twist) {
        self.state = step(&self.state, twist, &self.scene);
    }

    fn dt(&self) -> f64 {
        self.state.dt
    }

    fn time(&self) -> u64 {
        self.state.t
    }
}
