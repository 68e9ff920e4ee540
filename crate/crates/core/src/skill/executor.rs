//! Phase execution: step every controller, project, compose a twist and
//! apply it, one tick at a time.

use super::projection::{compose_twist, project_actions, project_outputs, Twist};
use super::CompiledPhase;
use crate::controllers::{
    step, ControllerClass, ControllerConfig, ControllerError, ControllerKind, ControllerOutput,
    ControllerState, Limits, ObservationBundle,
};
use crate::geometry::{Frame, UnitAxis, Vec3};
use crate::grounding::{GroundedKeypoint, GroundedParams};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Synchronous per-tick interface to a robot or simulator.
pub trait RobotInterface {
    fn end_effector(&self) -> Frame;
    /// Force the tool exerts on its environment, N.
    fn measured_force(&self) -> Vec3;
    /// Current pose of a named scene object, if the robot tracks it.
    fn object_pose(&self, name: &str) -> Option<Frame>;
    fn apply(&mut self, twist: &Twist);
    fn dt(&self) -> f64;
    fn time(&self) -> u64;
}

#[derive(Error, Debug, Clone, PartialEq)]
#[error("phase `{phase}`, tick {tick}: {source}")]
pub struct ExecError {
    pub phase: String,
    pub tick: u64,
    pub source: ControllerError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseStatus {
    Done,
    BudgetExhausted,
}

/// Grounded parameters of one role together with the object pose they were
/// grounded at, so they can follow the object when it moves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleGrounding {
    pub params: GroundedParams,
    pub pose_at_grounding: Option<Frame>,
}

impl RoleGrounding {
    pub fn fixed(params: GroundedParams) -> Self {
        RoleGrounding {
            params,
            pose_at_grounding: None,
        }
    }

    /// Parameters carried to `pose_now` through the rigid motion since grounding.
    pub fn at_pose(&self, pose_now: Option<&Frame>) -> GroundedParams {
        match (&self.pose_at_grounding, pose_now) {
            (Some(then), Some(now)) => transform_params(&self.params, &now.compose(&then.inverse())),
            _ => self.params.clone(),
        }
    }
}

pub fn transform_params(params: &GroundedParams, t: &Frame) -> GroundedParams {
    GroundedParams {
        keypoints: params
            .keypoints
            .iter()
            .map(|(k, v)| {
                let kp = GroundedKeypoint {
                    position: t.transform_point(&v.position),
                    score: v.score,
                };
                (k.clone(), kp)
            })
            .collect(),
        axes: params
            .axes
            .iter()
            .map(|(k, a)| (k.clone(), a.rotate(&t.rotation)))
            .collect(),
        timestamp: params.timestamp,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerRecord {
    pub kind: ControllerKind,
    pub class: ControllerClass,
    /// `α_i1`
    pub axis: UnitAxis,
    /// `α̂_i1`
    pub projected_axis: Option<UnitAxis>,
    /// `u`
    pub action: f64,
    /// `û`
    pub projected_action: f64,
    pub active: bool,
    pub done: bool,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub phase: String,
    pub tick: u64,
    pub time: u64,
    pub ee: Frame,
    pub twist: Twist,
    pub force: Vec3,
    pub controllers: Vec<ControllerRecord>,
    pub grounded: BTreeMap<String, GroundedParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseResult {
    pub status: PhaseStatus,
    pub ticks: u64,
    /// Controller outputs at the last observed tick, rotational first.
    pub final_controllers: Vec<ControllerRecord>,
}

fn records(
    cfgs: &[ControllerConfig],
    outs: &[ControllerOutput],
    axes: &[Option<UnitAxis>],
    actions: &[f64],
) -> Vec<ControllerRecord> {
    cfgs.iter()
        .zip(outs)
        .zip(axes.iter().zip(actions))
        .map(|((c, o), (a, u))| ControllerRecord {
            kind: c.kind,
            class: c.class(),
            axis: o.primary_axis,
            projected_axis: *a,
            action: o.action,
            projected_action: *u,
            active: a.is_some(),
            done: o.done,
            error: o.error,
        })
        .collect()
}

/// Observation for the current tick with every role at its current pose.
pub fn observe(
    robot: &dyn RobotInterface,
    grounded: &BTreeMap<String, RoleGrounding>,
) -> ObservationBundle {
    let mut obs =
        ObservationBundle::new(robot.end_effector(), robot.measured_force(), robot.time(), robot.dt());
    for (role, g) in grounded {
        let pose = robot.object_pose(role);
        obs.grounded.insert(role.clone(), g.at_pose(pose.as_ref()));
    }
    obs
}

/// Runs one phase until every done-capable controller reports done or the
/// budget runs out. A phase without done-capable controllers runs its full
/// budget and counts as done.
pub fn run_phase(
    phase: &CompiledPhase,
    grounded: &BTreeMap<String, RoleGrounding>,
    robot: &mut dyn RobotInterface,
    limits: &Limits,
    mut log: impl FnMut(TickRecord),
) -> Result<PhaseResult, ExecError> {
    let rot = &phase.rotational;
    let trans = &phase.translational;
    let mut rot_state = vec![ControllerState::default(); rot.len()];
    let mut trans_state = vec![ControllerState::default(); trans.len()];
    let done_capable = phase.controllers().any(|c| c.kind.done_capable());
    let mut final_controllers = Vec::new();

    for tick in 0..phase.budget {
        let obs = observe(robot, grounded);
        let step_all = |cfgs: &[ControllerConfig], states: &mut [ControllerState]| {
            cfgs.iter()
                .zip(states.iter_mut())
                .map(|(c, s)| step(c, &obs, s))
                .collect::<Result<Vec<_>, _>>()
        };
        let wrap = |source| ExecError {
            phase: phase.name.clone(),
            tick,
            source,
        };
        let rot_out = step_all(rot, &mut rot_state).map_err(wrap)?;
        let trans_out = step_all(trans, &mut trans_state).map_err(wrap)?;

        let all_done = rot_out
            .iter()
            .zip(rot)
            .chain(trans_out.iter().zip(trans))
            .filter(|(_, c)| c.kind.done_capable())
            .all(|(o, _)| o.done);

        let rot_axes = project_outputs(&rot_out);
        let trans_axes = project_outputs(&trans_out);
        let rot_cmd = project_actions(&rot_out, &rot_axes);
        let trans_cmd = project_actions(&trans_out, &trans_axes);
        let actions = |cmd: &super::projection::ProjectedCommand| {
            cmd.entries.iter().map(|e| e.action).collect::<Vec<_>>()
        };
        final_controllers = records(rot, &rot_out, &rot_axes, &actions(&rot_cmd));
        final_controllers.extend(records(trans, &trans_out, &trans_axes, &actions(&trans_cmd)));

        if done_capable && all_done {
            return Ok(PhaseResult {
                status: PhaseStatus::Done,
                ticks: tick,
                final_controllers,
            });
        }

        let twist = compose_twist(&trans_cmd, &rot_cmd, limits);
        log(TickRecord {
            phase: phase.name.clone(),
            tick,
            time: obs.time,
            ee: obs.ee,
            twist,
            force: obs.measured_force,
            controllers: final_controllers.clone(),
            grounded: obs
                .grounded
                .into_iter()
                .filter(|(r, _)| grounded.contains_key(r))
                .collect(),
        });
        robot.apply(&twist);
    }
    let status = if done_capable || phase.budget == 0 {
        PhaseStatus::BudgetExhausted
    } else {
        PhaseStatus::Done
    };
    Ok(PhaseResult {
        status,
        ticks: phase.budget,
        final_controllers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::{Binding, Theta};
    use crate::geometry::rotation_from_vector;
    use approx::assert_abs_diff_eq;

    /// Perfect twist tracking in free space.
    struct Kinematic {
        ee: Frame,
        t: u64,
        dt: f64,
    }

    impl RobotInterface for Kinematic {
        fn end_effector(&self) -> Frame {
            self.ee
        }
        fn measured_force(&self) -> Vec3 {
            Vec3::zeros()
        }
        fn object_pose(&self, _: &str) -> Option<Frame> {
            None
        }
        fn apply(&mut self, tw: &Twist) {
            self.ee.origin += tw.v * self.dt;
            self.ee.rotation = rotation_from_vector(&(tw.w * self.dt)) * self.ee.rotation;
            self.t += 1;
        }
        fn dt(&self) -> f64 {
            self.dt
        }
        fn time(&self) -> u64 {
            self.t
        }
    }

    fn robot() -> Kinematic {
        Kinematic { ee: Frame::identity(), t: 0, dt: 0.005 }
    }

    fn target(p: Vec3) -> BTreeMap<String, RoleGrounding> {
        let mut g = GroundedParams::default();
        g.keypoints.insert("goal".into(), GroundedKeypoint { position: p, score: 1.0 });
        g.axes.insert("up".into(), UnitAxis::new(Vec3::new(0.0, 1.0, 1.0)).unwrap());
        BTreeMap::from([("obj".to_string(), RoleGrounding::fixed(g))])
    }

    fn pos_align_phase(budget: u64) -> CompiledPhase {
        CompiledPhase {
            name: "reach".into(),
            budget,
            grasp: None,
            translational: vec![ControllerConfig::new(
                ControllerKind::PosAlign,
                vec![Binding::new("gripper", "pos"), Binding::new("obj", "goal")],
                Theta::Offset(Vec3::zeros()),
            )],
            rotational: vec![],
        }
    }

    #[test]
    fn single_pos_align_converges() {
        let mut r = robot();
        let goal = Vec3::new(0.05, -0.03, 0.02);
        let phase = pos_align_phase(2000);
        let mut n = 0;
        let res = run_phase(&phase, &target(goal), &mut r, &Limits::default(), |_| n += 1).unwrap();
        assert_eq!(res.status, PhaseStatus::Done);
        assert_eq!(res.ticks, n);
        assert!((r.ee.origin - goal).norm() <= phase.translational[0].done_tol);
        assert!(res.final_controllers[0].done);
    }

    #[test]
    fn zero_budget_is_exhausted() {
        let mut r = robot();
        let res =
            run_phase(&pos_align_phase(0), &target(Vec3::zeros()), &mut r, &Limits::default(), |_| {})
                .unwrap();
        assert_eq!(res.status, PhaseStatus::BudgetExhausted);
        assert_eq!(res.ticks, 0);
        assert_eq!(r.t, 0);
    }

    #[test]
    fn unreachable_in_budget_is_exhausted() {
        let mut r = robot();
        let res = run_phase(
            &pos_align_phase(10),
            &target(Vec3::new(1.0, 0.0, 0.0)),
            &mut r,
            &Limits::default(),
            |_| {},
        )
        .unwrap();
        assert_eq!(res.status, PhaseStatus::BudgetExhausted);
        assert_eq!(r.t, 10);
    }

    #[test]
    fn rotation_and_translation_together() {
        let mut r = robot();
        let goal = Vec3::new(0.0, 0.02, 0.0);
        let mut phase = pos_align_phase(5000);
        phase.rotational.push(ControllerConfig::new(
            ControllerKind::AxisAlign,
            vec![Binding::new("gripper", "z"), Binding::new("obj", "up")],
            Theta::Euler([0.0; 3]),
        ));
        let res = run_phase(&phase, &target(goal), &mut r, &Limits::default(), |_| {}).unwrap();
        assert_eq!(res.status, PhaseStatus::Done);
        let z = UnitAxis::new(r.ee.column(2)).unwrap();
        let up = UnitAxis::new(Vec3::new(0.0, 1.0, 1.0)).unwrap();
        assert!(z.angle_to(&up) <= 1f64.to_radians());
    }

    #[test]
    fn unresolved_binding_reports_context() {
        let mut r = robot();
        let mut phase = pos_align_phase(5);
        phase.translational[0].bindings[1] = Binding::new("obj", "missing");
        let e = run_phase(&phase, &target(Vec3::zeros()), &mut r, &Limits::default(), |_| {})
            .unwrap_err();
        assert_eq!(e.phase, "reach");
        assert_eq!(e.tick, 0);
        assert_eq!(e.source, ControllerError::UnresolvedBinding("obj.missing".into()));
    }

    #[test]
    fn grounding_follows_object_pose() {
        let mut g = GroundedParams::default();
        g.keypoints.insert("p".into(), GroundedKeypoint { position: Vec3::new(1.0, 0.0, 0.0), score: 1.0 });
        g.axes.insert("a".into(), UnitAxis::X);
        let rg = RoleGrounding { params: g, pose_at_grounding: Some(Frame::identity()) };
        let now = Frame::from_rpy_deg(Vec3::new(0.0, 0.0, 1.0), [0.0, 0.0, 90.0]);
        let moved = rg.at_pose(Some(&now));
        assert_abs_diff_eq!(moved.keypoint("p").unwrap(), Vec3::new(0.0, 1.0, 1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(*moved.axis("a").unwrap().as_vec(), Vec3::y(), epsilon = 1e-12);
        assert_eq!(rg.at_pose(None), rg.params);
    }
}
