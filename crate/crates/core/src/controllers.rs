//! The four task-axis controllers.
//!
//! Each controller reads its grounded bindings from an [`ObservationBundle`]
//! and produces a primary axis plus a saturated action magnitude along it.
//! All laws are proportional with saturation.

use crate::geometry::{orthonormal_completion, rotation_between_axes, Frame, UnitAxis, Vec3};
use crate::grounding::{GroundedKeypoint, GroundedParams};
use nalgebra::Rotation3;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

/// Role name reserved for the robot's own end effector.
pub const GRIPPER_ROLE: &str = "gripper";
pub const GRIPPER_KEYPOINTS: [&str; 1] = ["pos"];
pub const GRIPPER_AXES: [&str; 3] = ["x", "y", "z"];

pub const DEFAULT_POSITION_TOL: f64 = 0.002;
pub const DEFAULT_ANGLE_TOL_DEG: f64 = 1.0;
/// Below this error norm (m or rad) a controller stops acting.
pub const INACTIVE_EPS: f64 = 1e-6;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ControllerError {
    #[error("unresolved binding `{0}`")]
    UnresolvedBinding(String),
    #[error("waypoint list is empty")]
    EmptyWaypointList,
    #[error("invalid controller config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ControllerKind {
    PosAlign,
    PosWaypoint,
    AxisAlign,
    ForceAlign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerClass {
    Translational,
    Rotational,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [
        ControllerKind::PosAlign,
        ControllerKind::PosWaypoint,
        ControllerKind::AxisAlign,
        ControllerKind::ForceAlign,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::PosAlign => "PosAlign",
            ControllerKind::PosWaypoint => "PosWaypoint",
            ControllerKind::AxisAlign => "AxisAlign",
            ControllerKind::ForceAlign => "ForceAlign",
        }
    }

    pub fn from_name(name: &str) -> Option<ControllerKind> {
        ControllerKind::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn class(self) -> ControllerClass {
        match self {
            ControllerKind::AxisAlign => ControllerClass::Rotational,
            _ => ControllerClass::Translational,
        }
    }

    /// Whether the controller can ever report done.
    pub fn done_capable(self) -> bool {
        self != ControllerKind::ForceAlign
    }

    /// Binding slots and whether each is a keypoint (`true`) or an axis.
    pub fn binding_slots(self) -> &'static [bool] {
        match self {
            ControllerKind::PosAlign => &[true, true],
            ControllerKind::PosWaypoint => &[true, true, false],
            ControllerKind::AxisAlign => &[false, false],
            ControllerKind::ForceAlign => &[false],
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `role.label` reference into grounded parameters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Binding {
    pub role: String,
    pub label: String,
}

impl Binding {
    pub fn new(role: &str, label: &str) -> Self {
        Binding {
            role: role.to_string(),
            label: label.to_string(),
        }
    }
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.role, self.label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Gains {
    /// Position gain, 1/s.
    pub kp: f64,
    /// Rotation gain, 1/s.
    pub kr: f64,
    /// Force admittance, m/(s·N).
    pub kf: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Gains {
            kp: 2.0,
            kr: 2.0,
            kf: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Limits {
    /// m/s
    pub v_max: f64,
    /// rad/s
    pub w_max: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            v_max: 0.1,
            w_max: 1.0,
        }
    }
}

/// Per-kind tunable parameters, in SI units (radians for angles).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theta {
    /// PosAlign target offset added to the second keypoint.
    Offset(Vec3),
    /// PosWaypoint offsets in the frame completed from the waypoint axis.
    Waypoints(Vec<Vec3>),
    /// AxisAlign extrinsic X-Y-Z Euler offset, radians.
    Euler([f64; 3]),
    /// ForceAlign setpoint, N; positive pushes along the axis.
    Force(f64),
}

impl Theta {
    pub fn default_for(kind: ControllerKind) -> Option<Theta> {
        match kind {
            ControllerKind::PosAlign => Some(Theta::Offset(Vec3::zeros())),
            ControllerKind::AxisAlign => Some(Theta::Euler([0.0; 3])),
            ControllerKind::PosWaypoint | ControllerKind::ForceAlign => None,
        }
    }

    fn fits(&self, kind: ControllerKind) -> bool {
        matches!(
            (kind, self),
            (ControllerKind::PosAlign, Theta::Offset(_))
                | (ControllerKind::PosWaypoint, Theta::Waypoints(_))
                | (ControllerKind::AxisAlign, Theta::Euler(_))
                | (ControllerKind::ForceAlign, Theta::Force(_))
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    pub bindings: Vec<Binding>,
    pub theta: Theta,
    pub gains: Gains,
    pub limits: Limits,
    /// Metres for positional kinds, radians for AxisAlign; unused by ForceAlign.
    pub done_tol: f64,
}

impl ControllerConfig {
    /// Config with default gains, limits and tolerance for `kind`.
    pub fn new(kind: ControllerKind, bindings: Vec<Binding>, theta: Theta) -> Self {
        ControllerConfig {
            kind,
            bindings,
            theta,
            gains: Gains::default(),
            limits: Limits::default(),
            done_tol: default_done_tol(kind),
        }
    }

    pub fn class(&self) -> ControllerClass {
        self.kind.class()
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        let bad = |msg: String| Err(ControllerError::InvalidConfig(msg));
        let slots = self.kind.binding_slots().len();
        if self.bindings.len() != slots {
            return bad(format!(
                "{} takes {} bindings, got {}",
                self.kind,
                slots,
                self.bindings.len()
            ));
        }
        if !self.theta.fits(self.kind) {
            return bad(format!("theta {:?} does not fit {}", self.theta, self.kind));
        }
        if let Theta::Waypoints(w) = &self.theta {
            if w.is_empty() {
                return Err(ControllerError::EmptyWaypointList);
            }
        }
        let g = &self.gains;
        let l = &self.limits;
        for (name, x) in [
            ("kp", g.kp),
            ("kr", g.kr),
            ("kf", g.kf),
            ("v_max", l.v_max),
            ("w_max", l.w_max),
            ("done_tol", self.done_tol),
        ] {
            if !(x.is_finite() && x > 0.0) {
                return bad(format!("{name} must be positive and finite, got {x}"));
            }
        }
        Ok(())
    }
}

pub fn default_done_tol(kind: ControllerKind) -> f64 {
    match kind {
        ControllerKind::AxisAlign => DEFAULT_ANGLE_TOL_DEG.to_radians(),
        _ => DEFAULT_POSITION_TOL,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerOutput {
    pub primary_axis: UnitAxis,
    /// m/s for translational kinds, rad/s for AxisAlign.
    pub action: f64,
    pub done: bool,
    pub inactive: bool,
    /// Error magnitude driving the law (m, rad or N).
    pub error: f64,
}

/// Mutable per-controller state carried across ticks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub last_axis: Option<UnitAxis>,
    pub waypoint: usize,
}

impl ControllerState {
    fn fallback_axis(&self) -> UnitAxis {
        self.last_axis.unwrap_or(UnitAxis::Z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBundle {
    /// Current grounded values per role, including the gripper role.
    pub grounded: BTreeMap<String, GroundedParams>,
    pub ee: Frame,
    /// Force the tool exerts on its environment, N.
    pub measured_force: Vec3,
    pub time: u64,
    pub dt: f64,
}

impl ObservationBundle {
    pub fn new(ee: Frame, measured_force: Vec3, time: u64, dt: f64) -> Self {
        let mut grounded = BTreeMap::new();
        grounded.insert(GRIPPER_ROLE.to_string(), gripper_params(&ee));
        ObservationBundle {
            grounded,
            ee,
            measured_force,
            time,
            dt,
        }
    }

    pub fn with_role(mut self, role: &str, params: GroundedParams) -> Self {
        self.grounded.insert(role.to_string(), params);
        self
    }

    pub fn keypoint(&self, b: &Binding) -> Result<Vec3, ControllerError> {
        self.grounded
            .get(&b.role)
            .and_then(|g| g.keypoint(&b.label))
            .ok_or_else(|| ControllerError::UnresolvedBinding(b.to_string()))
    }

    pub fn axis(&self, b: &Binding) -> Result<UnitAxis, ControllerError> {
        self.grounded
            .get(&b.role)
            .and_then(|g| g.axis(&b.label))
            .ok_or_else(|| ControllerError::UnresolvedBinding(b.to_string()))
    }
}

/// Grounded view of the end effector: keypoint `pos`, axes `x`, `y`, `z`.
pub fn gripper_params(ee: &Frame) -> GroundedParams {
    let mut g = GroundedParams::default();
    g.keypoints.insert(
        "pos".into(),
        GroundedKeypoint {
            position: ee.origin,
            score: 1.0,
        },
    );
    for (i, name) in GRIPPER_AXES.iter().enumerate() {
        g.axes
            .insert(name.to_string(), UnitAxis::new_unchecked(ee.column(i)));
    }
    g
}

/// Source of desired positions for a tracking controller.
pub trait TrajectoryGenerator {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Desired point `k`, given the anchor keypoint and the reference axis.
    fn desired(&self, k: usize, anchor: &Vec3, axis: &UnitAxis) -> Vec3;
}

/// Offsets expressed in `orthonormal_completion(axis)`, added to the anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointSchedule<'a> {
    pub offsets: &'a [Vec3],
}

impl TrajectoryGenerator for WaypointSchedule<'_> {
    fn len(&self) -> usize {
        self.offsets.len()
    }

    fn desired(&self, k: usize, anchor: &Vec3, axis: &UnitAxis) -> Vec3 {
        anchor + orthonormal_completion(axis).rotation * self.offsets[k]
    }
}

fn position_law(
    error: Vec3,
    gains: &Gains,
    limits: &Limits,
    tol: f64,
    state: &mut ControllerState,
) -> ControllerOutput {
    let norm = error.norm();
    if norm < INACTIVE_EPS {
        return ControllerOutput {
            primary_axis: state.fallback_axis(),
            action: 0.0,
            done: norm <= tol,
            inactive: true,
            error: norm,
        };
    }
    let axis = UnitAxis::new_unchecked(error / norm);
    state.last_axis = Some(axis);
    ControllerOutput {
        primary_axis: axis,
        action: (gains.kp * norm).min(limits.v_max),
        done: norm <= tol,
        inactive: false,
        error: norm,
    }
}

fn expect_kind(cfg: &ControllerConfig, kind: ControllerKind) -> Result<(), ControllerError> {
    if cfg.kind != kind {
        return Err(ControllerError::InvalidConfig(format!(
            "expected {kind}, got {}",
            cfg.kind
        )));
    }
    Ok(())
}

fn binding(cfg: &ControllerConfig, i: usize) -> Result<&Binding, ControllerError> {
    cfg.bindings.get(i).ok_or_else(|| {
        ControllerError::InvalidConfig(format!("{} is missing binding {}", cfg.kind, i + 1))
    })
}

/// Drives keypoint `g1` onto `g2 + θ`.
pub fn step_pos_align(
    cfg: &ControllerConfig,
    obs: &ObservationBundle,
    state: &mut ControllerState,
) -> Result<ControllerOutput, ControllerError> {
    expect_kind(cfg, ControllerKind::PosAlign)?;
    let g1 = obs.keypoint(binding(cfg, 0)?)?;
    let g2 = obs.keypoint(binding(cfg, 1)?)?;
    let offset = match &cfg.theta {
        Theta::Offset(o) => *o,
        other => return Err(ControllerError::InvalidConfig(format!("{other:?}"))),
    };
    Ok(position_law(
        g2 + offset - g1,
        &cfg.gains,
        &cfg.limits,
        cfg.done_tol,
        state,
    ))
}

/// PosAlign toward a sequence of desired points, advancing when within
/// tolerance. Done once the last point is reached.
pub fn step_tracking(
    cfg: &ControllerConfig,
    generator: &dyn TrajectoryGenerator,
    obs: &ObservationBundle,
    state: &mut ControllerState,
) -> Result<ControllerOutput, ControllerError> {
    if generator.is_empty() {
        return Err(ControllerError::EmptyWaypointList);
    }
    let g1 = obs.keypoint(binding(cfg, 0)?)?;
    let g2 = obs.keypoint(binding(cfg, 1)?)?;
    let axis = obs.axis(binding(cfg, 2)?)?;
    let last = generator.len() - 1;
    state.waypoint = state.waypoint.min(last);
    let mut error = generator.desired(state.waypoint, &g2, &axis) - g1;
    while state.waypoint < last && error.norm() <= cfg.done_tol {
        state.waypoint += 1;
        error = generator.desired(state.waypoint, &g2, &axis) - g1;
    }
    let mut out = position_law(error, &cfg.gains, &cfg.limits, cfg.done_tol, state);
    out.done &= state.waypoint == last;
    Ok(out)
}

pub fn step_pos_waypoint(
    cfg: &ControllerConfig,
    obs: &ObservationBundle,
    state: &mut ControllerState,
) -> Result<ControllerOutput, ControllerError> {
    expect_kind(cfg, ControllerKind::PosWaypoint)?;
    let offsets = match &cfg.theta {
        Theta::Waypoints(w) => w,
        other => return Err(ControllerError::InvalidConfig(format!("{other:?}"))),
    };
    step_tracking(cfg, &WaypointSchedule { offsets }, obs, state)
}

/// Rotates the tool so that its axis `α1`, offset by θ in the end-effector
/// frame, lines up with `α2`.
pub fn step_axis_align(
    cfg: &ControllerConfig,
    obs: &ObservationBundle,
    state: &mut ControllerState,
) -> Result<ControllerOutput, ControllerError> {
    expect_kind(cfg, ControllerKind::AxisAlign)?;
    let a1 = obs.axis(binding(cfg, 0)?)?;
    let a2 = obs.axis(binding(cfg, 1)?)?;
    let euler = match &cfg.theta {
        Theta::Euler(e) => *e,
        other => return Err(ControllerError::InvalidConfig(format!("{other:?}"))),
    };
    let offset = Rotation3::from_euler_angles(euler[0], euler[1], euler[2]);
    let r = obs.ee.rotation;
    let a1_offset = a1.rotate(&(r * offset * r.inverse()));
    let omega = rotation_between_axes(&a1_offset, &a2);
    let angle = omega.norm();
    if angle < INACTIVE_EPS {
        return Ok(ControllerOutput {
            primary_axis: state.fallback_axis(),
            action: 0.0,
            done: angle <= cfg.done_tol,
            inactive: true,
            error: angle,
        });
    }
    let axis = UnitAxis::new_unchecked(omega / angle);
    state.last_axis = Some(axis);
    Ok(ControllerOutput {
        primary_axis: axis,
        action: (cfg.gains.kr * angle).min(cfg.limits.w_max),
        done: angle <= cfg.done_tol,
        inactive: false,
        error: angle,
    })
}

/// Admittance servo of the force component along `α1` toward θ.
pub fn step_force_align(
    cfg: &ControllerConfig,
    obs: &ObservationBundle,
    state: &mut ControllerState,
) -> Result<ControllerOutput, ControllerError> {
    expect_kind(cfg, ControllerKind::ForceAlign)?;
    let a1 = obs.axis(binding(cfg, 0)?)?;
    let target = match &cfg.theta {
        Theta::Force(f) => *f,
        other => return Err(ControllerError::InvalidConfig(format!("{other:?}"))),
    };
    let measured = obs.measured_force.dot(a1.as_vec());
    let err = target - measured;
    state.last_axis = Some(a1);
    let v = cfg.limits.v_max;
    Ok(ControllerOutput {
        primary_axis: a1,
        action: (cfg.gains.kf * err).clamp(-v, v),
        done: false,
        inactive: false,
        error: err,
    })
}

pub fn step(
    cfg: &ControllerConfig,
    obs: &ObservationBundle,
    state: &mut ControllerState,
) -> Result<ControllerOutput, ControllerError> {
    match cfg.kind {
        ControllerKind::PosAlign => step_pos_align(cfg, obs, state),
        ControllerKind::PosWaypoint => step_pos_waypoint(cfg, obs, state),
        ControllerKind::AxisAlign => step_axis_align(cfg, obs, state),
        ControllerKind::ForceAlign => step_force_align(cfg, obs, state),
    }
}
