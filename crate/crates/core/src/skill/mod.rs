//! Lifted skills: the parsed program, its compilation into controller
//! configs, and phase execution.

pub mod dsl;
pub mod executor;
pub mod projection;

use crate::controllers::{
    Binding, ControllerClass, ControllerConfig, ControllerKind, Gains, Limits, Theta,
    DEFAULT_ANGLE_TOL_DEG, DEFAULT_POSITION_TOL, GRIPPER_AXES, GRIPPER_KEYPOINTS, GRIPPER_ROLE,
};
use crate::geometry::Vec3;
use crate::grounding::GroundingSpec;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub use dsl::{parse_skill, print_skill};

/// Same-class controllers per phase; a fourth would always be projected away.
pub const MAX_PRIORITIES: usize = 3;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SkillError {
    #[error("{line}:{col}: syntax error, expected {expected}")]
    SyntaxError {
        line: usize,
        col: usize,
        expected: String,
    },
    #[error("{line}:{col}: unknown controller kind `{name}`")]
    UnknownControllerKind { name: String, line: usize, col: usize },
    #[error("unbound symbol `{0}`")]
    UnboundSymbol(String),
    #[error("phase `{phase}` has more than {MAX_PRIORITIES} {class} controllers")]
    PriorityOverflow { phase: String, class: String },
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("`{binding}` must name {expected}")]
    BindingKind { binding: String, expected: String },
}

/// Controller parameter exactly as written in the source (degrees for
/// AxisAlign angles).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaValue {
    Scalar(f64),
    Vector([f64; 3]),
    List(Vec<[f64; 3]>),
}

/// Optional per-controller overrides, in source units.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kf: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_max: Option<f64>,
    /// deg/s
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_max: Option<f64>,
    /// Metres, or degrees for AxisAlign.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub done_tol: Option<f64>,
}

impl Overrides {
    pub const KEYS: [&'static str; 6] = ["kp", "kr", "kf", "v_max", "w_max", "done_tol"];

    pub fn get(&self, key: &str) -> Option<f64> {
        match key {
            "kp" => self.kp,
            "kr" => self.kr,
            "kf" => self.kf,
            "v_max" => self.v_max,
            "w_max" => self.w_max,
            "done_tol" => self.done_tol,
            _ => None,
        }
    }

    pub fn slot(&mut self, key: &str) -> Option<&mut Option<f64>> {
        match key {
            "kp" => Some(&mut self.kp),
            "kr" => Some(&mut self.kr),
            "kf" => Some(&mut self.kf),
            "v_max" => Some(&mut self.v_max),
            "w_max" => Some(&mut self.w_max),
            "done_tol" => Some(&mut self.done_tol),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerSpec {
    pub kind: ControllerKind,
    pub bindings: Vec<Binding>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<ThetaValue>,
    #[serde(default)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleUse {
    pub role: String,
    pub spec: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillPhase {
    pub name: String,
    pub budget: u64,
    /// Keypoint to grasp once the phase completes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grasp: Option<Binding>,
    pub translational: Vec<ControllerSpec>,
    pub rotational: Vec<ControllerSpec>,
}

impl SkillPhase {
    pub fn controllers(&self) -> impl Iterator<Item = &ControllerSpec> {
        self.rotational.iter().chain(&self.translational)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedSkill {
    pub name: String,
    pub uses: Vec<RoleUse>,
    pub phases: Vec<SkillPhase>,
}

impl LiftedSkill {
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("skill serializes")
    }

    pub fn role(&self, role: &str) -> Option<&RoleUse> {
        self.uses.iter().find(|u| u.role == role)
    }

    /// Checks every binding against the loaded grounding specs: the label
    /// must exist and be a keypoint or an axis as the slot requires.
    pub fn check_bindings(
        &self,
        specs: &BTreeMap<String, GroundingSpec>,
    ) -> Result<(), SkillError> {
        let check = |b: &Binding, want_keypoint: bool| -> Result<(), SkillError> {
            let (is_kp, is_axis) = if b.role == GRIPPER_ROLE {
                (
                    GRIPPER_KEYPOINTS.contains(&b.label.as_str()),
                    GRIPPER_AXES.contains(&b.label.as_str()),
                )
            } else {
                let spec = specs
                    .get(&b.role)
                    .ok_or_else(|| SkillError::UnboundSymbol(b.to_string()))?;
                (
                    spec.keypoint(&b.label).is_some(),
                    spec.axis(&b.label).is_some(),
                )
            };
            if !is_kp && !is_axis {
                return Err(SkillError::UnboundSymbol(b.to_string()));
            }
            if want_keypoint != is_kp {
                return Err(SkillError::BindingKind {
                    binding: b.to_string(),
                    expected: if want_keypoint { "a keypoint" } else { "an axis" }.into(),
                });
            }
            Ok(())
        };
        for phase in &self.phases {
            for c in phase.controllers() {
                for (b, want_kp) in c.bindings.iter().zip(c.kind.binding_slots()) {
                    check(b, *want_kp)?;
                }
            }
            if let Some(g) = &phase.grasp {
                check(g, true)?;
            }
        }
        Ok(())
    }
}

/// Values used where a controller does not override them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerDefaults {
    pub gains: Gains,
    pub limits: Limits,
    /// m
    pub position_tol: f64,
    pub angle_tol_deg: f64,
}

impl Default for ControllerDefaults {
    fn default() -> Self {
        ControllerDefaults {
            gains: Gains::default(),
            limits: Limits::default(),
            position_tol: DEFAULT_POSITION_TOL,
            angle_tol_deg: DEFAULT_ANGLE_TOL_DEG,
        }
    }
}

fn theta_to_si(kind: ControllerKind, theta: &Option<ThetaValue>) -> Theta {
    match (kind, theta) {
        (ControllerKind::PosAlign, Some(ThetaValue::Vector(v))) => Theta::Offset(Vec3::from(*v)),
        (ControllerKind::PosWaypoint, Some(ThetaValue::List(l))) => {
            Theta::Waypoints(l.iter().map(|v| Vec3::from(*v)).collect())
        }
        (ControllerKind::AxisAlign, Some(ThetaValue::Vector(v))) => {
            Theta::Euler(v.map(f64::to_radians))
        }
        (ControllerKind::ForceAlign, Some(ThetaValue::Scalar(f))) => Theta::Force(*f),
        (kind, _) => Theta::default_for(kind)
            .unwrap_or_else(|| panic!("parser guarantees theta for {kind}")),
    }
}

impl ControllerSpec {
    /// SI-unit config with `defaults` filling anything not overridden.
    pub fn to_config(&self, defaults: &ControllerDefaults) -> ControllerConfig {
        let o = &self.overrides;
        let d = defaults;
        let default_tol = match self.kind {
            ControllerKind::AxisAlign => d.angle_tol_deg.to_radians(),
            _ => d.position_tol,
        };
        let done_tol = match (self.kind, o.done_tol) {
            (ControllerKind::AxisAlign, Some(t)) => t.to_radians(),
            (_, Some(t)) => t,
            (_, None) => default_tol,
        };
        ControllerConfig {
            kind: self.kind,
            bindings: self.bindings.clone(),
            theta: theta_to_si(self.kind, &self.theta),
            gains: Gains {
                kp: o.kp.unwrap_or(d.gains.kp),
                kr: o.kr.unwrap_or(d.gains.kr),
                kf: o.kf.unwrap_or(d.gains.kf),
            },
            limits: Limits {
                v_max: o.v_max.unwrap_or(d.limits.v_max),
                w_max: o.w_max.map(f64::to_radians).unwrap_or(d.limits.w_max),
            },
            done_tol,
        }
    }
}

/// A phase with every controller resolved to an SI config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledPhase {
    pub name: String,
    pub budget: u64,
    pub grasp: Option<Binding>,
    pub translational: Vec<ControllerConfig>,
    pub rotational: Vec<ControllerConfig>,
}

impl CompiledPhase {
    pub fn compile(phase: &SkillPhase, defaults: &ControllerDefaults) -> Self {
        CompiledPhase {
            name: phase.name.clone(),
            budget: phase.budget,
            grasp: phase.grasp.clone(),
            translational: phase
                .translational
                .iter()
                .map(|c| c.to_config(defaults))
                .collect(),
            rotational: phase
                .rotational
                .iter()
                .map(|c| c.to_config(defaults))
                .collect(),
        }
    }

    pub fn controllers(&self) -> impl Iterator<Item = &ControllerConfig> {
        self.translational.iter().chain(&self.rotational)
    }

    pub fn list(&self, class: ControllerClass) -> &[ControllerConfig] {
        match class {
            ControllerClass::Translational => &self.translational,
            ControllerClass::Rotational => &self.rotational,
        }
    }
}
