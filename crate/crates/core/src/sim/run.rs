//! End-to-end skill execution in the simulator: ground every role, then run
//! the phases in order, grasping when a phase asks for it.

use super::render::{render, RenderConfig};
use super::scene::Scene;
use super::state::{Simulator, DEFAULT_GRASP_TOL};
use super::SimError;
use crate::controllers::{ControllerKind, Limits};
use crate::grounding::{cloud_from_depth, ground_spec, GroundedParams, GroundingConfig, GroundingError, GroundingSpec};
use crate::matching::io::load_grid;
use crate::matching::FeatureGrid;
use crate::skill::executor::{
    observe, run_phase, ControllerRecord, ExecError, PhaseStatus, RoleGrounding, TickRecord,
};
use crate::skill::{CompiledPhase, ControllerDefaults, LiftedSkill};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// Descriptor settings for the target render; its seed is taken from
    /// `seed`.
    pub render: RenderConfig,
    pub grounding: GroundingConfig,
    pub defaults: ControllerDefaults,
    /// Clamp applied to the composed twist.
    pub limits: Limits,
    pub grasp_tol: f64,
    /// Overrides the scene's time step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            render: RenderConfig::default(),
            grounding: GroundingConfig::default(),
            defaults: ControllerDefaults::default(),
            limits: Limits {
                v_max: 0.25,
                w_max: 1.5,
            },
            grasp_tol: DEFAULT_GRASP_TOL,
            dt: None,
        }
    }
}

/// Gain-step stability bounds of the explicit integrator: `kp·dt ≤ 1`,
/// `kr·dt ≤ 1` and `kf·k_max·dt < 1`.
pub fn check_stability(phase: &CompiledPhase, dt: f64, k_max: f64) -> Result<(), SimError> {
    for c in phase.controllers() {
        c.validate()
            .map_err(|e| SimError::InvalidConfig(format!("phase `{}`: {e}", phase.name)))?;
        let (name, product, ok) = match c.kind {
            ControllerKind::PosAlign | ControllerKind::PosWaypoint => {
                ("kp·dt", c.gains.kp * dt, c.gains.kp * dt <= 1.0)
            }
            ControllerKind::AxisAlign => ("kr·dt", c.gains.kr * dt, c.gains.kr * dt <= 1.0),
            ControllerKind::ForceAlign => {
                let p = c.gains.kf * k_max * dt;
                ("kf·k·dt", p, p < 1.0)
            }
        };
        if !ok {
            return Err(SimError::Unstable(format!(
                "phase `{}`: {} {name} = {product}",
                phase.name, c.kind
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoleInputs {
    pub spec: GroundingSpec,
    pub reference: FeatureGrid,
}

/// Reference features from a `.fgrd` file or, for a `.json` scene file, a
/// noiseless render of that scene.
pub fn load_reference(path: &Path, render_cfg: &RenderConfig) -> Result<FeatureGrid, SimError> {
    if path.extension().is_some_and(|e| e == "json") {
        let scene = Scene::load(path)?;
        let cfg = RenderConfig {
            noise_sigma: 0.0,
            ..*render_cfg
        };
        Ok(render(&scene, &scene.initial_poses(), &cfg)?.features)
    } else {
        load_grid(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))
    }
}

/// Loads every role's grounding spec and reference features; paths resolve
/// relative to `skill_dir`, and reference paths relative to their spec.
pub fn load_role_inputs(
    skill: &LiftedSkill,
    skill_dir: &Path,
    render_cfg: &RenderConfig,
) -> Result<BTreeMap<String, RoleInputs>, SimError> {
    let mut out = BTreeMap::new();
    for u in &skill.uses {
        let spec_path = skill_dir.join(&u.spec);
        let text = std::fs::read_to_string(&spec_path)
            .map_err(|e| SimError::Io(format!("{}: {e}", spec_path.display())))?;
        let spec: GroundingSpec = serde_json::from_str(&text)
            .map_err(|e| SimError::InvalidScene(format!("{}: {e}", spec_path.display())))?;
        let dir = spec_path.parent().unwrap_or(Path::new("."));
        let reference = load_reference(&dir.join(&spec.reference_image), render_cfg)?;
        out.insert(u.role.clone(), RoleInputs { spec, reference });
    }
    Ok(out)
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum RunError {
    #[error("grounding `{role}`: {source}")]
    Grounding {
        role: String,
        source: GroundingError,
    },
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub name: String,
    pub status: PhaseStatus,
    pub ticks: u64,
    pub final_controllers: Vec<ControllerRecord>,
    /// Grounded parameters per role when the phase ended.
    pub final_grounded: BTreeMap<String, GroundedParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grasped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub skill: String,
    pub success: bool,
    pub ticks: u64,
    pub phases: Vec<PhaseReport>,
}

/// Grounds every role once in a render of the initial scene, then runs
/// `skill` phase by phase. Roles are scene object names; grounded values
/// follow their object's pose, so a held tool carries its keypoints and
/// axes along.
pub fn run_skill(
    skill: &LiftedSkill,
    sim: &mut Simulator,
    inputs: &BTreeMap<String, RoleInputs>,
    cfg: &RunConfig,
    mut log: impl FnMut(&TickRecord),
) -> Result<Outcome, RunError> {
    if let Some(dt) = cfg.dt {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SimError::InvalidConfig(format!("dt must be positive, got {dt}")).into());
        }
        sim.state.dt = dt;
    }
    for u in &skill.uses {
        if sim.scene.object(&u.role).is_none() {
            return Err(SimError::UnknownObject(u.role.clone()).into());
        }
        if !inputs.contains_key(&u.role) {
            return Err(SimError::MissingInput(u.role.clone()).into());
        }
    }
    let k_max = sim.scene.max_stiffness();
    let phases: Vec<CompiledPhase> = skill
        .phases
        .iter()
        .map(|p| CompiledPhase::compile(p, &cfg.defaults))
        .collect();
    for p in &phases {
        check_stability(p, sim.state.dt, k_max)?;
    }

    let rcfg = RenderConfig {
        seed: cfg.seed,
        stream: 0,
        ..cfg.render
    };
    let target = render(&sim.scene, &sim.state.poses, &rcfg)?;
    let cloud = cloud_from_depth(&target.depth, &sim.scene.camera);
    let mut groundings: BTreeMap<String, RoleGrounding> = BTreeMap::new();
    for u in &skill.uses {
        let input = &inputs[&u.role];
        let mut params = ground_spec(
            &input.spec,
            &input.reference,
            &target.features,
            &target.depth,
            &cloud,
            &sim.scene.camera,
            &cfg.grounding,
        )
        .map_err(|source| RunError::Grounding {
            role: u.role.clone(),
            source,
        })?;
        params.timestamp = sim.state.t;
        groundings.insert(
            u.role.clone(),
            RoleGrounding {
                params,
                pose_at_grounding: sim.pose_of(&u.role),
            },
        );
    }

    let mut reports = Vec::new();
    let mut success = true;
    for phase in &phases {
        let result = run_phase(phase, &groundings, sim, &cfg.limits, |r| log(&r))?;
        let final_grounded = observe(sim, &groundings)
            .grounded
            .into_iter()
            .filter(|(r, _)| groundings.contains_key(r))
            .collect();
        let mut report = PhaseReport {
            name: phase.name.clone(),
            status: result.status,
            ticks: result.ticks,
            final_controllers: result.final_controllers,
            final_grounded,
            grasped: None,
        };
        if result.status != PhaseStatus::Done {
            success = false;
            reports.push(report);
            break;
        }
        if let Some(g) = &phase.grasp {
            sim.grasp(&g.role, &g.label, cfg.grasp_tol)?;
            report.grasped = Some(g.role.clone());
        }
        reports.push(report);
    }
    Ok(Outcome {
        skill: skill.name.clone(),
        success,
        ticks: sim.state.t,
        phases: reports,
    })
}
