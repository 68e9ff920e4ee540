//! Desk-scale simulator: scenes, synthetic feature rendering, kinematic
//! stepping with penalty contact, skill runs and grounding validation.

pub mod render;
pub mod run;
pub mod scene;
pub mod state;
pub mod validate;

use thiserror::Error;

pub use render::{annotate, render, render_scene, RenderConfig, Rendered};
pub use run::{load_role_inputs, run_skill, Outcome, RoleInputs, RunConfig, RunError};
pub use scene::Scene;
pub use state::{grasp, step, SimState, Simulator};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SimError {
    #[error("scene has no objects")]
    EmptyScene,
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("unstable gains: {0}")]
    Unstable(String),
    #[error("{0}")]
    Io(String),
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("object `{object}` has no keypoint `{keypoint}`")]
    UnknownKeypoint { object: String, keypoint: String },
    #[error("object `{0}` is not graspable")]
    NotGraspable(String),
    #[error("grasp keypoint is {distance:.4} m from the gripper")]
    GraspTooFar { distance: f64 },
    #[error("no grounding inputs for role `{0}`")]
    MissingInput(String),
}
