//! Null-space projection of prioritized controller axes and composition of
//! the resulting end-effector twist.

use crate::controllers::{ControllerOutput, Limits};
use crate::geometry::{UnitAxis, Vec3};
use serde::{Deserialize, Serialize};

/// Residual norm below which a lower-priority axis is dropped.
pub const PROJECTION_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectedEntry {
    /// `α̂`, or `None` when the controller was projected away.
    pub axis: Option<UnitAxis>,
    /// `û`
    pub action: f64,
    pub active: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProjectedCommand {
    pub entries: Vec<ProjectedEntry>,
}

impl ProjectedCommand {
    /// `Σ û·α̂` over active entries.
    pub fn sum(&self) -> Vec3 {
        self.entries
            .iter()
            .filter_map(|e| e.axis.map(|a| a.as_vec() * e.action))
            .fold(Vec3::zeros(), |acc, v| acc + v)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Twist {
    /// m/s
    pub v: Vec3,
    /// rad/s
    pub w: Vec3,
}

impl Twist {
    pub fn zero() -> Self {
        Twist::default()
    }
}

fn remove_components(v: Vec3, basis: &[Vec3]) -> Vec3 {
    basis.iter().fold(v, |r, b| r - b * b.dot(&r))
}

/// Gram-Schmidt of each axis against the already projected, active
/// higher-priority axes. Entries whose residual falls below
/// [`PROJECTION_EPS`] come back as `None`.
pub fn project_axes(axes: &[UnitAxis]) -> Vec<Option<UnitAxis>> {
    let mut basis: Vec<Vec3> = Vec::with_capacity(3);
    axes.iter()
        .map(|a| {
            let r = remove_components(*a.as_vec(), &basis);
            let n = r.norm();
            if !(n >= PROJECTION_EPS) {
                return None;
            }
            // A second pass cleans up the round-off amplified by a small residual.
            let r = remove_components(r / n, &basis);
            let hat = r.normalize();
            basis.push(hat);
            Some(UnitAxis::new_unchecked(hat))
        })
        .collect()
}

/// [`project_axes`] over controller outputs. A controller reporting itself
/// inactive neither moves nor reserves a direction, so it is skipped.
pub fn project_outputs(outputs: &[ControllerOutput]) -> Vec<Option<UnitAxis>> {
    let live: Vec<UnitAxis> = outputs
        .iter()
        .filter(|o| !o.inactive)
        .map(|o| o.primary_axis)
        .collect();
    let mut projected = project_axes(&live).into_iter();
    outputs
        .iter()
        .map(|o| if o.inactive { None } else { projected.next().flatten() })
        .collect()
}

/// `û_i = u_i · (α_i · α̂_i)` for surviving entries, zero otherwise.
pub fn project_actions(
    outputs: &[ControllerOutput],
    projected: &[Option<UnitAxis>],
) -> ProjectedCommand {
    assert_eq!(outputs.len(), projected.len(), "lists must align by priority");
    let entries = outputs
        .iter()
        .zip(projected)
        .map(|(out, hat)| match hat {
            Some(h) => ProjectedEntry {
                axis: Some(*h),
                action: out.action * out.primary_axis.dot(h),
                active: true,
            },
            None => ProjectedEntry {
                axis: None,
                action: 0.0,
                active: false,
            },
        })
        .collect();
    ProjectedCommand { entries }
}

fn clamp_norm(v: Vec3, max: f64) -> Vec3 {
    let n = v.norm();
    if n > max {
        v * (max / n)
    } else {
        v
    }
}

pub fn compose_twist(trans: &ProjectedCommand, rot: &ProjectedCommand, limits: &Limits) -> Twist {
    Twist {
        v: clamp_norm(trans.sum(), limits.v_max),
        w: clamp_norm(rot.sum(), limits.w_max),
    }
}
