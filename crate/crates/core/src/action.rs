//! Candidate motion rays inside a chosen view and their collision-safe execution.

use crate::geometry::{wrap_360, AgentPose, CameraIntrinsics};
use crate::perception::NavMask;
use crate::scene::Scene;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RayParams {
    pub n_rays: usize,
    /// Longest translation per action, meters.
    pub max_step: f64,
    /// Rays shorter than this are discarded.
    pub min_useful: f64,
}

impl Default for RayParams {
    fn default() -> Self {
        Self {
            n_rays: 7,
            max_step: 1.5,
            min_useful: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRay {
    pub index: usize,
    /// World heading, degrees.
    pub heading: f64,
    /// Offset from the view's optical axis, degrees (counter-clockwise positive).
    pub offset: f64,
    pub length: f64,
    pub endpoint: (f64, f64),
}

impl CandidateRay {
    pub fn is_rotation(&self) -> bool {
        self.length == 0.0
    }
}

/// How far a disc of radius `mask.clearance` can slide along `offset` before touching any
/// obstacle point seen by the view's depth columns.
fn swept_length(mask: &NavMask, intr: &CameraIntrinsics, offset: f64) -> f64 {
    let r = mask.clearance;
    let mut free = f64::INFINITY;
    for (c, range) in mask.traversable_range.iter().enumerate() {
        let rho = range + r;
        let delta = (intr.column_offset(c as f64 + 0.5) - offset).to_radians();
        let (lateral, along) = (rho * delta.sin().abs(), rho * delta.cos());
        if along <= 0.0 || lateral >= r {
            continue;
        }
        free = free.min(along - (r * r - lateral * lateral).sqrt());
    }
    free.max(0.0)
}

/// Evenly spaced rays over the view's field of view, one per angular bin centre, ordered by
/// offset from the clockwise edge to the counter-clockwise edge.
///
/// A ray is as long as the column's traversable range allows, further shortened so that the
/// agent's whole footprint clears obstacles seen in neighbouring columns.
///
/// Falls back to a single zero-length ray along the view axis when every ray is too short.
pub fn sample_rays(
    mask: &NavMask,
    pose: &AgentPose,
    intr: &CameraIntrinsics,
    params: &RayParams,
) -> Vec<CandidateRay> {
    let fov = intr.hfov();
    let n = params.n_rays.max(1);
    let mut rays = Vec::with_capacity(n);
    for i in 0..n {
        let offset = (i as f64 + 0.5) / n as f64 * fov - fov / 2.0;
        let column = intr.column_for_offset(offset);
        let length = params
            .max_step
            .min(mask.traversable_range[column])
            .min(swept_length(mask, intr, offset));
        if length < params.min_useful {
            continue;
        }
        let heading = wrap_360(mask.heading + offset);
        let r = heading.to_radians();
        rays.push(CandidateRay {
            index: rays.len(),
            heading,
            offset,
            length,
            endpoint: (pose.x + length * r.cos(), pose.y + length * r.sin()),
        });
    }
    if rays.is_empty() {
        rays.push(CandidateRay {
            index: 0,
            heading: wrap_360(mask.heading),
            offset: 0.0,
            length: 0.0,
            endpoint: pose.position(),
        });
    }
    rays
}

/// Resolution of the clearance re-check along a ray, meters.
pub const EXECUTION_CHECK_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Executed {
    pub pose: AgentPose,
    /// Translation actually performed, meters.
    pub distance: f64,
}

/// Turns to the ray's heading and drives along it until the ray ends or the next check point
/// would bring the agent within `agent_radius` of an obstacle.
pub fn execute(scene: &Scene, pose: &AgentPose, ray: &CandidateRay, agent_radius: f64) -> Executed {
    let r = ray.heading.to_radians();
    let (dx, dy) = (r.cos(), r.sin());
    let steps = (ray.length / EXECUTION_CHECK_STEP).ceil() as usize;
    let mut travelled = 0.0;
    for k in 1..=steps {
        let d = if k == steps {
            ray.length
        } else {
            ray.length * k as f64 / steps as f64
        };
        if !scene.is_clear(pose.x + d * dx, pose.y + d * dy, agent_radius) {
            break;
        }
        travelled = d;
    }
    Executed {
        pose: AgentPose::new(pose.x + travelled * dx, pose.y + travelled * dy, ray.heading),
        distance: travelled,
    }
}
