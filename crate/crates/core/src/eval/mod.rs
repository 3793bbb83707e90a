//! Episode runner, SR/SPL scoring and the batch harnesses built on them.

mod metrics;
mod report;
mod suite;

pub use metrics::{compute_metrics, spl_contribution, Metrics};
pub use report::{write_episode_log, write_run_outputs, EpisodeSummary, SummaryReport};
pub use suite::{build_suite, episode_seed, run_suite, sweep_k, SuiteSpec, SweepRow, SweepTable};

use crate::action::{execute, sample_rays, CandidateRay, RayParams};
use crate::advisor::{
    Advisor, AdvisorError, AdvisorRequest, RejectedSighting, ScriptedAdvisor, ScriptedPolicy,
    StructuredResponse, WithFallback,
};
use crate::geometry::{bearing, distance, wrap_180, AgentPose};
use crate::memory::{MemoryBuffer, MemoryNode};
use crate::perception::{nav_mask, render_observation, NavMask, Observation, OracleConfig, SensorConfig};
use crate::rethink::{run_rethink, stop_flag, RethinkConfig, RethinkOutcome, RethinkSwitches, StepContext};
use crate::scene::{geodesic_to_object, geodesic_to_targets, Scene};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no episode results to score")]
    Empty,
    #[error("the sweep needs at least one memory capacity")]
    NoCapacities,
    #[error("invalid episode: {0}")]
    Episode(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Scene(#[from] crate::scene::SceneError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvisorKind {
    Scripted,
    Remote,
}

/// Which parts of the system are switched on for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub enable_mode_a: bool,
    pub enable_mode_b: bool,
    pub memory_capacity: usize,
    pub oracle: OracleConfig,
    pub advisor_kind: AdvisorKind,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            enable_mode_a: true,
            enable_mode_b: true,
            memory_capacity: 10,
            oracle: OracleConfig::default(),
            advisor_kind: AdvisorKind::Scripted,
        }
    }
}

/// Fixed embodiment and controller parameters shared by every episode of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub sensor: SensorConfig,
    pub agent_radius: f64,
    pub safety_margin: f64,
    pub rays: RayParams,
    pub rethink: RethinkConfig,
    pub policy: ScriptedPolicy,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            sensor: SensorConfig::default(),
            agent_radius: 0.18,
            safety_margin: crate::perception::DEFAULT_SAFETY_MARGIN,
            rays: RayParams::default(),
            rethink: RethinkConfig::default(),
            policy: ScriptedPolicy::default(),
        }
    }
}

pub const DEFAULT_MAX_STEPS: u32 = 40;

#[derive(Debug, Clone)]
pub struct EpisodeSpec {
    pub scene: Arc<Scene>,
    pub target_category: String,
    pub max_steps: u32,
    pub success_distance: f64,
    pub seed: u64,
}

impl EpisodeSpec {
    pub fn new(
        scene: Arc<Scene>,
        target_category: impl Into<String>,
        max_steps: u32,
        success_distance: f64,
        seed: u64,
    ) -> Result<Self, EvalError> {
        let target_category = target_category.into();
        if scene.targets(&target_category).next().is_none() {
            return Err(EvalError::Episode(format!(
                "scene `{}` has no `{target_category}` to find",
                scene.name
            )));
        }
        if max_steps == 0 {
            return Err(EvalError::Episode("max_steps must be positive".into()));
        }
        if !(success_distance > 0.0) {
            return Err(EvalError::Episode("success_distance must be positive".into()));
        }
        Ok(Self {
            scene,
            target_category,
            max_steps,
            success_distance,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u32,
    pub pose: AgentPose,
    pub response: StructuredResponse,
    pub rethink: RethinkOutcome,
    pub goal_estimate: Option<(f64, f64)>,
    pub stop: bool,
    pub rays_offered: usize,
    pub chosen_ray: Option<CandidateRay>,
    pub moved: f64,
    pub memory_digest: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub substitutions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub scene: String,
    pub target_category: String,
    pub seed: u64,
    pub success: bool,
    /// Total translation, meters.
    pub path_length: f64,
    /// Geodesic from the start to the success boundary; `None` when unreachable.
    pub shortest_length: Option<f64>,
    pub steps_used: u32,
    pub stop_issued: bool,
    pub trajectory: Vec<AgentPose>,
    pub step_records: Vec<StepRecord>,
    pub error: Option<String>,
}

impl EpisodeResult {
    /// A bare result carrying only the scored quantities.
    pub fn scored(success: bool, path_length: f64, shortest_length: f64) -> Self {
        Self {
            scene: String::new(),
            target_category: String::new(),
            seed: 0,
            success,
            path_length,
            shortest_length: Some(shortest_length),
            steps_used: 0,
            stop_issued: success,
            trajectory: Vec::new(),
            step_records: Vec::new(),
            error: None,
        }
    }

    pub fn spl(&self) -> f64 {
        spl_contribution(self.success, self.path_length, self.shortest_length.unwrap_or(0.0))
    }

    pub fn final_pose(&self) -> Option<&AgentPose> {
        self.trajectory.last()
    }
}

/// Number of trajectory positions that come back within `radius` of an earlier position.
/// Consecutive repeats (turning on the spot) do not count.
pub fn revisit_count(trajectory: &[AgentPose], radius: f64) -> usize {
    let mut visited: Vec<(f64, f64)> = Vec::with_capacity(trajectory.len());
    let mut revisits = 0;
    for p in trajectory.iter().map(AgentPose::position) {
        if visited.last() == Some(&p) {
            continue;
        }
        if visited.iter().any(|&q| distance(p, q) < radius) {
            revisits += 1;
        }
        visited.push(p);
    }
    revisits
}

/// Where the agent believes the verified target is: the detected instance in the chosen view,
/// or failing that the depth reading straight down the view axis.
fn goal_estimate(obs: &Observation, direction: u16, target: &str) -> Option<(f64, f64)> {
    let view = obs.view(direction)?;
    if let Some(det) = view.detection(target) {
        return Some(det.position(&obs.pose));
    }
    let depth = view.column_depth[view.column_depth.len() / 2];
    let r = view.heading.to_radians();
    Some((obs.pose.x + depth * r.cos(), obs.pose.y + depth * r.sin()))
}

struct Episode<'a> {
    spec: &'a EpisodeSpec,
    ablation: &'a AblationConfig,
    system: &'a SystemConfig,
    oracle: OracleConfig,
    pose: AgentPose,
    buffer: MemoryBuffer,
    rejected: Vec<RejectedSighting>,
    path_length: f64,
    trajectory: Vec<AgentPose>,
    records: Vec<StepRecord>,
    stop_issued: bool,
}

impl Episode<'_> {
    fn step(&mut self, step: u32, advisor: &WithFallback) -> Result<bool, String> {
        let scene = &*self.spec.scene;
        let target = self.spec.target_category.as_str();
        let sys = self.system;
        let obs = render_observation(scene, &self.pose, &sys.sensor, &self.oracle, step)
            .map_err(|e| e.to_string())?;
        let masks: Vec<NavMask> = obs
            .views
            .iter()
            .map(|v| nav_mask(v, sys.agent_radius, sys.safety_margin))
            .collect();

        let response = advisor
            .decide(&AdvisorRequest::decide(target, &obs, &self.rejected))
            .map_err(|e| e.to_string())?;
        self.buffer
            .push(MemoryNode {
                position: self.pose.position(),
                yaw: self.pose.yaw,
                direction: response.a_dir,
                explanation: response.e.clone(),
                description: response.d.clone(),
                step,
            })
            .map_err(|e| e.to_string())?;

        let switches = RethinkSwitches {
            decision_evaluation: self.ablation.enable_mode_a && self.ablation.memory_capacity > 0,
            target_verification: self.ablation.enable_mode_b,
        };
        let ctx = StepContext {
            target,
            observation: &obs,
            masks: &masks,
            buffer: &self.buffer,
            sensor: &sys.sensor,
            rejected: &self.rejected,
        };
        let outcome = run_rethink(&ctx, &response, advisor, &sys.rethink, switches)
            .map_err(|e: AdvisorError| format!("step {step}: {e}"))?;

        if outcome.mode_taken == crate::rethink::RethinkMode::ModeBFailThenA {
            if let Some(det) = obs.view(response.a_dir).and_then(|v| v.detection(target)) {
                self.rejected.push(RejectedSighting {
                    category: det.category.clone(),
                    position: det.position(&obs.pose),
                });
            }
        }

        let goal = if outcome.verified {
            goal_estimate(&obs, outcome.final_direction, target)
        } else {
            None
        };
        let mut record = StepRecord {
            step,
            pose: self.pose,
            response,
            rethink: outcome,
            goal_estimate: goal,
            stop: false,
            rays_offered: 0,
            chosen_ray: None,
            moved: 0.0,
            memory_digest: self.buffer.digest(),
            substitutions: Vec::new(),
        };

        if goal.is_some_and(|g| stop_flag(self.pose.position(), g, &sys.rethink)) {
            record.stop = true;
            record.substitutions = advisor.take_substitutions();
            self.records.push(record);
            self.stop_issued = true;
            return Ok(true);
        }

        let chosen = masks
            .iter()
            .find(|m| m.view_yaw == record.rethink.final_direction)
            .expect("one mask per view");
        let mut detour = None;
        let (mask, rays) = self.usable_rays(chosen, &masks, &mut detour);
        if let Some(note) = detour {
            record.substitutions.push(note);
        }
        let toward = goal.map_or(mask.heading, |g| bearing(self.pose.position(), g));
        let k = advisor
            .pick_ray(&AdvisorRequest::pick_ray(target, &obs), &rays, toward)
            .map_err(|e| e.to_string())?;
        let ray = rays.get(k).ok_or_else(|| format!("ray index {k} out of range"))?;
        let done = execute(scene, &self.pose, ray, sys.agent_radius);
        self.path_length += done.distance;
        self.pose = done.pose;
        self.trajectory.push(done.pose);

        record.rays_offered = rays.len();
        record.chosen_ray = Some(ray.clone());
        record.moved = done.distance;
        let mut subs = advisor.take_substitutions();
        subs.append(&mut record.substitutions);
        record.substitutions = subs;
        self.records.push(record);
        Ok(false)
    }
}

impl Episode<'_> {
    /// Rays of the chosen view. When its footprint is blocked everywhere, the angularly
    /// nearest view with a usable ray is driven instead and the detour is noted.
    fn usable_rays<'m>(
        &self,
        chosen: &'m NavMask,
        masks: &'m [NavMask],
        note: &mut Option<String>,
    ) -> (&'m NavMask, Vec<CandidateRay>) {
        let sys = self.system;
        let rays = sample_rays(chosen, &self.pose, &sys.sensor.intrinsics, &sys.rays);
        if !rays[0].is_rotation() {
            return (chosen, rays);
        }
        let mut others: Vec<&NavMask> = masks.iter().filter(|m| m.view_yaw != chosen.view_yaw).collect();
        others.sort_by_key(|m| {
            let d = wrap_180(f64::from(m.view_yaw) - f64::from(chosen.view_yaw)).abs();
            // ties go to the counter-clockwise neighbour
            (d.round() as i64, m.view_yaw < chosen.view_yaw)
        });
        for m in others {
            let alt = sample_rays(m, &self.pose, &sys.sensor.intrinsics, &sys.rays);
            if !alt[0].is_rotation() {
                *note = Some(format!("view {} blocked at the footprint; moved along view {}", chosen.view_yaw, m.view_yaw));
                return (m, alt);
            }
        }
        (chosen, rays)
    }
}

/// Runs one episode to a stop or to the step budget. Never panics on advisor trouble:
/// failures are recorded in [`EpisodeResult::error`] and score as unsuccessful.
pub fn run_episode(
    spec: &EpisodeSpec,
    ablation: &AblationConfig,
    system: &SystemConfig,
    advisor: &dyn Advisor,
) -> EpisodeResult {
    let scene = &*spec.scene;
    let start = scene.start_pose;
    let fallback = WithFallback::new(advisor, ScriptedAdvisor::with_policy(spec.seed, system.policy));
    let mut ep = Episode {
        spec,
        ablation,
        system,
        oracle: OracleConfig {
            seed: ablation.oracle.seed ^ spec.seed.rotate_left(29),
            ..ablation.oracle.clone()
        },
        pose: start,
        buffer: MemoryBuffer::new(ablation.memory_capacity),
        rejected: Vec::new(),
        path_length: 0.0,
        trajectory: vec![start],
        records: Vec::new(),
        stop_issued: false,
    };

    let mut error = None;
    let mut steps_used = 0;
    for step in 0..spec.max_steps {
        steps_used = step + 1;
        match ep.step(step, &fallback) {
            Ok(true) => break,
            Ok(false) => {}
            Err(e) => {
                log::warn!("{} / {}: episode aborted: {e}", scene.name, spec.target_category);
                error = Some(e);
                break;
            }
        }
    }

    let instances: Vec<usize> = scene
        .objects
        .iter()
        .enumerate()
        .filter(|(_, o)| o.category == spec.target_category && o.decoy_of.is_none())
        .map(|(k, _)| k)
        .collect();
    let here = ep.pose.position();
    let reached = ep.stop_issued
        && error.is_none()
        && instances.iter().any(|&k| {
            geodesic_to_object(scene, here, k, spec.success_distance)
                .ok()
                .flatten()
                .is_some_and(|d| d < spec.success_distance)
        });
    let centers: Vec<(f64, f64)> = instances.iter().map(|&k| scene.objects[k].center).collect();
    let shortest = geodesic_to_targets(scene, start.position(), &centers, spec.success_distance, system.agent_radius)
        .ok()
        .flatten();

    EpisodeResult {
        scene: scene.name.clone(),
        target_category: spec.target_category.clone(),
        seed: spec.seed,
        success: reached,
        path_length: ep.path_length,
        shortest_length: shortest,
        steps_used,
        stop_issued: ep.stop_issued,
        trajectory: ep.trajectory,
        step_records: ep.records,
        error,
    }
}
