//! Second thoughts on a step's decision.
//!
//! A direction that points back at places stored in memory is handed to the advisor again
//! together with what it saw there (decision evaluation). A claimed target sighting is
//! re-examined before the agent commits to it (target verification); a rejected sighting
//! falls through to decision evaluation.

use crate::advisor::{Advisor, AdvisorError, AdvisorRequest, RejectedSighting, StructuredResponse};
use crate::geometry::{angular_deviation, bearing, distance, AgentPose};
use crate::memory::{MemoryBuffer, MemoryNode};
use crate::perception::{node_in_mask, NavMask, Observation, SensorConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RethinkConfig {
    /// Largest bearing deviation between the chosen direction and a remembered node, degrees.
    pub tau_theta: f64,
    /// Nodes this close to the agent never count, meters.
    pub exclusion_radius: f64,
    /// Stop distance to the goal estimate, meters.
    pub d_thres: f64,
}

impl Default for RethinkConfig {
    fn default() -> Self {
        Self {
            tau_theta: 30.0,
            exclusion_radius: 0.5,
            d_thres: 1.0,
        }
    }
}

impl RethinkConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.tau_theta > 0.0 && self.tau_theta <= 180.0) {
            return Err(format!("tau_theta {} must be in (0, 180]", self.tau_theta));
        }
        if !(self.exclusion_radius > 0.0) || !(self.d_thres > 0.0) {
            return Err("exclusion_radius and d_thres must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RethinkMode {
    None,
    ModeA,
    ModeBPass,
    ModeBFailThenA,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RethinkOutcome {
    pub final_direction: u16,
    pub mode_taken: RethinkMode,
    pub triggered_node: Option<MemoryNode>,
    /// The target claim stands: either confirmed, or accepted unchecked when verification is off.
    pub verified: bool,
    /// Advisor's answer to the decision-evaluation prompt, when one was asked.
    pub revised: Option<StructuredResponse>,
    /// Why verification failed when the advisor itself errored.
    pub verify_error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RethinkSwitches {
    pub decision_evaluation: bool,
    pub target_verification: bool,
}

impl Default for RethinkSwitches {
    fn default() -> Self {
        Self {
            decision_evaluation: true,
            target_verification: true,
        }
    }
}

/// Everything the rethink stage reads about the current step.
#[derive(Clone, Copy)]
pub struct StepContext<'a> {
    pub target: &'a str,
    pub observation: &'a Observation,
    /// One mask per view, in the observation's view order.
    pub masks: &'a [NavMask],
    pub buffer: &'a MemoryBuffer,
    pub sensor: &'a SensorConfig,
    pub rejected: &'a [RejectedSighting],
}

impl StepContext<'_> {
    fn mask(&self, yaw: u16) -> Option<&NavMask> {
        self.masks.iter().find(|m| m.view_yaw == yaw)
    }
}

/// Indices of remembered nodes lying in the traversable region of view `a_dir`, within
/// `tau_theta` of its axis and farther than `exclusion_radius` from the agent.
pub fn check_trigger(
    buffer: &MemoryBuffer,
    a_dir: u16,
    pose: &AgentPose,
    mask: &NavMask,
    sensor: &SensorConfig,
    cfg: &RethinkConfig,
) -> Vec<usize> {
    let here = pose.position();
    let axis = pose.yaw + f64::from(a_dir);
    buffer
        .nodes()
        .enumerate()
        .filter(|(_, n)| {
            distance(n.position, here) > cfg.exclusion_radius
                && angular_deviation(axis, bearing(here, n.position)) < cfg.tau_theta
                && node_in_mask(n.position, pose, sensor, mask)
        })
        .map(|(i, _)| i)
        .collect()
}

fn decision_evaluation(
    ctx: &StepContext,
    response: &StructuredResponse,
    advisor: &dyn Advisor,
    cfg: &RethinkConfig,
    enabled: bool,
) -> Result<(u16, Option<MemoryNode>, Option<StructuredResponse>), AdvisorError> {
    if !enabled || ctx.buffer.is_empty() {
        return Ok((response.a_dir, None, None));
    }
    let Some(mask) = ctx.mask(response.a_dir) else {
        return Err(AdvisorError::Request(format!("no mask for view {}", response.a_dir)));
    };
    let pose = &ctx.observation.pose;
    let hits = check_trigger(ctx.buffer, response.a_dir, pose, mask, ctx.sensor, cfg);
    if hits.is_empty() {
        return Ok((response.a_dir, None, None));
    }
    let node = ctx
        .buffer
        .furthest_hit(&hits, pose.position())
        .expect("hits index stored nodes")
        .clone();
    let req = AdvisorRequest::rethink(ctx.target, ctx.observation, &node.description, ctx.rejected);
    let revised = advisor.rethink(&req, response)?;
    if revised.a_dir == response.a_dir {
        log::debug!("step {}: direction unchanged after review", ctx.observation.step);
    }
    Ok((revised.a_dir, Some(node), Some(revised)))
}

/// Runs at most one verification and at most one re-evaluation for this step.
pub fn run_rethink(
    ctx: &StepContext,
    response: &StructuredResponse,
    advisor: &dyn Advisor,
    cfg: &RethinkConfig,
    switches: RethinkSwitches,
) -> Result<RethinkOutcome, AdvisorError> {
    if response.f_goal {
        if !switches.target_verification {
            return Ok(RethinkOutcome {
                final_direction: response.a_dir,
                mode_taken: RethinkMode::None,
                triggered_node: None,
                verified: true,
                revised: None,
                verify_error: None,
            });
        }
        let claimed = ctx
            .observation
            .view(response.a_dir)
            .ok_or_else(|| AdvisorError::Request(format!("no view {}", response.a_dir)))?;
        let (passed, verify_error) = match advisor.verify(&AdvisorRequest::verify(ctx.target, ctx.observation), claimed) {
            Ok(p) => (p, None),
            Err(e) => (false, Some(e.to_string())),
        };
        if passed {
            return Ok(RethinkOutcome {
                final_direction: response.a_dir,
                mode_taken: RethinkMode::ModeBPass,
                triggered_node: None,
                verified: true,
                revised: None,
                verify_error: None,
            });
        }
        let demoted = StructuredResponse {
            f_goal: false,
            ..response.clone()
        };
        let (dir, node, revised) = decision_evaluation(ctx, &demoted, advisor, cfg, switches.decision_evaluation)?;
        return Ok(RethinkOutcome {
            final_direction: dir,
            mode_taken: RethinkMode::ModeBFailThenA,
            triggered_node: node,
            verified: false,
            revised,
            verify_error,
        });
    }
    let (dir, node, revised) = decision_evaluation(ctx, response, advisor, cfg, switches.decision_evaluation)?;
    Ok(RethinkOutcome {
        final_direction: dir,
        mode_taken: if node.is_some() { RethinkMode::ModeA } else { RethinkMode::None },
        triggered_node: node,
        verified: false,
        revised,
        verify_error: None,
    })
}

/// Strictly inside `d_thres` of the goal estimate.
pub fn stop_flag(current: (f64, f64), goal: (f64, f64), cfg: &RethinkConfig) -> bool {
    distance(current, goal) < cfg.d_thres
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::CandidateRay;
    use crate::advisor::ScriptedAdvisor;
    use crate::perception::{DirectionalView, VIEW_YAWS};
    use std::sync::Mutex;

    fn open_view(yaw: u16, pose: &AgentPose, labels: &[&str], real: bool) -> DirectionalView {
        DirectionalView {
            view_yaw: yaw,
            heading: crate::geometry::wrap_360(pose.yaw + f64::from(yaw)),
            column_depth: vec![6.0; 640],
            labels: labels.iter().map(|s| s.to_string()).collect(),
            label_confidences: Default::default(),
            detections: labels
                .iter()
                .map(|l| crate::perception::Detection {
                    category: l.to_string(),
                    range: 2.0,
                    bearing: pose.yaw + f64::from(yaw),
                    confidence: 1.0,
                })
                .collect(),
            true_categories: if real { labels.iter().map(|s| s.to_string()).collect() } else { Default::default() },
        }
    }

    fn setup(pose: AgentPose, target_view: Option<(u16, bool)>) -> (Observation, Vec<NavMask>) {
        let views: Vec<DirectionalView> = VIEW_YAWS
            .iter()
            .map(|&y| match target_view {
                Some((t, real)) if t == y => open_view(y, &pose, &["tv"], real),
                _ => open_view(y, &pose, &[], false),
            })
            .collect();
        let masks = views.iter().map(|v| crate::perception::nav_mask(v, 0.18, 0.1)).collect();
        (Observation { views, pose, step: 5 }, masks)
    }

    fn node(p: (f64, f64), step: u32, d: &str) -> MemoryNode {
        MemoryNode { position: p, yaw: 0.0, direction: 30, explanation: String::new(), description: d.into(), step }
    }

    /// Counts calls so tests can check the one-call-per-step rule.
    struct Counting {
        inner: ScriptedAdvisor,
        rethinks: Mutex<u32>,
        verifies: Mutex<u32>,
        fail_verify: bool,
    }

    impl Counting {
        fn new(fail_verify: bool) -> Self {
            Self { inner: ScriptedAdvisor::new(0), rethinks: Mutex::new(0), verifies: Mutex::new(0), fail_verify }
        }
    }

    impl Advisor for Counting {
        fn name(&self) -> &str {
            "counting"
        }
        fn decide(&self, req: &AdvisorRequest) -> Result<StructuredResponse, AdvisorError> {
            self.inner.decide(req)
        }
        fn rethink(&self, req: &AdvisorRequest, o: &StructuredResponse) -> Result<StructuredResponse, AdvisorError> {
            *self.rethinks.lock().unwrap() += 1;
            self.inner.rethink(req, o)
        }
        fn verify(&self, req: &AdvisorRequest, v: &DirectionalView) -> Result<bool, AdvisorError> {
            *self.verifies.lock().unwrap() += 1;
            if self.fail_verify {
                return Err(AdvisorError::Timeout);
            }
            self.inner.verify(req, v)
        }
        fn pick_ray(&self, req: &AdvisorRequest, r: &[CandidateRay], t: f64) -> Result<usize, AdvisorError> {
            self.inner.pick_ray(req, r, t)
        }
    }

    #[test]
    fn trigger_examples() {
        let pose = AgentPose::new(0.0, 0.0, 0.0);
        let (_, masks) = setup(pose, None);
        let sensor = SensorConfig::default();
        let cfg = RethinkConfig::default();
        let mask30 = &masks[0];
        let mut buf = MemoryBuffer::new(10);
        assert!(check_trigger(&buf, 30, &pose, mask30, &sensor, &cfg).is_empty());

        let ahead = (1.5 * 30f64.to_radians().cos(), 1.5 * 30f64.to_radians().sin());
        let at = |deg: f64| (2.0 * deg.to_radians().cos(), 2.0 * deg.to_radians().sin());
        buf.push(node(ahead, 1, "")).unwrap();
        buf.push(node(at(50.0), 2, "")).unwrap();
        buf.push(node(at(70.0), 3, "")).unwrap();
        buf.push(node((0.2, 0.1), 4, "")).unwrap();
        buf.push(node(at(210.0), 5, "")).unwrap();
        assert_eq!(check_trigger(&buf, 30, &pose, mask30, &sensor, &cfg), vec![0, 1]);
    }

    #[test]
    fn no_hits_keeps_direction() {
        let pose = AgentPose::new(0.0, 0.0, 0.0);
        let (obs, masks) = setup(pose, None);
        let buf = MemoryBuffer::new(10);
        let sensor = SensorConfig::default();
        let ctx = StepContext { target: "tv", observation: &obs, masks: &masks, buffer: &buf, sensor: &sensor, rejected: &[] };
        let resp = StructuredResponse::new(90, false, "", "x").unwrap();
        let adv = Counting::new(false);
        let out = run_rethink(&ctx, &resp, &adv, &RethinkConfig::default(), RethinkSwitches::default()).unwrap();
        assert_eq!((out.final_direction, out.mode_taken, out.verified), (90, RethinkMode::None, false));
        assert!(out.triggered_node.is_none());
        assert_eq!(*adv.rethinks.lock().unwrap(), 0);
    }

    #[test]
    fn mode_a_runs_once_with_furthest_node() {
        let pose = AgentPose::new(0.0, 0.0, 0.0);
        let (mut obs, _) = setup(pose, None);
        obs.views[0].labels.insert("oven".into());
        let masks: Vec<NavMask> = obs.views.iter().map(|v| crate::perception::nav_mask(v, 0.18, 0.1)).collect();
        let mut buf = MemoryBuffer::new(10);
        let dir = |r: f64| (r * 30f64.to_radians().cos(), r * 30f64.to_radians().sin());
        buf.push(node(dir(1.2), 1, "Angle 30: sink")).unwrap();
        buf.push(node(dir(2.5), 2, "Angle 30: oven")).unwrap();
        let sensor = SensorConfig::default();
        let ctx = StepContext { target: "refrigerator", observation: &obs, masks: &masks, buffer: &buf, sensor: &sensor, rejected: &[] };
        let resp = StructuredResponse::new(30, false, "", "x").unwrap();
        let adv = Counting::new(false);
        let out = run_rethink(&ctx, &resp, &adv, &RethinkConfig::default(), RethinkSwitches::default()).unwrap();
        assert_eq!(out.mode_taken, RethinkMode::ModeA);
        assert_eq!(out.triggered_node.as_ref().unwrap().step, 2);
        assert_ne!(out.final_direction, 30);
        assert_eq!(*adv.rethinks.lock().unwrap(), 1);

        let off = RethinkSwitches { decision_evaluation: false, ..Default::default() };
        let out = run_rethink(&ctx, &resp, &adv, &RethinkConfig::default(), off).unwrap();
        assert_eq!((out.final_direction, out.mode_taken), (30, RethinkMode::None));
    }

    #[test]
    fn verification_paths() {
        let pose = AgentPose::new(0.0, 0.0, 0.0);
        let sensor = SensorConfig::default();
        let buf = MemoryBuffer::new(10);
        let resp = StructuredResponse::new(150, true, "", "x").unwrap();

        let (obs, masks) = setup(pose, Some((150, true)));
        let ctx = StepContext { target: "tv", observation: &obs, masks: &masks, buffer: &buf, sensor: &sensor, rejected: &[] };
        let adv = Counting::new(false);
        let out = run_rethink(&ctx, &resp, &adv, &RethinkConfig::default(), RethinkSwitches::default()).unwrap();
        assert_eq!((out.final_direction, out.mode_taken, out.verified), (150, RethinkMode::ModeBPass, true));

        let (obs, masks) = setup(pose, Some((150, false)));
        let ctx = StepContext { observation: &obs, masks: &masks, ..ctx };
        let out = run_rethink(&ctx, &resp, &adv, &RethinkConfig::default(), RethinkSwitches::default()).unwrap();
        assert_eq!((out.mode_taken, out.verified), (RethinkMode::ModeBFailThenA, false));
        assert_eq!(*adv.verifies.lock().unwrap(), 2);

        let no_b = RethinkSwitches { target_verification: false, ..Default::default() };
        let out = run_rethink(&ctx, &resp, &adv, &RethinkConfig::default(), no_b).unwrap();
        assert_eq!((out.mode_taken, out.verified), (RethinkMode::None, true));
        assert_eq!(*adv.verifies.lock().unwrap(), 2);

        let broken = Counting::new(true);
        let out = run_rethink(&ctx, &resp, &broken, &RethinkConfig::default(), RethinkSwitches::default()).unwrap();
        assert_eq!((out.mode_taken, out.verified), (RethinkMode::ModeBFailThenA, false));
        assert!(out.verify_error.is_some());
    }

    #[test]
    fn stop_is_strict() {
        let cfg = RethinkConfig::default();
        assert!(stop_flag((0.0, 0.0), (0.9, 0.0), &cfg));
        assert!(stop_flag((0.0, 0.0), (0.0, 0.0), &cfg));
        assert!(!stop_flag((0.0, 0.0), (1.0, 0.0), &cfg));
        assert!(stop_flag((0.0, 0.0), (0.999, 0.0), &cfg));
    }
}
