use super::{Advisor, AdvisorError, AdvisorMode, AdvisorRequest, StructuredResponse};
use crate::action::CandidateRay;
use crate::geometry::angular_deviation;
use crate::perception::{categories_in_description, DirectionalView, Observation};
use crate::semantics::cooccurring;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Weights of the rule-based direction score used when no target is in sight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScriptedPolicy {
    /// Score per co-occurring category label in a view.
    pub cooccurrence_weight: f64,
    /// Score for the most open view; other views scale linearly.
    pub openness_weight: f64,
    /// Fraction of central columns averaged into a view's openness.
    pub openness_band: f64,
}

impl Default for ScriptedPolicy {
    fn default() -> Self {
        Self {
            cooccurrence_weight: 1.0,
            openness_weight: 1.0,
            openness_band: 0.3,
        }
    }
}

/// Deterministic rule-based advisor. Every answer is a pure function of the request and seed.
#[derive(Debug, Clone)]
pub struct ScriptedAdvisor {
    seed: u64,
    policy: ScriptedPolicy,
}

impl ScriptedAdvisor {
    pub fn new(seed: u64) -> Self {
        Self::with_policy(seed, ScriptedPolicy::default())
    }

    pub fn with_policy(seed: u64, policy: ScriptedPolicy) -> Self {
        Self { seed, policy }
    }

    pub fn policy(&self) -> &ScriptedPolicy {
        &self.policy
    }

    fn tie_break<T: Copy>(&self, step: u32, salt: u64, candidates: &[T]) -> T {
        if candidates.len() == 1 {
            return candidates[0];
        }
        let mixed = self.seed ^ (u64::from(step) << 32) ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        *candidates
            .choose(&mut ChaCha8Rng::seed_from_u64(mixed))
            .expect("non-empty candidates")
    }

    /// Views sharing the best score, in view order.
    fn argmax<'v>(&self, views: impl Iterator<Item = (&'v DirectionalView, f64)>) -> Vec<u16> {
        let scored: Vec<(u16, f64)> = views.map(|(v, s)| (v.view_yaw, s)).collect();
        let best = scored.iter().map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max);
        scored.into_iter().filter(|(_, s)| *s == best).map(|(y, _)| y).collect()
    }

    fn openness(&self, obs: &Observation) -> Vec<f64> {
        obs.views.iter().map(|v| v.openness(self.policy.openness_band)).collect()
    }
}

fn explored_views(obs: &Observation, history: &BTreeSet<String>) -> BTreeSet<u16> {
    obs.views
        .iter()
        .filter(|v| v.labels.iter().any(|l| history.contains(l)))
        .map(|v| v.view_yaw)
        .collect()
}

impl Advisor for ScriptedAdvisor {
    fn name(&self) -> &str {
        "scripted"
    }

    fn decide(&self, req: &AdvisorRequest) -> Result<StructuredResponse, AdvisorError> {
        req.expect_mode(AdvisorMode::Decide)?;
        let obs = req.observation;
        let d = obs.prior_text();
        let target = req.target_category;

        let sightings: Vec<(u16, f64)> = obs
            .views
            .iter()
            .filter_map(|v| req.target_sighting(v).map(|r| (v.view_yaw, r)))
            .collect();
        if let [(yaw, _)] = sightings[..] {
            return StructuredResponse::new(yaw, true, format!("{target} is visible at angle {yaw}"), d);
        }
        if !sightings.is_empty() {
            let nearest = sightings.iter().map(|(_, r)| *r).fold(f64::INFINITY, f64::min);
            let tied: Vec<u16> = sightings.iter().filter(|(_, r)| *r == nearest).map(|(y, _)| *y).collect();
            let yaw = self.tie_break(obs.step, 1, &tied);
            return StructuredResponse::new(
                yaw,
                true,
                format!("{target} is visible in several views; the closest one is at angle {yaw}"),
                d,
            );
        }

        let related = cooccurring(target);
        let open = self.openness(obs);
        let max_open = open.iter().copied().fold(0.0, f64::max);
        let scores = obs.views.iter().zip(&open).map(|(v, o)| {
            let hits = v.labels.iter().filter(|l| related.contains(l.as_str())).count() as f64;
            let norm = if max_open > 0.0 { o / max_open } else { 0.0 };
            (v, self.policy.cooccurrence_weight * hits + self.policy.openness_weight * norm)
        });
        let tied = self.argmax(scores);
        let yaw = self.tie_break(obs.step, 2, &tied);
        let view = obs.view(yaw).expect("argmax yields an existing view");
        let cues: Vec<&str> = view.labels.iter().map(String::as_str).filter(|l| related.contains(l)).collect();
        let e = if cues.is_empty() {
            format!("no sign of {target}; angle {yaw} offers the most open space")
        } else {
            format!("{} usually share a room with {target}", cues.join(", "))
        };
        StructuredResponse::new(yaw, false, e, d)
    }

    fn rethink(&self, req: &AdvisorRequest, original: &StructuredResponse) -> Result<StructuredResponse, AdvisorError> {
        req.expect_mode(AdvisorMode::RethinkA)?;
        let history = req
            .injected_history()
            .ok_or_else(|| AdvisorError::Request("rethink needs injected history".into()))?;
        let obs = req.observation;
        let seen = categories_in_description(history);
        let explored = explored_views(obs, &seen);
        if !explored.contains(&original.a_dir) {
            return Ok(StructuredResponse {
                e: format!("{} (direction unchanged after review)", original.e),
                f_goal: false,
                ..original.clone()
            });
        }
        let open = self.openness(obs);
        let fresh: Vec<(&DirectionalView, f64)> = obs
            .views
            .iter()
            .zip(open.iter().copied())
            .filter(|(v, _)| !explored.contains(&v.view_yaw))
            .collect();
        let (tied, e) = if fresh.is_empty() {
            (
                self.argmax(obs.views.iter().zip(open.iter().copied())),
                "every direction was described before; taking the most open one".to_string(),
            )
        } else {
            (
                self.argmax(fresh.into_iter()),
                format!("angle {} leads back into an explored area; trying new ground", original.a_dir),
            )
        };
        let yaw = self.tie_break(obs.step, 3, &tied);
        StructuredResponse::new(yaw, false, e, original.d.clone())
    }

    fn verify(&self, req: &AdvisorRequest, claimed: &DirectionalView) -> Result<bool, AdvisorError> {
        req.expect_mode(AdvisorMode::VerifyB)?;
        Ok(claimed.true_categories.contains(req.target_category))
    }

    fn pick_ray(&self, req: &AdvisorRequest, rays: &[CandidateRay], toward: f64) -> Result<usize, AdvisorError> {
        req.expect_mode(AdvisorMode::PickRay)?;
        const EPS: f64 = 1e-9;
        let mut best: Option<(usize, f64, f64)> = None;
        for (k, ray) in rays.iter().enumerate() {
            let dev = angular_deviation(ray.heading, toward);
            let better = match best {
                None => true,
                Some((_, bd, bl)) => dev < bd - EPS || (dev <= bd + EPS && ray.length > bl),
            };
            if better {
                best = Some((k, dev, ray.length));
            }
        }
        best.map(|(k, _, _)| k)
            .ok_or_else(|| AdvisorError::Request("no candidate rays".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::advisor::RejectedSighting;
    use crate::geometry::AgentPose;
    use crate::perception::{Detection, VIEW_YAWS};
    use std::collections::BTreeMap;

    fn view(yaw: u16, labels: &[(&str, f64)], depth: f64) -> DirectionalView {
        DirectionalView {
            view_yaw: yaw,
            heading: f64::from(yaw),
            column_depth: vec![depth; 640],
            labels: labels.iter().map(|(l, _)| l.to_string()).collect(),
            label_confidences: labels.iter().map(|(l, _)| (l.to_string(), 1.0)).collect::<BTreeMap<_, _>>(),
            detections: labels
                .iter()
                .map(|(l, r)| Detection { category: l.to_string(), range: *r, bearing: f64::from(yaw), confidence: 1.0 })
                .collect(),
            true_categories: labels.iter().map(|(l, _)| l.to_string()).collect(),
        }
    }

    fn obs(views: Vec<DirectionalView>) -> Observation {
        Observation { views, pose: AgentPose::new(0.0, 0.0, 0.0), step: 4 }
    }

    fn empty_views(depths: [f64; 6]) -> Vec<DirectionalView> {
        VIEW_YAWS.iter().zip(depths).map(|(y, d)| view(*y, &[], d)).collect()
    }

    #[test]
    fn single_sighting_wins() {
        let mut vs = empty_views([3.0; 6]);
        vs[2] = view(150, &[("sofa", 2.0)], 3.0);
        let o = obs(vs);
        let r = ScriptedAdvisor::new(1).decide(&AdvisorRequest::decide("sofa", &o, &[])).unwrap();
        assert_eq!((r.a_dir, r.f_goal), (150, true));
        assert!(r.d.contains("Angle 150: sofa"));
    }

    #[test]
    fn nearest_of_several_sightings() {
        let mut vs = empty_views([3.0; 6]);
        vs[0] = view(30, &[("tv", 4.0)], 3.0);
        vs[4] = view(270, &[("tv", 1.5)], 3.0);
        let o = obs(vs);
        let r = ScriptedAdvisor::new(1).decide(&AdvisorRequest::decide("tv", &o, &[])).unwrap();
        assert_eq!((r.a_dir, r.f_goal), (270, true));
    }

    #[test]
    fn empty_scene_goes_to_most_open_view() {
        let o = obs(empty_views([1.0, 2.0, 7.0, 3.0, 2.0, 1.0]));
        let r = ScriptedAdvisor::new(1).decide(&AdvisorRequest::decide("bed", &o, &[])).unwrap();
        assert_eq!((r.a_dir, r.f_goal), (150, false));
        assert!(r.d.contains("nothing"));
    }

    #[test]
    fn cooccurrence_beats_openness() {
        let mut vs = empty_views([1.0, 2.0, 7.0, 3.0, 2.0, 1.0]);
        vs[5] = view(330, &[("nightstand", 2.0), ("sink", 2.0)], 1.0);
        let o = obs(vs);
        let r = ScriptedAdvisor::new(1).decide(&AdvisorRequest::decide("bed", &o, &[])).unwrap();
        assert_eq!((r.a_dir, r.f_goal), (330, false));
    }

    #[test]
    fn rejected_sighting_is_ignored() {
        let mut vs = empty_views([1.0, 2.0, 7.0, 3.0, 2.0, 1.0]);
        vs[0] = view(30, &[("tv", 2.0)], 3.0);
        let o = obs(vs);
        let spot = o.views[0].detections[0].position(&o.pose);
        let rejected = [RejectedSighting { category: "tv".into(), position: (spot.0 + 0.1, spot.1) }];
        let r = ScriptedAdvisor::new(1).decide(&AdvisorRequest::decide("tv", &o, &rejected)).unwrap();
        assert_eq!((r.a_dir, r.f_goal), (150, false));
    }

    #[test]
    fn f_goal_implies_label_in_view() {
        for seed in 0..20 {
            let mut vs = empty_views([2.0; 6]);
            vs[(seed % 6) as usize] = view(VIEW_YAWS[(seed % 6) as usize], &[("plant", 2.0)], 2.0);
            vs[((seed + 3) % 6) as usize] = view(VIEW_YAWS[((seed + 3) % 6) as usize], &[("plant", 2.0)], 2.0);
            let o = obs(vs);
            let r = ScriptedAdvisor::new(seed).decide(&AdvisorRequest::decide("plant", &o, &[])).unwrap();
            assert!(r.f_goal && o.view(r.a_dir).unwrap().labels.contains("plant"));
            let again = ScriptedAdvisor::new(seed).decide(&AdvisorRequest::decide("plant", &o, &[])).unwrap();
            assert_eq!(r, again);
        }
    }

    #[test]
    fn rethink_rules() {
        let mut vs = empty_views([1.0, 2.0, 7.0, 3.0, 5.0, 1.0]);
        vs[0] = view(30, &[("oven", 2.0)], 6.0);
        vs[2] = view(150, &[("sink", 2.0)], 7.0);
        let o = obs(vs);
        let adv = ScriptedAdvisor::new(1);
        let original = StructuredResponse::new(30, false, "kitchen things", o.prior_text()).unwrap();

        let req = AdvisorRequest::rethink("refrigerator", &o, "Angle 90: oven, counter; Angle 150: sink", &[]);
        let r = adv.rethink(&req, &original).unwrap();
        // 30 and 150 count as explored; the most open of the rest is 270
        assert_eq!(r.a_dir, 270);

        let req = AdvisorRequest::rethink("refrigerator", &o, "Angle 30: bathtub", &[]);
        assert_eq!(adv.rethink(&req, &original).unwrap().a_dir, 30);

        let all: Vec<DirectionalView> = VIEW_YAWS.iter().zip([1.0, 2.0, 7.0, 3.0, 5.0, 1.0]).map(|(y, d)| view(*y, &[("oven", 1.0)], d)).collect();
        let o = obs(all);
        let req = AdvisorRequest::rethink("refrigerator", &o, "Angle 30: oven", &[]);
        assert_eq!(adv.rethink(&req, &original).unwrap().a_dir, 150);
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        let o = obs(empty_views([1.0; 6]));
        let adv = ScriptedAdvisor::new(0);
        assert!(adv.decide(&AdvisorRequest::verify("tv", &o)).is_err());
        let original = StructuredResponse::new(30, false, "", "").unwrap();
        assert!(adv.rethink(&AdvisorRequest::decide("tv", &o, &[]), &original).is_err());
    }

    #[test]
    fn verify_uses_real_objects() {
        let o = obs(empty_views([1.0; 6]));
        let adv = ScriptedAdvisor::new(0);
        let mut v = view(30, &[("tv", 2.0)], 3.0);
        assert!(adv.verify(&AdvisorRequest::verify("tv", &o), &v).unwrap());
        v.true_categories.clear();
        assert!(!adv.verify(&AdvisorRequest::verify("tv", &o), &v).unwrap());
    }

    fn ray(heading: f64, length: f64) -> CandidateRay {
        CandidateRay { index: 0, heading, offset: 0.0, length, endpoint: (0.0, 0.0) }
    }

    #[test]
    fn pick_ray_rules() {
        let o = obs(empty_views([1.0; 6]));
        let req = AdvisorRequest::pick_ray("tv", &o);
        let adv = ScriptedAdvisor::new(0);
        assert_eq!(adv.pick_ray(&req, &[ray(70.0, 1.0), ray(90.0, 1.0), ray(110.0, 1.0)], 90.0).unwrap(), 1);
        assert_eq!(adv.pick_ray(&req, &[ray(10.0, 0.3)], 90.0).unwrap(), 0);
        assert_eq!(adv.pick_ray(&req, &[ray(80.0, 1.0), ray(100.0, 2.0)], 90.0).unwrap(), 1);
        assert_eq!(adv.pick_ray(&req, &[ray(350.0, 1.0), ray(20.0, 1.0)], 0.0).unwrap(), 0);
        assert!(adv.pick_ray(&req, &[], 0.0).is_err());
    }
}
