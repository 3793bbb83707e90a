//! Prompt text for chat-completion backends and strict parsing of their replies.

use super::{AdvisorError, RejectedSighting, StructuredResponse};
use crate::action::CandidateRay;
use crate::geometry::{bearing, distance, wrap_360};
use crate::perception::{is_view_yaw, DirectionalView, Observation, VIEW_YAWS};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.into(),
            content: content.into(),
        }
    }
}

const SYSTEM: &str = "You are the planner of a mobile robot searching an indoor environment for an \
object. You see six camera views around the robot, named by their angle in degrees relative to \
the robot's heading. Answer with a single JSON object and nothing else.";

const DECISION_SCHEMA: &str = r#"{"a_dir": <one of 30, 90, 150, 210, 270, 330>, "f_goal": <true only if the target itself is visible at a_dir>, "e": "<short reasoning>", "d": "<panoramic description listing the objects seen at each angle>"}"#;

/// Free-space estimate that accompanies the label dictionary.
const OPENNESS_BAND: f64 = 0.3;

pub struct PromptBuilder;

impl PromptBuilder {
    fn scene_block(target: &str, obs: &Observation, rejected: &[RejectedSighting]) -> String {
        let mut s = format!("Target object: {target}.\nObjects per view: {{{}}}\nFree space ahead per view (meters): ", obs.prior_text());
        for (k, v) in obs.views.iter().enumerate() {
            if k > 0 {
                s.push_str("; ");
            }
            let _ = write!(s, "Angle {}: {:.1}", v.view_yaw, v.openness(OPENNESS_BAND));
        }
        s.push('\n');
        for r in rejected {
            let here = obs.pose.position();
            let angle = wrap_360(bearing(here, r.position) - obs.pose.yaw);
            let _ = writeln!(
                s,
                "The {} seen {:.1} m away at angle {angle:.0} was checked and is not real; ignore it.",
                r.category,
                distance(here, r.position)
            );
        }
        s
    }

    pub fn decide(target: &str, obs: &Observation, rejected: &[RejectedSighting]) -> Vec<ChatMessage> {
        let user = format!(
            "{}Pick the view direction most likely to lead to the {target}, using what usually \
             shares a room with it. Reply as JSON: {DECISION_SCHEMA}",
            Self::scene_block(target, obs, rejected)
        );
        vec![ChatMessage::new("system", SYSTEM), ChatMessage::new("user", user)]
    }

    pub fn rethink(
        target: &str,
        obs: &Observation,
        history: &str,
        original: &StructuredResponse,
        rejected: &[RejectedSighting],
    ) -> Vec<ChatMessage> {
        let user = format!(
            "{}You chose angle {} because: {}\nThat direction leads back to a place you already \
             visited. Back then you described the surroundings as: {{{history}}}\nWeigh returning to \
             that area against exploring somewhere new, then answer again as JSON: {DECISION_SCHEMA}",
            Self::scene_block(target, obs, rejected),
            original.a_dir,
            original.e
        );
        vec![ChatMessage::new("system", SYSTEM), ChatMessage::new("user", user)]
    }

    pub fn verify(target: &str, view: &DirectionalView) -> Vec<ChatMessage> {
        let labels: Vec<String> = view
            .label_confidences
            .iter()
            .map(|(l, c)| format!("{l} ({c:.2})"))
            .collect();
        let user = format!(
            "Look only at the view at angle {}. Detected objects with confidence: {}.\nIs a real \
             {target} present, not a picture, reflection or similar-looking object? Reply as JSON: \
             {{\"confirmed\": <true|false>, \"e\": \"<short reasoning>\"}}",
            view.view_yaw,
            if labels.is_empty() { "none".to_string() } else { labels.join(", ") }
        );
        vec![ChatMessage::new("system", SYSTEM), ChatMessage::new("user", user)]
    }

    pub fn pick_ray(target: &str, rays: &[CandidateRay], toward: f64) -> Vec<ChatMessage> {
        let mut listing = String::new();
        for r in rays {
            let _ = writeln!(
                listing,
                "{}: heading {:.0} deg, free length {:.2} m",
                r.index, r.heading, r.length
            );
        }
        let user = format!(
            "Searching for the {target}. The robot wants to head toward {toward:.0} deg (world frame). \
             Numbered motion rays:\n{listing}Pick the ray that best makes progress. Reply as JSON: \
             {{\"ray\": <index>}}"
        );
        vec![ChatMessage::new("system", SYSTEM), ChatMessage::new("user", user)]
    }

    pub fn repair(reason: &str) -> ChatMessage {
        ChatMessage::new(
            "user",
            format!("Your previous reply could not be used ({reason}). Reply again with only the JSON object."),
        )
    }
}

/// Pulls the outermost JSON object out of free text, tolerating code fences and chatter.
fn json_object(raw: &str) -> Option<&str> {
    let start = raw.find('{')?;
    let end = raw.rfind('}')?;
    (end > start).then(|| &raw[start..=end])
}

fn parse_json<T: DeserializeOwned>(raw: &str) -> Result<T, AdvisorError> {
    let fail = |reason: String| AdvisorError::Parse {
        raw: raw.to_string(),
        reason,
    };
    let body = json_object(raw).ok_or_else(|| fail("no JSON object found".into()))?;
    serde_json::from_str(body).map_err(|e| fail(e.to_string()))
}

#[derive(Deserialize)]
struct DecisionWire {
    a_dir: serde_json::Value,
    f_goal: bool,
    e: String,
    d: String,
}

pub fn parse_decision(raw: &str) -> Result<StructuredResponse, AdvisorError> {
    let w: DecisionWire = parse_json(raw)?;
    let fail = |reason: String| AdvisorError::Parse {
        raw: raw.to_string(),
        reason,
    };
    let a_dir = match &w.a_dir {
        serde_json::Value::Number(n) => n.as_f64(),
        serde_json::Value::String(s) => s.trim().trim_end_matches("deg").trim().parse().ok(),
        _ => None,
    }
    .ok_or_else(|| fail(format!("a_dir {} is not a number", w.a_dir)))?;
    if a_dir.fract() != 0.0 || !(0.0..=360.0).contains(&a_dir) || !is_view_yaw(a_dir as u16) {
        return Err(fail(format!("a_dir {a_dir} is not one of {VIEW_YAWS:?}")));
    }
    if w.d.trim().is_empty() {
        return Err(fail("description d is empty".into()));
    }
    Ok(StructuredResponse {
        a_dir: a_dir as u16,
        f_goal: w.f_goal,
        e: w.e,
        d: w.d,
    })
}

#[derive(Deserialize)]
struct VerdictWire {
    confirmed: bool,
}

pub fn parse_verdict(raw: &str) -> Result<bool, AdvisorError> {
    parse_json::<VerdictWire>(raw).map(|v| v.confirmed)
}

#[derive(Deserialize)]
struct RayWire {
    ray: usize,
}

pub fn parse_ray_choice(raw: &str, n_rays: usize) -> Result<usize, AdvisorError> {
    let k = parse_json::<RayWire>(raw)?.ray;
    if k >= n_rays {
        return Err(AdvisorError::Parse {
            raw: raw.to_string(),
            reason: format!("ray {k} out of range 0..{n_rays}"),
        });
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decision_parsing() {
        let r = parse_decision("```json\n{\"a_dir\": 150, \"f_goal\": false, \"e\": \"x\", \"d\": \"Angle 30: sofa\"}\n```").unwrap();
        assert_eq!((r.a_dir, r.f_goal), (150, false));
        let r = parse_decision(r#"{"a_dir": "270", "f_goal": true, "e": "", "d": "y"}"#).unwrap();
        assert_eq!(r.a_dir, 270);
        for bad in [
            "I think we should go left",
            r#"{"a_dir": 45, "f_goal": false, "e": "", "d": "y"}"#,
            r#"{"a_dir": 30.5, "f_goal": false, "e": "", "d": "y"}"#,
            r#"{"a_dir": 30, "f_goal": "maybe", "e": "", "d": "y"}"#,
            r#"{"a_dir": 30, "f_goal": false, "e": ""}"#,
            r#"{"a_dir": 30, "f_goal": false, "e": "", "d": "  "}"#,
        ] {
            let err = parse_decision(bad).unwrap_err();
            assert!(matches!(&err, AdvisorError::Parse { raw, .. } if raw == bad), "{bad}");
        }
    }

    #[test]
    fn verdict_and_ray_parsing() {
        assert!(parse_verdict(r#"{"confirmed": true, "e": "clearly a tv"}"#).unwrap());
        assert!(parse_verdict("yes").is_err());
        assert_eq!(parse_ray_choice(r#"{"ray": 2}"#, 3).unwrap(), 2);
        assert!(parse_ray_choice(r#"{"ray": 3}"#, 3).is_err());
    }

    #[test]
    fn prompt_lists_views_and_rejections() {
        use crate::geometry::AgentPose;
        let views = VIEW_YAWS
            .iter()
            .map(|&y| DirectionalView {
                view_yaw: y,
                heading: f64::from(y),
                column_depth: vec![2.0; 8],
                labels: if y == 30 { ["sofa".to_string()].into() } else { Default::default() },
                label_confidences: Default::default(),
                detections: Vec::new(),
                true_categories: Default::default(),
            })
            .collect();
        let obs = Observation { views, pose: AgentPose::new(0.0, 0.0, 0.0), step: 3 };
        let rejected = [RejectedSighting { category: "tv".into(), position: (0.0, 2.0) }];
        let msgs = PromptBuilder::decide("tv", &obs, &rejected);
        let user = &msgs[1].content;
        assert!(user.contains("Angle 30: sofa; Angle 90: nothing"), "{user}");
        assert!(user.contains("tv seen 2.0 m away at angle 90"), "{user}");
        assert!(user.contains("\"a_dir\""));
        assert!(!PromptBuilder::decide("tv", &obs, &[])[1].content.contains("not real"));
    }
}
