//! The decision-making contract behind each navigation step.
//!
//! An advisor picks a view direction from the panoramic observation, reconsiders that choice
//! when memory says the direction was already explored, double-checks claimed target
//! sightings and chooses among candidate motion rays. [`ScriptedAdvisor`] is a deterministic
//! rule-based backend; [`RemoteAdvisor`] talks to a chat-completion HTTP endpoint.

mod prompt;
mod remote;
mod scripted;

pub use prompt::{parse_decision, parse_ray_choice, parse_verdict, PromptBuilder};
pub use remote::{RemoteAdvisor, RemoteConfig};
pub use scripted::{ScriptedAdvisor, ScriptedPolicy};

use crate::action::CandidateRay;
use crate::geometry::distance;
use crate::perception::{is_view_yaw, DirectionalView, Observation};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdvisorError {
    #[error("could not parse advisor reply ({reason}): {raw}")]
    Parse { raw: String, reason: String },
    #[error("advisor transport failure: {0}")]
    Transport(String),
    #[error("advisor request timed out")]
    Timeout,
    #[error("advisor configuration: {0}")]
    Config(String),
    #[error("invalid advisor request: {0}")]
    Request(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdvisorMode {
    Decide,
    RethinkA,
    VerifyB,
    PickRay,
}

/// The structured answer to a direction query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredResponse {
    /// Relative view direction, one of the six view yaws.
    pub a_dir: u16,
    pub f_goal: bool,
    /// Reasoning behind the choice.
    pub e: String,
    /// Panoramic scene description; becomes the memory node's text.
    pub d: String,
}

impl StructuredResponse {
    pub fn new(a_dir: u16, f_goal: bool, e: impl Into<String>, d: impl Into<String>) -> Result<Self, AdvisorError> {
        if !is_view_yaw(a_dir) {
            return Err(AdvisorError::Request(format!("a_dir {a_dir} is not a view direction")));
        }
        Ok(Self {
            a_dir,
            f_goal,
            e: e.into(),
            d: d.into(),
        })
    }
}

/// A target sighting already rejected by verification: labels of this category near this
/// position are not trusted again in the same episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedSighting {
    pub category: String,
    pub position: (f64, f64),
}

/// Rejected sightings closer than this to a new detection discredit it, meters.
pub const REJECTION_RADIUS: f64 = 0.75;

#[derive(Debug, Clone, Copy)]
pub struct AdvisorRequest<'a> {
    pub target_category: &'a str,
    pub observation: &'a Observation,
    injected_history: Option<&'a str>,
    mode: AdvisorMode,
    pub rejected: &'a [RejectedSighting],
}

impl<'a> AdvisorRequest<'a> {
    pub fn decide(target: &'a str, observation: &'a Observation, rejected: &'a [RejectedSighting]) -> Self {
        Self {
            target_category: target,
            observation,
            injected_history: None,
            mode: AdvisorMode::Decide,
            rejected,
        }
    }

    pub fn rethink(target: &'a str, observation: &'a Observation, history: &'a str, rejected: &'a [RejectedSighting]) -> Self {
        Self {
            injected_history: Some(history),
            mode: AdvisorMode::RethinkA,
            ..Self::decide(target, observation, rejected)
        }
    }

    pub fn verify(target: &'a str, observation: &'a Observation) -> Self {
        Self {
            mode: AdvisorMode::VerifyB,
            ..Self::decide(target, observation, &[])
        }
    }

    pub fn pick_ray(target: &'a str, observation: &'a Observation) -> Self {
        Self {
            mode: AdvisorMode::PickRay,
            ..Self::decide(target, observation, &[])
        }
    }

    pub fn mode(&self) -> AdvisorMode {
        self.mode
    }

    pub fn injected_history(&self) -> Option<&'a str> {
        self.injected_history
    }

    fn expect_mode(&self, mode: AdvisorMode) -> Result<(), AdvisorError> {
        if self.mode == mode {
            Ok(())
        } else {
            Err(AdvisorError::Request(format!("expected a {mode:?} request, got {:?}", self.mode)))
        }
    }

    /// Whether `view` shows the target through a detection that has not been rejected.
    pub fn target_sighting(&self, view: &DirectionalView) -> Option<f64> {
        let det = view.detection(self.target_category)?;
        let pos = det.position(&self.observation.pose);
        let discredited = self
            .rejected
            .iter()
            .any(|r| r.category == det.category && distance(r.position, pos) < REJECTION_RADIUS);
        (!discredited).then_some(det.range)
    }
}

/// Backends must be usable from several episode workers at once.
pub trait Advisor: Send + Sync {
    fn name(&self) -> &str;

    fn decide(&self, req: &AdvisorRequest) -> Result<StructuredResponse, AdvisorError>;

    /// Reconsiders `original` after its direction was found to lead into explored space.
    fn rethink(&self, req: &AdvisorRequest, original: &StructuredResponse) -> Result<StructuredResponse, AdvisorError>;

    /// Takes a closer look at the single view in which the target was claimed.
    fn verify(&self, req: &AdvisorRequest, claimed: &DirectionalView) -> Result<bool, AdvisorError>;

    /// Picks one of `rays` given the world heading the agent wants to go.
    fn pick_ray(&self, req: &AdvisorRequest, rays: &[CandidateRay], toward: f64) -> Result<usize, AdvisorError>;
}

/// Wraps an advisor so that failed direction and ray queries are answered by a scripted
/// backend instead. Verification errors pass through untouched: a failed check is safer than
/// a substituted one. Every substitution is recorded.
pub struct WithFallback<'a> {
    primary: &'a dyn Advisor,
    fallback: ScriptedAdvisor,
    substitutions: std::sync::Mutex<Vec<String>>,
}

impl<'a> WithFallback<'a> {
    pub fn new(primary: &'a dyn Advisor, fallback: ScriptedAdvisor) -> Self {
        Self {
            primary,
            fallback,
            substitutions: Default::default(),
        }
    }

    /// Substitution notes recorded since the last call.
    pub fn take_substitutions(&self) -> Vec<String> {
        std::mem::take(&mut *self.substitutions.lock().unwrap_or_else(|e| e.into_inner()))
    }

    fn note(&self, what: &str, err: &AdvisorError) {
        let msg = format!("{what}: {} failed ({err}); used scripted answer", self.primary.name());
        log::warn!("{msg}");
        self.substitutions.lock().unwrap_or_else(|e| e.into_inner()).push(msg);
    }
}

impl Advisor for WithFallback<'_> {
    fn name(&self) -> &str {
        self.primary.name()
    }

    fn decide(&self, req: &AdvisorRequest) -> Result<StructuredResponse, AdvisorError> {
        self.primary.decide(req).or_else(|e| {
            self.note("decide", &e);
            self.fallback.decide(req)
        })
    }

    fn rethink(&self, req: &AdvisorRequest, original: &StructuredResponse) -> Result<StructuredResponse, AdvisorError> {
        self.primary.rethink(req, original).or_else(|e| {
            self.note("rethink", &e);
            self.fallback.rethink(req, original)
        })
    }

    fn verify(&self, req: &AdvisorRequest, claimed: &DirectionalView) -> Result<bool, AdvisorError> {
        self.primary.verify(req, claimed)
    }

    fn pick_ray(&self, req: &AdvisorRequest, rays: &[CandidateRay], toward: f64) -> Result<usize, AdvisorError> {
        self.primary.pick_ray(req, rays, toward).or_else(|e| {
            self.note("pick_ray", &e);
            self.fallback.pick_ray(req, rays, toward)
        })
    }
}
