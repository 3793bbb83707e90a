//! Six-view panoramic observations: per-column depth, navigation masks and object labels
//! from a configurable ground-truth labeller.

use crate::geometry::{
    angular_deviation, bearing, camera_extrinsics, distance, project_point, wrap_180, AgentPose,
    CameraIntrinsics,
};
use crate::scene::{Scene, SceneError};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use thiserror::Error;

/// Relative yaw of each panoramic view, in degrees.
pub const VIEW_YAWS: [u16; 6] = [30, 90, 150, 210, 270, 330];

pub fn is_view_yaw(yaw: u16) -> bool {
    VIEW_YAWS.contains(&yaw)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("agent pose ({x:.3}, {y:.3}) is inside an obstacle")]
    PoseOccupied { x: f64, y: f64 },
    #[error(transparent)]
    Scene(#[from] SceneError),
}

/// Camera mounting and depth sensing parameters shared by all six views.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub intrinsics: CameraIntrinsics,
    pub camera_height: f64,
    /// Downward pitch, radians.
    pub tilt: f64,
    /// Depth readings saturate at this range.
    pub depth_range: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics::from_hfov(640, 480, 79.0).expect("valid default camera"),
            camera_height: 0.88,
            tilt: 0.25,
            depth_range: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub false_negative_rate: f64,
    pub decoys_report_mimicked_category: bool,
    pub max_label_range: f64,
    /// Confidence attached to labels produced by lookalike objects.
    pub decoy_confidence: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            false_negative_rate: 0.0,
            decoys_report_mimicked_category: true,
            max_label_range: 5.0,
            decoy_confidence: 0.6,
            seed: 0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.false_negative_rate) {
            return Err(format!("false_negative_rate {} outside [0, 1]", self.false_negative_rate));
        }
        if !(0.0..=1.0).contains(&self.decoy_confidence) {
            return Err(format!("decoy_confidence {} outside [0, 1]", self.decoy_confidence));
        }
        if !(self.max_label_range > 0.0) {
            return Err("max_label_range must be positive".into());
        }
        Ok(())
    }
}

/// Where a label came from: the nearest reported instance of that category in the view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub category: String,
    /// Distance from the agent to the instance centre, meters.
    pub range: f64,
    /// World-frame bearing to the instance centre, degrees.
    pub bearing: f64,
    pub confidence: f64,
}

impl Detection {
    pub fn position(&self, pose: &AgentPose) -> (f64, f64) {
        let r = self.bearing.to_radians();
        (pose.x + self.range * r.cos(), pose.y + self.range * r.sin())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalView {
    pub view_yaw: u16,
    /// World heading of the optical axis, degrees.
    pub heading: f64,
    pub column_depth: Vec<f64>,
    pub labels: BTreeSet<String>,
    pub label_confidences: BTreeMap<String, f64>,
    pub detections: Vec<Detection>,
    /// Categories of real (non-lookalike) objects actually visible in range, before label
    /// dropout. Only privileged verifiers may look at this.
    #[serde(skip)]
    pub true_categories: BTreeSet<String>,
}

impl DirectionalView {
    pub fn detection(&self, category: &str) -> Option<&Detection> {
        self.detections.iter().find(|d| d.category == category)
    }

    /// Mean depth over the central `band` fraction of the columns.
    pub fn openness(&self, band: f64) -> f64 {
        let n = self.column_depth.len();
        let keep = ((n as f64 * band.clamp(0.0, 1.0)).round() as usize).clamp(1, n);
        let lo = (n - keep) / 2;
        let cols = &self.column_depth[lo..lo + keep];
        cols.iter().sum::<f64>() / keep as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub views: Vec<DirectionalView>,
    pub pose: AgentPose,
    pub step: u32,
}

impl Observation {
    pub fn view(&self, yaw: u16) -> Option<&DirectionalView> {
        self.views.iter().find(|v| v.view_yaw == yaw)
    }

    /// View yaw to labels.
    pub fn semantic_prior(&self) -> BTreeMap<u16, &BTreeSet<String>> {
        self.views.iter().map(|v| (v.view_yaw, &v.labels)).collect()
    }

    /// `Angle 30: armchair, lamp; Angle 90: nothing; ...`
    pub fn prior_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.views.iter().enumerate() {
            if k > 0 {
                out.push_str("; ");
            }
            let _ = write!(out, "Angle {}: ", v.view_yaw);
            if v.labels.is_empty() {
                out.push_str("nothing");
            } else {
                out.push_str(&v.labels.iter().cloned().collect::<Vec<_>>().join(", "));
            }
        }
        out
    }
}

/// Parses the category names back out of a [`Observation::prior_text`]-style description.
pub fn categories_in_description(text: &str) -> BTreeSet<String> {
    text.split(';')
        .filter_map(|part| part.split_once(':').map(|(_, rest)| rest))
        .flat_map(|rest| rest.split(','))
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty() && s != "nothing")
        .collect()
}

fn step_rng(seed: u64, step: u32) -> ChaCha8Rng {
    let mixed = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(u64::from(step).wrapping_mul(0xC2B2_AE3D_27D4_EB4F));
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Renders the six views at `pose`. Deterministic in `(scene, pose, oracle.seed, step)`.
pub fn render_observation(
    scene: &Scene,
    pose: &AgentPose,
    sensor: &SensorConfig,
    oracle: &OracleConfig,
    step: u32,
) -> Result<Observation, PerceptionError> {
    let origin = pose.position();
    if !scene.is_free_point(origin.0, origin.1) {
        return Err(PerceptionError::PoseOccupied { x: pose.x, y: pose.y });
    }
    let intr = &sensor.intrinsics;
    let half_fov = intr.hfov() / 2.0;
    let mut rng = step_rng(oracle.seed, step);

    // Visibility does not depend on the view, so resolve it once per object.
    let mut visible = Vec::with_capacity(scene.objects.len());
    for (k, obj) in scene.objects.iter().enumerate() {
        let range = distance(origin, obj.center);
        let seen = range <= oracle.max_label_range && scene.sees_object(origin, k)?;
        visible.push(seen.then(|| (range, bearing(origin, obj.center))));
    }

    let mut views = Vec::with_capacity(VIEW_YAWS.len());
    for yaw in VIEW_YAWS {
        let heading = pose.yaw + f64::from(yaw);
        let mut column_depth = Vec::with_capacity(intr.width as usize);
        for c in 0..intr.width {
            let h = heading + intr.column_offset(f64::from(c) + 0.5);
            column_depth.push(scene.raycast(origin, h, sensor.depth_range)?);
        }

        // category -> (range, bearing, confidence, is_true_label)
        let mut found: BTreeMap<String, (f64, f64, f64, bool)> = BTreeMap::new();
        let mut true_categories = BTreeSet::new();
        for (obj, vis) in scene.objects.iter().zip(&visible) {
            let Some((range, b)) = *vis else { continue };
            if wrap_180(b - heading).abs() > half_fov {
                continue;
            }
            let (category, confidence, is_true) = match &obj.decoy_of {
                Some(mimic) if oracle.decoys_report_mimicked_category => {
                    (mimic.clone(), oracle.decoy_confidence, false)
                }
                _ => (obj.category.clone(), 1.0, true),
            };
            if obj.decoy_of.is_none() {
                true_categories.insert(obj.category.clone());
            }
            let entry = found.entry(category).or_insert((range, b, confidence, is_true));
            if range < entry.0 {
                *entry = (range, b, confidence, is_true);
            }
        }

        let mut labels = BTreeSet::new();
        let mut label_confidences = BTreeMap::new();
        let mut detections = Vec::new();
        for (category, (range, b, confidence, is_true)) in found {
            if is_true && oracle.false_negative_rate > 0.0 && rng.gen_bool(oracle.false_negative_rate) {
                continue;
            }
            labels.insert(category.clone());
            label_confidences.insert(category.clone(), confidence);
            detections.push(Detection {
                category,
                range,
                bearing: b,
                confidence,
            });
        }
        views.push(DirectionalView {
            view_yaw: yaw,
            heading: crate::geometry::wrap_360(heading),
            column_depth,
            labels,
            label_confidences,
            detections,
            true_categories,
        });
    }
    Ok(Observation {
        views,
        pose: *pose,
        step,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavMask {
    pub view_yaw: u16,
    /// World heading of the view's optical axis, degrees.
    pub heading: f64,
    /// Collision-free travel distance along each column's ground ray, meters.
    pub traversable_range: Vec<f64>,
    /// Agent radius plus safety margin: the gap kept to obstacles, meters.
    pub clearance: f64,
}

pub const DEFAULT_SAFETY_MARGIN: f64 = 0.1;

/// Depth minus agent radius and safety margin, clamped at zero.
pub fn nav_mask(view: &DirectionalView, agent_radius: f64, safety_margin: f64) -> NavMask {
    NavMask {
        view_yaw: view.view_yaw,
        heading: view.heading,
        traversable_range: view
            .column_depth
            .iter()
            .map(|d| (d - agent_radius - safety_margin).max(0.0))
            .collect(),
        clearance: agent_radius + safety_margin,
    }
}

/// Whether a floor point projects into the view's image inside its traversable region.
pub fn node_in_mask(
    node: (f64, f64),
    pose: &AgentPose,
    sensor: &SensorConfig,
    mask: &NavMask,
) -> bool {
    let Ok(ext) = camera_extrinsics(pose, sensor.camera_height, sensor.tilt, f64::from(mask.view_yaw))
    else {
        return false;
    };
    let Some(p) = project_point(&sensor.intrinsics, &ext, &Vector3::new(node.0, node.1, 0.0)) else {
        return false;
    };
    if !sensor.intrinsics.contains(p.u, p.v) {
        return false;
    }
    let column = p.u.floor() as usize;
    distance(pose.position(), node) <= mask.traversable_range[column]
}

/// Deviation between a view's optical axis and the bearing to a point.
pub fn bearing_deviation(pose: &AgentPose, view_yaw: u16, point: (f64, f64)) -> f64 {
    angular_deviation(pose.yaw + f64::from(view_yaw), bearing(pose.position(), point))
}
