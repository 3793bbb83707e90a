//! Run configuration file (TOML).
//!
//! Every key is optional except the seed, which may also come from `--seed`. Relative paths
//! are resolved against the directory holding the config file.

use anyhow::{bail, ensure, Context, Result};
use objnav_core::action::RayParams;
use objnav_core::advisor::{RemoteConfig, ScriptedPolicy};
use objnav_core::eval::{AblationConfig, AdvisorKind, SystemConfig, DEFAULT_MAX_STEPS};
use objnav_core::geometry::CameraIntrinsics;
use objnav_core::perception::{OracleConfig, SensorConfig, DEFAULT_SAFETY_MARGIN};
use objnav_core::rethink::RethinkConfig;
use objnav_core::scene::GeneratorConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Worker threads for episode-level parallelism.
    pub parallel: usize,
    pub out: Option<PathBuf>,

    pub max_steps: u32,
    pub success_distance: f64,
    /// Episodic memory capacity K.
    pub memory_capacity: usize,
    pub enable_mode_a: bool,
    pub enable_mode_b: bool,

    pub agent_radius: f64,
    pub camera_height: f64,
    /// Downward camera pitch, radians.
    pub camera_tilt: f64,
    pub hfov_deg: f64,
    pub image_width: u32,
    pub image_height: u32,
    pub depth_range: f64,
    pub safety_margin: f64,

    pub scenes: Option<ScenesConfig>,
    pub suite: Option<GeneratedSuite>,
    pub rethink: RethinkConfig,
    pub rays: RayParams,
    pub oracle: OracleConfig,
    pub advisor: AdvisorSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sensor = SensorConfig::default();
        Self {
            seed: None,
            parallel: 1,
            out: None,
            max_steps: DEFAULT_MAX_STEPS,
            success_distance: 1.0,
            memory_capacity: 10,
            enable_mode_a: true,
            enable_mode_b: true,
            agent_radius: 0.18,
            camera_height: sensor.camera_height,
            camera_tilt: sensor.tilt,
            hfov_deg: 79.0,
            image_width: sensor.intrinsics.width,
            image_height: sensor.intrinsics.height,
            depth_range: sensor.depth_range,
            safety_margin: DEFAULT_SAFETY_MARGIN,
            scenes: None,
            suite: None,
            rethink: RethinkConfig::default(),
            rays: RayParams::default(),
            oracle: OracleConfig::default(),
            advisor: AdvisorSettings::default(),
        }
    }
}

/// Episodes listed in a manifest written by `gen-scenes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenesConfig {
    pub manifest: PathBuf,
}

/// Episodes generated on the fly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratedSuite {
    pub episodes: usize,
    #[serde(default)]
    pub generator: GeneratorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdvisorSettings {
    pub kind: AdvisorKind,
    pub policy: ScriptedPolicy,
    pub remote: RemoteConfig,
}

impl Default for AdvisorSettings {
    fn default() -> Self {
        Self {
            kind: AdvisorKind::Scripted,
            policy: ScriptedPolicy::default(),
            remote: RemoteConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(s) = cfg.scenes.as_mut() {
            if s.manifest.is_relative() {
                s.manifest = base.join(&s.manifest);
            }
        }
        if let Some(out) = cfg.out.as_mut() {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        Ok(cfg)
    }

    /// Checks ranges and cross-field consistency; run before any episode starts.
    pub fn validate(&self) -> Result<()> {
        ensure!(self.seed.is_some(), "a seed is required: set `seed` in the config or pass --seed");
        ensure!(self.parallel >= 1, "parallel must be at least 1");
        ensure!(self.max_steps >= 1, "max_steps must be at least 1");
        ensure!(
            self.success_distance.is_finite() && self.success_distance > 0.0,
            "success_distance must be positive"
        );
        ensure!(self.agent_radius.is_finite() && self.agent_radius > 0.0, "agent_radius must be positive");
        ensure!(self.camera_height.is_finite() && self.camera_height > 0.0, "camera_height must be positive");
        ensure!(self.camera_tilt.is_finite(), "camera_tilt must be finite");
        ensure!(self.depth_range.is_finite() && self.depth_range > 0.0, "depth_range must be positive");
        ensure!(self.safety_margin.is_finite() && self.safety_margin >= 0.0, "safety_margin must be non-negative");
        ensure!(self.rays.n_rays >= 1, "rays.n_rays must be at least 1");
        ensure!(self.rays.max_step > 0.0, "rays.max_step must be positive");
        self.intrinsics()?;
        self.rethink.validate().map_err(anyhow::Error::msg).context("[rethink]")?;
        self.oracle.validate().map_err(anyhow::Error::msg).context("[oracle]")?;
        match (&self.scenes, &self.suite) {
            (Some(_), Some(_)) => bail!("give either [scenes] or [suite], not both"),
            (None, None) => bail!("no episodes: add a [scenes] manifest or a [suite] section"),
            (None, Some(s)) => ensure!(s.episodes >= 1, "suite.episodes must be at least 1"),
            (Some(s), None) => ensure!(
                s.manifest.is_file(),
                "scene manifest {} does not exist",
                s.manifest.display()
            ),
        }
        if self.advisor.kind == AdvisorKind::Remote {
            ensure!(self.advisor.remote.max_in_flight >= 1, "advisor.remote.max_in_flight must be at least 1");
            ensure!(self.advisor.remote.timeout_secs > 0.0, "advisor.remote.timeout_secs must be positive");
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated config has a seed")
    }

    fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::from_hfov(self.image_width, self.image_height, self.hfov_deg)
            .map_err(|e| anyhow::anyhow!("camera: {e}"))
    }

    pub fn system(&self) -> Result<SystemConfig> {
        Ok(SystemConfig {
            sensor: SensorConfig {
                intrinsics: self.intrinsics()?,
                camera_height: self.camera_height,
                tilt: self.camera_tilt,
                depth_range: self.depth_range,
            },
            agent_radius: self.agent_radius,
            safety_margin: self.safety_margin,
            rays: self.rays.clone(),
            rethink: self.rethink,
            policy: self.advisor.policy,
        })
    }

    pub fn ablation(&self) -> AblationConfig {
        AblationConfig {
            enable_mode_a: self.enable_mode_a,
            enable_mode_b: self.enable_mode_b,
            memory_capacity: self.memory_capacity,
            oracle: self.oracle.clone(),
            advisor_kind: self.advisor.kind,
        }
    }

    /// Generator settings with the embodiment keys taken from the top level.
    pub fn generator(&self, base: &GeneratorConfig) -> GeneratorConfig {
        GeneratorConfig {
            agent_radius: self.agent_radius,
            success_distance: self.success_distance,
            ..base.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_embodiment_constants() {
        let c = RunConfig::default();
        assert_eq!(c.max_steps, 40);
        assert_eq!(c.success_distance, 1.0);
        assert_eq!(c.memory_capacity, 10);
        assert_eq!(c.hfov_deg, 79.0);
        assert_eq!(c.camera_tilt, 0.25);
        assert_eq!(c.agent_radius, 0.18);
        assert_eq!(c.camera_height, 0.88);
        assert_eq!((c.image_width, c.image_height), (640, 480));
    }

    #[test]
    fn parses_minimal_suite() {
        let c: RunConfig = toml::from_str(
            "seed = 3\n[suite]\nepisodes = 5\n[suite.generator]\ntemplate = \"dead_end\"\n",
        )
        .unwrap();
        c.validate().unwrap();
        assert_eq!(c.suite.as_ref().unwrap().episodes, 5);
        assert_eq!(c.memory_capacity, 10);
    }

    #[test]
    fn rejects_unknown_keys_and_missing_seed() {
        assert!(toml::from_str::<RunConfig>("sed = 3").is_err());
        let c: RunConfig = toml::from_str("[suite]\nepisodes = 1\n").unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("seed"));
    }

    #[test]
    fn rejects_bad_ranges() {
        let mut c: RunConfig = toml::from_str("seed = 1\n[suite]\nepisodes = 1\n").unwrap();
        c.hfov_deg = 200.0;
        assert!(c.validate().is_err());
        c.hfov_deg = 79.0;
        c.rethink.tau_theta = 0.0;
        assert!(c.validate().is_err());
    }
}
