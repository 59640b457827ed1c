//! Run configuration: one text document with a section per subsystem.
//!
//! A run starts from a named profile and applies the user's overrides on top.
//! Keys that do not exist in the profile are rejected, so a typo fails
//! loudly instead of silently falling back to a default.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Full-size architecture: 72×128 inputs, the original conv chain, H = 12.
    Paper,
    /// Reduced inputs and channels for single-machine runs and CI.
    Desk,
}

impl FromStr for Profile {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Self::Paper),
            "desk" => Ok(Self::Desk),
            other => Err(CoreError::Config(format!("unknown profile `{other}` (expected paper or desk)"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Paper => "paper",
            Self::Desk => "desk",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    Fusion,
    GroundOnly,
    AirOnly,
}

impl InputMode {
    pub fn uses_ground(self) -> bool {
        matches!(self, Self::Fusion | Self::GroundOnly)
    }

    pub fn uses_aerial(self) -> bool {
        matches!(self, Self::Fusion | Self::AirOnly)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Fusion => "fusion",
            Self::GroundOnly => "ground_only",
            Self::AirOnly => "air_only",
        }
    }
}

impl FromStr for InputMode {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fusion" => Ok(Self::Fusion),
            "ground_only" | "ground" => Ok(Self::GroundOnly),
            "air_only" | "air" => Ok(Self::AirOnly),
            other => Err(CoreError::Config(format!(
                "unknown input mode `{other}` (expected fusion, ground_only or air_only)"
            ))),
        }
    }
}

impl fmt::Display for InputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub width_m: f64,
    pub height_m: f64,
    pub cell_size_m: f64,
    /// |C|, including the obstacle class.
    pub num_classes: usize,
    /// Area share of each non-obstacle class, smoothest first.
    pub class_fractions: Vec<f64>,
    /// Lattice spacing of the terrain value noise.
    pub terrain_feature_m: f64,
    pub canopy_fraction: f64,
    pub grass_fraction: f64,
    pub occluder_feature_m: f64,
    /// Tree trunks per square metre under canopy.
    pub tree_density: f64,
    /// Rocks per square metre outside canopy.
    pub rock_density: f64,
    pub obstacle_radius_min_m: f64,
    pub obstacle_radius_max_m: f64,
    pub max_retries: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleConfig {
    pub speed_mps: f64,
    pub wheelbase_m: f64,
    pub max_steer_deg: f64,
    pub control_hz: f64,
}

impl VehicleConfig {
    pub fn dt(&self) -> f64 {
        1.0 / self.control_hz
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub ground_height_px: usize,
    pub ground_width_px: usize,
    pub camera_height_m: f64,
    pub pitch_deg: f64,
    pub hfov_deg: f64,
    pub view_depth_m: f64,
    /// How far a ray may travel through tall grass before it is blocked.
    pub grass_view_depth_m: f64,
    pub grass_height_m: f64,
    pub obstacle_height_m: f64,
    pub aerial_height_px: usize,
    pub aerial_width_px: usize,
    pub patch_lateral_m: f64,
    pub patch_forward_m: f64,
    pub patch_ahead_m: f64,
    /// Per-cell colour noise amplitude, in [0, 1] colour units.
    pub texture_noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeConfig {
    pub n_beams: usize,
    pub fan_deg: f64,
    pub max_range_m: f64,
    pub collision_threshold_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImuConfig {
    pub samples: usize,
    pub rate_hz: f64,
    /// Expected RMS (m/s²) per non-obstacle class at the reference speed.
    pub rms_per_class: Vec<f64>,
    /// Dominant vibration frequency per non-obstacle class.
    pub freq_per_class: Vec<f64>,
    /// White-noise share of the signal RMS.
    pub noise_fraction: f64,
    /// Log-normal spread of the per-window amplitude.
    pub amplitude_jitter: f64,
    pub reference_speed_mps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelingConfig {
    pub clusters: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub obstacle_threshold_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplorationConfig {
    pub hold_mean_s: f64,
    pub hold_std_s: f64,
    pub hold_min_s: f64,
    pub jitter_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    Time,
    Distance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectConfig {
    pub episodes: usize,
    pub max_steps: usize,
    pub spawn_clearance_m: f64,
    pub sampling: SamplingMode,
    pub sample_spacing_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub mode: InputMode,
    pub horizon: usize,
    pub history: usize,
    pub conv_channels: Vec<usize>,
    pub conv_kernels: Vec<usize>,
    pub conv_strides: Vec<usize>,
    pub conv_padding: Vec<usize>,
    pub hidden: usize,
    pub action_embed: usize,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub steps: usize,
    pub eval_interval: usize,
    pub eval_samples: usize,
    pub validation_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolloutScheme {
    PerStepUniform,
    HeldInterval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    pub candidates: usize,
    pub scheme: RolloutScheme,
    pub max_steps: usize,
    /// Drop candidates whose predicted obstacle probability exceeds
    /// `veto_threshold` at any step (off by default).
    pub collision_veto: bool,
    pub veto_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    pub max_steps: usize,
    pub spawn_clearance_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub world_train: u64,
    pub world_test: u64,
    pub collect: u64,
    pub labeling: u64,
    pub train: u64,
    pub planner: u64,
    pub eval: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    pub world: WorldConfig,
    pub vehicle: VehicleConfig,
    pub camera: CameraConfig,
    pub range: RangeConfig,
    pub imu: ImuConfig,
    pub labeling: LabelingConfig,
    pub exploration: ExplorationConfig,
    pub collect: CollectConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub planner: PlannerConfig,
    pub eval: EvalConfig,
    pub seeds: Seeds,
}

impl RunConfig {
    pub fn profile(profile: Profile) -> Self {
        match profile {
            Profile::Desk => Self::desk(),
            Profile::Paper => Self::paper(),
        }
    }

    fn desk() -> Self {
        Self {
            profile: Profile::Desk,
            world: WorldConfig {
                width_m: 64.0,
                height_m: 64.0,
                cell_size_m: 0.25,
                num_classes: 4,
                class_fractions: vec![0.55, 0.25, 0.20],
                terrain_feature_m: 6.0,
                canopy_fraction: 0.35,
                grass_fraction: 0.4,
                occluder_feature_m: 10.0,
                tree_density: 0.12,
                rock_density: 0.01,
                obstacle_radius_min_m: 0.25,
                obstacle_radius_max_m: 0.6,
                max_retries: 32,
            },
            vehicle: VehicleConfig {
                speed_mps: 6.0 / 3.6,
                wheelbase_m: 0.5,
                max_steer_deg: 30.0,
                control_hz: 6.0,
            },
            camera: CameraConfig {
                ground_height_px: 24,
                ground_width_px: 32,
                camera_height_m: 0.5,
                pitch_deg: 20.0,
                hfov_deg: 90.0,
                view_depth_m: 8.0,
                grass_view_depth_m: 0.35,
                grass_height_m: 0.45,
                obstacle_height_m: 1.5,
                aerial_height_px: 24,
                aerial_width_px: 32,
                patch_lateral_m: 12.0,
                patch_forward_m: 9.0,
                patch_ahead_m: 1.5,
                texture_noise: 20.0 / 255.0,
            },
            range: RangeConfig {
                n_beams: 9,
                fan_deg: 60.0,
                max_range_m: 4.0,
                collision_threshold_m: 0.4,
            },
            imu: ImuConfig {
                samples: 20,
                rate_hz: 60.0,
                rms_per_class: vec![0.3, 0.9, 2.2],
                freq_per_class: vec![6.0, 12.0, 21.0],
                noise_fraction: 0.2,
                amplitude_jitter: 0.1,
                reference_speed_mps: 6.0 / 3.6,
            },
            labeling: LabelingConfig {
                clusters: 3,
                restarts: 10,
                max_iter: 100,
                obstacle_threshold_m: 0.75,
            },
            exploration: ExplorationConfig {
                hold_mean_s: 1.5,
                hold_std_s: 0.5,
                hold_min_s: 0.2,
                jitter_std: 0.05,
            },
            collect: CollectConfig {
                episodes: 240,
                max_steps: 720,
                spawn_clearance_m: 2.0,
                sampling: SamplingMode::Time,
                sample_spacing_m: 0.35,
            },
            model: ModelConfig {
                mode: InputMode::Fusion,
                horizon: 8,
                history: 4,
                conv_channels: vec![16, 32, 32, 32],
                conv_kernels: vec![4, 3, 3, 3],
                conv_strides: vec![2, 2, 1, 1],
                conv_padding: vec![0, 0, 0, 0],
                hidden: 64,
                action_embed: 16,
                dropout: 0.0,
            },
            train: TrainConfig {
                batch_size: 32,
                learning_rate: 1e-3,
                l2: 1e-6,
                steps: 3000,
                eval_interval: 250,
                eval_samples: 512,
                validation_fraction: 0.25,
            },
            planner: PlannerConfig {
                candidates: 128,
                scheme: RolloutScheme::HeldInterval,
                max_steps: 720,
                collision_veto: false,
                veto_threshold: 0.5,
            },
            eval: EvalConfig {
                episodes: 60,
                max_steps: 360,
                spawn_clearance_m: 2.0,
            },
            seeds: Seeds {
                world_train: 11,
                world_test: 23,
                collect: 101,
                labeling: 7,
                train: 3,
                planner: 5,
                eval: 2024,
            },
        }
    }

    fn paper() -> Self {
        let mut cfg = Self::desk();
        cfg.profile = Profile::Paper;
        cfg.world.width_m = 96.0;
        cfg.world.height_m = 96.0;
        cfg.camera.ground_height_px = 72;
        cfg.camera.ground_width_px = 128;
        cfg.camera.aerial_height_px = 72;
        cfg.camera.aerial_width_px = 128;
        cfg.collect.episodes = 420;
        cfg.model.horizon = 12;
        cfg.model.conv_channels = vec![32, 64, 64, 64];
        cfg.model.conv_kernels = vec![8, 4, 4, 3];
        cfg.model.conv_strides = vec![4, 2, 2, 1];
        // The valid-convolution chain leaves a 2-row map before the final
        // 3×3 layer, so that layer is padded by one.
        cfg.model.conv_padding = vec![0, 0, 0, 1];
        cfg.train.learning_rate = 1e-4;
        cfg.train.steps = 28_000;
        cfg.eval.max_steps = 720;
        cfg
    }

    /// Builds a configuration from the profile and an optional override
    /// document. `profile_override` wins over a `profile` key in the text.
    pub fn resolve(text: Option<&str>, profile_override: Option<Profile>) -> Result<Self> {
        let doc: toml::Table = match text {
            Some(t) => t.parse().map_err(|e: toml::de::Error| CoreError::Config(e.to_string()))?,
            None => toml::Table::new(),
        };
        let profile = match (profile_override, doc.get("profile")) {
            (Some(p), _) => p,
            (None, Some(toml::Value::String(s))) => s.parse()?,
            (None, Some(other)) => {
                return Err(CoreError::Config(format!("`profile` must be a string, got {other}")));
            }
            (None, None) => Profile::Desk,
        };
        let base = Self::profile(profile);
        let mut merged = toml::Table::try_from(&base).map_err(|e| CoreError::Config(e.to_string()))?;
        merge(&mut merged, doc, "")?;
        merged.insert("profile".into(), toml::Value::String(profile.to_string()));
        let cfg: RunConfig = merged.try_into().map_err(|e: toml::de::Error| CoreError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(CoreError::Config(m));
        let c = self.world.num_classes;
        if c < 2 {
            return fail(format!("world.num_classes must be >= 2, got {c}"));
        }
        if self.world.class_fractions.len() != c - 1 {
            return fail(format!("world.class_fractions needs {} entries", c - 1));
        }
        if self.imu.rms_per_class.len() != c - 1 || self.imu.freq_per_class.len() != c - 1 {
            return fail(format!("imu.rms_per_class and imu.freq_per_class need {} entries", c - 1));
        }
        let m = &self.model;
        let n = m.conv_channels.len();
        if n == 0 || m.conv_kernels.len() != n || m.conv_strides.len() != n || m.conv_padding.len() != n {
            return fail("model.conv_* lists must be non-empty and equally long".into());
        }
        if m.horizon == 0 || m.history == 0 || m.hidden == 0 || m.action_embed == 0 {
            return fail("model sizes must be positive".into());
        }
        if !(0.0..1.0).contains(&m.dropout) {
            return fail(format!("model.dropout must lie in [0, 1), got {}", m.dropout));
        }
        if self.labeling.clusters == 0 || self.labeling.clusters >= c {
            return fail(format!("labeling.clusters must lie in 1..{c}, got {}", self.labeling.clusters));
        }
        if self.planner.candidates == 0 {
            return fail("planner.candidates must be positive".into());
        }
        if self.train.batch_size == 0 {
            return fail("train.batch_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.train.validation_fraction) {
            return fail("train.validation_fraction must lie in [0, 1)".into());
        }
        let positive = [
            ("world.width_m", self.world.width_m),
            ("world.height_m", self.world.height_m),
            ("world.cell_size_m", self.world.cell_size_m),
            ("vehicle.speed_mps", self.vehicle.speed_mps),
            ("vehicle.wheelbase_m", self.vehicle.wheelbase_m),
            ("vehicle.control_hz", self.vehicle.control_hz),
            ("imu.rate_hz", self.imu.rate_hz),
            ("range.max_range_m", self.range.max_range_m),
            ("collect.sample_spacing_m", self.collect.sample_spacing_m),
            ("train.learning_rate", self.train.learning_rate),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.train.l2.is_finite() && self.train.l2 >= 0.0) {
            return fail(format!("train.l2 must be non-negative, got {}", self.train.l2));
        }
        let counts = [
            ("collect.episodes", self.collect.episodes),
            ("collect.max_steps", self.collect.max_steps),
            ("train.eval_interval", self.train.eval_interval),
            ("eval.episodes", self.eval.episodes),
            ("eval.max_steps", self.eval.max_steps),
            ("planner.max_steps", self.planner.max_steps),
            ("imu.samples", self.imu.samples),
        ];
        for (name, v) in counts {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Table, overrides: toml::Table, prefix: &str) -> Result<()> {
    for (key, value) in overrides {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o, &path)?,
            (Some(toml::Value::Table(_)), _) => {
                return Err(CoreError::Config(format!("`{path}` is a section, not a value")));
            }
            (Some(slot), v) => *slot = v,
            (None, _) => return Err(CoreError::Config(format!("unknown key `{path}`"))),
        }
    }
    Ok(())
}
