//! Run configuration: a single JSON document with defaults tuned for the
//! bundled demo map, plus dotted-path `--set key=value` overrides.
//!
//! Every run embeds its serialized configuration as a comment line in the
//! output CSV, so each artifact records exactly how it was produced.
//! Angles are radians except route sweeps, which use an explicit
//! `sweep_deg` field. The numeric defaults are illustrative choices for
//! the demo world, not calibrated to any particular sensor rig.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use lineloc_core::{
    CameraFootprint, DetectionNoise, FilterConfig, InitMode, InitSpec, ModelVariant, MotionNoise,
    ObsParams, Pose, RouteSegment,
};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub runs: u32,
    pub map: MapConfig,
    pub observation: ObservationConfig,
    pub filter: FilterSection,
    pub simulator: SimulatorConfig,
    pub profile: ProfileConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            runs: 10,
            map: MapConfig::default(),
            observation: ObservationConfig::default(),
            filter: FilterSection::default(),
            simulator: SimulatorConfig::default(),
            profile: ProfileConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    pub vector_map: PathBuf,
    pub prob_map: PathBuf,
    pub resolution: f64,
    pub margin: f64,
    pub sigma_shift: f64,
    pub alpha: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            vector_map: PathBuf::from("crates/lineloc-cli/assets/demo_map.json"),
            prob_map: PathBuf::from("out/demo_map.lfm"),
            resolution: 0.05,
            margin: 3.0,
            sigma_shift: 0.2,
            alpha: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationConfig {
    pub sigma_angle: f64,
    pub spacing: f64,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self { sigma_angle: 0.1, spacing: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub particles: usize,
    pub sigma_linear: f64,
    pub sigma_angular: f64,
    pub variant: ModelVariant,
    pub init: InitMode,
    pub init_pose: Option<[f64; 3]>,
    pub init_sigmas: [f64; 3],
    pub ess_gating: bool,
    pub parallel: bool,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            particles: 1000,
            sigma_linear: 0.05,
            sigma_angular: 0.05,
            variant: ModelVariant::Combined,
            init: InitMode::Gaussian,
            init_pose: None,
            init_sigmas: [0.5, 0.5, 0.1],
            ess_gating: false,
            parallel: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatorConfig {
    pub dt: f64,
    pub max_speed: f64,
    pub start: [f64; 3],
    pub route: Vec<RouteSpec>,
    pub noise: DetectionNoise,
    /// Camera footprints; `None` selects the built-in four-camera rig.
    pub cameras: Option<Vec<CameraFootprint>>,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            max_speed: 15.0,
            start: [-70.0, 0.0, 0.0],
            route: demo_route(),
            noise: DetectionNoise::default(),
            cameras: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    pub iterations: usize,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self { iterations: 500 }
    }
}

/// Route piece as written in config files: arc sweeps in degrees for
/// readability, converted to radians at the boundary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RouteSpec {
    Straight { length: f64, speed: f64 },
    Arc { radius: f64, sweep_deg: f64, speed: f64 },
    Reverse { length: f64, speed: f64 },
}

impl From<RouteSpec> for RouteSegment {
    fn from(spec: RouteSpec) -> Self {
        match spec {
            RouteSpec::Straight { length, speed } => RouteSegment::Straight { length, speed },
            RouteSpec::Arc { radius, sweep_deg, speed } => RouteSegment::Arc {
                radius,
                sweep: sweep_deg.to_radians(),
                speed,
            },
            RouteSpec::Reverse { length, speed } => RouteSegment::Reverse { length, speed },
        }
    }
}

/// Demo route: a long approach over the crossing, a quarter-turn onto the
/// roundabout, one full loop, and a northbound exit (about 228 m).
fn demo_route() -> Vec<RouteSpec> {
    vec![
        RouteSpec::Straight { length: 70.0, speed: 3.0 },
        RouteSpec::Straight { length: 24.0, speed: 3.0 },
        RouteSpec::Arc { radius: 12.0, sweep_deg: 90.0, speed: 3.0 },
        RouteSpec::Arc { radius: 12.0, sweep_deg: 360.0, speed: 3.0 },
        RouteSpec::Straight { length: 40.0, speed: 3.0 },
    ]
}

impl Config {
    /// Loads a config file (or the defaults), applies `--seed` and every
    /// `--set key=value` override, and validates the result.
    pub fn resolve(
        path: Option<&Path>,
        seed: Option<u64>,
        sets: &[String],
    ) -> Result<Self, CliError> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Config(format!("cannot read config {}: {e}", p.display()))
                })?;
                serde_json::from_str::<serde_json::Value>(&text)
                    .map_err(|e| CliError::Config(format!("config {}: {e}", p.display())))?
            }
            None => serde_json::to_value(Config::default()).expect("defaults serialize"),
        };
        for set in sets {
            apply_set(&mut value, set)?;
        }
        if let Some(seed) = seed {
            value["seed"] = serde_json::Value::from(seed);
        }
        let config: Config = serde_json::from_value(value)
            .map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(CliError::Config(format!("config: {what}")))
            }
        };
        check(self.runs >= 1, "runs must be at least 1")?;
        check(self.map.resolution > 0.0, "map.resolution must be positive")?;
        check(self.map.margin >= 0.0, "map.margin must be non-negative")?;
        check(self.map.sigma_shift > 0.0, "map.sigma_shift must be positive")?;
        check(self.map.alpha > 0.0, "map.alpha must be positive")?;
        check(self.observation.sigma_angle > 0.0, "observation.sigma_angle must be positive")?;
        check(self.observation.spacing > 0.0, "observation.spacing must be positive")?;
        check(self.filter.particles >= 1, "filter.particles must be at least 1")?;
        check(self.filter.sigma_linear >= 0.0, "filter.sigma_linear must be non-negative")?;
        check(self.filter.sigma_angular >= 0.0, "filter.sigma_angular must be non-negative")?;
        check(
            self.filter.init_sigmas.iter().all(|s| *s >= 0.0),
            "filter.init_sigmas must be non-negative",
        )?;
        check(self.simulator.dt > 0.0, "simulator.dt must be positive")?;
        check(self.simulator.max_speed > 0.0, "simulator.max_speed must be positive")?;
        check(!self.simulator.route.is_empty(), "simulator.route must not be empty")?;
        check(self.simulator.noise.drop_rate <= 1.0, "simulator.noise.drop_rate must be <= 1")?;
        check(self.profile.iterations >= 1, "profile.iterations must be at least 1")?;
        Ok(())
    }

    /// Compact single-line form embedded in output files.
    pub fn comment_line(&self) -> String {
        format!(
            "config: {}",
            serde_json::to_string(self).expect("config serializes")
        )
    }

    pub fn with_seed(&self, seed: u64) -> Config {
        Config { seed, ..self.clone() }
    }

    pub fn obs_params(&self) -> ObsParams {
        ObsParams {
            sigma_angle: self.observation.sigma_angle,
            spacing: self.observation.spacing,
        }
    }

    pub fn motion_noise(&self) -> MotionNoise {
        MotionNoise {
            sigma_linear: self.filter.sigma_linear,
            sigma_angular: self.filter.sigma_angular,
        }
    }

    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            motion_noise: self.motion_noise(),
            variant: self.filter.variant,
            ess_gating: self.filter.ess_gating,
            parallel: self.filter.parallel,
        }
    }

    pub fn init_spec(&self) -> InitSpec {
        InitSpec {
            mode: self.filter.init,
            pose: self.filter.init_pose.map(|[x, y, t]| Pose::new(x, y, t)),
            sigmas: self.filter.init_sigmas,
            particles: self.filter.particles,
        }
    }

    pub fn cameras(&self) -> Vec<CameraFootprint> {
        self.simulator
            .cameras
            .clone()
            .unwrap_or_else(CameraFootprint::default_rig)
    }

    pub fn route_segments(&self) -> Vec<RouteSegment> {
        self.simulator.route.iter().map(|&s| s.into()).collect()
    }

    pub fn start_pose(&self) -> Pose {
        let [x, y, t] = self.simulator.start;
        Pose::new(x, y, t)
    }
}

/// Applies one `key.path=value` override onto the JSON document. Values
/// parse as JSON when possible and fall back to strings.
fn apply_set(value: &mut serde_json::Value, set: &str) -> Result<(), CliError> {
    let (path, raw) = set
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set needs key=value, got {set:?}")))?;
    let parsed: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cursor = value;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if i + 1 == parts.len() {
            match cursor {
                serde_json::Value::Object(map) => {
                    map.insert(part.to_string(), parsed);
                    return Ok(());
                }
                _ => {
                    return Err(CliError::Config(format!(
                        "--set {path}: {part:?} is not an object field"
                    )))
                }
            }
        }
        cursor = match cursor {
            serde_json::Value::Object(map) => map
                .entry(part.to_string())
                .or_insert_with(|| serde_json::Value::Object(Default::default())),
            _ => {
                return Err(CliError::Config(format!(
                    "--set {path}: {part:?} is not an object field"
                )))
            }
        };
    }
    unreachable!("split produces at least one part")
}
