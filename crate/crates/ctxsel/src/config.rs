//! Run configuration, read from a JSON file. Unknown keys are rejected at
//! every level; omitted keys take the defaults below.

use crate::error::{Error, Result};
use ctxsel_core::argen::{Geometry, GeneratorConfig, NoiseSchedule};
use ctxsel_core::baselines::{Strategy, WindowParams};
use ctxsel_core::grpo::GrpoConfig;
use ctxsel_core::policynet::PolicyConfig;
use ctxsel_core::rewards::RewardConfig;
use ctxsel_core::synthenv::{Amplitudes, EnvSpec, Layout};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// How context is chosen for scenes after the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Selector {
    Policy,
    Baseline(Strategy),
}

impl Selector {
    pub fn name(&self) -> &'static str {
        match self {
            Selector::Policy => "policy",
            Selector::Baseline(s) => s.name(),
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Selector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "policy" {
            return Ok(Selector::Policy);
        }
        s.parse::<Strategy>()
            .map(Selector::Baseline)
            .map_err(|_| Error::Config(format!("unknown strategy {s:?}; expected policy or a baseline name")))
    }
}

impl TryFrom<String> for Selector {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Selector> for String {
    fn from(s: Selector) -> String {
        s.name().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentConfig {
    pub layout: Layout,
    pub shuffle_layout: bool,
    pub amplitudes: Amplitudes,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        let spec = EnvSpec::canonical(0);
        Self { layout: spec.layout, shuffle_layout: spec.shuffle_layout, amplitudes: spec.amplitudes }
    }
}

/// Per-step signal scale α and fresh-noise scale σ, in application order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub alphas: Vec<f64>,
    pub sigmas: Vec<f64>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        let s = NoiseSchedule::default();
        Self { alphas: s.alphas().to_vec(), sigmas: s.sigmas().to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Scene count N, including the opening scene.
    pub scenes: usize,
    /// Selection budget K in tokens.
    pub budget: usize,
    pub strategy: Selector,
    /// Start every scene from the initial policy instead of the previous scene's.
    pub reset_policy_per_scene: bool,
    /// Write elapsed milliseconds to the metrics file; zeros otherwise.
    pub record_wall_clock: bool,
    pub environment: EnvironmentConfig,
    pub geometry: Geometry,
    pub schedule: ScheduleConfig,
    pub generator: GeneratorConfig,
    pub policy: PolicyConfig,
    pub grpo: GrpoConfig,
    pub rewards: RewardConfig,
    pub window: WindowParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        let spec = EnvSpec::canonical(0);
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            scenes: spec.scenes,
            budget: 3,
            strategy: Selector::Policy,
            reset_policy_per_scene: false,
            record_wall_clock: true,
            environment: EnvironmentConfig::default(),
            geometry: spec.geometry,
            schedule: ScheduleConfig::default(),
            generator: GeneratorConfig::default(),
            policy: PolicyConfig::default(),
            grpo: GrpoConfig::default(),
            rewards: RewardConfig::default(),
            window: WindowParams::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises") + "\n"
    }

    pub fn env_spec(&self) -> EnvSpec {
        EnvSpec {
            seed: self.seed,
            geometry: self.geometry,
            scenes: self.scenes,
            layout: self.environment.layout,
            shuffle_layout: self.environment.shuffle_layout,
            amplitudes: self.environment.amplitudes,
        }
    }

    pub fn noise_schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::new(self.schedule.alphas.clone(), self.schedule.sigmas.clone()).map_err(config_error)
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig { seed: self.seed, ..self.generator }
    }

    /// Checks everything that can be checked without building the environment.
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate().map_err(config_error)?;
        self.noise_schedule()?;
        self.grpo.validate().map_err(config_error)?;
        self.policy.validate().map_err(config_error)?;
        if self.scenes == 0 {
            return Err(Error::Config("scenes must be at least 1".into()));
        }
        if self.policy.model_dim != self.geometry.dim {
            return Err(Error::Config(format!(
                "policy.model_dim {} must equal geometry.dim {}",
                self.policy.model_dim, self.geometry.dim
            )));
        }
        let segment = self.geometry.tokens_per_segment();
        if self.environment.layout.total() != segment {
            return Err(Error::Config(format!(
                "layout has {} tokens but a segment has {segment}",
                self.environment.layout.total()
            )));
        }
        // History only grows, so the first trained scene is the tightest.
        if self.strategy != Selector::Baseline(Strategy::Vanilla) && (self.budget == 0 || self.budget > segment) {
            return Err(Error::Core(ctxsel_core::Error::Budget { k: self.budget, available: segment }));
        }
        if self.rewards.e == 0 || self.rewards.q == 0 {
            return Err(Error::Config("rewards.e and rewards.q must be positive".into()));
        }
        Ok(())
    }
}

fn config_error(e: ctxsel_core::Error) -> Error {
    match e {
        ctxsel_core::Error::Config(m) => Error::Config(m),
        other => Error::Config(other.to_string()),
    }
}
