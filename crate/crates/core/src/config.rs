//! Declarative run configuration: one human-editable TOML file, flags win
//! over file values, secrets only ever named by environment variable.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reward::Schedule;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Sim,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub path: Option<String>,
    pub seed: u64,
    pub entities: u32,
    pub facts_per_entity: u32,
    pub link_density: f64,
    pub vocabulary_seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        let p = crate::simweb::WorldParams::default();
        WorldConfig {
            path: None,
            seed: 7,
            entities: p.entity_count,
            facts_per_entity: p.facts_per_entity,
            link_density: p.link_density,
            vocabulary_seed: p.vocabulary_seed,
        }
    }
}

impl WorldConfig {
    pub fn params(&self) -> crate::simweb::WorldParams {
        crate::simweb::WorldParams {
            entity_count: self.entities,
            facts_per_entity: self.facts_per_entity,
            link_density: self.link_density,
            vocabulary_seed: self.vocabulary_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisConfig {
    /// Evolution iterations per pair.
    pub k: u32,
    pub exemplars: Option<String>,
    pub entities_file: Option<String>,
    pub temperature: f64,
    /// Prompt template overrides.
    pub exploration_prompt: Option<String>,
    pub evolution_prompt: Option<String>,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            k: 5,
            exemplars: None,
            entities_file: None,
            temperature: 0.6,
            exploration_prompt: None,
            evolution_prompt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RolloutConfig {
    pub group_size: usize,
    pub attempts: u32,
    /// Index into the schedule.
    pub stage: usize,
    /// Explicit `<units>:<turns>` override; wins over `stage`.
    pub limits: Option<String>,
    pub observation_budget: u64,
    pub content_budget: u64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            group_size: 8,
            attempts: 3,
            stage: 0,
            limits: None,
            observation_budget: 2_048,
            content_budget: crate::tools::DEFAULT_CONTENT_BUDGET_UNITS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeMode {
    Normalized,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JudgeConfig {
    pub mode: JudgeMode,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig { mode: JudgeMode::Normalized }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub stages: Vec<(u64, u32)>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig { stages: vec![(65_536, 50), (98_304, 75), (131_072, 100)] }
    }
}

/// Live endpoints. Required when `mode = "live"`, forbidden otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiveConfig {
    pub llm_base_url: String,
    pub llm_model: String,
    #[serde(default = "default_llm_key_env")]
    pub llm_api_key_env: String,
    pub search_base_url: String,
    #[serde(default = "default_search_key_env")]
    pub search_api_key_env: String,
    pub reader_base_url: String,
    #[serde(default = "default_reader_key_env")]
    pub reader_api_key_env: String,
    /// Judge model; defaults to `llm_model`.
    #[serde(default)]
    pub judge_model: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff")]
    pub retry_base_delay_ms: u64,
    #[serde(default = "default_concurrency")]
    pub max_concurrent_requests: usize,
    #[serde(default)]
    pub min_request_interval_ms: u64,
}

fn default_llm_key_env() -> String {
    "LLM_API_KEY".into()
}
fn default_search_key_env() -> String {
    "WEB_SEARCH_API_KEY".into()
}
fn default_reader_key_env() -> String {
    "READER_API_KEY".into()
}
fn default_timeout() -> u64 {
    60
}
fn default_retries() -> u32 {
    2
}
fn default_backoff() -> u64 {
    500
}
fn default_concurrency() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mode: Mode,
    /// 0 means "logical cores".
    pub workers: usize,
    pub world: WorldConfig,
    pub synthesis: SynthesisConfig,
    pub rollout: RolloutConfig,
    pub judge: JudgeConfig,
    pub schedule: ScheduleConfig,
    pub live: Option<LiveConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Sim,
            workers: 0,
            world: WorldConfig::default(),
            synthesis: SynthesisConfig::default(),
            rollout: RolloutConfig::default(),
            judge: JudgeConfig::default(),
            schedule: ScheduleConfig::default(),
            live: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let config: RunConfig = toml::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match (self.mode, &self.live) {
            (Mode::Sim, Some(_)) => {
                return Err(ConfigError::Invalid(
                    "mode = \"sim\" forbids a [live] section".into(),
                ))
            }
            (Mode::Live, None) => {
                return Err(ConfigError::Invalid(
                    "mode = \"live\" requires a [live] section".into(),
                ))
            }
            _ => {}
        }
        if self.synthesis.k < 1 {
            return Err(ConfigError::Invalid("synthesis.k must be >= 1".into()));
        }
        if self.rollout.group_size < 1 {
            return Err(ConfigError::Invalid("rollout.group_size must be >= 1".into()));
        }
        if self.rollout.attempts < 1 {
            return Err(ConfigError::Invalid("rollout.attempts must be >= 1".into()));
        }
        self.schedule()?;
        if let Some(limits) = &self.rollout.limits {
            crate::rollout::RolloutLimits::parse_flag(limits)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<Schedule, ConfigError> {
        Schedule::new(self.schedule.stages.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Effective rollout limits: the explicit flag wins over the stage.
    pub fn rollout_limits(&self) -> Result<crate::rollout::RolloutLimits, ConfigError> {
        if let Some(flag) = &self.rollout.limits {
            return crate::rollout::RolloutLimits::parse_flag(flag)
                .map_err(|e| ConfigError::Invalid(e.to_string()));
        }
        let stage = self
            .schedule()?
            .stage(self.rollout.stage)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(crate::rollout::RolloutLimits::from_stage(stage))
    }

    pub fn effective_workers(&self) -> usize {
        if self.workers == 0 {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        } else {
            self.workers
        }
    }
}
