//! `eclair.toml`: the model backend plus per-suite and service settings.

use eclair_core::fm::FmConfig;
use eclair_core::ground::GroundStrategy;
use eclair_core::validate::Subject;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_MAX_CONCURRENT_RUNS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgeChoice {
    Fm,
    Det,
}

impl std::str::FromStr for JudgeChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fm" => Ok(JudgeChoice::Fm),
            "det" | "deterministic" => Ok(JudgeChoice::Det),
            _ => Err(format!("unknown judge {s:?}; expected fm or det")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateSettings {
    pub judge: JudgeChoice,
    /// Tasks to score; all of them when empty.
    pub tasks: Vec<Subject>,
    /// Timing jitter seeds of the fixture traces the set is built from.
    pub jitter_seeds: Vec<u64>,
    /// A labeled set on disk instead of the fixture set.
    pub set: Option<PathBuf>,
}

impl Default for ValidateSettings {
    fn default() -> Self {
        Self {
            judge: JudgeChoice::Fm,
            tasks: Vec::new(),
            jitter_seeds: vec![0],
            set: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundingSettings {
    pub strategies: Vec<GroundStrategy>,
    /// Case directory; the fixture cases are used when absent.
    pub dataset: Option<PathBuf>,
}

impl Default for GroundingSettings {
    fn default() -> Self {
        Self {
            strategies: vec![GroundStrategy::Som, GroundStrategy::Direct],
            dataset: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemonstrateSettings {
    pub judge: JudgeChoice,
}

impl Default for DemonstrateSettings {
    fn default() -> Self {
        Self { judge: JudgeChoice::Fm }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExecuteSettings {
    pub strategy: GroundStrategy,
    /// Workflow ids to run; every fixture workflow when empty.
    pub workflows: Vec<String>,
}

impl Default for ExecuteSettings {
    fn default() -> Self {
        Self {
            strategy: GroundStrategy::Som,
            workflows: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceSettings {
    pub data_dir: PathBuf,
    pub max_concurrent_runs: usize,
    /// Environment variable holding the bearer token. No auth when unset.
    pub token_env: Option<String>,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("eclair-data"),
            max_concurrent_runs: DEFAULT_MAX_CONCURRENT_RUNS,
            token_env: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub fm: FmConfig,
    #[serde(default)]
    pub validate: ValidateSettings,
    #[serde(default)]
    pub grounding: GroundingSettings,
    #[serde(default)]
    pub demonstrate: DemonstrateSettings,
    #[serde(default)]
    pub execute: ExecuteSettings,
    #[serde(default)]
    pub service: ServiceSettings,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let err = |message: String| ConfigError::Invalid {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let mut cfg = Self::from_toml(&text).map_err(err)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let Some(p) = cfg.fm.cassette_path.as_mut() {
            fix(p);
        }
        if let Some(p) = cfg.validate.set.as_mut() {
            fix(p);
        }
        if let Some(p) = cfg.grounding.dataset.as_mut() {
            fix(p);
        }
        fix(&mut cfg.service.data_dir);
        Ok(cfg)
    }

    /// Replay of one cassette with default settings.
    pub fn replay(cassette: impl Into<PathBuf>) -> Self {
        Self {
            fm: FmConfig::replay(cassette),
            validate: ValidateSettings::default(),
            grounding: GroundingSettings::default(),
            demonstrate: DemonstrateSettings::default(),
            execute: ExecuteSettings::default(),
            service: ServiceSettings::default(),
        }
    }
}
