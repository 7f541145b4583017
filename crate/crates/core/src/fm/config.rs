use super::{Backend, FmError, LiveBackend, Provider, RecordBackend, ReplayBackend, StageSettings};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Live,
    Record,
    Replay,
}

/// Gateway configuration, usually the `[fm]` table of a TOML file.
///
/// The API key is never stored here; `api_key_env` names the environment
/// variable to read it from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FmConfig {
    pub backend: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub cassette_path: Option<PathBuf>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub stage_max_tokens: HashMap<String, u32>,
}

fn default_max_tokens() -> u32 {
    super::DEFAULT_MAX_TOKENS
}

impl FmConfig {
    pub fn replay(cassette: impl Into<PathBuf>) -> Self {
        Self {
            backend: BackendKind::Replay,
            endpoint: None,
            model: None,
            api_key_env: None,
            cassette_path: Some(cassette.into()),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            stage_max_tokens: HashMap::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, FmError> {
        toml::from_str(text).map_err(|e| FmError::Config(e.to_string()))
    }

    /// Loads a config file; a relative `cassette_path` is resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, FmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FmError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(c), Some(dir)) = (&cfg.cassette_path, path.parent()) {
            if c.is_relative() {
                cfg.cassette_path = Some(dir.join(c));
            }
        }
        Ok(cfg)
    }

    pub fn settings(&self) -> StageSettings {
        StageSettings {
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            per_stage_max_tokens: self.stage_max_tokens.clone(),
        }
    }

    fn cassette(&self) -> Result<&Path, FmError> {
        self.cassette_path
            .as_deref()
            .ok_or_else(|| FmError::Config(format!("{:?} backend needs cassette_path", self.backend)))
    }

    /// Builds the configured backend. Live and record modes need the `live`
    /// feature unless a provider is passed explicitly.
    pub fn build(&self, provider: Option<Arc<dyn Provider>>) -> Result<Arc<dyn Backend>, FmError> {
        let backend: Arc<dyn Backend> = match self.backend {
            BackendKind::Replay => Arc::new(ReplayBackend::load(self.cassette()?)?),
            BackendKind::Live => Arc::new(LiveBackend::new(self.provider(provider)?)),
            BackendKind::Record => {
                Arc::new(RecordBackend::open(self.provider(provider)?, self.cassette()?)?)
            }
        };
        Ok(self.settings().wrap(backend))
    }

    fn provider(&self, explicit: Option<Arc<dyn Provider>>) -> Result<Arc<dyn Provider>, FmError> {
        if let Some(p) = explicit {
            return Ok(p);
        }
        self.http_provider()
    }

    #[cfg(feature = "live")]
    fn http_provider(&self) -> Result<Arc<dyn Provider>, FmError> {
        let endpoint = self
            .endpoint
            .clone()
            .ok_or_else(|| FmError::Config("live backend needs endpoint".into()))?;
        let model = self
            .model
            .clone()
            .ok_or_else(|| FmError::Config("live backend needs model".into()))?;
        let api_key = match &self.api_key_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| FmError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        Ok(Arc::new(super::live::HttpProvider::new(
            endpoint,
            model,
            api_key,
            Arc::new(super::live::UreqTransport),
        )))
    }

    #[cfg(not(feature = "live"))]
    fn http_provider(&self) -> Result<Arc<dyn Provider>, FmError> {
        Err(FmError::Config("built without the `live` feature".into()))
    }
}
