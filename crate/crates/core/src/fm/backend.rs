use super::cassette::{Cassette, CassetteEntry, CassetteWriter};
use super::{fingerprint, Backend, FmError, FmRequest, FmResponse, Provider};
use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

/// Forwards every request to the provider.
pub struct LiveBackend<P> {
    provider: P,
    id: String,
    calls: AtomicU64,
}

impl<P: Provider> LiveBackend<P> {
    pub fn new(provider: P) -> Self {
        let id = format!("live:{}", provider.id());
        Self {
            provider,
            id,
            calls: AtomicU64::new(0),
        }
    }
}

impl<P: Provider> Backend for LiveBackend<P> {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &FmRequest) -> Result<FmResponse, FmError> {
        request.check()?;
        let fp = fingerprint(request);
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = self.provider.complete(request)?;
        Ok(FmResponse {
            text,
            backend_id: self.id.clone(),
            request_fingerprint: fp,
        })
    }

    fn provider_calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

/// Serves from the cassette when possible; otherwise asks the provider and
/// appends the answer.
pub struct RecordBackend<P> {
    provider: P,
    id: String,
    entries: RwLock<Cassette>,
    writer: Mutex<CassetteWriter>,
    calls: AtomicU64,
}

impl<P: Provider> RecordBackend<P> {
    pub fn open(provider: P, cassette_path: &Path) -> Result<Self, FmError> {
        let entries = Cassette::load_or_empty(cassette_path)?;
        let writer = CassetteWriter::open(cassette_path)?;
        let id = format!("record:{}", provider.id());
        Ok(Self {
            provider,
            id,
            entries: RwLock::new(entries),
            writer: Mutex::new(writer),
            calls: AtomicU64::new(0),
        })
    }

    pub fn cassette(&self) -> Cassette {
        self.entries.read().expect("cassette lock").clone()
    }
}

impl<P: Provider> Backend for RecordBackend<P> {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &FmRequest) -> Result<FmResponse, FmError> {
        request.check()?;
        let fp = fingerprint(request);
        if let Some(e) = self.entries.read().expect("cassette lock").get(&fp) {
            return Ok(FmResponse {
                text: e.response.clone(),
                backend_id: self.id.clone(),
                request_fingerprint: fp,
            });
        }
        // Serialize misses so a request is never sent to the provider twice.
        let mut writer = self.writer.lock().expect("writer lock");
        if let Some(e) = self.entries.read().expect("cassette lock").get(&fp) {
            return Ok(FmResponse {
                text: e.response.clone(),
                backend_id: self.id.clone(),
                request_fingerprint: fp,
            });
        }
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = self.provider.complete(request)?;
        let entry = CassetteEntry {
            fp: fp.clone(),
            tag: request.tag.clone(),
            response: text.clone(),
        };
        writer.append(&entry)?;
        self.entries.write().expect("cassette lock").insert(entry);
        Ok(FmResponse {
            text,
            backend_id: self.id.clone(),
            request_fingerprint: fp,
        })
    }

    fn provider_calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

/// Answers strictly from a cassette. Holds no transport.
pub struct ReplayBackend {
    cassette: Cassette,
}

impl ReplayBackend {
    pub fn new(cassette: Cassette) -> Self {
        Self { cassette }
    }

    pub fn load(path: &Path) -> Result<Self, FmError> {
        Ok(Self::new(Cassette::load(path)?))
    }
}

impl Backend for ReplayBackend {
    fn id(&self) -> &str {
        "replay"
    }

    fn complete(&self, request: &FmRequest) -> Result<FmResponse, FmError> {
        request.check()?;
        let fp = fingerprint(request);
        match self.cassette.get(&fp) {
            Some(e) => Ok(FmResponse {
                text: e.response.clone(),
                backend_id: "replay".into(),
                request_fingerprint: fp,
            }),
            None => Err(FmError::CacheMiss {
                fingerprint: fp,
                tag: request.tag.clone(),
            }),
        }
    }

    fn provider_calls(&self) -> u64 {
        0
    }
}

type Script = dyn Fn(&FmRequest) -> Result<String, FmError> + Send + Sync;

/// Provider backed by a closure; used to author cassettes offline.
#[derive(Clone)]
pub struct ScriptedProvider {
    id: String,
    script: Arc<Script>,
}

impl ScriptedProvider {
    pub fn new(
        id: impl Into<String>,
        script: impl Fn(&FmRequest) -> Result<String, FmError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            id: id.into(),
            script: Arc::new(script),
        }
    }
}

impl Provider for ScriptedProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &FmRequest) -> Result<String, FmError> {
        (self.script)(request)
    }
}

impl<P: Provider + ?Sized> Provider for Arc<P> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn complete(&self, request: &FmRequest) -> Result<String, FmError> {
        (**self).complete(request)
    }
}

/// Temperature and token limits applied to every request, with per-stage
/// `max_tokens` overrides keyed by request tag.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSettings {
    pub temperature: f64,
    pub max_tokens: u32,
    pub per_stage_max_tokens: HashMap<String, u32>,
}

impl Default for StageSettings {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: super::DEFAULT_MAX_TOKENS,
            per_stage_max_tokens: HashMap::new(),
        }
    }
}

impl StageSettings {
    pub fn apply(&self, request: &FmRequest) -> FmRequest {
        let mut r = request.clone();
        r.temperature = self.temperature;
        r.max_tokens = self
            .per_stage_max_tokens
            .get(&r.tag)
            .copied()
            .unwrap_or(self.max_tokens);
        r
    }

    /// Wraps `inner` so every request passes through [`StageSettings::apply`].
    pub fn wrap(self, inner: Arc<dyn Backend>) -> Arc<dyn Backend> {
        if self == StageSettings::default() {
            inner
        } else {
            Arc::new(Tuned {
                inner,
                settings: self,
            })
        }
    }
}

struct Tuned {
    inner: Arc<dyn Backend>,
    settings: StageSettings,
}

impl Backend for Tuned {
    fn id(&self) -> &str {
        self.inner.id()
    }
    fn complete(&self, request: &FmRequest) -> Result<FmResponse, FmError> {
        self.inner.complete(&self.settings.apply(request))
    }
    fn provider_calls(&self) -> u64 {
        self.inner.provider_calls()
    }
}
