//! Uniform access to multimodal foundation models.
//!
//! Three interchangeable backends sit behind [`Backend`]:
//!
//! * [`LiveBackend`] forwards to a [`Provider`] (normally the HTTP client in
//!   [`live`]),
//! * [`RecordBackend`] serves known requests from a cassette and records new
//!   ones after asking the provider,
//! * [`ReplayBackend`] answers only from a cassette and never touches the network.
//!
//! Requests are keyed by a [`fingerprint`] over their canonical content, so the
//! same prompt with the same images always maps to the same cassette entry.

mod backend;
mod cassette;
mod config;
pub mod live;

pub use backend::{LiveBackend, RecordBackend, ReplayBackend, ScriptedProvider, StageSettings};
pub use cassette::{Cassette, CassetteEntry, CassetteError};
pub use config::{BackendKind, FmConfig};

use sha2::{Digest, Sha256};
use std::sync::Arc;

pub const DEFAULT_MAX_TOKENS: u32 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageRole {
    System,
    User,
    Assistant,
}

impl MessageRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            MessageRole::System => "system",
            MessageRole::User => "user",
            MessageRole::Assistant => "assistant",
        }
    }
}

/// PNG image attached to a message. Content, not name, is what identifies it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub name: String,
    pub png: Arc<Vec<u8>>,
}

impl Image {
    pub fn new(name: impl Into<String>, png: impl Into<Arc<Vec<u8>>>) -> Self {
        Self {
            name: name.into(),
            png: png.into(),
        }
    }

    pub fn digest(&self) -> String {
        crate::raster::digest(&self.png)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub role: MessageRole,
    pub text: String,
    pub images: Vec<Image>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmRequest {
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Calling stage, e.g. `execute.suggest`. Not part of the fingerprint.
    pub tag: String,
}

impl FmRequest {
    pub fn new(tag: impl Into<String>) -> Self {
        Self {
            messages: Vec::new(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            tag: tag.into(),
        }
    }

    pub fn system(mut self, text: impl Into<String>) -> Self {
        self.messages.push(Message {
            role: MessageRole::System,
            text: text.into(),
            images: Vec::new(),
        });
        self
    }

    pub fn user(mut self, text: impl Into<String>, images: Vec<Image>) -> Self {
        self.messages.push(Message {
            role: MessageRole::User,
            text: text.into(),
            images,
        });
        self
    }

    pub fn image_count(&self) -> usize {
        self.messages.iter().map(|m| m.images.len()).sum()
    }

    pub fn text_len(&self) -> usize {
        self.messages.iter().map(|m| m.text.len()).sum()
    }

    /// All message texts joined by blank lines.
    pub fn full_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.text.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    pub fn images(&self) -> impl Iterator<Item = &Image> {
        self.messages.iter().flat_map(|m| m.images.iter())
    }

    pub fn check(&self) -> Result<(), FmError> {
        if self.messages.is_empty() {
            return Err(FmError::InvalidRequest("request has no messages".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(FmError::InvalidRequest(format!(
                "temperature {} is not a non-negative number",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FmResponse {
    pub text: String,
    pub backend_id: String,
    pub request_fingerprint: String,
}

#[derive(Debug, thiserror::Error)]
pub enum FmError {
    #[error("provider returned {status}: {body}")]
    ProviderError { status: u16, body: String },
    #[error("cassette has no entry for {fingerprint} (requested by {tag})")]
    CacheMiss { fingerprint: String, tag: String },
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error(transparent)]
    Cassette(#[from] CassetteError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("scripted provider: {0}")]
    Scripted(String),
}

/// Produces raw completions. Implemented by the HTTP client and by scripted
/// responders used to author cassettes.
pub trait Provider: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &FmRequest) -> Result<String, FmError>;
}

pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &FmRequest) -> Result<FmResponse, FmError>;
    /// Number of requests forwarded to a provider so far.
    fn provider_calls(&self) -> u64;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn complete(&self, request: &FmRequest) -> Result<FmResponse, FmError> {
        (**self).complete(request)
    }
    fn provider_calls(&self) -> u64 {
        (**self).provider_calls()
    }
}

/// Reads a YES/NO answer: the first standalone yes/no/true/false word wins.
pub fn parse_verdict(text: &str) -> Option<bool> {
    text.split(|c: char| !c.is_ascii_alphabetic())
        .find_map(|w| match w.to_ascii_lowercase().as_str() {
            "yes" | "true" => Some(true),
            "no" | "false" => Some(false),
            _ => None,
        })
}

/// Stable digest of the canonical request content: message roles and texts
/// (verbatim), image content digests, temperature and max_tokens.
pub fn fingerprint(request: &FmRequest) -> String {
    let mut h = Sha256::new();
    h.update(b"eclair-fm-request-v1\n");
    // -0.0 and 0.0 are the same setting.
    let temperature = if request.temperature == 0.0 {
        0.0f64
    } else {
        request.temperature
    };
    h.update(format!("temperature:{:016x}\n", temperature.to_bits()).as_bytes());
    h.update(format!("max_tokens:{}\n", request.max_tokens).as_bytes());
    for m in &request.messages {
        h.update(format!("role:{}\n", m.role.as_str()).as_bytes());
        h.update(format!("text:{}:", m.text.len()).as_bytes());
        h.update(m.text.as_bytes());
        h.update(b"\n");
        for img in &m.images {
            h.update(format!("image:{}\n", img.digest()).as_bytes());
        }
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{Canvas, WHITE};

    fn req() -> FmRequest {
        FmRequest::new("t").system("You are a GUI agent.").user(
            "Click the button",
            vec![Image::new("s.png", Canvas::new(4, 4, WHITE).to_png())],
        )
    }

    #[test]
    fn verdicts() {
        assert_eq!(parse_verdict("YES\nThe page changed."), Some(true));
        assert_eq!(parse_verdict("Verdict: no, nothing happened"), Some(false));
        assert_eq!(parse_verdict("Nothing to say"), None);
        assert_eq!(parse_verdict("yesterday"), None);
    }

    #[test]
    fn same_request_same_digest() {
        assert_eq!(fingerprint(&req()), fingerprint(&req()));
    }

    #[test]
    fn temperature_changes_digest() {
        let mut b = req();
        b.temperature = 0.1;
        assert_ne!(fingerprint(&req()), fingerprint(&b));
    }

    #[test]
    fn one_pixel_changes_digest() {
        let mut c = Canvas::new(4, 4, WHITE);
        c.put(2, 1, [254, 255, 255]);
        let mut b = req();
        b.messages[1].images[0] = Image::new("s.png", c.to_png());
        assert_ne!(fingerprint(&req()), fingerprint(&b));
    }

    #[test]
    fn image_name_and_tag_do_not_matter() {
        let mut b = req();
        b.messages[1].images[0].name = "other.png".into();
        b.tag = "different".into();
        assert_eq!(fingerprint(&req()), fingerprint(&b));
    }

    #[test]
    fn whitespace_is_significant() {
        let mut b = req();
        b.messages[1].text.push(' ');
        assert_ne!(fingerprint(&req()), fingerprint(&b));
    }

    #[test]
    fn request_checks() {
        assert!(FmRequest::new("x").check().is_err());
        let mut r = req();
        r.temperature = -1.0;
        assert!(r.check().is_err());
        assert!(req().check().is_ok());
    }
}
