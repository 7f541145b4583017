//! HTTP provider speaking the chat-completions JSON dialect.

use super::{FmError, FmRequest, Provider};
use base64::Engine;
use serde_json::{json, Value};
use std::sync::Arc;
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("timed out")]
    Timeout,
    #[error("connection failed: {0}")]
    Connection(String),
}

/// Raw POST of a JSON body. Non-2xx statuses are replies, not errors.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &str,
        timeout: Duration,
    ) -> Result<HttpReply, TransportError>;
}

pub struct HttpProvider {
    pub endpoint: String,
    pub model: String,
    api_key: Option<String>,
    transport: Arc<dyn Transport>,
    pub timeout: Duration,
    /// Attempts after the first one, for transport failures only.
    pub retries: u32,
    pub backoff_base: Duration,
    id: String,
}

impl HttpProvider {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        transport: Arc<dyn Transport>,
    ) -> Self {
        let model = model.into();
        Self {
            endpoint: endpoint.into(),
            id: format!("http:{model}"),
            model,
            api_key,
            transport,
            timeout: Duration::from_secs(120),
            retries: 3,
            backoff_base: Duration::from_millis(500),
        }
    }

    pub fn body(&self, request: &FmRequest) -> Value {
        let engine = base64::engine::general_purpose::STANDARD;
        let messages: Vec<Value> = request
            .messages
            .iter()
            .map(|m| {
                let mut content = vec![json!({"type": "text", "text": m.text})];
                for img in &m.images {
                    content.push(json!({
                        "type": "image_url",
                        "image_url": {"url": format!("data:image/png;base64,{}", engine.encode(img.png.as_slice()))}
                    }));
                }
                json!({"role": m.role.as_str(), "content": content})
            })
            .collect();
        json!({
            "model": self.model,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "messages": messages,
        })
    }
}

impl Provider for HttpProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &FmRequest) -> Result<String, FmError> {
        let body = self.body(request).to_string();
        let mut headers = vec![("content-type".to_string(), "application/json".to_string())];
        if let Some(k) = &self.api_key {
            headers.push(("authorization".to_string(), format!("Bearer {k}")));
        }
        let mut attempt = 0;
        let reply = loop {
            match self
                .transport
                .post_json(&self.endpoint, &headers, &body, self.timeout)
            {
                Ok(r) => break r,
                Err(e) if attempt < self.retries => {
                    tracing::warn!(attempt, error = %e, "transport failure, retrying");
                    std::thread::sleep(self.backoff_base * 2u32.pow(attempt));
                    attempt += 1;
                }
                Err(TransportError::Timeout) => return Err(FmError::Timeout),
                Err(TransportError::Connection(m)) => return Err(FmError::Transport(m)),
            }
        };
        if !(200..300).contains(&reply.status) {
            return Err(FmError::ProviderError {
                status: reply.status,
                body: reply.body,
            });
        }
        let v: Value = serde_json::from_str(&reply.body)
            .map_err(|e| FmError::MalformedResponse(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| FmError::MalformedResponse("missing choices[0].message.content".into()))
    }
}

/// Blocking transport built on `ureq`.
#[cfg(feature = "live")]
pub struct UreqTransport;

#[cfg(feature = "live")]
impl Transport for UreqTransport {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &str,
        timeout: Duration,
    ) -> Result<HttpReply, TransportError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent.post(url);
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        match req.send(body) {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                let body = resp
                    .body_mut()
                    .read_to_string()
                    .map_err(|e| TransportError::Connection(e.to_string()))?;
                Ok(HttpReply { status, body })
            }
            Err(ureq::Error::Timeout(_)) => Err(TransportError::Timeout),
            Err(e) => Err(TransportError::Connection(e.to_string())),
        }
    }
}
