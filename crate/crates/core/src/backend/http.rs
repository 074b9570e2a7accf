//! OpenAI-compatible chat-completions adapter. This is the only place that
//! knows the wire format.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use base64::Engine as _;
use serde_json::{json, Value};

use super::{Backend, BackendConfig, BackendError, CompletionRequest, RawResponse, TransportStatus};
use crate::prompts::{Part, PromptBundle};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportFailure {
    Timeout,
    Network(String),
}

/// Moves one JSON request to the server. Returns the HTTP status code and
/// the raw response body.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<(u16, String), TransportFailure>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| BackendError::Config(format!("http client: {e}")))?;
        Ok(Self { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<(u16, String), TransportFailure> {
        let mut req = self.client.post(url).timeout(timeout).json(body);
        if let Some(key) = bearer {
            req = req.bearer_auth(key);
        }
        let classify = |e: reqwest::Error| {
            if e.is_timeout() {
                TransportFailure::Timeout
            } else {
                TransportFailure::Network(e.to_string())
            }
        };
        let resp = req.send().map_err(classify)?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(classify)?;
        Ok((status, text))
    }
}

/// Request body for one bundle: a single user message whose content is the
/// bundle's parts in order, images inlined as base64 data URLs.
pub fn chat_request_body(
    bundle: &PromptBundle,
    model: &str,
    temperature: f64,
    max_tokens: u32,
    extra: Option<&Value>,
) -> Value {
    let engine = base64::engine::general_purpose::STANDARD;
    let content: Vec<Value> = bundle
        .parts
        .iter()
        .map(|part| match part {
            Part::Text(text) => json!({ "type": "text", "text": text }),
            Part::Image(img) => json!({
                "type": "image_url",
                "image_url": { "url": format!("data:{};base64,{}", img.mime, engine.encode(&img.bytes)) }
            }),
        })
        .collect();
    let mut body = json!({
        "model": model,
        "temperature": temperature,
        "max_tokens": max_tokens,
        "messages": [{ "role": "user", "content": content }],
    });
    if let (Some(Value::Object(extra)), Value::Object(map)) = (extra, &mut body) {
        for (k, v) in extra {
            map.insert(k.clone(), v.clone());
        }
    }
    body
}

/// Reply text from a chat-completions response; accepts both string content
/// and content-part arrays.
pub fn extract_reply_text(body: &str) -> Option<String> {
    let value: Value = serde_json::from_str(body).ok()?;
    let content = value.get("choices")?.get(0)?.get("message")?.get("content")?;
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => Some(
            parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect::<Vec<_>>()
                .join(""),
        ),
        _ => None,
    }
}

struct Limiter {
    max: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(max: usize) -> Self {
        Self {
            max,
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().expect("limiter lock");
        while *n >= self.max {
            n = self.freed.wait(n).expect("limiter lock");
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().expect("limiter lock");
        *n -= 1;
        self.0.freed.notify_one();
    }
}

pub struct HttpBackend {
    config: BackendConfig,
    transport: Box<dyn Transport>,
    api_key: Option<String>,
    limiter: Limiter,
}

impl HttpBackend {
    /// Real network backend; the key is read from `config.api_key_env_var`.
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        let transport = ReqwestTransport::new()?;
        Self::with_transport(config, Box::new(transport))
    }

    pub fn with_transport(
        config: BackendConfig,
        transport: Box<dyn Transport>,
    ) -> Result<Self, BackendError> {
        config.validate()?;
        let api_key = std::env::var(&config.api_key_env_var).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            log::warn!(
                "{} is not set; sending requests without authorization",
                config.api_key_env_var
            );
        }
        let limiter = Limiter::new(config.max_concurrent_requests);
        Ok(Self {
            config,
            transport,
            api_key,
            limiter,
        })
    }

    fn is_transient(code: u16) -> bool {
        code == 408 || code == 429 || code >= 500
    }
}

impl Backend for HttpBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<RawResponse, BackendError> {
        let body = chat_request_body(
            request.bundle,
            &self.config.model_name,
            request.temperature,
            self.config.max_output_tokens,
            self.config.extra_body.as_ref(),
        );
        let timeout = Duration::from_secs(self.config.request_timeout_s.max(1));
        let model = &self.config.model_name;
        let started = Instant::now();
        let mut last_failure = TransportStatus::RetriesExhausted;
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let backoff = self.config.retry_base_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(backoff));
            }
            let result = {
                let _permit = self.limiter.acquire();
                self.transport
                    .post_json(&self.config.endpoint_url, self.api_key.as_deref(), &body, timeout)
            };
            let elapsed = started.elapsed().as_millis() as u64;
            match result {
                Ok((code, text)) if (200..300).contains(&code) => {
                    return Ok(match extract_reply_text(&text) {
                        Some(reply) if !reply.is_empty() => {
                            RawResponse::ok(reply, model, request.call_index, elapsed)
                        }
                        // A 2xx without usable content is a malformed reply.
                        _ => RawResponse::failed(
                            TransportStatus::HttpError(code),
                            model,
                            request.call_index,
                            elapsed,
                        ),
                    });
                }
                Ok((code, text)) => {
                    log::debug!("http {code} from {}: {text}", self.config.endpoint_url);
                    if !Self::is_transient(code) {
                        return Ok(RawResponse::failed(
                            TransportStatus::HttpError(code),
                            model,
                            request.call_index,
                            elapsed,
                        ));
                    }
                    last_failure = TransportStatus::HttpError(code);
                }
                Err(TransportFailure::Timeout) => last_failure = TransportStatus::Timeout,
                Err(TransportFailure::Network(e)) => {
                    log::debug!("network error: {e}");
                    last_failure = TransportStatus::RetriesExhausted;
                }
            }
        }
        let status = if self.config.max_retries > 0 {
            TransportStatus::RetriesExhausted
        } else {
            last_failure
        };
        Ok(RawResponse::failed(
            status,
            model,
            request.call_index,
            started.elapsed().as_millis() as u64,
        ))
    }

    fn model_name(&self) -> &str {
        &self.config.model_name
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompts::build_zero_shot;
    use crate::render::Image;

    #[test]
    fn request_body_shape() {
        let bundle = build_zero_shot(Image::from_png(vec![1, 2, 3]), 5).unwrap();
        let extra = json!({ "safety_settings": { "x": 1 } });
        let body = chat_request_body(&bundle, "m", 0.2, 64, Some(&extra));
        assert_eq!(body["model"], "m");
        assert_eq!(body["max_tokens"], 64);
        assert_eq!(body["safety_settings"]["x"], 1);
        let content = body["messages"][0]["content"].as_array().unwrap();
        assert_eq!(content.len(), 2);
        assert_eq!(content[0]["type"], "image_url");
        assert_eq!(content[0]["image_url"]["url"], "data:image/png;base64,AQID");
        assert_eq!(content[1]["type"], "text");
    }

    #[test]
    fn reply_text_extraction() {
        let s = r#"{"choices":[{"message":{"content":"<<start>> 1 2 3 <<end>>"}}]}"#;
        assert_eq!(extract_reply_text(s).unwrap(), "<<start>> 1 2 3 <<end>>");
        let parts = r#"{"choices":[{"message":{"content":[{"type":"text","text":"a"},{"type":"text","text":"b"}]}}]}"#;
        assert_eq!(extract_reply_text(parts).unwrap(), "ab");
        assert!(extract_reply_text("{}").is_none());
        assert!(extract_reply_text("garbage").is_none());
    }
}
