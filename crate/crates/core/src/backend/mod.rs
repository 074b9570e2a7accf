//! Multimodal chat backends.
//!
//! Every strategy talks to a [`Backend`]. The HTTP backend speaks the
//! OpenAI-compatible chat-completions shape; the mock oracle fabricates
//! answers from the known optimum with configurable fault injection; the
//! scripted backend replays a recorded transcript. Wrap any of them in a
//! [`RecordingBackend`] to persist request/response pairs.

mod http;
mod mock;
mod scripted;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::prompts::PromptBundle;
use crate::solver::SolvedInstance;

pub use http::{
    chat_request_body, extract_reply_text, HttpBackend, ReqwestTransport, Transport,
    TransportFailure,
};
pub use mock::{mock_oracle_respond, two_opt_move, MockCategory, MockOracleBackend, MockOracleConfig};
pub use scripted::{
    load_transcript, save_transcript, PartRecord, RecordingBackend, ScriptedBackend,
    TranscriptEntry,
};

/// Default sampling temperature for ensemble draws (responses must differ).
pub const ENSEMBLE_TEMPERATURE: f64 = 1.0;
/// Default sampling temperature for single-shot strategies.
pub const SINGLE_SHOT_TEMPERATURE: f64 = 0.2;

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("invalid backend config: {0}")]
    Config(String),
    #[error("mock oracle needs the solved instance for {0}")]
    MissingContext(String),
    #[error("transcript has no entry for instance {instance_id} call {call_index}")]
    ReplayMissing {
        instance_id: String,
        call_index: u32,
    },
    #[error("transcript i/o on {path}: {reason}")]
    Transcript { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Http,
    MockOracle,
    MockScripted,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Http => "http",
            BackendKind::MockOracle => "mock-oracle",
            BackendKind::MockScripted => "mock-scripted",
        })
    }
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [BackendKind::Http, BackendKind::MockOracle, BackendKind::MockScripted]
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| format!("unknown backend {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key. The key itself
    /// is never stored.
    pub api_key_env_var: String,
    /// `None` lets each strategy pick its default.
    pub temperature: Option<f64>,
    pub max_output_tokens: u32,
    pub request_timeout_s: u64,
    pub max_retries: u32,
    pub retry_base_ms: u64,
    pub max_concurrent_requests: usize,
    /// Opaque provider-specific fields merged into every request body
    /// (e.g. generation or safety settings).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra_body: Option<serde_json::Value>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::MockOracle,
            endpoint_url: "https://api.openai.com/v1/chat/completions".into(),
            model_name: "gpt-4o".into(),
            api_key_env_var: "EYEBALL_API_KEY".into(),
            temperature: None,
            max_output_tokens: 1024,
            request_timeout_s: 120,
            max_retries: 3,
            retry_base_ms: 500,
            max_concurrent_requests: 4,
            extra_body: None,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if let Some(t) = self.temperature {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(BackendError::Config(format!("temperature must be >= 0, got {t}")));
            }
        }
        if self.max_concurrent_requests == 0 {
            return Err(BackendError::Config("max_concurrent_requests must be >= 1".into()));
        }
        if self.kind == BackendKind::Http {
            if self.endpoint_url.is_empty() {
                return Err(BackendError::Config("endpoint_url is empty".into()));
            }
            if self.model_name.is_empty() {
                return Err(BackendError::Config("model_name is empty".into()));
            }
        }
        if let Some(extra) = &self.extra_body {
            if !extra.is_object() {
                return Err(BackendError::Config("extra_body must be a JSON object".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportStatus {
    Ok,
    Timeout,
    HttpError(u16),
    RetriesExhausted,
}

impl TransportStatus {
    pub fn is_ok(&self) -> bool {
        *self == TransportStatus::Ok
    }
}

/// One model reply. `text` is empty exactly when the transport failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawResponse {
    pub text: String,
    pub latency_ms: u64,
    pub model_name: String,
    pub attempt_index: u32,
    pub transport_status: TransportStatus,
}

impl RawResponse {
    pub fn ok(text: String, model_name: &str, attempt_index: u32, latency_ms: u64) -> Self {
        Self {
            text,
            latency_ms,
            model_name: model_name.to_string(),
            attempt_index,
            transport_status: TransportStatus::Ok,
        }
    }

    pub fn failed(status: TransportStatus, model_name: &str, attempt_index: u32, latency_ms: u64) -> Self {
        Self {
            text: String::new(),
            latency_ms,
            model_name: model_name.to_string(),
            attempt_index,
            transport_status: status,
        }
    }
}

/// A prompt plus the bookkeeping needed to route, replay and mock it.
#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub bundle: &'a PromptBundle,
    pub instance_id: &'a str,
    /// Per-instance call sequence number; the ensemble attempt index for
    /// ensemble draws.
    pub call_index: u32,
    pub temperature: f64,
    /// Ground truth, consumed only by the mock oracle.
    pub solved: Option<&'a SolvedInstance>,
}

pub trait Backend: Send + Sync {
    /// One completion. Model content never errors; transport failures are
    /// reported through [`RawResponse::transport_status`]. `Err` is reserved
    /// for harness faults (bad config, missing replay entries).
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<RawResponse, BackendError>;

    fn model_name(&self) -> &str;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<RawResponse, BackendError> {
        (**self).complete(request)
    }

    fn model_name(&self) -> &str {
        (**self).model_name()
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<RawResponse, BackendError> {
        (**self).complete(request)
    }

    fn model_name(&self) -> &str {
        (**self).model_name()
    }
}
