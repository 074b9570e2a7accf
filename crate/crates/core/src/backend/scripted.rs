use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, CompletionRequest, RawResponse};
use crate::prompts::{BundleTag, Part, PromptBundle};

/// A request part as persisted: text verbatim, images by digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PartRecord {
    Text { text: String },
    Image { mime: String, sha256: String },
}

impl PartRecord {
    pub fn from_bundle(bundle: &PromptBundle) -> Vec<PartRecord> {
        bundle
            .parts
            .iter()
            .map(|p| match p {
                Part::Text(text) => PartRecord::Text { text: text.clone() },
                Part::Image(img) => PartRecord::Image {
                    mime: img.mime.clone(),
                    sha256: img.sha256.clone(),
                },
            })
            .collect()
    }
}

/// One request/response pair, one JSON object per line on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub instance_id: String,
    pub call_index: u32,
    pub bundle_tag: BundleTag,
    pub n: usize,
    pub temperature: f64,
    pub request: Vec<PartRecord>,
    pub response: RawResponse,
}

pub fn save_transcript(entries: &[TranscriptEntry], path: &Path) -> Result<(), BackendError> {
    let io = |e: std::io::Error| BackendError::Transcript {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    let mut out = Vec::new();
    for entry in entries {
        serde_json::to_writer(&mut out, entry).expect("transcript entry serialises");
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(io)?;
    file.write_all(&out).map_err(io)
}

pub fn load_transcript(path: &Path) -> Result<Vec<TranscriptEntry>, BackendError> {
    let err = |reason: String| BackendError::Transcript {
        path: path.display().to_string(),
        reason,
    };
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| err(format!("line {}: {e}", i + 1)))
        })
        .collect()
}

/// Replays recorded responses keyed by `(instance_id, call_index)`.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    responses: HashMap<(String, u32), RawResponse>,
    model_name: String,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        let model_name = entries
            .first()
            .map(|e| e.response.model_name.clone())
            .unwrap_or_else(|| "mock-scripted".into());
        let responses = entries
            .into_iter()
            .map(|e| ((e.instance_id, e.call_index), e.response))
            .collect();
        Self {
            responses,
            model_name,
        }
    }

    /// Scripted replies for one instance, answered in call order.
    pub fn from_texts(instance_id: &str, texts: &[&str]) -> Self {
        let responses = texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                (
                    (instance_id.to_string(), i as u32),
                    RawResponse::ok(t.to_string(), "mock-scripted", i as u32, 0),
                )
            })
            .collect();
        Self {
            responses,
            model_name: "mock-scripted".into(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        Ok(Self::new(load_transcript(path)?))
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<RawResponse, BackendError> {
        self.responses
            .get(&(request.instance_id.to_string(), request.call_index))
            .cloned()
            .ok_or_else(|| BackendError::ReplayMissing {
                instance_id: request.instance_id.to_string(),
                call_index: request.call_index,
            })
    }

    fn model_name(&self) -> &str {
        &self.model_name
    }
}

/// Records every exchange passing through the inner backend and optionally
/// dumps human-readable prompt transcripts.
pub struct RecordingBackend<B> {
    inner: B,
    entries: Mutex<Vec<TranscriptEntry>>,
    prompt_dir: Option<PathBuf>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            entries: Mutex::new(Vec::new()),
            prompt_dir: None,
        }
    }

    /// Also write each prompt to `<dir>/<instance_id>/<call_index>_<tag>.txt`.
    pub fn with_prompt_dump(mut self, dir: PathBuf) -> Self {
        self.prompt_dir = Some(dir);
        self
    }

    /// Recorded entries sorted by `(instance_id, call_index)`.
    pub fn entries(&self) -> Vec<TranscriptEntry> {
        let mut entries = self.entries.lock().expect("transcript lock").clone();
        entries.sort_by(|a, b| {
            (a.instance_id.as_str(), a.call_index).cmp(&(b.instance_id.as_str(), b.call_index))
        });
        entries
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<RawResponse, BackendError> {
        if let Some(dir) = &self.prompt_dir {
            let dir = dir.join(request.instance_id);
            let file = dir.join(format!("{:03}_{}.txt", request.call_index, request.bundle.tag));
            if let Err(e) =
                fs::create_dir_all(&dir).and_then(|_| fs::write(&file, request.bundle.transcript()))
            {
                log::warn!("could not dump prompt to {}: {e}", file.display());
            }
        }
        let response = self.inner.complete(request)?;
        self.entries.lock().expect("transcript lock").push(TranscriptEntry {
            instance_id: request.instance_id.to_string(),
            call_index: request.call_index,
            bundle_tag: request.bundle.tag,
            n: request.bundle.n,
            temperature: request.temperature,
            request: PartRecord::from_bundle(request.bundle),
            response: response.clone(),
        });
        Ok(response)
    }

    fn model_name(&self) -> &str {
        self.inner.model_name()
    }
}
