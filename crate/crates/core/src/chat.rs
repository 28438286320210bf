//! Chat-completion backends: a deterministic mock (template and replay
//! modes) for offline runs and an HTTP adapter for real endpoints.
//!
//! Wire contract (HTTP mode): POST JSON
//! `{model, messages: [{role, content}], image: <base64, optional>}` to the
//! configured URL with `Authorization: Bearer` taken from the
//! `DISTILLFORGE_API_KEY` environment variable; the response text is read
//! from a configurable JSON-pointer path, `/choices/0/message/content` by
//! default.

use crate::prompts::{MetaPromptKind, PromptContext, CORE_DOCUMENT_CATEGORIES};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

/// Environment variable holding the bearer token for HTTP backends.
pub const API_KEY_ENV: &str = "DISTILLFORGE_API_KEY";

/// Default JSON-pointer path to the response text.
pub const DEFAULT_RESPONSE_POINTER: &str = "/choices/0/message/content";

#[derive(Debug, Error)]
pub enum ChatError {
    #[error("cannot read attachment {path}: {source}")]
    Attachment {
        path: String,
        source: std::io::Error,
    },
    #[error("no fixture response for request hash {request_hash}")]
    FixtureMiss { request_hash: String },
    #[error("fixture file {path}: {message}")]
    BadFixture { path: String, message: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend returned status {code}: {message}")]
    Status { code: u16, message: String },
    #[error("response JSON has no text at pointer {pointer}")]
    MissingResponseField { pointer: String },
    #[error("environment variable {API_KEY_ENV} is not set")]
    MissingApiKey,
    #[error("backend returned an empty response")]
    EmptyResponse,
}

impl ChatError {
    /// Whether the orchestrator may retry the call.
    pub fn retryable(&self) -> bool {
        match self {
            ChatError::Transport(_) | ChatError::EmptyResponse => true,
            ChatError::Status { code, .. } => *code == 429 || *code >= 500,
            _ => false,
        }
    }
}

/// A chat request: rendered texts plus the structured context they were
/// rendered from. Wire backends transmit only the rendered parts.
#[derive(Debug, Clone)]
pub struct ChatRequest {
    pub kind: MetaPromptKind,
    pub system: String,
    pub user: String,
    pub attachment: Option<PathBuf>,
    pub context: PromptContext,
}

impl ChatRequest {
    /// Stable hash of the wire-visible request parts, used as the replay
    /// fixture key. Attachments hash by content.
    pub fn request_hash(&self) -> Result<String, ChatError> {
        let mut hasher = Sha256::new();
        hasher.update(self.system.as_bytes());
        hasher.update([0]);
        hasher.update(self.user.as_bytes());
        hasher.update([0]);
        if let Some(path) = &self.attachment {
            hasher.update(attachment_digest(path)?);
        }
        Ok(hex::encode(hasher.finalize()))
    }
}

fn attachment_digest(path: &Path) -> Result<[u8; 32], ChatError> {
    let bytes = std::fs::read(path).map_err(|source| ChatError::Attachment {
        path: path.display().to_string(),
        source,
    })?;
    Ok(Sha256::digest(&bytes).into())
}

/// One completed exchange; the response is recorded verbatim.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatExchange {
    pub system: String,
    pub user: String,
    pub attachment: Option<PathBuf>,
    pub response: String,
    pub backend_id: String,
    pub latency_ms: u64,
}

/// A chat-completion backend. Implementations must tolerate concurrent calls.
pub trait ChatBackend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<ChatExchange, ChatError>;
}

enum MockMode {
    /// Deterministic synthesis from the structured request context.
    Template,
    /// Canned responses keyed by request hash.
    Replay(HashMap<String, String>),
    /// Fixed response for every request (test helper).
    Canned(String),
}

/// Deterministic offline chat backend.
pub struct MockChatBackend {
    id: String,
    mode: MockMode,
}

impl MockChatBackend {
    /// Template mode: answers are synthesized from the request context
    /// (bundle template text, digest-derived captions, well-formed document
    /// concepts).
    pub fn template() -> Self {
        Self {
            id: "mock-chat-template".into(),
            mode: MockMode::Template,
        }
    }

    /// Replay mode: answers come from a JSONL fixture of
    /// `{request_hash, response}` lines.
    pub fn replay(fixture_path: &Path) -> Result<Self, ChatError> {
        let map = ReplayFixture::load(fixture_path)?;
        Ok(Self {
            id: "mock-chat-replay".into(),
            mode: MockMode::Replay(map),
        })
    }

    /// Always answers with the given text. Only useful in tests.
    pub fn canned(response: &str) -> Self {
        Self {
            id: "mock-chat-canned".into(),
            mode: MockMode::Canned(response.to_string()),
        }
    }

    fn respond(&self, request: &ChatRequest) -> Result<String, ChatError> {
        match &self.mode {
            MockMode::Canned(text) => Ok(text.clone()),
            MockMode::Replay(map) => {
                let hash = request.request_hash()?;
                map.get(&hash).cloned().ok_or(ChatError::FixtureMiss {
                    request_hash: hash,
                })
            }
            MockMode::Template => template_response(request),
        }
    }
}

fn template_response(request: &ChatRequest) -> Result<String, ChatError> {
    match &request.context {
        PromptContext::Compose { bundle } => {
            Ok(crate::attributes::bundle_to_template_prompt(bundle))
        }
        PromptContext::Caption { image } => {
            let digest = attachment_digest(image)?;
            Ok(format!(
                "An abstract composition identified by digest {}.",
                hex::encode(&digest[..8])
            ))
        }
        PromptContext::EditInstruction { task, image } => {
            let digest = attachment_digest(image)?;
            Ok(format!(
                "Apply {} to the scene identified by digest {}.",
                task.subcategory,
                hex::encode(&digest[..8])
            ))
        }
        PromptContext::DocumentConcept { theme, font } => {
            let digest = Sha256::digest(theme.as_bytes());
            let category = CORE_DOCUMENT_CATEGORIES[digest[0] as usize % 5];
            Ok(format!(
                "Visual Template Prompt: A clean and professional {category} template for {theme}, set in {font} typography with clear placeholder regions.\nConceived Theme: {theme}\nDocument Type: {category} - {theme} {lower}",
                lower = category.to_lowercase(),
            ))
        }
    }
}

impl ChatBackend for MockChatBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatExchange, ChatError> {
        let response = self.respond(request)?;
        Ok(ChatExchange {
            system: request.system.clone(),
            user: request.user.clone(),
            attachment: request.attachment.clone(),
            response,
            backend_id: self.id.clone(),
            latency_ms: 0,
        })
    }
}

/// One line of a replay fixture file.
#[derive(Debug, Serialize, Deserialize)]
pub struct FixtureLine {
    pub request_hash: String,
    pub response: String,
}

/// Reader/writer for replay fixture files (JSONL of
/// `{request_hash, response}`).
pub struct ReplayFixture;

impl ReplayFixture {
    pub fn load(path: &Path) -> Result<HashMap<String, String>, ChatError> {
        let file = std::fs::File::open(path).map_err(|e| ChatError::BadFixture {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut map = HashMap::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| ChatError::BadFixture {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: FixtureLine =
                serde_json::from_str(&line).map_err(|e| ChatError::BadFixture {
                    path: path.display().to_string(),
                    message: format!("line {}: {e}", i + 1),
                })?;
            map.insert(parsed.request_hash, parsed.response);
        }
        Ok(map)
    }

    /// Appends one fixture line; used to record fixtures from another
    /// backend's responses.
    pub fn record(path: &Path, request_hash: &str, response: &str) -> Result<(), ChatError> {
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| ChatError::BadFixture {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        let line = serde_json::to_string(&FixtureLine {
            request_hash: request_hash.to_string(),
            response: response.to_string(),
        })
        .expect("fixture line serializes");
        writeln!(file, "{line}").map_err(|e| ChatError::BadFixture {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Chat backend speaking the HTTP wire contract.
pub struct HttpChatBackend {
    id: String,
    endpoint: String,
    model: String,
    response_pointer: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl HttpChatBackend {
    pub fn new(
        endpoint: &str,
        model: &str,
        response_pointer: Option<&str>,
    ) -> Result<Self, ChatError> {
        let api_key = std::env::var(API_KEY_ENV).map_err(|_| ChatError::MissingApiKey)?;
        Ok(Self {
            id: format!("http:{endpoint}"),
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            response_pointer: response_pointer
                .unwrap_or(DEFAULT_RESPONSE_POINTER)
                .to_string(),
            api_key,
            client: reqwest::blocking::Client::builder()
                .timeout(std::time::Duration::from_secs(120))
                .build()
                .map_err(|e| ChatError::Transport(e.to_string()))?,
        })
    }
}

impl ChatBackend for HttpChatBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatExchange, ChatError> {
        let started = Instant::now();
        let mut messages = Vec::new();
        if !request.system.is_empty() {
            messages.push(serde_json::json!({"role": "system", "content": request.system}));
        }
        messages.push(serde_json::json!({"role": "user", "content": request.user}));
        let mut body = serde_json::json!({"model": self.model, "messages": messages});
        if let Some(path) = &request.attachment {
            let bytes = std::fs::read(path).map_err(|source| ChatError::Attachment {
                path: path.display().to_string(),
                source,
            })?;
            use base64::Engine as _;
            body["image"] =
                serde_json::Value::String(base64::engine::general_purpose::STANDARD.encode(bytes));
        }
        let response = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| ChatError::Transport(e.to_string()))?;
        let code = response.status().as_u16();
        let text = response
            .text()
            .map_err(|e| ChatError::Transport(e.to_string()))?;
        if !(200..300).contains(&code) {
            return Err(ChatError::Status {
                code,
                message: text.chars().take(200).collect(),
            });
        }
        let json: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| ChatError::Transport(e.to_string()))?;
        let content = json
            .pointer(&self.response_pointer)
            .and_then(|v| v.as_str())
            .ok_or_else(|| ChatError::MissingResponseField {
                pointer: self.response_pointer.clone(),
            })?;
        if content.trim().is_empty() {
            return Err(ChatError::EmptyResponse);
        }
        Ok(ChatExchange {
            system: request.system.clone(),
            user: request.user.clone(),
            attachment: request.attachment.clone(),
            response: content.to_string(),
            backend_id: self.id.clone(),
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }
}
