//! Request canonicalization, transcripts, and the replay and live backends.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{OracleError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    Decompose,
    IdentifyPart,
    SelectHandles,
}

#[derive(Debug, Clone)]
pub struct NamedImage {
    pub name: String,
    pub png: Arc<Vec<u8>>,
}

impl NamedImage {
    pub fn new(name: impl Into<String>, png: Vec<u8>) -> Self {
        NamedImage { name: name.into(), png: Arc::new(png) }
    }

    pub fn digest(&self) -> String {
        sha256_hex(&self.png)
    }
}

#[derive(Debug, Clone)]
pub struct OracleRequest {
    pub kind: RequestKind,
    pub system: String,
    pub user: String,
    pub images: Vec<NamedImage>,
    /// Zero for the first try; retries hash differently.
    pub attempt: u32,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Serializes with object keys in sorted order at every depth.
pub fn canonical_string(value: &Value) -> String {
    fn sort(v: &Value) -> Value {
        match v {
            Value::Object(m) => {
                let sorted: BTreeMap<&String, Value> = m.iter().map(|(k, v)| (k, sort(v))).collect();
                Value::Object(sorted.into_iter().map(|(k, v)| (k.clone(), v)).collect())
            }
            Value::Array(a) => Value::Array(a.iter().map(sort).collect()),
            other => other.clone(),
        }
    }
    serde_json::to_string(&sort(value)).expect("json values serialize")
}

impl OracleRequest {
    /// Images enter the canonical form by name and SHA-256 only.
    pub fn canonical(&self) -> Value {
        json!({
            "kind": self.kind,
            "system": self.system,
            "user": self.user,
            "images": self.images.iter().map(|i| json!({"name": i.name, "sha256": i.digest()})).collect::<Vec<_>>(),
            "attempt": self.attempt,
        })
    }

    pub fn hash(&self) -> String {
        sha256_hex(canonical_string(&self.canonical()).as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub kind: RequestKind,
    pub hash: String,
    pub request: Value,
    pub response: String,
}

/// Every oracle exchange of a run, in call order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub records: Vec<TranscriptRecord>,
}

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    kind: RequestKind,
    hash: String,
}

impl Transcript {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: TranscriptRecord) {
        self.records.push(record);
    }

    /// Writes `{hash}.json` per exchange plus `index.json` with the order.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut index = Vec::new();
        for r in &self.records {
            let body = serde_json::to_string_pretty(r)?;
            fs::write(dir.join(format!("{}.json", r.hash)), body + "\n")?;
            index.push(IndexEntry { kind: r.kind, hash: r.hash.clone() });
        }
        fs::write(dir.join("index.json"), serde_json::to_string_pretty(&index)? + "\n")?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let index: Vec<IndexEntry> = serde_json::from_str(&fs::read_to_string(dir.join("index.json"))?)?;
        let mut records = Vec::new();
        for e in index {
            let r: TranscriptRecord = serde_json::from_str(&fs::read_to_string(dir.join(format!("{}.json", e.hash)))?)?;
            records.push(r);
        }
        Ok(Transcript { records })
    }
}

pub trait OracleBackend: Send + Sync {
    /// Returns the model's raw reply text.
    fn complete(&self, request: &OracleRequest) -> Result<String>;

    fn name(&self) -> &'static str;
}

/// Answers from a directory of recorded `{hash}.json` exchanges.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    dir: PathBuf,
}

impl ReplayBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReplayBackend { dir: dir.into() }
    }
}

impl OracleBackend for ReplayBackend {
    fn complete(&self, request: &OracleRequest) -> Result<String> {
        let hash = request.hash();
        let path = self.dir.join(format!("{hash}.json"));
        let text = fs::read_to_string(&path).map_err(|_| OracleError::ReplayMiss { hash: hash.clone(), kind: request.kind })?;
        let record: TranscriptRecord = serde_json::from_str(&text)?;
        Ok(record.response)
    }

    fn name(&self) -> &'static str {
        "replay"
    }
}

/// Answers with a caller-supplied function of the request. Used to script
/// demo runs and tests whose transcripts are then replayed.
pub struct ScriptedBackend<F> {
    script: F,
}

impl<F: Fn(&OracleRequest) -> String + Send + Sync> ScriptedBackend<F> {
    pub fn new(script: F) -> Self {
        ScriptedBackend { script }
    }
}

impl<F: Fn(&OracleRequest) -> String + Send + Sync> OracleBackend for ScriptedBackend<F> {
    fn complete(&self, request: &OracleRequest) -> Result<String> {
        Ok((self.script)(request))
    }

    fn name(&self) -> &'static str {
        "scripted"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiveConfig {
    pub base_url: String,
    pub api_key: String,
    pub model: String,
    pub timeout: Duration,
}

impl LiveConfig {
    pub const DEFAULT_BASE_URL: &'static str = "https://api.openai.com/v1";
    pub const DEFAULT_MODEL: &'static str = "gpt-4o";

    /// Reads `ORACLE_API_KEY`, `ORACLE_BASE_URL` and `ORACLE_MODEL`.
    pub fn from_env(timeout: Duration) -> Result<Self> {
        let api_key =
            std::env::var("ORACLE_API_KEY").map_err(|_| OracleError::BackendUnavailable("ORACLE_API_KEY is not set".into()))?;
        Ok(LiveConfig {
            base_url: std::env::var("ORACLE_BASE_URL").unwrap_or_else(|_| Self::DEFAULT_BASE_URL.into()),
            api_key,
            model: std::env::var("ORACLE_MODEL").unwrap_or_else(|_| Self::DEFAULT_MODEL.into()),
            timeout,
        })
    }
}

/// OpenAI-compatible chat completions with inline base64 PNG attachments.
pub struct LiveBackend {
    config: LiveConfig,
    agent: ureq::Agent,
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(config.timeout)).build().into();
        LiveBackend { config, agent }
    }

    pub fn body(&self, request: &OracleRequest) -> Value {
        let mut content = vec![json!({"type": "text", "text": request.user})];
        for img in &request.images {
            let b64 = base64::engine::general_purpose::STANDARD.encode(img.png.as_slice());
            content.push(json!({"type": "text", "text": img.name}));
            content.push(json!({"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{b64}")}}));
        }
        json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": content},
            ],
        })
    }
}

impl OracleBackend for LiveBackend {
    fn complete(&self, request: &OracleRequest) -> Result<String> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut resp = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {}", self.config.api_key))
            .send_json(self.body(request))
            .map_err(|e| OracleError::BackendUnavailable(e.to_string()))?;
        let v: Value = resp.body_mut().read_json().map_err(|e| OracleError::BackendUnavailable(e.to_string()))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| OracleError::BackendUnavailable(format!("unexpected response shape: {v}")))
    }

    fn name(&self) -> &'static str {
        "live"
    }
}
