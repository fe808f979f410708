//! Completion sources: a live HTTP endpoint, replay from a response
//! log, and a deterministic synthetic model whose per-template success
//! probability is known analytically.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest;
use crate::template::Instance;

pub const WRONG_COMPLETION: &str = "WRONG";

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("http status {0}")]
    HttpStatus(u16),
    #[error("rate limited after {retries} retries")]
    RateLimited { retries: u32 },
    #[error("no replay record for ({task_id}, {template_id}, {instance_id}) of model {model_id}")]
    MissingReplayKey {
        model_id: String,
        task_id: String,
        template_id: String,
        instance_id: String,
    },
    #[error("backend spec invalid: {0}")]
    InvalidSpec(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Replay,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: u32,
}

fn default_max_new_tokens() -> u32 {
    64
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_new_tokens: default_max_new_tokens(),
        }
    }
}

/// Deterministic pseudo-model: per-template success probability is
/// clamp(base_ability + bias, 0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticProfile {
    pub base_ability: f64,
    #[serde(default)]
    pub template_bias: BTreeMap<String, f64>,
    pub seed: u64,
}

impl SyntheticProfile {
    pub fn success_probability(&self, template_id: &str) -> f64 {
        let bias = self.template_bias.get(template_id).copied().unwrap_or(0.0);
        (self.base_ability + bias).clamp(0.0, 1.0)
    }
}

/// Declarative description of a completion source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub kind: BackendKind,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env_var: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticProfile>,
    #[serde(default = "default_timeout_ms")]
    pub request_timeout_ms: u64,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub decode: DecodeParams,
    /// Selects the chat-style POST body instead of the completion-style
    /// one.
    #[serde(default)]
    pub chat_format: bool,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_max_in_flight() -> usize {
    1
}

impl BackendSpec {
    pub fn synthetic(model_id: impl Into<String>, profile: SyntheticProfile) -> Self {
        Self {
            kind: BackendKind::Synthetic,
            model_id: model_id.into(),
            endpoint: None,
            auth_env_var: None,
            replay_path: None,
            synthetic: Some(profile),
            request_timeout_ms: default_timeout_ms(),
            max_in_flight: default_max_in_flight(),
            decode: DecodeParams::default(),
            chat_format: false,
        }
    }

    pub fn replay(model_id: impl Into<String>, path: impl Into<PathBuf>) -> Self {
        Self {
            kind: BackendKind::Replay,
            model_id: model_id.into(),
            endpoint: None,
            auth_env_var: None,
            replay_path: Some(path.into()),
            synthetic: None,
            request_timeout_ms: default_timeout_ms(),
            max_in_flight: default_max_in_flight(),
            decode: DecodeParams::default(),
            chat_format: false,
        }
    }

    pub fn http(model_id: impl Into<String>, endpoint: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Http,
            model_id: model_id.into(),
            endpoint: Some(endpoint.into()),
            auth_env_var: None,
            replay_path: None,
            synthetic: None,
            request_timeout_ms: default_timeout_ms(),
            max_in_flight: default_max_in_flight(),
            decode: DecodeParams::default(),
            chat_format: false,
        }
    }

    /// Kind-specific optionals must be present exactly when required.
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_in_flight == 0 {
            return Err(BackendError::InvalidSpec(
                "max_in_flight must be positive".into(),
            ));
        }
        if self.decode.temperature < 0.0 {
            return Err(BackendError::InvalidSpec(
                "temperature must be non-negative".into(),
            ));
        }
        match self.kind {
            BackendKind::Http => {
                if self.endpoint.is_none() {
                    return Err(BackendError::InvalidSpec("http backend needs endpoint".into()));
                }
            }
            BackendKind::Replay => {
                if self.replay_path.is_none() {
                    return Err(BackendError::InvalidSpec(
                        "replay backend needs replay_path".into(),
                    ));
                }
            }
            BackendKind::Synthetic => {
                if self.synthetic.is_none() {
                    return Err(BackendError::InvalidSpec(
                        "synthetic backend needs a profile".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Everything a completion source might need for one call.
#[derive(Debug, Clone)]
pub struct CompletionRequest<'a> {
    pub prompt: &'a str,
    pub task_id: &'a str,
    pub template_id: &'a str,
    pub instance_id: &'a str,
    /// Acceptable answers of the instance; only the synthetic backend
    /// reads these.
    pub gold: &'a [String],
}

impl<'a> CompletionRequest<'a> {
    pub fn for_instance(prompt: &'a str, template_id: &'a str, instance: &'a Instance) -> Self {
        Self {
            prompt,
            task_id: &instance.task_id,
            template_id,
            instance_id: &instance.instance_id,
            gold: &instance.gold,
        }
    }
}

/// FNV-1a over the parts joined with 0x1F separators. Stable across
/// platforms and trivially re-implementable elsewhere.
pub fn fnv1a64(parts: &[&[u8]]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    let mut step = |byte: u8| {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(PRIME);
    };
    for (idx, part) in parts.iter().enumerate() {
        if idx > 0 {
            step(0x1f);
        }
        for &byte in *part {
            step(byte);
        }
    }
    hash
}

#[derive(Debug)]
pub struct SyntheticBackend {
    model_id: String,
    profile: SyntheticProfile,
}

impl SyntheticBackend {
    pub fn new(model_id: impl Into<String>, profile: SyntheticProfile) -> Self {
        Self {
            model_id: model_id.into(),
            profile,
        }
    }

    pub fn profile(&self) -> &SyntheticProfile {
        &self.profile
    }

    /// Pure in (profile, key): answers with the first gold text iff
    /// u < p(template), where u is the keyed hash mapped into [0,1).
    fn complete(&self, req: &CompletionRequest<'_>) -> String {
        let p = self.profile.success_probability(req.template_id);
        let seed_text = self.profile.seed.to_string();
        let hash = fnv1a64(&[
            self.model_id.as_bytes(),
            req.template_id.as_bytes(),
            req.instance_id.as_bytes(),
            seed_text.as_bytes(),
        ]);
        let u = hash as f64 / 2f64.powi(64);
        if u < p {
            req.gold
                .first()
                .cloned()
                .unwrap_or_else(|| WRONG_COMPLETION.to_string())
        } else {
            WRONG_COMPLETION.to_string()
        }
    }
}

#[derive(Debug)]
pub struct ReplayBackend {
    model_id: String,
    completions: HashMap<(String, String, String), String>,
}

impl ReplayBackend {
    pub fn from_log(model_id: impl Into<String>, path: &Path) -> Result<Self, BackendError> {
        let model_id = model_id.into();
        let records = ingest::load_records(path)?;
        let mut completions = HashMap::new();
        for record in records {
            if record.model_id != model_id {
                continue;
            }
            completions.insert(
                (record.task_id, record.template_id, record.instance_id),
                record.completion,
            );
        }
        Ok(Self {
            model_id,
            completions,
        })
    }

    fn complete(&self, req: &CompletionRequest<'_>) -> Result<String, BackendError> {
        let key = (
            req.task_id.to_string(),
            req.template_id.to_string(),
            req.instance_id.to_string(),
        );
        self.completions
            .get(&key)
            .cloned()
            .ok_or_else(|| BackendError::MissingReplayKey {
                model_id: self.model_id.clone(),
                task_id: req.task_id.to_string(),
                template_id: req.template_id.to_string(),
                instance_id: req.instance_id.to_string(),
            })
    }
}

/// Counting permits bounding concurrent HTTP requests.
#[derive(Debug)]
struct Permits {
    available: Mutex<usize>,
    signal: Condvar,
}

impl Permits {
    fn new(count: usize) -> Self {
        Self {
            available: Mutex::new(count),
            signal: Condvar::new(),
        }
    }

    fn acquire(&self) -> PermitGuard<'_> {
        let mut available = self.available.lock().unwrap();
        while *available == 0 {
            available = self.signal.wait(available).unwrap();
        }
        *available -= 1;
        PermitGuard { permits: self }
    }

    fn release(&self) {
        *self.available.lock().unwrap() += 1;
        self.signal.notify_one();
    }
}

struct PermitGuard<'a> {
    permits: &'a Permits,
}

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        self.permits.release();
    }
}

pub struct HttpBackend {
    model_id: String,
    endpoint: String,
    auth_token: Option<String>,
    timeout: Duration,
    decode: DecodeParams,
    chat_format: bool,
    client: reqwest::blocking::Client,
    permits: Permits,
    backoff_base: Duration,
}

impl HttpBackend {
    pub fn from_spec(spec: &BackendSpec) -> Result<Self, BackendError> {
        let endpoint = spec
            .endpoint
            .clone()
            .ok_or_else(|| BackendError::InvalidSpec("http backend needs endpoint".into()))?;
        // The token is read once and kept off all logs and error text.
        let auth_token = match &spec.auth_env_var {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BackendError::InvalidSpec(format!("auth env var {var} is not set"))
            })?),
            None => None,
        };
        let timeout = Duration::from_millis(spec.request_timeout_ms);
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self {
            model_id: spec.model_id.clone(),
            endpoint,
            auth_token,
            timeout,
            decode: spec.decode,
            chat_format: spec.chat_format,
            client,
            permits: Permits::new(spec.max_in_flight.max(1)),
            backoff_base: Duration::from_millis(500),
        })
    }

    #[doc(hidden)]
    pub fn set_backoff_base(&mut self, base: Duration) {
        self.backoff_base = base;
    }

    fn request_body(&self, prompt: &str) -> serde_json::Value {
        if self.chat_format {
            serde_json::json!({
                "model": self.model_id,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": self.decode.temperature,
                "max_tokens": self.decode.max_new_tokens,
            })
        } else {
            serde_json::json!({
                "model": self.model_id,
                "prompt": prompt,
                "temperature": self.decode.temperature,
                "max_tokens": self.decode.max_new_tokens,
            })
        }
    }

    fn extract_completion(&self, body: &serde_json::Value) -> Result<String, BackendError> {
        let choice = body
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(|| BackendError::MalformedResponse("no choices".into()))?;
        let text = if self.chat_format {
            choice.pointer("/message/content").and_then(|t| t.as_str())
        } else {
            choice.get("text").and_then(|t| t.as_str())
        };
        text.map(str::to_string)
            .ok_or_else(|| BackendError::MalformedResponse("no completion text".into()))
    }

    fn complete(&self, req: &CompletionRequest<'_>) -> Result<String, BackendError> {
        let _permit = self.permits.acquire();
        let body = self.request_body(req.prompt);
        let mut retries = 0u32;
        loop {
            let mut request = self.client.post(&self.endpoint).json(&body);
            if let Some(token) = &self.auth_token {
                request = request.bearer_auth(token);
            }
            let response = match request.send() {
                Ok(response) => response,
                Err(err) if err.is_timeout() => return Err(BackendError::Timeout(self.timeout)),
                Err(err) => return Err(BackendError::Transport(err.to_string())),
            };
            let status = response.status().as_u16();
            if status == 429 {
                if retries >= 3 {
                    return Err(BackendError::RateLimited { retries });
                }
                std::thread::sleep(self.backoff_base * 2u32.pow(retries));
                retries += 1;
                continue;
            }
            if !(200..300).contains(&status) {
                return Err(BackendError::HttpStatus(status));
            }
            let value: serde_json::Value = response
                .json()
                .map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
            return self.extract_completion(&value);
        }
    }
}

/// A ready-to-call completion source built from a `BackendSpec`.
pub enum Backend {
    Http(HttpBackend),
    Replay(ReplayBackend),
    Synthetic(SyntheticBackend),
}

impl Backend {
    pub fn from_spec(spec: &BackendSpec) -> Result<Self, BackendError> {
        spec.validate()?;
        match spec.kind {
            BackendKind::Http => Ok(Backend::Http(HttpBackend::from_spec(spec)?)),
            BackendKind::Replay => Ok(Backend::Replay(ReplayBackend::from_log(
                &spec.model_id,
                spec.replay_path.as_ref().unwrap(),
            )?)),
            BackendKind::Synthetic => Ok(Backend::Synthetic(SyntheticBackend::new(
                &spec.model_id,
                spec.synthetic.clone().unwrap(),
            ))),
        }
    }

    pub fn model_id(&self) -> &str {
        match self {
            Backend::Http(b) => &b.model_id,
            Backend::Replay(b) => &b.model_id,
            Backend::Synthetic(b) => &b.model_id,
        }
    }

    pub fn complete(&self, req: &CompletionRequest<'_>) -> Result<String, BackendError> {
        match self {
            Backend::Http(b) => b.complete(req),
            Backend::Replay(b) => b.complete(req),
            Backend::Synthetic(b) => Ok(b.complete(req)),
        }
    }
}
