//! Pluggable chat-completion and web-search clients: scripted deterministic
//! mocks for tests and simulation, HTTP adapters for live runs, and the
//! sliding-window rate limiter that gates outbound generation calls.
//!
//! Mock backends are fully deterministic given (script, seed). Credentials
//! are read from the environment only; config files name the variable.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clock::Clock;

pub const DEFAULT_TEMPERATURE: f64 = 0.1;
pub const DEFAULT_MAX_TOKENS: u32 = 4096;
pub const DEFAULT_RATE_LIMIT_PER_MIN: usize = 20;
pub const DEFAULT_SEARCH_LATENCY: f64 = 1.0;
pub const DEFAULT_MAX_RETRIES: u32 = 3;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("rate limited by upstream (retry after {retry_after:?} s)")]
    RateLimited { retry_after: Option<f64> },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("mock script has no entry for key {0}")]
    ScriptMiss(String),
    #[error("bad backend config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".to_string(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatRequest {
    /// Single-user-message request with the default generation parameters
    /// (temperature 0.1, max tokens 4096).
    pub fn new(model_id: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            messages: vec![Message::user(prompt)],
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub query: String,
    pub snippets: Vec<String>,
    /// Declared (mock) or measured (live) latency in seconds.
    pub latency: f64,
    pub ok: bool,
}

pub trait ChatBackend: Send + Sync {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError>;
}

pub trait SearchBackend: Send + Sync {
    fn search(&self, query: &str) -> Result<SearchResult, BackendError>;
}

/// Script key for a mock chat exchange: hex SHA-256 over the model id and
/// the canonical message list.
pub fn script_key(model_id: &str, messages: &[Message]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(model_id.as_bytes());
    for m in messages {
        hasher.update([0u8]);
        hasher.update(m.role.as_bytes());
        hasher.update([0u8]);
        hasher.update(m.content.as_bytes());
    }
    hex_encode(&hasher.finalize())
}

fn hex_encode(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Deterministic scripted chat backend keyed by (model id, message hash).
#[derive(Debug, Default)]
pub struct MockChatBackend {
    script: BTreeMap<String, String>,
    strict: bool,
    default_response: Option<String>,
}

impl MockChatBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Strict mocks error with `ScriptMiss` on unscripted prompts.
    pub fn strict() -> Self {
        Self {
            strict: true,
            ..Self::default()
        }
    }

    pub fn with_default_response(mut self, response: impl Into<String>) -> Self {
        self.default_response = Some(response.into());
        self
    }

    pub fn script_response(
        &mut self,
        model_id: &str,
        prompt: &str,
        response: impl Into<String>,
    ) {
        let key = script_key(model_id, &[Message::user(prompt)]);
        self.script.insert(key, response.into());
    }

    pub fn script_by_key(&mut self, key: impl Into<String>, response: impl Into<String>) {
        self.script.insert(key.into(), response.into());
    }

    /// Load a script: one `key<TAB>response` record per line, `\n` in the
    /// response escaped as the two characters `\` `n`.
    pub fn load_script(&mut self, text: &str) -> Result<(), BackendError> {
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, response) = line.split_once('\t').ok_or_else(|| {
                BackendError::Config(format!("script line {}: missing tab separator", i + 1))
            })?;
            self.script
                .insert(key.to_string(), unescape_newlines(response));
        }
        Ok(())
    }

    pub fn render_script(&self) -> String {
        let mut out = String::new();
        for (key, response) in &self.script {
            out.push_str(key);
            out.push('\t');
            out.push_str(&escape_newlines(response));
            out.push('\n');
        }
        out
    }
}

fn escape_newlines(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\n', "\\n")
}

fn unescape_newlines(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('\\') => out.push('\\'),
                Some(other) => {
                    out.push('\\');
                    out.push(other);
                }
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

impl ChatBackend for MockChatBackend {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let key = script_key(&req.model_id, &req.messages);
        let text = match self.script.get(&key) {
            Some(t) => t.clone(),
            None if self.strict => return Err(BackendError::ScriptMiss(key)),
            None => self.default_response.clone().unwrap_or_default(),
        };
        let prompt_tokens = req
            .messages
            .iter()
            .map(|m| m.content.split_whitespace().count())
            .sum();
        let completion_tokens = text.split_whitespace().count();
        Ok(ChatResponse {
            text,
            prompt_tokens,
            completion_tokens,
        })
    }
}

/// Chat backend backed by a closure; handy for scripting responses
/// programmatically in tests.
pub struct FnChatBackend<F>(pub F);

impl<F> ChatBackend for FnChatBackend<F>
where
    F: Fn(&ChatRequest) -> Result<ChatResponse, BackendError> + Send + Sync,
{
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (self.0)(req)
    }
}

/// Mock search client with deterministic latency injection: a per-query
/// table first, then a seeded uniform draw when configured, then the
/// default latency.
#[derive(Debug)]
pub struct MockSearchBackend {
    latencies: BTreeMap<String, f64>,
    snippets: BTreeMap<String, Vec<String>>,
    fail: BTreeSet<String>,
    default_latency: f64,
    seeded: Option<(u64, f64, f64)>,
}

impl Default for MockSearchBackend {
    fn default() -> Self {
        Self {
            latencies: BTreeMap::new(),
            snippets: BTreeMap::new(),
            fail: BTreeSet::new(),
            default_latency: DEFAULT_SEARCH_LATENCY,
            seeded: None,
        }
    }
}

impl MockSearchBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_default_latency(mut self, latency: f64) -> Self {
        self.default_latency = latency;
        self
    }

    /// Draw unscripted latencies uniformly from `[lo, hi]`, keyed by seed
    /// and query so the same seed reproduces the same sequence.
    pub fn with_seeded_latency(mut self, seed: u64, lo: f64, hi: f64) -> Self {
        self.seeded = Some((seed, lo, hi));
        self
    }

    pub fn set_latency(&mut self, query: &str, latency: f64) {
        self.latencies.insert(query.to_string(), latency);
    }

    pub fn set_snippets(&mut self, query: &str, snippets: Vec<String>) {
        self.snippets.insert(query.to_string(), snippets);
    }

    pub fn fail_query(&mut self, query: &str) {
        self.fail.insert(query.to_string());
    }

    fn latency_for(&self, query: &str) -> f64 {
        if let Some(latency) = self.latencies.get(query) {
            return *latency;
        }
        if let Some((seed, lo, hi)) = self.seeded {
            let mut hasher = Sha256::new();
            hasher.update(query.as_bytes());
            let digest = hasher.finalize();
            let mut query_seed = [0u8; 8];
            query_seed.copy_from_slice(&digest[..8]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ u64::from_le_bytes(query_seed));
            return rng.gen_range(lo..=hi);
        }
        self.default_latency
    }
}

impl SearchBackend for MockSearchBackend {
    fn search(&self, query: &str) -> Result<SearchResult, BackendError> {
        if self.fail.contains(query) {
            return Err(BackendError::Timeout);
        }
        let snippets = self
            .snippets
            .get(query)
            .cloned()
            .unwrap_or_else(|| vec![format!("result for {query}")]);
        Ok(SearchResult {
            query: query.to_string(),
            snippets,
            latency: self.latency_for(query),
            ok: true,
        })
    }
}

/// Sliding-window rate limiter: at most `limit` dispatches begin within
/// any 60 s window (virtual or real clock). Callers block until a slot
/// opens; `acquire` returns the dispatch timestamp.
#[derive(Debug)]
pub struct RateLimiter {
    limit: usize,
    window: f64,
    clock: Clock,
    recent: Mutex<VecDeque<f64>>,
}

impl RateLimiter {
    pub fn new(limit: usize, clock: Clock) -> Self {
        Self::with_window(limit, 60.0, clock)
    }

    pub fn with_window(limit: usize, window: f64, clock: Clock) -> Self {
        assert!(limit >= 1, "rate limit must allow at least one dispatch");
        Self {
            limit,
            window,
            clock,
            recent: Mutex::new(VecDeque::with_capacity(limit)),
        }
    }

    pub fn acquire(&self) -> f64 {
        let mut recent = self.recent.lock().expect("rate limiter poisoned");
        if recent.len() == self.limit {
            let oldest = recent[0];
            let release = oldest + self.window;
            if release > self.clock.now() {
                self.clock.advance_to(release);
            }
            recent.pop_front();
        }
        let now = self.clock.now();
        recent.push_back(now);
        now
    }
}

/// Assert the sliding-window property on a dispatch-timestamp trace.
pub fn satisfies_rate_limit(timestamps: &[f64], limit: usize, window: f64) -> bool {
    timestamps
        .windows(limit + 1)
        .all(|w| w[limit] - w[0] >= window - 1e-9)
}

/// Backend configuration; the credential is an environment-variable name,
/// never a secret value.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendConfig {
    pub model_id: String,
    pub endpoint: String,
    pub credential_env: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub rate_limit_per_min: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            model_id: String::new(),
            endpoint: String::new(),
            credential_env: None,
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            rate_limit_per_min: DEFAULT_RATE_LIMIT_PER_MIN,
        }
    }
}

/// Parse a `key=value` config file. Unknown keys are rejected.
pub fn parse_config(text: &str) -> Result<BackendConfig, BackendError> {
    let mut cfg = BackendConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| BackendError::Config(format!("line {}: expected key=value", i + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| BackendError::Config(format!("line {}: {what}", i + 1));
        match key {
            "model_id" => cfg.model_id = value.to_string(),
            "endpoint" => cfg.endpoint = value.to_string(),
            "credential_env" => cfg.credential_env = Some(value.to_string()),
            "temperature" => {
                cfg.temperature = value.parse().map_err(|_| bad("bad temperature"))?;
                if cfg.temperature < 0.0 {
                    return Err(bad("temperature must be >= 0"));
                }
            }
            "max_tokens" => {
                cfg.max_tokens = value.parse().map_err(|_| bad("bad max_tokens"))?;
                if cfg.max_tokens == 0 {
                    return Err(bad("max_tokens must be >= 1"));
                }
            }
            "rate_limit_per_min" => {
                cfg.rate_limit_per_min = value.parse().map_err(|_| bad("bad rate limit"))?
            }
            other => return Err(bad(&format!("unknown key `{other}`"))),
        }
    }
    Ok(cfg)
}

/// Chat adapter speaking the standard chat-completion wire shape:
/// POST `{endpoint}` with `{model, messages, temperature, max_tokens}` and
/// an optional bearer credential; the first choice's message content is
/// returned. Retries up to `max_retries` on 429/5xx, then surfaces the
/// final error.
pub struct LiveChatBackend {
    config: BackendConfig,
    api_key: Option<String>,
    max_retries: u32,
    client: reqwest::blocking::Client,
}

impl LiveChatBackend {
    pub fn from_config(config: BackendConfig) -> Result<Self, BackendError> {
        let api_key = match &config.credential_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BackendError::Config(format!("credential env var `{var}` not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(120))
            .build()
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        Ok(Self {
            config,
            api_key,
            max_retries: DEFAULT_MAX_RETRIES,
            client,
        })
    }

    pub fn with_max_retries(mut self, max_retries: u32) -> Self {
        self.max_retries = max_retries;
        self
    }

    fn send_once(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        #[derive(Serialize)]
        struct WireRequest<'a> {
            model: &'a str,
            messages: &'a [Message],
            temperature: f64,
            max_tokens: u32,
        }
        #[derive(Deserialize)]
        struct WireChoice {
            message: Message,
        }
        #[derive(Deserialize, Default)]
        struct WireUsage {
            #[serde(default)]
            prompt_tokens: usize,
            #[serde(default)]
            completion_tokens: usize,
        }
        #[derive(Deserialize)]
        struct WireResponse {
            choices: Vec<WireChoice>,
            #[serde(default)]
            usage: Option<WireUsage>,
        }

        let body = WireRequest {
            model: &req.model_id,
            messages: &req.messages,
            temperature: req.temperature,
            max_tokens: req.max_tokens,
        };
        let mut http = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            http = http.bearer_auth(key);
        }
        let response = http.send().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout
            } else {
                BackendError::Protocol(e.to_string())
            }
        })?;

        let status = response.status();
        if status.as_u16() == 429 {
            let retry_after = response
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.parse().ok());
            return Err(BackendError::RateLimited { retry_after });
        }
        if !status.is_success() {
            return Err(BackendError::Protocol(format!("http status {status}")));
        }
        let wire: WireResponse = response
            .json()
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        let choice = wire
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Protocol("no choices in response".to_string()))?;
        let usage = wire.usage.unwrap_or_default();
        Ok(ChatResponse {
            text: choice.message.content,
            prompt_tokens: usage.prompt_tokens,
            completion_tokens: usage.completion_tokens,
        })
    }
}

impl ChatBackend for LiveChatBackend {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let mut attempt = 0;
        loop {
            match self.send_once(req) {
                Ok(resp) => return Ok(resp),
                Err(err) if attempt < self.max_retries => {
                    let backoff = match &err {
                        BackendError::RateLimited {
                            retry_after: Some(s),
                        } => *s,
                        BackendError::RateLimited { retry_after: None }
                        | BackendError::Protocol(_)
                        | BackendError::Timeout => 0.25 * f64::from(attempt + 1),
                        _ => return Err(err),
                    };
                    std::thread::sleep(std::time::Duration::from_secs_f64(backoff.min(5.0)));
                    attempt += 1;
                }
                Err(err) => return Err(err),
            }
        }
    }
}
