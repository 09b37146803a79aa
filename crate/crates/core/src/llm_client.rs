//! The model boundary.
//!
//! Every backend implements [`LlmClient`]:
//!
//! * [`LiveClient`] talks to an OpenAI-compatible `/chat/completions`
//!   endpoint,
//! * [`Recorder`] wraps another client and appends every exchange to a
//!   JSON-lines fixture file,
//! * [`ReplayClient`] serves those fixtures back without touching the
//!   network,
//! * [`ScriptedClient`] returns canned responses in order, for tests.
//!
//! Fixtures are keyed by [`fixture_key`]: a SHA-256 over the model id, a
//! temperature bucket and the ordered message contents. Identical requests
//! (codegen retries resend the same prompt) map to one key holding an
//! ordered list of responses, consumed through a per-key cursor.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::engine::{Dialogue, Message};

pub const ENV_MODEL: &str = "ASKIT_MODEL";
pub const ENV_API_KEY: &str = "OPENAI_API_KEY";
/// Alternative OpenAI-compatible endpoint, e.g. a local server.
pub const ENV_BASE_URL: &str = "OPENAI_BASE_URL";
/// When set to a non-empty value other than `0`, [`LiveClient`] refuses to
/// open connections.
pub const ENV_OFFLINE: &str = "ASKIT_OFFLINE";

pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo-16k";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
const DEFAULT_TEMPERATURE: f64 = 1.0;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("response exceeds {limit} bytes")]
    ResponseTooLarge { limit: usize },
    #[error("malformed completion response: {0}")]
    MalformedResponse(String),
    #[error("no recorded response for fixture key {key}{}", if *.exhausted { " (all recorded responses consumed)" } else { "" })]
    FixtureMiss { key: String, exhausted: bool },
    #[error("fixture file {path}:{line}: {message}")]
    MalformedFixture {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("scripted client has no responses left")]
    ScriptExhausted,
    #[error("network access is disabled ({ENV_OFFLINE} is set)")]
    NetworkDisabled,
    #[error("no API key configured (set {ENV_API_KEY})")]
    MissingApiKey,
    #[error("temperature {0} is outside [0.0, 2.0]")]
    InvalidTemperature(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One completion call.
#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub dialogue: &'a Dialogue,
    /// Falls back to the backend's configured temperature when `None`.
    pub temperature: Option<f64>,
}

impl<'a> CompletionRequest<'a> {
    pub fn new(dialogue: &'a Dialogue, temperature: f64) -> Self {
        CompletionRequest {
            dialogue,
            temperature: Some(temperature),
        }
    }
}

/// A chat model. Implementations are shareable across threads.
pub trait LlmClient: Send + Sync {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, ClientError>;

    /// Model id used in fixture keys.
    fn model_id(&self) -> &str;

    /// Number of `complete` calls made so far, including failed ones.
    fn call_count(&self) -> usize;
}

impl<C: LlmClient + ?Sized> LlmClient for std::sync::Arc<C> {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, ClientError> {
        (**self).complete(request)
    }

    fn model_id(&self) -> &str {
        (**self).model_id()
    }

    fn call_count(&self) -> usize {
        (**self).call_count()
    }
}

/// API key that never shows up in debug output.
#[derive(Clone, PartialEq, Eq)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        ApiKey(key.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(***)")
    }
}

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub model_id: String,
    pub api_key: Option<ApiKey>,
    pub base_url: String,
    pub temperature: f64,
    pub timeout: Duration,
    pub max_response_bytes: usize,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            model_id: DEFAULT_MODEL.to_string(),
            api_key: None,
            base_url: DEFAULT_BASE_URL.to_string(),
            temperature: DEFAULT_TEMPERATURE,
            timeout: Duration::from_secs(120),
            max_response_bytes: 4 << 20,
        }
    }
}

impl ClientConfig {
    /// Defaults overridden by `ASKIT_MODEL`, `OPENAI_API_KEY` and
    /// `OPENAI_BASE_URL`.
    pub fn from_env() -> Self {
        let mut config = ClientConfig::default();
        if let Some(model) = non_empty_env(ENV_MODEL) {
            config.model_id = model;
        }
        if let Some(url) = non_empty_env(ENV_BASE_URL) {
            config.base_url = url;
        }
        config.api_key = non_empty_env(ENV_API_KEY).map(ApiKey);
        config
    }

    pub fn check(&self) -> Result<(), ClientError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ClientError::InvalidTemperature(self.temperature));
        }
        if self.timeout.is_zero() {
            return Err(ClientError::Transport("timeout must be positive".into()));
        }
        Ok(())
    }
}

fn non_empty_env(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.is_empty())
}

pub fn network_disabled() -> bool {
    non_empty_env(ENV_OFFLINE).is_some_and(|v| v != "0")
}

/// Temperatures are bucketed to one decimal place in fixture keys.
pub fn temperature_bucket(temperature: f64) -> i64 {
    (temperature * 10.0).round() as i64
}

/// Digest identifying a request in a fixture store.
pub fn fixture_key(model_id: &str, temperature: f64, dialogue: &Dialogue) -> String {
    let contents: Vec<&str> = dialogue.messages().iter().map(|m| m.content.as_str()).collect();
    let canonical = json!({
        "model": model_id,
        "temperature_bucket": temperature_bucket(temperature),
        "messages": contents,
    });
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

/// One line of a fixture file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub key: String,
    pub request: FixtureRequest,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<Message>,
}

impl FixtureRecord {
    pub fn new(model_id: &str, temperature: f64, dialogue: &Dialogue, response: impl Into<String>) -> Self {
        FixtureRecord {
            key: fixture_key(model_id, temperature, dialogue),
            request: FixtureRequest {
                model: model_id.to_string(),
                temperature,
                messages: dialogue.messages().to_vec(),
            },
            response: response.into(),
        }
    }
}

/// Reads every record of a JSON-lines fixture file. Blank lines are
/// skipped.
pub fn read_fixtures(path: &Path) -> Result<Vec<FixtureRecord>, ClientError> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| ClientError::MalformedFixture {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

fn append_fixture(file: &Mutex<File>, record: &FixtureRecord) -> Result<(), ClientError> {
    let mut line = serde_json::to_string(record).expect("fixture records serialize");
    line.push('\n');
    let mut file = file.lock().unwrap_or_else(|e| e.into_inner());
    file.write_all(line.as_bytes())?;
    file.flush()?;
    Ok(())
}

/// Live backend for OpenAI-compatible chat completion endpoints.
pub struct LiveClient {
    config: ClientConfig,
    http: reqwest::blocking::Client,
    calls: AtomicUsize,
}

impl fmt::Debug for LiveClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LiveClient").field("config", &self.config).finish()
    }
}

impl LiveClient {
    pub fn new(config: ClientConfig) -> Result<Self, ClientError> {
        config.check()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(LiveClient {
            config,
            http,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    fn request_body(&self, request: &CompletionRequest<'_>) -> Value {
        let messages: Vec<Value> = request
            .dialogue
            .messages()
            .iter()
            .map(|m| json!({"role": m.role.as_str(), "content": m.content}))
            .collect();
        json!({
            "model": self.config.model_id,
            "messages": messages,
            "temperature": request.temperature.unwrap_or(self.config.temperature),
            "n": 1,
        })
    }

    fn send_once(&self, body: &Value, key: &ApiKey) -> Result<Attempt, ClientError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let response = match self.http.post(url).bearer_auth(key.expose()).json(body).send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Err(ClientError::Timeout),
            Err(e) => return Ok(Attempt::Transient(ClientError::Transport(e.to_string()))),
        };
        let status = response.status();
        let retry_after = response
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok());
        let limit = self.config.max_response_bytes;
        if response.content_length().is_some_and(|len| len as usize > limit) {
            return Err(ClientError::ResponseTooLarge { limit });
        }
        let mut bytes = Vec::new();
        response
            .take(limit as u64 + 1)
            .read_to_end(&mut bytes)
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if bytes.len() > limit {
            return Err(ClientError::ResponseTooLarge { limit });
        }
        let text = String::from_utf8_lossy(&bytes).into_owned();

        if status.as_u16() == 429 {
            let wait = Duration::from_secs(retry_after.unwrap_or(1).min(30));
            return Ok(Attempt::RetryAfter(wait, http_error(status.as_u16(), &text)));
        }
        if status.is_server_error() {
            return Ok(Attempt::Transient(http_error(status.as_u16(), &text)));
        }
        if !status.is_success() {
            return Err(http_error(status.as_u16(), &text));
        }
        let decoded: Value =
            serde_json::from_str(&text).map_err(|e| ClientError::MalformedResponse(e.to_string()))?;
        decoded
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(|s| Attempt::Done(s.to_string()))
            .ok_or_else(|| ClientError::MalformedResponse("missing choices[0].message.content".into()))
    }
}

enum Attempt {
    Done(String),
    Transient(ClientError),
    RetryAfter(Duration, ClientError),
}

fn http_error(status: u16, body: &str) -> ClientError {
    let excerpt: String = body.chars().take(200).collect();
    ClientError::Http {
        status,
        body: excerpt,
    }
}

impl LlmClient for LiveClient {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, ClientError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        if network_disabled() {
            return Err(ClientError::NetworkDisabled);
        }
        let key = self.config.api_key.as_ref().ok_or(ClientError::MissingApiKey)?;
        let body = self.request_body(request);
        match self.send_once(&body, key)? {
            Attempt::Done(text) => Ok(text),
            // one transport-level retry, then surface the error
            Attempt::Transient(_) => match self.send_once(&body, key)? {
                Attempt::Done(text) => Ok(text),
                Attempt::Transient(e) | Attempt::RetryAfter(_, e) => Err(e),
            },
            Attempt::RetryAfter(wait, _) => {
                std::thread::sleep(wait);
                match self.send_once(&body, key)? {
                    Attempt::Done(text) => Ok(text),
                    Attempt::Transient(e) | Attempt::RetryAfter(_, e) => Err(e),
                }
            }
        }
    }

    fn model_id(&self) -> &str {
        &self.config.model_id
    }

    fn call_count(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

/// Returns canned responses in order, ignoring the request.
#[derive(Debug, Default)]
pub struct ScriptedClient {
    model_id: Option<String>,
    responses: Mutex<VecDeque<String>>,
    requests: Mutex<Vec<Dialogue>>,
    calls: AtomicUsize,
}

impl ScriptedClient {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedClient {
            responses: Mutex::new(responses.into_iter().map(Into::into).collect()),
            ..Default::default()
        }
    }

    /// Reports `model_id` instead of `scripted`, e.g. when recording
    /// fixtures meant for a replay client of that model.
    pub fn with_model(mut self, model_id: impl Into<String>) -> Self {
        self.model_id = Some(model_id.into());
        self
    }

    /// Dialogues received so far, in call order.
    pub fn requests(&self) -> Vec<Dialogue> {
        self.requests.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn remaining(&self) -> usize {
        self.responses.lock().unwrap_or_else(|e| e.into_inner()).len()
    }
}

impl LlmClient for ScriptedClient {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, ClientError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.requests
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(request.dialogue.clone());
        self.responses
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .pop_front()
            .ok_or(ClientError::ScriptExhausted)
    }

    fn model_id(&self) -> &str {
        self.model_id.as_deref().unwrap_or("scripted")
    }

    fn call_count(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

/// Serves recorded responses. Performs no network activity.
#[derive(Debug)]
pub struct ReplayClient {
    model_id: String,
    entries: HashMap<String, Vec<String>>,
    cursors: Mutex<HashMap<String, usize>>,
    delay: Option<Duration>,
    calls: AtomicUsize,
}

impl ReplayClient {
    pub fn new(model_id: impl Into<String>, records: impl IntoIterator<Item = FixtureRecord>) -> Self {
        let mut entries: HashMap<String, Vec<String>> = HashMap::new();
        for r in records {
            entries.entry(r.key).or_default().push(r.response);
        }
        ReplayClient {
            model_id: model_id.into(),
            entries,
            cursors: Mutex::new(HashMap::new()),
            delay: None,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn open(model_id: impl Into<String>, path: &Path) -> Result<Self, ClientError> {
        Ok(Self::new(model_id, read_fixtures(path)?))
    }

    /// Sleeps this long before every response, simulating model latency.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = Some(delay).filter(|d| !d.is_zero());
        self
    }

    /// Resets every per-key cursor to the first recorded response.
    pub fn rewind(&self) {
        self.cursors.lock().unwrap_or_else(|e| e.into_inner()).clear();
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl LlmClient for ReplayClient {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, ClientError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let temperature = request.temperature.unwrap_or(DEFAULT_TEMPERATURE);
        let key = fixture_key(&self.model_id, temperature, request.dialogue);
        let Some(responses) = self.entries.get(&key) else {
            return Err(ClientError::FixtureMiss {
                key,
                exhausted: false,
            });
        };
        let response = {
            let mut cursors = self.cursors.lock().unwrap_or_else(|e| e.into_inner());
            let cursor = cursors.entry(key.clone()).or_insert(0);
            let Some(response) = responses.get(*cursor) else {
                return Err(ClientError::FixtureMiss {
                    key,
                    exhausted: true,
                });
            };
            *cursor += 1;
            response.clone()
        };
        if let Some(delay) = self.delay {
            std::thread::sleep(delay);
        }
        Ok(response)
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn call_count(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

/// Wraps a client and appends each successful exchange to a fixture file.
pub struct Recorder<C> {
    inner: C,
    path: PathBuf,
    file: Mutex<File>,
}

impl<C: LlmClient> Recorder<C> {
    pub fn new(inner: C, path: impl Into<PathBuf>) -> Result<Self, ClientError> {
        let path = path.into();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Recorder {
            inner,
            path,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn into_inner(self) -> C {
        self.inner
    }
}

impl<C: LlmClient> LlmClient for Recorder<C> {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, ClientError> {
        let response = self.inner.complete(request)?;
        let temperature = request.temperature.unwrap_or(DEFAULT_TEMPERATURE);
        let record = FixtureRecord::new(self.inner.model_id(), temperature, request.dialogue, response.clone());
        append_fixture(&self.file, &record)?;
        Ok(response)
    }

    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn call_count(&self) -> usize {
        self.inner.call_count()
    }
}
