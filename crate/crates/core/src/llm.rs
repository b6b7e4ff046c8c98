//! Chat and embedding backends: a deterministic mock, a remote
//! chat-completions client, exchange recording and replay, and tolerant
//! parsing of structured agent responses.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::agent::{ActionSet, Target};
use crate::graph::{ActionKind, Attrs, ItemId};
use crate::scenario::ScenarioName;
use crate::srag::HashingEncoder;
use crate::vocab::Vocabulary;

pub const API_KEY_ENV: &str = "GAG_API_KEY";
pub const API_BASE_ENV: &str = "GAG_API_BASE";
/// `system` value of exchanges that record an embedding call.
pub const EMBED_SYSTEM: &str = "__embed__";
pub const EXCHANGES_FILE: &str = "exchanges.jsonl";

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("HTTP status {0}")]
    HttpStatus(u16),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: Box<BackendError> },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("undecodable response: {0}")]
    Decode(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("no recorded exchange for prompt {0}")]
    ReplayMiss(String),
    #[error("exchange log {path}: {message}")]
    Log { path: PathBuf, message: String },
}

impl BackendError {
    /// False for setup problems (bad backend settings, unreadable log).
    pub fn is_runtime(&self) -> bool {
        !matches!(self, BackendError::Config(_) | BackendError::Log { .. })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("no JSON block in response")]
    NoStructuredBlock,
    #[error("response does not match the expected shape: {0}")]
    Shape(String),
}

fn default_timeout_ms() -> u64 {
    60_000
}
fn default_max_retries() -> u32 {
    2
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_in_flight() -> usize {
    16
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendConfig {
    Mock {
        #[serde(default)]
        seed: u64,
    },
    Remote {
        #[serde(default)]
        base_url: String,
        model: String,
        #[serde(default)]
        embed_model: Option<String>,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
        #[serde(default = "default_max_retries")]
        max_retries: u32,
        #[serde(default = "default_backoff_ms")]
        backoff_ms: u64,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
    },
    /// Serves responses from a recorded `exchanges.jsonl`.
    Replay { path: PathBuf },
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Mock { seed: 0 }
    }
}

/// One recorded call.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub prompt_hash: String,
    pub system: String,
    pub user: String,
    pub response: String,
    pub latency_ms: f64,
}

/// FNV-1a over `system`, a NUL separator and `user`.
pub fn prompt_hash(system: &str, user: &str) -> String {
    format!("{:016x}", fnv1a(&[system.as_bytes(), &[0], user.as_bytes()]))
}

pub(crate) fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in *part {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

pub trait ChatBackend: Send + Sync {
    fn chat(&self, system: &str, user: &str) -> Result<String, BackendError>;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError>;
}

/// What an agent-facing prompt asks for. The mock keys its canned generator on
/// this, so every system prompt carries it in a fixed form.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Profiles,
    SeedItems,
    Activation,
    Reflection,
    Action,
}

impl Task {
    fn as_str(self) -> &'static str {
        match self {
            Task::Profiles => "profiles",
            Task::SeedItems => "seed-items",
            Task::Activation => "activation",
            Task::Reflection => "reflection",
            Task::Action => "action",
        }
    }
}

pub fn system_prompt(task: Task, scenario: ScenarioName, count: Option<usize>) -> String {
    let mut s = format!(
        "You are taking part in a social network simulation. Follow the instructions and answer in the requested format.\nTask: {}\nScenario: {}",
        task.as_str(),
        scenario
    );
    if let Some(n) = count {
        s.push_str(&format!("\nCount: {n}"));
    }
    s
}

fn header_value<'a>(system: &'a str, key: &str) -> Option<&'a str> {
    system.lines().find_map(|l| l.strip_prefix(key)).map(str::trim)
}

fn parse_system(system: &str) -> Option<(Task, ScenarioName, Option<usize>)> {
    let task = match header_value(system, "Task:")? {
        "profiles" => Task::Profiles,
        "seed-items" => Task::SeedItems,
        "activation" => Task::Activation,
        "reflection" => Task::Reflection,
        "action" => Task::Action,
        _ => return None,
    };
    let scenario = header_value(system, "Scenario:")?.parse().ok()?;
    let count = header_value(system, "Count:").and_then(|c| c.parse().ok());
    Some((task, scenario, count))
}

/// Deterministic canned generator keyed by `(seed, prompt hash)`. Reads the
/// prompt the same way a model would and answers in the requested format.
pub struct MockBackend {
    seed: u64,
    vocab: Vocabulary,
    encoder: HashingEncoder,
}

impl MockBackend {
    pub fn new(seed: u64, vocab: Vocabulary, embed_dim: usize) -> Self {
        MockBackend { seed, vocab, encoder: HashingEncoder::new(embed_dim) }
    }

    fn generate(&self, system: &str, user: &str) -> String {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(&[system.as_bytes(), &[0], user.as_bytes()]));
        let Some((task, scenario, count)) = parse_system(system) else {
            return "I am not sure what you are asking for.".to_string();
        };
        match task {
            Task::Profiles => self.mock_profiles(scenario, count.unwrap_or(1), &mut rng),
            Task::SeedItems => self.mock_seed_items(scenario, count.unwrap_or(1), &mut rng),
            Task::Activation => {
                let p = if user.contains("Activity label: core") { 0.8 } else { 0.2 };
                if rng.gen_bool(p) { "active" } else { "idle" }.to_string()
            }
            Task::Reflection => self.mock_reflection(user),
            Task::Action => self.mock_action(scenario, user, &mut rng),
        }
    }

    fn mock_profiles(&self, scenario: ScenarioName, count: usize, rng: &mut ChaCha8Rng) -> String {
        let spec = crate::scenario::ScenarioSpec::builtin(scenario);
        let profiles = crate::agent::vocabulary_profiles(&spec, &self.vocab, count, rng);
        let list_of = |s: &str| s.split(", ").map(str::to_string).collect::<Vec<_>>();
        let values: Vec<Value> = profiles
            .iter()
            .map(|p| {
                let a = &p.attributes;
                let get = |k: &str| a.get(k).cloned().unwrap_or_default();
                match scenario {
                    ScenarioName::SC => json!({
                        "name": p.name,
                        "expertises": list_of(&get("expertises")),
                        "institution": get("institution"),
                        "country": get("country"),
                        "topics": list_of(&get("topics")),
                    }),
                    ScenarioName::TC => json!({"gender": get("gender"), "age": get("age"), "job": get("job")}),
                    ScenarioName::SoC => json!({"user name": p.name, "user description": get("description")}),
                }
            })
            .collect();
        Value::Array(values).to_string()
    }

    fn mock_seed_items(&self, scenario: ScenarioName, count: usize, rng: &mut ChaCha8Rng) -> String {
        let spec = crate::scenario::ScenarioSpec::builtin(scenario);
        let items: Vec<Value> = (0..count)
            .map(|i| {
                let attrs = crate::scenario::synthetic_item(&spec, &self.vocab, i, rng);
                Value::Object(attrs.into_iter().map(|(k, v)| (k, Value::String(v))).collect())
            })
            .collect();
        Value::Array(items).to_string()
    }

    fn mock_reflection(&self, user: &str) -> String {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let topics = self.vocab.cs_topics.iter().chain(&self.vocab.social_topics).chain(&self.vocab.genres);
        let tokens: Vec<&str> = user.split(|c: char| !c.is_alphanumeric() && c != '-').filter(|t| !t.is_empty()).collect();
        for topic in topics {
            let n = tokens.iter().filter(|t| t.eq_ignore_ascii_case(topic)).count();
            if n > 0 {
                *counts.entry(topic.as_str()).or_default() += n;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let keywords: Vec<&str> = ranked.iter().take(3).map(|(t, _)| *t).collect();
        let summary = if keywords.is_empty() {
            "Nothing in particular has caught my attention yet.".to_string()
        } else {
            format!("Lately I have mostly engaged with {}.", keywords.join(" and "))
        };
        json!({"summary": summary, "keywords": keywords}).to_string()
    }

    fn mock_action(&self, scenario: ScenarioName, user: &str, rng: &mut ChaCha8Rng) -> String {
        let observation = section(user, "Search results:", "Task:");
        let profile = section(user, "Profile:", "Memory:");
        let mut topics: Vec<String> = profile
            .lines()
            .filter_map(|l| l.strip_prefix("topics: ").or_else(|| l.strip_prefix("genres: ")))
            .flat_map(|l| l.split([',', '|']).map(|t| t.trim().to_string()))
            .filter(|t| !t.is_empty())
            .collect();
        if topics.is_empty() {
            let pool = match scenario {
                ScenarioName::SC => &self.vocab.cs_topics,
                ScenarioName::TC => &self.vocab.genres,
                ScenarioName::SoC => &self.vocab.social_topics,
            };
            topics.extend(pool.choose(rng).cloned());
        }
        let topic = topics.choose(rng).cloned().unwrap_or_else(|| "research".into());
        match scenario {
            ScenarioName::SC => {
                let titles: Vec<&str> = observation.lines().filter_map(|l| l.strip_prefix("Title: ")).collect();
                let mut cited: Vec<&str> = titles.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
                if cited.is_empty() {
                    cited.extend(titles.first());
                }
                let tag: u32 = rng.gen_range(0..10_000);
                let body = json!({
                    "title": format!("Revisiting {topic}: a study {tag}"),
                    "topic": topic,
                    "keywords": [topic],
                    "abstract": format!("We revisit {topic} and compare with prior work."),
                    "citations": cited,
                });
                format!("Here is my paper.\n```json\n{body:#}\n```")
            }
            ScenarioName::TC => {
                let titles: Vec<&str> = observation.lines().filter_map(|l| l.strip_prefix("Title: ")).collect();
                let mut ratings = Vec::new();
                for t in titles {
                    if rng.gen_bool(0.6) {
                        ratings.push(json!([t, rng.gen_range(1..=5)]));
                    }
                }
                json!({ "ratings": ratings }).to_string()
            }
            ScenarioName::SoC => {
                let ids: Vec<u64> = observation
                    .lines()
                    .filter_map(|l| l.strip_prefix("Tweet ID: "))
                    .filter_map(|s| s.trim().parse().ok())
                    .collect();
                let mut actions = Vec::new();
                for id in ids {
                    if rng.gen_bool(0.5) {
                        let kind = ["Retweet", "Reply", "Follow"][rng.gen_range(0..3)];
                        let text = if kind == "Reply" { format!("Interesting point about {topic}.") } else { String::new() };
                        actions.push(json!({"action": kind, "tweet_id": id, "text": text}));
                    }
                }
                let tweet = if rng.gen_bool(0.5) { format!("Thinking about {topic} today.") } else { String::new() };
                json!({"actions": actions, "tweet": tweet}).to_string()
            }
        }
    }
}

fn section<'a>(text: &'a str, start: &str, end: &str) -> &'a str {
    let Some(s) = text.find(start) else { return "" };
    let rest = &text[s + start.len()..];
    match rest.find(end) {
        Some(e) => &rest[..e],
        None => rest,
    }
}

impl ChatBackend for MockBackend {
    fn chat(&self, system: &str, user: &str) -> Result<String, BackendError> {
        Ok(self.generate(system, user))
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        Ok(texts.iter().map(|t| self.encoder.encode_text(t)).collect())
    }
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("timed out")]
    Timeout,
    #[error("{0}")]
    Io(String),
}

/// The wire. Injectable so tests can count attempts without a network.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<(u16, String), TransportError>;
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new() -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder().build().map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(HttpTransport { client })
    }
}

impl Transport for HttpTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<(u16, String), TransportError> {
        let mut req = self.client.post(url).timeout(timeout)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_string());
        if let Some(key) = bearer {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| if e.is_timeout() { TransportError::Timeout } else { TransportError::Io(e.to_string()) })?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| TransportError::Io(e.to_string()))?;
        Ok((status, text))
    }
}

/// Caps concurrent in-flight requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Gate { free: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut free = self.free.lock().expect("gate poisoned");
            while *free == 0 {
                free = self.cv.wait(free).expect("gate poisoned");
            }
            *free -= 1;
        }
        let out = f();
        *self.free.lock().expect("gate poisoned") += 1;
        self.cv.notify_one();
        out
    }
}

pub struct RemoteBackend {
    base_url: String,
    model: String,
    embed_model: Option<String>,
    api_key: Option<String>,
    timeout: Duration,
    max_retries: u32,
    backoff: Duration,
    gate: Gate,
    transport: Arc<dyn Transport>,
}

impl RemoteBackend {
    /// Builds from a `Remote` config. `GAG_API_BASE` overrides the configured
    /// base URL; `GAG_API_KEY` supplies the bearer token.
    pub fn from_config(config: &BackendConfig, transport: Arc<dyn Transport>) -> Result<Self, BackendError> {
        let BackendConfig::Remote { base_url, model, embed_model, timeout_ms, max_retries, backoff_ms, max_in_flight } =
            config
        else {
            return Err(BackendError::Config("not a remote backend config".into()));
        };
        let base = std::env::var(API_BASE_ENV).ok().filter(|s| !s.trim().is_empty()).unwrap_or_else(|| base_url.clone());
        if base.trim().is_empty() {
            return Err(BackendError::Config(format!("remote backend needs base_url or {API_BASE_ENV}")));
        }
        Ok(RemoteBackend {
            base_url: base.trim_end_matches('/').to_string(),
            model: model.clone(),
            embed_model: embed_model.clone(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|s| !s.is_empty()),
            timeout: Duration::from_millis(*timeout_ms),
            max_retries: *max_retries,
            backoff: Duration::from_millis(*backoff_ms),
            gate: Gate::new(*max_in_flight),
            transport,
        })
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, BackendError> {
        let url = format!("{}/{}", self.base_url, path);
        let attempts = self.max_retries + 1;
        let mut last = BackendError::Transport("no attempt made".into());
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff.saturating_mul(1 << (attempt - 1).min(16)));
            }
            let result = self.gate.run(|| self.transport.post_json(&url, self.api_key.as_deref(), body, self.timeout));
            match result {
                Ok((status, text)) if (200..300).contains(&status) => {
                    return serde_json::from_str(&text).map_err(|e| BackendError::Decode(e.to_string()));
                }
                Ok((status, _)) if status == 429 || status >= 500 => last = BackendError::HttpStatus(status),
                Ok((status, _)) => return Err(BackendError::HttpStatus(status)),
                Err(TransportError::Timeout) => last = BackendError::Timeout,
                Err(TransportError::Io(msg)) => last = BackendError::Transport(msg),
            }
            log::warn!("{url}: attempt {} of {attempts} failed: {last}", attempt + 1);
        }
        Err(BackendError::RetriesExhausted { attempts, last: Box::new(last) })
    }
}

impl ChatBackend for RemoteBackend {
    fn chat(&self, system: &str, user: &str) -> Result<String, BackendError> {
        let body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        let resp = self.post("chat/completions", &body)?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Decode("missing choices[0].message.content".into()))
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        let model = self.embed_model.as_deref().ok_or_else(|| BackendError::Config("no embed_model configured".into()))?;
        let resp = self.post("embeddings", &json!({"model": model, "input": texts}))?;
        let data = resp.get("data").and_then(Value::as_array).ok_or_else(|| BackendError::Decode("missing data".into()))?;
        if data.len() != texts.len() {
            return Err(BackendError::Decode(format!("{} embeddings for {} inputs", data.len(), texts.len())));
        }
        data.iter()
            .map(|d| {
                let v: Vec<f32> = d
                    .get("embedding")
                    .and_then(Value::as_array)
                    .ok_or_else(|| BackendError::Decode("missing embedding".into()))?
                    .iter()
                    .map(|x| x.as_f64().unwrap_or(0.0) as f32)
                    .collect();
                Ok(crate::srag::normalize(v))
            })
            .collect()
    }
}

/// Replays a recorded exchange log: each prompt hash serves its recorded
/// responses in order.
pub struct ReplayBackend {
    queues: Mutex<HashMap<String, VecDeque<String>>>,
}

impl ReplayBackend {
    pub fn open(path: &Path) -> Result<Self, BackendError> {
        let exchanges = read_exchanges(path)?;
        let mut queues: HashMap<String, VecDeque<String>> = HashMap::new();
        for ex in exchanges {
            queues.entry(ex.prompt_hash).or_default().push_back(ex.response);
        }
        Ok(ReplayBackend { queues: Mutex::new(queues) })
    }

    fn next(&self, system: &str, user: &str) -> Result<String, BackendError> {
        let hash = prompt_hash(system, user);
        let mut queues = self.queues.lock().expect("replay queues poisoned");
        let queue = queues.get_mut(&hash).ok_or_else(|| BackendError::ReplayMiss(hash.clone()))?;
        // Identical prompts keep serving the last response once exhausted.
        if queue.len() > 1 {
            Ok(queue.pop_front().expect("non-empty"))
        } else {
            queue.front().cloned().ok_or(BackendError::ReplayMiss(hash))
        }
    }
}

impl ChatBackend for ReplayBackend {
    fn chat(&self, system: &str, user: &str) -> Result<String, BackendError> {
        self.next(system, user)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        texts
            .iter()
            .map(|t| {
                let raw = self.next(EMBED_SYSTEM, t)?;
                serde_json::from_str::<Vec<f32>>(&raw).map_err(|e| BackendError::Decode(e.to_string()))
            })
            .collect()
    }
}

pub fn read_exchanges(path: &Path) -> Result<Vec<ChatExchange>, BackendError> {
    let file = fs::File::open(path).map_err(|e| BackendError::Log { path: path.into(), message: e.to_string() })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| BackendError::Log { path: path.into(), message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let ex = serde_json::from_str(&line)
            .map_err(|e| BackendError::Log { path: path.into(), message: format!("line {}: {e}", i + 1) })?;
        out.push(ex);
    }
    Ok(out)
}

pub fn write_exchanges(path: &Path, exchanges: &[ChatExchange]) -> Result<(), BackendError> {
    let err = |e: std::io::Error| BackendError::Log { path: path.into(), message: e.to_string() };
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(err)?);
    for ex in exchanges {
        let line = serde_json::to_string(ex).map_err(|e| BackendError::Log { path: path.into(), message: e.to_string() })?;
        writeln!(out, "{line}").map_err(err)?;
    }
    out.flush().map_err(err)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CallStats {
    pub calls: u64,
    pub latency_us: u64,
}

/// The handle agents use: wraps a backend with exchange logging, call
/// accounting and optional injected latency.
pub struct LlmClient {
    backend: Box<dyn ChatBackend>,
    log: Mutex<Vec<ChatExchange>>,
    calls: AtomicU64,
    latency_us: AtomicU64,
    injected_latency: Duration,
}

impl LlmClient {
    pub fn new(backend: Box<dyn ChatBackend>) -> Self {
        LlmClient {
            backend,
            log: Mutex::new(Vec::new()),
            calls: AtomicU64::new(0),
            latency_us: AtomicU64::new(0),
            injected_latency: Duration::ZERO,
        }
    }

    /// Builds the backend a config names. The transport is only used by the
    /// remote backend.
    pub fn from_config(
        config: &BackendConfig,
        vocab: &Vocabulary,
        embed_dim: usize,
        transport: Option<Arc<dyn Transport>>,
    ) -> Result<Self, BackendError> {
        let backend: Box<dyn ChatBackend> = match config {
            BackendConfig::Mock { seed } => Box::new(MockBackend::new(*seed, vocab.clone(), embed_dim)),
            BackendConfig::Remote { .. } => {
                let transport = match transport {
                    Some(t) => t,
                    None => Arc::new(HttpTransport::new()?),
                };
                Box::new(RemoteBackend::from_config(config, transport)?)
            }
            BackendConfig::Replay { path } => Box::new(ReplayBackend::open(path)?),
        };
        Ok(LlmClient::new(backend))
    }

    pub fn with_injected_latency(mut self, latency: Duration) -> Self {
        self.injected_latency = latency;
        self
    }

    pub fn chat(&self, system: &str, user: &str) -> Result<String, BackendError> {
        let start = Instant::now();
        if !self.injected_latency.is_zero() {
            std::thread::sleep(self.injected_latency);
        }
        let response = self.backend.chat(system, user)?;
        self.record(system, user, response.clone(), start.elapsed());
        Ok(response)
    }

    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let start = Instant::now();
        let vectors = self.backend.embed(texts)?;
        let per = start.elapsed() / texts.len() as u32;
        for (t, v) in texts.iter().zip(&vectors) {
            let raw = serde_json::to_string(v).map_err(|e| BackendError::Decode(e.to_string()))?;
            self.record(EMBED_SYSTEM, t, raw, per);
        }
        Ok(vectors)
    }

    fn record(&self, system: &str, user: &str, response: String, elapsed: Duration) {
        let us = elapsed.as_micros() as u64;
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.latency_us.fetch_add(us, Ordering::Relaxed);
        self.log.lock().expect("exchange log poisoned").push(ChatExchange {
            prompt_hash: prompt_hash(system, user),
            system: system.to_string(),
            user: user.to_string(),
            response,
            latency_ms: us as f64 / 1000.0,
        });
    }

    pub fn stats(&self) -> CallStats {
        CallStats { calls: self.calls.load(Ordering::Relaxed), latency_us: self.latency_us.load(Ordering::Relaxed) }
    }

    pub fn exchanges(&self) -> Vec<ChatExchange> {
        self.log.lock().expect("exchange log poisoned").clone()
    }
}

/// Locates the first JSON value in free text: fenced or bare, and repaired
/// if it uses Python literals, single quotes or trailing commas.
pub fn extract_json(text: &str) -> Result<Value, ParseError> {
    let bytes = text.as_bytes();
    let mut found_block = false;
    for (start, &b) in bytes.iter().enumerate() {
        if b != b'{' && b != b'[' {
            continue;
        }
        let Some(end) = balanced_end(&text[start..]) else { continue };
        found_block = true;
        let block = &text[start..start + end];
        if let Ok(v) = serde_json::from_str(block) {
            return Ok(v);
        }
        if let Ok(v) = serde_json::from_str(&repair_json(block)) {
            return Ok(v);
        }
    }
    if found_block {
        Err(ParseError::Shape("JSON block could not be repaired".into()))
    } else {
        Err(ParseError::NoStructuredBlock)
    }
}

/// Byte length of the bracketed block at the start of `s`, honoring quotes.
fn balanced_end(s: &str) -> Option<usize> {
    let mut depth = 0i32;
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '"' | '\'' => quote = Some(c),
            '{' | '[' => depth += 1,
            '}' | ']' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
                if depth < 0 {
                    return None;
                }
            }
            _ => {}
        }
    }
    None
}

/// Rewrites Python-style literals into JSON. Never evaluates anything.
pub fn repair_json(block: &str) -> String {
    let mut out = String::with_capacity(block.len());
    let chars: Vec<char> = block.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '"' | '\'' => {
                let q = c;
                out.push('"');
                i += 1;
                while i < chars.len() && chars[i] != q {
                    let ch = chars[i];
                    if ch == '\\' && i + 1 < chars.len() {
                        if chars[i + 1] == '\'' {
                            out.push('\'');
                        } else {
                            out.push(ch);
                            out.push(chars[i + 1]);
                        }
                        i += 2;
                        continue;
                    }
                    if ch == '"' {
                        out.push_str("\\\"");
                    } else if ch == '\n' {
                        out.push_str("\\n");
                    } else {
                        out.push(ch);
                    }
                    i += 1;
                }
                out.push('"');
                i += 1;
            }
            ',' => {
                let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
                if !matches!(next, Some('}') | Some(']')) {
                    out.push(',');
                }
                i += 1;
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                out.push_str(match word.as_str() {
                    "True" => "true",
                    "False" => "false",
                    "None" => "null",
                    other => other,
                });
            }
            '(' => {
                out.push('[');
                i += 1;
            }
            ')' => {
                out.push(']');
                i += 1;
            }
            _ => {
                out.push(c);
                i += 1;
            }
        }
    }
    out
}

/// Expected structured fields per scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionSchema {
    /// `title`, `topic`, `keywords`, `abstract`, `citations`.
    Paper,
    /// `ratings`: `[title, score]` pairs.
    Ratings,
    /// `actions` on tweet ids plus an optional new `tweet`.
    Tweets,
}

impl ActionSchema {
    pub fn for_scenario(name: ScenarioName) -> Self {
        match name {
            ScenarioName::SC => ActionSchema::Paper,
            ScenarioName::TC => ActionSchema::Ratings,
            ScenarioName::SoC => ActionSchema::Tweets,
        }
    }
}

/// An item as the actor saw it, for resolving names in a response.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservedRef {
    pub item: ItemId,
    pub title: Option<String>,
}

fn fold_name(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn resolve_title(name: &str, observed: &[ObservedRef]) -> Option<ItemId> {
    let name = name.trim();
    if let Some(o) = observed.iter().find(|o| o.title.as_deref() == Some(name)) {
        return Some(o.item);
    }
    let folded = fold_name(name);
    observed.iter().find(|o| o.title.as_deref().map(fold_name).as_deref() == Some(folded.as_str())).map(|o| o.item)
}

fn value_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Array(xs) => Some(xs.iter().filter_map(value_text).collect::<Vec<_>>().join(", ")),
        _ => None,
    }
}

fn push_target(set: &mut ActionSet, item: ItemId, kind: ActionKind, text: Option<String>) {
    if !set.targets.iter().any(|t| t.item == item && t.kind == kind) {
        set.targets.push(Target { item, kind, text });
    }
}

/// Parses a structured response into an [`ActionSet`]. Targets are resolved
/// against the observation only; names that do not resolve are dropped and
/// counted in `warnings`.
pub fn parse_action(text: &str, schema: ActionSchema, observed: &[ObservedRef]) -> Result<ActionSet, ParseError> {
    let value = extract_json(text)?;
    let mut set = ActionSet::default();
    match schema {
        ActionSchema::Paper => {
            let obj = value.as_object().ok_or_else(|| ParseError::Shape("expected an object".into()))?;
            let field = |k: &str| obj.get(k).and_then(value_text).filter(|s| !s.trim().is_empty());
            let title = field("title").ok_or_else(|| ParseError::Shape("missing title".into()))?;
            let abstract_ = field("abstract").ok_or_else(|| ParseError::Shape("missing abstract".into()))?;
            let keywords = field("keywords").unwrap_or_default();
            let topic = field("topic").or_else(|| keywords.split(',').next().map(|s| s.trim().to_string()));
            let topic = topic.filter(|t| !t.is_empty()).ok_or_else(|| ParseError::Shape("missing topic".into()))?;
            let mut attrs = Attrs::new();
            attrs.insert("title".into(), title);
            attrs.insert("topic".into(), topic);
            attrs.insert("abstract".into(), abstract_);
            if !keywords.is_empty() {
                attrs.insert("keywords".into(), keywords);
            }
            set.new_item = Some(attrs);
            let citations = match obj.get("citations") {
                Some(Value::Array(xs)) => xs.clone(),
                Some(Value::String(s)) if !s.trim().is_empty() => vec![Value::String(s.clone())],
                _ => Vec::new(),
            };
            for c in citations {
                match value_text(&c).and_then(|n| resolve_title(&n, observed)) {
                    Some(id) => push_target(&mut set, id, ActionKind::Citation, None),
                    None => set.warnings += 1,
                }
            }
        }
        ActionSchema::Ratings => {
            let list = match &value {
                Value::Object(obj) => obj.get("ratings").and_then(Value::as_array).cloned(),
                Value::Array(xs) => Some(xs.clone()),
                _ => None,
            }
            .ok_or_else(|| ParseError::Shape("expected a ratings list".into()))?;
            for entry in list {
                let (title, score) = match &entry {
                    Value::Array(pair) if !pair.is_empty() => (pair.first().and_then(value_text), pair.get(1).and_then(value_text)),
                    Value::Object(o) => (
                        o.get("title").or_else(|| o.get("movie")).and_then(value_text),
                        o.get("rating").or_else(|| o.get("score")).and_then(value_text),
                    ),
                    _ => (None, None),
                };
                match title.and_then(|t| resolve_title(&t, observed)) {
                    Some(id) => push_target(&mut set, id, ActionKind::Rating, score),
                    None => set.warnings += 1,
                }
            }
        }
        ActionSchema::Tweets => {
            let obj = value.as_object().ok_or_else(|| ParseError::Shape("expected an object".into()))?;
            let actions = match obj.get("actions") {
                Some(Value::Array(xs)) => xs.clone(),
                None | Some(Value::Null) => Vec::new(),
                Some(_) => return Err(ParseError::Shape("actions must be a list".into())),
            };
            for a in actions {
                let kind = a.get("action").and_then(Value::as_str).and_then(|s| s.parse::<ActionKind>().ok());
                let id = a.get("tweet_id").and_then(value_text).and_then(|s| s.trim().parse::<u32>().ok()).map(ItemId);
                let resolved = id.filter(|id| observed.iter().any(|o| o.item == *id));
                match (kind, resolved) {
                    (Some(k @ (ActionKind::Retweet | ActionKind::Reply | ActionKind::Follow)), Some(id)) => {
                        let text = a.get("text").and_then(value_text).filter(|s| !s.trim().is_empty());
                        push_target(&mut set, id, k, text);
                    }
                    _ => set.warnings += 1,
                }
            }
            if let Some(tweet) = obj.get("tweet").and_then(value_text).filter(|s| !s.trim().is_empty()) {
                let mut attrs = Attrs::new();
                attrs.insert("content".into(), tweet);
                set.new_item = Some(attrs);
            }
        }
    }
    Ok(set)
}

/// Suffix appended to the user prompt when a response could not be parsed.
pub const REPAIR_SUFFIX: &str =
    "\n\nYour previous answer could not be parsed. Respond again with only the JSON in exactly the requested format.";
