//! Transport to chat-completion endpoints, plus a record/replay store so the
//! whole pipeline runs deterministically offline.
//!
//! The wire protocol is OpenAI-compatible chat completions over HTTPS: one
//! user message carrying the entire prompt. Fixtures are the primary test
//! path; live calls are opt-in and need a credential in the environment
//! variable named by the model target. Credentials never touch disk.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex, RwLock};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::prompt::PromptBundle;

/// One model endpoint the benchmark can talk to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTarget {
    /// Display name, also the replay key (e.g. "O3-mini-high", "DeepSeek R1").
    pub name: String,
    /// Chat-completions URL.
    #[serde(default)]
    pub endpoint: String,
    /// Environment variable holding the bearer token.
    #[serde(default)]
    pub credential_env: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub max_tokens: Option<u32>,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
}

fn default_temperature() -> f64 {
    1.0
}

fn default_timeout_s() -> f64 {
    120.0
}

impl ModelTarget {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            endpoint: String::new(),
            credential_env: None,
            temperature: default_temperature(),
            max_tokens: None,
            timeout_s: default_timeout_s(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Config("model name must not be empty".into()));
        }
        if self.timeout_s <= 0.0 || self.timeout_s.is_nan() {
            return Err(Error::Config(format!(
                "model `{}` timeout must be positive, got {}",
                self.name, self.timeout_s
            )));
        }
        Ok(())
    }
}

/// A completed prompt/response round trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmExchange {
    pub prompt_fingerprint: String,
    pub model: String,
    pub raw_response: String,
    pub latency_s: f64,
    #[serde(default)]
    pub transport_meta: BTreeMap<String, String>,
}

/// On-disk record: one JSON object per line in the replay store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredExchange {
    pub fingerprint: String,
    pub model: String,
    pub raw_response: String,
    pub latency_s: f64,
    pub recorded_at: f64,
    #[serde(default)]
    pub transport_meta: BTreeMap<String, String>,
}

type Key = (String, String);

/// Append-only JSONL store of exchanges keyed by (fingerprint, model).
///
/// Duplicate keys append a new line; lookups return the latest record.
/// Corrupt lines are skipped with a warning. Readers may run concurrently;
/// appends are serialized.
#[derive(Debug)]
pub struct ReplayStore {
    path: PathBuf,
    records: RwLock<BTreeMap<Key, StoredExchange>>,
    append_lock: Mutex<()>,
    warnings: usize,
}

impl ReplayStore {
    /// Open an existing store, tolerating corrupt lines.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let text = std::fs::read_to_string(&path).map_err(|e| {
            Error::Config(format!("cannot open replay store `{}`: {e}", path.display()))
        })?;
        let mut records = BTreeMap::new();
        let mut warnings = 0;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<StoredExchange>(line) {
                Ok(rec) => {
                    records.insert((rec.fingerprint.clone(), rec.model.clone()), rec);
                }
                Err(e) => {
                    warnings += 1;
                    log::warn!(
                        "replay store {}: skipping corrupt line {}: {e}",
                        path.display(),
                        i + 1
                    );
                }
            }
        }
        Ok(Self {
            path,
            records: RwLock::new(records),
            append_lock: Mutex::new(()),
            warnings,
        })
    }

    /// Create the file if missing, then open it.
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        if !path.as_ref().exists() {
            if let Some(parent) = path.as_ref().parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            std::fs::write(&path, "")?;
        }
        Self::open(path)
    }

    /// Number of corrupt lines skipped while opening.
    pub fn warnings(&self) -> usize {
        self.warnings
    }

    pub fn len(&self) -> usize {
        self.records.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, fingerprint: &str, model: &str) -> Option<StoredExchange> {
        self.records
            .read()
            .expect("store lock")
            .get(&(fingerprint.to_string(), model.to_string()))
            .cloned()
    }

    /// Append a record and make it the latest for its key.
    pub fn put(&self, record: StoredExchange) -> Result<()> {
        let line = serde_json::to_string(&record)?;
        {
            let _guard = self.append_lock.lock().expect("append lock");
            let mut file = OpenOptions::new().append(true).create(true).open(&self.path)?;
            file.write_all(line.as_bytes())?;
            file.write_all(b"\n")?;
        }
        self.records
            .write()
            .expect("store lock")
            .insert((record.fingerprint.clone(), record.model.clone()), record);
        Ok(())
    }
}

/// Anything that can turn a prompt into a raw model response.
pub trait Backend: Send + Sync {
    fn complete(&self, bundle: &PromptBundle, target: &ModelTarget) -> Result<LlmExchange>;
}

/// Replays recorded exchanges; a missing fixture is an error naming the key.
pub struct ReplayBackend {
    store: ReplayStore,
}

impl ReplayBackend {
    pub fn new(store: ReplayStore) -> Self {
        Self { store }
    }

    pub fn store(&self) -> &ReplayStore {
        &self.store
    }
}

impl Backend for ReplayBackend {
    fn complete(&self, bundle: &PromptBundle, target: &ModelTarget) -> Result<LlmExchange> {
        target.validate()?;
        let rec = self
            .store
            .get(&bundle.fingerprint, &target.name)
            .ok_or_else(|| Error::FixtureMiss {
                fingerprint: bundle.fingerprint.clone(),
                model: target.name.clone(),
            })?;
        Ok(LlmExchange {
            prompt_fingerprint: rec.fingerprint,
            model: rec.model,
            raw_response: rec.raw_response,
            latency_s: rec.latency_s,
            transport_meta: rec.transport_meta,
        })
    }
}

/// Retry behavior for rate-limited requests. Only HTTP 429 retries; every
/// attempt is logged and counted in the exchange's transport metadata.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            base_delay: Duration::from_millis(500),
        }
    }
}

/// Counting semaphore bounding concurrent in-flight requests.
struct InFlightGate {
    state: Mutex<usize>,
    cv: Condvar,
    limit: usize,
}

impl InFlightGate {
    fn new(limit: usize) -> Self {
        Self {
            state: Mutex::new(0),
            cv: Condvar::new(),
            limit: limit.max(1),
        }
    }

    fn acquire(&self) -> InFlightPermit<'_> {
        let mut in_flight = self.state.lock().expect("gate lock");
        while *in_flight >= self.limit {
            in_flight = self.cv.wait(in_flight).expect("gate lock");
        }
        *in_flight += 1;
        InFlightPermit { gate: self }
    }
}

struct InFlightPermit<'a> {
    gate: &'a InFlightGate,
}

impl Drop for InFlightPermit<'_> {
    fn drop(&mut self) {
        *self.gate.state.lock().expect("gate lock") -= 1;
        self.gate.cv.notify_one();
    }
}

/// Talks to a live OpenAI-compatible endpoint, optionally recording every
/// exchange. At most `max_in_flight` requests run at once (default 2).
pub struct LiveBackend {
    client: reqwest::blocking::Client,
    retry: RetryPolicy,
    record: Option<ReplayStore>,
    gate: InFlightGate,
}

impl LiveBackend {
    pub fn new(record: Option<ReplayStore>) -> Self {
        Self::with_options(record, RetryPolicy::default(), 2)
    }

    pub fn with_options(
        record: Option<ReplayStore>,
        retry: RetryPolicy,
        max_in_flight: usize,
    ) -> Self {
        Self {
            client: reqwest::blocking::Client::builder()
                .timeout(None)
                .build()
                .expect("http client"),
            retry,
            record,
            gate: InFlightGate::new(max_in_flight),
        }
    }

    fn bearer_token(&self, target: &ModelTarget) -> Result<Option<String>> {
        match &target.credential_env {
            None => Ok(None),
            Some(var) => match std::env::var(var) {
                Ok(value) if !value.is_empty() => Ok(Some(value)),
                _ => Err(Error::Auth {
                    model: target.name.clone(),
                    message: format!("environment variable `{var}` is not set"),
                }),
            },
        }
    }

    fn send_once(
        &self,
        target: &ModelTarget,
        token: Option<&str>,
        body: &serde_json::Value,
    ) -> Result<(u16, String)> {
        let mut req = self
            .client
            .post(&target.endpoint)
            .timeout(Duration::from_secs_f64(target.timeout_s))
            .json(body);
        if let Some(token) = token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                Error::Timeout {
                    model: target.name.clone(),
                    seconds: target.timeout_s,
                }
            } else {
                Error::Transport {
                    model: target.name.clone(),
                    message: e.to_string(),
                }
            }
        })?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| Error::Transport {
            model: target.name.clone(),
            message: format!("reading response body: {e}"),
        })?;
        Ok((status, text))
    }
}

impl Backend for LiveBackend {
    /// Exactly one completed request feeds the returned exchange; only
    /// rate-limited attempts are retried, with exponential backoff, and the
    /// attempt count lands in `transport_meta`.
    fn complete(&self, bundle: &PromptBundle, target: &ModelTarget) -> Result<LlmExchange> {
        target.validate()?;
        let token = self.bearer_token(target)?;
        let mut body = json!({
            "model": target.name,
            "messages": [{"role": "user", "content": bundle.text}],
            "temperature": target.temperature,
        });
        if let Some(max_tokens) = target.max_tokens {
            body["max_tokens"] = json!(max_tokens);
        }

        let _permit = self.gate.acquire();
        let started = Instant::now();
        let mut attempts: u32 = 0;
        let (status, text) = loop {
            attempts += 1;
            let (status, text) = self.send_once(target, token.as_deref(), &body)?;
            if status == 429 && attempts < self.retry.max_attempts {
                let delay = self.retry.base_delay * 2u32.pow(attempts - 1);
                log::warn!(
                    "model `{}` rate-limited (attempt {attempts}); retrying in {delay:?}",
                    target.name
                );
                std::thread::sleep(delay);
                continue;
            }
            break (status, text);
        };
        let latency_s = started.elapsed().as_secs_f64();

        match status {
            200 => {}
            401 | 403 => {
                return Err(Error::Auth {
                    model: target.name.clone(),
                    message: format!("endpoint returned HTTP {status}"),
                })
            }
            other => {
                return Err(Error::Transport {
                    model: target.name.clone(),
                    message: format!("HTTP {other}: {}", snippet(&text)),
                })
            }
        }

        let parsed: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Transport {
            model: target.name.clone(),
            message: format!("malformed completion JSON: {e}"),
        })?;
        let content = parsed["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| Error::Transport {
                model: target.name.clone(),
                message: "completion JSON has no choices[0].message.content".into(),
            })?
            .to_string();

        let mut transport_meta = BTreeMap::new();
        transport_meta.insert("attempts".to_string(), attempts.to_string());
        transport_meta.insert("status".to_string(), status.to_string());

        let exchange = LlmExchange {
            prompt_fingerprint: bundle.fingerprint.clone(),
            model: target.name.clone(),
            raw_response: content,
            latency_s,
            transport_meta,
        };
        if let Some(store) = &self.record {
            store.put(StoredExchange {
                fingerprint: exchange.prompt_fingerprint.clone(),
                model: exchange.model.clone(),
                raw_response: exchange.raw_response.clone(),
                latency_s: exchange.latency_s,
                recorded_at: unix_now(),
                transport_meta: exchange.transport_meta.clone(),
            })?;
        }
        Ok(exchange)
    }
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn snippet(text: &str) -> &str {
    &text[..text.len().min(200)]
}
