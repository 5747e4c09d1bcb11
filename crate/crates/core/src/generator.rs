//! Text generators: the one model call the shortcut path may make, and the
//! several the long-chain pipeline makes.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeneratorError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed completion: {0}")]
    Malformed(String),
}

pub trait Generator: Send + Sync {
    fn generate(&self, prompt: &str) -> Result<String, GeneratorError>;
}

impl<G: Generator + ?Sized> Generator for &G {
    fn generate(&self, prompt: &str) -> Result<String, GeneratorError> {
        (**self).generate(prompt)
    }
}

impl<G: Generator + ?Sized> Generator for std::sync::Arc<G> {
    fn generate(&self, prompt: &str) -> Result<String, GeneratorError> {
        (**self).generate(prompt)
    }
}

/// Answers every prompt with a fixed reply, optionally after a fixed delay.
#[derive(Debug, Clone)]
pub struct StubGenerator {
    reply: String,
    delay: Option<Duration>,
}

impl Default for StubGenerator {
    fn default() -> Self {
        StubGenerator {
            reply: "OK".to_string(),
            delay: None,
        }
    }
}

impl StubGenerator {
    pub fn new(reply: impl Into<String>) -> Self {
        StubGenerator {
            reply: reply.into(),
            delay: None,
        }
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = Some(delay);
        self
    }
}

impl Generator for StubGenerator {
    fn generate(&self, _prompt: &str) -> Result<String, GeneratorError> {
        if let Some(d) = self.delay {
            std::thread::sleep(d);
        }
        Ok(self.reply.clone())
    }
}

/// Call and token accounting around another generator. Tokens are counted
/// as whitespace-separated words of prompt plus completion.
pub struct Counting<G> {
    inner: G,
    calls: AtomicUsize,
    tokens: AtomicUsize,
}

impl<G: Generator> Counting<G> {
    pub fn new(inner: G) -> Self {
        Counting {
            inner,
            calls: AtomicUsize::new(0),
            tokens: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn tokens(&self) -> usize {
        self.tokens.load(Ordering::Relaxed)
    }
}

impl<G: Generator> Generator for Counting<G> {
    fn generate(&self, prompt: &str) -> Result<String, GeneratorError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let out = self.inner.generate(prompt);
        let completion = out.as_ref().map_or(0, |c| c.split_whitespace().count());
        self.tokens
            .fetch_add(prompt.split_whitespace().count() + completion, Ordering::Relaxed);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    #[serde(default)]
    pub token: Option<String>,
    pub timeout_ms: u64,
    pub max_tokens: u32,
    pub max_in_flight: usize,
}

impl RemoteConfig {
    pub const ENV_URL: &'static str = "SKELCACHE_GENERATOR_URL";
    pub const ENV_TOKEN: &'static str = "SKELCACHE_GENERATOR_TOKEN";
    pub const ENV_TIMEOUT_MS: &'static str = "SKELCACHE_GENERATOR_TIMEOUT_MS";

    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            token: None,
            timeout_ms: 30_000,
            max_tokens: 1024,
            max_in_flight: 8,
        }
    }

    /// Reads the endpoint from the environment; `None` if no URL is set.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(Self::ENV_URL).ok().filter(|u| !u.trim().is_empty())?;
        let mut cfg = RemoteConfig::new(url);
        cfg.token = std::env::var(Self::ENV_TOKEN).ok();
        if let Some(ms) = std::env::var(Self::ENV_TIMEOUT_MS).ok().and_then(|v| v.parse().ok()) {
            cfg.timeout_ms = ms;
        }
        Some(cfg)
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    max_tokens: u32,
    temperature: f32,
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        SemaphoreGuard(self)
    }
}

struct SemaphoreGuard<'a>(&'a Semaphore);

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

/// Client for a text-generation service: `POST {prompt, max_tokens,
/// temperature: 0}` answered by `{text}`.
pub struct RemoteGenerator {
    config: RemoteConfig,
    // built lazily: the blocking client must not be created inside an async runtime
    client: OnceLock<reqwest::blocking::Client>,
    slots: Semaphore,
}

impl RemoteGenerator {
    pub fn new(config: RemoteConfig) -> Self {
        let slots = Semaphore {
            free: Mutex::new(config.max_in_flight.max(1)),
            cv: Condvar::new(),
        };
        RemoteGenerator {
            config,
            client: OnceLock::new(),
            slots,
        }
    }

    fn client(&self) -> Result<&reqwest::blocking::Client, GeneratorError> {
        if let Some(c) = self.client.get() {
            return Ok(c);
        }
        let c = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(self.config.timeout_ms))
            .build()
            .map_err(|e| GeneratorError::Transport(e.to_string()))?;
        Ok(self.client.get_or_init(|| c))
    }
}

impl Generator for RemoteGenerator {
    fn generate(&self, prompt: &str) -> Result<String, GeneratorError> {
        let _slot = self.slots.acquire();
        let mut req = self.client()?.post(&self.config.endpoint).json(&CompletionRequest {
            prompt,
            max_tokens: self.config.max_tokens,
            temperature: 0.0,
        });
        if let Some(token) = &self.config.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                GeneratorError::Timeout
            } else {
                GeneratorError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(GeneratorError::Status {
                status: status.as_u16(),
                body,
            });
        }
        let body: CompletionResponse = resp
            .json()
            .map_err(|e| GeneratorError::Malformed(e.to_string()))?;
        if body.text.trim().is_empty() {
            return Err(GeneratorError::Malformed("empty completion".into()));
        }
        Ok(body.text)
    }
}
