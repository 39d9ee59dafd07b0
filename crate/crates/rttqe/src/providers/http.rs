//! Generic JSON-over-HTTP provider protocol.
//!
//! * `POST {endpoint}/translate` with `{"texts": [...], "src": tag, "tgt": tag}`
//!   answers `{"translations": [...]}`.
//! * `POST {endpoint}/embed` with `{"texts": [...], "level": "sentence"|"token"}`
//!   answers `{"dim": n, "items": [...]}`, each item carrying either
//!   `sentence_vector` or `wordpieces` + `token_vectors`.
//!
//! 429 and 5xx responses and transport failures are retried with exponential
//! backoff, honouring `Retry-After` when present.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use reqwest::header::{HeaderMap, RETRY_AFTER};
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::{EmbeddingItem, EmbeddingLevel, ProviderConfig, ProviderError};

const MAX_RETRY_AFTER: Duration = Duration::from_secs(60);

#[derive(Serialize)]
struct TranslateRequest<'a> {
    texts: Vec<&'a str>,
    src: &'a str,
    tgt: &'a str,
}

#[derive(Deserialize)]
struct TranslateResponse {
    translations: Vec<String>,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: Vec<&'a str>,
    level: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    dim: usize,
    items: Vec<EmbeddingItem>,
}

struct Secret(String);

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<redacted>")
    }
}

/// Spaces request starts at least `interval` apart across all threads.
#[derive(Debug)]
struct Pacer {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl Pacer {
    fn wait(&self) {
        let slot = {
            let mut next = self.next.lock().unwrap_or_else(|p| p.into_inner());
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.interval);
            slot
        };
        let now = Instant::now();
        if slot > now {
            std::thread::sleep(slot - now);
        }
    }
}

#[derive(Debug)]
pub(crate) struct HttpBackend {
    provider: String,
    base: String,
    client: Client,
    token: Option<Secret>,
    pacer: Pacer,
    max_retries: u32,
    backoff: Duration,
    requests: Arc<AtomicU64>,
}

enum Failure {
    Retryable { message: String, retry_after: Option<Duration> },
    Fatal(String),
}

fn retry_after(headers: &HeaderMap) -> Option<Duration> {
    let secs: f64 = headers.get(RETRY_AFTER)?.to_str().ok()?.trim().parse().ok()?;
    (secs.is_finite() && secs >= 0.0).then(|| Duration::from_secs_f64(secs).min(MAX_RETRY_AFTER))
}

impl HttpBackend {
    pub(crate) fn new(cfg: &ProviderConfig, base: String, requests: Arc<AtomicU64>) -> Result<Self, ProviderError> {
        let client = Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout))
            .user_agent(concat!("rttqe/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| ProviderError::Config {
                provider: cfg.provider_id.clone(),
                message: e.to_string(),
            })?;
        let token = std::env::var(cfg.auth_env_var())
            .ok()
            .filter(|t| !t.is_empty())
            .map(Secret);
        Ok(Self {
            provider: cfg.provider_id.clone(),
            base,
            client,
            token,
            pacer: Pacer {
                interval: Duration::from_secs_f64(1.0 / cfg.rate_limit),
                next: Mutex::new(None),
            },
            max_retries: cfg.max_retries,
            backoff: Duration::from_millis(cfg.backoff_ms),
            requests,
        })
    }

    fn attempt<B: Serialize>(&self, url: &str, body: &B) -> Result<Vec<u8>, Failure> {
        self.pacer.wait();
        self.requests.fetch_add(1, Ordering::Relaxed);
        let mut request = self.client.post(url).json(body);
        if let Some(Secret(token)) = &self.token {
            request = request.bearer_auth(token);
        }
        let response = request.send().map_err(|e| Failure::Retryable {
            message: format!("transport error: {e}"),
            retry_after: None,
        })?;
        let status = response.status();
        let wait = retry_after(response.headers());
        if status == StatusCode::OK {
            return response
                .bytes()
                .map(|b| b.to_vec())
                .map_err(|e| Failure::Retryable {
                    message: format!("reading body: {e}"),
                    retry_after: None,
                });
        }
        let snippet: String = response.text().unwrap_or_default().chars().take(200).collect();
        let message = format!("HTTP {status}: {snippet}");
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            Err(Failure::Retryable {
                message,
                retry_after: wait,
            })
        } else {
            Err(Failure::Fatal(message))
        }
    }

    fn post<B: Serialize>(&self, path: &str, body: &B, index: usize) -> Result<Vec<u8>, ProviderError> {
        let url = format!("{}/{path}", self.base);
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&url, body) {
                Ok(bytes) => return Ok(bytes),
                Err(Failure::Fatal(message)) => {
                    return Err(ProviderError::Request {
                        provider: self.provider.clone(),
                        index,
                        attempts,
                        message,
                    })
                }
                Err(Failure::Retryable { message, retry_after }) => {
                    if attempts > self.max_retries {
                        return Err(ProviderError::Request {
                            provider: self.provider.clone(),
                            index,
                            attempts,
                            message,
                        });
                    }
                    let delay = retry_after.unwrap_or_else(|| self.backoff * 2u32.saturating_pow(attempts - 1));
                    log::warn!(
                        "provider {}: {message}; retrying in {} ms ({attempts}/{})",
                        self.provider,
                        delay.as_millis(),
                        self.max_retries
                    );
                    std::thread::sleep(delay);
                }
            }
        }
    }

    fn protocol(&self, index: usize, message: impl Into<String>) -> ProviderError {
        ProviderError::Protocol {
            provider: self.provider.clone(),
            index,
            message: message.into(),
        }
    }

    pub(crate) fn translate(&self, chunk: &[(usize, &str)], src: &str, tgt: &str) -> Result<Vec<String>, ProviderError> {
        let first = chunk[0].0;
        let body = TranslateRequest {
            texts: chunk.iter().map(|(_, t)| *t).collect(),
            src,
            tgt,
        };
        log::debug!("provider {}: translating {} text(s) from item {first}", self.provider, chunk.len());
        let bytes = self.post("translate", &body, first)?;
        let response: TranslateResponse =
            serde_json::from_slice(&bytes).map_err(|e| self.protocol(first, e.to_string()))?;
        if response.translations.len() != chunk.len() {
            return Err(self.protocol(
                first,
                format!("sent {} texts, got {} translations", chunk.len(), response.translations.len()),
            ));
        }
        Ok(response.translations)
    }

    pub(crate) fn embed(&self, chunk: &[(usize, &str)], level: EmbeddingLevel) -> Result<Vec<EmbeddingItem>, ProviderError> {
        let first = chunk[0].0;
        let body = EmbedRequest {
            texts: chunk.iter().map(|(_, t)| *t).collect(),
            level: level.as_str(),
        };
        log::debug!("provider {}: embedding {} text(s) from item {first}", self.provider, chunk.len());
        let bytes = self.post("embed", &body, first)?;
        let response: EmbedResponse = serde_json::from_slice(&bytes).map_err(|e| self.protocol(first, e.to_string()))?;
        if response.items.len() != chunk.len() {
            return Err(self.protocol(
                first,
                format!("sent {} texts, got {} items", chunk.len(), response.items.len()),
            ));
        }
        response
            .items
            .into_iter()
            .zip(chunk)
            .map(|(item, &(index, _))| {
                let item = item.project(level).map_err(|m| self.protocol(index, m))?;
                let dim = item.dim().map_err(|m| self.protocol(index, m))?;
                let empty = item.wordpieces.as_ref().is_some_and(Vec::is_empty);
                if dim != response.dim && !empty {
                    return Err(ProviderError::DimensionDrift {
                        provider: self.provider.clone(),
                        index,
                        expected: response.dim,
                        got: dim,
                    });
                }
                Ok(item)
            })
            .collect()
    }
}
