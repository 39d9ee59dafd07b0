//! Backward-translation and embedding providers.
//!
//! A provider is selected by the scheme of its endpoint:
//!
//! | endpoint              | kind        | behaviour                               |
//! |-----------------------|-------------|-----------------------------------------|
//! | `echo:`               | translation | returns its input                       |
//! | `table:<file.tsv>`    | translation | looks up `source<TAB>translation` rows  |
//! | `fixture:<file.jsonl>`| embedding   | looks up precomputed embedding records  |
//! | `http(s)://...`       | either      | generic JSON protocol, see [`http`]     |
//!
//! Every result goes through the on-disk [`Cache`] when one is attached, so a
//! warm cache answers without contacting the backend.

pub mod cache;
pub mod fixture;
pub mod http;

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rttqe_core::semantic::{SentenceEmbedding, TokenEmbeddings};
use serde::{Deserialize, Serialize};

pub use cache::{Cache, CacheKey, EntryMeta};
pub use fixture::EmbeddingFixture;
use http::HttpBackend;

pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_RATE_LIMIT: f64 = 2.0;

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("provider {provider}: invalid configuration: {message}")]
    Config { provider: String, message: String },
    #[error("provider {provider} serves {actual} requests, not {expected}")]
    KindMismatch {
        provider: String,
        expected: ProviderKind,
        actual: ProviderKind,
    },
    #[error("provider {provider} failed on item {index} after {attempts} attempt(s): {message}")]
    Request {
        provider: String,
        index: usize,
        attempts: u32,
        message: String,
    },
    #[error("provider {provider}: malformed response for item {index}: {message}")]
    Protocol {
        provider: String,
        index: usize,
        message: String,
    },
    #[error("provider {provider}: no translation for item {index} ({text:?})")]
    MissingTranslation {
        provider: String,
        index: usize,
        text: String,
    },
    #[error("provider {provider}: missing embedding for {text:?} (item {index})")]
    MissingEmbedding {
        provider: String,
        index: usize,
        text: String,
    },
    #[error("provider {provider}: embedding dimensionality drift at item {index}: expected {expected}, got {got}")]
    DimensionDrift {
        provider: String,
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("provider {provider}: {missing} item(s) not cached and network access is disabled (--offline)")]
    Offline { provider: String, missing: usize },
    #[error("{path}:{line}: {message}")]
    Fixture {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("cache error at {path}: {source}")]
    Cache {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Translation,
    Embedding,
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Translation => "translation",
            Self::Embedding => "embedding",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingLevel {
    Sentence,
    Token,
}

impl EmbeddingLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sentence => "sentence",
            Self::Token => "token",
        }
    }
}

fn default_rate_limit() -> f64 {
    DEFAULT_RATE_LIMIT
}
fn default_timeout() -> f64 {
    30.0
}
fn default_max_retries() -> u32 {
    3
}
fn default_batch_size() -> usize {
    DEFAULT_BATCH_SIZE
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_parallelism() -> usize {
    1
}

/// Connection settings for one provider. Credentials are never stored here;
/// `auth_env` only names the environment variable that holds them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    #[serde(default)]
    pub provider_id: String,
    pub kind: ProviderKind,
    pub endpoint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
    /// Requests per second.
    #[serde(default = "default_rate_limit")]
    pub rate_limit: f64,
    /// Per-request timeout in seconds.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Base delay of the exponential backoff.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    /// Concurrent requests in flight.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

impl ProviderConfig {
    pub fn new(provider_id: impl Into<String>, kind: ProviderKind, endpoint: impl Into<String>) -> Self {
        Self {
            provider_id: provider_id.into(),
            kind,
            endpoint: endpoint.into(),
            auth_env: None,
            rate_limit: DEFAULT_RATE_LIMIT,
            timeout: default_timeout(),
            max_retries: default_max_retries(),
            batch_size: DEFAULT_BATCH_SIZE,
            backoff_ms: default_backoff_ms(),
            parallelism: 1,
        }
    }

    fn invalid(&self, message: impl Into<String>) -> ProviderError {
        ProviderError::Config {
            provider: self.provider_id.clone(),
            message: message.into(),
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        let id_ok = !self.provider_id.is_empty()
            && self
                .provider_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        if !id_ok {
            return Err(self.invalid("provider_id must be non-empty ASCII letters, digits, '-' or '_'"));
        }
        if !(self.rate_limit > 0.0 && self.rate_limit.is_finite()) {
            return Err(self.invalid("rate_limit must be > 0"));
        }
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return Err(self.invalid("timeout must be > 0"));
        }
        if self.batch_size == 0 || self.parallelism == 0 {
            return Err(self.invalid("batch_size and parallelism must be >= 1"));
        }
        let endpoint = self.endpoint()?;
        let expected = match endpoint {
            Endpoint::Echo | Endpoint::Table(_) => Some(ProviderKind::Translation),
            Endpoint::Fixture(_) => Some(ProviderKind::Embedding),
            Endpoint::Http(_) => None,
        };
        if let Some(kind) = expected.filter(|k| *k != self.kind) {
            return Err(self.invalid(format!("endpoint {:?} only serves {kind} requests", self.endpoint)));
        }
        Ok(())
    }

    pub fn endpoint(&self) -> Result<Endpoint, ProviderError> {
        Endpoint::parse(&self.endpoint).map_err(|m| self.invalid(m))
    }

    /// Makes file endpoints relative to `base` absolute.
    pub fn resolve_paths(&mut self, base: &Path) {
        for scheme in ["table:", "fixture:"] {
            if let Some(rest) = self.endpoint.strip_prefix(scheme) {
                let path = Path::new(rest);
                if path.is_relative() {
                    self.endpoint = format!("{scheme}{}", base.join(path).display());
                }
                return;
            }
        }
    }

    /// Name of the environment variable holding the bearer token.
    pub fn auth_env_var(&self) -> String {
        self.auth_env.clone().unwrap_or_else(|| {
            let id: String = self
                .provider_id
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' })
                .collect();
            format!("RTTQE_{id}_TOKEN")
        })
    }

    /// File the provider reads, if any.
    pub fn resource_path(&self) -> Option<PathBuf> {
        match self.endpoint().ok()? {
            Endpoint::Table(p) | Endpoint::Fixture(p) => Some(p),
            _ => None,
        }
    }

    pub fn is_remote(&self) -> bool {
        matches!(self.endpoint(), Ok(Endpoint::Http(_)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Echo,
    Table(PathBuf),
    Fixture(PathBuf),
    Http(String),
}

impl Endpoint {
    pub fn parse(endpoint: &str) -> Result<Self, String> {
        if endpoint == "echo:" || endpoint == "echo" {
            Ok(Self::Echo)
        } else if let Some(p) = endpoint.strip_prefix("table:") {
            Ok(Self::Table(PathBuf::from(p)))
        } else if let Some(p) = endpoint.strip_prefix("fixture:") {
            Ok(Self::Fixture(PathBuf::from(p)))
        } else if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
            Ok(Self::Http(endpoint.trim_end_matches('/').to_string()))
        } else {
            Err(format!(
                "unsupported endpoint {endpoint:?} (expected echo:, table:<path>, fixture:<path> or an http(s) URL)"
            ))
        }
    }
}

enum Backend {
    Echo,
    Table(HashMap<String, String>),
    Fixture(EmbeddingFixture),
    Http(HttpBackend),
}

impl Backend {
    fn is_remote(&self) -> bool {
        matches!(self, Self::Http(_))
    }
}

/// Wire and cache representation of one embedding result.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EmbeddingItem {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence_vector: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wordpieces: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_vectors: Option<Vec<Vec<f64>>>,
}

impl EmbeddingItem {
    /// The part of the item a request at `level` asks for, or a reason it
    /// cannot serve that level.
    pub fn project(&self, level: EmbeddingLevel) -> Result<EmbeddingItem, String> {
        match level {
            EmbeddingLevel::Sentence => match &self.sentence_vector {
                Some(v) => Ok(EmbeddingItem {
                    sentence_vector: Some(v.clone()),
                    ..Default::default()
                }),
                None => Err("record has no sentence_vector".into()),
            },
            EmbeddingLevel::Token => match (&self.wordpieces, &self.token_vectors) {
                (Some(w), Some(t)) if w.len() == t.len() => Ok(EmbeddingItem {
                    wordpieces: Some(w.clone()),
                    token_vectors: Some(t.clone()),
                    ..Default::default()
                }),
                (Some(w), Some(t)) => Err(format!("{} wordpieces but {} token vectors", w.len(), t.len())),
                _ => Err("record has no wordpieces/token_vectors".into()),
            },
        }
    }

    /// Vector width, checking the item is internally uniform.
    pub fn dim(&self) -> Result<usize, String> {
        if let Some(v) = &self.sentence_vector {
            return Ok(v.len());
        }
        let rows = self.token_vectors.as_deref().unwrap_or_default();
        let dim = rows.first().map_or(0, Vec::len);
        match rows.iter().position(|r| r.len() != dim) {
            Some(i) => Err(format!("token vector {i} has width {} instead of {dim}", rows[i].len())),
            None => Ok(dim),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderStats {
    /// Backend calls (HTTP attempts, or lookups for offline backends).
    pub requests: u64,
    pub cache_hits: u64,
}

pub struct Provider {
    cfg: ProviderConfig,
    backend: Backend,
    cache: Option<Arc<Cache>>,
    offline: bool,
    requests: Arc<AtomicU64>,
    hits: AtomicU64,
}

impl fmt::Debug for Provider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Provider")
            .field("provider_id", &self.cfg.provider_id)
            .field("endpoint", &self.cfg.endpoint)
            .field("offline", &self.offline)
            .finish_non_exhaustive()
    }
}

fn read_table(path: &Path) -> Result<HashMap<String, String>, ProviderError> {
    let text = std::fs::read_to_string(path).map_err(|e| ProviderError::Fixture {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    let mut table = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (src, tgt) = line.split_once('\t').ok_or_else(|| ProviderError::Fixture {
            path: path.to_path_buf(),
            line: i + 1,
            message: "expected `source<TAB>translation`".into(),
        })?;
        table.insert(src.to_string(), tgt.to_string());
    }
    Ok(table)
}

impl Provider {
    /// Builds a provider. With `offline` set, remote backends may only answer
    /// from the cache.
    pub fn new(cfg: ProviderConfig, cache: Option<Arc<Cache>>, offline: bool) -> Result<Self, ProviderError> {
        cfg.validate()?;
        let requests = Arc::new(AtomicU64::new(0));
        let backend = match cfg.endpoint()? {
            Endpoint::Echo => Backend::Echo,
            Endpoint::Table(path) => Backend::Table(read_table(&path)?),
            Endpoint::Fixture(path) => Backend::Fixture(EmbeddingFixture::load(&path)?),
            Endpoint::Http(base) => Backend::Http(HttpBackend::new(&cfg, base, Arc::clone(&requests))?),
        };
        Ok(Self {
            cfg,
            backend,
            cache,
            offline,
            requests,
            hits: AtomicU64::new(0),
        })
    }

    pub fn id(&self) -> &str {
        &self.cfg.provider_id
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.cfg
    }

    pub fn stats(&self) -> ProviderStats {
        ProviderStats {
            requests: self.requests.load(Ordering::Relaxed),
            cache_hits: self.hits.load(Ordering::Relaxed),
        }
    }

    fn expect_kind(&self, expected: ProviderKind) -> Result<(), ProviderError> {
        if self.cfg.kind == expected {
            Ok(())
        } else {
            Err(ProviderError::KindMismatch {
                provider: self.cfg.provider_id.clone(),
                expected,
                actual: self.cfg.kind,
            })
        }
    }

    pub fn translation_key(&self, text: &str, src: &str, tgt: &str) -> CacheKey {
        CacheKey::new(&[&self.cfg.provider_id, "translation", src, tgt, text])
    }

    pub fn embedding_key(&self, text: &str, level: EmbeddingLevel) -> CacheKey {
        CacheKey::new(&[&self.cfg.provider_id, "embedding", level.as_str(), text])
    }

    /// Translates `texts` from `src` to `tgt`, aligned index for index.
    pub fn translate_batch(&self, texts: &[String], src: &str, tgt: &str) -> Result<Vec<String>, ProviderError> {
        self.expect_kind(ProviderKind::Translation)?;
        self.resolve(
            texts,
            |t| self.translation_key(t, src, tgt),
            |bytes| String::from_utf8(bytes).map_err(|e| e.to_string()),
            |s: &String| s.as_bytes().to_vec(),
            |chunk| self.translate_chunk(chunk, src, tgt),
        )
    }

    fn translate_chunk(&self, chunk: &[(usize, &str)], src: &str, tgt: &str) -> Result<Vec<String>, ProviderError> {
        match &self.backend {
            Backend::Echo => {
                self.requests.fetch_add(chunk.len() as u64, Ordering::Relaxed);
                Ok(chunk.iter().map(|(_, t)| t.to_string()).collect())
            }
            Backend::Table(table) => chunk
                .iter()
                .map(|&(index, text)| {
                    self.requests.fetch_add(1, Ordering::Relaxed);
                    table.get(text).cloned().ok_or_else(|| ProviderError::MissingTranslation {
                        provider: self.cfg.provider_id.clone(),
                        index,
                        text: text.to_string(),
                    })
                })
                .collect(),
            Backend::Http(http) => http.translate(chunk, src, tgt),
            Backend::Fixture(_) => unreachable!("validated: fixtures serve embeddings only"),
        }
    }

    fn fetch_items(&self, texts: &[String], level: EmbeddingLevel) -> Result<Vec<EmbeddingItem>, ProviderError> {
        self.expect_kind(ProviderKind::Embedding)?;
        let items = self.resolve(
            texts,
            |t| self.embedding_key(t, level),
            |bytes| serde_json::from_slice::<EmbeddingItem>(&bytes).map_err(|e| e.to_string()),
            |item: &EmbeddingItem| serde_json::to_vec(item).expect("embedding items serialize"),
            |chunk| match &self.backend {
                Backend::Fixture(fixture) => {
                    self.requests.fetch_add(chunk.len() as u64, Ordering::Relaxed);
                    fixture.lookup(&self.cfg.provider_id, chunk, level)
                }
                Backend::Http(http) => http.embed(chunk, level),
                Backend::Echo | Backend::Table(_) => unreachable!("validated: translation-only backends"),
            },
        )?;
        let mut expected = None;
        for (index, item) in items.iter().enumerate() {
            let dim = item.dim().map_err(|message| ProviderError::Protocol {
                provider: self.cfg.provider_id.clone(),
                index,
                message,
            })?;
            if level == EmbeddingLevel::Token && item.wordpieces.as_ref().is_some_and(Vec::is_empty) {
                continue;
            }
            match expected {
                None => expected = Some(dim),
                Some(e) if e != dim => {
                    return Err(ProviderError::DimensionDrift {
                        provider: self.cfg.provider_id.clone(),
                        index,
                        expected: e,
                        got: dim,
                    })
                }
                Some(_) => {}
            }
        }
        Ok(items)
    }

    pub fn fetch_sentence_embeddings(&self, texts: &[String]) -> Result<Vec<SentenceEmbedding>, ProviderError> {
        self.fetch_items(texts, EmbeddingLevel::Sentence)?
            .into_iter()
            .enumerate()
            .map(|(index, item)| {
                let vector = item.sentence_vector.unwrap_or_default();
                SentenceEmbedding::new(vector, self.cfg.provider_id.clone()).map_err(|e| ProviderError::Protocol {
                    provider: self.cfg.provider_id.clone(),
                    index,
                    message: e.to_string(),
                })
            })
            .collect()
    }

    pub fn fetch_token_embeddings(&self, texts: &[String]) -> Result<Vec<TokenEmbeddings>, ProviderError> {
        self.fetch_items(texts, EmbeddingLevel::Token)?
            .into_iter()
            .enumerate()
            .map(|(index, item)| {
                TokenEmbeddings::new(item.wordpieces.unwrap_or_default(), item.token_vectors.unwrap_or_default())
                    .map_err(|e| ProviderError::Protocol {
                        provider: self.cfg.provider_id.clone(),
                        index,
                        message: e.to_string(),
                    })
            })
            .collect()
    }

    /// Cache-first resolution of a batch. Misses are deduplicated, sent to
    /// the backend in chunks, and cached as each chunk completes.
    fn resolve<T, K, D, E, F>(&self, texts: &[String], key: K, decode: D, encode: E, fetch: F) -> Result<Vec<T>, ProviderError>
    where
        T: Clone + Send,
        K: Fn(&str) -> CacheKey,
        D: Fn(Vec<u8>) -> Result<T, String>,
        E: Fn(&T) -> Vec<u8>,
        F: Fn(&[(usize, &str)]) -> Result<Vec<T>, ProviderError> + Sync,
    {
        let keys: Vec<CacheKey> = texts.iter().map(|t| key(t)).collect();
        let mut results: Vec<Option<T>> = vec![None; texts.len()];

        if let Some(cache) = &self.cache {
            for (i, k) in keys.iter().enumerate() {
                let cached = cache.get(k).map_err(|source| ProviderError::Cache {
                    path: cache.root().to_path_buf(),
                    source,
                })?;
                if let Some(bytes) = cached {
                    let value = decode(bytes).map_err(|message| ProviderError::Cache {
                        path: cache.root().to_path_buf(),
                        source: std::io::Error::other(format!("corrupt entry {k}: {message}")),
                    })?;
                    self.hits.fetch_add(1, Ordering::Relaxed);
                    results[i] = Some(value);
                }
            }
        }

        // first occurrence of every uncached text, plus where its copies go
        let mut pending: Vec<(usize, &str)> = Vec::new();
        let mut copies: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, text) in texts.iter().enumerate() {
            if results[i].is_some() {
                continue;
            }
            let slots = copies.entry(text.as_str()).or_default();
            if slots.is_empty() {
                pending.push((i, text.as_str()));
            }
            slots.push(i);
        }
        if pending.is_empty() {
            return Ok(results.into_iter().map(|r| r.expect("all cached")).collect());
        }
        if self.offline && self.backend.is_remote() {
            return Err(ProviderError::Offline {
                provider: self.cfg.provider_id.clone(),
                missing: pending.len(),
            });
        }

        let chunk_size = if self.backend.is_remote() { self.cfg.batch_size } else { 1 };
        let chunks: Vec<&[(usize, &str)]> = pending.chunks(chunk_size).collect();
        let wave_size = if self.backend.is_remote() { self.cfg.parallelism } else { 1 };
        let meta = EntryMeta {
            provider_id: self.cfg.provider_id.clone(),
            kind: self.cfg.kind.to_string(),
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        };
        for wave in chunks.chunks(wave_size) {
            let outcomes: Vec<Result<Vec<T>, ProviderError>> = if wave.len() == 1 {
                vec![fetch(wave[0])]
            } else {
                std::thread::scope(|s| {
                    let handles: Vec<_> = wave.iter().map(|chunk| s.spawn(|| fetch(chunk))).collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().expect("provider worker panicked"))
                        .collect()
                })
            };
            let mut first_error = None;
            for (chunk, outcome) in wave.iter().zip(outcomes) {
                let values = match outcome {
                    Ok(v) => v,
                    Err(e) => {
                        first_error.get_or_insert(e);
                        continue;
                    }
                };
                if values.len() != chunk.len() {
                    first_error.get_or_insert(ProviderError::Protocol {
                        provider: self.cfg.provider_id.clone(),
                        index: chunk[0].0,
                        message: format!("expected {} results, got {}", chunk.len(), values.len()),
                    });
                    continue;
                }
                for (&(_, text), value) in chunk.iter().zip(values) {
                    if let Some(cache) = &self.cache {
                        let k = &keys[copies[text][0]];
                        cache.put(k, &encode(&value), &meta).map_err(|source| ProviderError::Cache {
                            path: cache.root().to_path_buf(),
                            source,
                        })?;
                    }
                    for &slot in &copies[text] {
                        results[slot] = Some(value.clone());
                    }
                }
            }
            if let Some(e) = first_error {
                return Err(e);
            }
        }
        Ok(results.into_iter().map(|r| r.expect("every slot resolved")).collect())
    }
}
