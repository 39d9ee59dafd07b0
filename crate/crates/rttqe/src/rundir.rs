//! Run directories: `manifest.json`, `records.jsonl` and one
//! `scores.<metric>.jsonl` per metric. A `.lock` file keeps a second writer
//! out while a command is running.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rttqe_core::corpus_io::LanguagePair;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{HumanConfig, SemanticRoute};
use crate::pipeline::{MetricId, MetricScoreSet, RoundTripRecord, FORMAT_VERSION};
use crate::providers::{ProviderConfig, ProviderStats};

pub const MANIFEST: &str = "manifest.json";
pub const RECORDS: &str = "records.jsonl";
const LOCK: &str = ".lock";

#[derive(Debug, thiserror::Error)]
pub enum RunDirError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("run directory {0} is locked by another rttqe process (remove {0}/.lock if it is stale)")]
    Locked(PathBuf),
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("not a run directory (no {MANIFEST}): {0}")]
    NotARun(PathBuf),
    #[error("{path}: format_version {found} is not supported (expected {FORMAT_VERSION})")]
    Version { path: PathBuf, found: u32 },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunDirError + '_ {
    move |source| RunDirError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> io::Result<Self> {
        Ok(Self {
            path: path.to_path_buf(),
            sha256: sha256_hex(&fs::read(path)?),
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionEntry {
    pub system_id: String,
    #[serde(flatten)]
    pub file: FileDigest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTripSummary {
    pub created_at: String,
    pub systems: usize,
    pub segments: usize,
    pub stats: ProviderStats,
    /// Digest over the cache keys of every record, in record order.
    pub cache_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub created_at: String,
    pub file: String,
    pub sha256: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub providers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub tool: String,
    pub created_at: String,
    pub config: Option<PathBuf>,
    pub pair: LanguagePair,
    pub testset: FileDigest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub references: Option<FileDigest>,
    pub submissions: Vec<SubmissionEntry>,
    pub bt_provider: ProviderConfig,
    pub semantic: SemanticRoute,
    pub human: HumanConfig,
    pub metrics: Vec<MetricId>,
    pub cache_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roundtrip: Option<RoundTripSummary>,
    #[serde(default)]
    pub scores: BTreeMap<MetricId, ScoreEntry>,
}

/// An open, locked run directory.
#[derive(Debug)]
pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    /// Opens `path`, creating it if needed, and takes the lock.
    pub fn create(path: &Path) -> Result<Self, RunDirError> {
        fs::create_dir_all(path).map_err(io_err(path))?;
        Self::lock(path)
    }

    /// Opens an existing run directory and takes the lock.
    pub fn open(path: &Path) -> Result<Self, RunDirError> {
        if !path.join(MANIFEST).is_file() {
            return Err(RunDirError::NotARun(path.to_path_buf()));
        }
        Self::lock(path)
    }

    fn lock(path: &Path) -> Result<Self, RunDirError> {
        let lock = path.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path: path.to_path_buf() })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(RunDirError::Locked(path.to_path_buf())),
            Err(e) => Err(RunDirError::Io { path: lock, source: e }),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn scores_file(metric: MetricId) -> String {
        format!("scores.{metric}.jsonl")
    }

    pub fn read_manifest(&self) -> Result<Manifest, RunDirError> {
        read_manifest(&self.path)
    }

    pub fn write_manifest(&self, manifest: &Manifest) -> Result<(), RunDirError> {
        let mut bytes = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
        bytes.push(b'\n');
        write_atomic(&self.path.join(MANIFEST), &bytes)
    }

    pub fn write_records(&self, records: &[RoundTripRecord]) -> Result<(), RunDirError> {
        write_jsonl(&self.path.join(RECORDS), records.iter().map(VersionedRef::new))
    }

    pub fn read_records(&self) -> Result<Vec<RoundTripRecord>, RunDirError> {
        read_records(&self.path)
    }

    /// Writes score sets and returns the file's digest.
    pub fn write_scores(&self, metric: MetricId, sets: &[MetricScoreSet]) -> Result<String, RunDirError> {
        let path = self.path.join(Self::scores_file(metric));
        write_jsonl(&path, sets.iter())?;
        Ok(sha256_hex(&fs::read(&path).map_err(io_err(&path))?))
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(self.path.join(LOCK));
    }
}

/// Reads a manifest without taking the lock.
pub fn read_manifest(dir: &Path) -> Result<Manifest, RunDirError> {
    let path = dir.join(MANIFEST);
    if !path.is_file() {
        return Err(RunDirError::NotARun(dir.to_path_buf()));
    }
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    let manifest: Manifest = serde_json::from_slice(&bytes).map_err(|e| RunDirError::Format {
        path: path.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(RunDirError::Version {
            path,
            found: manifest.format_version,
        });
    }
    Ok(manifest)
}

pub fn read_records(dir: &Path) -> Result<Vec<RoundTripRecord>, RunDirError> {
    let versioned: Vec<Versioned<RoundTripRecord>> = read_jsonl(&dir.join(RECORDS))?;
    Ok(versioned.into_iter().map(|v| v.inner).collect())
}

pub fn read_scores(dir: &Path, metric: MetricId) -> Result<Vec<MetricScoreSet>, RunDirError> {
    let path = dir.join(RunDir::scores_file(metric));
    let sets: Vec<MetricScoreSet> = read_jsonl(&path)?;
    if let Some(bad) = sets.iter().find(|s| s.format_version != FORMAT_VERSION) {
        return Err(RunDirError::Version {
            path,
            found: bad.format_version,
        });
    }
    Ok(sets)
}

#[derive(Serialize)]
struct VersionedRef<'a, T> {
    format_version: u32,
    #[serde(flatten)]
    inner: &'a T,
}

impl<'a, T> VersionedRef<'a, T> {
    fn new(inner: &'a T) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            inner,
        }
    }
}

/// `read_jsonl` has already checked `format_version`.
#[derive(Deserialize)]
struct Versioned<T> {
    #[serde(flatten)]
    inner: T,
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunDirError> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl Iterator<Item = T>) -> Result<(), RunDirError> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, &item).expect("records serialize");
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, RunDirError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| RunDirError::Format {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let version = value.get("format_version").and_then(|v| v.as_u64());
        if version != Some(FORMAT_VERSION as u64) {
            return Err(RunDirError::Version {
                path: path.to_path_buf(),
                found: version.unwrap_or(0) as u32,
            });
        }
        out.push(serde_json::from_value(value).map_err(|e| RunDirError::Format {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
