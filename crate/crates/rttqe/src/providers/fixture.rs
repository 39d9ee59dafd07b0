//! Precomputed embeddings read from a JSON-lines file.
//!
//! Each line is `{"text": ..., "sentence_vector": [...], "wordpieces": [...],
//! "token_vectors": [[...], ...]}`; either level may be omitted. A first line
//! without a `text` field is a free-form header and is skipped.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{EmbeddingItem, EmbeddingLevel, ProviderError};

#[derive(Debug, Deserialize)]
struct Record {
    text: Option<String>,
    #[serde(flatten)]
    item: EmbeddingItem,
}

#[derive(Debug, Clone)]
pub struct EmbeddingFixture {
    path: PathBuf,
    records: HashMap<String, EmbeddingItem>,
    header: Option<serde_json::Value>,
}

impl EmbeddingFixture {
    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let err = |line: usize, message: String| ProviderError::Fixture {
            path: path.to_path_buf(),
            line,
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(0, e.to_string()))?;
        let mut records = HashMap::new();
        let mut header = None;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(line).map_err(|e| err(line_no, e.to_string()))?;
            if i == 0 && value.get("text").is_none() {
                header = Some(value);
                continue;
            }
            let record: Record = serde_json::from_value(value).map_err(|e| err(line_no, e.to_string()))?;
            let text = record.text.ok_or_else(|| err(line_no, "record has no \"text\" field".into()))?;
            let item = record.item;
            match (&item.wordpieces, &item.token_vectors) {
                (Some(w), Some(t)) if w.len() != t.len() => {
                    return Err(err(
                        line_no,
                        format!("{} wordpieces but {} token vectors", w.len(), t.len()),
                    ));
                }
                (Some(_), None) | (None, Some(_)) => {
                    return Err(err(line_no, "wordpieces and token_vectors must appear together".into()));
                }
                _ => {}
            }
            item.dim().map_err(|m| err(line_no, m))?;
            let finite = item.sentence_vector.iter().flatten().all(|v| v.is_finite())
                && item.token_vectors.iter().flatten().flatten().all(|v| v.is_finite());
            if !finite {
                return Err(err(line_no, "non-finite vector component".into()));
            }
            if let Some(previous) = records.get(&text) {
                if previous != &item {
                    return Err(err(line_no, format!("conflicting duplicate record for {text:?}")));
                }
            }
            records.insert(text, item);
        }
        Ok(Self {
            path: path.to_path_buf(),
            records,
            header,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn header(&self) -> Option<&serde_json::Value> {
        self.header.as_ref()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, text: &str) -> Option<&EmbeddingItem> {
        self.records.get(text)
    }

    pub(crate) fn lookup(
        &self,
        provider: &str,
        chunk: &[(usize, &str)],
        level: EmbeddingLevel,
    ) -> Result<Vec<EmbeddingItem>, ProviderError> {
        chunk
            .iter()
            .map(|&(index, text)| {
                let missing = || ProviderError::MissingEmbedding {
                    provider: provider.to_string(),
                    index,
                    text: text.to_string(),
                };
                let record = self.records.get(text).ok_or_else(missing)?;
                record.project(level).map_err(|_| missing())
            })
            .collect()
    }
}
