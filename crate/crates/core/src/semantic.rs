//! Embedding-based similarity: sentence-vector cosine and the idf-weighted
//! greedy-match F-score over wordpiece vectors.
//!
//! Embeddings come from an external provider; nothing here runs a model.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SemanticError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("non-finite value in embedding")]
    NonFinite,
    #[error("{wordpieces} wordpieces but {vectors} vectors")]
    RowCountMismatch { wordpieces: usize, vectors: usize },
    #[error("token embeddings are empty")]
    Empty,
    #[error("all wordpieces have zero idf weight on the {0} side")]
    DegenerateIdf(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceEmbedding {
    pub vector: Vec<f64>,
    pub provider_id: String,
}

impl SentenceEmbedding {
    pub fn new(vector: Vec<f64>, provider_id: impl Into<String>) -> Result<Self, SemanticError> {
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(SemanticError::NonFinite);
        }
        Ok(Self {
            vector,
            provider_id: provider_id.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn cosine(&self, other: &SentenceEmbedding) -> Result<f64, SemanticError> {
        cosine_similarity(&self.vector, &other.vector)
    }
}

/// Wordpieces of one sentence with one vector per wordpiece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEmbeddings {
    wordpieces: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

impl TokenEmbeddings {
    pub fn new(wordpieces: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self, SemanticError> {
        if wordpieces.len() != vectors.len() {
            return Err(SemanticError::RowCountMismatch {
                wordpieces: wordpieces.len(),
                vectors: vectors.len(),
            });
        }
        if let Some(first) = vectors.first() {
            for row in &vectors {
                if row.len() != first.len() {
                    return Err(SemanticError::DimensionMismatch {
                        left: first.len(),
                        right: row.len(),
                    });
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(SemanticError::NonFinite);
                }
            }
        }
        Ok(Self { wordpieces, vectors })
    }

    pub fn wordpieces(&self) -> &[String] {
        &self.wordpieces
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.wordpieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wordpieces.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.vectors.first().map(Vec::len)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `dot(a, b) / (|a| |b|)`, clamped to [-1, 1].
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, SemanticError> {
    if a.len() != b.len() {
        return Err(SemanticError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(SemanticError::ZeroNorm);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Inverse document frequency of wordpieces over the L input sentences of
/// an evaluation run: `idf(t) = ln(L / df(t))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfTable {
    weights: BTreeMap<String, f64>,
    doc_freq: BTreeMap<String, usize>,
    corpus_size: usize,
    default_weight: f64,
}

impl IdfTable {
    /// Builds the table from wordpiece sequences, one per input sentence.
    /// Unseen wordpieces default to `ln L`, the weight of a wordpiece found
    /// in a single sentence.
    pub fn build<S, T>(inputs: &[S]) -> Self
    where
        S: AsRef<[T]>,
        T: AsRef<str>,
    {
        let corpus_size = inputs.len();
        let mut doc_freq: BTreeMap<String, usize> = BTreeMap::new();
        for sentence in inputs {
            let distinct: HashSet<&str> = sentence.as_ref().iter().map(AsRef::as_ref).collect();
            for piece in distinct {
                *doc_freq.entry(piece.to_string()).or_insert(0) += 1;
            }
        }
        let l = corpus_size.max(1) as f64;
        let weights = doc_freq
            .iter()
            .map(|(piece, &df)| (piece.clone(), (l / df as f64).ln()))
            .collect();
        Self {
            weights,
            doc_freq,
            corpus_size,
            default_weight: l.ln(),
        }
    }

    /// A table that weights every wordpiece the same.
    pub fn uniform(weight: f64) -> Self {
        Self {
            weights: BTreeMap::new(),
            doc_freq: BTreeMap::new(),
            corpus_size: 0,
            default_weight: weight,
        }
    }

    pub fn with_default_weight(mut self, weight: f64) -> Self {
        self.default_weight = weight;
        self
    }

    pub fn weight(&self, wordpiece: &str) -> f64 {
        self.weights.get(wordpiece).copied().unwrap_or(self.default_weight)
    }

    pub fn corpus_size(&self) -> usize {
        self.corpus_size
    }

    pub fn default_weight(&self) -> f64 {
        self.default_weight
    }

    /// `(wordpiece, document frequency, weight)` in wordpiece order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, usize, f64)> + '_ {
        self.doc_freq
            .iter()
            .map(|(piece, &df)| (piece.as_str(), df, self.weights[piece]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyMatch {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

fn unit_rows(emb: &TokenEmbeddings) -> Result<Vec<Vec<f64>>, SemanticError> {
    emb.vectors
        .iter()
        .map(|row| {
            let n = norm(row);
            if n == 0.0 {
                Err(SemanticError::ZeroNorm)
            } else {
                Ok(row.iter().map(|v| v / n).collect())
            }
        })
        .collect()
}

/// Idf-weighted greedy matching of wordpiece vectors.
///
/// Recall matches every wordpiece of `x` to its most similar wordpiece in
/// `xhat`; precision does the reverse. Both sides are weighted with the same
/// idf table, built over the input sentences.
pub fn greedy_match_fscore(
    x: &TokenEmbeddings,
    xhat: &TokenEmbeddings,
    idf: &IdfTable,
) -> Result<GreedyMatch, SemanticError> {
    if x.is_empty() || xhat.is_empty() {
        return Err(SemanticError::Empty);
    }
    let (dx, dy) = (x.dim().unwrap_or(0), xhat.dim().unwrap_or(0));
    if dx != dy {
        return Err(SemanticError::DimensionMismatch { left: dx, right: dy });
    }
    let xs = unit_rows(x)?;
    let ys = unit_rows(xhat)?;
    let sim: Vec<Vec<f64>> = xs
        .iter()
        .map(|a| ys.iter().map(|b| dot(a, b).clamp(-1.0, 1.0)).collect())
        .collect();

    let weighted = |pieces: &[String], best: &dyn Fn(usize) -> f64, side: &'static str| {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, piece) in pieces.iter().enumerate() {
            let w = idf.weight(piece);
            num += w * best(i);
            den += w;
        }
        if den == 0.0 {
            Err(SemanticError::DegenerateIdf(side))
        } else {
            Ok(num / den)
        }
    };
    let row_max = |i: usize| sim[i].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let col_max = |j: usize| sim.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max);

    let recall = weighted(&x.wordpieces, &row_max, "input")?;
    let precision = weighted(&xhat.wordpieces, &col_max, "round-trip")?;
    let f = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(GreedyMatch {
        precision,
        recall,
        f,
    })
}
