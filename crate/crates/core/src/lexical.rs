//! Surface-level similarity: corpus BLEU (exponential smoothing), Moses-style
//! smoothed sentence BLEU, and character n-gram F-score (chrF) at sentence
//! and corpus level.
//!
//! Every score is on a 0–100 scale. Corpus scores are computed from summed
//! sufficient statistics, never by averaging segment scores.

use std::collections::HashMap;
use std::iter::Sum;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::textnorm::{Scheme, TokenSequence};

pub const BLEU_ORDER: usize = 4;
pub const CHRF_ORDER: usize = 6;
pub const CHRF_BETA: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LexicalError {
    #[error("hypothesis has no tokens")]
    EmptyHypothesis,
    #[error("reference has no tokens")]
    EmptyReference,
    #[error("corpus contains no segments")]
    EmptyCorpus,
    #[error("both hypothesis and reference are empty")]
    BothEmpty,
    #[error("hypothesis and reference use different schemes ({hyp} vs {reference})")]
    SchemeMismatch { hyp: Scheme, reference: Scheme },
    #[error("chrF needs character streams, got {0}")]
    NotCharStream(Scheme),
}

/// Multiset of the contiguous `order`-token windows of a sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramCounts<'a> {
    pub order: usize,
    pub counts: HashMap<&'a [String], u64>,
}

impl<'a> NGramCounts<'a> {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Size of the multiset intersection (clipped matches).
    pub fn clipped_matches(&self, other: &NGramCounts<'_>) -> u64 {
        self.counts
            .iter()
            .map(|(gram, &count)| count.min(other.counts.get(gram).copied().unwrap_or(0)))
            .sum()
    }
}

/// Counts every contiguous `n`-token window. `n` must be at least 1.
pub fn ngram_counts(tokens: &[String], n: usize) -> NGramCounts<'_> {
    assert!(n >= 1, "n-gram order must be at least 1");
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    NGramCounts { order: n, counts }
}

/// Sufficient statistics for BLEU-4. Additive across segments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuStats {
    pub matched: [u64; BLEU_ORDER],
    pub totals: [u64; BLEU_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl BleuStats {
    pub fn from_pair(hyp: &[String], reference: &[String]) -> Self {
        let mut stats = BleuStats {
            hyp_len: hyp.len() as u64,
            ref_len: reference.len() as u64,
            ..Default::default()
        };
        for n in 1..=BLEU_ORDER {
            let h = ngram_counts(hyp, n);
            let r = ngram_counts(reference, n);
            stats.matched[n - 1] = h.clipped_matches(&r);
            stats.totals[n - 1] = h.total();
        }
        stats
    }

    fn brevity_penalty(&self) -> f64 {
        if self.hyp_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        } else {
            1.0
        }
    }

    /// Corpus BLEU with mteval "exp" smoothing: the k-th order without any
    /// match gets precision `1 / (2^k * total)`.
    pub fn exp_smoothed_score(&self) -> Result<f64, LexicalError> {
        if self.totals[0] == 0 {
            return Err(LexicalError::EmptyHypothesis);
        }
        let mut smooth = 1.0;
        let mut log_precision = 0.0;
        for n in 0..BLEU_ORDER {
            if self.totals[n] == 0 {
                // too short for this order: sacreBLEU floors log(0), score is 0
                return Ok(0.0);
            }
            let p = if self.matched[n] == 0 {
                smooth *= 2.0;
                1.0 / (smooth * self.totals[n] as f64)
            } else {
                self.matched[n] as f64 / self.totals[n] as f64
            };
            log_precision += p.ln();
        }
        Ok(100.0 * self.brevity_penalty() * (log_precision / BLEU_ORDER as f64).exp())
    }

    /// Sentence BLEU as computed by Moses `sentence-bleu`: one is added to
    /// the match count and the total of every order.
    pub fn plus_one_score(&self) -> Result<f64, LexicalError> {
        if self.hyp_len == 0 {
            return Err(LexicalError::EmptyHypothesis);
        }
        if self.ref_len == 0 {
            return Err(LexicalError::EmptyReference);
        }
        let mut log_bleu = 0.0;
        for n in 0..BLEU_ORDER {
            log_bleu += (self.matched[n] as f64 + 1.0).ln() - (self.totals[n] as f64 + 1.0).ln();
        }
        log_bleu /= BLEU_ORDER as f64;
        let brevity = 1.0 - self.ref_len as f64 / self.hyp_len as f64;
        if brevity < 0.0 {
            log_bleu += brevity;
        }
        Ok(100.0 * log_bleu.exp())
    }
}

impl AddAssign for BleuStats {
    fn add_assign(&mut self, rhs: Self) {
        for n in 0..BLEU_ORDER {
            self.matched[n] += rhs.matched[n];
            self.totals[n] += rhs.totals[n];
        }
        self.hyp_len += rhs.hyp_len;
        self.ref_len += rhs.ref_len;
    }
}

impl Add for BleuStats {
    type Output = Self;

    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl Sum for BleuStats {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(BleuStats::default(), Add::add)
    }
}

fn same_scheme(hyp: &TokenSequence, reference: &TokenSequence) -> Result<(), LexicalError> {
    if hyp.scheme != reference.scheme {
        return Err(LexicalError::SchemeMismatch {
            hyp: hyp.scheme,
            reference: reference.scheme,
        });
    }
    Ok(())
}

/// Corpus-level BLEU over (hypothesis, reference) pairs.
pub fn corpus_bleu<'a, I>(pairs: I) -> Result<f64, LexicalError>
where
    I: IntoIterator<Item = (&'a TokenSequence, &'a TokenSequence)>,
{
    let mut stats = BleuStats::default();
    let mut segments = 0usize;
    for (hyp, reference) in pairs {
        same_scheme(hyp, reference)?;
        stats += BleuStats::from_pair(hyp.as_slice(), reference.as_slice());
        segments += 1;
    }
    if segments == 0 {
        return Err(LexicalError::EmptyCorpus);
    }
    stats.exp_smoothed_score()
}

/// Smoothed sentence-level BLEU (add-one on all orders).
pub fn sentence_bleu(hyp: &TokenSequence, reference: &TokenSequence) -> Result<f64, LexicalError> {
    same_scheme(hyp, reference)?;
    BleuStats::from_pair(hyp.as_slice(), reference.as_slice()).plus_one_score()
}

/// Per-order character n-gram statistics for chrF. Additive across segments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChrfStats {
    /// `[hyp_total, ref_total, common]` for orders 1..=max.
    pub orders: Vec<[u64; 3]>,
}

impl ChrfStats {
    pub fn zeros(max_order: usize) -> Self {
        Self {
            orders: vec![[0; 3]; max_order],
        }
    }

    pub fn from_pair(hyp: &[String], reference: &[String], max_order: usize) -> Self {
        let orders = (1..=max_order)
            .map(|n| {
                let h = ngram_counts(hyp, n);
                let r = ngram_counts(reference, n);
                [h.total(), r.total(), h.clipped_matches(&r)]
            })
            .collect();
        Self { orders }
    }

    pub fn is_empty(&self) -> bool {
        self.orders.iter().all(|o| o[0] == 0 && o[1] == 0)
    }

    /// Precision and recall averaged over the orders where both sides have
    /// n-grams.
    pub fn average_precision_recall(&self) -> (f64, f64) {
        let mut precision = 0.0;
        let mut recall = 0.0;
        let mut effective = 0usize;
        for &[hyp, reference, common] in &self.orders {
            if hyp > 0 && reference > 0 {
                precision += common as f64 / hyp as f64;
                recall += common as f64 / reference as f64;
                effective += 1;
            }
        }
        if effective == 0 {
            return (0.0, 0.0);
        }
        (precision / effective as f64, recall / effective as f64)
    }

    pub fn score(&self, beta: f64) -> f64 {
        let (p, r) = self.average_precision_recall();
        f_beta(p, r, beta) * 100.0
    }
}

impl AddAssign<&ChrfStats> for ChrfStats {
    fn add_assign(&mut self, rhs: &ChrfStats) {
        if self.orders.len() < rhs.orders.len() {
            self.orders.resize(rhs.orders.len(), [0; 3]);
        }
        for (mine, theirs) in self.orders.iter_mut().zip(&rhs.orders) {
            for k in 0..3 {
                mine[k] += theirs[k];
            }
        }
    }
}

pub fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    if precision + recall == 0.0 {
        return 0.0;
    }
    let b2 = beta * beta;
    (1.0 + b2) * precision * recall / (b2 * precision + recall)
}

fn char_streams(hyp: &TokenSequence, reference: &TokenSequence) -> Result<(), LexicalError> {
    for seq in [hyp, reference] {
        if seq.scheme != Scheme::CharStream {
            return Err(LexicalError::NotCharStream(seq.scheme));
        }
    }
    Ok(())
}

/// Sentence-level chrF3 with character n-grams up to 6.
pub fn chrf(hyp: &TokenSequence, reference: &TokenSequence) -> Result<f64, LexicalError> {
    chrf_with(hyp, reference, CHRF_ORDER, CHRF_BETA)
}

pub fn chrf_with(
    hyp: &TokenSequence,
    reference: &TokenSequence,
    max_order: usize,
    beta: f64,
) -> Result<f64, LexicalError> {
    char_streams(hyp, reference)?;
    let stats = ChrfStats::from_pair(hyp.as_slice(), reference.as_slice(), max_order);
    if stats.is_empty() {
        return Err(LexicalError::BothEmpty);
    }
    Ok(stats.score(beta))
}

/// Corpus-level chrF3 from summed per-order counts.
pub fn chrf_corpus<'a, I>(pairs: I) -> Result<f64, LexicalError>
where
    I: IntoIterator<Item = (&'a TokenSequence, &'a TokenSequence)>,
{
    let mut stats = ChrfStats::zeros(CHRF_ORDER);
    let mut segments = 0usize;
    for (hyp, reference) in pairs {
        char_streams(hyp, reference)?;
        stats += &ChrfStats::from_pair(hyp.as_slice(), reference.as_slice(), CHRF_ORDER);
        segments += 1;
    }
    if segments == 0 {
        return Err(LexicalError::EmptyCorpus);
    }
    if stats.is_empty() {
        return Err(LexicalError::BothEmpty);
    }
    Ok(stats.score(CHRF_BETA))
}

/// Rounds a score to the four decimals used in every report.
pub fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}
