//! Round trips and metric scoring.
//!
//! A system's forward translations are translated back into the source
//! language by a BT provider; each input sentence is then compared with its
//! round trip by the configured metrics.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use rttqe_core::corpus_io::{SystemSubmission, TestSet};
use rttqe_core::lexical::{self, BleuStats};
use rttqe_core::semantic::{greedy_match_fscore, IdfTable, SemanticError, TokenEmbeddings};
use rttqe_core::textnorm::{char_stream, tokenize_for_lang, RawSegment, Scheme, TokenSequence};
use serde::{Deserialize, Serialize};

use crate::providers::{CacheKey, Provider, ProviderError};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("system {system}, segment {segment}: {source}")]
    Segment {
        system: String,
        segment: String,
        #[source]
        source: ProviderError,
    },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("metric {metric} needs {resource}, which is not configured")]
    MissingResource { metric: MetricId, resource: &'static str },
    #[error("{0} is undefined for an empty record list")]
    NoRecords(MetricId),
    #[error("records mix systems {0:?} and {1:?}")]
    MixedSystems(String, String),
    #[error("submission {system} has {got} segments, test set has {expected}")]
    Misaligned { system: String, expected: usize, got: usize },
    #[error("semantic scoring failed on segment {segment}: {source}")]
    Semantic {
        segment: String,
        #[source]
        source: SemanticError,
    },
}

impl PipelineError {
    pub fn provider_error(&self) -> Option<&ProviderError> {
        match self {
            Self::Segment { source, .. } | Self::Provider(source) => Some(source),
            _ => None,
        }
    }
}

/// The five round-trip metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricId {
    #[serde(rename = "rtt-bleu")]
    RttBleu,
    #[serde(rename = "rtt-sentbleu")]
    RttSentBleu,
    #[serde(rename = "rtt-chrf")]
    RttChrf,
    #[serde(rename = "rtt-sbert")]
    RttSbert,
    #[serde(rename = "rtt-bertscore")]
    RttBertScore,
}

impl MetricId {
    pub const ALL: [MetricId; 5] = [
        MetricId::RttBleu,
        MetricId::RttSentBleu,
        MetricId::RttChrf,
        MetricId::RttSbert,
        MetricId::RttBertScore,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::RttBleu => "rtt-bleu",
            Self::RttSentBleu => "rtt-sentbleu",
            Self::RttChrf => "rtt-chrf",
            Self::RttSbert => "rtt-sbert",
            Self::RttBertScore => "rtt-bertscore",
        }
    }

    pub fn aggregation(self) -> Aggregation {
        match self {
            Self::RttBleu | Self::RttChrf => Aggregation::CorpusLevel,
            _ => Aggregation::MeanOfSegments,
        }
    }

    pub fn is_semantic(self) -> bool {
        matches!(self, Self::RttSbert | Self::RttBertScore)
    }

    pub fn valid_names() -> String {
        Self::ALL.map(MetricId::as_str).join(", ")
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown metric {0:?} (valid: {valid})", valid = MetricId::valid_names())]
pub struct UnknownMetric(pub String);

impl FromStr for MetricId {
    type Err = UnknownMetric;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownMetric(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    MeanOfSegments,
    CorpusLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTripRecord {
    pub system_id: String,
    pub segment_id: String,
    /// The source sentence x.
    pub input: RawSegment,
    pub ft_output: RawSegment,
    /// x̂: the forward output translated back into the source language.
    pub round_trip: RawSegment,
    pub bt_provider_id: String,
    pub cache_key: CacheKey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricScoreSet {
    pub format_version: u32,
    pub metric_id: MetricId,
    pub system_id: String,
    pub aggregation: Aggregation,
    pub system_score: f64,
    pub segment_ids: Vec<String>,
    pub segment_scores: Vec<f64>,
}

impl MetricScoreSet {
    fn from_segments(metric: MetricId, system_id: &str, segment_ids: Vec<String>, scores: Vec<f64>, system_score: Option<f64>) -> Self {
        let system_score = system_score.unwrap_or_else(|| {
            if scores.is_empty() {
                0.0
            } else {
                scores.iter().sum::<f64>() / scores.len() as f64
            }
        });
        Self {
            format_version: FORMAT_VERSION,
            metric_id: metric,
            system_id: system_id.to_string(),
            aggregation: metric.aggregation(),
            system_score,
            segment_ids,
            segment_scores: scores,
        }
    }
}

/// Translates a submission back into the source language.
pub fn run_round_trip(
    submission: &SystemSubmission,
    testset: &TestSet,
    bt: &Provider,
) -> Result<Vec<RoundTripRecord>, PipelineError> {
    if submission.outputs.len() != testset.sources.len() {
        return Err(PipelineError::Misaligned {
            system: submission.system_id.clone(),
            expected: testset.sources.len(),
            got: submission.outputs.len(),
        });
    }
    let (src, tgt) = (&testset.pair.src, &testset.pair.tgt);
    let texts: Vec<String> = submission.outputs.iter().map(|s| s.text.clone()).collect();
    let round_trips = bt.translate_batch(&texts, tgt, src).map_err(|source| {
        match source_index(&source) {
            Some(i) => PipelineError::Segment {
                system: submission.system_id.clone(),
                segment: testset.sources[i].id.clone(),
                source,
            },
            None => PipelineError::Provider(source),
        }
    })?;
    Ok(testset
        .sources
        .iter()
        .zip(&submission.outputs)
        .zip(round_trips)
        .map(|((input, ft), rt)| RoundTripRecord {
            system_id: submission.system_id.clone(),
            segment_id: input.id.clone(),
            input: input.clone(),
            ft_output: ft.clone(),
            round_trip: RawSegment::new(input.id.clone(), rt, src.clone()),
            bt_provider_id: bt.id().to_string(),
            cache_key: bt.translation_key(&ft.text, tgt, src),
        })
        .collect())
}

fn source_index(e: &ProviderError) -> Option<usize> {
    match e {
        ProviderError::Request { index, .. }
        | ProviderError::Protocol { index, .. }
        | ProviderError::MissingTranslation { index, .. }
        | ProviderError::MissingEmbedding { index, .. }
        | ProviderError::DimensionDrift { index, .. } => Some(*index),
        _ => None,
    }
}

/// What semantic metrics need beyond the records.
#[derive(Debug, Default)]
pub struct Resources<'a> {
    pub sentence: Option<&'a Provider>,
    pub token: Option<&'a Provider>,
    /// Idf over the input sentences, required by RTT-BERTScore.
    pub idf: Option<&'a IdfTable>,
}

/// Builds the idf table over the wordpieces of the input sentences.
pub fn build_idf(token: &Provider, inputs: &[String]) -> Result<IdfTable, ProviderError> {
    let embeddings = token.fetch_token_embeddings(inputs)?;
    let pieces: Vec<&[String]> = embeddings.iter().map(TokenEmbeddings::wordpieces).collect();
    Ok(IdfTable::build(&pieces))
}

fn words(text: &str, lang: &str) -> TokenSequence {
    tokenize_for_lang(text, lang, Scheme::TokIntl, true)
}

/// Smoothed sentence BLEU of `hyp` against `reference`; 0 when either side
/// is empty.
pub fn sentbleu_score(hyp: &str, reference: &str, lang: &str) -> f64 {
    lexical::sentence_bleu(&words(hyp, lang), &words(reference, lang)).unwrap_or(0.0)
}

pub fn chrf_score(hyp: &str, reference: &str) -> f64 {
    lexical::chrf(&char_stream(hyp), &char_stream(reference)).unwrap_or(0.0)
}

fn bleu_stats(r: &RoundTripRecord) -> BleuStats {
    let lang = &r.input.lang;
    BleuStats::from_pair(words(&r.round_trip.text, lang).as_slice(), words(&r.input.text, lang).as_slice())
}

fn is_blank(s: &str) -> bool {
    s.trim().is_empty()
}

/// Greedy-match F ×100. Falls back to uniform weights when every wordpiece
/// of a side has idf 0, which happens when the input corpus is tiny.
pub fn bertscore(x: &TokenEmbeddings, xhat: &TokenEmbeddings, idf: &IdfTable) -> Result<f64, SemanticError> {
    if x.is_empty() || xhat.is_empty() {
        return Ok(0.0);
    }
    let matched = match greedy_match_fscore(x, xhat, idf) {
        Err(SemanticError::DegenerateIdf(_)) => greedy_match_fscore(x, xhat, &IdfTable::uniform(1.0)),
        other => other,
    }?;
    Ok(100.0 * matched.f)
}

/// Scores one system's records with one metric.
pub fn score_metric(metric: MetricId, records: &[RoundTripRecord], resources: &Resources<'_>) -> Result<MetricScoreSet, PipelineError> {
    let first = records.first().ok_or(PipelineError::NoRecords(metric))?;
    if let Some(other) = records.iter().find(|r| r.system_id != first.system_id) {
        return Err(PipelineError::MixedSystems(first.system_id.clone(), other.system_id.clone()));
    }
    let system = first.system_id.as_str();
    let ids: Vec<String> = records.iter().map(|r| r.segment_id.clone()).collect();
    let set = match metric {
        MetricId::RttSentBleu => {
            let scores = records
                .par_iter()
                .map(|r| sentbleu_score(&r.round_trip.text, &r.input.text, &r.input.lang))
                .collect();
            MetricScoreSet::from_segments(metric, system, ids, scores, None)
        }
        MetricId::RttBleu => {
            let stats: Vec<BleuStats> = records.par_iter().map(bleu_stats).collect();
            let scores = stats.iter().map(|s| s.exp_smoothed_score().unwrap_or(0.0)).collect();
            let corpus = stats.iter().cloned().sum::<BleuStats>().exp_smoothed_score().unwrap_or(0.0);
            MetricScoreSet::from_segments(metric, system, ids, scores, Some(corpus))
        }
        MetricId::RttChrf => {
            let streams: Vec<(TokenSequence, TokenSequence)> = records
                .par_iter()
                .map(|r| (char_stream(&r.round_trip.text), char_stream(&r.input.text)))
                .collect();
            let scores = streams
                .par_iter()
                .map(|(h, x)| lexical::chrf(h, x).unwrap_or(0.0))
                .collect();
            let corpus = lexical::chrf_corpus(streams.iter().map(|(h, x)| (h, x))).unwrap_or(0.0);
            MetricScoreSet::from_segments(metric, system, ids, scores, Some(corpus))
        }
        MetricId::RttSbert => {
            let provider = resources.sentence.ok_or(PipelineError::MissingResource {
                metric,
                resource: "a sentence-embedding provider",
            })?;
            let inputs: Vec<String> = records.iter().map(|r| r.input.text.clone()).collect();
            let trips: Vec<String> = records.iter().map(|r| r.round_trip.text.clone()).collect();
            let xs = fetch_for(provider, &inputs, records, |p, t| p.fetch_sentence_embeddings(t))?;
            let ys = fetch_for(provider, &trips, records, |p, t| p.fetch_sentence_embeddings(t))?;
            let scores = records
                .par_iter()
                .zip(xs.par_iter().zip(&ys))
                .map(|(r, (x, y))| {
                    if is_blank(&r.input.text) || is_blank(&r.round_trip.text) {
                        return Ok(0.0);
                    }
                    x.cosine(y).map(|c| 100.0 * c).map_err(|source| PipelineError::Semantic {
                        segment: r.segment_id.clone(),
                        source,
                    })
                })
                .collect::<Result<Vec<f64>, _>>()?;
            MetricScoreSet::from_segments(metric, system, ids, scores, None)
        }
        MetricId::RttBertScore => {
            let provider = resources.token.ok_or(PipelineError::MissingResource {
                metric,
                resource: "a token-embedding provider",
            })?;
            let idf = resources.idf.ok_or(PipelineError::MissingResource {
                metric,
                resource: "an idf table over the inputs",
            })?;
            let inputs: Vec<String> = records.iter().map(|r| r.input.text.clone()).collect();
            let trips: Vec<String> = records.iter().map(|r| r.round_trip.text.clone()).collect();
            let xs = fetch_for(provider, &inputs, records, |p, t| p.fetch_token_embeddings(t))?;
            let ys = fetch_for(provider, &trips, records, |p, t| p.fetch_token_embeddings(t))?;
            let scores = records
                .par_iter()
                .zip(xs.par_iter().zip(&ys))
                .map(|(r, (x, y))| {
                    if is_blank(&r.input.text) || is_blank(&r.round_trip.text) {
                        return Ok(0.0);
                    }
                    bertscore(x, y, idf).map_err(|source| PipelineError::Semantic {
                        segment: r.segment_id.clone(),
                        source,
                    })
                })
                .collect::<Result<Vec<f64>, _>>()?;
            MetricScoreSet::from_segments(metric, system, ids, scores, None)
        }
    };
    Ok(set)
}

fn fetch_for<T>(
    provider: &Provider,
    texts: &[String],
    records: &[RoundTripRecord],
    fetch: impl Fn(&Provider, &[String]) -> Result<Vec<T>, ProviderError>,
) -> Result<Vec<T>, PipelineError> {
    fetch(provider, texts).map_err(|source| match source_index(&source) {
        Some(i) => PipelineError::Segment {
            system: records[i].system_id.clone(),
            segment: records[i].segment_id.clone(),
            source,
        },
        None => PipelineError::Provider(source),
    })
}

/// Compares ids so that numeric ids sort by value ("2" < "10") and others
/// lexically.
pub fn compare_segment_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

/// Segment ids from best to worst score; equal scores keep id order.
pub fn rank_segments(set: &MetricScoreSet) -> Vec<String> {
    let mut order: Vec<usize> = (0..set.segment_ids.len()).collect();
    order.sort_by(|&i, &j| {
        set.segment_scores[j]
            .total_cmp(&set.segment_scores[i])
            .then_with(|| compare_segment_ids(&set.segment_ids[i], &set.segment_ids[j]))
    });
    order.into_iter().map(|i| set.segment_ids[i].clone()).collect()
}
