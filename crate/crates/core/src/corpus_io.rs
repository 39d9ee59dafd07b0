//! Loading evaluation data: test sets, system outputs, human judgments and
//! paraphrase pairs.
//!
//! Layouts:
//! * test sets and system outputs: plain UTF-8, one segment per line; segment
//!   ids are 1-based line numbers
//! * DA scores: CSV `system,score` (optional `system,score` header)
//! * win ratios: CSV `system,ratio` with ratios in [0, 1]
//! * daRR pairs: whitespace-separated `segment better worse`
//! * paraphrase pairs: TSV with header columns `id sentence1 sentence2 label`
//!
//! Every cross-reference is validated here, so downstream code can assume
//! system and segment ids resolve.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::textnorm::RawSegment;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("empty test set: {0}")]
    Empty(PathBuf),
    #[error("alignment error: {left} has {left_count} lines but {right} has {right_count}")]
    Alignment {
        left: PathBuf,
        left_count: usize,
        right: PathBuf,
        right_count: usize,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: unknown system {system:?}")]
    UnknownSystem {
        path: PathBuf,
        line: usize,
        system: String,
    },
    #[error("{path}:{line}: unknown segment {segment:?}")]
    UnknownSegment {
        path: PathBuf,
        line: usize,
        segment: String,
    },
    #[error("{path}: missing column {column:?}")]
    MissingColumn { path: PathBuf, column: String },
    #[error("invalid language pair {0:?} (expected src-tgt, e.g. en-de)")]
    LanguagePair(String),
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LanguagePair {
    pub src: String,
    pub tgt: String,
}

impl LanguagePair {
    pub fn new(src: impl Into<String>, tgt: impl Into<String>) -> Self {
        Self {
            src: src.into(),
            tgt: tgt.into(),
        }
    }
}

impl fmt::Display for LanguagePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.src, self.tgt)
    }
}

impl FromStr for LanguagePair {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('-') {
            Some((src, tgt)) if !src.is_empty() && !tgt.is_empty() && !tgt.contains('-') => {
                Ok(Self::new(src, tgt))
            }
            _ => Err(CorpusError::LanguagePair(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSet {
    pub pair: LanguagePair,
    pub sources: Vec<RawSegment>,
    pub references: Option<Vec<RawSegment>>,
}

impl TestSet {
    pub fn from_lines<S: AsRef<str>>(pair: LanguagePair, lines: &[S]) -> Self {
        Self {
            sources: to_segments(lines, &pair.src),
            references: None,
            pair,
        }
    }

    pub fn segment_ids(&self) -> impl Iterator<Item = &str> {
        self.sources.iter().map(|s| s.id.as_str())
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    /// The source side as it would be written back to disk.
    pub fn source_text(&self) -> String {
        segments_text(&self.sources)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSubmission {
    pub system_id: String,
    pub pair: LanguagePair,
    pub outputs: Vec<RawSegment>,
}

impl SystemSubmission {
    pub fn text(&self) -> String {
        segments_text(&self.outputs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DarrPair {
    pub segment_id: String,
    pub better: String,
    pub worse: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HumanJudgmentSet {
    /// Mean standardized DA score per system.
    pub da_system_scores: BTreeMap<String, f64>,
    pub darr_pairs: Vec<DarrPair>,
    /// WMT12-style ratio of wins per system.
    pub win_ratios: Option<BTreeMap<String, f64>>,
}

/// One paraphrase-identification example; `label` is 1 for paraphrases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParaphrasePair {
    pub id: String,
    pub sentence1: String,
    pub sentence2: String,
    pub label: u8,
}

impl ParaphrasePair {
    pub fn is_paraphrase(&self) -> bool {
        self.label == 1
    }
}

/// Known system and segment ids that judgment files may refer to.
#[derive(Debug, Clone, Default)]
pub struct Referents {
    pub systems: BTreeSet<String>,
    pub segments: BTreeSet<String>,
}

impl Referents {
    pub fn new<S, G>(systems: S, segments: G) -> Self
    where
        S: IntoIterator,
        S::Item: Into<String>,
        G: IntoIterator,
        G::Item: Into<String>,
    {
        Self {
            systems: systems.into_iter().map(Into::into).collect(),
            segments: segments.into_iter().map(Into::into).collect(),
        }
    }
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Splits on LF, tolerating CRLF, without inventing a final empty line.
fn split_lines(text: &str) -> Vec<&str> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.is_empty() && text.len() <= 1 {
        return Vec::new();
    }
    body.split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .collect()
}

fn to_segments<S: AsRef<str>>(lines: &[S], lang: &str) -> Vec<RawSegment> {
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| RawSegment::new((i + 1).to_string(), l.as_ref(), lang))
        .collect()
}

fn segments_text(segments: &[RawSegment]) -> String {
    let mut out = String::new();
    for s in segments {
        out.push_str(&s.text);
        out.push('\n');
    }
    out
}

fn read_segments(path: &Path) -> Result<Vec<String>, CorpusError> {
    let text = read(path)?;
    let lines: Vec<String> = split_lines(&text).into_iter().map(str::to_string).collect();
    if lines.is_empty() {
        return Err(CorpusError::Empty(path.to_path_buf()));
    }
    Ok(lines)
}

/// Loads a source file and, optionally, aligned references.
pub fn load_testset(
    source: &Path,
    pair: LanguagePair,
    references: Option<&Path>,
) -> Result<TestSet, CorpusError> {
    let lines = read_segments(source)?;
    let sources = to_segments(&lines, &pair.src);
    let references = match references {
        Some(path) => {
            let refs = read_segments(path)?;
            if refs.len() != lines.len() {
                return Err(CorpusError::Alignment {
                    left: source.to_path_buf(),
                    left_count: lines.len(),
                    right: path.to_path_buf(),
                    right_count: refs.len(),
                });
            }
            Some(to_segments(&refs, &pair.tgt))
        }
        None => None,
    };
    Ok(TestSet {
        pair,
        sources,
        references,
    })
}

/// Loads one system's outputs; the system id is the file stem.
pub fn load_system_outputs(path: &Path, testset: &TestSet) -> Result<SystemSubmission, CorpusError> {
    let system_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    load_system_outputs_as(path, &system_id, testset)
}

pub fn load_system_outputs_as(
    path: &Path,
    system_id: &str,
    testset: &TestSet,
) -> Result<SystemSubmission, CorpusError> {
    let text = read(path)?;
    let lines = split_lines(&text);
    if lines.len() != testset.len() {
        return Err(CorpusError::Alignment {
            left: PathBuf::from(format!("{} source", testset.pair)),
            left_count: testset.len(),
            right: path.to_path_buf(),
            right_count: lines.len(),
        });
    }
    Ok(SystemSubmission {
        system_id: system_id.to_string(),
        pair: testset.pair.clone(),
        outputs: to_segments(&lines, &testset.pair.tgt),
    })
}

fn csv_records(path: &Path, delimiter: u8) -> Result<Vec<(usize, csv::StringRecord)>, CorpusError> {
    let text = read(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(delimiter)
        .quoting(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        out.push((line, record));
    }
    Ok(out)
}

fn system_score_csv(
    path: &Path,
    referents: &Referents,
    what: &str,
) -> Result<BTreeMap<String, f64>, CorpusError> {
    let mut scores = BTreeMap::new();
    for (idx, (line, record)) in csv_records(path, b',')?.into_iter().enumerate() {
        let system = record.get(0).unwrap_or("").trim();
        if idx == 0 && system.eq_ignore_ascii_case("system") {
            continue;
        }
        let raw = record
            .get(1)
            .ok_or_else(|| parse_err(path, line, format!("expected `system,{what}`")))?
            .trim();
        let score: f64 = raw
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| parse_err(path, line, format!("malformed {what} {raw:?}")))?;
        if !referents.systems.contains(system) {
            return Err(CorpusError::UnknownSystem {
                path: path.to_path_buf(),
                line,
                system: system.to_string(),
            });
        }
        if scores.insert(system.to_string(), score).is_some() {
            return Err(parse_err(path, line, format!("duplicate system {system:?}")));
        }
    }
    Ok(scores)
}

/// Parses daRR pairs, validating system and segment ids.
pub fn load_darr(path: &Path, referents: &Referents) -> Result<Vec<DarrPair>, CorpusError> {
    let text = read(path)?;
    let mut pairs = Vec::new();
    for (i, raw) in split_lines(&text).into_iter().enumerate() {
        let line = i + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() || fields[0].starts_with('#') {
            continue;
        }
        let [segment, better, worse] = fields[..] else {
            return Err(parse_err(path, line, "expected `segment better worse`"));
        };
        if !referents.segments.contains(segment) {
            return Err(CorpusError::UnknownSegment {
                path: path.to_path_buf(),
                line,
                segment: segment.to_string(),
            });
        }
        for system in [better, worse] {
            if !referents.systems.contains(system) {
                return Err(CorpusError::UnknownSystem {
                    path: path.to_path_buf(),
                    line,
                    system: system.to_string(),
                });
            }
        }
        if better == worse {
            return Err(parse_err(path, line, "better and worse system are the same"));
        }
        pairs.push(DarrPair {
            segment_id: segment.to_string(),
            better: better.to_string(),
            worse: worse.to_string(),
        });
    }
    Ok(pairs)
}

/// Loads system-level DA scores and, when given, daRR pairs.
pub fn load_human_judgments(
    da_path: &Path,
    darr_path: Option<&Path>,
    referents: &Referents,
) -> Result<HumanJudgmentSet, CorpusError> {
    let da_system_scores = system_score_csv(da_path, referents, "score")?;
    let darr_pairs = match darr_path {
        Some(p) => load_darr(p, referents)?,
        None => Vec::new(),
    };
    Ok(HumanJudgmentSet {
        da_system_scores,
        darr_pairs,
        win_ratios: None,
    })
}

/// WMT12-style ratios of wins, each in [0, 1].
pub fn load_win_ratios(path: &Path, referents: &Referents) -> Result<BTreeMap<String, f64>, CorpusError> {
    let ratios = system_score_csv(path, referents, "ratio")?;
    if let Some((system, r)) = ratios.iter().find(|(_, r)| !(0.0..=1.0).contains(*r)) {
        return Err(parse_err(path, 0, format!("win ratio {r} for {system:?} outside [0, 1]")));
    }
    Ok(ratios)
}

/// Loads a paraphrase TSV (`id sentence1 sentence2 label`, header required;
/// column order is free).
pub fn load_paws(path: &Path) -> Result<Vec<ParaphrasePair>, CorpusError> {
    let records = csv_records(path, b'\t')?;
    let Some(((_, header), rows)) = records.split_first() else {
        return Err(CorpusError::Empty(path.to_path_buf()));
    };
    let column = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CorpusError::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let (id, s1, s2, label) = (column("id")?, column("sentence1")?, column("sentence2")?, column("label")?);
    rows.iter()
        .map(|(line, record)| {
            let field = |i: usize| {
                record
                    .get(i)
                    .map(str::to_string)
                    .ok_or_else(|| parse_err(path, *line, format!("row has no column {}", i + 1)))
            };
            let raw_label = field(label)?;
            let label = match raw_label.trim() {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(parse_err(path, *line, format!("label {other:?} is not 0 or 1")));
                }
            };
            Ok(ParaphrasePair {
                id: field(id)?,
                sentence1: field(s1)?,
                sentence2: field(s2)?,
                label,
            })
        })
        .collect()
}

/// A single raw (unstandardized) DA judgment, for building daRR pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDaJudgment {
    pub segment_id: String,
    pub system_id: String,
    pub score: f64,
}

/// Builds daRR pairs from raw DA judgments: two systems form a pair on a
/// segment when their scores differ by more than `min_gap` points. This
/// follows the WMT19 metrics-task convention (default gap 25) and is not
/// needed when precomputed pairs are available.
pub fn build_darr(judgments: &[RawDaJudgment], min_gap: f64) -> Vec<DarrPair> {
    let mut by_segment: BTreeMap<&str, Vec<&RawDaJudgment>> = BTreeMap::new();
    for j in judgments {
        by_segment.entry(&j.segment_id).or_default().push(j);
    }
    let mut pairs = Vec::new();
    for (segment, js) in by_segment {
        for (i, a) in js.iter().enumerate() {
            for b in &js[i + 1..] {
                if a.system_id == b.system_id || (a.score - b.score).abs() <= min_gap {
                    continue;
                }
                let (better, worse) = if a.score > b.score { (a, b) } else { (b, a) };
                pairs.push(DarrPair {
                    segment_id: segment.to_string(),
                    better: better.system_id.clone(),
                    worse: worse.system_id.clone(),
                });
            }
        }
    }
    pairs
}

pub const DEFAULT_DARR_GAP: f64 = 25.0;
