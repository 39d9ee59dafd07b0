//! Meta-evaluation and paraphrase reports.
//!
//! Reports are plain files with no timestamps or paths in them, so the same
//! inputs always give byte-identical output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rttqe_core::corpus_io::{HumanJudgmentSet, ParaphrasePair};
use rttqe_core::meta_eval::{
    correlate_systems, da_variance_analysis, kendall_tau_darr, pr_auc, score_variance, topn_curve, CorrelationReport,
    MetaEvalError, PrCurve, SegmentScores, TauReport, TiePolicy, TopNPoint,
};
use rttqe_core::semantic::{IdfTable, TokenEmbeddings};
use serde::Serialize;

use crate::pipeline::{bertscore, chrf_score, sentbleu_score, Aggregation, MetricId, MetricScoreSet, FORMAT_VERSION};
use crate::providers::{Provider, ProviderError};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("systems {systems:?} have metric scores but no human score")]
    SystemMismatch { systems: Vec<String> },
    #[error("no human system scores: configure a DA file or win ratios")]
    NoHumanScores,
    #[error("{0} has no per-pair score and cannot be used for paraphrase detection")]
    NotPairwise(MetricId),
    #[error("metric {metric} needs {resource}")]
    MissingResource { metric: MetricId, resource: &'static str },
    #[error("paraphrase set has no positive labels")]
    NoPositives,
    #[error("paraphrase set is empty")]
    Empty,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("semantic scoring failed on pair {id}: {message}")]
    Semantic { id: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A computed value, or why it is not defined for this input.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Outcome<T> {
    Value(T),
    Undefined { undefined: String },
}

impl<T> Outcome<T> {
    fn undefined(reason: impl Into<String>) -> Self {
        Self::Undefined {
            undefined: reason.into(),
        }
    }

    pub fn value(&self) -> Option<&T> {
        match self {
            Self::Value(v) => Some(v),
            Self::Undefined { .. } => None,
        }
    }

    fn cell(&self, f: impl Fn(&T) -> String) -> String {
        match self {
            Self::Value(v) => f(v),
            Self::Undefined { undefined } => format!("undefined ({undefined})"),
        }
    }
}

fn reason(e: &MetaEvalError) -> String {
    match e {
        MetaEvalError::TooFew { needed, .. } => format!("n<{needed}"),
        MetaEvalError::Constant => "constant scores".into(),
        MetaEvalError::AllTied => "all pairs tied".into(),
        MetaEvalError::NoPairs => "no daRR pairs".into(),
        other => other.to_string(),
    }
}

fn outcome<T>(r: Result<T, MetaEvalError>) -> Result<Outcome<T>, MetaEvalError> {
    match r {
        Ok(v) => Ok(Outcome::Value(v)),
        Err(
            e @ (MetaEvalError::TooFew { .. }
            | MetaEvalError::Constant
            | MetaEvalError::AllTied
            | MetaEvalError::NoPairs),
        ) => Ok(Outcome::undefined(reason(&e))),
        Err(e) => Err(e),
    }
}

/// Scores and judgments for one language pair.
#[derive(Debug, Clone)]
pub struct PairInput {
    pub pair: String,
    pub scores: BTreeMap<MetricId, Vec<MetricScoreSet>>,
    pub human: HumanJudgmentSet,
}

#[derive(Debug, Clone, Copy)]
pub struct EvaluateOptions {
    pub min_top_n: usize,
    pub ties: TiePolicy,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        Self {
            min_top_n: 4,
            ties: TiePolicy::Discordant,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub metric: MetricId,
    pub aggregation: Aggregation,
    pub system_scores: BTreeMap<String, f64>,
    pub system_level: Outcome<CorrelationReport>,
    /// Absent for corpus-level BLEU, which has no segment-level reading.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segment_level: Option<Outcome<TauReport>>,
    pub topn: Outcome<Vec<TopNPoint>>,
    /// Sample variance of the system scores on a 0-1 scale, times 1e4.
    pub variance_e4: Outcome<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairReport {
    pub pair: String,
    pub systems: usize,
    pub human_scores: &'static str,
    pub darr_pairs: usize,
    pub da_variance: Outcome<f64>,
    pub metrics: Vec<MetricReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub format_version: u32,
    pub min_top_n: usize,
    pub ties: TiePolicy,
    pub pairs: Vec<PairReport>,
}

fn human_system_scores(human: &HumanJudgmentSet) -> Result<(&BTreeMap<String, f64>, &'static str), ReportError> {
    if !human.da_system_scores.is_empty() {
        Ok((&human.da_system_scores, "da"))
    } else {
        match &human.win_ratios {
            Some(w) if !w.is_empty() => Ok((w, "win_ratios")),
            _ => Err(ReportError::NoHumanScores),
        }
    }
}

fn meta(e: MetaEvalError) -> ReportError {
    match e {
        MetaEvalError::MissingHumanScore(s) => ReportError::SystemMismatch { systems: vec![s] },
        other => ReportError::Semantic {
            id: "-".into(),
            message: other.to_string(),
        },
    }
}

pub fn evaluate(inputs: &[PairInput], opts: EvaluateOptions) -> Result<EvaluationReport, ReportError> {
    let mut pairs = Vec::new();
    for input in inputs {
        let (human, source) = human_system_scores(&input.human)?;
        let mut metrics = Vec::new();
        let mut systems = 0;
        for (&metric, sets) in &input.scores {
            let system_scores: BTreeMap<String, f64> =
                sets.iter().map(|s| (s.system_id.clone(), s.system_score)).collect();
            let missing: Vec<String> = system_scores.keys().filter(|s| !human.contains_key(*s)).cloned().collect();
            if !missing.is_empty() {
                return Err(ReportError::SystemMismatch { systems: missing });
            }
            systems = systems.max(system_scores.len());
            let system_level = outcome(correlate_systems(&system_scores, human)).map_err(meta)?;
            let segment_level = if metric == MetricId::RttBleu {
                None
            } else {
                let mut seg = SegmentScores::new();
                for set in sets {
                    for (id, &score) in set.segment_ids.iter().zip(&set.segment_scores) {
                        seg.insert((set.system_id.clone(), id.clone()), score);
                    }
                }
                Some(outcome(kendall_tau_darr(&seg, &input.human.darr_pairs, opts.ties)).map_err(meta)?)
            };
            let topn = outcome(topn_curve(&system_scores, human, opts.min_top_n)).map_err(meta)?;
            let unit: Vec<f64> = system_scores.values().map(|s| s / 100.0).collect();
            let variance_e4 = outcome(score_variance(&unit).map(|v| v * 1e4)).map_err(meta)?;
            metrics.push(MetricReport {
                metric,
                aggregation: metric.aggregation(),
                system_scores,
                system_level,
                segment_level,
                topn,
                variance_e4,
            });
        }
        let human_only = HumanJudgmentSet {
            da_system_scores: human.clone(),
            ..Default::default()
        };
        pairs.push(PairReport {
            pair: input.pair.clone(),
            systems,
            human_scores: source,
            darr_pairs: input.human.darr_pairs.len(),
            da_variance: outcome(da_variance_analysis(&human_only)).map_err(meta)?,
            metrics,
        });
    }
    Ok(EvaluationReport {
        format_version: FORMAT_VERSION,
        min_top_n: opts.min_top_n,
        ties: opts.ties,
        pairs,
    })
}

fn f4(x: &f64) -> String {
    format!("{x:.4}")
}

fn metric_rows(report: &EvaluationReport) -> Vec<MetricId> {
    let mut ms: Vec<MetricId> = report
        .pairs
        .iter()
        .flat_map(|p| p.metrics.iter().map(|m| m.metric))
        .collect();
    ms.sort();
    ms.dedup();
    ms
}

fn table(report: &EvaluationReport, cell: impl Fn(&MetricReport) -> String) -> String {
    let mut out = String::from("metric");
    for p in &report.pairs {
        write!(out, "\t{}", p.pair).unwrap();
    }
    out.push('\n');
    for m in metric_rows(report) {
        out.push_str(m.as_str());
        for p in &report.pairs {
            let c = p.metrics.iter().find(|r| r.metric == m).map_or_else(|| "NA".to_string(), &cell);
            write!(out, "\t{c}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn system_level_table(report: &EvaluationReport) -> String {
    table(report, |m| m.system_level.cell(|c| f4(&c.r)))
}

pub fn segment_level_table(report: &EvaluationReport) -> String {
    table(report, |m| match &m.segment_level {
        None => "-".into(),
        Some(Outcome::Undefined { undefined }) if undefined == "no daRR pairs" => "NA".into(),
        Some(o) => o.cell(|t| f4(&t.tau)),
    })
}

pub fn variance_table(report: &EvaluationReport) -> String {
    table(report, |m| m.variance_e4.cell(f4))
}

pub fn topn_csv(points: &Outcome<Vec<TopNPoint>>) -> String {
    let mut out = String::from("n,r\n");
    if let Outcome::Value(points) = points {
        for p in points {
            let r = p.r.as_ref().map_or_else(|| "NA".to_string(), f4);
            writeln!(out, "{},{r}", p.n).unwrap();
        }
    }
    out
}

fn write_file(dir: &Path, name: &str, contents: &str, written: &mut Vec<PathBuf>) -> Result<(), ReportError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| ReportError::Io {
        path: path.clone(),
        source,
    })?;
    written.push(path);
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

pub fn write_evaluation(report: &EvaluationReport, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    write_file(dir, "system_level.tsv", &system_level_table(report), &mut written)?;
    write_file(dir, "segment_level.tsv", &segment_level_table(report), &mut written)?;
    write_file(dir, "variance.tsv", &variance_table(report), &mut written)?;
    let mut da = String::from("pair\tda_variance\n");
    for p in &report.pairs {
        writeln!(da, "{}\t{}", p.pair, p.da_variance.cell(f4)).unwrap();
    }
    write_file(dir, "da_variance.tsv", &da, &mut written)?;
    for p in &report.pairs {
        for m in &p.metrics {
            write_file(dir, &format!("topn.{}.{}.csv", m.metric, p.pair), &topn_csv(&m.topn), &mut written)?;
        }
    }
    write_file(dir, "report.json", &to_json(report), &mut written)?;
    Ok(written)
}

#[derive(Debug, Clone, Serialize)]
pub struct ParaphraseMetric {
    pub metric: MetricId,
    pub auc: f64,
    pub curve: PrCurve,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParaphraseReport {
    pub format_version: u32,
    pub pairs: usize,
    pub positives: usize,
    pub metrics: Vec<ParaphraseMetric>,
    #[serde(skip)]
    pub scores: Vec<Vec<f64>>,
    #[serde(skip)]
    pub ids: Vec<String>,
    #[serde(skip)]
    pub labels: Vec<u8>,
    #[serde(skip)]
    pub idf: Option<IdfTable>,
}

#[derive(Debug, Default)]
pub struct ParaphraseResources<'a> {
    pub sentence: Option<&'a Provider>,
    pub token: Option<&'a Provider>,
}

/// Scores each pair with sentence1 as the input and sentence2 as its
/// round trip, then measures how well each metric separates paraphrases.
pub fn paraphrase(
    pairs: &[ParaphrasePair],
    lang: &str,
    metrics: &[MetricId],
    resources: &ParaphraseResources<'_>,
) -> Result<ParaphraseReport, ReportError> {
    if pairs.is_empty() {
        return Err(ReportError::Empty);
    }
    if let Some(&m) = metrics.iter().find(|m| **m == MetricId::RttBleu) {
        return Err(ReportError::NotPairwise(m));
    }
    let labels: Vec<bool> = pairs.iter().map(ParaphrasePair::is_paraphrase).collect();
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(ReportError::NoPositives);
    }
    let s1: Vec<String> = pairs.iter().map(|p| p.sentence1.clone()).collect();
    let s2: Vec<String> = pairs.iter().map(|p| p.sentence2.clone()).collect();
    let mut idf = None;
    let mut all_scores = Vec::new();
    let mut results = Vec::new();
    for &metric in metrics {
        let scores: Vec<f64> = match metric {
            MetricId::RttSentBleu => pairs.iter().map(|p| sentbleu_score(&p.sentence2, &p.sentence1, lang)).collect(),
            MetricId::RttChrf => pairs.iter().map(|p| chrf_score(&p.sentence2, &p.sentence1)).collect(),
            MetricId::RttSbert => {
                let provider = resources.sentence.ok_or(ReportError::MissingResource {
                    metric,
                    resource: "a sentence-embedding provider",
                })?;
                let xs = provider.fetch_sentence_embeddings(&s1)?;
                let ys = provider.fetch_sentence_embeddings(&s2)?;
                xs.iter()
                    .zip(&ys)
                    .zip(pairs)
                    .map(|((x, y), p)| {
                        x.cosine(y).map(|c| 100.0 * c).map_err(|e| ReportError::Semantic {
                            id: p.id.clone(),
                            message: e.to_string(),
                        })
                    })
                    .collect::<Result<_, _>>()?
            }
            MetricId::RttBertScore => {
                let provider = resources.token.ok_or(ReportError::MissingResource {
                    metric,
                    resource: "a token-embedding provider",
                })?;
                let xs = provider.fetch_token_embeddings(&s1)?;
                let ys = provider.fetch_token_embeddings(&s2)?;
                let pieces: Vec<&[String]> = xs.iter().map(TokenEmbeddings::wordpieces).collect();
                let table = IdfTable::build(&pieces);
                let scores = xs
                    .iter()
                    .zip(&ys)
                    .zip(pairs)
                    .map(|((x, y), p)| {
                        bertscore(x, y, &table).map_err(|e| ReportError::Semantic {
                            id: p.id.clone(),
                            message: e.to_string(),
                        })
                    })
                    .collect::<Result<_, _>>()?;
                idf = Some(table);
                scores
            }
            MetricId::RttBleu => unreachable!("rejected above"),
        };
        let curve = pr_auc(&scores, &labels).map_err(|e| match e {
            MetaEvalError::NoPositives => ReportError::NoPositives,
            other => ReportError::Semantic {
                id: "-".into(),
                message: other.to_string(),
            },
        })?;
        results.push(ParaphraseMetric {
            metric,
            auc: curve.auc,
            curve,
        });
        all_scores.push(scores);
    }
    Ok(ParaphraseReport {
        format_version: FORMAT_VERSION,
        pairs: pairs.len(),
        positives,
        metrics: results,
        scores: all_scores,
        ids: pairs.iter().map(|p| p.id.clone()).collect(),
        labels: pairs.iter().map(|p| p.label).collect(),
        idf,
    })
}

pub fn auc_table(report: &ParaphraseReport) -> String {
    let mut out = String::from("metric\tauc_pr\n");
    for m in &report.metrics {
        writeln!(out, "{}\t{}", m.metric, f4(&m.auc)).unwrap();
    }
    out
}

pub fn idf_dump(idf: &IdfTable) -> String {
    let mut out = format!(
        "# corpus_size={} default_weight={:.6}\nwordpiece\tdoc_freq\tidf\n",
        idf.corpus_size(),
        idf.default_weight()
    );
    for (piece, df, w) in idf.entries() {
        writeln!(out, "{piece}\t{df}\t{w:.6}").unwrap();
    }
    out
}

pub fn write_paraphrase(report: &ParaphraseReport, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    write_file(dir, "paraphrase_auc.tsv", &auc_table(report), &mut written)?;
    let mut scores = String::from("id\tlabel");
    for m in &report.metrics {
        write!(scores, "\t{}", m.metric).unwrap();
    }
    scores.push('\n');
    for (i, id) in report.ids.iter().enumerate() {
        write!(scores, "{id}\t{}", report.labels[i]).unwrap();
        for s in &report.scores {
            write!(scores, "\t{}", f4(&s[i])).unwrap();
        }
        scores.push('\n');
    }
    write_file(dir, "paraphrase_scores.tsv", &scores, &mut written)?;
    for m in &report.metrics {
        let mut csv = String::from("recall,precision\n");
        for p in &m.curve.points {
            writeln!(csv, "{:.6},{:.6}", p.recall, p.precision).unwrap();
        }
        write_file(dir, &format!("pr.{}.csv", m.metric), &csv, &mut written)?;
    }
    if let Some(idf) = &report.idf {
        write_file(dir, "idf_dump.tsv", &idf_dump(idf), &mut written)?;
    }
    write_file(dir, "report.json", &to_json(report), &mut written)?;
    Ok(written)
}
