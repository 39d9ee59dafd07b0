//! Meta-evaluation statistics: how well metric scores agree with human
//! judgments.
//!
//! System level uses Pearson's r against averaged DA scores; segment level
//! uses the WMT Kendall's tau-like formulation over daRR pairs. Paraphrase
//! detection quality is the area under the precision-recall curve.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus_io::{DarrPair, HumanJudgmentSet};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetaEvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("correlation undefined: a sequence is constant")]
    Constant,
    #[error("non-finite value")]
    NonFinite,
    #[error("system {0:?} has no human score")]
    MissingHumanScore(String),
    #[error("no metric score for system {system:?} on segment {segment:?}")]
    MissingScore { system: String, segment: String },
    #[error("daRR pair list is empty")]
    NoPairs,
    #[error("every daRR pair is tied")]
    AllTied,
    #[error("no positive labels")]
    NoPositives,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemPairing {
    pub system_id: String,
    pub metric_score: f64,
    pub human_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub r: f64,
    pub n: usize,
    pub pairing: Vec<SystemPairing>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauReport {
    pub tau: f64,
    pub concordant: usize,
    pub discordant: usize,
    /// Pairs whose metric scores tie. Counted as discordant unless ties are
    /// ignored.
    pub ties: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// WMT convention.
    #[default]
    Discordant,
    Ignore,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopNPoint {
    pub n: usize,
    /// `None` where the correlation is undefined (a constant subset).
    pub r: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub auc: f64,
}

fn check_finite(xs: &[f64]) -> Result<(), MetaEvalError> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(MetaEvalError::NonFinite)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Pearson product-moment correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, MetaEvalError> {
    if xs.len() != ys.len() {
        return Err(MetaEvalError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(MetaEvalError::TooFew {
            needed: 2,
            got: xs.len(),
        });
    }
    check_finite(xs)?;
    check_finite(ys)?;
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetaEvalError::Constant);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// System-level correlation of metric scores against human scores, joined on
/// system id. Every metric system needs a human score.
pub fn correlate_systems(
    metric: &BTreeMap<String, f64>,
    human: &BTreeMap<String, f64>,
) -> Result<CorrelationReport, MetaEvalError> {
    let pairing = metric
        .iter()
        .map(|(system, &score)| {
            human
                .get(system)
                .map(|&h| SystemPairing {
                    system_id: system.clone(),
                    metric_score: score,
                    human_score: h,
                })
                .ok_or_else(|| MetaEvalError::MissingHumanScore(system.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let xs: Vec<f64> = pairing.iter().map(|p| p.metric_score).collect();
    let ys: Vec<f64> = pairing.iter().map(|p| p.human_score).collect();
    let r = pearson(&xs, &ys)?;
    Ok(CorrelationReport {
        r,
        n: pairing.len(),
        pairing,
    })
}

/// Segment scores keyed by `(system_id, segment_id)`.
pub type SegmentScores = HashMap<(String, String), f64>;

/// Kendall's tau-like agreement with daRR pairs:
/// `(concordant - discordant) / (concordant + discordant)`.
pub fn kendall_tau_darr(
    scores: &SegmentScores,
    pairs: &[DarrPair],
    ties: TiePolicy,
) -> Result<TauReport, MetaEvalError> {
    if pairs.is_empty() {
        return Err(MetaEvalError::NoPairs);
    }
    let lookup = |system: &str, segment: &str| {
        scores
            .get(&(system.to_string(), segment.to_string()))
            .copied()
            .ok_or_else(|| MetaEvalError::MissingScore {
                system: system.to_string(),
                segment: segment.to_string(),
            })
    };
    let (mut concordant, mut discordant, mut tied) = (0usize, 0usize, 0usize);
    for pair in pairs {
        let better = lookup(&pair.better, &pair.segment_id)?;
        let worse = lookup(&pair.worse, &pair.segment_id)?;
        if better > worse {
            concordant += 1;
        } else if better < worse {
            discordant += 1;
        } else {
            tied += 1;
        }
    }
    if ties == TiePolicy::Discordant {
        discordant += tied;
    }
    let total = concordant + discordant;
    if total == 0 {
        return Err(MetaEvalError::AllTied);
    }
    Ok(TauReport {
        tau: (concordant as f64 - discordant as f64) / total as f64,
        concordant,
        discordant,
        ties: tied,
    })
}

/// Orders systems by descending human score, ties by ascending id.
pub fn rank_by_human(human: &BTreeMap<String, f64>) -> Vec<&str> {
    let mut ids: Vec<&str> = human.keys().map(String::as_str).collect();
    ids.sort_by(|a, b| human[*b].total_cmp(&human[*a]).then_with(|| a.cmp(b)));
    ids
}

/// Pearson r over the top-n systems by human score, for n from all systems
/// down to `min_n`. The first point is always the full-set correlation.
pub fn topn_curve(
    system_scores: &BTreeMap<String, f64>,
    human_scores: &BTreeMap<String, f64>,
    min_n: usize,
) -> Result<Vec<TopNPoint>, MetaEvalError> {
    let min_n = min_n.max(2);
    let ranked: Vec<&str> = rank_by_human(human_scores)
        .into_iter()
        .filter(|id| system_scores.contains_key(*id))
        .collect();
    if let Some(missing) = system_scores.keys().find(|id| !human_scores.contains_key(*id)) {
        return Err(MetaEvalError::MissingHumanScore(missing.clone()));
    }
    if ranked.len() < min_n {
        return Err(MetaEvalError::TooFew {
            needed: min_n,
            got: ranked.len(),
        });
    }
    let mut points = Vec::with_capacity(ranked.len() - min_n + 1);
    for n in (min_n..=ranked.len()).rev() {
        let xs: Vec<f64> = ranked[..n].iter().map(|id| system_scores[*id]).collect();
        let ys: Vec<f64> = ranked[..n].iter().map(|id| human_scores[*id]).collect();
        let r = match pearson(&xs, &ys) {
            Ok(r) => Some(r),
            Err(MetaEvalError::Constant) => None,
            Err(e) => return Err(e),
        };
        points.push(TopNPoint { n, r });
    }
    Ok(points)
}

/// Unbiased (n - 1) sample variance.
pub fn score_variance(xs: &[f64]) -> Result<f64, MetaEvalError> {
    if xs.len() < 2 {
        return Err(MetaEvalError::TooFew {
            needed: 2,
            got: xs.len(),
        });
    }
    check_finite(xs)?;
    let m = mean(xs);
    Ok(xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64)
}

/// Sample variance of the per-system averaged DA scores.
pub fn da_variance_analysis(human: &HumanJudgmentSet) -> Result<f64, MetaEvalError> {
    let scores: Vec<f64> = human.da_system_scores.values().copied().collect();
    score_variance(&scores)
}

/// Precision-recall curve with tied scores entering as one block, and the
/// trapezoidal area under it. The curve starts at (recall 0, precision 1).
pub fn pr_auc(scores: &[f64], labels: &[bool]) -> Result<PrCurve, MetaEvalError> {
    if scores.len() != labels.len() {
        return Err(MetaEvalError::LengthMismatch(scores.len(), labels.len()));
    }
    check_finite(scores)?;
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(MetaEvalError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![PrPoint {
        recall: 0.0,
        precision: 1.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]].total_cmp(&threshold) == Ordering::Equal {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            recall: tp as f64 / positives as f64,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].recall - w[0].recall) * (w[1].precision + w[0].precision) / 2.0)
        .sum::<f64>()
        .clamp(0.0, 1.0);
    Ok(PrCurve { points, auc })
}
