//! WebAssembly bindings behind `www/index.html`.
//!
//! Every export takes plain text from a form field and returns JSON; the
//! native functions of the same name do the work and are what the tests
//! call.

use std::collections::BTreeMap;

use rttqe_core::lexical::{self, LexicalError};
use rttqe_core::meta_eval::{self, MetaEvalError, PrPoint, TopNPoint};
use rttqe_core::{char_stream, textnorm, Scheme};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, thiserror::Error)]
pub enum DemoError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Lexical(#[from] LexicalError),
    #[error(transparent)]
    MetaEval(#[from] MetaEvalError),
}

fn parse_err(line: usize, message: impl Into<String>) -> DemoError {
    DemoError::Parse {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub sentbleu: f64,
    pub chrf: f64,
    pub input_tokens: Vec<String>,
    pub round_trip_tokens: Vec<String>,
    /// Round-trip tokens that also occur in the input.
    pub matched: Vec<bool>,
}

/// Sentence BLEU and chrF of a round trip against its input.
pub fn compare(input: &str, round_trip: &str, lang: &str) -> Result<Comparison, DemoError> {
    let x = textnorm::tokenize_for_lang(input, lang, Scheme::TokIntl, true);
    let xhat = textnorm::tokenize_for_lang(round_trip, lang, Scheme::TokIntl, true);
    let sentbleu = if x.is_empty() || xhat.is_empty() {
        0.0
    } else {
        lexical::sentence_bleu(&xhat, &x)?
    };
    let chrf = lexical::chrf(&char_stream(round_trip), &char_stream(input)).unwrap_or(0.0);
    let matched = xhat.as_slice().iter().map(|t| x.as_slice().contains(t)).collect();
    Ok(Comparison {
        sentbleu: lexical::round4(sentbleu),
        chrf: lexical::round4(chrf),
        input_tokens: x.as_slice().to_vec(),
        round_trip_tokens: xhat.as_slice().to_vec(),
        matched,
    })
}

fn rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i, l.split([',', '\t']).map(str::trim).collect()))
}

fn number(line: usize, field: &str) -> Result<f64, DemoError> {
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| parse_err(line, format!("{field:?} is not a number")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrResult {
    pub points: Vec<PrPoint>,
    pub auc: f64,
    pub pairs: usize,
    pub positives: usize,
}

/// Parses `score,label` rows (label 0 or 1) and returns the PR curve.
pub fn pr_curve(text: &str) -> Result<PrResult, DemoError> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (line, f) in rows(text) {
        let [score, label] = f[..] else {
            return Err(parse_err(line, "expected `score,label`"));
        };
        scores.push(number(line, score)?);
        labels.push(match label {
            "1" => true,
            "0" => false,
            other => return Err(parse_err(line, format!("label {other:?} is not 0 or 1"))),
        });
    }
    let curve = meta_eval::pr_auc(&scores, &labels)?;
    Ok(PrResult {
        points: curve.points,
        auc: curve.auc,
        pairs: scores.len(),
        positives: labels.iter().filter(|&&l| l).count(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopNResult {
    pub points: Vec<TopNPoint>,
    /// Systems from best to worst human score.
    pub ranking: Vec<String>,
}

/// Parses `system,metric,human` rows and correlates the top-n systems.
pub fn topn(text: &str, min_n: usize) -> Result<TopNResult, DemoError> {
    let mut metric = BTreeMap::new();
    let mut human = BTreeMap::new();
    for (line, f) in rows(text) {
        let [system, m, h] = f[..] else {
            return Err(parse_err(line, "expected `system,metric,human`"));
        };
        if metric.insert(system.to_string(), number(line, m)?).is_some() {
            return Err(parse_err(line, format!("duplicate system {system:?}")));
        }
        human.insert(system.to_string(), number(line, h)?);
    }
    let points = meta_eval::topn_curve(&metric, &human, min_n)?;
    let ranking = meta_eval::rank_by_human(&human).into_iter().map(String::from).collect();
    Ok(TopNResult { points, ranking })
}

fn to_js<T: Serialize>(result: Result<T, DemoError>) -> Result<String, JsError> {
    let value = result.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = compare)]
pub fn compare_js(input: &str, round_trip: &str, lang: &str) -> Result<String, JsError> {
    to_js(compare(input, round_trip, lang))
}

#[wasm_bindgen(js_name = prCurve)]
pub fn pr_curve_js(text: &str) -> Result<String, JsError> {
    to_js(pr_curve(text))
}

#[wasm_bindgen(js_name = topN)]
pub fn topn_js(text: &str, min_n: usize) -> Result<String, JsError> {
    to_js(topn(text, min_n))
}
