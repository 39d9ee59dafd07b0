//! Acceptance suite: one PASS/FAIL line per criterion. Runs offline against
//! the shipped fixtures and independent brute-force oracles.

mod common;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rttqe::pipeline::{chrf_score, sentbleu_score};
use rttqe_core::corpus_io::DarrPair;
use rttqe_core::lexical;
use rttqe_core::meta_eval::{self, SegmentScores, TiePolicy};
use rttqe_core::semantic::{greedy_match_fscore, IdfTable, TokenEmbeddings};
use rttqe_core::{char_stream, tokenize, Scheme};

const LEXICAL_TOL: f64 = 1e-3;
const LEXICAL_BUDGET: Duration = Duration::from_secs(5);
const SPOT_SENTBLEU: f64 = 14.99;
const SPOT_TOL: f64 = 0.5;
const STATS_TOL: f64 = 1e-9;
const STATS_INSTANCES: usize = 200;
const STATS_BUDGET: Duration = Duration::from_secs(10);
const GREEDY_TOL: f64 = 1e-9;
const GREEDY_INSTANCES: usize = 500;
const IDF_CORPORA: usize = 1000;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ------------------------------------------------------------ lexical

fn lexical_fidelity() -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/lexical_metrics.tsv");
    let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let start = Instant::now();
    let intl = |s: &str| tokenize(s, Scheme::TokIntl, true);
    let mut bleu_pairs = Vec::new();
    let mut chrf_pairs = Vec::new();
    let mut worst = 0.0f64;
    let mut rows = 0;
    let mut failures = Vec::new();
    let mut note = |what: &str, got: f64, want: f64| {
        let err = (got - want).abs();
        worst = worst.max(err);
        if err > LEXICAL_TOL {
            failures.push(format!("{what}: got {got}, want {want}"));
        }
    };
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.is_empty()) {
        let f: Vec<&str> = line.split('\t').collect();
        let [metric, _, hyp, reference, expected] = f[..] else {
            return Err(format!("malformed row {line:?}"));
        };
        let want: f64 = expected.parse().map_err(|_| format!("bad expected value {expected:?}"))?;
        rows += 1;
        match metric {
            "sentbleu" => {
                note("sentbleu", sentbleu_score(hyp, reference, "en"), want);
                bleu_pairs.push((intl(hyp), intl(reference)));
            }
            "chrf" => {
                note("chrf", chrf_score(hyp, reference), want);
                chrf_pairs.push((char_stream(hyp), char_stream(reference)));
            }
            "corpus_bleu" => {
                let got = lexical::corpus_bleu(bleu_pairs.iter().map(|(h, r)| (h, r))).map_err(|e| e.to_string())?;
                note("corpus_bleu", got, want);
            }
            "corpus_chrf" => {
                let got = lexical::chrf_corpus(chrf_pairs.iter().map(|(h, r)| (h, r))).map_err(|e| e.to_string())?;
                note("corpus_chrf", got, want);
            }
            other => return Err(format!("unknown metric {other}")),
        }
    }
    let elapsed = start.elapsed();
    let detail = format!("{rows} rows, max |err| {worst:.2e} (tol {LEXICAL_TOL}), {:.0} ms", elapsed.as_secs_f64() * 1e3);
    if !failures.is_empty() {
        return Err(format!("{detail}; {}", failures.join("; ")));
    }
    check(rows >= 100 && elapsed < LEXICAL_BUDGET, detail)
}

fn sentence_pair_spot_check() -> Outcome {
    let input = "'We know it won't change students' behaviour instantly.";
    let round_trip = "\"We know that it will not change student behavior immediately.";
    let got = sentbleu_score(round_trip, input, "en");
    check(
        (got - SPOT_SENTBLEU).abs() <= SPOT_TOL,
        format!("sentBLEU {got:.4}, target {SPOT_SENTBLEU} ± {SPOT_TOL} (tok intl, lowercased)"),
    )
}

// ------------------------------------------------------------ stats oracles

/// Pearson r from pairwise differences, which needs no means.
fn oracle_pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let (dx, dy) = (x[i] - x[j], y[i] - y[j]);
            sxy += dx * dy;
            sxx += dx * dx;
            syy += dy * dy;
        }
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

fn oracle_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mut s = 0.0;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            s += (x[i] - x[j]).powi(2);
        }
    }
    s / (n * (n - 1.0))
}

/// Area under the PR curve by sweeping every distinct score as a threshold.
fn oracle_pr_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let positives = labels.iter().filter(|&&l| l).count() as f64;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut curve = vec![(0.0, 1.0)];
    for t in thresholds {
        let (mut tp, mut fp) = (0.0, 0.0);
        for (s, &l) in scores.iter().zip(labels) {
            if *s >= t {
                if l {
                    tp += 1.0
                } else {
                    fp += 1.0
                }
            }
        }
        curve.push((tp / positives, tp / (tp + fp)));
    }
    let mut area = 0.0;
    for w in curve.windows(2) {
        area += (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0;
    }
    area
}

fn draw(rng: &mut StdRng, n: usize) -> Vec<f64> {
    let coarse = rng.gen_bool(0.3);
    (0..n)
        .map(|_| if coarse { rng.gen_range(0..4) as f64 } else { rng.gen_range(-50.0..50.0) })
        .collect()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= STATS_TOL
}

fn stats_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(2019);
    let mut counts = BTreeMap::new();
    let fail = |op: &str, msg: String| Err::<(), String>(format!("{op}: {msg}"));

    for _ in 0..STATS_INSTANCES {
        // pearson
        let n = rng.gen_range(2..=10);
        let (x, y) = (draw(&mut rng, n), draw(&mut rng, n));
        match (meta_eval::pearson(&x, &y), oracle_pearson(&x, &y)) {
            (Ok(r), Some(o)) if close(r, o) => {}
            (Err(meta_eval::MetaEvalError::Constant), None) => {}
            (got, want) => fail("pearson", format!("{x:?} {y:?}: {got:?} vs {want:?}"))?,
        }
        *counts.entry("pearson").or_insert(0) += 1;

        // variance
        let x = draw(&mut rng, n);
        let v = meta_eval::score_variance(&x).map_err(|e| e.to_string())?;
        if !close(v, oracle_variance(&x)) {
            fail("score_variance", format!("{x:?}: {v} vs {}", oracle_variance(&x)))?;
        }
        *counts.entry("score_variance").or_insert(0) += 1;

        // kendall tau over daRR pairs
        let systems = rng.gen_range(2..=4);
        let segments = rng.gen_range(1..=3);
        let mut scores = SegmentScores::new();
        for s in 0..systems {
            for g in 0..segments {
                scores.insert((format!("s{s}"), format!("{g}")), rng.gen_range(0..5) as f64);
            }
        }
        let pairs: Vec<DarrPair> = (0..rng.gen_range(1..=10))
            .map(|_| {
                let a = rng.gen_range(0..systems);
                let b = (a + rng.gen_range(1..systems)) % systems;
                DarrPair {
                    segment_id: format!("{}", rng.gen_range(0..segments)),
                    better: format!("s{a}"),
                    worse: format!("s{b}"),
                }
            })
            .collect();
        for policy in [TiePolicy::Discordant, TiePolicy::Ignore] {
            let (mut conc, mut disc, mut tie) = (0i64, 0i64, 0i64);
            for p in &pairs {
                let d = scores[&(p.better.clone(), p.segment_id.clone())] - scores[&(p.worse.clone(), p.segment_id.clone())];
                match d.partial_cmp(&0.0).unwrap() {
                    std::cmp::Ordering::Greater => conc += 1,
                    std::cmp::Ordering::Less => disc += 1,
                    std::cmp::Ordering::Equal => tie += 1,
                }
            }
            let denom = if policy == TiePolicy::Discordant { conc + disc + tie } else { conc + disc };
            let numer = if policy == TiePolicy::Discordant { conc - disc - tie } else { conc - disc };
            let got = meta_eval::kendall_tau_darr(&scores, &pairs, policy);
            match (got, denom) {
                (Ok(r), d) if d > 0 && close(r.tau, numer as f64 / d as f64) => {}
                (Err(meta_eval::MetaEvalError::AllTied), 0) => {}
                (got, _) => fail("kendall_tau_darr", format!("{pairs:?}: {got:?}"))?,
            }
        }
        *counts.entry("kendall_tau_darr").or_insert(0) += 1;

        // top-N curve
        let k = rng.gen_range(2..=10);
        let min_n = rng.gen_range(2..=k);
        let ids: Vec<String> = (0..k).map(|i| format!("sys{i:02}")).collect();
        let (ms, hs) = (draw(&mut rng, k), draw(&mut rng, k));
        let metric: BTreeMap<String, f64> = ids.iter().cloned().zip(ms.iter().copied()).collect();
        let human: BTreeMap<String, f64> = ids.iter().cloned().zip(hs.iter().copied()).collect();
        let curve = meta_eval::topn_curve(&metric, &human, min_n).map_err(|e| e.to_string())?;
        // selection by repeated maximum: highest human score first, lowest id on ties
        let mut left: Vec<usize> = (0..k).collect();
        let mut ranked = Vec::new();
        while !left.is_empty() {
            let mut best = 0;
            for (pos, &i) in left.iter().enumerate() {
                let b = left[best];
                if hs[i] > hs[b] || (hs[i] == hs[b] && ids[i] < ids[b]) {
                    best = pos;
                }
            }
            ranked.push(left.remove(best));
        }
        let expected: Vec<(usize, Option<f64>)> = (min_n..=k)
            .rev()
            .map(|n| {
                let xs: Vec<f64> = ranked[..n].iter().map(|&i| ms[i]).collect();
                let ys: Vec<f64> = ranked[..n].iter().map(|&i| hs[i]).collect();
                (n, oracle_pearson(&xs, &ys))
            })
            .collect();
        let agrees = curve.len() == expected.len()
            && curve.iter().zip(&expected).all(|(p, (n, r))| {
                p.n == *n
                    && match (p.r, r) {
                        (Some(a), Some(b)) => close(a, *b),
                        (None, None) => true,
                        _ => false,
                    }
            });
        if !agrees {
            fail("topn_curve", format!("{curve:?} vs {expected:?}"))?;
        }
        *counts.entry("topn_curve").or_insert(0) += 1;

        // PR AUC
        let n = rng.gen_range(1..=10);
        let scores = draw(&mut rng, n);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        labels[rng.gen_range(0..n)] = true;
        let auc = meta_eval::pr_auc(&scores, &labels).map_err(|e| e.to_string())?.auc;
        if !close(auc, oracle_pr_auc(&scores, &labels)) {
            fail("pr_auc", format!("{scores:?} {labels:?}: {auc} vs {}", oracle_pr_auc(&scores, &labels)))?;
        }
        *counts.entry("pr_auc").or_insert(0) += 1;
    }
    let elapsed = start.elapsed();
    let summary: Vec<String> = counts.iter().map(|(k, v)| format!("{k} {v}")).collect();
    check(
        elapsed < STATS_BUDGET && counts.values().all(|&c| c >= 100),
        format!("{} instances each agree to {STATS_TOL:e}, {:.0} ms", summary.join(", "), elapsed.as_secs_f64() * 1e3),
    )
}

// ------------------------------------------------------------ semantic

/// Best weighted total over every map from `from` tokens to `to` tokens.
fn exhaustive_side(from: &[Vec<f64>], to: &[Vec<f64>], weights: &[f64]) -> f64 {
    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let (m, k) = (from.len(), to.len());
    let mut best = f64::NEG_INFINITY;
    for code in 0..k.pow(m as u32) {
        let mut c = code;
        let mut total = 0.0;
        for i in 0..m {
            total += weights[i] * cos(&from[i], &to[c % k]);
            c /= k;
        }
        best = best.max(total);
    }
    best / weights.iter().sum::<f64>()
}

fn random_vectors(rng: &mut StdRng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if v.iter().any(|x| x.abs() > 1e-3) {
                break v;
            }
        })
        .collect()
}

fn semantic_properties() -> Outcome {
    let mut rng = StdRng::seed_from_u64(17);
    let vocab = ["a", "b", "c", "d", "e", "##s", "[CLS]", "[SEP]"];
    let piece = |rng: &mut StdRng| vocab[rng.gen_range(0..vocab.len())].to_string();
    let mut checked = 0;
    while checked < GREEDY_INSTANCES {
        let corpus: Vec<Vec<String>> = (0..rng.gen_range(1..=6))
            .map(|_| (0..rng.gen_range(1..=5)).map(|_| piece(&mut rng)).collect())
            .collect();
        let idf = IdfTable::build(&corpus);
        let dim = rng.gen_range(1..=4);
        let (n, m) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
        let xp: Vec<String> = (0..n).map(|_| piece(&mut rng)).collect();
        let yp: Vec<String> = (0..m).map(|_| piece(&mut rng)).collect();
        let (xv, yv) = (random_vectors(&mut rng, n, dim), random_vectors(&mut rng, m, dim));
        let wx: Vec<f64> = xp.iter().map(|p| idf.weight(p)).collect();
        let wy: Vec<f64> = yp.iter().map(|p| idf.weight(p)).collect();
        if wx.iter().sum::<f64>() == 0.0 || wy.iter().sum::<f64>() == 0.0 {
            continue;
        }
        let x = TokenEmbeddings::new(xp, xv.clone()).map_err(|e| e.to_string())?;
        let y = TokenEmbeddings::new(yp, yv.clone()).map_err(|e| e.to_string())?;
        let got = greedy_match_fscore(&x, &y, &idf).map_err(|e| e.to_string())?;
        let recall = exhaustive_side(&xv, &yv, &wx);
        let precision = exhaustive_side(&yv, &xv, &wy);
        let f = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        if (got.recall - recall).abs() > GREEDY_TOL || (got.precision - precision).abs() > GREEDY_TOL || (got.f - f).abs() > GREEDY_TOL {
            return Err(format!("greedy {got:?} vs exhaustive P {precision} R {recall} F {f}"));
        }
        checked += 1;
    }

    for _ in 0..IDF_CORPORA {
        let l = rng.gen_range(1..=8);
        let corpus: Vec<Vec<String>> = (0..l)
            .map(|_| (0..rng.gen_range(0..=6)).map(|_| piece(&mut rng)).collect())
            .collect();
        let idf = IdfTable::build(&corpus);
        let ln_l = (l as f64).ln();
        if (idf.default_weight() - ln_l).abs() > 1e-12 {
            return Err(format!("unseen weight {} != ln {l}", idf.default_weight()));
        }
        for p in vocab {
            let df = corpus.iter().filter(|s| s.iter().any(|t| t == p)).count();
            let w = idf.weight(p);
            if w > ln_l + 1e-12 || w < -1e-12 {
                return Err(format!("weight {w} of {p} outside [0, ln {l}]"));
            }
            if df == l && w != 0.0 {
                return Err(format!("ubiquitous {p} has weight {w}"));
            }
            if df > 0 && (w - (l as f64 / df as f64).ln()).abs() > 1e-12 {
                return Err(format!("{p}: weight {w}, df {df}, L {l}"));
            }
        }
        let distinct: HashSet<&String> = corpus.iter().flatten().collect();
        if idf.entries().count() != distinct.len() {
            return Err("idf table lists wordpieces outside the corpus".into());
        }
    }
    Ok(format!(
        "greedy match = exhaustive enumeration on {GREEDY_INSTANCES} instances (tol {GREEDY_TOL:e}); idf invariants on {IDF_CORPORA} corpora"
    ))
}

// ------------------------------------------------------------ pipeline

fn full_run(config: &Path, run_dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let s = |p: &Path| p.to_str().unwrap().to_string();
    for args in [
        vec!["roundtrip".into(), "--config".into(), s(config), "--run-dir".into(), s(run_dir), "--offline".into()],
        vec!["score".into(), "--run-dir".into(), s(run_dir), "--offline".into()],
        vec!["evaluate".into(), "--run-dir".into(), s(run_dir)],
    ] {
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        let (code, _, stderr) = common::rttqe(&argv);
        if code != 0 {
            return Err(format!("{} exited {code}: {stderr}", argv[0]));
        }
    }
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(run_dir.join("report")).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        out.insert(
            path.file_name().unwrap().to_string_lossy().into_owned(),
            fs::read(&path).map_err(|e| e.to_string())?,
        );
    }
    Ok(out)
}

fn pipeline_determinism() -> Outcome {
    let first = common::fixture_run();
    let second = common::fixture_run();
    let a = full_run(&first.path().join("run/run-echo.toml"), &first.path().join("out"))?;
    let b = full_run(&second.path().join("run/run-echo.toml"), &second.path().join("out"))?;
    let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
    check(
        a.len() >= 5 && a.keys().eq(b.keys()) && differing.is_empty(),
        format!("{} report files, {} differ {differing:?}", a.len(), differing.len()),
    )
}

fn paraphrase_ordering() -> Outcome {
    let tmp = common::fixture_paws();
    let fixtures = tmp.path();
    let out = fixtures.join("p");
    let paws = fixtures.join("paws/paws_qqp_200.tsv");
    let config = fixtures.join("paws/paws.toml");
    let argv = [
        "paraphrase",
        "--paws",
        paws.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--metrics",
        "rtt-sentbleu,rtt-sbert,rtt-bertscore",
        "--out",
        out.to_str().unwrap(),
        "--offline",
    ];
    let (code, _, stderr) = common::rttqe(&argv);
    if code != 0 {
        return Err(format!("paraphrase exited {code}: {stderr}"));
    }
    let table = fs::read_to_string(out.join("paraphrase_auc.tsv")).map_err(|e| e.to_string())?;
    let auc: HashMap<&str, f64> = table
        .lines()
        .skip(1)
        .filter_map(|l| {
            let (m, v) = l.split_once('\t')?;
            Some((m, v.parse().ok()?))
        })
        .collect();
    let (bleu, sbert, bert) = (auc["rtt-sentbleu"], auc["rtt-sbert"], auc["rtt-bertscore"]);
    check(
        sbert > bleu && bert > bleu,
        format!("AUC-PR sbert {sbert:.4}, bertscore {bert:.4} vs sentbleu {bleu:.4}"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 6] = [
        ("lexical metric fidelity", lexical_fidelity),
        ("sentence-pair sentBLEU spot check", sentence_pair_spot_check),
        ("statistics oracle suite", stats_oracles),
        ("semantic metric properties", semantic_properties),
        ("pipeline determinism", pipeline_determinism),
        ("offline paraphrase ordering", paraphrase_ordering),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
