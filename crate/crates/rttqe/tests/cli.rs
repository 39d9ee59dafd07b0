mod common;

use std::fs;
use std::path::Path;
use std::sync::Arc;

use common::{fixture_run, fixtures, rttqe, MockServer, Reply};
use rttqe::providers::{Cache, Provider, ProviderConfig, ProviderError, ProviderKind};

const NO_HUMAN: (&str, &str) = ("da = \"human/da.csv\"\ndarr = \"human/darr.tsv\"", "");

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a config next to the fixture run by editing `run-echo.toml`.
fn variant(run: &Path, name: &str, edits: &[(&str, &str)]) -> std::path::PathBuf {
    let mut text = fs::read_to_string(run.join("run-echo.toml")).unwrap();
    for (from, to) in edits {
        assert!(text.contains(from), "{from}");
        text = text.replace(from, to);
    }
    let path = run.join(name);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn full_offline_run_and_warm_rerun() {
    let tmp = fixture_run();
    let run = tmp.path().join("run");
    let out = tmp.path().join("out");
    let (code, stdout, stderr) = rttqe(&["roundtrip", "--config", s(&run.join("run-table.toml")), "--run-dir", s(&out), "--offline"]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("5 systems x 12 segments"), "{stdout}");

    let (code, stdout, stderr) = rttqe(&["score", "--run-dir", s(&out), "--offline"]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.starts_with("system\trtt-bleu\trtt-sentbleu\trtt-chrf\trtt-sbert\trtt-bertscore\n"), "{stdout}");
    for m in ["rtt-bleu", "rtt-sentbleu", "rtt-chrf", "rtt-sbert", "rtt-bertscore"] {
        assert!(out.join(format!("scores.{m}.jsonl")).is_file());
    }

    let (code, stdout, stderr) = rttqe(&["evaluate", "--run-dir", s(&out)]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("system-level Pearson r"));
    let report = out.join("report");
    for f in ["system_level.tsv", "segment_level.tsv", "variance.tsv", "da_variance.tsv", "report.json", "topn.rtt-sbert.en-de.csv"] {
        assert!(report.join(f).is_file(), "{f}");
    }
    let segment = fs::read_to_string(report.join("segment_level.tsv")).unwrap();
    assert!(segment.contains("rtt-bleu\t-\n"), "{segment}");

    let again = tmp.path().join("again");
    let (code, stdout, _) = rttqe(&["roundtrip", "--config", s(&run.join("run-table.toml")), "--run-dir", s(&again), "--offline"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("0 requests issued"), "{stdout}");
    let (_, stdout, _) = rttqe(&["score", "--run-dir", s(&again), "--offline"]);
    assert!(stdout.contains("0 requests issued"), "{stdout}");
    assert_eq!(
        fs::read_to_string(out.join("records.jsonl")).unwrap(),
        fs::read_to_string(again.join("records.jsonl")).unwrap()
    );
}

#[test]
fn echo_round_trip_equals_system_output() {
    let tmp = fixture_run();
    let run = tmp.path().join("run");
    let out = tmp.path().join("out");
    let (code, _, stderr) = rttqe(&["roundtrip", "--config", s(&run.join("run-echo.toml")), "--run-dir", s(&out), "--offline"]);
    assert_eq!(code, 0, "{stderr}");
    let records = rttqe::rundir::read_records(&out).unwrap();
    assert_eq!(records.len(), 60);
    assert!(records.iter().all(|r| r.round_trip.text == r.ft_output.text && r.bt_provider_id == "echo"));
}

#[test]
fn identity_round_trip_scores_100() {
    let tmp = fixture_run();
    let run = tmp.path().join("run");
    fs::create_dir(run.join("identity")).unwrap();
    fs::copy(run.join("testset/source.en"), run.join("identity/copy.de")).unwrap();
    let cfg = variant(&run, "identity.toml", &[("dir = \"systems\"", "dir = \"identity\""), NO_HUMAN]);
    let out = tmp.path().join("out");
    let (code, _, stderr) = rttqe(&["roundtrip", "--config", s(&cfg), "--run-dir", s(&out), "--offline"]);
    assert_eq!(code, 0, "{stderr}");
    let (code, stdout, stderr) = rttqe(&["score", "--run-dir", s(&out), "--offline"]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("copy\t100.0000\t100.0000\t100.0000\t100.0000\t100.0000"), "{stdout}");
}

#[test]
fn missing_source_is_a_config_error_naming_the_path() {
    let tmp = fixture_run();
    let run = tmp.path().join("run");
    fs::remove_file(run.join("testset/source.en")).unwrap();
    let (code, _, stderr) = rttqe(&["roundtrip", "--config", s(&run.join("run-echo.toml")), "--offline"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("source.en"), "{stderr}");
}

#[test]
fn unknown_metric_lists_valid_names() {
    let tmp = fixture_run();
    let run = tmp.path().join("run");
    let out = tmp.path().join("out");
    assert_eq!(rttqe(&["roundtrip", "--config", s(&run.join("run-echo.toml")), "--run-dir", s(&out), "--offline"]).0, 0);
    let (code, _, stderr) = rttqe(&["score", "--run-dir", s(&out), "--metrics", "rtt-meteor"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("rtt-meteor") && stderr.contains("rtt-bertscore"), "{stderr}");
}

#[test]
fn missing_embedding_exits_3() {
    let tmp = fixture_run();
    let run = tmp.path().join("run");
    let embeddings = run.join("embeddings.jsonl");
    let text = fs::read_to_string(&embeddings).unwrap();
    let first_output = fs::read_to_string(run.join("systems/online-A.de")).unwrap();
    let first_output = first_output.lines().next().unwrap();
    let needle = format!("{{\"text\": {}", serde_json::to_string(first_output).unwrap());
    let kept: String = text.lines().filter(|l| !l.starts_with(&needle)).map(|l| format!("{l}\n")).collect();
    assert!(kept.len() < text.len());
    fs::write(&embeddings, kept).unwrap();

    let out = tmp.path().join("out");
    assert_eq!(rttqe(&["roundtrip", "--config", s(&run.join("run-echo.toml")), "--run-dir", s(&out), "--offline"]).0, 0);
    let (code, _, stderr) = rttqe(&["score", "--run-dir", s(&out), "--metrics", "rtt-sbert", "--offline"]);
    assert_eq!(code, 3, "{stderr}");
    assert!(stderr.contains("missing embedding"), "{stderr}");
    let (code, _, _) = rttqe(&["score", "--run-dir", s(&out), "--metrics", "rtt-chrf", "--offline"]);
    assert_eq!(code, 0, "lexical metrics need no embeddings");
}

#[test]
fn single_system_correlation_is_undefined() {
    let tmp = fixture_run();
    let run = tmp.path().join("run");
    let cfg = variant(
        &run,
        "single.toml",
        &[
            ("dir = \"systems\"", "files = [\"systems/uedin.de\"]"),
            NO_HUMAN,
        ],
    );
    let out = tmp.path().join("out");
    assert_eq!(rttqe(&["roundtrip", "--config", s(&cfg), "--run-dir", s(&out), "--offline"]).0, 0);
    assert_eq!(rttqe(&["score", "--run-dir", s(&out), "--metrics", "rtt-chrf", "--offline"]).0, 0);
    fs::write(tmp.path().join("da.csv"), "system,score\nuedin,0.1\n").unwrap();
    let (code, stdout, stderr) = rttqe(&["evaluate", "--run-dir", s(&out), "--da", s(&tmp.path().join("da.csv"))]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("undefined (n<2)"), "{stdout}");
}

#[test]
fn paraphrase_without_positives_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let paws = tmp.path().join("neg.tsv");
    fs::write(&paws, "id\tsentence1\tsentence2\tlabel\n1\ta b\tb a\t0\n2\tc d\td c\t0\n").unwrap();
    let (code, _, stderr) = rttqe(&["paraphrase", "--paws", s(&paws), "--metrics", "rtt-sentbleu", "--out", s(&tmp.path().join("o"))]);
    assert_eq!(code, 2);
    assert!(stderr.contains("positive"), "{stderr}");
}

#[test]
fn paraphrase_rejects_corpus_bleu() {
    let paws = fixtures().join("paws/paws_qqp_200.tsv");
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, stderr) = rttqe(&["paraphrase", "--paws", s(&paws), "--metrics", "rtt-bleu", "--out", s(tmp.path())]);
    assert_eq!(code, 2, "{stderr}");
}

#[test]
fn paraphrase_writes_curves_and_idf() {
    let tmp = common::fixture_paws();
    let f = tmp.path();
    let out = f.join("p");
    let (code, stdout, stderr) = rttqe(&[
        "paraphrase",
        "--paws",
        s(&f.join("paws/paws_qqp_200.tsv")),
        "--config",
        s(&f.join("paws/paws.toml")),
        "--out",
        s(&out),
        "--offline",
    ]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("200 pairs, 60 paraphrases"), "{stdout}");
    for file in ["paraphrase_auc.tsv", "paraphrase_scores.tsv", "pr.rtt-sbert.csv", "idf_dump.tsv", "report.json"] {
        assert!(out.join(file).is_file(), "{file}");
    }
    assert!(fs::read_to_string(out.join("idf_dump.tsv")).unwrap().starts_with("# corpus_size=200 "));
}

#[test]
fn table_failure_keeps_earlier_items_cached() {
    let tmp = tempfile::tempdir().unwrap();
    let table = tmp.path().join("bt.tsv");
    fs::write(&table, "s1\tt1\ns2\tt2\ns3\tt3\ns4\tt4\ns6\tt6\n").unwrap();
    let cache = Arc::new(Cache::open(tmp.path().join("cache")).unwrap());
    let cfg = ProviderConfig::new("bt", ProviderKind::Translation, format!("table:{}", table.display()));
    let p = Provider::new(cfg, Some(Arc::clone(&cache)), true).unwrap();
    let input: Vec<String> = (1..=6).map(|i| format!("s{i}")).collect();
    match p.translate_batch(&input, "de", "en") {
        Err(ProviderError::MissingTranslation { index, text, .. }) => assert_eq!((index, text.as_str()), (4, "s5")),
        other => panic!("{other:?}"),
    }
    for (i, text) in input.iter().enumerate() {
        assert_eq!(cache.contains(&p.translation_key(text, "de", "en")), i < 4, "item {i}");
    }
}

#[test]
fn unreachable_bt_service_exits_4() {
    let server = MockServer::start(|_, _| Reply::status(502));
    let tmp = fixture_run();
    let run = tmp.path().join("run");
    let cfg = variant(
        &run,
        "http.toml",
        &[("endpoint = \"echo:\"", &format!("endpoint = \"{}\"\nmax_retries = 1\nbackoff_ms = 1\nrate_limit = 1000.0", server.url))],
    );
    let (code, _, stderr) = rttqe(&["roundtrip", "--config", s(&cfg), "--run-dir", s(&tmp.path().join("o"))]);
    assert_eq!(code, 4, "{stderr}");
    assert!(stderr.contains("502"), "{stderr}");

    let (code, _, stderr) = rttqe(&["roundtrip", "--config", s(&cfg), "--run-dir", s(&tmp.path().join("o2")), "--offline"]);
    assert_eq!(code, 3, "{stderr}");
    assert!(stderr.contains("--offline"), "{stderr}");
}

#[test]
fn locked_run_directory_is_refused() {
    let tmp = fixture_run();
    let run = tmp.path().join("run");
    let out = tmp.path().join("out");
    assert_eq!(rttqe(&["roundtrip", "--config", s(&run.join("run-echo.toml")), "--run-dir", s(&out), "--offline"]).0, 0);
    fs::write(out.join(".lock"), "1").unwrap();
    let (code, _, stderr) = rttqe(&["score", "--run-dir", s(&out), "--offline"]);
    assert_ne!(code, 0);
    assert!(stderr.contains("locked"), "{stderr}");
}
