//! The `rttqe` command line.
//!
//! Exit codes: 0 success, 2 user or configuration error, 3 missing
//! resource, 4 provider failure.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rttqe_core::corpus_io::{
    load_darr, load_human_judgments, load_paws, load_system_outputs, load_testset, load_win_ratios, CorpusError,
    HumanJudgmentSet, Referents,
};
use rttqe_core::meta_eval::TiePolicy;

use crate::config::{parse_metrics, Config, ConfigError, HumanConfig, SemanticRoute};
use crate::pipeline::{build_idf, run_round_trip, score_metric, MetricId, PipelineError, Resources, FORMAT_VERSION};
use crate::providers::{Cache, Provider, ProviderConfig, ProviderError, ProviderStats};
use crate::report::{self, EvaluateOptions, PairInput, ParaphraseResources, ReportError};
use crate::rundir::{self, FileDigest, Manifest, RoundTripSummary, RunDir, RunDirError, ScoreEntry, SubmissionEntry};

#[derive(Debug, Parser)]
#[command(name = "rttqe", version, about = "Round-trip translation quality estimation")]
pub struct Cli {
    /// Log more (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Translate every system's outputs back into the source language.
    Roundtrip(RoundtripArgs),
    /// Score the round trips of a run directory.
    Score(ScoreArgs),
    /// Correlate metric scores with human judgments.
    Evaluate(EvaluateArgs),
    /// Paraphrase detection quality (AUC-PR) of the metrics.
    Paraphrase(ParaphraseArgs),
}

#[derive(Debug, Args)]
struct RoundtripArgs {
    #[arg(long)]
    config: PathBuf,
    /// Defaults to `output.run_dir`, else a timestamped directory under `runs/`.
    #[arg(long)]
    run_dir: Option<PathBuf>,
    /// Forbid network access; remote providers must answer from the cache.
    #[arg(long)]
    offline: bool,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    run_dir: PathBuf,
    /// Comma-separated list; defaults to the configured metrics.
    #[arg(long)]
    metrics: Option<String>,
    #[arg(long)]
    offline: bool,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// One run directory per language pair.
    #[arg(long = "run-dir", required = true)]
    run_dirs: Vec<PathBuf>,
    /// Overrides the DA file recorded in the run (single run only).
    #[arg(long)]
    da: Option<PathBuf>,
    #[arg(long)]
    darr: Option<PathBuf>,
    #[arg(long)]
    win_ratios: Option<PathBuf>,
    /// Report directory; defaults to `<first run dir>/report`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    min_top_n: usize,
    /// Leave tied daRR pairs out instead of counting them as discordant.
    #[arg(long)]
    ignore_ties: bool,
}

#[derive(Debug, Args)]
struct ParaphraseArgs {
    /// TSV with columns id, sentence1, sentence2, label.
    #[arg(long)]
    paws: PathBuf,
    /// Provides embedding providers under [providers] and [semantic].
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "rtt-sentbleu,rtt-chrf,rtt-sbert,rtt-bertscore")]
    metrics: String,
    #[arg(long, default_value = "en")]
    lang: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    offline: bool,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            kind: "usage",
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "error[{}]: {}", self.kind, self.message)
    }
}

fn chain(e: &dyn std::error::Error) -> String {
    let mut s = e.to_string();
    let mut source = e.source();
    while let Some(cause) = source {
        let c = cause.to_string();
        if !s.contains(&c) {
            write!(s, ": {c}").unwrap();
        }
        source = cause.source();
    }
    s
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self {
            code: 2,
            kind: "config",
            message: chain(&e),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        Self {
            code: 2,
            kind: "input",
            message: chain(&e),
        }
    }
}

impl From<RunDirError> for CliError {
    fn from(e: RunDirError) -> Self {
        Self {
            code: 2,
            kind: "run-dir",
            message: chain(&e),
        }
    }
}

impl From<ProviderError> for CliError {
    fn from(e: ProviderError) -> Self {
        let (code, kind) = provider_class(&e);
        Self {
            code,
            kind,
            message: chain(&e),
        }
    }
}

fn provider_class(e: &ProviderError) -> (u8, &'static str) {
    match e {
        ProviderError::Config { .. } | ProviderError::KindMismatch { .. } => (2, "config"),
        ProviderError::MissingEmbedding { .. }
        | ProviderError::Offline { .. }
        | ProviderError::Fixture { .. }
        | ProviderError::Cache { .. } => (3, "missing-resource"),
        ProviderError::Request { .. }
        | ProviderError::Protocol { .. }
        | ProviderError::MissingTranslation { .. }
        | ProviderError::DimensionDrift { .. } => (4, "provider"),
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let (code, kind) = match &e {
            PipelineError::MissingResource { .. } => (3, "missing-resource"),
            other => other.provider_error().map_or((2, "pipeline"), provider_class),
        };
        Self {
            code,
            kind,
            message: chain(&e),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        let (code, kind) = match &e {
            ReportError::Provider(p) => provider_class(p),
            ReportError::MissingResource { .. } => (3, "missing-resource"),
            ReportError::Io { .. } => (2, "io"),
            _ => (2, "evaluation"),
        };
        Self {
            code,
            kind,
            message: chain(&e),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses arguments, runs the command and returns the process exit code.
pub fn main() -> u8 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let mut stdout = std::io::stdout().lock();
    match run(cli.command, &mut stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.code
        }
    }
}

fn run(command: Command, out: &mut dyn std::io::Write) -> CliResult<()> {
    let text = match command {
        Command::Roundtrip(a) => cmd_roundtrip(&a)?,
        Command::Score(a) => cmd_score(&a)?,
        Command::Evaluate(a) => cmd_evaluate(&a)?,
        Command::Paraphrase(a) => cmd_paraphrase(&a)?,
    };
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::usage(format!("writing to stdout: {e}")))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn system_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn open_cache(dir: &Path) -> CliResult<Arc<Cache>> {
    Cache::open(dir).map(Arc::new).map_err(|e| CliError {
        code: 3,
        kind: "missing-resource",
        message: format!("cannot open cache {}: {e}", dir.display()),
    })
}

fn digest(path: &Path) -> CliResult<FileDigest> {
    FileDigest::of(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn load_human(human: &HumanConfig, referents: &Referents) -> CliResult<Option<HumanJudgmentSet>> {
    let mut set = match (&human.da, &human.darr) {
        (Some(da), darr) => load_human_judgments(da, darr.as_deref(), referents)?,
        (None, Some(darr)) => HumanJudgmentSet {
            darr_pairs: load_darr(darr, referents)?,
            ..Default::default()
        },
        (None, None) => HumanJudgmentSet::default(),
    };
    if let Some(w) = &human.win_ratios {
        set.win_ratios = Some(load_win_ratios(w, referents)?);
    }
    let empty = human.da.is_none() && human.darr.is_none() && human.win_ratios.is_none();
    Ok((!empty).then_some(set))
}

fn cmd_roundtrip(args: &RoundtripArgs) -> CliResult<String> {
    let config = Config::load(&args.config)?;
    config.validate_for_roundtrip()?;
    let pair = config.pair()?;
    let ts_cfg = config.testset()?;
    let testset = load_testset(&ts_cfg.source, pair.clone(), ts_cfg.reference.as_deref())?;
    let files = config.submission_files()?;
    let submissions = files
        .iter()
        .map(|f| load_system_outputs(f, &testset))
        .collect::<Result<Vec<_>, _>>()?;
    let referents = Referents::new(
        submissions.iter().map(|s| s.system_id.clone()),
        testset.segment_ids().map(str::to_string),
    );
    load_human(&config.file.human, &referents)?;

    let run_path = match (&args.run_dir, &config.file.output.run_dir) {
        (Some(p), _) | (None, Some(p)) => p.clone(),
        (None, None) => config
            .base
            .join("runs")
            .join(format!("{pair}-{}", chrono::Utc::now().format("%Y%m%dT%H%M%SZ"))),
    };
    let run = RunDir::create(&run_path)?;
    let cache_dir = config.cache_dir();
    let cache = open_cache(&cache_dir)?;
    let bt = Provider::new(config.bt_provider()?.clone(), Some(cache), args.offline)?;

    let mut records = Vec::new();
    for submission in &submissions {
        log::info!("round trip for {}", submission.system_id);
        records.extend(run_round_trip(submission, &testset, &bt)?);
    }
    run.write_records(&records)?;

    let keys: String = records.iter().map(|r| r.cache_key.as_str()).collect();
    let stats = bt.stats();
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        tool: concat!("rttqe ", env!("CARGO_PKG_VERSION")).to_string(),
        created_at: now(),
        config: Some(std::fs::canonicalize(&args.config).unwrap_or_else(|_| args.config.clone())),
        pair: pair.clone(),
        testset: digest(&ts_cfg.source)?,
        references: ts_cfg.reference.as_deref().map(digest).transpose()?,
        submissions: files
            .iter()
            .map(|f| {
                Ok(SubmissionEntry {
                    system_id: system_id(f),
                    file: digest(f)?,
                })
            })
            .collect::<CliResult<_>>()?,
        bt_provider: bt.config().clone(),
        semantic: config.semantic_route(&pair.src)?,
        human: config.file.human.clone(),
        metrics: config.metrics()?,
        cache_dir,
        roundtrip: Some(RoundTripSummary {
            created_at: now(),
            systems: submissions.len(),
            segments: testset.len(),
            stats,
            cache_digest: rundir::sha256_hex(keys.as_bytes()),
        }),
        scores: BTreeMap::new(),
    };
    run.write_manifest(&manifest)?;
    Ok(format!(
        "round trip {pair}: {} systems x {} segments via {}\n{} requests issued, {} cache hits\nrun directory: {}\n",
        submissions.len(),
        testset.len(),
        bt.id(),
        stats.requests,
        stats.cache_hits,
        run.path().display()
    ))
}

fn build_provider(cfg: &Option<ProviderConfig>, cache: &Arc<Cache>, offline: bool) -> CliResult<Option<Provider>> {
    cfg.as_ref()
        .map(|c| Provider::new(c.clone(), Some(Arc::clone(cache)), offline))
        .transpose()
        .map_err(Into::into)
}

fn default_metrics(route: &SemanticRoute) -> Vec<MetricId> {
    MetricId::ALL.into_iter().filter(|m| route.satisfies(*m)).collect()
}

fn cmd_score(args: &ScoreArgs) -> CliResult<String> {
    let run = RunDir::open(&args.run_dir)?;
    let mut manifest = run.read_manifest()?;
    let metrics = match &args.metrics {
        Some(list) => parse_metrics(&[list]).map_err(CliError::usage)?,
        None if !manifest.metrics.is_empty() => manifest.metrics.clone(),
        None => default_metrics(&manifest.semantic),
    };
    if metrics.is_empty() {
        return Err(CliError::usage(format!("no metrics selected (valid: {})", MetricId::valid_names())));
    }
    let records = run.read_records()?;
    if records.is_empty() {
        return Err(CliError::usage(format!("{} has no round-trip records", run.path().display())));
    }
    let cache = open_cache(&manifest.cache_dir)?;
    let needs = |m: MetricId| metrics.contains(&m);
    let sentence = if needs(MetricId::RttSbert) {
        build_provider(&manifest.semantic.sentence, &cache, args.offline)?
    } else {
        None
    };
    let token = if needs(MetricId::RttBertScore) {
        build_provider(&manifest.semantic.token, &cache, args.offline)?
    } else {
        None
    };

    let mut by_system: BTreeMap<&str, Vec<_>> = BTreeMap::new();
    for r in &records {
        by_system.entry(r.system_id.as_str()).or_default().push(r.clone());
    }
    let idf = match &token {
        Some(t) => {
            let first = by_system.values().next().expect("records are non-empty");
            let inputs: Vec<String> = first.iter().map(|r| r.input.text.clone()).collect();
            Some(build_idf(t, &inputs).map_err(PipelineError::from)?)
        }
        None => None,
    };
    let resources = Resources {
        sentence: sentence.as_ref(),
        token: token.as_ref(),
        idf: idf.as_ref(),
    };

    let mut summary: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for &metric in &metrics {
        let sets = by_system
            .values()
            .map(|recs| score_metric(metric, recs, &resources))
            .collect::<Result<Vec<_>, _>>()?;
        for s in &sets {
            summary
                .entry(by_system.keys().find(|k| **k == s.system_id).copied().unwrap_or_default())
                .or_default()
                .push(s.system_score);
        }
        let sha256 = run.write_scores(metric, &sets)?;
        let providers = match metric {
            MetricId::RttSbert => sentence.iter().map(|p| p.id().to_string()).collect(),
            MetricId::RttBertScore => token.iter().map(|p| p.id().to_string()).collect(),
            _ => Vec::new(),
        };
        manifest.scores.insert(
            metric,
            ScoreEntry {
                created_at: now(),
                file: RunDir::scores_file(metric),
                sha256,
                providers,
            },
        );
    }
    run.write_manifest(&manifest)?;

    let mut table = String::from("system");
    for m in &metrics {
        write!(table, "\t{m}").unwrap();
    }
    table.push('\n');
    for (system, scores) in &summary {
        table.push_str(system);
        for s in scores {
            write!(table, "\t{s:.4}").unwrap();
        }
        table.push('\n');
    }
    rundir::write_atomic(&run.path().join("summary.tsv"), table.as_bytes())?;
    let requests: u64 = [&sentence, &token]
        .iter()
        .filter_map(|p| p.as_ref().map(|p| p.stats()))
        .map(|s: ProviderStats| s.requests)
        .sum();
    Ok(format!("{table}{requests} requests issued\n"))
}

fn cmd_evaluate(args: &EvaluateArgs) -> CliResult<String> {
    let mut run_dirs = args.run_dirs.clone();
    run_dirs.dedup();
    let overrides = args.da.is_some() || args.darr.is_some() || args.win_ratios.is_some();
    if overrides && run_dirs.len() > 1 {
        return Err(CliError::usage("--da/--darr/--win-ratios apply to a single --run-dir"));
    }
    let mut inputs = Vec::new();
    let mut locks = Vec::new();
    for dir in &run_dirs {
        let run = RunDir::open(dir)?;
        let manifest = run.read_manifest()?;
        let records = run.read_records()?;
        let mut segments: Vec<String> = Vec::new();
        for r in &records {
            if !segments.contains(&r.segment_id) && r.system_id == records[0].system_id {
                segments.push(r.segment_id.clone());
            }
        }
        let referents = Referents::new(manifest.submissions.iter().map(|s| s.system_id.clone()), segments);
        let human_cfg = if overrides {
            HumanConfig {
                da: args.da.clone(),
                darr: args.darr.clone(),
                win_ratios: args.win_ratios.clone(),
            }
        } else {
            manifest.human.clone()
        };
        let human = load_human(&human_cfg, &referents)?
            .ok_or_else(|| CliError::usage(format!("no human judgments configured for {}", dir.display())))?;
        if manifest.scores.is_empty() {
            return Err(CliError::usage(format!("{} has no scores; run `rttqe score` first", dir.display())));
        }
        let mut scores = BTreeMap::new();
        for &metric in manifest.scores.keys() {
            scores.insert(metric, rundir::read_scores(run.path(), metric)?);
        }
        inputs.push(PairInput {
            pair: manifest.pair.to_string(),
            scores,
            human,
        });
        locks.push(run);
    }
    let opts = EvaluateOptions {
        min_top_n: args.min_top_n,
        ties: if args.ignore_ties { TiePolicy::Ignore } else { TiePolicy::Discordant },
    };
    let report = report::evaluate(&inputs, opts)?;
    let out_dir = args.out.clone().unwrap_or_else(|| run_dirs[0].join("report"));
    report::write_evaluation(&report, &out_dir)?;
    drop(locks);
    Ok(format!(
        "system-level Pearson r\n{}\nsegment-level Kendall tau (daRR)\n{}\nreport: {}\n",
        report::system_level_table(&report),
        report::segment_level_table(&report),
        out_dir.display()
    ))
}

fn cmd_paraphrase(args: &ParaphraseArgs) -> CliResult<String> {
    let metrics = parse_metrics(&[&args.metrics]).map_err(CliError::usage)?;
    if metrics.contains(&MetricId::RttBleu) {
        return Err(ReportError::NotPairwise(MetricId::RttBleu).into());
    }
    let pairs = load_paws(&args.paws)?;
    let (route, cache) = match &args.config {
        Some(path) => {
            let config = Config::load(path)?;
            let route = config.semantic_route(&args.lang)?;
            (route, Some(open_cache(&config.cache_dir())?))
        }
        None => (SemanticRoute::default(), None),
    };
    for m in &metrics {
        if !route.satisfies(*m) {
            return Err(ReportError::MissingResource {
                metric: *m,
                resource: "an embedding provider (pass --config with a [semantic] route)",
            }
            .into());
        }
    }
    let provider = |cfg: &Option<ProviderConfig>| -> CliResult<Option<Provider>> {
        cfg.as_ref()
            .map(|c| Provider::new(c.clone(), cache.clone(), args.offline))
            .transpose()
            .map_err(Into::into)
    };
    let sentence = if metrics.contains(&MetricId::RttSbert) { provider(&route.sentence)? } else { None };
    let token = if metrics.contains(&MetricId::RttBertScore) { provider(&route.token)? } else { None };
    let resources = ParaphraseResources {
        sentence: sentence.as_ref(),
        token: token.as_ref(),
    };
    let report = report::paraphrase(&pairs, &args.lang, &metrics, &resources)?;
    report::write_paraphrase(&report, &args.out)?;
    Ok(format!(
        "{} pairs, {} paraphrases\n{}report: {}\n",
        report.pairs,
        report.positives,
        report::auc_table(&report),
        args.out.display()
    ))
}

/// Runs the CLI in-process with the given arguments, capturing stdout.
pub fn run_args<I, T>(args: I) -> (u8, String, String)
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => return (2, String::new(), e.to_string()),
    };
    let mut out = Vec::new();
    match run(cli.command, &mut out) {
        Ok(()) => (0, String::from_utf8_lossy(&out).into_owned(), String::new()),
        Err(e) => {
            let _ = out.flush();
            (e.code, String::from_utf8_lossy(&out).into_owned(), e.to_string())
        }
    }
}
