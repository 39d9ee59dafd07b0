//! Run configuration, read from TOML and validated before any provider is
//! contacted. Relative paths are resolved against the config file's
//! directory.
//!
//! ```toml
//! [testset]
//! pair = "en-de"
//! source = "testset/source.en"
//!
//! [submissions]
//! dir = "systems"            # or: files = ["systems/a.de", ...]
//!
//! [roundtrip]
//! bt_provider = "echo"
//!
//! [providers.echo]
//! kind = "translation"
//! endpoint = "echo:"
//!
//! [providers.sbert]
//! kind = "embedding"
//! endpoint = "fixture:embeddings/sentence.jsonl"
//!
//! [semantic]
//! sentence = { en = "sbert" }   # language -> provider, "*" matches any
//!
//! [human]
//! da = "human/da.csv"
//! darr = "human/darr.tsv"
//!
//! [scoring]
//! metrics = ["rtt-sentbleu", "rtt-sbert"]
//!
//! [output]
//! run_dir = "runs/en-de"
//! cache_dir = ".rttqe-cache"
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rttqe_core::corpus_io::LanguagePair;
use serde::{Deserialize, Serialize};

use crate::pipeline::MetricId;
use crate::providers::{ProviderConfig, ProviderKind};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{what} not found: {path}")]
    MissingPath { what: String, path: PathBuf },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSetConfig {
    pub pair: String,
    pub source: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmissionsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundTripConfig {
    pub bt_provider: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemanticConfig {
    #[serde(default)]
    pub sentence: BTreeMap<String, String>,
    #[serde(default)]
    pub token: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub da: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub darr: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub win_ratios: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringConfig {
    #[serde(default)]
    pub metrics: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
}

/// The raw TOML document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub testset: Option<TestSetConfig>,
    #[serde(default)]
    pub submissions: SubmissionsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roundtrip: Option<RoundTripConfig>,
    #[serde(default)]
    pub providers: BTreeMap<String, ProviderConfig>,
    #[serde(default)]
    pub semantic: SemanticConfig,
    #[serde(default)]
    pub human: HumanConfig,
    #[serde(default)]
    pub scoring: ScoringConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Sentence and token embedding providers for one language.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SemanticRoute {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence: Option<ProviderConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<ProviderConfig>,
}

impl SemanticRoute {
    pub fn satisfies(&self, metric: MetricId) -> bool {
        match metric {
            MetricId::RttSbert => self.sentence.is_some(),
            MetricId::RttBertScore => self.token.is_some(),
            _ => true,
        }
    }
}

/// A loaded config with paths resolved and cross-references checked.
#[derive(Debug, Clone)]
pub struct Config {
    pub path: PathBuf,
    pub base: PathBuf,
    pub file: ConfigFile,
}

fn lookup<'a>(routes: &'a BTreeMap<String, String>, lang: &str) -> Option<&'a String> {
    let primary = lang.split(['-', '_']).next().unwrap_or(lang);
    routes
        .get(lang)
        .or_else(|| routes.get(primary))
        .or_else(|| routes.get("*"))
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut file: ConfigFile = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        let base = fs::canonicalize(&base).unwrap_or(base);
        for (id, provider) in &mut file.providers {
            if provider.provider_id.is_empty() {
                provider.provider_id = id.clone();
            } else if &provider.provider_id != id {
                return Err(ConfigError::Invalid(format!(
                    "providers.{id}: provider_id {:?} differs from its table name",
                    provider.provider_id
                )));
            }
            provider.resolve_paths(&base);
        }
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(ts) = &mut file.testset {
            resolve(&mut ts.source);
            if let Some(r) = &mut ts.reference {
                resolve(r);
            }
        }
        file.submissions.dir.as_mut().map(resolve);
        file.submissions.files.iter_mut().for_each(resolve);
        file.human.da.as_mut().map(resolve);
        file.human.darr.as_mut().map(resolve);
        file.human.win_ratios.as_mut().map(resolve);
        file.output.run_dir.as_mut().map(resolve);
        file.output.cache_dir.as_mut().map(resolve);
        let config = Self {
            path: path.to_path_buf(),
            base,
            file,
        };
        config.validate_common()?;
        Ok(config)
    }

    fn provider(&self, id: &str, kind: ProviderKind, role: &str) -> Result<&ProviderConfig, ConfigError> {
        let p = self
            .file
            .providers
            .get(id)
            .ok_or_else(|| ConfigError::Invalid(format!("{role} refers to unknown provider {id:?}")))?;
        if p.kind != kind {
            return Err(ConfigError::Invalid(format!(
                "{role} needs a {kind} provider, but {id:?} is a {} provider",
                p.kind
            )));
        }
        Ok(p)
    }

    fn validate_common(&self) -> Result<(), ConfigError> {
        for p in self.file.providers.values() {
            p.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
            if let Some(path) = p.resource_path() {
                require(&path, &format!("resource of provider {}", p.provider_id))?;
            }
        }
        for (level, routes, kind) in [
            ("semantic.sentence", &self.file.semantic.sentence, ProviderKind::Embedding),
            ("semantic.token", &self.file.semantic.token, ProviderKind::Embedding),
        ] {
            for (lang, id) in routes {
                self.provider(id, kind, &format!("{level}.{lang}"))?;
            }
        }
        self.metrics()?;
        Ok(())
    }

    /// Checks everything a round-trip run needs.
    pub fn validate_for_roundtrip(&self) -> Result<(), ConfigError> {
        let ts = self.testset()?;
        let pair = self.pair()?;
        require(&ts.source, "source file")?;
        if let Some(r) = &ts.reference {
            require(r, "reference file")?;
        }
        self.submission_files()?;
        self.bt_provider()?;
        let human = &self.file.human;
        for (what, p) in [("DA file", &human.da), ("daRR file", &human.darr), ("win-ratio file", &human.win_ratios)] {
            if let Some(p) = p {
                require(p, what)?;
            }
        }
        let route = self.semantic_route(&pair.src)?;
        for m in self.metrics()? {
            if !route.satisfies(m) {
                return Err(ConfigError::Invalid(format!(
                    "metric {m} needs an embedding provider for language {:?} under [semantic]",
                    pair.src
                )));
            }
        }
        Ok(())
    }

    pub fn testset(&self) -> Result<&TestSetConfig, ConfigError> {
        self.file
            .testset
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("missing [testset] section".into()))
    }

    pub fn pair(&self) -> Result<LanguagePair, ConfigError> {
        self.testset()?
            .pair
            .parse()
            .map_err(|e: rttqe_core::corpus_io::CorpusError| ConfigError::Invalid(e.to_string()))
    }

    pub fn bt_provider(&self) -> Result<&ProviderConfig, ConfigError> {
        let rt = self
            .file
            .roundtrip
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("missing [roundtrip] section".into()))?;
        self.provider(&rt.bt_provider, ProviderKind::Translation, "roundtrip.bt_provider")
    }

    /// System output files, sorted by path.
    pub fn submission_files(&self) -> Result<Vec<PathBuf>, ConfigError> {
        let subs = &self.file.submissions;
        let mut files = Vec::new();
        if let Some(dir) = &subs.dir {
            require(dir, "submission directory")?;
            let entries = fs::read_dir(dir).map_err(|source| ConfigError::Read {
                path: dir.clone(),
                source,
            })?;
            for entry in entries {
                let path = entry
                    .map_err(|source| ConfigError::Read {
                        path: dir.clone(),
                        source,
                    })?
                    .path();
                let hidden = path.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.'));
                if path.is_file() && !hidden {
                    files.push(path);
                }
            }
        }
        for f in &subs.files {
            require(f, "submission file")?;
            files.push(f.clone());
        }
        files.sort();
        files.dedup();
        if files.is_empty() {
            return Err(ConfigError::Invalid("no system submissions configured under [submissions]".into()));
        }
        let mut stems = std::collections::BTreeSet::new();
        for f in &files {
            let stem = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            if !stems.insert(stem.clone()) {
                return Err(ConfigError::Invalid(format!("two submissions share the system id {stem:?}")));
            }
        }
        Ok(files)
    }

    /// Embedding providers for `lang`.
    pub fn semantic_route(&self, lang: &str) -> Result<SemanticRoute, ConfigError> {
        let sem = &self.file.semantic;
        let pick = |routes: &BTreeMap<String, String>, role: &str| -> Result<Option<ProviderConfig>, ConfigError> {
            lookup(routes, lang)
                .map(|id| self.provider(id, ProviderKind::Embedding, role).cloned())
                .transpose()
        };
        Ok(SemanticRoute {
            sentence: pick(&sem.sentence, "semantic.sentence")?,
            token: pick(&sem.token, "semantic.token")?,
        })
    }

    pub fn metrics(&self) -> Result<Vec<MetricId>, ConfigError> {
        parse_metrics(&self.file.scoring.metrics).map_err(ConfigError::Invalid)
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.file
            .output
            .cache_dir
            .clone()
            .unwrap_or_else(|| self.base.join(".rttqe-cache"))
    }
}

fn require(path: &Path, what: &str) -> Result<(), ConfigError> {
    if path.exists() {
        Ok(())
    } else {
        Err(ConfigError::MissingPath {
            what: what.to_string(),
            path: path.to_path_buf(),
        })
    }
}

/// Parses a metric list, accepting comma-separated entries; duplicates are
/// dropped and order is kept.
pub fn parse_metrics<S: AsRef<str>>(names: &[S]) -> Result<Vec<MetricId>, String> {
    let mut out = Vec::new();
    for name in names.iter().flat_map(|n| n.as_ref().split(',')) {
        if name.trim().is_empty() {
            continue;
        }
        let m: MetricId = name.parse().map_err(|e: crate::pipeline::UnknownMetric| e.to_string())?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, contents: &str) -> PathBuf {
        let p = dir.join(name);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(&p, contents).unwrap();
        p
    }

    const CONFIG: &str = r#"
[testset]
pair = "en-de"
source = "src.en"

[submissions]
dir = "systems"

[roundtrip]
bt_provider = "echo"

[providers.echo]
kind = "translation"
endpoint = "echo:"

[providers.sent]
kind = "embedding"
endpoint = "fixture:emb.jsonl"

[semantic]
sentence = { "*" = "sent" }

[scoring]
metrics = ["rtt-sentbleu", "rtt-sbert"]
"#;

    fn setup() -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "src.en", "a\n");
        write(dir.path(), "systems/b.de", "x\n");
        write(dir.path(), "systems/a.de", "y\n");
        write(dir.path(), "emb.jsonl", "");
        let cfg = write(dir.path(), "run.toml", CONFIG);
        (dir, cfg)
    }

    #[test]
    fn loads_and_resolves() {
        let (dir, path) = setup();
        let c = Config::load(&path).unwrap();
        c.validate_for_roundtrip().unwrap();
        let base = fs::canonicalize(dir.path()).unwrap();
        assert_eq!(c.testset().unwrap().source, base.join("src.en"));
        let files = c.submission_files().unwrap();
        assert!(files[0].ends_with("a.de") && files[1].ends_with("b.de"));
        assert_eq!(c.bt_provider().unwrap().provider_id, "echo");
        let route = c.semantic_route("en").unwrap();
        assert!(route.sentence.unwrap().endpoint.starts_with("fixture:/"));
        assert!(route.token.is_none());
        assert_eq!(c.metrics().unwrap(), [MetricId::RttSentBleu, MetricId::RttSbert]);
    }

    #[test]
    fn missing_source_names_the_path() {
        let (dir, path) = setup();
        fs::remove_file(dir.path().join("src.en")).unwrap();
        let err = Config::load(&path).unwrap().validate_for_roundtrip().unwrap_err();
        assert!(matches!(err, ConfigError::MissingPath { .. }));
        assert!(err.to_string().contains("src.en"));
    }

    #[test]
    fn rejects_unknown_keys_and_metrics() {
        let (dir, _) = setup();
        let p = write(dir.path(), "typo.toml", &CONFIG.replace("bt_provider", "bt_provder"));
        assert!(matches!(Config::load(&p), Err(ConfigError::Parse { .. })));
        let p = write(dir.path(), "metric.toml", &CONFIG.replace("rtt-sbert", "rtt-bleurt"));
        let err = Config::load(&p).unwrap_err();
        assert!(err.to_string().contains("rtt-chrf"), "{err}");
    }

    #[test]
    fn semantic_metric_without_route_is_rejected() {
        let (dir, _) = setup();
        let p = write(dir.path(), "tok.toml", &CONFIG.replace("\"rtt-sbert\"", "\"rtt-bertscore\""));
        let err = Config::load(&p).unwrap().validate_for_roundtrip().unwrap_err();
        assert!(err.to_string().contains("rtt-bertscore"));
    }

    #[test]
    fn metric_lists() {
        assert_eq!(
            parse_metrics(&["rtt-bleu,rtt-chrf", "rtt-bleu"]).unwrap(),
            [MetricId::RttBleu, MetricId::RttChrf]
        );
        assert!(parse_metrics(&["nope"]).is_err());
    }
}
