//! Declarative run configuration and the wiring from it to live components.
//!
//! A config is one TOML file. String values may reference environment
//! variables as `${NAME}`; secrets are never read from the file itself, only
//! from the environment variables named by `api_key_env` settings.
//! Relative paths are resolved against the directory holding the file.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{load_dataset, Dataset, DatasetFormat, Label};
use crate::error::{Error, Result};
use crate::llm::{ChatLlm, LanguageModel, MockChat, MockFallback, RemoteChat, RemoteChatConfig};
use crate::orchestrator::{self, dataset_sha256, Components, RunConfig, RunOptions, RunResult};
use crate::retrieval::{build_knowledge_pack, VocabPreset};
use crate::seeds;
use crate::sim::{OracleLlm, OracleLlmConfig, OracleSlm, OracleSlmConfig};
use crate::slm::{LinearSlm, RemoteSlm, RemoteSlmConfig, SlmHyper, SmallModel};
use crate::sources::{
    search_query, CorpusRecord, DocSource, FetchMode, KnowledgeEntry, KnowledgeSource, NewsCorpus, NewsSearch,
    NewsSearchClient, NewsSearchConfig, ResponseCache, RetrievedDoc, StaticKnowledge, StaticSearch, WikipediaClient,
    WikipediaConfig,
};

pub const APP_CONFIG_SNAPSHOT: &str = "app_config.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    /// Items with `timestamp <= split_cutoff` are labeled past events.
    pub split_cutoff: i64,
    #[serde(default = "default_format")]
    pub format: DatasetFormat,
}

fn default_format() -> DatasetFormat {
    DatasetFormat::Jsonl
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CacheConfig {
    pub dir: Option<PathBuf>,
    pub mode: FetchMode,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmBackend {
    #[default]
    Remote,
    Mock,
    Oracle,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MockConfig {
    /// JSONL of `{prompt_hash, response}`.
    pub script: Option<PathBuf>,
    pub fallback: MockFallback,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmConfig {
    pub backend: LlmBackend,
    pub remote: RemoteChatConfig,
    pub mock: MockConfig,
    pub oracle: OracleLlmConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlmBackend {
    #[default]
    Linear,
    Remote,
    Oracle,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlmConfig {
    pub backend: SlmBackend,
    pub linear: SlmHyper,
    pub remote: RemoteSlmConfig,
    pub oracle: OracleSlmConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchBackend {
    #[default]
    None,
    Api,
    /// BM25 over a local JSONL file in news-corpus format.
    Static,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub backend: SearchBackend,
    pub api: NewsSearchConfig,
    pub static_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnowledgeBackend {
    #[default]
    None,
    Wikipedia,
    /// JSONL of `{entity, summary}`.
    Static,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KnowledgeConfig {
    pub backend: KnowledgeBackend,
    pub wikipedia: WikipediaConfig,
    pub static_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub run_dir: Option<PathBuf>,
    #[serde(default)]
    pub run: RunConfig,
    /// Replaces `run.vocab` with a named vocabulary.
    #[serde(default)]
    pub vocab_preset: Option<VocabPreset>,
    #[serde(default)]
    pub cache: CacheConfig,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default)]
    pub slm: SlmConfig,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub knowledge: KnowledgeConfig,
}

fn interpolate(s: &str, path: &str) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find('}')
            .ok_or_else(|| Error::config(path, "unterminated `${` in value"))?;
        let name = &after[..end];
        let value = std::env::var(name)
            .map_err(|_| Error::config(path, format!("environment variable `{name}` is not set")))?;
        out.push_str(&value);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn interpolate_value(v: &mut toml::Value, path: &str) -> Result<()> {
    match v {
        toml::Value::String(s) => *s = interpolate(s, path)?,
        toml::Value::Array(a) => {
            for x in a {
                interpolate_value(x, path)?;
            }
        }
        toml::Value::Table(t) => {
            for (k, x) in t.iter_mut() {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                interpolate_value(x, &p)?;
            }
        }
        _ => {}
    }
    Ok(())
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl AppConfig {
    /// Parse TOML text. Relative paths are resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut value: toml::Value = toml::from_str(text).map_err(|e| Error::config("config", e.message()))?;
        interpolate_value(&mut value, "")?;
        let mut app: AppConfig = value.try_into().map_err(|e: toml::de::Error| Error::config("config", e.message()))?;
        app.resolve_paths(base_dir);
        app.apply_preset();
        Ok(app)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let base = if base.as_os_str().is_empty() { Path::new(".") } else { base };
        AppConfig::from_toml(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.dataset.path);
        for p in [
            self.run_dir.as_mut(),
            self.cache.dir.as_mut(),
            self.llm.mock.script.as_mut(),
            self.search.static_path.as_mut(),
            self.corpus.path.as_mut(),
            self.knowledge.static_path.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            resolve(base, p);
        }
    }

    pub fn apply_preset(&mut self) {
        if let Some(p) = self.vocab_preset {
            self.run.vocab = p.vocab();
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.run.validate()?;
        match self.llm.backend {
            LlmBackend::Remote if self.llm.remote.base_url.trim().is_empty() => {
                return Err(Error::config("llm.remote.base_url", "must be set for the remote backend"))
            }
            LlmBackend::Oracle => self.llm.oracle.validate()?,
            _ => {}
        }
        match self.slm.backend {
            SlmBackend::Linear => self.slm.linear.validate()?,
            SlmBackend::Oracle => self.slm.oracle.validate()?,
            SlmBackend::Remote if self.slm.remote.base_url.trim().is_empty() => {
                return Err(Error::config("slm.remote.base_url", "must be set for the remote backend"))
            }
            SlmBackend::Remote => {}
        }
        match self.search.backend {
            SearchBackend::Api if self.search.api.endpoint.is_none() => {
                return Err(Error::config("search.api.endpoint", "must be set for the api backend"))
            }
            SearchBackend::Static if self.search.static_path.is_none() => {
                return Err(Error::config("search.static_path", "must be set for the static backend"))
            }
            _ => {}
        }
        match self.knowledge.backend {
            KnowledgeBackend::Wikipedia if self.knowledge.wikipedia.base_url.is_none() => {
                return Err(Error::config("knowledge.wikipedia.base_url", "must be set for the wikipedia backend"))
            }
            KnowledgeBackend::Static if self.knowledge.static_path.is_none() => {
                return Err(Error::config("knowledge.static_path", "must be set for the static backend"))
            }
            _ => {}
        }
        if self.cache.mode == FetchMode::Replay && self.cache.dir.is_none() {
            return Err(Error::config("cache.dir", "replay mode needs a cache directory"));
        }
        Ok(())
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        load_dataset(&self.dataset.path, self.dataset.format, self.dataset.split_cutoff)
    }

    fn open_cache(&self) -> Result<Option<ResponseCache>> {
        self.cache.dir.as_ref().map(ResponseCache::open).transpose()
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Search documents from a news-corpus-format JSONL file.
pub fn load_static_search(path: &Path) -> Result<StaticSearch> {
    let records: Vec<CorpusRecord> = read_jsonl(path)?;
    StaticSearch::new(
        records
            .into_iter()
            .map(|r| RetrievedDoc {
                source: DocSource::SearchEngine,
                doc_id: r.id,
                text: r.text,
                published_at: r.published_at,
                event_id: r.event_id,
            })
            .collect(),
    )
}

pub fn load_static_knowledge(path: &Path) -> Result<StaticKnowledge> {
    let entries: Vec<KnowledgeEntry> = read_jsonl(path)?;
    Ok(StaticKnowledge::new(entries.into_iter().map(|e| (e.entity, e.summary))))
}

fn build_llm(app: &AppConfig, gold: &Arc<HashMap<String, Label>>) -> Result<Arc<dyn LanguageModel>> {
    let vocab = app.run.vocab.clone();
    Ok(match app.llm.backend {
        LlmBackend::Remote => Arc::new(ChatLlm::new(Arc::new(RemoteChat::new(app.llm.remote.clone())), vocab)),
        LlmBackend::Mock => {
            let fallback = app.llm.mock.fallback.clone();
            let mock = match &app.llm.mock.script {
                Some(p) => MockChat::load(p, fallback)?,
                None => MockChat::new(fallback),
            };
            Arc::new(ChatLlm::new(Arc::new(mock), vocab))
        }
        LlmBackend::Oracle => Arc::new(OracleLlm::new(
            app.llm.oracle.clone(),
            gold.clone(),
            seeds::derive(app.run.seed, &["oracle-llm"]),
        )?),
    })
}

fn build_search(app: &AppConfig, cache: &Option<ResponseCache>) -> Result<Option<Arc<dyn NewsSearch>>> {
    Ok(match app.search.backend {
        SearchBackend::None => None,
        SearchBackend::Api => {
            let mut client = NewsSearchClient::new(app.search.api.clone(), cache.clone(), app.cache.mode);
            if let Ok(key) = std::env::var(&app.search.api.api_key_env) {
                client = client.with_api_key(key);
            }
            Some(Arc::new(client))
        }
        SearchBackend::Static => Some(Arc::new(load_static_search(
            app.search.static_path.as_deref().expect("validated"),
        )?)),
    })
}

fn build_knowledge(app: &AppConfig, cache: &Option<ResponseCache>) -> Result<Option<Arc<dyn KnowledgeSource>>> {
    Ok(match app.knowledge.backend {
        KnowledgeBackend::None => None,
        KnowledgeBackend::Wikipedia => Some(Arc::new(WikipediaClient::new(
            app.knowledge.wikipedia.clone(),
            cache.clone(),
            app.cache.mode,
        ))),
        KnowledgeBackend::Static => Some(Arc::new(load_static_knowledge(
            app.knowledge.static_path.as_deref().expect("validated"),
        )?)),
    })
}

/// Instantiate every backend named by `app`. Oracle backends read their
/// gold labels from `dataset`.
pub fn build_components(app: &AppConfig, dataset: &Dataset) -> Result<Components> {
    app.validate()?;
    let gold: Arc<HashMap<String, Label>> = Arc::new(dataset.gold().into_iter().collect());
    let cache = app.open_cache()?;
    let slm_seed = seeds::derive(app.run.seed, &["slm"]);
    let slm: Box<dyn SmallModel> = match app.slm.backend {
        SlmBackend::Linear => Box::new(LinearSlm::new(app.slm.linear.clone(), slm_seed)?),
        SlmBackend::Remote => Box::new(RemoteSlm::new(app.slm.remote.clone())),
        SlmBackend::Oracle => Box::new(OracleSlm::new(
            app.slm.oracle.clone(),
            gold.clone(),
            seeds::derive(app.run.seed, &["oracle-slm"]),
        )?),
    };
    Ok(Components {
        llm: build_llm(app, &gold)?,
        slm,
        search: build_search(app, &cache)?,
        corpus: app.corpus.path.as_deref().map(NewsCorpus::load).transpose()?.map(Arc::new),
        knowledge: build_knowledge(app, &cache)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub dataset_sha256: String,
    pub cache_digest: Option<String>,
    pub config: AppConfig,
}

fn write_manifest(app: &AppConfig, dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest {
        tool: "cofact".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: app.run.seed,
        dataset_sha256: dataset_sha256(dataset),
        cache_digest: app.open_cache()?.map(|c| c.digest()).transpose()?,
        config: app.clone(),
    };
    let write = |name: &str, bytes: Vec<u8>| {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
    };
    write(MANIFEST_FILE, serde_json::to_vec_pretty(&manifest)?)?;
    write(APP_CONFIG_SNAPSHOT, serde_json::to_vec_pretty(app)?)
}

/// Run the pipeline described by `app`. With a run directory, a manifest
/// and a config snapshot are written next to the checkpoints.
pub fn execute(app: &AppConfig, stop_after_round: Option<u32>) -> Result<RunResult> {
    let dataset = app.load_dataset()?;
    let components = build_components(app, &dataset)?;
    if let Some(dir) = &app.run_dir {
        write_manifest(app, &dataset, dir)?;
    }
    let options = RunOptions {
        run_dir: app.run_dir.clone(),
        stop_after_round,
    };
    orchestrator::run(&dataset, &app.run, components, &options)
}

/// Resume a run directory written by [`execute`], rebuilding the backends
/// from its config snapshot.
pub fn resume(run_dir: &Path, stop_after_round: Option<u32>) -> Result<RunResult> {
    let snap = run_dir.join(APP_CONFIG_SNAPSHOT);
    let bytes = fs::read(&snap).map_err(|e| Error::Integrity {
        path: snap.clone(),
        message: format!("cannot read config snapshot: {e}"),
    })?;
    let app: AppConfig = serde_json::from_slice(&bytes).map_err(|e| Error::Integrity {
        path: snap.clone(),
        message: format!("malformed config snapshot: {e}"),
    })?;
    let dataset = app.load_dataset()?;
    let components = build_components(&app, &dataset)?;
    orchestrator::resume(run_dir, &dataset, components, stop_after_round)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarmSummary {
    pub search_queries: usize,
    pub lookups: usize,
    pub failures: BTreeMap<String, String>,
}

/// Issue every round-1 provider request the run would make, so a later run
/// in replay mode needs no network.
pub fn warm_cache(app: &AppConfig) -> Result<WarmSummary> {
    if app.cache.dir.is_none() {
        return Err(Error::config("cache.dir", "warming needs a cache directory"));
    }
    let mut live = app.clone();
    live.cache.mode = FetchMode::Live;
    let dataset = live.load_dataset()?;
    let split = crate::corpus::temporal_split(&dataset)?;
    let components = build_components(&live, &dataset)?;
    let mut summary = WarmSummary::default();
    let f = live.run.features;
    for item in &split.unlabeled {
        if let (true, true, Some(search)) = (f.demonstrations, f.search_engine, &components.search) {
            let q = search_query(&item.text, live.run.retrieval.query_tokens);
            summary.search_queries += 1;
            if let Err(e) = search.search_news(&q, live.run.retrieval.search_limit) {
                summary.failures.insert(format!("search:{}", item.id), e.to_string());
            }
        }
        if f.knowledge && components.knowledge.is_some() {
            let (pack, warnings) = build_knowledge_pack(
                item,
                components.llm.as_ref(),
                components.knowledge.as_deref(),
                live.run.retrieval.max_entities,
            );
            summary.lookups += pack.len();
            for (i, w) in warnings.into_iter().enumerate() {
                summary.failures.insert(format!("knowledge:{}:{i}", item.id), w);
            }
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[dataset]
path = "data.jsonl"
split_cutoff = 100
"#;

    #[test]
    fn defaults_and_relative_paths() {
        let app = AppConfig::from_toml(MINIMAL, Path::new("/cfg")).unwrap();
        assert_eq!(app.dataset.path, Path::new("/cfg/data.jsonl"));
        assert_eq!(app.run.selection.omega, 0.8);
        assert_eq!(app.run.rounds, 3);
        assert_eq!(app.run.retrieval.k, 4);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = AppConfig::from_toml(&format!("{MINIMAL}\n[run]\nomegaa = 0.5\n"), Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("omegaa"), "{err}");
    }

    #[test]
    fn api_key_field_is_not_accepted() {
        let text = format!("{MINIMAL}\n[llm.remote]\napi_key = \"sk-123\"\n");
        assert!(AppConfig::from_toml(&text, Path::new(".")).is_err());
    }

    #[test]
    fn omega_out_of_range_names_field() {
        let app = AppConfig::from_toml(&format!("{MINIMAL}\n[run.selection]\nomega = 1.5\n"), Path::new(".")).unwrap();
        assert!(app.validate().unwrap_err().to_string().contains("omega"));
    }

    #[test]
    fn env_interpolation() {
        std::env::set_var("COFACT_TEST_ENDPOINT", "http://example.test/v1");
        let text = format!("{MINIMAL}\n[llm.remote]\nbase_url = \"${{COFACT_TEST_ENDPOINT}}\"\n");
        let app = AppConfig::from_toml(&text, Path::new(".")).unwrap();
        assert_eq!(app.llm.remote.base_url, "http://example.test/v1");
        let text = format!("{MINIMAL}\n[llm.remote]\nbase_url = \"${{COFACT_TEST_SURELY_UNSET}}\"\n");
        let err = AppConfig::from_toml(&text, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("COFACT_TEST_SURELY_UNSET"));
        assert!(err.to_string().contains("llm.remote.base_url"));
    }

    #[test]
    fn preset_replaces_vocab() {
        let app = AppConfig::from_toml(&format!("vocab_preset = \"reliable\"\n{MINIMAL}"), Path::new(".")).unwrap();
        assert_eq!(app.run.vocab.positive_term, "reliable");
    }
}
