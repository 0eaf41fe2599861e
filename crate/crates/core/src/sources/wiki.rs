use std::collections::HashMap;

use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};

use super::{
    http_agent, normalize_request, CachedFetch, FetchMode, KnowledgeEntry, KnowledgeSource, Provider, ResponseCache,
};
use crate::error::{Error, Result};

pub const SUMMARY_LIMIT: usize = 1200;

const TITLE: &AsciiSet = &NON_ALPHANUMERIC.remove(b'_').remove(b'-').remove(b'.').remove(b'~');

/// Cut `text` to at most `limit` characters, ending on the last full
/// sentence (`.`, `!` or `?`) that fits. Falls back to a hard cut when no
/// sentence end fits.
pub fn truncate_at_sentence(text: &str, limit: usize) -> String {
    let text = text.trim();
    if text.chars().count() <= limit {
        return text.to_string();
    }
    let head: String = text.chars().take(limit).collect();
    match head.rfind(['.', '!', '?']) {
        Some(pos) => head[..=pos].to_string(),
        None => head,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WikipediaConfig {
    /// Site root, e.g. `https://en.wikipedia.org`; `None` leaves the
    /// provider unconfigured.
    pub base_url: Option<String>,
    pub lang: String,
    pub summary_limit: usize,
    pub timeout_secs: u64,
}

impl Default for WikipediaConfig {
    fn default() -> Self {
        WikipediaConfig {
            base_url: None,
            lang: "en".into(),
            summary_limit: SUMMARY_LIMIT,
            timeout_secs: 30,
        }
    }
}

/// Page-summary client for the Wikipedia REST API.
pub struct WikipediaClient {
    config: WikipediaConfig,
    cache: Option<ResponseCache>,
    mode: FetchMode,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct SummaryResponse {
    #[serde(default)]
    extract: String,
}

impl WikipediaClient {
    pub fn new(config: WikipediaConfig, cache: Option<ResponseCache>, mode: FetchMode) -> Self {
        let agent = http_agent(config.timeout_secs);
        WikipediaClient {
            config,
            cache,
            mode,
            agent,
        }
    }

    pub fn request_key(&self, entity: &str) -> String {
        super::request_key(Provider::Wikipedia, &[("lang", &self.config.lang), ("title", entity)])
    }

    fn page_url(&self, entity: &str) -> Option<String> {
        let base = self.config.base_url.as_deref()?.trim_end_matches('/');
        let title = entity.split_whitespace().collect::<Vec<_>>().join("_");
        Some(format!(
            "{base}/api/rest_v1/page/summary/{}",
            utf8_percent_encode(&title, TITLE)
        ))
    }
}

impl KnowledgeSource for WikipediaClient {
    fn wiki_lookup(&self, entity: &str) -> Result<Option<KnowledgeEntry>> {
        let entity = entity.trim();
        if entity.is_empty() {
            return Err(Error::Validation("wiki_lookup: empty entity".into()));
        }
        let fetch = CachedFetch {
            provider: Provider::Wikipedia,
            cache: self.cache.as_ref(),
            mode: self.mode,
            agent: &self.agent,
        };
        let (status, body) = fetch.get(&self.request_key(entity), self.page_url(entity).as_deref(), &[], &[])?;
        if status == 404 {
            return Ok(None);
        }
        let parsed: SummaryResponse = serde_json::from_slice(&body).map_err(|e| Error::ProviderResponse {
            provider: Provider::Wikipedia.as_str().into(),
            message: e.to_string(),
        })?;
        let summary = truncate_at_sentence(&parsed.extract, self.config.summary_limit);
        if summary.is_empty() {
            return Ok(None);
        }
        Ok(Some(KnowledgeEntry {
            entity: entity.to_string(),
            summary,
        }))
    }
}

/// In-memory entity summaries, matched case-insensitively.
#[derive(Debug, Clone, Default)]
pub struct StaticKnowledge {
    entries: HashMap<String, String>,
    limit: usize,
}

impl StaticKnowledge {
    pub fn new<I, K, V>(entries: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: Into<String>,
    {
        StaticKnowledge {
            entries: entries
                .into_iter()
                .map(|(k, v)| (normalize_request(k.as_ref()), v.into()))
                .collect(),
            limit: SUMMARY_LIMIT,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl KnowledgeSource for StaticKnowledge {
    fn wiki_lookup(&self, entity: &str) -> Result<Option<KnowledgeEntry>> {
        if entity.trim().is_empty() {
            return Err(Error::Validation("wiki_lookup: empty entity".into()));
        }
        Ok(self.entries.get(&normalize_request(entity)).map(|s| KnowledgeEntry {
            entity: entity.trim().to_string(),
            summary: truncate_at_sentence(s, self.limit),
        }))
    }
}
