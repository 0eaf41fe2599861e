//! External providers: online news search, a static news corpus and
//! Wikipedia, with HTTP traffic routed through [`ResponseCache`].

mod cache;
mod newscorpus;
mod search;
mod wiki;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cache::{normalize_request, now_epoch, request_key, sha256_hex, CacheRecord, Provider, ResponseCache};
pub use newscorpus::{CorpusRecord, NewsCorpus};
pub use search::{search_query, NewsSearchClient, NewsSearchConfig, StaticSearch};
pub use wiki::{truncate_at_sentence, StaticKnowledge, WikipediaClient, WikipediaConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocSource {
    SearchEngine,
    NewsCorpus,
    CleanPool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievedDoc {
    pub source: DocSource,
    pub doc_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published_at: Option<i64>,
    /// Known event of the document, if the provider exposes one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub entity: String,
    pub summary: String,
}

/// Online news search.
pub trait NewsSearch: Send + Sync {
    fn search_news(&self, query: &str, limit: usize) -> Result<Vec<RetrievedDoc>>;
}

/// Entity summaries (Wikipedia or a stand-in).
pub trait KnowledgeSource: Send + Sync {
    fn wiki_lookup(&self, entity: &str) -> Result<Option<KnowledgeEntry>>;
}

/// Whether a cache miss may go to the network.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FetchMode {
    /// Serve from cache; fetch and record on a miss.
    #[default]
    Live,
    /// Serve from cache only; a miss is a provider-unavailable error.
    Replay,
}

pub(crate) fn http_agent(timeout_secs: u64) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(timeout_secs)))
        .http_status_as_error(false)
        .build()
        .into()
}

/// Cache-first GET. Successful and 404 responses are recorded; any other
/// status is reported as the provider being unavailable.
pub(crate) struct CachedFetch<'a> {
    pub provider: Provider,
    pub cache: Option<&'a ResponseCache>,
    pub mode: FetchMode,
    pub agent: &'a ureq::Agent,
}

impl CachedFetch<'_> {
    pub fn get(
        &self,
        key: &str,
        url: Option<&str>,
        headers: &[(&str, String)],
        query: &[(&str, String)],
    ) -> Result<(u16, Vec<u8>)> {
        let name = self.provider.as_str();
        if let Some(cache) = self.cache {
            if let Some(rec) = cache.get(key)? {
                return Ok((rec.status, rec.body_bytes()?));
            }
        }
        if self.mode == FetchMode::Replay {
            return Err(Error::unavailable(name, format!("no cached response for `{key}`")));
        }
        let Some(url) = url else {
            return Err(Error::unavailable(name, "no endpoint configured"));
        };

        let mut req = self.agent.get(url);
        for (h, v) in headers {
            req = req.header(*h, v.as_str());
        }
        for (q, v) in query {
            req = req.query(*q, v.as_str());
        }
        let mut resp = req.call().map_err(|e| Error::unavailable(name, e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_vec()
            .map_err(|e| Error::unavailable(name, e.to_string()))?;
        if !(200..300).contains(&status) && status != 404 {
            return Err(Error::unavailable(name, format!("HTTP {status}")));
        }
        if let Some(cache) = self.cache {
            cache.put(&CacheRecord::new(self.provider, key.to_string(), status, &body, now_epoch()))?;
        }
        Ok((status, body))
    }
}
