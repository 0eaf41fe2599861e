use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{http_agent, CachedFetch, DocSource, FetchMode, NewsSearch, Provider, ResponseCache, RetrievedDoc};
use crate::bm25::{tokenize, Bm25Index, Bm25Params, TokenizedDoc};
use crate::error::{Error, Result};

/// Query sent to the search engine: the first `max_tokens` tokens of the
/// news text.
pub fn search_query(text: &str, max_tokens: usize) -> String {
    tokenize(text).into_iter().take(max_tokens).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewsSearchConfig {
    /// News-search endpoint URL; `None` leaves the provider unconfigured.
    pub endpoint: Option<String>,
    /// Environment variable holding the subscription key.
    pub api_key_env: String,
    pub market: String,
    /// Results requested per live call; calls return at most `limit` of them.
    pub fetch_count: usize,
    pub timeout_secs: u64,
}

impl Default for NewsSearchConfig {
    fn default() -> Self {
        NewsSearchConfig {
            endpoint: None,
            api_key_env: "NEWS_SEARCH_API_KEY".into(),
            market: "en-US".into(),
            fetch_count: 10,
            timeout_secs: 30,
        }
    }
}

/// Client for a news-search API returning
/// `{"value": [{"name", "description", "url", "datePublished"}, ...]}`.
pub struct NewsSearchClient {
    config: NewsSearchConfig,
    api_key: Option<String>,
    cache: Option<ResponseCache>,
    mode: FetchMode,
    agent: ureq::Agent,
}

impl NewsSearchClient {
    pub fn new(config: NewsSearchConfig, cache: Option<ResponseCache>, mode: FetchMode) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok();
        let agent = http_agent(config.timeout_secs);
        NewsSearchClient {
            config,
            api_key,
            cache,
            mode,
            agent,
        }
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    pub fn request_key(&self, query: &str) -> String {
        super::request_key(Provider::NewsSearch, &[("mkt", &self.config.market), ("q", query)])
    }
}

#[derive(Deserialize)]
struct SearchResponse {
    #[serde(default)]
    value: Vec<SearchHit>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct SearchHit {
    #[serde(default)]
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    url: Option<String>,
    #[serde(default)]
    date_published: Option<String>,
}

pub(crate) fn parse_search_body(body: &[u8]) -> Result<Vec<RetrievedDoc>> {
    let parsed: SearchResponse = serde_json::from_slice(body).map_err(|e| Error::ProviderResponse {
        provider: Provider::NewsSearch.as_str().into(),
        message: e.to_string(),
    })?;
    let mut seen = HashSet::new();
    let mut docs = Vec::with_capacity(parsed.value.len());
    for (rank, hit) in parsed.value.into_iter().enumerate() {
        let text = match (hit.name.trim(), hit.description.trim()) {
            ("", "") => continue,
            (title, "") => title.to_string(),
            ("", snippet) => snippet.to_string(),
            (title, snippet) => format!("{title}. {snippet}"),
        };
        let mut doc_id = hit.url.unwrap_or_else(|| format!("search-{rank}"));
        if !seen.insert(doc_id.clone()) {
            doc_id = format!("{doc_id}#{rank}");
            seen.insert(doc_id.clone());
        }
        let published_at = hit
            .date_published
            .as_deref()
            .and_then(|d| chrono::DateTime::parse_from_rfc3339(d).ok())
            .map(|d| d.timestamp());
        docs.push(RetrievedDoc {
            source: DocSource::SearchEngine,
            doc_id,
            text,
            published_at,
            event_id: None,
        });
    }
    Ok(docs)
}

impl NewsSearch for NewsSearchClient {
    fn search_news(&self, query: &str, limit: usize) -> Result<Vec<RetrievedDoc>> {
        let key = self.request_key(query);
        let fetch = CachedFetch {
            provider: Provider::NewsSearch,
            cache: self.cache.as_ref(),
            mode: self.mode,
            agent: &self.agent,
        };
        let headers: Vec<(&str, String)> = self
            .api_key
            .iter()
            .map(|k| ("Ocp-Apim-Subscription-Key", k.clone()))
            .collect();
        let params = [
            ("q", query.to_string()),
            ("count", self.config.fetch_count.to_string()),
            ("mkt", self.config.market.clone()),
        ];
        let (status, body) = fetch.get(&key, self.config.endpoint.as_deref(), &headers, &params)?;
        if status == 404 {
            return Ok(Vec::new());
        }
        let mut docs = parse_search_body(&body)?;
        docs.truncate(limit);
        Ok(docs)
    }
}

/// In-memory stand-in for a search engine: BM25 over a fixed document set.
pub struct StaticSearch {
    docs: Vec<RetrievedDoc>,
    index: Bm25Index,
}

impl StaticSearch {
    pub fn new(docs: Vec<RetrievedDoc>) -> Result<Self> {
        let docs: Vec<RetrievedDoc> = docs
            .into_iter()
            .filter(|d| !tokenize(&d.text).is_empty())
            .map(|d| RetrievedDoc {
                source: DocSource::SearchEngine,
                ..d
            })
            .collect();
        let index = Bm25Index::build(
            docs.iter().map(|d| TokenizedDoc::new(d.doc_id.clone(), &d.text)).collect(),
            Bm25Params::default(),
        )?;
        Ok(StaticSearch { docs, index })
    }
}

impl NewsSearch for StaticSearch {
    fn search_news(&self, query: &str, limit: usize) -> Result<Vec<RetrievedDoc>> {
        Ok(self
            .index
            .top_k(query, limit)
            .into_iter()
            .filter_map(|hit| self.docs.iter().find(|d| d.doc_id == hit.doc_id).cloned())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sources::{testserver, CacheRecord};

    const FIVE: &str = r#"{"value":[
        {"name":"A","description":"first","url":"u1","datePublished":"2015-03-24T10:45:00.0000000Z"},
        {"name":"B","description":"second","url":"u2"},
        {"name":"C","description":"third","url":"u3"},
        {"name":"D","description":"fourth","url":"u4"},
        {"name":"E","description":"fifth","url":"u5"}]}"#;

    fn replay_client(dir: &std::path::Path) -> NewsSearchClient {
        let cache = ResponseCache::open(dir).unwrap();
        NewsSearchClient::new(NewsSearchConfig::default(), Some(cache), FetchMode::Replay)
    }

    fn seed(client: &NewsSearchClient, query: &str, body: &str) {
        let key = client.request_key(query);
        client
            .cache
            .as_ref()
            .unwrap()
            .put(&CacheRecord::new(Provider::NewsSearch, key, 200, body.as_bytes(), 1))
            .unwrap();
    }

    #[test]
    fn search_query_takes_first_ten_tokens() {
        let q = search_query("One, two three four five six seven eight nine ten eleven twelve", 10);
        assert_eq!(q, "one two three four five six seven eight nine ten");
    }

    #[test]
    fn replay_returns_cached_docs_and_truncates() {
        let dir = tempfile::tempdir().unwrap();
        let client = replay_client(dir.path());
        seed(&client, "alps crash", FIVE);
        let all = client.search_news("alps crash", 10).unwrap();
        assert_eq!(all.len(), 5);
        assert_eq!(all[0].text, "A. first");
        assert_eq!(all[0].source, DocSource::SearchEngine);
        assert_eq!(all[0].published_at, Some(1_427_193_900));
        let two = client.search_news("Alps  Crash", 2).unwrap();
        assert_eq!(two, all[..2].to_vec());
    }

    #[test]
    fn cold_unconfigured_provider_is_unavailable() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let live = NewsSearchClient::new(NewsSearchConfig::default(), Some(cache), FetchMode::Live);
        assert!(matches!(
            live.search_news("anything", 3),
            Err(Error::ProviderUnavailable { .. })
        ));
        let replay = replay_client(dir.path());
        assert!(matches!(
            replay.search_news("anything", 3),
            Err(Error::ProviderUnavailable { .. })
        ));
    }

    #[test]
    fn malformed_cached_body_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let client = replay_client(dir.path());
        seed(&client, "q", "not json");
        assert!(matches!(client.search_news("q", 3), Err(Error::ProviderResponse { .. })));
    }

    #[test]
    fn live_fetch_sends_query_and_key_then_writes_through() {
        let server = testserver::serve(|_| (200, FIVE.to_string()));
        let dir = tempfile::tempdir().unwrap();
        let cfg = NewsSearchConfig {
            endpoint: Some(format!("{}/news/search", server.base)),
            ..NewsSearchConfig::default()
        };
        let cache = ResponseCache::open(dir.path()).unwrap();
        let client = NewsSearchClient::new(cfg, Some(cache), FetchMode::Live).with_api_key("secret");
        let docs = client.search_news("germanwings crash", 3).unwrap();
        assert_eq!(docs.len(), 3);
        {
            let seen = server.seen.lock().unwrap();
            assert_eq!(seen.len(), 1);
            assert!(seen[0].request_line.starts_with("GET /news/search?"));
            assert!(seen[0].request_line.contains("q=germanwings"));
            assert!(seen[0].request_line.contains("count=10"));
            assert!(seen[0]
                .headers
                .iter()
                .any(|(k, v)| k == "ocp-apim-subscription-key" && v == "secret"));
        }
        // Second call is served from cache.
        let again = client.search_news("germanwings crash", 3).unwrap();
        assert_eq!(again, docs);
        assert_eq!(server.seen.lock().unwrap().len(), 1);
        let replay = replay_client(dir.path());
        assert_eq!(replay.search_news("germanwings crash", 3).unwrap(), docs);
    }

    #[test]
    fn server_error_is_unavailable_and_not_cached() {
        let server = testserver::serve(|_| (503, "{}".into()));
        let dir = tempfile::tempdir().unwrap();
        let cfg = NewsSearchConfig {
            endpoint: Some(server.base.clone()),
            ..NewsSearchConfig::default()
        };
        let cache = ResponseCache::open(dir.path()).unwrap();
        let client = NewsSearchClient::new(cfg, Some(cache.clone()), FetchMode::Live);
        assert!(matches!(client.search_news("q", 3), Err(Error::ProviderUnavailable { .. })));
        assert!(cache.is_empty().unwrap());
    }

    #[test]
    fn static_search_ranks_by_bm25() {
        let doc = |id: &str, text: &str| RetrievedDoc {
            source: DocSource::NewsCorpus,
            doc_id: id.into(),
            text: text.into(),
            published_at: None,
            event_id: None,
        };
        let s = StaticSearch::new(vec![doc("a", "plane crash alps"), doc("b", "election results"), doc("c", "!!")]).unwrap();
        let hits = s.search_news("alps plane", 5).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].doc_id, "a");
        assert_eq!(hits[0].source, DocSource::SearchEngine);
    }
}
