use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DocSource, RetrievedDoc};
use crate::bm25::{Bm25Index, Bm25Params, TokenizedDoc};
use crate::error::{Error, Result};

/// One line of a news-corpus JSONL file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published_at: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_id: Option<String>,
}

/// A static news collection searchable with BM25.
#[derive(Debug, Clone)]
pub struct NewsCorpus {
    records: Vec<CorpusRecord>,
    by_id: HashMap<String, usize>,
    index: Bm25Index,
}

impl NewsCorpus {
    /// Records whose text has no tokens are skipped.
    pub fn from_records(records: Vec<CorpusRecord>) -> Result<Self> {
        let records: Vec<CorpusRecord> = records
            .into_iter()
            .filter(|r| !crate::bm25::tokenize(&r.text).is_empty())
            .collect();
        let index = Bm25Index::build(
            records.iter().map(|r| TokenizedDoc::new(r.id.clone(), &r.text)).collect(),
            Bm25Params::default(),
        )?;
        let by_id = records.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect();
        Ok(NewsCorpus { records, by_id, index })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| {
            Error::config("corpus", format!("cannot open news corpus {}: {e}", path.display()))
        })?;
        let shown = path.display().to_string();
        let mut records = Vec::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: shown.clone(),
                line: idx + 1,
                message: e.to_string(),
            })?);
        }
        Self::from_records(records)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[CorpusRecord] {
        &self.records
    }

    /// Top `limit` documents for `query` by BM25, tagged as corpus documents.
    pub fn corpus_fetch(&self, query: &str, limit: usize) -> Vec<RetrievedDoc> {
        self.index
            .top_k(query, limit)
            .into_iter()
            .map(|hit| {
                let r = &self.records[self.by_id[&hit.doc_id]];
                RetrievedDoc {
                    source: DocSource::NewsCorpus,
                    doc_id: r.id.clone(),
                    text: r.text.clone(),
                    published_at: r.published_at,
                    event_id: r.event_id.clone(),
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, text: &str) -> CorpusRecord {
        CorpusRecord {
            id: id.into(),
            text: text.into(),
            published_at: None,
            event_id: None,
        }
    }

    #[test]
    fn empty_corpus_returns_nothing() {
        let c = NewsCorpus::from_records(vec![]).unwrap();
        assert!(c.corpus_fetch("anything", 5).is_empty());
    }

    #[test]
    fn single_doc_equal_to_query() {
        let c = NewsCorpus::from_records(vec![rec("d", "plane crashed in the alps")]).unwrap();
        let hits = c.corpus_fetch("plane crashed in the alps", 5);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].doc_id, "d");
        assert_eq!(hits[0].source, DocSource::NewsCorpus);
    }

    #[test]
    fn missing_file_is_config_error() {
        let err = NewsCorpus::load(Path::new("/nonexistent/corpus.jsonl")).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }

    #[test]
    fn load_skips_tokenless_lines() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        use std::io::Write as _;
        writeln!(f, r#"{{"id":"a","text":"storm hits coast","event_id":"e1"}}"#).unwrap();
        writeln!(f, r#"{{"id":"b","text":"..."}}"#).unwrap();
        let c = NewsCorpus::load(f.path()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.corpus_fetch("storm", 3)[0].event_id.as_deref(), Some("e1"));
    }
}
