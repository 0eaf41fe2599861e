//! Tokenization, an in-memory inverted index and Okapi BM25 top-k retrieval.
//!
//! Score of document `D` for query `Q`:
//!
//! ```text
//! sum over distinct t in Q:  idf(t) * tf(t,D) * (k1 + 1) / (tf(t,D) + k1 * (1 - b + b * |D| / avgdl))
//! idf(t) = ln((N - n_t + 0.5) / (n_t + 0.5) + 1)
//! ```
//!
//! The `+ 1` inside the logarithm keeps every idf positive, so a document
//! scores above zero exactly when it shares at least one term with the query.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercased, Unicode-alphanumeric word segmentation. Punctuation and
/// whitespace separate terms; nothing else is removed.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedDoc {
    pub doc_id: String,
    pub tokens: Vec<String>,
}

impl TokenizedDoc {
    pub fn new(doc_id: impl Into<String>, text: &str) -> Self {
        TokenizedDoc {
            doc_id: doc_id.into(),
            tokens: tokenize(text),
        }
    }

    pub fn length(&self) -> usize {
        self.tokens.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct Bm25Index {
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    postings: HashMap<String, Vec<(u32, u32)>>,
    avg_doc_len: f64,
    params: Bm25Params,
}

impl Bm25Index {
    pub fn build(docs: Vec<TokenizedDoc>, params: Bm25Params) -> Result<Self> {
        let mut seen = HashSet::with_capacity(docs.len());
        let mut doc_ids = Vec::with_capacity(docs.len());
        let mut doc_lengths = Vec::with_capacity(docs.len());
        let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();

        for (idx, doc) in docs.into_iter().enumerate() {
            if !seen.insert(doc.doc_id.clone()) {
                return Err(Error::Validation(format!("duplicate doc_id `{}`", doc.doc_id)));
            }
            if doc.tokens.is_empty() {
                return Err(Error::Validation(format!("doc `{}` has no tokens", doc.doc_id)));
            }
            let mut tf: HashMap<&str, u32> = HashMap::new();
            for t in &doc.tokens {
                *tf.entry(t.as_str()).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term.to_owned()).or_default().push((idx as u32, count));
            }
            doc_lengths.push(doc.tokens.len() as u32);
            doc_ids.push(doc.doc_id);
        }
        for list in postings.values_mut() {
            list.sort_unstable();
        }

        let avg_doc_len = if doc_lengths.is_empty() {
            0.0
        } else {
            doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / doc_lengths.len() as f64
        };

        Ok(Bm25Index {
            doc_ids,
            doc_lengths,
            postings,
            avg_doc_len,
            params,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<usize> {
        self.doc_ids
            .iter()
            .position(|d| d == doc_id)
            .map(|i| self.doc_lengths[i] as usize)
    }

    /// `(doc_id, term frequency)` pairs for `term`, in indexing order.
    pub fn postings(&self, term: &str) -> Vec<(&str, u32)> {
        self.postings
            .get(term)
            .map(|list| {
                list.iter()
                    .map(|&(d, tf)| (self.doc_ids[d as usize].as_str(), tf))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Positive-score documents for `query`, best first, at most `k`.
    /// Equal scores are ordered by ascending doc id.
    pub fn top_k(&self, query: &str, k: usize) -> Vec<ScoredDoc> {
        self.top_k_tokens(&tokenize(query), k)
    }

    pub fn top_k_tokens(&self, query: &[String], k: usize) -> Vec<ScoredDoc> {
        if k == 0 || self.doc_ids.is_empty() {
            return Vec::new();
        }
        let n = self.doc_ids.len() as f64;
        let Bm25Params { k1, b } = self.params;
        let terms: BTreeSet<&str> = query.iter().map(String::as_str).collect();

        let mut scores = vec![0.0f64; self.doc_ids.len()];
        for term in terms {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let df = list.len() as f64;
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
            for &(doc, tf) in list {
                let tf = tf as f64;
                let dl = self.doc_lengths[doc as usize] as f64;
                let norm = k1 * (1.0 - b + b * dl / self.avg_doc_len);
                scores[doc as usize] += idf * tf * (k1 + 1.0) / (tf + norm);
            }
        }

        let mut ranked: Vec<(usize, f64)> = scores
            .into_iter()
            .enumerate()
            .filter(|&(_, s)| s > 0.0)
            .collect();
        ranked.sort_by(|a, b| rank_order((&self.doc_ids[a.0], a.1), (&self.doc_ids[b.0], b.1)));
        ranked.truncate(k);
        ranked
            .into_iter()
            .map(|(i, score)| ScoredDoc {
                doc_id: self.doc_ids[i].clone(),
                score,
            })
            .collect()
    }
}

/// Descending score, then ascending doc id.
pub fn rank_order(a: (&str, f64), b: (&str, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}
