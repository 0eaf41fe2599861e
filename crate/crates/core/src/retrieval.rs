//! Two-stage retrieval: pseudo-labeled demonstrations for in-context
//! learning, and an entity knowledge pack for each news item.
//!
//! In round 1 demonstrations come from the external providers and carry
//! random pseudo-labels. From round 2 on they come from the clean pool and
//! carry the pool label rendered through the vocabulary.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bm25::{tokenize, Bm25Index, Bm25Params, TokenizedDoc};
use crate::corpus::{Label, NewsItem};
use crate::error::{Error, Result};
use crate::llm::LanguageModel;
use crate::seeds;
use crate::sources::{
    normalize_request, search_query, DocSource, KnowledgeEntry, KnowledgeSource, NewsCorpus, NewsSearch, RetrievedDoc,
};

/// Named pseudo-label vocabularies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabPreset {
    #[default]
    Realistic,
    Reliable,
    Convincing,
    RealFake,
    TrueFalse,
    /// Demonstrations are shown without any label.
    Unlabeled,
}

impl VocabPreset {
    pub const ALL: [VocabPreset; 6] = [
        VocabPreset::Realistic,
        VocabPreset::Reliable,
        VocabPreset::Convincing,
        VocabPreset::RealFake,
        VocabPreset::TrueFalse,
        VocabPreset::Unlabeled,
    ];

    pub fn vocab(self) -> PseudoLabelVocab {
        let (pos, neg) = match self {
            VocabPreset::Realistic | VocabPreset::Unlabeled => ("realistic", "unrealistic"),
            VocabPreset::Reliable => ("reliable", "unreliable"),
            VocabPreset::Convincing => ("convincing", "incredible"),
            VocabPreset::RealFake => ("real", "fake"),
            VocabPreset::TrueFalse => ("true", "false"),
        };
        PseudoLabelVocab {
            positive_term: pos.into(),
            negative_term: neg.into(),
            show_labels: self != VocabPreset::Unlabeled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoLabelVocab {
    pub positive_term: String,
    pub negative_term: String,
    /// When false, prompts carry demonstration texts without labels.
    pub show_labels: bool,
}

impl Default for PseudoLabelVocab {
    fn default() -> Self {
        VocabPreset::default().vocab()
    }
}

impl PseudoLabelVocab {
    /// With `avoid_copy_effect`, neither term may equal a task output word
    /// (`real`/`fake`), and the true/false pair is rejected as well.
    pub fn validate(&self, avoid_copy_effect: bool) -> Result<()> {
        let (p, n) = (self.positive_term.trim(), self.negative_term.trim());
        if p.is_empty() || n.is_empty() {
            return Err(Error::config("vocab", "pseudo-label terms must be non-empty"));
        }
        if p.eq_ignore_ascii_case(n) {
            return Err(Error::config("vocab", "pseudo-label terms must differ"));
        }
        if avoid_copy_effect {
            const TASK_WORDS: [&str; 4] = ["real", "fake", "true", "false"];
            for t in [p, n] {
                if TASK_WORDS.iter().any(|w| w.eq_ignore_ascii_case(t)) {
                    return Err(Error::config(
                        "vocab",
                        format!("term `{t}` echoes the answer words; disable avoid_copy_effect to use it"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn render(&self, label: Label) -> &str {
        match label {
            Label::Real => &self.positive_term,
            Label::Fake => &self.negative_term,
        }
    }

    pub fn contains(&self, term: &str) -> bool {
        term == self.positive_term || term == self.negative_term
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub doc_id: String,
    pub text: String,
    pub pseudo_label: String,
    pub origin: DocSource,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_id: Option<String>,
}

/// Entity summaries for one item, unique by entity (case-insensitive).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgePack {
    pub entries: Vec<KnowledgeEntry>,
}

impl KnowledgePack {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Returns false when an entry for the same entity is already present.
    pub fn push(&mut self, entry: KnowledgeEntry) -> bool {
        let key = normalize_request(&entry.entity);
        if self.entries.iter().any(|e| normalize_request(&e.entity) == key) {
            return false;
        }
        self.entries.push(entry);
        true
    }
}

/// Random pseudo-labels: each document independently gets either term with
/// probability 1/2, from a generator keyed by `(rng_seed, doc_id)`.
pub fn assign_pseudo_labels(docs: &[RetrievedDoc], vocab: &PseudoLabelVocab, rng_seed: u64) -> Vec<(String, String)> {
    docs.iter()
        .map(|d| (d.text.clone(), random_term(vocab, rng_seed, &d.doc_id).to_string()))
        .collect()
}

fn random_term<'v>(vocab: &'v PseudoLabelVocab, rng_seed: u64, doc_id: &str) -> &'v str {
    if seeds::unit(rng_seed, &["pseudo-label", doc_id]) < 0.5 {
        &vocab.positive_term
    } else {
        &vocab.negative_term
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalConfig {
    /// Demonstrations per item.
    pub k: usize,
    pub search_limit: usize,
    pub corpus_limit: usize,
    /// Tokens of the news text used as the search-engine query.
    pub query_tokens: usize,
    pub max_entities: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            k: 4,
            search_limit: 10,
            corpus_limit: 10,
            query_tokens: 10,
            max_entities: 5,
        }
    }
}

/// Clean-pool documents indexed once per round.
#[derive(Debug, Clone)]
pub struct CleanPoolIndex {
    entries: Vec<(NewsItem, Label)>,
    by_id: HashMap<String, usize>,
    index: Bm25Index,
}

impl CleanPoolIndex {
    /// `entries` should be in ascending item id order; that order breaks
    /// ties among zero-score fill-ins.
    pub fn build(entries: Vec<(NewsItem, Label)>) -> Result<Self> {
        let entries: Vec<_> = entries.into_iter().filter(|(it, _)| !tokenize(&it.text).is_empty()).collect();
        let index = Bm25Index::build(
            entries.iter().map(|(it, _)| TokenizedDoc::new(it.id.clone(), &it.text)).collect(),
            Bm25Params::default(),
        )?;
        let by_id = entries.iter().enumerate().map(|(i, (it, _))| (it.id.clone(), i)).collect();
        Ok(CleanPoolIndex { entries, by_id, index })
    }

    pub fn empty() -> Self {
        CleanPoolIndex::build(Vec::new()).expect("empty index always builds")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Outcome of retrieval for one item.
#[derive(Debug, Clone, Default)]
pub struct Retrieved {
    pub demonstrations: Vec<Demonstration>,
    pub warnings: Vec<String>,
}

/// Which providers round-1 retrieval may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceSwitches {
    pub search_engine: bool,
    pub news_corpus: bool,
}

impl Default for SourceSwitches {
    fn default() -> Self {
        SourceSwitches {
            search_engine: true,
            news_corpus: true,
        }
    }
}

pub struct Retriever {
    pub search: Option<Arc<dyn NewsSearch>>,
    pub corpus: Option<Arc<NewsCorpus>>,
    pub knowledge: Option<Arc<dyn KnowledgeSource>>,
    pub config: RetrievalConfig,
    pub vocab: PseudoLabelVocab,
    pub switches: SourceSwitches,
    pub seed: u64,
}

impl Retriever {
    /// Demonstrations for `item` in `round`. Round 1 queries the external
    /// providers and fails only when every enabled provider fails; later
    /// rounds draw from `pool`.
    pub fn retrieve_demonstrations(&self, item: &NewsItem, round: u32, pool: &CleanPoolIndex) -> Result<Retrieved> {
        if round <= 1 {
            self.retrieve_external(item)
        } else {
            Ok(Retrieved {
                demonstrations: self.retrieve_from_pool(item, pool),
                warnings: Vec::new(),
            })
        }
    }

    fn retrieve_external(&self, item: &NewsItem) -> Result<Retrieved> {
        let mut warnings = Vec::new();
        let mut candidates: Vec<RetrievedDoc> = Vec::new();
        let mut attempted = 0;
        let mut succeeded = 0;

        if let (true, Some(search)) = (self.switches.search_engine, &self.search) {
            attempted += 1;
            let query = search_query(&item.text, self.config.query_tokens);
            match search.search_news(&query, self.config.search_limit) {
                Ok(docs) => {
                    succeeded += 1;
                    candidates.extend(docs);
                }
                Err(e) => warnings.push(format!("search: {e}")),
            }
        }
        if let (true, Some(corpus)) = (self.switches.news_corpus, &self.corpus) {
            attempted += 1;
            succeeded += 1;
            candidates.extend(corpus.corpus_fetch(&item.text, self.config.corpus_limit));
        }
        if attempted > 0 && succeeded == 0 {
            return Err(Error::Retrieval {
                item_id: item.id.clone(),
                reason: warnings.join("; "),
            });
        }

        let candidates = dedup_candidates(candidates);
        let ranked = rank_candidates(&item.text, &candidates, self.config.k)?;
        let rng_seed = seeds::derive(self.seed, &["demonstrations", &item.id]);
        let demonstrations = ranked
            .into_iter()
            .map(|(i, score)| {
                let d = &candidates[i];
                Demonstration {
                    doc_id: d.doc_id.clone(),
                    text: d.text.clone(),
                    pseudo_label: random_term(&self.vocab, rng_seed, &d.doc_id).to_string(),
                    origin: d.source,
                    score,
                    event_id: d.event_id.clone(),
                }
            })
            .collect();
        Ok(Retrieved {
            demonstrations,
            warnings,
        })
    }

    fn retrieve_from_pool(&self, item: &NewsItem, pool: &CleanPoolIndex) -> Vec<Demonstration> {
        let k = self.config.k;
        if k == 0 || pool.is_empty() {
            return Vec::new();
        }
        let hits = pool.index.top_k(&item.text, k);
        let mut chosen: Vec<(usize, f64)> = hits
            .iter()
            .map(|h| (pool.by_id[&h.doc_id], h.score))
            .collect();
        fill_with_zero_scores(&mut chosen, pool.entries.len(), k);
        chosen
            .into_iter()
            .map(|(i, score)| {
                let (it, label) = &pool.entries[i];
                Demonstration {
                    doc_id: it.id.clone(),
                    text: it.text.clone(),
                    pseudo_label: self.vocab.render(*label).to_string(),
                    origin: DocSource::CleanPool,
                    score,
                    event_id: Some(it.event_id.clone()),
                }
            })
            .collect()
    }

    /// Entities extracted by the LLM and resolved against the knowledge
    /// source. LLM and lookup failures never fail the item; they shrink the
    /// pack and are reported as warnings.
    pub fn knowledge_pack(&self, item: &NewsItem, llm: &dyn LanguageModel) -> (KnowledgePack, Vec<String>) {
        build_knowledge_pack(item, llm, self.knowledge.as_deref(), self.config.max_entities)
    }
}

pub fn build_knowledge_pack(
    item: &NewsItem,
    llm: &dyn LanguageModel,
    knowledge: Option<&dyn KnowledgeSource>,
    max_entities: usize,
) -> (KnowledgePack, Vec<String>) {
    let mut pack = KnowledgePack::default();
    let mut warnings = Vec::new();
    let Some(knowledge) = knowledge else {
        return (pack, warnings);
    };
    if max_entities == 0 {
        return (pack, warnings);
    }
    let entities = match llm.extract_entities(item, max_entities) {
        Ok(e) => e,
        Err(e) => {
            warnings.push(format!("entity extraction: {e}"));
            return (pack, warnings);
        }
    };
    let mut seen = HashSet::new();
    for entity in entities {
        let key = normalize_request(&entity);
        if key.is_empty() || !seen.insert(key) {
            continue;
        }
        if seen.len() > max_entities {
            break;
        }
        match knowledge.wiki_lookup(&entity) {
            Ok(Some(entry)) => {
                pack.push(entry);
            }
            Ok(None) => {}
            Err(e) => warnings.push(format!("lookup `{entity}`: {e}")),
        }
    }
    (pack, warnings)
}

/// Drop candidates whose normalized text was already seen, keeping the
/// first occurrence, and make doc ids unique.
fn dedup_candidates(candidates: Vec<RetrievedDoc>) -> Vec<RetrievedDoc> {
    let mut texts = HashSet::new();
    let mut ids = HashSet::new();
    let mut out = Vec::with_capacity(candidates.len());
    for mut d in candidates {
        if tokenize(&d.text).is_empty() || !texts.insert(normalize_request(&d.text)) {
            continue;
        }
        if !ids.insert(d.doc_id.clone()) {
            let mut n = 2;
            while !ids.insert(format!("{}#{n}", d.doc_id)) {
                n += 1;
            }
            d.doc_id = format!("{}#{n}", d.doc_id);
        }
        out.push(d);
    }
    out
}

/// Indices into `candidates` of the top `k` by BM25 against `query`. When
/// fewer than `k` candidates score above zero, the rest are filled in
/// candidate order with score 0.
fn rank_candidates(query: &str, candidates: &[RetrievedDoc], k: usize) -> Result<Vec<(usize, f64)>> {
    if k == 0 || candidates.is_empty() {
        return Ok(Vec::new());
    }
    let index = Bm25Index::build(
        candidates.iter().map(|d| TokenizedDoc::new(d.doc_id.clone(), &d.text)).collect(),
        Bm25Params::default(),
    )?;
    let mut chosen: Vec<(usize, f64)> = index
        .top_k(query, k)
        .into_iter()
        .map(|h| (candidates.iter().position(|d| d.doc_id == h.doc_id).expect("indexed id"), h.score))
        .collect();
    fill_with_zero_scores(&mut chosen, candidates.len(), k);
    Ok(chosen)
}

fn fill_with_zero_scores(chosen: &mut Vec<(usize, f64)>, total: usize, k: usize) {
    if chosen.len() >= k {
        return;
    }
    let taken: HashSet<usize> = chosen.iter().map(|&(i, _)| i).collect();
    for i in 0..total {
        if chosen.len() >= k {
            break;
        }
        if !taken.contains(&i) {
            chosen.push((i, 0.0));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::LlmPrediction;
    use crate::sources::{StaticKnowledge, StaticSearch};

    fn doc(id: &str, text: &str) -> RetrievedDoc {
        RetrievedDoc {
            source: DocSource::SearchEngine,
            doc_id: id.into(),
            text: text.into(),
            published_at: None,
            event_id: None,
        }
    }

    fn retriever(search: Option<Arc<dyn NewsSearch>>) -> Retriever {
        Retriever {
            search,
            corpus: None,
            knowledge: None,
            config: RetrievalConfig::default(),
            vocab: PseudoLabelVocab::default(),
            switches: SourceSwitches::default(),
            seed: 11,
        }
    }

    struct FailingSearch;
    impl NewsSearch for FailingSearch {
        fn search_news(&self, _: &str, _: usize) -> Result<Vec<RetrievedDoc>> {
            Err(Error::unavailable("news_search", "offline"))
        }
    }

    struct Entities(std::result::Result<Vec<&'static str>, ()>);
    impl LanguageModel for Entities {
        fn predict(&self, _: &NewsItem, _: &[Demonstration], _: &KnowledgePack, _: u32) -> Result<LlmPrediction> {
            unimplemented!()
        }
        fn extract_entities(&self, _: &NewsItem, _: usize) -> Result<Vec<String>> {
            match &self.0 {
                Ok(v) => Ok(v.iter().map(|s| s.to_string()).collect()),
                Err(()) => Err(Error::backend("mock", "down")),
            }
        }
    }

    fn item() -> NewsItem {
        NewsItem::new("n1", "plane crash in the alps kills all passengers", "e1", 10)
    }

    #[test]
    fn vocab_validation() {
        assert!(VocabPreset::RealFake.vocab().validate(true).is_err());
        assert!(VocabPreset::TrueFalse.vocab().validate(true).is_err());
        assert!(VocabPreset::RealFake.vocab().validate(false).is_ok());
        for p in [VocabPreset::Realistic, VocabPreset::Reliable, VocabPreset::Convincing, VocabPreset::Unlabeled] {
            assert!(p.vocab().validate(true).is_ok(), "{p:?}");
        }
        let same = PseudoLabelVocab {
            positive_term: "x".into(),
            negative_term: "X".into(),
            show_labels: true,
        };
        assert!(same.validate(false).is_err());
    }

    #[test]
    fn empty_docs_get_no_labels() {
        assert!(assign_pseudo_labels(&[], &PseudoLabelVocab::default(), 1).is_empty());
    }

    #[test]
    fn round_one_labels_are_seeded() {
        let docs: Vec<_> = (0..12).map(|i| doc(&format!("d{i}"), &format!("alps plane story {i}"))).collect();
        let r = retriever(Some(Arc::new(StaticSearch::new(docs).unwrap())));
        let a = r.retrieve_demonstrations(&item(), 1, &CleanPoolIndex::empty()).unwrap();
        let b = r.retrieve_demonstrations(&item(), 1, &CleanPoolIndex::empty()).unwrap();
        assert_eq!(a.demonstrations, b.demonstrations);
        assert_eq!(a.demonstrations.len(), 4);
        assert!(a.demonstrations.iter().all(|d| r.vocab.contains(&d.pseudo_label)));
    }

    #[test]
    fn round_two_maps_pool_label_through_vocab() {
        let r = retriever(None);
        let d = NewsItem::new("d", "alps crash report", "e1", 1);
        let pool = CleanPoolIndex::build(vec![(d, Label::Fake)]).unwrap();
        let got = r.retrieve_demonstrations(&item(), 2, &pool).unwrap().demonstrations;
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].pseudo_label, "unrealistic");
        assert_eq!(got[0].origin, DocSource::CleanPool);
    }

    #[test]
    fn pool_fills_up_to_k_with_unrelated_items() {
        let r = retriever(None);
        let pool: Vec<_> = ["alps crash", "election night", "football final", "market rally", "storm warning"]
            .iter()
            .enumerate()
            .map(|(i, t)| (NewsItem::new(format!("p{i}"), *t, "e", 1), Label::Real))
            .collect();
        let pool = CleanPoolIndex::build(pool).unwrap();
        let got = r.retrieve_demonstrations(&item(), 3, &pool).unwrap().demonstrations;
        let ids: Vec<_> = got.iter().map(|d| d.doc_id.as_str()).collect();
        assert_eq!(ids, ["p0", "p1", "p2", "p3"]);
        assert!(got[0].score > 0.0 && got[1].score == 0.0);
    }

    #[test]
    fn all_sources_failing_is_a_retrieval_error() {
        let r = retriever(Some(Arc::new(FailingSearch)));
        assert!(matches!(
            r.retrieve_demonstrations(&item(), 1, &CleanPoolIndex::empty()),
            Err(Error::Retrieval { .. })
        ));
    }

    #[test]
    fn search_failure_degrades_to_corpus() {
        let mut r = retriever(Some(Arc::new(FailingSearch)));
        let corpus = NewsCorpus::from_records(vec![crate::sources::CorpusRecord {
            id: "c1".into(),
            text: "alps crash".into(),
            published_at: None,
            event_id: None,
        }])
        .unwrap();
        r.corpus = Some(Arc::new(corpus));
        let got = r.retrieve_demonstrations(&item(), 1, &CleanPoolIndex::empty()).unwrap();
        assert_eq!(got.demonstrations.len(), 1);
        assert_eq!(got.demonstrations[0].origin, DocSource::NewsCorpus);
        assert_eq!(got.warnings.len(), 1);
    }

    #[test]
    fn duplicate_texts_are_merged_search_first() {
        let search = StaticSearch::new(vec![doc("s1", "Alps crash")]).unwrap();
        let mut r = retriever(Some(Arc::new(search)));
        let corpus = NewsCorpus::from_records(vec![crate::sources::CorpusRecord {
            id: "c1".into(),
            text: "alps   CRASH".into(),
            published_at: None,
            event_id: None,
        }])
        .unwrap();
        r.corpus = Some(Arc::new(corpus));
        let got = r.retrieve_demonstrations(&item(), 1, &CleanPoolIndex::empty()).unwrap();
        assert_eq!(got.demonstrations.len(), 1);
        assert_eq!(got.demonstrations[0].origin, DocSource::SearchEngine);
    }

    #[test]
    fn knowledge_pack_dedups_and_drops_unknown() {
        let k = StaticKnowledge::new([("Germanwings", "An airline."), ("Alps", "Mountains.")]);
        let (pack, _) = build_knowledge_pack(&item(), &Entities(Ok(vec!["Germanwings", "germanwings"])), Some(&k), 5);
        assert_eq!(pack.len(), 1);
        let (pack, _) = build_knowledge_pack(&item(), &Entities(Ok(vec!["Alps", "Nowhere", "Germanwings"])), Some(&k), 5);
        let names: Vec<_> = pack.entries.iter().map(|e| e.entity.as_str()).collect();
        assert_eq!(names, ["Alps", "Germanwings"]);
        let (pack, _) = build_knowledge_pack(&item(), &Entities(Ok(vec![])), Some(&k), 5);
        assert!(pack.is_empty());
    }

    #[test]
    fn knowledge_pack_respects_max_entities() {
        let k = StaticKnowledge::new([("a", "A."), ("b", "B."), ("c", "C.")]);
        let (pack, _) = build_knowledge_pack(&item(), &Entities(Ok(vec!["a", "b", "c"])), Some(&k), 2);
        assert_eq!(pack.len(), 2);
    }

    #[test]
    fn llm_failure_gives_empty_pack_with_warning() {
        let k = StaticKnowledge::new([("a", "A.")]);
        let (pack, warnings) = build_knowledge_pack(&item(), &Entities(Err(())), Some(&k), 5);
        assert!(pack.is_empty());
        assert_eq!(warnings.len(), 1);
    }
}
