mod common;

use std::sync::Arc;

use cofact::bm25::tokenize;
use cofact::corpus::{Label, NewsItem};
use cofact::error::Result;
use cofact::llm::{entity_prompt, ChatLlm, MockChat, MockFallback};
use cofact::retrieval::{
    assign_pseudo_labels, build_knowledge_pack, CleanPoolIndex, PseudoLabelVocab, RetrievalConfig, Retriever,
    SourceSwitches,
};
use cofact::sources::{
    now_epoch, CacheRecord, DocSource, FetchMode, NewsSearch, Provider, ResponseCache, RetrievedDoc, WikipediaClient,
    WikipediaConfig,
};
use statrs::distribution::{ChiSquared, ContinuousCDF};

struct Fixed(Vec<RetrievedDoc>);

impl NewsSearch for Fixed {
    fn search_news(&self, _query: &str, _limit: usize) -> Result<Vec<RetrievedDoc>> {
        Ok(self.0.clone())
    }
}

fn doc(id: &str, text: &str) -> RetrievedDoc {
    RetrievedDoc {
        source: DocSource::SearchEngine,
        doc_id: id.into(),
        text: text.into(),
        published_at: None,
        event_id: None,
    }
}

fn retriever(search: Option<Arc<dyn NewsSearch>>, k: usize) -> Retriever {
    Retriever {
        search,
        corpus: None,
        knowledge: None,
        config: RetrievalConfig {
            k,
            search_limit: 20,
            ..RetrievalConfig::default()
        },
        vocab: PseudoLabelVocab::default(),
        switches: SourceSwitches::default(),
        seed: 7,
    }
}

#[test]
fn pseudo_labels_are_fair_coins() {
    let vocab = PseudoLabelVocab::default();
    let docs: Vec<RetrievedDoc> = (0..10_000).map(|i| doc(&format!("doc-{i}"), "same text everywhere")).collect();
    let labels = assign_pseudo_labels(&docs, &vocab, 2024);
    let pos = labels.iter().filter(|(_, l)| *l == vocab.positive_term).count() as f64;
    let neg = labels.len() as f64 - pos;
    let e = labels.len() as f64 / 2.0;
    let chi2 = (pos - e).powi(2) / e + (neg - e).powi(2) / e;
    let p = 1.0 - ChiSquared::new(1.0).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi2 {chi2}, p {p}");
    let frac = pos / labels.len() as f64;
    assert!((0.48..=0.52).contains(&frac), "{frac}");
}

#[test]
fn pseudo_labels_ignore_content() {
    let vocab = PseudoLabelVocab::default();
    let a: Vec<RetrievedDoc> = (0..200).map(|i| doc(&format!("d{i}"), "the storm hit the coast")).collect();
    let b: Vec<RetrievedDoc> = (0..200).map(|i| doc(&format!("d{i}"), &format!("unrelated text number {i}"))).collect();
    let la: Vec<String> = assign_pseudo_labels(&a, &vocab, 5).into_iter().map(|(_, l)| l).collect();
    let lb: Vec<String> = assign_pseudo_labels(&b, &vocab, 5).into_iter().map(|(_, l)| l).collect();
    assert_eq!(la, lb);
    assert!(la.contains(&vocab.positive_term) && la.contains(&vocab.negative_term));
}

const CANDIDATES: [&str; 12] = [
    "Storm floods the harbor district overnight",
    "Harbor bridge closed after storm damage",
    "Mayor visits flooded harbor homes",
    "Football club signs new striker",
    "Bridge inspection finds storm cracks in the harbor bridge",
    "Election results announced in the capital",
    "Storm warning issued for the northern coast",
    "Recipe for a quick weeknight pasta",
    "New museum opens downtown",
    "Harbor workers strike over pay",
    "Stock markets close higher on Friday",
    "Scientists track storm path with drones",
];

#[test]
fn round_one_takes_bm25_top_k() {
    let docs: Vec<RetrievedDoc> = CANDIDATES.iter().enumerate().map(|(i, t)| doc(&format!("c{i:02}"), t)).collect();
    let item = NewsItem::new("n1", "Storm damage closes the harbor bridge", "e1", 10);
    let r = retriever(Some(Arc::new(Fixed(docs.clone()))), 4);
    let got = r.retrieve_demonstrations(&item, 1, &CleanPoolIndex::empty()).unwrap();

    let tokenized: Vec<(String, Vec<String>)> = docs.iter().map(|d| (d.doc_id.clone(), tokenize(&d.text))).collect();
    let want = common::brute_force_bm25(&tokenized, &tokenize(&item.text), 1.2, 0.75, 4);
    let ids: Vec<&str> = got.demonstrations.iter().map(|d| d.doc_id.as_str()).collect();
    let want_ids: Vec<&str> = want.iter().map(|(id, _)| id.as_str()).collect();
    assert_eq!(ids, want_ids);
    let vocab = PseudoLabelVocab::default();
    assert!(got.demonstrations.iter().all(|d| vocab.contains(&d.pseudo_label)));
}

#[test]
fn round_one_fails_only_when_every_provider_fails() {
    struct Down;
    impl NewsSearch for Down {
        fn search_news(&self, _: &str, _: usize) -> Result<Vec<RetrievedDoc>> {
            Err(cofact::error::Error::ProviderUnavailable {
                provider: "search".into(),
                reason: "down".into(),
            })
        }
    }
    let item = NewsItem::new("n1", "Storm damage", "e1", 10);
    let r = retriever(Some(Arc::new(Down)), 4);
    let err = r.retrieve_demonstrations(&item, 1, &CleanPoolIndex::empty()).unwrap_err();
    assert!(matches!(err, cofact::error::Error::Retrieval { .. }), "{err}");
}

#[test]
fn later_rounds_use_clean_pool_labels() {
    let pool = CleanPoolIndex::build(vec![
        (NewsItem::new("p1", "harbor bridge storm", "e1", 1), Label::Fake),
        (NewsItem::new("p2", "election capital", "e2", 1), Label::Real),
        (NewsItem::new("p3", "storm harbor", "e1", 1), Label::Real),
    ])
    .unwrap();
    let item = NewsItem::new("n1", "storm over the harbor bridge", "e1", 10);
    let got = retriever(None, 2).retrieve_demonstrations(&item, 2, &pool).unwrap();
    let pairs: Vec<(&str, &str)> = got
        .demonstrations
        .iter()
        .map(|d| (d.doc_id.as_str(), d.pseudo_label.as_str()))
        .collect();
    assert_eq!(pairs, [("p1", "unrealistic"), ("p3", "realistic")]);
    assert!(got.demonstrations.iter().all(|d| d.origin == DocSource::CleanPool));
}

#[test]
fn knowledge_pack_keeps_extraction_order() {
    let dir = tempfile::tempdir().unwrap();
    let cache = ResponseCache::open(dir.path()).unwrap();
    let client = WikipediaClient::new(WikipediaConfig::default(), Some(cache.clone()), FetchMode::Replay);
    for (entity, extract) in [("Porto", "Porto is a city in Portugal."), ("Ana Ruiz", "Ana Ruiz is a mayor.")] {
        let body = serde_json::json!({ "extract": extract }).to_string();
        cache
            .put(&CacheRecord::new(Provider::Wikipedia, client.request_key(entity), 200, body.as_bytes(), now_epoch()))
            .unwrap();
    }

    let item = NewsItem::new("n1", "Mayor Ana Ruiz opens the new bridge in Porto", "e1", 10);
    let max = RetrievalConfig::default().max_entities;
    let mock = MockChat::new(MockFallback::Error).with_response(&entity_prompt(&item, max), "Ana Ruiz\nAtlantis\nPorto");
    let llm = ChatLlm::new(Arc::new(mock), PseudoLabelVocab::default());
    let (pack, warnings) = build_knowledge_pack(&item, &llm, Some(&client), max);
    let entities: Vec<&str> = pack.entries.iter().map(|e| e.entity.as_str()).collect();
    assert_eq!(entities, ["Ana Ruiz", "Porto"]);
    assert_eq!(warnings.len(), 1, "{warnings:?}");
    assert!(warnings[0].contains("Atlantis"));
}
