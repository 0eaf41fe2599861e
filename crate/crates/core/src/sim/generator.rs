use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{write_dataset, Dataset, Label, NewsItem};
use crate::error::{Error, Result};
use crate::seeds;
use crate::sources::{CorpusRecord, DocSource, KnowledgeEntry, RetrievedDoc};

/// Parameters of a synthetic dataset.
///
/// Every item mentions the capitalized topic words of its event, a few
/// class cue words and some neutral filler. Items of future events draw each
/// cue from a vocabulary never seen in the past with probability `drift`,
/// which is a stand-in for the shift between past and emergent events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n_items: usize,
    /// Fraction of fake items.
    pub balance: f64,
    pub drift: f64,
    pub n_events: usize,
    /// Fraction of items (and events) after the split cutoff.
    pub future_fraction: f64,
    pub seed: u64,
    pub cues_per_item: usize,
    pub neutral_per_item: usize,
    pub topic_words: usize,
    /// Probability that an item's cues come from the opposite class.
    pub label_noise: f64,
    pub cue_vocab: usize,
    pub neutral_vocab: usize,
    pub search_docs_per_event: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_items: 200,
            balance: 0.5,
            drift: 0.3,
            n_events: 20,
            future_fraction: 0.3,
            seed: 7,
            cues_per_item: 2,
            neutral_per_item: 8,
            topic_words: 3,
            label_noise: 0.05,
            cue_vocab: 20,
            neutral_vocab: 300,
            search_docs_per_event: 4,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.n_items == 0 {
            return Err(Error::config("n_items", "must be at least 1"));
        }
        if !(self.balance > 0.0 && self.balance < 1.0) {
            return Err(Error::config("balance", "must be in (0, 1)"));
        }
        if !unit(self.drift) {
            return Err(Error::config("drift", "must be in [0, 1]"));
        }
        if !(self.future_fraction > 0.0 && self.future_fraction < 1.0) {
            return Err(Error::config("future_fraction", "must be in (0, 1)"));
        }
        if !unit(self.label_noise) {
            return Err(Error::config("label_noise", "must be in [0, 1]"));
        }
        if self.n_events < 2 {
            return Err(Error::config("n_events", "must be at least 2"));
        }
        if self.cue_vocab == 0 || self.neutral_vocab == 0 || self.cues_per_item + self.neutral_per_item == 0 {
            return Err(Error::config("cue_vocab", "vocabularies and per-item counts must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBundle {
    pub dataset: Dataset,
    /// Search-engine documents. They carry no event id.
    pub search_docs: Vec<RetrievedDoc>,
    pub knowledge: Vec<KnowledgeEntry>,
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const BASE_TIME: i64 = 1_420_070_400;
const DAY: i64 = 86_400;

/// A pronounceable three-syllable word, distinct for every `i` below 70³.
fn word(i: usize) -> String {
    let syl = CONSONANTS.len() * VOWELS.len();
    let mut n = i % (syl * syl * syl);
    let mut out = String::with_capacity(6);
    for _ in 0..3 {
        let s = n % syl;
        n /= syl;
        out.push(CONSONANTS[s / VOWELS.len()] as char);
        out.push(VOWELS[s % VOWELS.len()] as char);
    }
    out
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

struct Vocab {
    neutral: Vec<String>,
    /// Indexed by `[future][class]`, class 0 = real, 1 = fake.
    cues: [[Vec<String>; 2]; 2],
}

impl Vocab {
    fn new(spec: &SyntheticSpec) -> Self {
        let block = |start: usize, n: usize| (start..start + n).map(word).collect::<Vec<_>>();
        let c = spec.cue_vocab;
        Vocab {
            neutral: block(0, spec.neutral_vocab),
            cues: [
                [block(100_000, c), block(110_000, c)],
                [block(120_000, c), block(130_000, c)],
            ],
        }
    }
}

fn class(label: Label) -> usize {
    match label {
        Label::Real => 0,
        Label::Fake => 1,
    }
}

fn topic(event: usize, spec: &SyntheticSpec) -> Vec<String> {
    (0..spec.topic_words)
        .map(|j| capitalize(&word(200_000 + event * spec.topic_words + j)))
        .collect()
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticBundle> {
    spec.validate()?;
    let vocab = Vocab::new(spec);
    let n_past = ((spec.n_items as f64) * (1.0 - spec.future_fraction)).round() as usize;
    let past_events = (((spec.n_events as f64) * (1.0 - spec.future_fraction)).round() as usize).clamp(1, spec.n_events - 1);
    let split_cutoff = BASE_TIME + past_events as i64 * DAY - 1;

    let n_fake = ((spec.n_items as f64) * spec.balance).round() as usize;
    let mut labels: Vec<Label> = (0..spec.n_items)
        .map(|i| if i < n_fake { Label::Fake } else { Label::Real })
        .collect();
    labels.shuffle(&mut seeds::rng(spec.seed, &["synthetic", "labels"]));

    let mut items = Vec::with_capacity(spec.n_items);
    for (i, &label) in labels.iter().enumerate() {
        let id = format!("n{i:05}");
        let mut rng = seeds::rng(spec.seed, &["synthetic", "item", &id]);
        let future = i >= n_past;
        let event = if future {
            past_events + rng.random_range(0..spec.n_events - past_events)
        } else {
            rng.random_range(0..past_events)
        };
        let timestamp = BASE_TIME + event as i64 * DAY + rng.random_range(0..DAY);
        let cue_class = if rng.random::<f64>() < spec.label_noise {
            class(label.flipped())
        } else {
            class(label)
        };
        let mut body: Vec<String> = Vec::new();
        for _ in 0..spec.cues_per_item {
            let drifted = future && rng.random::<f64>() < spec.drift;
            let pool = &vocab.cues[drifted as usize][cue_class];
            body.push(pool[rng.random_range(0..pool.len())].clone());
        }
        for _ in 0..spec.neutral_per_item {
            body.push(vocab.neutral[rng.random_range(0..vocab.neutral.len())].clone());
        }
        body.shuffle(&mut rng);
        let text = format!("{} {}.", topic(event, spec).join(" "), body.join(" "));
        items.push(NewsItem::new(id, text, format!("e{event:03}"), timestamp).with_label(label));
    }

    let mut search_docs = Vec::new();
    let mut knowledge = Vec::new();
    for event in 0..spec.n_events {
        let words = topic(event, spec);
        for w in &words {
            knowledge.push(KnowledgeEntry {
                entity: w.clone(),
                summary: format!("{w} is a name that appears in reports about event e{event:03}."),
            });
        }
        for j in 0..spec.search_docs_per_event {
            let mut rng = seeds::rng(spec.seed, &["synthetic", "search", &event.to_string(), &j.to_string()]);
            let filler: Vec<&str> = (0..spec.neutral_per_item.max(1))
                .map(|_| vocab.neutral[rng.random_range(0..vocab.neutral.len())].as_str())
                .collect();
            search_docs.push(RetrievedDoc {
                source: DocSource::SearchEngine,
                doc_id: format!("s{event:03}-{j}"),
                text: format!("{} {}.", words.join(" "), filler.join(" ")),
                published_at: Some(BASE_TIME + event as i64 * DAY),
                event_id: None,
            });
        }
    }

    Ok(SyntheticBundle {
        dataset: Dataset { items, split_cutoff },
        search_docs,
        knowledge,
    })
}

/// File names written by [`write_bundle`]: dataset, search documents (news
/// corpus format) and knowledge entries.
pub const BUNDLE_FILES: [&str; 3] = ["dataset.jsonl", "search.jsonl", "knowledge.jsonl"];

pub fn write_bundle(dir: &Path, bundle: &SyntheticBundle) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_dataset(&dir.join(BUNDLE_FILES[0]), &bundle.dataset)?;
    let records = bundle.search_docs.iter().map(|d| CorpusRecord {
        id: d.doc_id.clone(),
        text: d.text.clone(),
        published_at: d.published_at,
        event_id: d.event_id.clone(),
    });
    write_jsonl(&dir.join(BUNDLE_FILES[1]), records)?;
    write_jsonl(&dir.join(BUNDLE_FILES[2]), bundle.knowledge.iter().cloned())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl Iterator<Item = T>) -> Result<()> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, &r)?;
        out.push(b'\n');
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::temporal_split;

    #[test]
    fn words_are_distinct() {
        let words: std::collections::HashSet<String> = (0..5000).map(word).collect();
        assert_eq!(words.len(), 5000);
        assert_eq!(word(0), "bababa");
    }

    #[test]
    fn exact_class_counts_and_split() {
        let b = generate(&SyntheticSpec::default()).unwrap();
        let fake = b.dataset.items.iter().filter(|i| i.gold_label == Some(Label::Fake)).count();
        assert_eq!(fake, 100);
        let split = temporal_split(&b.dataset).unwrap();
        assert_eq!(split.labeled.len(), 140);
        assert_eq!(split.unlabeled.len(), 60);
    }

    #[test]
    fn deterministic_by_seed() {
        let s = SyntheticSpec::default();
        assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
        let other = SyntheticSpec { seed: 8, ..s.clone() };
        assert_ne!(generate(&s).unwrap().dataset, generate(&other).unwrap().dataset);
    }

    #[test]
    fn bad_spec_names_field() {
        let err = generate(&SyntheticSpec {
            balance: 1.0,
            ..SyntheticSpec::default()
        })
        .unwrap_err();
        assert!(err.to_string().contains("balance"));
    }
}
