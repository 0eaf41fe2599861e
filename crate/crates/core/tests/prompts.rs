mod common;

use cofact::corpus::{Label, NewsItem};
use cofact::llm::{assemble_prompt, parse_label, retry_prompt, ChatTurn, Role};
use cofact::retrieval::{Demonstration, KnowledgePack, PseudoLabelVocab, VocabPreset};
use cofact::sources::{DocSource, KnowledgeEntry};

fn render(turns: &[ChatTurn]) -> String {
    turns
        .iter()
        .map(|t| {
            let role = match t.role {
                Role::System => "system",
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            format!("[{role}]\n{}\n", t.content)
        })
        .collect()
}

fn item() -> NewsItem {
    NewsItem::new("n1", "Mayor Ana Ruiz opens the new bridge in Porto", "e1", 100)
}

fn demos() -> Vec<Demonstration> {
    [
        ("d1", "Bridge opening in Porto delayed by storms", "realistic"),
        ("d2", "City council denies bridge funding scandal", "unrealistic"),
    ]
    .into_iter()
    .map(|(id, text, label)| Demonstration {
        doc_id: id.into(),
        text: text.into(),
        pseudo_label: label.into(),
        origin: DocSource::SearchEngine,
        score: 1.0,
        event_id: None,
    })
    .collect()
}

fn pack() -> KnowledgePack {
    KnowledgePack {
        entries: vec![KnowledgeEntry {
            entity: "Porto".into(),
            summary: "Porto is a coastal city in northern Portugal".into(),
        }],
    }
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(common::fixture(&format!("prompts/{name}.txt"))).unwrap()
}

#[test]
fn zero_demonstrations() {
    let turns = assemble_prompt(&item(), &[], &pack(), &PseudoLabelVocab::default());
    assert_eq!(render(&turns), golden("zero_demo"));
}

#[test]
fn k_demonstrations() {
    let turns = assemble_prompt(&item(), &demos(), &pack(), &PseudoLabelVocab::default());
    assert_eq!(render(&turns), golden("k_demo"));
}

#[test]
fn empty_knowledge() {
    let turns = assemble_prompt(&item(), &demos(), &KnowledgePack::default(), &PseudoLabelVocab::default());
    assert_eq!(render(&turns), golden("empty_knowledge"));
}

#[test]
fn unlabeled_vocab_drops_assistant_turns() {
    let turns = assemble_prompt(&item(), &demos(), &pack(), &VocabPreset::Unlabeled.vocab());
    assert_eq!(turns.len(), 4);
    assert!(turns.iter().all(|t| t.role != Role::Assistant));
}

#[test]
fn retry_extends_last_turn_only() {
    let turns = assemble_prompt(&item(), &demos(), &pack(), &PseudoLabelVocab::default());
    let retried = retry_prompt(turns.clone());
    assert_eq!(retried.len(), turns.len());
    assert_eq!(retried[..turns.len() - 1], turns[..turns.len() - 1]);
    assert!(retried.last().unwrap().content.starts_with(&turns.last().unwrap().content));
}

#[test]
fn label_parsing() {
    assert_eq!(parse_label("Fake"), Some(Label::Fake));
    assert_eq!(parse_label("  real.\n"), Some(Label::Real));
    assert_eq!(parse_label("real or fake"), None);
    assert_eq!(parse_label("I cannot tell"), None);
}
