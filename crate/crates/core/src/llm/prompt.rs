use super::{ChatTurn, Role};
use crate::bm25::tokenize;
use crate::corpus::{Label, NewsItem};
use crate::retrieval::{Demonstration, KnowledgePack, PseudoLabelVocab};

pub const SYSTEM: &str = include_str!("../../templates/system.txt");
pub const DEMONSTRATION: &str = include_str!("../../templates/demonstration.txt");
pub const QUERY: &str = include_str!("../../templates/query.txt");
pub const QUERY_WITH_KNOWLEDGE: &str = include_str!("../../templates/query_with_knowledge.txt");
pub const RETRY: &str = include_str!("../../templates/retry.txt");
pub const ENTITIES_SYSTEM: &str = include_str!("../../templates/entities_system.txt");
pub const ENTITIES: &str = include_str!("../../templates/entities.txt");

/// Knowledge entries as one line: `[entity] summary` joined by spaces.
pub fn render_knowledge(pack: &KnowledgePack) -> String {
    pack.entries
        .iter()
        .map(|e| format!("[{}] {}", e.entity, e.summary))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Detection prompt: system turn, a user/assistant pair per demonstration
/// (user turn only when the vocabulary hides labels), then the query turn.
/// The query turn mentions knowledge only when the pack is non-empty.
pub fn assemble_prompt(
    item: &NewsItem,
    demos: &[Demonstration],
    pack: &KnowledgePack,
    vocab: &PseudoLabelVocab,
) -> Vec<ChatTurn> {
    let mut turns = Vec::with_capacity(2 + 2 * demos.len());
    turns.push(ChatTurn::new(Role::System, SYSTEM));
    for d in demos {
        turns.push(ChatTurn::new(Role::User, DEMONSTRATION.replace("{demonstration}", d.text.trim())));
        if vocab.show_labels {
            turns.push(ChatTurn::new(Role::Assistant, d.pseudo_label.clone()));
        }
    }
    let news = item.text.trim();
    let query = if pack.is_empty() {
        QUERY.replace("{news}", news)
    } else {
        QUERY_WITH_KNOWLEDGE
            .replace("{wikidata}", &render_knowledge(pack))
            .replace("{news}", news)
    };
    turns.push(ChatTurn::new(Role::User, query));
    turns
}

/// The same prompt with the retry instruction appended to the last turn.
pub fn retry_prompt(mut turns: Vec<ChatTurn>) -> Vec<ChatTurn> {
    if let Some(last) = turns.last_mut() {
        last.content.push(' ');
        last.content.push_str(RETRY);
    }
    turns
}

pub fn entity_prompt(item: &NewsItem, max_entities: usize) -> Vec<ChatTurn> {
    vec![
        ChatTurn::new(Role::System, ENTITIES_SYSTEM),
        ChatTurn::new(
            Role::User,
            ENTITIES
                .replace("{max}", &max_entities.to_string())
                .replace("{news}", item.text.trim()),
        ),
    ]
}

/// Entity names from a newline-separated answer. List markers are
/// stripped; blank lines are skipped.
pub fn parse_entities(raw: &str, max_entities: usize) -> Vec<String> {
    raw.lines()
        .map(|l| {
            l.trim()
                .trim_start_matches(|c: char| c.is_ascii_digit() || matches!(c, '-' | '*' | '.' | ')' | '•'))
                .trim()
                .trim_matches('"')
                .to_string()
        })
        .filter(|l| !l.is_empty())
        .take(max_entities)
        .collect()
}

/// `real` or `fake` as a whole word, case-insensitive. The first line
/// decides when it contains exactly one of the two; otherwise the whole
/// text must. Anything else is unparseable.
pub fn parse_label(raw: &str) -> Option<Label> {
    fn scan(text: &str) -> Option<Label> {
        let tokens = tokenize(text);
        let real = tokens.iter().any(|t| t == "real");
        let fake = tokens.iter().any(|t| t == "fake");
        match (real, fake) {
            (true, false) => Some(Label::Real),
            (false, true) => Some(Label::Fake),
            _ => None,
        }
    }
    let first = raw.trim_start().lines().next().unwrap_or("");
    scan(first).or_else(|| scan(raw))
}
