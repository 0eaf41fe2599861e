//! Chat-style LLM access: prompt assembly, label parsing and the backends.
//!
//! [`ChatBackend`] is the transport (a chat-completions endpoint or a
//! scripted mock). [`LanguageModel`] is what the pipeline calls; [`ChatLlm`]
//! implements it over any chat backend, and the simulation harness provides
//! oracle implementations that never look at prompts.

mod mock;
mod prompt;
mod remote;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{Label, NewsItem};
use crate::error::Result;
use crate::retrieval::{Demonstration, KnowledgePack, PseudoLabelVocab};
use crate::sources::sha256_hex;

pub use mock::{MockChat, MockFallback, ScriptEntry};
pub use prompt::{
    assemble_prompt, entity_prompt, parse_entities, parse_label, render_knowledge, retry_prompt, ENTITIES_SYSTEM,
};
pub use remote::{RemoteChat, RemoteChatConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: Role,
    pub content: String,
}

impl ChatTurn {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        ChatTurn {
            role,
            content: content.into(),
        }
    }
}

/// Stable digest of a turn sequence, used to key mock scripts.
pub fn prompt_hash(turns: &[ChatTurn]) -> String {
    sha256_hex(&serde_json::to_vec(turns).expect("turns serialize"))
}

/// One request/response exchange with a chat model.
pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;
    fn chat(&self, turns: &[ChatTurn]) -> Result<String>;
    /// Requests issued so far.
    fn calls(&self) -> u64;
}

/// An LLM prediction for one item. `label` is `None` when the model
/// abstained (its answer could not be parsed, twice).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmPrediction {
    pub label: Option<Label>,
    pub raw_response: String,
    pub round: u32,
    pub demonstrations_used: usize,
    pub knowledge_used: usize,
    #[serde(default)]
    pub retried: bool,
}

/// The LLM as seen by the pipeline.
pub trait LanguageModel: Send + Sync {
    fn predict(
        &self,
        item: &NewsItem,
        demos: &[Demonstration],
        pack: &KnowledgePack,
        round: u32,
    ) -> Result<LlmPrediction>;

    fn extract_entities(&self, item: &NewsItem, max_entities: usize) -> Result<Vec<String>>;
}

/// Prompted classification over a chat backend.
pub struct ChatLlm {
    backend: Arc<dyn ChatBackend>,
    vocab: PseudoLabelVocab,
}

impl ChatLlm {
    pub fn new(backend: Arc<dyn ChatBackend>, vocab: PseudoLabelVocab) -> Self {
        ChatLlm { backend, vocab }
    }

    pub fn backend(&self) -> &Arc<dyn ChatBackend> {
        &self.backend
    }
}

impl LanguageModel for ChatLlm {
    fn predict(
        &self,
        item: &NewsItem,
        demos: &[Demonstration],
        pack: &KnowledgePack,
        round: u32,
    ) -> Result<LlmPrediction> {
        let turns = assemble_prompt(item, demos, pack, &self.vocab);
        let mut raw = self.backend.chat(&turns)?;
        let mut label = parse_label(&raw);
        let retried = label.is_none();
        if retried {
            raw = self.backend.chat(&retry_prompt(turns))?;
            label = parse_label(&raw);
            if label.is_none() {
                log::debug!("item {}: unparseable answer after retry, abstaining", item.id);
            }
        }
        Ok(LlmPrediction {
            label,
            raw_response: raw,
            round,
            demonstrations_used: demos.len(),
            knowledge_used: pack.len(),
            retried,
        })
    }

    fn extract_entities(&self, item: &NewsItem, max_entities: usize) -> Result<Vec<String>> {
        let raw = self.backend.chat(&entity_prompt(item, max_entities))?;
        Ok(parse_entities(&raw, max_entities))
    }
}
