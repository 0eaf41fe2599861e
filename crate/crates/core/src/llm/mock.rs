use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::{prompt_hash, ChatBackend, ChatTurn, ENTITIES_SYSTEM};
use crate::error::{Error, Result};

/// What the mock answers for prompts missing from its script.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockFallback {
    /// Fail like an unreachable backend.
    #[default]
    Error,
    Constant(String),
    /// `real` or `fake` chosen by the prompt hash. Entity-extraction
    /// prompts get the capitalized words of the news text instead.
    HashLabel,
}

/// One line of a mock script file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub prompt_hash: String,
    pub response: String,
}

/// Deterministic chat backend: identical prompts always get identical
/// answers.
#[derive(Debug, Default)]
pub struct MockChat {
    script: HashMap<String, String>,
    fallback: MockFallback,
    calls: AtomicU64,
}

impl MockChat {
    pub fn new(fallback: MockFallback) -> Self {
        MockChat {
            script: HashMap::new(),
            fallback,
            calls: AtomicU64::new(0),
        }
    }

    pub fn with_response(mut self, turns: &[ChatTurn], response: impl Into<String>) -> Self {
        self.script.insert(prompt_hash(turns), response.into());
        self
    }

    /// Load a JSONL script of [`ScriptEntry`] lines.
    pub fn load(path: &Path, fallback: MockFallback) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut mock = MockChat::new(fallback);
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                message: e.to_string(),
            })?;
            mock.script.insert(entry.prompt_hash, entry.response);
        }
        Ok(mock)
    }

    pub fn script_len(&self) -> usize {
        self.script.len()
    }
}

fn capitalized_words(text: &str) -> String {
    let mut seen = Vec::<String>::new();
    for w in text.split_whitespace() {
        let w = w.trim_matches(|c: char| !c.is_alphanumeric());
        if w.chars().next().is_some_and(char::is_uppercase) && !seen.iter().any(|s| s == w) {
            seen.push(w.to_string());
        }
    }
    seen.join("\n")
}

impl ChatBackend for MockChat {
    fn name(&self) -> &str {
        "mock"
    }

    fn chat(&self, turns: &[ChatTurn]) -> Result<String> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let hash = prompt_hash(turns);
        if let Some(r) = self.script.get(&hash) {
            return Ok(r.clone());
        }
        match &self.fallback {
            MockFallback::Error => Err(Error::backend("mock", format!("no scripted response for prompt {hash}"))),
            MockFallback::Constant(s) => Ok(s.clone()),
            MockFallback::HashLabel => {
                if turns.first().is_some_and(|t| t.content == ENTITIES_SYSTEM) {
                    let news = turns
                        .last()
                        .and_then(|t| t.content.split_once("News: "))
                        .map(|(_, n)| n)
                        .unwrap_or("");
                    return Ok(capitalized_words(news));
                }
                let first = u8::from_str_radix(&hash[..2], 16).expect("hex digest");
                Ok(if first.is_multiple_of(2) { "real" } else { "fake" }.to_string())
            }
        }
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}
