//! News items, datasets and the temporal split into labeled past events and
//! unlabeled future events.
//!
//! Datasets are line-delimited JSON with the fixed fields `id`, `text`,
//! `event_id`, `timestamp` and an optional `label` (`"real"` or `"fake"`).

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Real, Label::Fake];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Fake => "fake",
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Real => Label::Fake,
            Label::Fake => Label::Real,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    /// Strict: only the lowercase serialized forms are accepted.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Label::Real),
            "fake" => Ok(Label::Fake),
            other => Err(Error::Validation(format!(
                "unknown label `{other}` (expected \"real\" or \"fake\")"
            ))),
        }
    }
}

/// One news post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewsItem {
    pub id: String,
    pub text: String,
    pub event_id: String,
    pub timestamp: i64,
    #[serde(rename = "label", default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<Label>,
}

impl NewsItem {
    pub fn new(id: impl Into<String>, text: impl Into<String>, event_id: impl Into<String>, timestamp: i64) -> Self {
        NewsItem {
            id: id.into(),
            text: text.into(),
            event_id: event_id.into(),
            timestamp,
            gold_label: None,
        }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.gold_label = Some(label);
        self
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.text.trim().is_empty() {
            return Err(format!("item `{}` has empty text", self.id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub items: Vec<NewsItem>,
    /// Items with `timestamp <= split_cutoff` are past events.
    pub split_cutoff: i64,
}

/// A labeled past item handed to SLM pretraining.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledItem {
    pub item: NewsItem,
    pub label: Label,
}

/// Result of [`temporal_split`]. Future items carry no label; their gold
/// labels, when the file had them, live only in `hidden_gold` for evaluation.
#[derive(Debug, Clone, Default)]
pub struct Split {
    pub labeled: Vec<LabeledItem>,
    pub unlabeled: Vec<NewsItem>,
    pub hidden_gold: BTreeMap<String, Label>,
}

impl Dataset {
    pub fn new(items: Vec<NewsItem>, split_cutoff: i64) -> Result<Self> {
        let mut seen = HashSet::with_capacity(items.len());
        for item in &items {
            item.validate().map_err(Error::Validation)?;
            if !seen.insert(item.id.as_str()) {
                return Err(Error::Validation(format!("duplicate id `{}`", item.id)));
            }
        }
        Ok(Dataset { items, split_cutoff })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Gold labels for every item that has one, keyed by id.
    pub fn gold(&self) -> BTreeMap<String, Label> {
        self.items
            .iter()
            .filter_map(|it| it.gold_label.map(|l| (it.id.clone(), l)))
            .collect()
    }
}

pub fn load_dataset(path: &Path, format: DatasetFormat, split_cutoff: i64) -> Result<Dataset> {
    match format {
        DatasetFormat::Jsonl => load_jsonl(path, split_cutoff),
    }
}

fn load_jsonl(path: &Path, split_cutoff: i64) -> Result<Dataset> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let shown = path.display().to_string();
    let mut items = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item: NewsItem = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: shown.clone(),
            line: line_no,
            message: e.to_string(),
        })?;
        item.validate().map_err(|message| Error::Parse {
            path: shown.clone(),
            line: line_no,
            message,
        })?;
        if !seen.insert(item.id.clone()) {
            return Err(Error::Validation(format!(
                "{shown}: line {line_no}: duplicate id `{}`",
                item.id
            )));
        }
        items.push(item);
    }
    Ok(Dataset { items, split_cutoff })
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut out = Vec::new();
    for item in &dataset.items {
        serde_json::to_writer(&mut out, item)?;
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Partition into past (`timestamp <= cutoff`) and future items, preserving
/// order. Every past item must carry a gold label.
pub fn temporal_split(dataset: &Dataset) -> Result<Split> {
    let mut split = Split::default();
    for item in &dataset.items {
        if item.timestamp <= dataset.split_cutoff {
            let label = item.gold_label.ok_or_else(|| {
                Error::Validation(format!("past item `{}` has no label", item.id))
            })?;
            split.labeled.push(LabeledItem {
                item: item.clone(),
                label,
            });
        } else {
            let mut hidden = item.clone();
            if let Some(label) = hidden.gold_label.take() {
                split.hidden_gold.insert(hidden.id.clone(), label);
            }
            split.unlabeled.push(hidden);
        }
    }
    Ok(split)
}
