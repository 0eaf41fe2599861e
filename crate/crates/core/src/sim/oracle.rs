use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{Label, LabeledItem, NewsItem};
use crate::error::{Error, Result};
use crate::llm::{LanguageModel, LlmPrediction};
use crate::retrieval::{Demonstration, KnowledgePack};
use crate::seeds;
use crate::slm::{SlmPrediction, SmallModel};

/// Confidence draws for correct and incorrect predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfidenceModel {
    pub correct_lo: f64,
    pub correct_hi: f64,
    pub incorrect_lo: f64,
    pub incorrect_hi: f64,
}

impl Default for ConfidenceModel {
    fn default() -> Self {
        ConfidenceModel {
            correct_lo: 0.7,
            correct_hi: 1.0,
            incorrect_lo: 0.5,
            incorrect_hi: 0.85,
        }
    }
}

impl ConfidenceModel {
    pub fn validate(&self) -> Result<()> {
        for (lo, hi, field) in [
            (self.correct_lo, self.correct_hi, "confidence.correct"),
            (self.incorrect_lo, self.incorrect_hi, "confidence.incorrect"),
        ] {
            if !(0.5 <= lo && lo <= hi && hi <= 1.0) {
                return Err(Error::config(field, format!("need 0.5 <= lo <= hi <= 1, got [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    fn draw(&self, correct: bool, u: f64) -> f64 {
        let (lo, hi) = if correct {
            (self.correct_lo, self.correct_hi)
        } else {
            (self.incorrect_lo, self.incorrect_hi)
        };
        lo + u * (hi - lo)
    }
}

fn check_probability(v: f64, field: &str) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be in [0, 1], got {v}")))
    }
}

fn gold_of(gold: &HashMap<String, Label>, item: &NewsItem, who: &str) -> Result<Label> {
    gold.get(&item.id)
        .copied()
        .or(item.gold_label)
        .ok_or_else(|| Error::backend(who, format!("no gold label for `{}`", item.id)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleLlmConfig {
    pub accuracy: f64,
    /// Added to the accuracy when a demonstration shares the item's event.
    /// Zero makes the oracle ignore its inputs.
    pub demo_boost: f64,
    pub abstain_rate: f64,
}

impl Default for OracleLlmConfig {
    fn default() -> Self {
        OracleLlmConfig {
            accuracy: 0.75,
            demo_boost: 0.0,
            abstain_rate: 0.0,
        }
    }
}

impl OracleLlmConfig {
    pub fn validate(&self) -> Result<()> {
        check_probability(self.accuracy, "llm.accuracy")?;
        check_probability(self.demo_boost, "llm.demo_boost")?;
        check_probability(self.abstain_rate, "llm.abstain_rate")
    }
}

/// An LLM stand-in that is right with a fixed probability per item.
///
/// Each item gets one uniform draw `u` for the whole run and the answer is
/// correct iff `u < accuracy (+ demo_boost)`, so a better demonstration set
/// can only turn a wrong answer into a right one.
pub struct OracleLlm {
    config: OracleLlmConfig,
    gold: Arc<HashMap<String, Label>>,
    seed: u64,
}

impl OracleLlm {
    pub fn new(config: OracleLlmConfig, gold: Arc<HashMap<String, Label>>, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(OracleLlm { config, gold, seed })
    }
}

impl LanguageModel for OracleLlm {
    fn predict(
        &self,
        item: &NewsItem,
        demos: &[Demonstration],
        pack: &KnowledgePack,
        round: u32,
    ) -> Result<LlmPrediction> {
        let gold = gold_of(&self.gold, item, "oracle-llm")?;
        let abstain = self.config.abstain_rate > 0.0
            && seeds::unit(self.seed, &["oracle-llm-abstain", &item.id, &round.to_string()]) < self.config.abstain_rate;
        let label = if abstain {
            None
        } else {
            let same_event = demos.iter().any(|d| d.event_id.as_deref() == Some(item.event_id.as_str()));
            let p = self.config.accuracy + if same_event { self.config.demo_boost } else { 0.0 };
            let u = seeds::unit(self.seed, &["oracle-llm", &item.id]);
            Some(if u < p { gold } else { gold.flipped() })
        };
        Ok(LlmPrediction {
            label,
            raw_response: label.map(|l| l.as_str().to_string()).unwrap_or_else(|| "unsure".into()),
            round,
            demonstrations_used: demos.len(),
            knowledge_used: pack.len(),
            retried: abstain,
        })
    }

    /// Capitalized words, in order of first appearance.
    fn extract_entities(&self, item: &NewsItem, max_entities: usize) -> Result<Vec<String>> {
        let mut seen = HashSet::new();
        Ok(item
            .text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| w.chars().next().is_some_and(char::is_uppercase))
            .filter(|w| seen.insert(w.to_string()))
            .take(max_entities)
            .map(str::to_string)
            .collect())
    }
}

/// Parameters of the SLM stand-in.
///
/// After pretraining the oracle is right with probability `accuracy`. Each
/// fine-tune resets it to
/// `clamp(accuracy + gain * (c - penalty * w) / n, min_accuracy, max_accuracy)`
/// where `c` and `w` count correctly and wrongly labeled items in the
/// fine-tuning set and `n` is the number of unlabeled items, so a pool that
/// is right more than `penalty / (1 + penalty)` of the time helps and a
/// noisier one hurts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSlmConfig {
    pub accuracy: f64,
    pub confidence: ConfidenceModel,
    pub gain: f64,
    pub penalty: f64,
    pub min_accuracy: f64,
    pub max_accuracy: f64,
}

impl Default for OracleSlmConfig {
    fn default() -> Self {
        OracleSlmConfig {
            accuracy: 0.70,
            confidence: ConfidenceModel::default(),
            gain: 0.5,
            penalty: 5.5,
            min_accuracy: 0.5,
            max_accuracy: 0.95,
        }
    }
}

impl OracleSlmConfig {
    pub fn validate(&self) -> Result<()> {
        check_probability(self.accuracy, "slm.accuracy")?;
        check_probability(self.min_accuracy, "slm.min_accuracy")?;
        check_probability(self.max_accuracy, "slm.max_accuracy")?;
        if self.min_accuracy > self.max_accuracy {
            return Err(Error::config("slm.min_accuracy", "exceeds max_accuracy"));
        }
        if !(self.gain >= 0.0 && self.penalty >= 0.0) {
            return Err(Error::config("slm.gain", "gain and penalty must be non-negative"));
        }
        self.confidence.validate()
    }
}

/// A learning SLM stand-in. Correctness is redrawn for every model version,
/// independently of the LLM oracle.
pub struct OracleSlm {
    config: OracleSlmConfig,
    gold: Arc<HashMap<String, Label>>,
    seed: u64,
    version: u32,
    accuracy: f64,
    n_ref: usize,
}

const ORACLE_FORMAT: &str = "cofact-oracle-slm";

impl OracleSlm {
    pub fn new(config: OracleSlmConfig, gold: Arc<HashMap<String, Label>>, seed: u64) -> Result<Self> {
        config.validate()?;
        let accuracy = config.accuracy;
        Ok(OracleSlm {
            config,
            gold,
            seed,
            version: 0,
            accuracy,
            n_ref: 1,
        })
    }

    /// Probability of a correct answer for the current version.
    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }
}

impl SmallModel for OracleSlm {
    fn name(&self) -> &str {
        "oracle"
    }

    fn pretrain(&mut self, labeled: &[LabeledItem]) -> Result<()> {
        let past: HashSet<&str> = labeled.iter().map(|l| l.item.id.as_str()).collect();
        self.n_ref = self.gold.keys().filter(|k| !past.contains(k.as_str())).count().max(1);
        self.accuracy = self.config.accuracy;
        self.version = 1;
        Ok(())
    }

    fn finetune(&mut self, clean: &[LabeledItem]) -> Result<()> {
        if clean.is_empty() {
            log::warn!("fine-tune skipped: no clean data");
            return Ok(());
        }
        let (mut c, mut w) = (0usize, 0usize);
        for l in clean {
            if gold_of(&self.gold, &l.item, "oracle-slm")? == l.label {
                c += 1;
            } else {
                w += 1;
            }
        }
        let cfg = &self.config;
        let shift = cfg.gain * (c as f64 - cfg.penalty * w as f64) / self.n_ref as f64;
        self.accuracy = (cfg.accuracy + shift).clamp(cfg.min_accuracy, cfg.max_accuracy);
        self.version += 1;
        Ok(())
    }

    fn predict(&self, item: &NewsItem) -> Result<SlmPrediction> {
        let gold = gold_of(&self.gold, item, "oracle-slm")?;
        let v = self.version.to_string();
        let correct = seeds::unit(self.seed, &["oracle-slm", &item.id, &v]) < self.accuracy;
        let u = seeds::unit(self.seed, &["oracle-slm-confidence", &item.id, &v]);
        Ok(SlmPrediction {
            label: if correct { gold } else { gold.flipped() },
            confidence: self.config.confidence.draw(correct, u),
        })
    }

    fn version(&self) -> u32 {
        self.version
    }

    fn checkpoint(&self) -> Result<serde_json::Value> {
        Ok(serde_json::json!({
            "format": ORACLE_FORMAT,
            "version": self.version,
            "accuracy": self.accuracy,
            "n_ref": self.n_ref,
        }))
    }

    fn restore(&mut self, checkpoint: &serde_json::Value) -> Result<()> {
        if checkpoint["format"] != ORACLE_FORMAT {
            return Err(Error::Validation("not an oracle-slm checkpoint".into()));
        }
        let bad = || Error::Validation("malformed oracle-slm checkpoint".into());
        self.version = checkpoint["version"].as_u64().ok_or_else(bad)? as u32;
        self.accuracy = checkpoint["accuracy"].as_f64().ok_or_else(bad)?;
        self.n_ref = checkpoint["n_ref"].as_u64().ok_or_else(bad)? as usize;
        Ok(())
    }
}
