//! The small model: a trainable binary classifier with a
//! pretrain-then-finetune lifecycle.

mod linear;
mod remote;

use serde::{Deserialize, Serialize};

use crate::corpus::{Label, LabeledItem, NewsItem};
use crate::error::Result;

pub use linear::{featurize, gradient, loss, Example, LinearSlm, CHECKPOINT_FORMAT};
pub use remote::{RemoteSlm, RemoteSlmConfig};

/// Label and confidence of the predicted class. The two class
/// probabilities are `confidence` and `1 - confidence`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlmPrediction {
    pub label: Label,
    pub confidence: f64,
}

impl SlmPrediction {
    /// From `P(fake)`; an exact 0.5 is labeled real.
    pub fn from_p_fake(p_fake: f64) -> Self {
        if p_fake > 0.5 {
            SlmPrediction {
                label: Label::Fake,
                confidence: p_fake,
            }
        } else {
            SlmPrediction {
                label: Label::Real,
                confidence: 1.0 - p_fake,
            }
        }
    }

    pub fn probability(&self, label: Label) -> f64 {
        if label == self.label {
            self.confidence
        } else {
            1.0 - self.confidence
        }
    }
}

/// Whether each fine-tune continues from the current weights or restarts
/// from the pretrained ones.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneBase {
    #[default]
    Cumulative,
    Pretrain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlmHyper {
    /// Feature space has `2^dim_bits` hashed buckets.
    pub dim_bits: u32,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub finetune_base: FinetuneBase,
}

impl Default for SlmHyper {
    fn default() -> Self {
        SlmHyper {
            dim_bits: 18,
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            batch_size: 32,
            pretrain_epochs: 20,
            finetune_epochs: 5,
            finetune_base: FinetuneBase::Cumulative,
        }
    }
}

impl SlmHyper {
    pub fn validate(&self) -> Result<()> {
        use crate::error::Error;
        if !(1..=24).contains(&self.dim_bits) {
            return Err(Error::config("slm.dim_bits", "must be in 1..=24"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("slm.learning_rate", "must be a positive number"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::config("slm.weight_decay", "must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("slm.batch_size", "must be positive"));
        }
        Ok(())
    }
}

/// A small classifier. Training takes `&mut self`; prediction is shared.
pub trait SmallModel: Send + Sync {
    fn name(&self) -> &str;

    /// Train from scratch on past labeled data. Sets the version to 1.
    fn pretrain(&mut self, labeled: &[LabeledItem]) -> Result<()>;

    /// Continue training on pseudo-labeled data and bump the version. An
    /// empty set is a logged no-op.
    fn finetune(&mut self, clean: &[LabeledItem]) -> Result<()>;

    fn predict(&self, item: &NewsItem) -> Result<SlmPrediction>;

    /// 0 before pretraining.
    fn version(&self) -> u32;

    fn checkpoint(&self) -> Result<serde_json::Value>;

    fn restore(&mut self, checkpoint: &serde_json::Value) -> Result<()>;
}
