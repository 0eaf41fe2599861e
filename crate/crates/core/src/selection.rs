//! Clean/noisy partition of dual predictions and the per-round transfer of
//! newly clean items.
//!
//! An item is clean when the LLM answered, both models agree and the SLM
//! confidence reaches ω. `require_agreement = false` and `strict = true`
//! give the single-condition `p > ω` variant of the transfer rule.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::slm::SlmPrediction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    pub omega: f64,
    /// Use `p > ω` instead of `p >= ω`.
    pub strict: bool,
    pub require_agreement: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            omega: 0.8,
            strict: false,
            require_agreement: true,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega < 1.0) {
            return Err(Error::config("omega", format!("must be in (0, 1), got {}", self.omega)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPrediction {
    pub item_id: String,
    /// `None` when the LLM abstained.
    pub llm: Option<Label>,
    pub slm: SlmPrediction,
    pub round: u32,
}

impl DualPrediction {
    pub fn agrees(&self) -> bool {
        self.llm == Some(self.slm.label)
    }
}

pub fn is_clean(pred: &DualPrediction, cfg: &SelectionConfig) -> bool {
    if pred.llm.is_none() {
        return false;
    }
    if cfg.require_agreement && !pred.agrees() {
        return false;
    }
    let p = pred.slm.confidence;
    if cfg.strict {
        p > cfg.omega
    } else {
        p >= cfg.omega
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanAddition {
    pub item_id: String,
    /// The SLM label.
    pub label: Label,
    pub agreement: bool,
    pub confidence: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Partition {
    pub clean_additions: Vec<CleanAddition>,
    pub noisy: Vec<String>,
}

pub fn partition(preds: &[DualPrediction], cfg: &SelectionConfig) -> Result<Partition> {
    let mut seen = HashSet::with_capacity(preds.len());
    let mut out = Partition::default();
    for p in preds {
        if !seen.insert(p.item_id.as_str()) {
            return Err(Error::Validation(format!("duplicate prediction for `{}`", p.item_id)));
        }
        if is_clean(p, cfg) {
            out.clean_additions.push(CleanAddition {
                item_id: p.item_id.clone(),
                label: p.slm.label,
                agreement: p.agrees(),
                confidence: p.slm.confidence,
            });
        } else {
            out.noisy.push(p.item_id.clone());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanEntry {
    pub label: Label,
    pub round_admitted: u32,
    pub agreement: bool,
    pub confidence: f64,
}

/// Pool membership of every unlabeled item. Items start noisy, may move to
/// clean once, and leave noisy for `finalized` when the SLM labels them at
/// the end.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataPools {
    pub clean: BTreeMap<String, CleanEntry>,
    pub noisy: BTreeSet<String>,
    pub finalized: BTreeMap<String, Label>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Clean,
    Noisy,
    Finalized,
}

/// One line of a serialized pool file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolRecord {
    pub item_id: String,
    pub pool: PoolKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round_admitted: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreement: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl DataPools {
    pub fn new<I: IntoIterator<Item = String>>(ids: I) -> Self {
        DataPools {
            noisy: ids.into_iter().collect(),
            ..DataPools::default()
        }
    }

    pub fn total(&self) -> usize {
        self.clean.len() + self.noisy.len() + self.finalized.len()
    }

    /// Move `additions` from noisy to clean, admitted in `round`.
    pub fn apply_transfer(&mut self, additions: &[CleanAddition], round: u32) -> Result<()> {
        for a in additions {
            if !self.noisy.contains(&a.item_id) {
                return Err(Error::Invariant(format!(
                    "transfer of `{}` which is not in the noisy pool",
                    a.item_id
                )));
            }
        }
        for a in additions {
            self.noisy.remove(&a.item_id);
            self.clean.insert(
                a.item_id.clone(),
                CleanEntry {
                    label: a.label,
                    round_admitted: round,
                    agreement: a.agreement,
                    confidence: a.confidence,
                },
            );
        }
        Ok(())
    }

    /// Record the final SLM label of a noisy item.
    pub fn finalize(&mut self, item_id: &str, label: Label) -> Result<()> {
        if !self.noisy.remove(item_id) {
            return Err(Error::Invariant(format!("finalizing `{item_id}` which is not noisy")));
        }
        self.finalized.insert(item_id.to_string(), label);
        Ok(())
    }

    /// Final label of every item once the noisy pool is empty.
    pub fn final_labels(&self) -> Result<BTreeMap<String, Label>> {
        if !self.noisy.is_empty() {
            return Err(Error::Invariant(format!("{} items still noisy", self.noisy.len())));
        }
        let mut out: BTreeMap<String, Label> = self.finalized.clone();
        for (id, e) in &self.clean {
            if out.insert(id.clone(), e.label).is_some() {
                return Err(Error::Invariant(format!("`{id}` is both clean and finalized")));
            }
        }
        Ok(out)
    }

    pub fn check_disjoint(&self) -> Result<()> {
        for id in &self.noisy {
            if self.clean.contains_key(id) || self.finalized.contains_key(id) {
                return Err(Error::Invariant(format!("`{id}` is in two pools")));
            }
        }
        for id in self.clean.keys() {
            if self.finalized.contains_key(id) {
                return Err(Error::Invariant(format!("`{id}` is in two pools")));
            }
        }
        Ok(())
    }

    /// Records in item id order.
    pub fn records(&self) -> Vec<PoolRecord> {
        let mut out: Vec<PoolRecord> = Vec::with_capacity(self.total());
        out.extend(self.clean.iter().map(|(id, e)| PoolRecord {
            item_id: id.clone(),
            pool: PoolKind::Clean,
            label: Some(e.label),
            round_admitted: Some(e.round_admitted),
            agreement: Some(e.agreement),
            confidence: Some(e.confidence),
        }));
        out.extend(self.noisy.iter().map(|id| PoolRecord {
            item_id: id.clone(),
            pool: PoolKind::Noisy,
            label: None,
            round_admitted: None,
            agreement: None,
            confidence: None,
        }));
        out.extend(self.finalized.iter().map(|(id, l)| PoolRecord {
            item_id: id.clone(),
            pool: PoolKind::Finalized,
            label: Some(*l),
            round_admitted: None,
            agreement: None,
            confidence: None,
        }));
        out.sort_by(|a, b| a.item_id.cmp(&b.item_id));
        out
    }

    pub fn from_records(records: Vec<PoolRecord>) -> Result<Self> {
        let mut pools = DataPools::default();
        for r in records {
            let missing = |f: &str| Error::Validation(format!("pool record `{}` lacks `{f}`", r.item_id));
            match r.pool {
                PoolKind::Noisy => {
                    pools.noisy.insert(r.item_id.clone());
                }
                PoolKind::Clean => {
                    let entry = CleanEntry {
                        label: r.label.ok_or_else(|| missing("label"))?,
                        round_admitted: r.round_admitted.ok_or_else(|| missing("round_admitted"))?,
                        agreement: r.agreement.ok_or_else(|| missing("agreement"))?,
                        confidence: r.confidence.ok_or_else(|| missing("confidence"))?,
                    };
                    pools.clean.insert(r.item_id.clone(), entry);
                }
                PoolKind::Finalized => {
                    let label = r.label.ok_or_else(|| missing("label"))?;
                    pools.finalized.insert(r.item_id.clone(), label);
                }
            }
        }
        pools.check_disjoint()?;
        Ok(pools)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dual(id: &str, llm: Option<Label>, slm: Label, p: f64) -> DualPrediction {
        DualPrediction {
            item_id: id.into(),
            llm,
            slm: SlmPrediction {
                label: slm,
                confidence: p,
            },
            round: 1,
        }
    }

    #[test]
    fn clean_decision_grid() {
        let cfg = SelectionConfig::default();
        assert!(is_clean(&dual("a", Some(Label::Fake), Label::Fake, 0.85), &cfg));
        assert!(!is_clean(&dual("a", Some(Label::Real), Label::Fake, 0.99), &cfg));
        assert!(is_clean(&dual("a", Some(Label::Fake), Label::Fake, 0.80), &cfg));
        assert!(!is_clean(&dual("a", None, Label::Fake, 0.99), &cfg));
    }

    #[test]
    fn literal_variant_ignores_agreement_and_is_strict() {
        let cfg = SelectionConfig {
            strict: true,
            require_agreement: false,
            ..SelectionConfig::default()
        };
        assert!(is_clean(&dual("a", Some(Label::Real), Label::Fake, 0.81), &cfg));
        assert!(!is_clean(&dual("a", Some(Label::Fake), Label::Fake, 0.80), &cfg));
    }

    #[test]
    fn omega_bounds() {
        for bad in [0.0, 1.0, 1.5, -0.1, f64::NAN] {
            let err = SelectionConfig {
                omega: bad,
                ..SelectionConfig::default()
            }
            .validate()
            .unwrap_err();
            assert!(err.to_string().contains("omega"));
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let preds = [
            dual("a", Some(Label::Real), Label::Real, 0.9),
            dual("a", Some(Label::Real), Label::Real, 0.9),
        ];
        assert!(partition(&preds, &SelectionConfig::default()).is_err());
    }

    #[test]
    fn transfer_moves_and_rejects_unknown() {
        let mut pools = DataPools::new(["a".to_string(), "b".to_string()]);
        let add = CleanAddition {
            item_id: "a".into(),
            label: Label::Fake,
            agreement: true,
            confidence: 0.9,
        };
        pools.apply_transfer(&[], 1).unwrap();
        assert_eq!(pools.noisy.len(), 2);
        pools.apply_transfer(std::slice::from_ref(&add), 1).unwrap();
        assert_eq!(pools.clean["a"].round_admitted, 1);
        assert!(matches!(pools.apply_transfer(&[add], 2), Err(Error::Invariant(_))));
    }

    #[test]
    fn records_round_trip() {
        let mut pools = DataPools::new(["a", "b", "c"].map(String::from));
        pools
            .apply_transfer(
                &[CleanAddition {
                    item_id: "b".into(),
                    label: Label::Real,
                    agreement: true,
                    confidence: 0.875,
                }],
                1,
            )
            .unwrap();
        pools.finalize("c", Label::Fake).unwrap();
        let back = DataPools::from_records(pools.records()).unwrap();
        assert_eq!(back, pools);
        assert!(pools.final_labels().is_err());
        pools.finalize("a", Label::Real).unwrap();
        assert_eq!(pools.final_labels().unwrap().len(), 3);
    }
}
