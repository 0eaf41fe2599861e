//! The multi-round collaboration loop.
//!
//! Round 1 pretrains the SLM, runs two-stage retrieval and both models on
//! every unlabeled item and moves confident agreements to the clean pool.
//! Rounds 2..N-1 fine-tune the SLM on the clean pool and re-evaluate the
//! noisy items with clean-pool demonstrations. Round N fine-tunes once more
//! and lets the SLM label whatever is still noisy.

mod rundir;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{temporal_split, Dataset, Label, LabeledItem, NewsItem, Split};
use crate::error::{Error, Result};
use crate::evaluation::{self, fmt_opt, Metrics, PoolReport, Table};
use crate::llm::LanguageModel;
use crate::retrieval::{
    CleanPoolIndex, Demonstration, KnowledgePack, PseudoLabelVocab, RetrievalConfig, Retriever, SourceSwitches,
};
use crate::selection::{partition, DataPools, DualPrediction, PoolRecord, SelectionConfig};
use crate::slm::{SlmPrediction, SmallModel};
use crate::sources::{sha256_hex, KnowledgeSource, NewsCorpus, NewsSearch};

pub use rundir::{Checkpoint, CHECKPOINT_FILE, CONFIG_FILE, FINAL_LABELS_FILE, REPORTS_FILE, REPORT_TEXT_FILE};
use rundir::{read_jsonl, round_file, to_jsonl, RunDir};

/// Pipeline parts that can be switched off for ablations. All on by
/// default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Features {
    pub demonstrations: bool,
    pub search_engine: bool,
    pub news_corpus: bool,
    pub knowledge: bool,
    pub multi_round: bool,
}

impl Default for Features {
    fn default() -> Self {
        Features {
            demonstrations: true,
            search_engine: true,
            news_corpus: true,
            knowledge: true,
            multi_round: true,
        }
    }
}

impl Features {
    pub const NAMES: [&'static str; 5] = ["demonstrations", "search_engine", "news_corpus", "knowledge", "multi_round"];

    /// Turn off the named feature.
    pub fn disable(&mut self, name: &str) -> Result<()> {
        let slot = match name {
            "demonstrations" => &mut self.demonstrations,
            "search_engine" => &mut self.search_engine,
            "news_corpus" => &mut self.news_corpus,
            "knowledge" => &mut self.knowledge,
            "multi_round" => &mut self.multi_round,
            other => {
                return Err(Error::config(
                    "ablate",
                    format!("unknown feature `{other}`; expected one of {}", Self::NAMES.join(", ")),
                ))
            }
        };
        *slot = false;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub selection: SelectionConfig,
    /// Round threshold N.
    pub rounds: u32,
    pub retrieval: RetrievalConfig,
    pub vocab: PseudoLabelVocab,
    pub avoid_copy_effect: bool,
    pub features: Features,
    pub seed: u64,
    /// Fine-tune at the start of the last round before the SLM labels the
    /// remaining noisy items.
    pub final_finetune: bool,
    /// Also score the current SLM on every unlabeled item each round.
    pub evaluate_slm_on_all: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            selection: SelectionConfig::default(),
            rounds: 3,
            retrieval: RetrievalConfig::default(),
            vocab: PseudoLabelVocab::default(),
            avoid_copy_effect: true,
            features: Features::default(),
            seed: 42,
            final_finetune: true,
            evaluate_slm_on_all: true,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.selection.validate()?;
        self.vocab.validate(self.avoid_copy_effect)?;
        if self.rounds == 0 {
            return Err(Error::config("rounds", "must be at least 1"));
        }
        if !self.features.multi_round && self.rounds > 1 {
            return Err(Error::config(
                "rounds",
                format!("multi_round is disabled, which requires rounds = 1 (got {})", self.rounds),
            ));
        }
        Ok(())
    }
}

/// The models and providers a run talks to.
pub struct Components {
    pub llm: Arc<dyn LanguageModel>,
    pub slm: Box<dyn SmallModel>,
    pub search: Option<Arc<dyn NewsSearch>>,
    pub corpus: Option<Arc<NewsCorpus>>,
    pub knowledge: Option<Arc<dyn KnowledgeSource>>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub run_dir: Option<PathBuf>,
    /// Stop after checkpointing this round, leaving the run resumable.
    pub stop_after_round: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Clean,
    Noisy,
    /// Round-1 retrieval failed; the item waits for the next round.
    Deferred,
    /// Labeled by the SLM at the end of the run.
    Finalized,
}

/// What happened to one item in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemTrace {
    pub item_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_raw: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slm: Option<SlmPrediction>,
    pub demonstrations_used: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub demonstration_ids: Vec<String>,
    pub knowledge_used: usize,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u32,
    pub slm_version: u32,
    /// Size of the clean pool the SLM was fine-tuned on at the start of the
    /// round; 0 when it was not fine-tuned.
    pub finetuned_on: usize,
    /// Items run through both models this round.
    pub evaluated: usize,
    pub abstentions: usize,
    pub deferred: usize,
    pub transfers_in: usize,
    pub finalized_this_round: usize,
    pub clean_size: usize,
    pub noisy_size: usize,
    pub finalized: usize,
    pub total: usize,
    /// LLM answers on evaluated items, abstentions excluded.
    pub llm_metrics: Option<Metrics>,
    /// SLM labels on evaluated (or, in the last round, finalized) items.
    pub slm_metrics: Option<Metrics>,
    /// The current SLM on every unlabeled item.
    pub slm_model_metrics: Option<Metrics>,
    pub pool: PoolReport,
    pub items: Vec<ItemTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub final_labels: BTreeMap<String, Label>,
    pub reports: Vec<RoundReport>,
    /// False when the run stopped early on request.
    pub complete: bool,
    /// Final labels against the hidden gold labels, when present.
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FinalLabel {
    id: String,
    label: Label,
}

pub fn dataset_sha256(dataset: &Dataset) -> String {
    let bytes = serde_json::to_vec(&(&dataset.items, dataset.split_cutoff)).expect("dataset serializes");
    sha256_hex(&bytes)
}

pub fn run(dataset: &Dataset, config: &RunConfig, components: Components, options: &RunOptions) -> Result<RunResult> {
    config.validate()?;
    let mut lp = Loop::new(dataset, config.clone(), components)?;
    if let Some(dir) = &options.run_dir {
        let mut rd = RunDir::create(dir, dataset_sha256(dataset))?;
        rd.put_json(CONFIG_FILE, config)?;
        rd.commit(0, false)?;
        lp.run_dir = Some(rd);
    }
    lp.drive(1, options.stop_after_round)
}

/// Continue a run from its last checkpoint. A completed run is returned as
/// stored.
pub fn resume(run_dir: &Path, dataset: &Dataset, components: Components, stop_after_round: Option<u32>) -> Result<RunResult> {
    let rd = RunDir::open_verified(run_dir)?;
    let sha = dataset_sha256(dataset);
    if rd.checkpoint.dataset_sha256 != sha {
        return Err(Error::Integrity {
            path: run_dir.join(CHECKPOINT_FILE),
            message: format!("dataset sha256 {sha} differs from the one the run started with"),
        });
    }
    let config: RunConfig = rd.read_json(CONFIG_FILE)?;
    config.validate()?;
    let split = temporal_split(dataset)?;
    let gold = split.hidden_gold.clone();
    let last = rd.checkpoint.last_completed_round;
    let reports: Vec<RoundReport> = (1..=last)
        .map(|r| rd.read_json(&round_file(r, "report.json")))
        .collect::<Result<_>>()?;

    if rd.checkpoint.complete {
        let labels: Vec<FinalLabel> = read_jsonl(&rd.path(FINAL_LABELS_FILE))?;
        let final_labels: BTreeMap<String, Label> = labels.into_iter().map(|l| (l.id, l.label)).collect();
        let metrics = evaluation::evaluate_opt(&final_labels, &gold);
        return Ok(RunResult {
            final_labels,
            reports,
            complete: true,
            metrics,
        });
    }

    let mut lp = Loop::new(dataset, config, components)?;
    if last > 0 {
        let records: Vec<PoolRecord> = read_jsonl(&rd.path(&round_file(last, "pools.jsonl")))?;
        lp.pools = DataPools::from_records(records)?;
        if lp.pools.total() != lp.split.unlabeled.len() {
            return Err(Error::Integrity {
                path: rd.path(&round_file(last, "pools.jsonl")),
                message: "pool file does not cover the unlabeled items".into(),
            });
        }
        let ckpt: serde_json::Value = rd.read_json(&round_file(last, "slm.json"))?;
        lp.components.slm.restore(&ckpt)?;
        lp.reports = reports;
    }
    lp.run_dir = Some(rd);
    lp.drive(last + 1, stop_after_round)
}

struct Loop {
    config: RunConfig,
    split: Split,
    items: HashMap<String, NewsItem>,
    components: Components,
    retriever: Retriever,
    pools: DataPools,
    reports: Vec<RoundReport>,
    run_dir: Option<RunDir>,
}

enum Outcome {
    Deferred(Vec<String>),
    Predicted {
        llm_label: Option<Label>,
        llm_raw: String,
        slm: SlmPrediction,
        demos: Vec<Demonstration>,
        knowledge_used: usize,
        warnings: Vec<String>,
    },
}

impl Loop {
    fn new(dataset: &Dataset, config: RunConfig, components: Components) -> Result<Self> {
        let split = temporal_split(dataset)?;
        if split.unlabeled.is_empty() {
            return Err(Error::Validation("dataset has no items after the split cutoff".into()));
        }
        if split.labeled.is_empty() {
            return Err(Error::Validation("dataset has no labeled items before the split cutoff".into()));
        }
        let items = split.unlabeled.iter().map(|i| (i.id.clone(), i.clone())).collect();
        let f = config.features;
        let retriever = Retriever {
            search: components.search.clone(),
            corpus: components.corpus.clone(),
            knowledge: if f.knowledge { components.knowledge.clone() } else { None },
            config: config.retrieval.clone(),
            vocab: config.vocab.clone(),
            switches: SourceSwitches {
                search_engine: f.search_engine,
                news_corpus: f.news_corpus,
            },
            seed: config.seed,
        };
        let pools = DataPools::new(split.unlabeled.iter().map(|i| i.id.clone()));
        Ok(Loop {
            config,
            split,
            items,
            components,
            retriever,
            pools,
            reports: Vec::new(),
            run_dir: None,
        })
    }

    fn drive(mut self, first: u32, stop_after: Option<u32>) -> Result<RunResult> {
        let n = self.config.rounds;
        for r in first..=n {
            let report = self.round(r)?;
            log::info!(
                "round {r}: {} evaluated, {} to clean, clean {} / noisy {} / finalized {}",
                report.evaluated,
                report.transfers_in,
                report.clean_size,
                report.noisy_size,
                report.finalized
            );
            self.reports.push(report);
            self.checkpoint_round(r)?;
            if r < n && stop_after == Some(r) {
                return Ok(RunResult {
                    final_labels: BTreeMap::new(),
                    reports: self.reports,
                    complete: false,
                    metrics: None,
                });
            }
        }
        let final_labels = self.pools.final_labels()?;
        let metrics = evaluation::evaluate_opt(&final_labels, &self.split.hidden_gold);
        if let Some(rd) = &mut self.run_dir {
            rd.put(
                FINAL_LABELS_FILE,
                &to_jsonl(final_labels.iter().map(|(id, l)| FinalLabel {
                    id: id.clone(),
                    label: *l,
                }))?,
            )?;
            rd.put(REPORTS_FILE, &to_jsonl(&self.reports)?)?;
            rd.put(REPORT_TEXT_FILE, render_report(&self.reports, metrics.as_ref()).as_bytes())?;
            rd.commit(n, true)?;
        }
        Ok(RunResult {
            final_labels,
            reports: self.reports,
            complete: true,
            metrics,
        })
    }

    fn checkpoint_round(&mut self, r: u32) -> Result<()> {
        let Some(rd) = &mut self.run_dir else {
            return Ok(());
        };
        rd.put(&round_file(r, "pools.jsonl"), &to_jsonl(self.pools.records())?)?;
        rd.put_json(&round_file(r, "slm.json"), &self.components.slm.checkpoint()?)?;
        rd.put_json(&round_file(r, "report.json"), self.reports.last().expect("report pushed"))?;
        rd.commit(r, false)
    }

    fn clean_training_set(&self) -> Vec<LabeledItem> {
        self.pools
            .clean
            .iter()
            .map(|(id, e)| LabeledItem {
                item: self.items[id].clone(),
                label: e.label,
            })
            .collect()
    }

    fn finetune(&mut self) -> Result<usize> {
        let data = self.clean_training_set();
        self.components.slm.finetune(&data)?;
        Ok(data.len())
    }

    fn round(&mut self, r: u32) -> Result<RoundReport> {
        let n = self.config.rounds;
        let mut finetuned_on = 0;
        if r == 1 {
            self.components.slm.pretrain(&self.split.labeled)?;
        } else if r < n || self.config.final_finetune {
            finetuned_on = self.finetune()?;
        }

        let mut traces: BTreeMap<String, ItemTrace> = BTreeMap::new();
        let mut slm_labels: BTreeMap<String, Label> = BTreeMap::new();
        let mut llm_labels: BTreeMap<String, Label> = BTreeMap::new();
        let (mut evaluated, mut abstentions, mut deferred, mut transfers_in) = (0, 0, 0, 0);

        if r == 1 || r < n {
            let targets: Vec<&NewsItem> = self.pools.noisy.iter().map(|id| &self.items[id]).collect();
            let pool_index = if r >= 2 && self.config.features.demonstrations {
                let mut entries: Vec<(NewsItem, Label)> = Vec::with_capacity(self.pools.clean.len());
                for (id, e) in &self.pools.clean {
                    entries.push((self.items[id].clone(), e.label));
                }
                CleanPoolIndex::build(entries)?
            } else {
                CleanPoolIndex::empty()
            };
            let outcomes: Vec<Result<Outcome>> = targets.par_iter().map(|it| self.infer(it, r, &pool_index)).collect();

            let mut preds = Vec::new();
            for (item, outcome) in targets.iter().zip(outcomes) {
                match outcome? {
                    Outcome::Deferred(warnings) => {
                        deferred += 1;
                        traces.insert(
                            item.id.clone(),
                            ItemTrace {
                                item_id: item.id.clone(),
                                llm_label: None,
                                llm_raw: None,
                                slm: None,
                                demonstrations_used: 0,
                                demonstration_ids: Vec::new(),
                                knowledge_used: 0,
                                decision: Decision::Deferred,
                                warnings,
                            },
                        );
                    }
                    Outcome::Predicted {
                        llm_label,
                        llm_raw,
                        slm,
                        demos,
                        knowledge_used,
                        warnings,
                    } => {
                        evaluated += 1;
                        match llm_label {
                            Some(l) => {
                                llm_labels.insert(item.id.clone(), l);
                            }
                            None => abstentions += 1,
                        }
                        slm_labels.insert(item.id.clone(), slm.label);
                        preds.push(DualPrediction {
                            item_id: item.id.clone(),
                            llm: llm_label,
                            slm,
                            round: r,
                        });
                        traces.insert(
                            item.id.clone(),
                            ItemTrace {
                                item_id: item.id.clone(),
                                llm_label,
                                llm_raw: Some(llm_raw),
                                slm: Some(slm),
                                demonstrations_used: demos.len(),
                                demonstration_ids: demos.into_iter().map(|d| d.doc_id).collect(),
                                knowledge_used,
                                decision: Decision::Noisy,
                                warnings,
                            },
                        );
                    }
                }
            }
            let part = partition(&preds, &self.config.selection)?;
            for a in &part.clean_additions {
                traces.get_mut(&a.item_id).expect("traced").decision = Decision::Clean;
            }
            transfers_in = part.clean_additions.len();
            self.pools.apply_transfer(&part.clean_additions, r)?;
        }

        let mut finalized_now: BTreeMap<String, Label> = BTreeMap::new();
        if r == n {
            if !self.config.features.multi_round {
                finetuned_on = self.finetune()?;
            }
            let remaining: Vec<String> = self.pools.noisy.iter().cloned().collect();
            let preds: Vec<Result<SlmPrediction>> = remaining
                .par_iter()
                .map(|id| self.components.slm.predict(&self.items[id]))
                .collect();
            for (id, p) in remaining.iter().zip(preds) {
                let p = p?;
                self.pools.finalize(id, p.label)?;
                finalized_now.insert(id.clone(), p.label);
                let trace = traces.entry(id.clone()).or_insert_with(|| ItemTrace {
                    item_id: id.clone(),
                    llm_label: None,
                    llm_raw: None,
                    slm: None,
                    demonstrations_used: 0,
                    demonstration_ids: Vec::new(),
                    knowledge_used: 0,
                    decision: Decision::Finalized,
                    warnings: Vec::new(),
                });
                trace.slm = Some(p);
                trace.decision = Decision::Finalized;
            }
        }

        let total = self.split.unlabeled.len();
        if self.pools.total() != total {
            return Err(Error::Invariant(format!(
                "round {r}: pools hold {} items, expected {total}",
                self.pools.total()
            )));
        }
        self.pools.check_disjoint()?;

        let gold = &self.split.hidden_gold;
        let slm_scored = if evaluated > 0 { &slm_labels } else { &finalized_now };
        let slm_model_metrics = if self.config.evaluate_slm_on_all && !gold.is_empty() {
            let all: Vec<Result<(String, Label)>> = self
                .split
                .unlabeled
                .par_iter()
                .map(|it| self.components.slm.predict(it).map(|p| (it.id.clone(), p.label)))
                .collect();
            let all: BTreeMap<String, Label> = all.into_iter().collect::<Result<_>>()?;
            evaluation::evaluate_opt(&all, gold)
        } else {
            None
        };

        Ok(RoundReport {
            round: r,
            slm_version: self.components.slm.version(),
            finetuned_on,
            evaluated,
            abstentions,
            deferred,
            transfers_in,
            finalized_this_round: finalized_now.len(),
            clean_size: self.pools.clean.len(),
            noisy_size: self.pools.noisy.len(),
            finalized: self.pools.finalized.len(),
            total,
            llm_metrics: evaluation::evaluate_opt(&llm_labels, gold),
            slm_metrics: evaluation::evaluate_opt(slm_scored, gold),
            slm_model_metrics,
            pool: evaluation::pool_report(&self.pools, &slm_labels, gold),
            items: traces.into_values().collect(),
        })
    }

    fn infer(&self, item: &NewsItem, r: u32, pool: &CleanPoolIndex) -> Result<Outcome> {
        let mut warnings = Vec::new();
        let demos = if self.config.features.demonstrations {
            match self.retriever.retrieve_demonstrations(item, r, pool) {
                Ok(got) => {
                    warnings.extend(got.warnings);
                    got.demonstrations
                }
                Err(Error::Retrieval { reason, .. }) => {
                    log::warn!("item {}: retrieval failed, deferring: {reason}", item.id);
                    warnings.push(reason);
                    return Ok(Outcome::Deferred(warnings));
                }
                Err(e) => return Err(e),
            }
        } else {
            Vec::new()
        };
        let pack = if self.config.features.knowledge {
            let (pack, w) = self.retriever.knowledge_pack(item, self.components.llm.as_ref());
            warnings.extend(w);
            pack
        } else {
            KnowledgePack::default()
        };
        let llm = self.components.llm.predict(item, &demos, &pack, r)?;
        let slm = self.components.slm.predict(item)?;
        Ok(Outcome::Predicted {
            llm_label: llm.label,
            llm_raw: llm.raw_response,
            slm,
            demos,
            knowledge_used: pack.len(),
            warnings,
        })
    }
}

/// Per-round table plus final metrics.
pub fn render_report(reports: &[RoundReport], final_metrics: Option<&Metrics>) -> String {
    let mut t = Table::new([
        "round", "evaluated", "to_clean", "clean", "noisy", "final", "llm_acc", "slm_acc", "slm_all_acc", "clean_acc",
        "slm_v",
    ]);
    for r in reports {
        let acc = |m: &Metrics| m.accuracy;
        t.row([
            r.round.to_string(),
            r.evaluated.to_string(),
            r.transfers_in.to_string(),
            r.clean_size.to_string(),
            r.noisy_size.to_string(),
            r.finalized.to_string(),
            fmt_opt(r.llm_metrics.as_ref(), acc),
            fmt_opt(r.slm_metrics.as_ref(), acc),
            fmt_opt(r.slm_model_metrics.as_ref(), acc),
            fmt_opt(r.pool.clean.as_ref(), acc),
            r.slm_version.to_string(),
        ]);
    }
    let mut out = t.render();
    if let Some(m) = final_metrics {
        out.push('\n');
        out.push_str(&evaluation::metrics_table(&[("final".to_string(), m.clone())]));
    }
    out
}

/// Item ids whose pool membership changed between two consecutive pool
/// snapshots in a way the loop never allows (clean back to noisy).
pub fn monotonicity_violations(before: &DataPools, after: &DataPools) -> BTreeSet<String> {
    before
        .clean
        .keys()
        .filter(|id| !after.clean.contains_key(*id))
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate, OracleLlm, OracleLlmConfig, OracleSlm, OracleSlmConfig, SyntheticSpec};

    fn setup(rounds: u32) -> (Dataset, RunConfig) {
        let bundle = generate(&SyntheticSpec::default()).unwrap();
        let config = RunConfig {
            rounds,
            ..RunConfig::default()
        };
        (bundle.dataset, config)
    }

    fn oracles(dataset: &Dataset, seed: u64) -> Components {
        let gold: Arc<HashMap<String, Label>> = Arc::new(dataset.gold().into_iter().collect());
        Components {
            llm: Arc::new(OracleLlm::new(OracleLlmConfig::default(), gold.clone(), seed).unwrap()),
            slm: Box::new(OracleSlm::new(OracleSlmConfig::default(), gold, seed + 1).unwrap()),
            search: None,
            corpus: None,
            knowledge: None,
        }
    }

    #[test]
    fn every_item_gets_one_label() {
        for rounds in 1..=4 {
            let (ds, cfg) = setup(rounds);
            let res = run(&ds, &cfg, oracles(&ds, 3), &RunOptions::default()).unwrap();
            assert_eq!(res.final_labels.len(), 60);
            assert_eq!(res.reports.len(), rounds as usize);
            for w in res.reports.windows(2) {
                assert!(w[1].noisy_size <= w[0].noisy_size);
            }
            let last = res.reports.last().unwrap();
            assert_eq!((last.noisy_size, last.clean_size + last.finalized), (0, 60));
        }
    }

    #[test]
    fn multi_round_off_needs_one_round() {
        let (ds, mut cfg) = setup(3);
        cfg.features.multi_round = false;
        let err = run(&ds, &cfg, oracles(&ds, 1), &RunOptions::default()).unwrap_err();
        assert!(err.to_string().contains("rounds"));
        cfg.rounds = 1;
        let res = run(&ds, &cfg, oracles(&ds, 1), &RunOptions::default()).unwrap();
        assert!(res.reports[0].finetuned_on > 0);
        assert_eq!(res.reports[0].slm_version, 2);
    }

    #[test]
    fn stop_and_resume_matches_uninterrupted() {
        let (ds, cfg) = setup(3);
        let full = run(&ds, &cfg, oracles(&ds, 5), &RunOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions {
            run_dir: Some(dir.path().to_path_buf()),
            stop_after_round: Some(1),
        };
        let partial = run(&ds, &cfg, oracles(&ds, 5), &opts).unwrap();
        assert!(!partial.complete);
        let resumed = resume(dir.path(), &ds, oracles(&ds, 5), None).unwrap();
        assert_eq!(resumed, full);
        let again = resume(dir.path(), &ds, oracles(&ds, 5), None).unwrap();
        assert_eq!(again, full);
    }
}
