//! Classification metrics, pool quality reports and plain-text tables.
//!
//! Fake is the positive class for the headline precision and recall; the
//! per-class values for both labels are always reported.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::selection::DataPools;

/// Counts with Fake as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn add(&mut self, pred: Label, gold: Label) {
        match (pred, gold) {
            (Label::Fake, Label::Fake) => self.tp += 1,
            (Label::Fake, Label::Real) => self.fp += 1,
            (Label::Real, Label::Fake) => self.fn_ += 1,
            (Label::Real, Label::Real) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision_fake: f64,
    pub recall_fake: f64,
    pub f1_fake: f64,
    pub precision_real: f64,
    pub recall_real: f64,
    pub f1_real: f64,
    pub macro_f1: f64,
    pub support_fake: usize,
    pub support_real: usize,
    pub confusion: Confusion,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl Metrics {
    pub fn from_confusion(c: Confusion) -> Result<Self> {
        if c.total() == 0 {
            return Err(Error::Validation("no items to evaluate".into()));
        }
        let precision_fake = ratio(c.tp, c.tp + c.fp);
        let recall_fake = ratio(c.tp, c.tp + c.fn_);
        let precision_real = ratio(c.tn, c.tn + c.fn_);
        let recall_real = ratio(c.tn, c.tn + c.fp);
        let f1_fake = f1(precision_fake, recall_fake);
        let f1_real = f1(precision_real, recall_real);
        Ok(Metrics {
            accuracy: ratio(c.tp + c.tn, c.total()),
            precision_fake,
            recall_fake,
            f1_fake,
            precision_real,
            recall_real,
            f1_real,
            macro_f1: (f1_fake + f1_real) / 2.0,
            support_fake: c.tp + c.fn_,
            support_real: c.tn + c.fp,
            confusion: c,
        })
    }

    pub fn n(&self) -> usize {
        self.confusion.total()
    }
}

/// Metrics over `(predicted, gold)` pairs.
pub fn evaluate_pairs<I: IntoIterator<Item = (Label, Label)>>(pairs: I) -> Result<Metrics> {
    let mut c = Confusion::default();
    for (p, g) in pairs {
        c.add(p, g);
    }
    Metrics::from_confusion(c)
}

/// Metrics over the items present in both maps. Predictions without a gold
/// label are ignored.
pub fn evaluate(pred: &BTreeMap<String, Label>, gold: &BTreeMap<String, Label>) -> Result<Metrics> {
    let pairs: Vec<(Label, Label)> = pred
        .iter()
        .filter_map(|(id, p)| gold.get(id).map(|g| (*p, *g)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Validation("predictions and gold labels share no items".into()));
    }
    evaluate_pairs(pairs)
}

/// Like [`evaluate`] but `None` instead of an error when nothing overlaps.
pub fn evaluate_opt(pred: &BTreeMap<String, Label>, gold: &BTreeMap<String, Label>) -> Option<Metrics> {
    evaluate(pred, gold).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolReport {
    pub clean_size: usize,
    pub noisy_size: usize,
    pub finalized_size: usize,
    /// Clean-pool labels against gold.
    pub clean: Option<Metrics>,
    /// SLM labels of the noisy items against gold.
    pub noisy: Option<Metrics>,
}

/// Quality of the clean pool and of the SLM's current labels for the noisy
/// items. `noisy_labels` may contain other items; only noisy ones count.
pub fn pool_report(
    pools: &DataPools,
    noisy_labels: &BTreeMap<String, Label>,
    gold: &BTreeMap<String, Label>,
) -> PoolReport {
    let clean: BTreeMap<String, Label> = pools.clean.iter().map(|(k, e)| (k.clone(), e.label)).collect();
    let noisy: BTreeMap<String, Label> = noisy_labels
        .iter()
        .filter(|(k, _)| pools.noisy.contains(*k))
        .map(|(k, l)| (k.clone(), *l))
        .collect();
    PoolReport {
        clean_size: pools.clean.len(),
        noisy_size: pools.noisy.len(),
        finalized_size: pools.finalized.len(),
        clean: evaluate_opt(&clean, gold),
        noisy: evaluate_opt(&noisy, gold),
    }
}

/// Left-aligned first column, right-aligned others.
#[derive(Debug, Clone, Default)]
pub struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>, I: IntoIterator<Item = S>>(headers: I) -> Self {
        Table {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row<S: Into<String>, I: IntoIterator<Item = S>>(&mut self, cells: I) -> &mut Self {
        self.rows.push(cells.into_iter().map(Into::into).collect());
        self
    }

    pub fn render(&self) -> String {
        let cols = self
            .rows
            .iter()
            .map(Vec::len)
            .chain(std::iter::once(self.headers.len()))
            .max()
            .unwrap_or(0);
        let mut widths = vec![0usize; cols];
        for r in std::iter::once(&self.headers).chain(&self.rows) {
            for (i, c) in r.iter().enumerate() {
                widths[i] = widths[i].max(c.chars().count());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, r: &[String]| {
            let mut s = String::new();
            for (i, w) in widths.iter().enumerate() {
                let c = r.get(i).map(String::as_str).unwrap_or("");
                if i > 0 {
                    s.push_str("  ");
                }
                if i == 0 {
                    let _ = write!(s, "{c:<w$}");
                } else {
                    let _ = write!(s, "{c:>w$}");
                }
            }
            out.push_str(s.trim_end());
            out.push('\n');
        };
        line(&mut out, &self.headers);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        line(&mut out, &rule);
        for r in &self.rows {
            line(&mut out, r);
        }
        out
    }
}

pub fn fmt_metric(v: f64) -> String {
    format!("{v:.4}")
}

pub fn fmt_opt(m: Option<&Metrics>, f: impl Fn(&Metrics) -> f64) -> String {
    m.map(|m| fmt_metric(f(m))).unwrap_or_else(|| "-".into())
}

const METRIC_HEADERS: [&str; 7] = ["", "n", "acc", "p_fake", "r_fake", "f1_fake", "macro_f1"];

/// One row per named metrics set.
pub fn metrics_table(rows: &[(String, Metrics)]) -> String {
    let mut t = Table::new(METRIC_HEADERS);
    for (name, m) in rows {
        t.row([
            name.clone(),
            m.n().to_string(),
            fmt_metric(m.accuracy),
            fmt_metric(m.precision_fake),
            fmt_metric(m.recall_fake),
            fmt_metric(m.f1_fake),
            fmt_metric(m.macro_f1),
        ]);
    }
    t.render()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: String,
    pub baseline: f64,
    pub candidate: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: String,
    pub candidate: String,
    pub deltas: Vec<MetricDelta>,
    /// Items labeled differently by the two runs, among those both labeled.
    pub label_disagreements: usize,
}

fn metric_fields(m: &Metrics) -> [(&'static str, f64); 8] {
    [
        ("accuracy", m.accuracy),
        ("precision_fake", m.precision_fake),
        ("recall_fake", m.recall_fake),
        ("f1_fake", m.f1_fake),
        ("precision_real", m.precision_real),
        ("recall_real", m.recall_real),
        ("f1_real", m.f1_real),
        ("macro_f1", m.macro_f1),
    ]
}

/// Diff two labelings of the same items against gold.
pub fn compare(
    baseline: (&str, &BTreeMap<String, Label>),
    candidate: (&str, &BTreeMap<String, Label>),
    gold: &BTreeMap<String, Label>,
) -> Result<Comparison> {
    let mb = evaluate(baseline.1, gold)?;
    let mc = evaluate(candidate.1, gold)?;
    let deltas = metric_fields(&mb)
        .into_iter()
        .zip(metric_fields(&mc))
        .map(|((name, b), (_, c))| MetricDelta {
            metric: name.into(),
            baseline: b,
            candidate: c,
            delta: c - b,
        })
        .collect();
    let label_disagreements = baseline
        .1
        .iter()
        .filter(|(id, l)| candidate.1.get(*id).is_some_and(|c| c != *l))
        .count();
    Ok(Comparison {
        baseline: baseline.0.into(),
        candidate: candidate.0.into(),
        deltas,
        label_disagreements,
    })
}

impl Comparison {
    pub fn render(&self) -> String {
        let mut t = Table::new(["metric", self.baseline.as_str(), self.candidate.as_str(), "delta"]);
        for d in &self.deltas {
            t.row([
                d.metric.clone(),
                fmt_metric(d.baseline),
                fmt_metric(d.candidate),
                format!("{:+.4}", d.delta),
            ]);
        }
        format!("{}labels differing: {}\n", t.render(), self.label_disagreements)
    }
}
