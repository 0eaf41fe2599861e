use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{generate, OracleLlm, OracleLlmConfig, OracleSlm, OracleSlmConfig, SyntheticSpec};
use crate::corpus::{Dataset, Label};
use crate::error::{Error, Result};
use crate::evaluation::{fmt_metric, Table};
use crate::orchestrator::{self, Components, RunConfig, RunOptions, RunResult};
use crate::seeds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub omegas: Vec<f64>,
    pub rounds: Vec<u32>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            omegas: vec![0.6, 0.7, 0.8, 0.9],
            rounds: vec![1, 2, 3, 4, 5],
        }
    }
}

/// A self-contained simulation: synthetic data, oracle backends and the
/// loop settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSpec {
    pub data: SyntheticSpec,
    pub llm: OracleLlmConfig,
    pub slm: OracleSlmConfig,
    pub run: RunConfig,
    pub sweep: SweepConfig,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            data: SyntheticSpec {
                n_items: 2500,
                future_fraction: 0.8,
                n_events: 40,
                ..SyntheticSpec::default()
            },
            llm: OracleLlmConfig {
                demo_boost: 0.1,
                ..OracleLlmConfig::default()
            },
            slm: OracleSlmConfig::default(),
            run: RunConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl SimulationSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("spec", e.message()))
    }

    pub fn dataset(&self) -> Result<Dataset> {
        Ok(generate(&self.data)?.dataset)
    }

    /// Oracle backends keyed to the gold labels of `dataset` and the run
    /// seed.
    pub fn components(&self, dataset: &Dataset, run: &RunConfig) -> Result<Components> {
        let gold: Arc<HashMap<String, Label>> = Arc::new(dataset.gold().into_iter().collect());
        Ok(Components {
            llm: Arc::new(OracleLlm::new(
                self.llm.clone(),
                gold.clone(),
                seeds::derive(run.seed, &["oracle-llm"]),
            )?),
            slm: Box::new(OracleSlm::new(
                self.slm.clone(),
                gold,
                seeds::derive(run.seed, &["oracle-slm"]),
            )?),
            search: None,
            corpus: None,
            knowledge: None,
        })
    }

    pub fn simulate(&self) -> Result<RunResult> {
        let dataset = self.dataset()?;
        self.simulate_on(&dataset, &self.run, &RunOptions::default())
    }

    pub fn simulate_on(&self, dataset: &Dataset, run: &RunConfig, options: &RunOptions) -> Result<RunResult> {
        orchestrator::run(dataset, run, self.components(dataset, run)?, options)
    }

    /// Final accuracy for every (ω, N) pair of the sweep grid.
    pub fn sweep(&self) -> Result<SweepGrid> {
        if self.sweep.omegas.is_empty() || self.sweep.rounds.is_empty() {
            return Err(Error::config("sweep", "omegas and rounds must be non-empty"));
        }
        let dataset = self.dataset()?;
        let mut accuracy = Vec::with_capacity(self.sweep.rounds.len());
        for &n in &self.sweep.rounds {
            let mut row = Vec::with_capacity(self.sweep.omegas.len());
            for &omega in &self.sweep.omegas {
                let mut run = self.run.clone();
                run.rounds = n;
                run.selection.omega = omega;
                let res = self.simulate_on(&dataset, &run, &RunOptions::default())?;
                let m = res
                    .metrics
                    .ok_or_else(|| Error::Validation("simulation produced no gold-labeled items".into()))?;
                row.push(m.accuracy);
            }
            accuracy.push(row);
        }
        Ok(SweepGrid {
            omegas: self.sweep.omegas.clone(),
            rounds: self.sweep.rounds.clone(),
            accuracy,
        })
    }
}

/// `accuracy[i][j]` is the final accuracy with `rounds[i]` and `omegas[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub omegas: Vec<f64>,
    pub rounds: Vec<u32>,
    pub accuracy: Vec<Vec<f64>>,
}

impl SweepGrid {
    /// Grid cell with the highest accuracy as `(rounds, omega, accuracy)`;
    /// the first one in row-major order wins ties.
    pub fn best(&self) -> (u32, f64, f64) {
        let mut best = (self.rounds[0], self.omegas[0], f64::NEG_INFINITY);
        for (i, row) in self.accuracy.iter().enumerate() {
            for (j, &a) in row.iter().enumerate() {
                if a > best.2 {
                    best = (self.rounds[i], self.omegas[j], a);
                }
            }
        }
        best
    }

    pub fn render(&self) -> String {
        let mut headers = vec!["N \\ omega".to_string()];
        headers.extend(self.omegas.iter().map(|o| format!("{o:.2}")));
        let mut t = Table::new(headers);
        for (n, row) in self.rounds.iter().zip(&self.accuracy) {
            let mut cells = vec![n.to_string()];
            cells.extend(row.iter().map(|a| fmt_metric(*a)));
            t.row(cells);
        }
        t.render()
    }
}
