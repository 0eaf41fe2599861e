//! Synthetic datasets and oracle backends for simulating the collaboration
//! loop without real models.
//!
//! The oracles know the gold labels and decide correctness by seeded coin
//! flips, so the pool and accuracy dynamics of a run can be compared with
//! closed-form expectations.

mod generator;
mod oracle;
mod suite;

pub use generator::{generate, write_bundle, SyntheticBundle, SyntheticSpec, BUNDLE_FILES};
pub use oracle::{ConfidenceModel, OracleLlm, OracleLlmConfig, OracleSlm, OracleSlmConfig};
pub use suite::{SimulationSpec, SweepConfig, SweepGrid};
