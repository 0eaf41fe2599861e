//! Run directory layout and hashed checkpoints.
//!
//! ```text
//! run_config.json
//! checkpoint.json              last completed round + sha256 of every file below
//! rounds/round_<r>/pools.jsonl
//! rounds/round_<r>/slm.json
//! rounds/round_<r>/report.json
//! final_labels.jsonl
//! reports.jsonl
//! report.txt
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sources::sha256_hex;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const CONFIG_FILE: &str = "run_config.json";
pub const FINAL_LABELS_FILE: &str = "final_labels.jsonl";
pub const REPORTS_FILE: &str = "reports.jsonl";
pub const REPORT_TEXT_FILE: &str = "report.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub last_completed_round: u32,
    pub complete: bool,
    pub dataset_sha256: String,
    /// Relative path to sha256 of every file written so far.
    pub files: BTreeMap<String, String>,
}

pub(crate) struct RunDir {
    root: PathBuf,
    pub checkpoint: Checkpoint,
}

pub(crate) fn round_file(round: u32, name: &str) -> String {
    format!("rounds/round_{round}/{name}")
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub(crate) fn to_jsonl<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, &r)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub(crate) fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

impl RunDir {
    pub fn create(root: &Path, dataset_sha256: String) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(RunDir {
            root: root.to_path_buf(),
            checkpoint: Checkpoint {
                format_version: 1,
                last_completed_round: 0,
                complete: false,
                dataset_sha256,
                files: BTreeMap::new(),
            },
        })
    }

    /// Open an existing run and check every recorded file against its hash.
    pub fn open_verified(root: &Path) -> Result<Self> {
        let path = root.join(CHECKPOINT_FILE);
        let bytes = fs::read(&path).map_err(|e| Error::Integrity {
            path: path.clone(),
            message: format!("cannot read checkpoint: {e}"),
        })?;
        let checkpoint: Checkpoint = serde_json::from_slice(&bytes).map_err(|e| Error::Integrity {
            path: path.clone(),
            message: format!("malformed checkpoint: {e}"),
        })?;
        for (rel, expected) in &checkpoint.files {
            let p = root.join(rel);
            let data = fs::read(&p).map_err(|e| Error::Integrity {
                path: p.clone(),
                message: format!("missing or unreadable: {e}"),
            })?;
            let actual = sha256_hex(&data);
            if &actual != expected {
                return Err(Error::Integrity {
                    path: p,
                    message: format!("sha256 {actual} does not match checkpoint {expected}"),
                });
            }
        }
        Ok(RunDir {
            root: root.to_path_buf(),
            checkpoint,
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Write a file and record its hash. The checkpoint itself is only
    /// updated on [`RunDir::commit`].
    pub fn put(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.root.join(rel), bytes)?;
        self.checkpoint.files.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn put_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.put(rel, &bytes)
    }

    pub fn read_json<T: DeserializeOwned>(&self, rel: &str) -> Result<T> {
        let p = self.root.join(rel);
        let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Integrity {
            path: p,
            message: format!("malformed: {e}"),
        })
    }

    pub fn commit(&mut self, last_completed_round: u32, complete: bool) -> Result<()> {
        self.checkpoint.last_completed_round = last_completed_round;
        self.checkpoint.complete = complete;
        let mut bytes = serde_json::to_vec_pretty(&self.checkpoint)?;
        bytes.push(b'\n');
        write_atomic(&self.root.join(CHECKPOINT_FILE), &bytes)
    }
}
