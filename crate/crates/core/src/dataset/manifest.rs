use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CONFIG_FILE;
use crate::error::{Error, Result};
use crate::schema::AttributeVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Counterfactual family membership. Grid records also name `attr_b`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepInfo {
    pub attr: String,
    pub base_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attr_b: Option<String>,
}

/// One line of `manifest.jsonl`. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub seed: u64,
    pub split: Split,
    pub attrs: AttributeVector,
    pub target: i32,
    pub image: String,
    pub masks: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepInfo>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    /// SHA-256 of the resolved config, when known.
    pub fingerprint: Option<String>,
    pub records: Vec<SampleRecord>,
}

impl Manifest {
    pub fn split_counts(&self) -> SplitCounts {
        let mut c = SplitCounts::default();
        for r in &self.records {
            match r.split {
                Split::Train => c.train += 1,
                Split::Val => c.val += 1,
                Split::Test => c.test += 1,
            }
        }
        c
    }

    pub fn get(&self, id: &str) -> Option<&SampleRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn index(&self) -> BTreeMap<&str, &SampleRecord> {
        self.records.iter().map(|r| (r.id.as_str(), r)).collect()
    }

    pub fn is_sweep(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.sweep.is_some())
    }
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in &manifest.records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads `manifest.jsonl`; the fingerprint comes from a sibling
/// `config.resolved` when present.
pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord = serde_json::from_str(&line)
            .map_err(|e| Error::format(path, format!("line {}: {e}", k + 1)))?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::format(path, format!("line {}: duplicate id {:?}", k + 1, rec.id)));
        }
        records.push(rec);
    }
    let fingerprint = path
        .parent()
        .map(|dir| dir.join(CONFIG_FILE))
        .and_then(|p| std::fs::read(p).ok())
        .map(|bytes| hex::encode(Sha256::digest(&bytes)));
    Ok(Manifest { fingerprint, records })
}
