use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Manifest;
use crate::error::{Error, Result};

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub target_pred: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attrs_pred: Option<BTreeMap<String, i32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proto_attrs: Option<BTreeMap<String, i32>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PredictionSet {
    pub predictions: Vec<Prediction>,
}

impl PredictionSet {
    pub fn by_id(&self) -> BTreeMap<&str, &Prediction> {
        self.predictions.iter().map(|p| (p.id.as_str(), p)).collect()
    }

    /// Predictions copying the manifest's ground truth, with prototypes equal
    /// to the true attributes.
    pub fn oracle(manifest: &Manifest) -> Self {
        Self {
            predictions: manifest
                .records
                .iter()
                .map(|r| {
                    let attrs: BTreeMap<String, i32> = r.attrs.iter().map(|(k, v)| (k.to_string(), v)).collect();
                    Prediction {
                        id: r.id.clone(),
                        target_pred: r.target,
                        attrs_pred: Some(attrs.clone()),
                        proto_attrs: Some(attrs),
                    }
                })
                .collect(),
        }
    }
}

pub fn read_predictions(path: &Path) -> Result<PredictionSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut predictions = Vec::new();
    let mut seen = BTreeSet::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction =
            serde_json::from_str(&line).map_err(|e| Error::format(path, format!("line {}: {e}", k + 1)))?;
        if !seen.insert(p.id.clone()) {
            return Err(Error::format(path, format!("line {}: duplicate id {:?}", k + 1, p.id)));
        }
        predictions.push(p);
    }
    Ok(PredictionSet { predictions })
}

pub fn write_predictions(path: &Path, set: &PredictionSet) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in &set.predictions {
        writeln!(w, "{}", serde_json::to_string(p).expect("predictions serialize")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_line_parses() {
        let p: Prediction = serde_json::from_str(r#"{"id":"a","target_pred":3}"#).unwrap();
        assert_eq!(p.target_pred, 3);
        assert!(p.attrs_pred.is_none() && p.proto_attrs.is_none());
    }

    #[test]
    fn file_round_trip_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        let set = PredictionSet {
            predictions: vec![Prediction {
                id: "x".into(),
                target_pred: 2,
                attrs_pred: Some(BTreeMap::from([("r".into(), 1)])),
                proto_attrs: None,
            }],
        };
        write_predictions(&path, &set).unwrap();
        assert_eq!(read_predictions(&path).unwrap(), set);
        std::fs::write(&path, "{\"id\":\"a\",\"target_pred\":1}\n{\"id\":\"a\",\"target_pred\":2}\n").unwrap();
        assert!(read_predictions(&path).is_err());
    }
}
