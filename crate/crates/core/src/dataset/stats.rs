use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Manifest;
use crate::error::{Error, Result};
use crate::rule::TargetRule;
use crate::schema::AttributeSchema;

/// Value counts per attribute and for the target. Every scale value and
/// every target class named by the rule appears, with zero counts if unseen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub total: usize,
    pub attributes: BTreeMap<String, BTreeMap<i32, usize>>,
    pub target: BTreeMap<i32, usize>,
}

pub fn histogram(manifest: &Manifest, schema: &AttributeSchema, rule: &TargetRule) -> Histogram {
    let mut attributes: BTreeMap<String, BTreeMap<i32, usize>> = schema
        .attributes()
        .iter()
        .map(|d| (d.id.clone(), d.scale.values().map(|v| (v, 0)).collect()))
        .collect();
    let mut target: BTreeMap<i32, usize> = rule.target_classes().into_iter().map(|t| (t, 0)).collect();
    for r in &manifest.records {
        for (id, v) in r.attrs.iter() {
            *attributes.entry(id.to_string()).or_default().entry(v).or_default() += 1;
        }
        *target.entry(r.target).or_default() += 1;
    }
    Histogram {
        total: manifest.records.len(),
        attributes,
        target,
    }
}

impl Histogram {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("histogram serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let values: std::collections::BTreeSet<i32> = self
            .attributes
            .values()
            .chain(std::iter::once(&self.target))
            .flat_map(|m| m.keys().copied())
            .collect();
        let _ = write!(out, "{:<8}", "");
        for v in &values {
            let _ = write!(out, "{v:>7}");
        }
        out.push('\n');
        let rows = self
            .attributes
            .iter()
            .map(|(k, m)| (k.as_str(), m))
            .chain(std::iter::once(("target", &self.target)));
        for (name, counts) in rows {
            let _ = write!(out, "{name:<8}");
            for v in &values {
                match counts.get(v) {
                    Some(c) => {
                        let _ = write!(out, "{c:>7}");
                    }
                    None => {
                        let _ = write!(out, "{:>7}", "-");
                    }
                }
            }
            out.push('\n');
        }
        let _ = writeln!(out, "total   {}", self.total);
        out
    }
}
