//! Metrics over a manifest and externally produced predictions.
//!
//! Ordinal quantities are scored with Within-1-Accuracy (|pred - gt| <= 1),
//! binary ones with exact agreement. The Trust Index relates target
//! performance `P` to mean attribute performance `A`: `TI = P - A / P`.

mod attention;
mod predictions;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use attention::{
    attention_overlap, overlap, read_attention_index, read_attention_map, AttentionEntry, AttentionMap,
    AttentionSummary, Overlap,
};
pub use predictions::{read_predictions, write_predictions, Prediction, PredictionSet};

use crate::dataset::Manifest;
use crate::error::{Error, Result};
use crate::rule::TargetRule;
use crate::schema::{AttributeSchema, AttributeVector, Scale};

/// Share of predictions within one step of the truth (exact for binary scales).
pub fn within1_accuracy(preds: &[i32], gts: &[i32], scale: Scale) -> Result<f64> {
    if preds.len() != gts.len() {
        return Err(Error::Metric(format!(
            "length mismatch: {} predictions vs {} ground-truth values",
            preds.len(),
            gts.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Metric("no values to score".into()));
    }
    if let Some(v) = preds.iter().chain(gts).find(|&&v| !scale.contains(v)) {
        return Err(Error::Metric(format!(
            "value {v} outside scale {}..{}",
            scale.min(),
            scale.max()
        )));
    }
    let correct = preds
        .iter()
        .zip(gts)
        .filter(|(p, g)| hit(**p, **g, scale))
        .count();
    Ok(correct as f64 / preds.len() as f64)
}

fn hit(pred: i32, gt: i32, scale: Scale) -> bool {
    if scale.is_binary() {
        pred == gt
    } else {
        (pred - gt).abs() <= 1
    }
}

/// `p_target - mean(attr_accs) / p_target`.
pub fn trust_index(p_target: f64, attr_accs: &[f64]) -> Result<f64> {
    if p_target == 0.0 {
        return Err(Error::Metric("trust index undefined at zero target performance".into()));
    }
    if attr_accs.is_empty() {
        return Err(Error::Metric("trust index needs at least one attribute accuracy".into()));
    }
    let mean = attr_accs.iter().sum::<f64>() / attr_accs.len() as f64;
    Ok(p_target - mean / p_target)
}

/// Target classes of `rule` as an ordinal scale.
pub fn target_scale(rule: &TargetRule) -> Scale {
    let classes = rule.target_classes();
    Scale::Ordinal {
        min: classes[0],
        max: classes[classes.len() - 1],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeScore {
    /// `None` when no prediction covers the attribute.
    pub accuracy: Option<f64>,
    pub n: usize,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeReport {
    pub attributes: BTreeMap<String, f64>,
    pub induced_target: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Swept attribute id; for grids `a|b=v` names the row with `b` at `v`.
    pub attr: String,
    pub value: i32,
    pub mean_gt_target: f64,
    pub std_gt_target: f64,
    pub mean_pred_target: Option<f64>,
    pub std_pred_target: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n_predictions: usize,
    pub n_evaluated: usize,
    /// Evaluated predictions over manifest records.
    pub coverage: f64,
    pub unknown_ids: usize,
    pub target_within1: f64,
    pub attributes: BTreeMap<String, AttributeScore>,
    pub trust_index: Option<f64>,
    /// Number of attributes averaged into the trust index.
    pub trust_index_attributes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trust_index_note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prototypes: Option<PrototypeReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curves: Option<Vec<CurvePoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention: Option<BTreeMap<String, AttentionSummary>>,
}

/// Target and per-attribute accuracy plus the trust index over every
/// attribute that has at least one prediction.
pub fn evaluate_predictions(
    manifest: &Manifest,
    predictions: &PredictionSet,
    schema: &AttributeSchema,
    rule: &TargetRule,
) -> Result<MetricReport> {
    let records = manifest.index();
    let matched: Vec<_> = predictions
        .predictions
        .iter()
        .filter_map(|p| records.get(p.id.as_str()).map(|r| (p, *r)))
        .collect();
    if matched.is_empty() {
        return Err(Error::Metric("no prediction id matches a manifest record".into()));
    }
    let unknown_ids = predictions.predictions.len() - matched.len();

    let (tp, tg): (Vec<i32>, Vec<i32>) = matched.iter().map(|(p, r)| (p.target_pred, r.target)).unzip();
    let target_within1 = within1_accuracy(&tp, &tg, target_scale(rule))?;

    let mut attributes = BTreeMap::new();
    let mut accs = Vec::new();
    for def in schema.attributes() {
        let (ap, ag): (Vec<i32>, Vec<i32>) = matched
            .iter()
            .filter_map(|(p, r)| {
                let pred = p.attrs_pred.as_ref()?.get(&def.id)?;
                Some((*pred, r.attrs.get(&def.id)?))
            })
            .unzip();
        let score = if ap.is_empty() {
            AttributeScore {
                accuracy: None,
                n: 0,
                status: "not evaluated".into(),
            }
        } else {
            let acc = within1_accuracy(&ap, &ag, def.scale)
                .map_err(|e| Error::Metric(format!("attribute {}: {e}", def.id)))?;
            accs.push(acc);
            AttributeScore {
                accuracy: Some(acc),
                n: ap.len(),
                status: "evaluated".into(),
            }
        };
        attributes.insert(def.id.clone(), score);
    }

    let (trust, note) = if accs.is_empty() {
        (None, Some("no attribute predictions".to_string()))
    } else {
        match trust_index(target_within1, &accs) {
            Ok(ti) => {
                let note = (accs.len() < schema.len())
                    .then(|| format!("computed over {} of {} attributes", accs.len(), schema.len()));
                (Some(ti), note)
            }
            Err(e) => (None, Some(e.to_string())),
        }
    };

    let prototypes = if predictions.predictions.iter().any(|p| p.proto_attrs.is_some()) {
        Some(prototype_correctness(manifest, predictions, rule)?)
    } else {
        None
    };

    Ok(MetricReport {
        n_predictions: predictions.predictions.len(),
        n_evaluated: matched.len(),
        coverage: matched.len() as f64 / manifest.records.len() as f64,
        unknown_ids,
        target_within1,
        attributes,
        trust_index: trust,
        trust_index_attributes: accs.len(),
        trust_index_note: note,
        prototypes,
        curves: None,
        attention: None,
    })
}

/// Agreement of each presented prototype's attribute value with the
/// sample's true value, and of the target the rule induces from the
/// prototype attributes with the true target. Samples without prototype
/// labels are skipped; a sample with a partial label set is an error.
pub fn prototype_correctness(
    manifest: &Manifest,
    predictions: &PredictionSet,
    rule: &TargetRule,
) -> Result<PrototypeReport> {
    let schema = rule.schema();
    let records = manifest.index();
    let mut per_attr: BTreeMap<&str, (Vec<i32>, Vec<i32>)> = BTreeMap::new();
    let (mut induced, mut truth) = (Vec::new(), Vec::new());
    for p in &predictions.predictions {
        let (Some(proto), Some(rec)) = (&p.proto_attrs, records.get(p.id.as_str())) else {
            continue;
        };
        let mut v = AttributeVector::new();
        for def in schema.attributes() {
            let value = *proto.get(&def.id).ok_or_else(|| {
                Error::Metric(format!("sample {:?}: missing prototype label for {}", p.id, def.id))
            })?;
            v.set(&def.id, value);
            let gt = rec
                .attrs
                .get(&def.id)
                .ok_or_else(|| Error::Metric(format!("sample {:?} lacks attribute {}", p.id, def.id)))?;
            let e = per_attr.entry(def.id.as_str()).or_default();
            e.0.push(value);
            e.1.push(gt);
        }
        induced.push(rule.evaluate(&v)?);
        truth.push(rec.target);
    }
    if induced.is_empty() {
        return Err(Error::Metric("missing prototype labels".into()));
    }
    let mut attributes = BTreeMap::new();
    for def in schema.attributes() {
        let (p, g) = &per_attr[def.id.as_str()];
        attributes.insert(def.id.clone(), within1_accuracy(p, g, def.scale)?);
    }
    Ok(PrototypeReport {
        attributes,
        induced_target: within1_accuracy(&induced, &truth, target_scale(rule))?,
        n: induced.len(),
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean ground-truth (and predicted, if given) target per swept value. Grid
/// manifests produce one curve per value of the second attribute.
pub fn sensitivity_curves(manifest: &Manifest, predictions: Option<&PredictionSet>) -> Result<Vec<CurvePoint>> {
    if manifest.records.is_empty() {
        return Err(Error::Metric("manifest is empty".into()));
    }
    let preds = predictions.map(|p| p.by_id());
    let mut groups: BTreeMap<(String, i32), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in &manifest.records {
        let sweep = r
            .sweep
            .as_ref()
            .ok_or_else(|| Error::Metric(format!("record {:?} lacks sweep metadata", r.id)))?;
        let value = r
            .attrs
            .get(&sweep.attr)
            .ok_or_else(|| Error::Metric(format!("record {:?} lacks swept attribute {}", r.id, sweep.attr)))?;
        let name = match &sweep.attr_b {
            Some(b) => {
                let vb = r
                    .attrs
                    .get(b)
                    .ok_or_else(|| Error::Metric(format!("record {:?} lacks grid attribute {b}", r.id)))?;
                format!("{}|{b}={vb}", sweep.attr)
            }
            None => sweep.attr.clone(),
        };
        let g = groups.entry((name, value)).or_default();
        g.0.push(r.target as f64);
        if let Some(p) = preds.as_ref().and_then(|m| m.get(r.id.as_str())) {
            g.1.push(p.target_pred as f64);
        }
    }
    Ok(groups
        .into_iter()
        .map(|((attr, value), (gt, pred))| {
            let (mean_gt, std_gt) = mean_std(&gt);
            let (mp, sp) = if pred.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_std(&pred);
                (Some(m), Some(s))
            };
            CurvePoint {
                attr,
                value,
                mean_gt_target: mean_gt,
                std_gt_target: std_gt,
                mean_pred_target: mp,
                std_pred_target: sp,
                n: gt.len(),
            }
        })
        .collect())
}

/// CSV with columns `attr,value,mean_gt_target[,mean_pred_target],n`; the
/// prediction column appears when any point has one.
pub fn curves_csv(points: &[CurvePoint]) -> String {
    let with_pred = points.iter().any(|p| p.mean_pred_target.is_some());
    let mut out = String::from(if with_pred {
        "attr,value,mean_gt_target,mean_pred_target,n\n"
    } else {
        "attr,value,mean_gt_target,n\n"
    });
    for p in points {
        let _ = write!(out, "{},{},{}", p.attr, p.value, p.mean_gt_target);
        if with_pred {
            match p.mean_pred_target {
                Some(m) => {
                    let _ = write!(out, ",{m}");
                }
                None => out.push(','),
            }
        }
        let _ = writeln!(out, ",{}", p.n);
    }
    out
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "evaluated {} of {} predictions (coverage {:.4})",
            self.n_evaluated, self.n_predictions, self.coverage
        );
        let _ = writeln!(out, "{:<16}{:>10}{:>8}", "quantity", "within-1", "n");
        let _ = writeln!(out, "{:<16}{:>10}{:>8}", "target", fmt(Some(self.target_within1)), self.n_evaluated);
        for (id, s) in &self.attributes {
            let acc = if s.accuracy.is_some() { fmt(s.accuracy) } else { s.status.clone() };
            let _ = writeln!(out, "{:<16}{:>10}{:>8}", id, acc, s.n);
        }
        let _ = write!(out, "trust index     {}", fmt(self.trust_index));
        if let Some(note) = &self.trust_index_note {
            let _ = write!(out, "  ({note})");
        }
        out.push('\n');
        if let Some(p) = &self.prototypes {
            let _ = writeln!(out, "prototype correctness (n = {})", p.n);
            for (id, v) in &p.attributes {
                let _ = writeln!(out, "  {:<14}{:>10.4}", id, v);
            }
            let _ = writeln!(out, "  {:<14}{:>10.4}", "induced target", p.induced_target);
        }
        if let Some(a) = &self.attention {
            let _ = writeln!(out, "attention overlap");
            for (id, s) in a {
                let _ = writeln!(out, "  {:<14} dice {:.4}  mass-inside {:.4}  (n = {})", id, s.mean_dice, s.mean_mass_inside, s.n);
            }
        }
        out
    }
}
