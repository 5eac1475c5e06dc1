//! Dataset configuration document (TOML).
//!
//! Every field is optional; an empty document yields [`DatasetConfig::default`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::render::RenderParams;
use crate::rule::{default_rule, RuleDocument, TargetRule};
use crate::schema::AttributeSchema;

pub const MIN_CANVAS: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageConfig {
    pub height: usize,
    pub width: usize,
    /// 1 for grayscale, 3 to replicate the gray plane as RGB.
    pub channels: u8,
}

impl Default for ImageConfig {
    fn default() -> Self {
        Self {
            height: 128,
            width: 128,
            channels: 1,
        }
    }
}

/// Soft background blobs drawn under the nodule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackgroundConfig {
    pub enabled: bool,
    /// Inclusive range of blobs per image.
    pub blob_count: [u32; 2],
    /// Inclusive range of blob peak intensity.
    pub intensity: [f64; 2],
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            blob_count: [2, 5],
            intensity: [0.12, 0.20],
        }
    }
}

/// Split proportions; exact counts are apportioned by largest remainder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

/// Optional per-attribute categorical weights over scale values, lowest
/// value first. Attributes without weights are sampled uniformly.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub weights: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub schema: AttributeSchema,
    pub rule: TargetRule,
    pub image: ImageConfig,
    pub render: RenderParams,
    pub background: BackgroundConfig,
    pub splits: SplitConfig,
    pub sampling: SamplingConfig,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        let rule = default_rule();
        Self {
            schema: rule.schema().clone(),
            rule,
            image: ImageConfig::default(),
            render: RenderParams::default(),
            background: BackgroundConfig::default(),
            splits: SplitConfig::default(),
            sampling: SamplingConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image: Option<ImageConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    render: Option<RenderParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    background: Option<BackgroundConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    splits: Option<SplitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sampling: Option<SamplingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schema: Option<AttributeSchema>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rule: Option<RuleDocument>,
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<DatasetConfig> {
    let doc: ConfigDocument = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
    let defaults = DatasetConfig::default();
    let schema = doc.schema.unwrap_or(defaults.schema);
    let rule = match doc.rule {
        Some(rule) => TargetRule::from_document(rule, schema.clone()),
        None if schema == *defaults.rule.schema() => Ok(defaults.rule),
        // The built-in clauses still apply if the schema keeps their attributes.
        None => TargetRule::from_document(defaults.rule.to_document(), schema.clone())
            .map_err(|e| Error::Rule(format!("default rule does not fit the custom schema: {e}"))),
    }
    .map_err(|e| Error::config("rule", e.to_string()))?;
    let config = DatasetConfig {
        schema,
        rule,
        image: doc.image.unwrap_or_default(),
        render: doc.render.unwrap_or_default(),
        background: doc.background.unwrap_or_default(),
        splits: doc.splits.unwrap_or_default(),
        sampling: doc.sampling.unwrap_or_default(),
        seed: doc.seed.unwrap_or(0),
    };
    config.validate()?;
    Ok(config)
}

/// Locates a TOML error as `table.key (line N)` where possible.
fn toml_error(text: &str, e: &toml::de::Error) -> Error {
    let message = e.message().trim_end().to_string();
    let Some(span) = e.span() else {
        return Error::config("document", message);
    };
    let start = span.start.min(text.len());
    let line_no = text[..start].matches('\n').count() + 1;
    let line = text.lines().nth(line_no - 1).unwrap_or("").trim();
    let table = text[..start]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('['))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').to_string());
    let key = line
        .split_once('=')
        .map(|(k, _)| k.trim().to_string())
        .filter(|k| !k.is_empty() && !line.starts_with('['));
    let path = match (table, key) {
        (Some(t), Some(k)) => format!("{t}.{k}"),
        (Some(t), None) => t,
        (None, Some(k)) => k,
        (None, None) => "document".to_string(),
    };
    Error::config(format!("{path} (line {line_no})"), message)
}

/// Full document with every field spelled out.
pub fn serialize_config(config: &DatasetConfig) -> String {
    let doc = ConfigDocument {
        seed: Some(config.seed),
        image: Some(config.image.clone()),
        render: Some(config.render.clone()),
        background: Some(config.background.clone()),
        splits: Some(config.splits.clone()),
        sampling: Some(config.sampling.clone()),
        schema: Some(config.schema.clone()),
        rule: Some(config.rule.to_document()),
    };
    toml::to_string(&doc).expect("config documents always serialize")
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let img = &self.image;
        if img.height < MIN_CANVAS {
            return Err(Error::config(
                "image.height",
                format!("height below minimum {MIN_CANVAS} (got {})", img.height),
            ));
        }
        if img.width < MIN_CANVAS {
            return Err(Error::config(
                "image.width",
                format!("width below minimum {MIN_CANVAS} (got {})", img.width),
            ));
        }
        if !matches!(img.channels, 1 | 3) {
            return Err(Error::config("image.channels", format!("must be 1 or 3, got {}", img.channels)));
        }
        if self.rule.schema() != &self.schema {
            return Err(Error::config("rule", "rule was built for a different schema"));
        }
        self.render.validate(&self.schema)?;

        let bg = &self.background;
        if bg.blob_count[0] > bg.blob_count[1] {
            return Err(Error::config("background.blob_count", "range is inverted"));
        }
        let ceiling = self.render.background_level + 0.1 + 1e-12;
        if !(bg.intensity[0] <= bg.intensity[1] && bg.intensity[0] >= 0.0 && bg.intensity[1] <= ceiling) {
            return Err(Error::config(
                "background.intensity",
                format!(
                    "need 0 <= lo <= hi <= background_level + 0.1 = {:.3}, got {:?}",
                    ceiling, bg.intensity
                ),
            ));
        }

        let s = &self.splits;
        let parts = [("train", s.train), ("val", s.val), ("test", s.test)];
        if let Some((name, v)) = parts.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::config(format!("splits.{name}"), format!("must be >= 0, got {v}")));
        }
        if s.train + s.val + s.test <= 0.0 {
            return Err(Error::config("splits", "proportions sum to zero"));
        }

        for (id, w) in &self.sampling.weights {
            let path = format!("sampling.weights.{id}");
            let Some(def) = self.schema.attribute(id) else {
                return Err(Error::config(path, "unknown attribute"));
            };
            if w.len() != def.scale.cardinality() {
                return Err(Error::config(
                    path,
                    format!("expected {} weights, got {}", def.scale.cardinality(), w.len()),
                ));
            }
            if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::config(path, "weights must be >= 0 with a positive sum"));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the serialized document.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(serialize_config(self).as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule::serialize_rule;

    #[test]
    fn empty_document_gives_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c, DatasetConfig::default());
        assert_eq!((c.image.height, c.image.width, c.image.channels), (128, 128, 1));
        assert!(!c.background.enabled);
        assert_eq!(c.seed, 0);
    }

    #[test]
    fn serialized_defaults_round_trip() {
        let c = DatasetConfig::default();
        assert_eq!(parse_config(&serialize_config(&c)).unwrap(), c);
    }

    #[test]
    fn small_canvas_rejected() {
        let e = parse_config("[image]\nheight = 16\n").unwrap_err().to_string();
        assert!(e.contains("image.height"), "{e}");
        assert!(e.contains("height below minimum 32"), "{e}");
    }

    #[test]
    fn unknown_field_reported_with_path() {
        let e = parse_config("[render]\nspike_cnt = 3\n").unwrap_err().to_string();
        assert!(e.contains("render"), "{e}");
        assert!(e.contains("spike_cnt"), "{e}");
        let e = parse_config("seed = \"x\"\n").unwrap_err().to_string();
        assert!(e.contains("line 1"), "{e}");
    }

    #[test]
    fn rule_override_round_trips() {
        let text = r#"
seed = 7

[[rule.clauses]]
when = ["s>=4"]
add = 1

[[rule.bins]]
upto = 0
target = 1

[[rule.bins]]
from = 1
target = 2
"#;
        let c = parse_config(text).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.rule.bins().len(), 2);
        let again = crate::rule::parse_rule(&serialize_rule(&c.rule), &c.schema).unwrap();
        assert_eq!(again, c.rule);
        assert_eq!(parse_config(&serialize_config(&c)).unwrap(), c);
    }

    #[test]
    fn bad_rule_reported_under_rule() {
        let text = "[[rule.bins]]\nupto = 0\ntarget = 1\n[[rule.bins]]\nfrom = 0\ntarget = 2\n";
        let e = parse_config(text).unwrap_err().to_string();
        assert!(e.contains("at rule:"), "{e}");
        assert!(e.contains("score 0 maps to 2 bins"), "{e}");
    }

    #[test]
    fn custom_schema_needs_matching_rule() {
        let text = r#"
[[schema.attributes]]
id = "a"
scale = "ordinal"
max = 3
role = "size"
"#;
        assert!(parse_config(text).unwrap_err().to_string().contains("default rule does not fit"));
        let with_rule = format!("{text}\n[[rule.clauses]]\nwhen = [\"a>=2\"]\nadd = 1\n[[rule.bins]]\nupto = 0\ntarget = 1\n[[rule.bins]]\nfrom = 1\ntarget = 2\n");
        let c = parse_config(&with_rule).unwrap();
        assert_eq!(c.schema.len(), 1);
        assert_eq!(parse_config(&serialize_config(&c)).unwrap(), c);
    }

    #[test]
    fn sampling_weights_validated() {
        assert!(parse_config("[sampling.weights]\nr = [1.0, 1.0]\n").is_err());
        assert!(parse_config("[sampling.weights]\nzz = [1.0]\n").is_err());
        assert!(parse_config("[sampling.weights]\nis = [3.0, 1.0]\n").is_ok());
    }

    #[test]
    fn clutter_intensity_capped() {
        assert!(parse_config("[background]\nenabled = true\nintensity = [0.1, 0.5]\n").is_err());
        assert!(parse_config("[background]\nenabled = true\nintensity = [0.1, 0.2]\n").is_ok());
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = DatasetConfig::default();
        let b = DatasetConfig { seed: 1, ..a.clone() };
        assert_eq!(a.fingerprint(), DatasetConfig::default().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
