//! Attribute vocabulary: scales, rendering roles, and concrete attribute vectors.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value scale of one attribute. Ordinal scales are closed integer ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scale {
    Ordinal { min: i32, max: i32 },
    Binary,
}

impl Scale {
    pub fn min(&self) -> i32 {
        match *self {
            Scale::Ordinal { min, .. } => min,
            Scale::Binary => 0,
        }
    }

    pub fn max(&self) -> i32 {
        match *self {
            Scale::Ordinal { max, .. } => max,
            Scale::Binary => 1,
        }
    }

    pub fn contains(&self, value: i32) -> bool {
        (self.min()..=self.max()).contains(&value)
    }

    pub fn values(&self) -> std::ops::RangeInclusive<i32> {
        self.min()..=self.max()
    }

    pub fn cardinality(&self) -> usize {
        (self.max() - self.min() + 1) as usize
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, Scale::Binary)
    }
}

/// Which visual property of the nodule an attribute drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderRole {
    Roundness,
    Spiculation,
    EdgeSharpness,
    Size,
    Intensity,
    InternalStructure,
    /// Annotation-only: feeds the rule but not the image.
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawAttributeDef", into = "RawAttributeDef")]
pub struct AttributeDef {
    pub id: String,
    pub name: String,
    pub scale: Scale,
    pub role: RenderRole,
}

impl AttributeDef {
    pub fn new(id: &str, name: &str, scale: Scale, role: RenderRole) -> Self {
        Self {
            id: id.to_string(),
            name: name.to_string(),
            scale,
            role,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAttributeDef {
    id: String,
    #[serde(default)]
    name: String,
    scale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    min: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max: Option<i32>,
    #[serde(default = "default_role")]
    role: RenderRole,
}

fn default_role() -> RenderRole {
    RenderRole::None
}

impl TryFrom<RawAttributeDef> for AttributeDef {
    type Error = String;

    fn try_from(raw: RawAttributeDef) -> std::result::Result<Self, String> {
        let scale = match raw.scale.as_str() {
            "binary" => {
                if raw.min.is_some() || raw.max.is_some() {
                    return Err(format!("attribute {}: binary scale takes no min/max", raw.id));
                }
                Scale::Binary
            }
            "ordinal" => Scale::Ordinal {
                min: raw.min.unwrap_or(1),
                max: raw
                    .max
                    .ok_or_else(|| format!("attribute {}: ordinal scale needs max", raw.id))?,
            },
            other => return Err(format!("attribute {}: unknown scale {other:?}", raw.id)),
        };
        let name = if raw.name.is_empty() { raw.id.clone() } else { raw.name };
        Ok(AttributeDef {
            id: raw.id,
            name,
            scale,
            role: raw.role,
        })
    }
}

impl From<AttributeDef> for RawAttributeDef {
    fn from(def: AttributeDef) -> Self {
        let (scale, min, max) = match def.scale {
            Scale::Binary => ("binary", None, None),
            Scale::Ordinal { min, max } => ("ordinal", Some(min), Some(max)),
        };
        RawAttributeDef {
            id: def.id,
            name: def.name,
            scale: scale.to_string(),
            min,
            max,
            role: def.role,
        }
    }
}

/// Ordered, validated list of attribute definitions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct AttributeSchema {
    attributes: Vec<AttributeDef>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchema {
    attributes: Vec<AttributeDef>,
}

impl TryFrom<RawSchema> for AttributeSchema {
    type Error = String;

    fn try_from(raw: RawSchema) -> std::result::Result<Self, String> {
        AttributeSchema::new(raw.attributes).map_err(|e| e.to_string())
    }
}

impl From<AttributeSchema> for RawSchema {
    fn from(schema: AttributeSchema) -> Self {
        RawSchema {
            attributes: schema.attributes,
        }
    }
}

impl AttributeSchema {
    pub fn new(attributes: Vec<AttributeDef>) -> Result<Self> {
        if attributes.is_empty() {
            return Err(Error::config("schema.attributes", "schema needs at least one attribute"));
        }
        for (k, def) in attributes.iter().enumerate() {
            let path = format!("schema.attributes[{k}]");
            if def.id.is_empty() {
                return Err(Error::config(path, "attribute id is empty"));
            }
            if !def.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(Error::config(
                    path,
                    format!("attribute id {:?} must be alphanumeric or '_'", def.id),
                ));
            }
            if attributes[..k].iter().any(|d| d.id == def.id) {
                return Err(Error::config(path, format!("duplicate attribute id {:?}", def.id)));
            }
            if let Scale::Ordinal { min, max } = def.scale {
                if min < 1 || max < min {
                    return Err(Error::config(
                        path,
                        format!("ordinal scale needs max >= min >= 1, got {min}..{max}"),
                    ));
                }
            }
            if def.role != RenderRole::None
                && attributes[..k].iter().any(|d| d.role == def.role)
            {
                return Err(Error::config(
                    path,
                    format!("render role {:?} assigned twice", def.role),
                ));
            }
        }
        Ok(Self { attributes })
    }

    pub fn attributes(&self) -> &[AttributeDef] {
        &self.attributes
    }

    pub fn attribute(&self, id: &str) -> Option<&AttributeDef> {
        self.attributes.iter().find(|d| d.id == id)
    }

    pub fn by_role(&self, role: RenderRole) -> Option<&AttributeDef> {
        if role == RenderRole::None {
            return None;
        }
        self.attributes.iter().find(|d| d.role == role)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.attributes.iter().map(|d| d.id.as_str())
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    /// Number of distinct attribute vectors, or `None` on overflow.
    pub fn grid_size(&self) -> Option<u64> {
        self.attributes
            .iter()
            .try_fold(1u64, |acc, d| acc.checked_mul(d.scale.cardinality() as u64))
    }

    /// Row-major enumeration of every vector on the schema grid; the last
    /// attribute varies fastest.
    pub fn grid(&self) -> GridIter<'_> {
        GridIter {
            schema: self,
            current: Some(self.attributes.iter().map(|d| d.scale.min()).collect()),
        }
    }
}

impl Default for AttributeSchema {
    fn default() -> Self {
        default_schema()
    }
}

pub struct GridIter<'a> {
    schema: &'a AttributeSchema,
    current: Option<Vec<i32>>,
}

impl Iterator for GridIter<'_> {
    type Item = AttributeVector;

    fn next(&mut self) -> Option<AttributeVector> {
        let values = self.current.as_mut()?;
        let out = AttributeVector::from_pairs(
            self.schema
                .attributes
                .iter()
                .zip(values.iter())
                .map(|(d, &v)| (d.id.as_str(), v)),
        );
        let mut k = values.len();
        loop {
            if k == 0 {
                self.current = None;
                break;
            }
            k -= 1;
            let scale = self.schema.attributes[k].scale;
            if values[k] < scale.max() {
                values[k] += 1;
                break;
            }
            values[k] = scale.min();
        }
        Some(out)
    }
}

/// The six-attribute nodule schema: r, sp, es, s, i on 1..5 and binary is.
pub fn default_schema() -> AttributeSchema {
    let ordinal = Scale::Ordinal { min: 1, max: 5 };
    AttributeSchema {
        attributes: vec![
            AttributeDef::new("r", "roundness", ordinal, RenderRole::Roundness),
            AttributeDef::new("sp", "spiculation", ordinal, RenderRole::Spiculation),
            AttributeDef::new("es", "edge sharpness", ordinal, RenderRole::EdgeSharpness),
            AttributeDef::new("s", "size", ordinal, RenderRole::Size),
            AttributeDef::new("i", "intensity", ordinal, RenderRole::Intensity),
            AttributeDef::new("is", "internal structure", Scale::Binary, RenderRole::InternalStructure),
        ],
    }
}

/// One concrete value per attribute id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeVector(BTreeMap<String, i32>);

impl AttributeVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, i32)>) -> Self {
        Self(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }

    pub fn get(&self, id: &str) -> Option<i32> {
        self.0.get(id).copied()
    }

    pub fn set(&mut self, id: &str, value: i32) {
        self.0.insert(id.to_string(), value);
    }

    pub fn with(mut self, id: &str, value: i32) -> Self {
        self.set(id, value);
        self
    }

    pub fn remove(&mut self, id: &str) -> Option<i32> {
        self.0.remove(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, i32)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for AttributeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, (id, v)) in self.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{id}:{v}")?;
        }
        f.write_str("}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Missing(String),
    Extra(String),
    BelowMin { id: String, value: i32, min: i32 },
    AboveMax { id: String, value: i32, max: i32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Missing(id) => write!(f, "missing attribute {id}"),
            Violation::Extra(id) => write!(f, "unknown attribute {id}"),
            Violation::BelowMin { id, value, min } => {
                write!(f, "{id} below scale minimum ({value} < {min})")
            }
            Violation::AboveMax { id, value, max } => {
                write!(f, "{id} above scale maximum ({value} > {max})")
            }
        }
    }
}

/// Every way `v` fails to match `schema`; empty when the vector is valid.
pub fn validate_vector(schema: &AttributeSchema, v: &AttributeVector) -> Vec<Violation> {
    let mut out = Vec::new();
    for def in schema.attributes() {
        match v.get(&def.id) {
            None => out.push(Violation::Missing(def.id.clone())),
            Some(value) if value < def.scale.min() => out.push(Violation::BelowMin {
                id: def.id.clone(),
                value,
                min: def.scale.min(),
            }),
            Some(value) if value > def.scale.max() => out.push(Violation::AboveMax {
                id: def.id.clone(),
                value,
                max: def.scale.max(),
            }),
            Some(_) => {}
        }
    }
    for (id, _) in v.iter() {
        if schema.attribute(id).is_none() {
            out.push(Violation::Extra(id.to_string()));
        }
    }
    out
}

/// [`validate_vector`] as a `Result`.
pub fn check_vector(schema: &AttributeSchema, v: &AttributeVector) -> Result<()> {
    let violations = validate_vector(schema, v);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidVector(violations))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1_first() -> AttributeVector {
        AttributeVector::from_pairs([("r", 3), ("sp", 1), ("es", 1), ("s", 1), ("i", 1), ("is", 1)])
    }

    #[test]
    fn default_schema_matches_attribute_table() {
        let schema = default_schema();
        assert_eq!(schema.ids().collect::<Vec<_>>(), ["r", "sp", "es", "s", "i", "is"]);
        assert_eq!(schema.attribute("is").unwrap().scale, Scale::Binary);
        assert_eq!(schema.attribute("r").unwrap().scale, Scale::Ordinal { min: 1, max: 5 });
        assert_eq!(default_schema(), default_schema());
    }

    #[test]
    fn validate_accepts_table_sample() {
        assert!(validate_vector(&default_schema(), &table1_first()).is_empty());
    }

    #[test]
    fn validate_reports_each_violation() {
        let schema = default_schema();
        let v = table1_first().with("r", 0);
        let errs = validate_vector(&schema, &v);
        assert_eq!(errs.len(), 1);
        assert!(errs[0].to_string().starts_with("r below scale minimum"));

        let mut v = table1_first();
        v.remove("is");
        v.set("zz", 1);
        let msgs: Vec<String> = validate_vector(&schema, &v).iter().map(|e| e.to_string()).collect();
        assert_eq!(msgs, ["missing attribute is", "unknown attribute zz"]);

        let errs = validate_vector(&schema, &table1_first().with("is", 2));
        assert!(matches!(errs[..], [Violation::AboveMax { .. }]));
    }

    #[test]
    fn schema_rejects_bad_definitions() {
        let ord = Scale::Ordinal { min: 1, max: 5 };
        let dup = vec![
            AttributeDef::new("a", "a", ord, RenderRole::None),
            AttributeDef::new("a", "b", ord, RenderRole::None),
        ];
        assert!(AttributeSchema::new(dup).is_err());
        let roles = vec![
            AttributeDef::new("a", "a", ord, RenderRole::Size),
            AttributeDef::new("b", "b", ord, RenderRole::Size),
        ];
        assert!(AttributeSchema::new(roles).is_err());
        let none_twice = vec![
            AttributeDef::new("a", "a", ord, RenderRole::None),
            AttributeDef::new("b", "b", Scale::Binary, RenderRole::None),
        ];
        assert!(AttributeSchema::new(none_twice).is_ok());
        let bad = vec![AttributeDef::new("a", "a", Scale::Ordinal { min: 0, max: 3 }, RenderRole::None)];
        assert!(AttributeSchema::new(bad).is_err());
        let inverted = vec![AttributeDef::new("a", "a", Scale::Ordinal { min: 4, max: 3 }, RenderRole::None)];
        assert!(AttributeSchema::new(inverted).is_err());
        assert!(AttributeSchema::new(vec![AttributeDef::new("", "", ord, RenderRole::None)]).is_err());
    }

    #[test]
    fn grid_enumerates_every_vector_once() {
        let schema = default_schema();
        assert_eq!(schema.grid_size(), Some(6250));
        let all: Vec<_> = schema.grid().collect();
        assert_eq!(all.len(), 6250);
        let unique: std::collections::BTreeSet<_> = all.iter().collect();
        assert_eq!(unique.len(), 6250);
        assert!(all.iter().all(|v| validate_vector(&schema, v).is_empty()));
    }
}
