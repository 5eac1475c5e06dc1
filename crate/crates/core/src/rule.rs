//! Declarative attribute -> target rules.
//!
//! A rule is an ordered list of clauses, each adding a signed integer to a
//! running score when its conjunction of predicates holds, followed by a
//! table of bins mapping the final score to a target class. Clauses that
//! share a group are alternatives (`if` / `else if`); exclusivity is checked
//! exhaustively over the schema grid when the rule is built.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{check_vector, default_schema, AttributeSchema, AttributeVector};

/// Refuse exhaustive enumeration beyond this many grid cells.
pub const MAX_GRID_CELLS: u64 = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Comparison {
    AtLeast,
    AtMost,
    Equal,
}

/// Atomic test `attr >= c`, `attr <= c` or `attr = c`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Predicate {
    pub attr: String,
    pub cmp: Comparison,
    pub value: i32,
}

impl Predicate {
    pub fn new(attr: &str, cmp: Comparison, value: i32) -> Self {
        Self {
            attr: attr.to_string(),
            cmp,
            value,
        }
    }

    pub fn holds(&self, v: &AttributeVector) -> bool {
        let Some(x) = v.get(&self.attr) else {
            return false;
        };
        match self.cmp {
            Comparison::AtLeast => x >= self.value,
            Comparison::AtMost => x <= self.value,
            Comparison::Equal => x == self.value,
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.cmp {
            Comparison::AtLeast => ">=",
            Comparison::AtMost => "<=",
            Comparison::Equal => "=",
        };
        write!(f, "{}{}{}", self.attr, op, self.value)
    }
}

impl FromStr for Predicate {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        let (attr, cmp, rest) = if let Some((a, r)) = s.split_once(">=") {
            (a, Comparison::AtLeast, r)
        } else if let Some((a, r)) = s.split_once("<=") {
            (a, Comparison::AtMost, r)
        } else if let Some((a, r)) = s.split_once("==") {
            (a, Comparison::Equal, r)
        } else if let Some((a, r)) = s.split_once('=') {
            (a, Comparison::Equal, r)
        } else {
            return Err(format!("predicate {s:?}: expected attr>=c, attr<=c or attr=c"));
        };
        let attr = attr.trim();
        if attr.is_empty() {
            return Err(format!("predicate {s:?}: missing attribute"));
        }
        let value = rest
            .trim()
            .parse::<i32>()
            .map_err(|_| format!("predicate {s:?}: {:?} is not an integer", rest.trim()))?;
        Ok(Predicate::new(attr, cmp, value))
    }
}

impl Serialize for Predicate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Predicate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Clause {
    pub when: Vec<Predicate>,
    pub add: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

impl Clause {
    pub fn new(when: Vec<Predicate>, add: i32, group: Option<&str>) -> Self {
        Self {
            when,
            add,
            group: group.map(str::to_string),
        }
    }

    pub fn fires(&self, v: &AttributeVector) -> bool {
        self.when.iter().all(|p| p.holds(v))
    }

    pub fn label(&self) -> String {
        let cond = self.when.iter().map(ToString::to_string).collect::<Vec<_>>().join("&");
        format!("{cond}:{:+}", self.add)
    }
}

/// Closed integer score interval, unbounded where an end is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bin {
    pub from: Option<i32>,
    pub to: Option<i32>,
    pub target: i32,
}

impl Bin {
    pub fn contains(&self, score: i64) -> bool {
        self.from.is_none_or(|lo| score >= lo as i64) && self.to.is_none_or(|hi| score <= hi as i64)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBin {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    upto: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    at: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    from: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    to: Option<i32>,
    target: i32,
}

impl Serialize for Bin {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut raw = RawBin {
            upto: None,
            at: None,
            from: None,
            to: None,
            target: self.target,
        };
        match (self.from, self.to) {
            (Some(a), Some(b)) if a == b => raw.at = Some(a),
            (None, Some(b)) => raw.upto = Some(b),
            (a, b) => {
                raw.from = a;
                raw.to = b;
            }
        }
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Bin {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = RawBin::deserialize(d)?;
        let (from, to) = match (raw.upto, raw.at, raw.from, raw.to) {
            (Some(u), None, None, None) => (None, Some(u)),
            (None, Some(a), None, None) => (Some(a), Some(a)),
            (None, None, f, t) => (f, t),
            _ => return Err(D::Error::custom("bin mixes `upto`/`at` with other bounds")),
        };
        Ok(Bin {
            from,
            to,
            target: raw.target,
        })
    }
}

/// Clause list plus score bins, bound to the schema it was checked against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetRule {
    schema: AttributeSchema,
    clauses: Vec<Clause>,
    bins: Vec<Bin>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RuleDocument {
    #[serde(default)]
    pub clauses: Vec<Clause>,
    pub bins: Vec<Bin>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FiredClause {
    pub index: usize,
    pub label: String,
    pub group: Option<String>,
    pub add: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RuleTrace {
    pub fired: Vec<FiredClause>,
    pub score: i64,
    pub target: i32,
}

impl TargetRule {
    /// Builds a rule, checking attribute references, bin partition and
    /// group exclusivity.
    pub fn new(schema: AttributeSchema, clauses: Vec<Clause>, bins: Vec<Bin>) -> Result<Self> {
        for (k, clause) in clauses.iter().enumerate() {
            if clause.when.is_empty() {
                return Err(Error::Rule(format!("clause {k} has an empty condition")));
            }
            for p in &clause.when {
                if schema.attribute(&p.attr).is_none() {
                    return Err(Error::Rule(format!(
                        "clause {k} references unknown attribute {:?}",
                        p.attr
                    )));
                }
            }
        }
        check_bins(&bins)?;
        let rule = Self {
            schema,
            clauses,
            bins,
        };
        rule.check_groups()?;
        Ok(rule)
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn bins(&self) -> &[Bin] {
        &self.bins
    }

    /// Distinct target classes named by the bins, ascending.
    pub fn target_classes(&self) -> Vec<i32> {
        let mut t: Vec<i32> = self.bins.iter().map(|b| b.target).collect();
        t.sort_unstable();
        t.dedup();
        t
    }

    pub fn evaluate(&self, v: &AttributeVector) -> Result<i32> {
        Ok(self.trace(v)?.target)
    }

    pub fn trace(&self, v: &AttributeVector) -> Result<RuleTrace> {
        check_vector(&self.schema, v)?;
        Ok(self.trace_unchecked(v))
    }

    fn trace_unchecked(&self, v: &AttributeVector) -> RuleTrace {
        let fired: Vec<FiredClause> = self
            .clauses
            .iter()
            .enumerate()
            .filter(|(_, c)| c.fires(v))
            .map(|(index, c)| FiredClause {
                index,
                label: c.label(),
                group: c.group.clone(),
                add: c.add,
            })
            .collect();
        let score = fired.iter().map(|f| f.add as i64).sum();
        RuleTrace {
            fired,
            score,
            target: self.bin_for(score),
        }
    }

    fn bin_for(&self, score: i64) -> i32 {
        self.bins
            .iter()
            .find(|b| b.contains(score))
            .map(|b| b.target)
            .expect("bins partition the integer line")
    }

    fn check_groups(&self) -> Result<()> {
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (k, c) in self.clauses.iter().enumerate() {
            if let Some(g) = &c.group {
                groups.entry(g.as_str()).or_default().push(k);
            }
        }
        for (group, members) in groups {
            if members.len() < 2 {
                continue;
            }
            // Only the attributes the group mentions can change which members fire.
            let mut attrs: Vec<&str> = members
                .iter()
                .flat_map(|&k| self.clauses[k].when.iter().map(|p| p.attr.as_str()))
                .collect();
            attrs.sort_unstable();
            attrs.dedup();
            let sub = AttributeSchema::new(
                self.schema
                    .attributes()
                    .iter()
                    .filter(|d| attrs.contains(&d.id.as_str()))
                    .cloned()
                    .collect(),
            )?;
            for partial in sub.grid() {
                let firing: Vec<usize> = members
                    .iter()
                    .copied()
                    .filter(|&k| self.clauses[k].fires(&partial))
                    .collect();
                if firing.len() > 1 {
                    let mut witness = AttributeVector::new();
                    for d in self.schema.attributes() {
                        witness.set(&d.id, partial.get(&d.id).unwrap_or(d.scale.min()));
                    }
                    return Err(Error::Rule(format!(
                        "group {group:?}: clauses {} and {} both fire for {witness}",
                        self.clauses[firing[0]].label(),
                        self.clauses[firing[1]].label(),
                    )));
                }
            }
        }
        Ok(())
    }

    /// Every target class some vector on the schema grid reaches, with the
    /// first such vector in grid order as witness.
    pub fn reachable_targets(&self) -> Result<BTreeMap<i32, AttributeVector>> {
        let cells = self.schema.grid_size().unwrap_or(u64::MAX);
        if cells > MAX_GRID_CELLS {
            return Err(Error::Rule(format!(
                "schema grid has {cells} cells, above the enumeration limit {MAX_GRID_CELLS}"
            )));
        }
        let mut out = BTreeMap::new();
        for v in self.schema.grid() {
            let target = self.trace_unchecked(&v).target;
            out.entry(target).or_insert(v);
        }
        Ok(out)
    }

    pub(crate) fn to_document(&self) -> RuleDocument {
        RuleDocument {
            clauses: self.clauses.clone(),
            bins: self.bins.clone(),
        }
    }

    pub(crate) fn from_document(doc: RuleDocument, schema: AttributeSchema) -> Result<Self> {
        Self::new(schema, doc.clauses, doc.bins)
    }
}

fn check_bins(bins: &[Bin]) -> Result<()> {
    if bins.is_empty() {
        return Err(Error::Rule("rule has no bins".into()));
    }
    for b in bins {
        if b.target < 1 {
            return Err(Error::Rule(format!("target class {} is not positive", b.target)));
        }
        if let (Some(lo), Some(hi)) = (b.from, b.to) {
            if lo > hi {
                return Err(Error::Rule(format!("bin [{lo}, {hi}] is empty")));
            }
        }
    }
    let lower = |b: &Bin| b.from.map_or(i64::MIN, i64::from);
    let mut sorted: Vec<&Bin> = bins.iter().collect();
    sorted.sort_by_key(|b| lower(b));
    if let Some(lo) = sorted[0].from {
        return Err(Error::Rule(format!("score {} maps to no bin", lo as i64 - 1)));
    }
    for pair in sorted.windows(2) {
        let (prev, next) = (pair[0], pair[1]);
        let next_lo = lower(next);
        let Some(prev_hi) = prev.to else {
            let at = next.from.or(next.to).unwrap_or(0);
            return Err(Error::Rule(format!("score {at} maps to 2 bins")));
        };
        let prev_hi = prev_hi as i64;
        if next_lo <= prev_hi {
            let at = if next_lo == i64::MIN { prev_hi } else { next_lo };
            return Err(Error::Rule(format!("score {at} maps to 2 bins")));
        }
        if next_lo > prev_hi + 1 {
            return Err(Error::Rule(format!("score {} maps to no bin", prev_hi + 1)));
        }
    }
    if let Some(hi) = sorted[sorted.len() - 1].to {
        return Err(Error::Rule(format!("score {} maps to no bin", hi as i64 + 1)));
    }
    Ok(())
}

/// The built-in nodule rule.
///
/// Roundness contributes with a sign set by internal structure: for `is=0`
/// oval nodules add 2 and round ones subtract 2, for `is=1` the other way
/// round. Spiculation and size push the score up, soft edges push it down,
/// and intensity adds a small correction at its extremes. Scores bin as
/// `<= -1 -> 1`, `0 -> 2`, `1..2 -> 3`, `3..4 -> 4`, `>= 5 -> 5`.
pub fn default_rule() -> TargetRule {
    use Comparison::*;
    let p = Predicate::new;
    let clauses = vec![
        Clause::new(vec![p("is", Equal, 0), p("r", AtLeast, 4)], 2, Some("roundness")),
        Clause::new(vec![p("is", Equal, 0), p("r", AtMost, 2)], -2, Some("roundness")),
        Clause::new(vec![p("is", Equal, 1), p("r", AtLeast, 4)], -2, Some("roundness")),
        Clause::new(vec![p("is", Equal, 1), p("r", AtMost, 2)], 2, Some("roundness")),
        Clause::new(vec![p("sp", AtLeast, 4)], 2, Some("spiculation")),
        Clause::new(vec![p("sp", AtMost, 2)], -2, Some("spiculation")),
        Clause::new(vec![p("es", AtLeast, 4)], -2, Some("edge_sharpness")),
        Clause::new(vec![p("es", AtMost, 2)], 2, Some("edge_sharpness")),
        Clause::new(vec![p("s", AtLeast, 4)], 2, Some("size")),
        Clause::new(vec![p("s", AtMost, 2)], -2, Some("size")),
        Clause::new(vec![p("i", Equal, 5)], -1, Some("intensity")),
        Clause::new(vec![p("i", AtMost, 2)], 1, Some("intensity")),
    ];
    let bins = vec![
        Bin { from: None, to: Some(-1), target: 1 },
        Bin { from: Some(0), to: Some(0), target: 2 },
        Bin { from: Some(1), to: Some(2), target: 3 },
        Bin { from: Some(3), to: Some(4), target: 4 },
        Bin { from: Some(5), to: None, target: 5 },
    ];
    TargetRule::new(default_schema(), clauses, bins).expect("built-in rule is well formed")
}

pub fn serialize_rule(rule: &TargetRule) -> String {
    toml::to_string(&rule.to_document()).expect("rule documents always serialize")
}

/// Parses a standalone rule document (`[[clauses]]` / `[[bins]]`) and checks
/// it against `schema`.
pub fn parse_rule(text: &str, schema: &AttributeSchema) -> Result<TargetRule> {
    let doc: RuleDocument =
        toml::from_str(text).map_err(|e| Error::Rule(e.to_string().trim_end().replace('\n', " | ")))?;
    TargetRule::from_document(doc, schema.clone())
}
