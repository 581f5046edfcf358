//! Event-sequence and tactic data model.
//!
//! A [`Dataset`] is a list of rallies, each an ordered list of multivariate
//! hits. A [`Pattern`] is a consecutive, value-nullable run of pattern events;
//! a [`Tactic`] is a pattern with an identity and a pinned flag. Hit indices
//! are 1-based wherever they cross an API boundary.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type FeatureId = usize;
pub type ValueId = u32;
pub type TacticId = u64;
pub type RallyId = u64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<Feature>,
}

impl FeatureSchema {
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        let schema = FeatureSchema { features };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::validation(None, "schema", "at least one feature is required"));
        }
        let mut names = HashSet::new();
        for f in &self.features {
            if f.values.len() < 2 {
                return Err(Error::validation(
                    None,
                    format!("schema.{}", f.name),
                    "a feature needs at least two values",
                ));
            }
            if !names.insert(f.name.as_str()) {
                return Err(Error::validation(None, "schema", format!("duplicate name '{}'", f.name)));
            }
            let mut seen = HashSet::new();
            for v in &f.values {
                if !seen.insert(v.as_str()) {
                    return Err(Error::validation(
                        None,
                        format!("schema.{}", f.name),
                        format!("duplicate value '{v}'"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Number of features per hit.
    pub fn k(&self) -> usize {
        self.features.len()
    }

    pub fn value_count(&self, feature: FeatureId) -> usize {
        self.features[feature].values.len()
    }

    pub fn feature_id(&self, name: &str) -> Option<FeatureId> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn value_id(&self, feature: FeatureId, name: &str) -> Option<ValueId> {
        self.features[feature].values.iter().position(|v| v == name).map(|v| v as ValueId)
    }

    pub fn value_name(&self, feature: FeatureId, value: ValueId) -> &str {
        &self.features[feature].values[value as usize]
    }

    /// Generic schema with features `f0..` and values `v0..`.
    pub fn synthetic(k: usize, values_per_feature: usize) -> Self {
        FeatureSchema {
            features: (0..k)
                .map(|f| Feature {
                    name: format!("f{f}"),
                    values: (0..values_per_feature).map(|v| format!("f{f}v{v}")).collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HitEvent {
    pub values: Vec<ValueId>,
}

impl HitEvent {
    pub fn new(values: Vec<ValueId>) -> Self {
        HitEvent { values }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rally {
    pub id: RallyId,
    pub events: Vec<HitEvent>,
    pub server: u8,
    pub winner: u8,
}

impl Rally {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    #[inline]
    pub fn value(&self, position: usize, feature: FeatureId) -> ValueId {
        self.events[position].values[feature]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub rallies: Vec<Rally>,
    pub focal_player: u8,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, rallies: Vec<Rally>, focal_player: u8) -> Result<Self> {
        let d = Dataset {
            schema,
            rallies,
            focal_player,
        };
        d.validate()?;
        Ok(d)
    }

    /// Checks every type invariant: schema well-formed, at least one rally,
    /// unique rally ids, non-empty rallies, players in {0, 1}, every event
    /// of length k with in-range value ids.
    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        if self.rallies.is_empty() {
            return Err(Error::validation(None, "rallies", "dataset has no rallies"));
        }
        if self.focal_player > 1 {
            return Err(Error::validation(None, "focal_player", "player must be 0 or 1"));
        }
        let k = self.schema.k();
        let mut ids = HashSet::new();
        for r in &self.rallies {
            if !ids.insert(r.id) {
                return Err(Error::validation(Some(r.id), "id", "duplicate rally id"));
            }
            if r.events.is_empty() {
                return Err(Error::validation(Some(r.id), "events", "empty rally"));
            }
            if r.server > 1 {
                return Err(Error::validation(Some(r.id), "server", "player must be 0 or 1"));
            }
            if r.winner > 1 {
                return Err(Error::validation(Some(r.id), "winner", "player must be 0 or 1"));
            }
            for (i, e) in r.events.iter().enumerate() {
                if e.values.len() != k {
                    return Err(Error::validation(
                        Some(r.id),
                        format!("events[{i}]"),
                        format!("expected {k} values, found {}", e.values.len()),
                    ));
                }
                for (f, &v) in e.values.iter().enumerate() {
                    if v as usize >= self.schema.value_count(f) {
                        return Err(Error::validation(
                            Some(r.id),
                            format!("events[{i}].{}", self.schema.features[f].name),
                            format!("value id {v} out of range"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.schema.k()
    }

    pub fn total_slots(&self) -> usize {
        self.rallies.iter().map(|r| r.len()).sum::<usize>() * self.k()
    }

    pub fn rally_index(&self) -> HashMap<RallyId, usize> {
        self.rallies.iter().enumerate().map(|(i, r)| (r.id, i)).collect()
    }

    pub fn rally(&self, id: RallyId) -> Option<&Rally> {
        self.rallies.iter().find(|r| r.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PatternEvent {
    pub slots: Vec<Option<ValueId>>,
}

impl PatternEvent {
    pub fn empty(k: usize) -> Self {
        PatternEvent { slots: vec![None; k] }
    }

    pub fn nonnull(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn is_all_null(&self) -> bool {
        self.slots.iter().all(|s| s.is_none())
    }

    pub fn from_hit(hit: &HitEvent) -> Self {
        PatternEvent {
            slots: hit.values.iter().map(|&v| Some(v)).collect(),
        }
    }
}

/// A consecutive, value-nullable multivariate pattern. Two tactics are the
/// same tactic exactly when their patterns are slot-wise equal.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pattern {
    events: Vec<PatternEvent>,
}

impl Pattern {
    /// Builds a pattern, rejecting empty patterns, ragged events and all-null
    /// boundary events.
    pub fn new(events: Vec<PatternEvent>) -> Result<Self> {
        let p = Pattern { events };
        p.check()?;
        Ok(p)
    }

    /// Builds a pattern after stripping all-null events from both ends.
    /// Returns `None` when nothing non-null is left.
    pub fn normalized(mut events: Vec<PatternEvent>) -> Option<Self> {
        while events.last().is_some_and(|e| e.is_all_null()) {
            events.pop();
        }
        let lead = events.iter().take_while(|e| e.is_all_null()).count();
        events.drain(..lead);
        if events.is_empty() {
            None
        } else {
            Some(Pattern { events })
        }
    }

    fn check(&self) -> Result<()> {
        let first = self
            .events
            .first()
            .ok_or_else(|| Error::validation(None, "tactic", "a tactic needs at least one event"))?;
        let k = first.slots.len();
        if k == 0 || self.events.iter().any(|e| e.slots.len() != k) {
            return Err(Error::validation(None, "tactic", "ragged pattern events"));
        }
        if first.is_all_null() || self.events.last().is_some_and(|e| e.is_all_null()) {
            return Err(Error::validation(None, "tactic", "boundary events must contain a non-null slot"));
        }
        Ok(())
    }

    pub fn check_schema(&self, schema: &FeatureSchema) -> Result<()> {
        if self.k() != schema.k() {
            return Err(Error::validation(None, "tactic", "pattern width differs from schema"));
        }
        for (_, f, v) in self.slots() {
            if v as usize >= schema.value_count(f) {
                return Err(Error::validation(None, "tactic", format!("value id {v} out of range for feature {f}")));
            }
        }
        Ok(())
    }

    /// A single-event pattern with one concrete slot.
    pub fn single(k: usize, feature: FeatureId, value: ValueId) -> Self {
        let mut e = PatternEvent::empty(k);
        e.slots[feature] = Some(value);
        Pattern { events: vec![e] }
    }

    /// The fully concrete pattern of `len` hits of `rally` starting at the
    /// 1-based index `start`.
    pub fn from_slice(rally: &Rally, start: usize, len: usize) -> Self {
        Pattern {
            events: rally.events[start - 1..start - 1 + len].iter().map(PatternEvent::from_hit).collect(),
        }
    }

    pub fn events(&self) -> &[PatternEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<PatternEvent> {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn k(&self) -> usize {
        self.events[0].slots.len()
    }

    pub fn get(&self, event: usize, feature: FeatureId) -> Option<ValueId> {
        self.events[event].slots[feature]
    }

    /// Concrete slots as `(event offset, feature, value)`.
    pub fn slots(&self) -> impl Iterator<Item = (usize, FeatureId, ValueId)> + '_ {
        self.events
            .iter()
            .enumerate()
            .flat_map(|(i, e)| e.slots.iter().enumerate().filter_map(move |(f, s)| s.map(|v| (i, f, v))))
    }

    pub fn nonnull(&self) -> usize {
        self.events.iter().map(PatternEvent::nonnull).sum()
    }

    pub fn null_slots(&self) -> usize {
        self.len() * self.k() - self.nonnull()
    }

    pub fn nonnull_per_feature(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.k()];
        for (_, f, _) in self.slots() {
            counts[f] += 1;
        }
        counts
    }

    /// True iff the pattern fits in `rally` at the 1-based `start` and every
    /// concrete slot equals the aligned rally value.
    pub fn matches_at(&self, rally: &Rally, start: usize) -> bool {
        if start == 0 || start + self.len() - 1 > rally.len() {
            return false;
        }
        let base = start - 1;
        self.events.iter().enumerate().all(|(i, e)| {
            let hit = &rally.events[base + i].values;
            e.slots.iter().zip(hit).all(|(s, v)| s.is_none_or(|s| s == *v))
        })
    }
}

impl fmt::Debug for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, e) in self.events.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "(")?;
            for (j, s) in e.slots.iter().enumerate() {
                if j > 0 {
                    write!(f, ",")?;
                }
                match s {
                    Some(v) => write!(f, "{v}")?,
                    None => write!(f, "_")?,
                }
            }
            write!(f, ")")?;
        }
        write!(f, "]")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tactic {
    pub id: TacticId,
    pub pattern: Pattern,
    #[serde(default)]
    pub pinned: bool,
}

impl Tactic {
    pub fn new(id: TacticId, pattern: Pattern) -> Self {
        Tactic {
            id,
            pattern,
            pinned: false,
        }
    }

    pub fn events(&self) -> &[PatternEvent] {
        self.pattern.events()
    }

    pub fn len(&self) -> usize {
        self.pattern.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pattern.is_empty()
    }
}

/// One occurrence of a tactic: rally id and 1-based start hit index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Usage {
    pub rally_id: RallyId,
    pub start: usize,
}

/// A tactic set together with the cover usages of each member.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TacticSet {
    pub tactics: Vec<Tactic>,
    pub usages: Vec<Vec<Usage>>,
}

impl TacticSet {
    pub fn len(&self) -> usize {
        self.tactics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tactics.is_empty()
    }

    pub fn get(&self, id: TacticId) -> Option<&Tactic> {
        self.tactics.iter().find(|t| t.id == id)
    }

    pub fn ids(&self) -> Vec<TacticId> {
        self.tactics.iter().map(|t| t.id).collect()
    }

    pub fn contains_pattern(&self, p: &Pattern) -> bool {
        self.tactics.iter().any(|t| &t.pattern == p)
    }
}

/// Whether tactic `t` occurs in `r` at the 1-based index `start`.
pub fn match_at(t: &Tactic, r: &Rally, start: usize) -> bool {
    t.pattern.matches_at(r, start)
}

/// Every match position of `pattern`, ordered by rally then start. Matches
/// may overlap.
pub fn enumerate_pattern_matches(pattern: &Pattern, d: &Dataset) -> Vec<Usage> {
    let mut out = Vec::new();
    for r in &d.rallies {
        if r.len() < pattern.len() {
            continue;
        }
        for start in 1..=r.len() + 1 - pattern.len() {
            if pattern.matches_at(r, start) {
                out.push(Usage { rally_id: r.id, start });
            }
        }
    }
    out
}

pub fn enumerate_matches(t: &Tactic, d: &Dataset) -> Vec<Usage> {
    enumerate_pattern_matches(&t.pattern, d)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn pat(events: &[&[Option<ValueId>]]) -> Pattern {
        Pattern::new(events.iter().map(|e| PatternEvent { slots: e.to_vec() }).collect()).unwrap()
    }

    pub fn rally(id: RallyId, events: &[&[ValueId]]) -> Rally {
        Rally {
            id,
            events: events.iter().map(|e| HitEvent::new(e.to_vec())).collect(),
            server: 0,
            winner: 0,
        }
    }

    const A: ValueId = 0;
    const B: ValueId = 1;

    #[test]
    fn null_matches_anything() {
        let t = Tactic::new(1, pat(&[&[Some(A), None]]));
        assert!(match_at(&t, &rally(1, &[&[A, B]]), 1));
    }

    #[test]
    fn too_short_rally_never_matches() {
        let t = Tactic::new(1, pat(&[&[Some(A), None], &[None, Some(B)], &[Some(A), None]]));
        let r = rally(1, &[&[A, B], &[A, B]]);
        assert!(!match_at(&t, &r, 1));
        assert!(!match_at(&t, &r, 0));
        assert!(!match_at(&t, &r, 3));
    }

    #[test]
    fn two_sequences_share_a_nullable_tactic() {
        // two features, three hits; four single values and two nulls
        let t = Tactic::new(
            1,
            pat(&[&[Some(0), Some(1)], &[Some(2), None], &[None, Some(0)]]),
        );
        let s1 = rally(1, &[&[1, 1], &[0, 1], &[2, 0], &[1, 0], &[0, 0]]);
        let s2 = rally(2, &[&[0, 1], &[2, 2], &[1, 0], &[2, 2]]);
        assert!(match_at(&t, &s1, 2));
        assert!(match_at(&t, &s2, 1));
        assert_eq!(enumerate_matches(&t, &Dataset::new(FeatureSchema::synthetic(2, 3), vec![s1, s2], 0).unwrap()).len(), 2);
    }

    #[test]
    fn full_rally_tactic_has_one_usage() {
        let r = rally(7, &[&[0, 1], &[1, 0]]);
        let d = Dataset::new(FeatureSchema::synthetic(2, 2), vec![r.clone()], 0).unwrap();
        let t = Tactic::new(1, Pattern::from_slice(&r, 1, 2));
        assert_eq!(enumerate_matches(&t, &d), vec![Usage { rally_id: 7, start: 1 }]);
    }

    #[test]
    fn overlapping_matches_are_all_reported() {
        let r = rally(3, &[&[A, 0], &[A, 1]]);
        let d = Dataset::new(FeatureSchema::synthetic(2, 2), vec![r], 0).unwrap();
        let t = Tactic::new(1, pat(&[&[Some(A), None]]));
        let starts: Vec<_> = enumerate_matches(&t, &d).iter().map(|u| u.start).collect();
        assert_eq!(starts, vec![1, 2]);
    }

    #[test]
    fn boundary_events_must_be_concrete() {
        let e = |s: &[Option<ValueId>]| PatternEvent { slots: s.to_vec() };
        assert!(Pattern::new(vec![e(&[None, None]), e(&[Some(0), None])]).is_err());
        assert!(Pattern::new(vec![e(&[Some(0), None]), e(&[None, None])]).is_err());
        assert!(Pattern::new(vec![e(&[Some(0), None]), e(&[None, None]), e(&[None, Some(1)])]).is_ok());
        assert!(Pattern::new(vec![]).is_err());
        let n = Pattern::normalized(vec![e(&[None, None]), e(&[Some(0), None]), e(&[None, None])]).unwrap();
        assert_eq!(n.len(), 1);
        assert!(Pattern::normalized(vec![e(&[None, None])]).is_none());
    }

    #[test]
    fn dataset_validation_names_the_rally() {
        let schema = FeatureSchema::synthetic(2, 2);
        let good = rally(1, &[&[0, 1]]);
        let mut ragged = rally(2, &[&[0, 1]]);
        ragged.events[0].values.pop();
        let err = Dataset::new(schema.clone(), vec![good.clone(), ragged], 0).unwrap_err();
        assert!(err.to_string().contains("rally 2"), "{err}");
        let empty = Rally {
            id: 5,
            events: vec![],
            server: 0,
            winner: 1,
        };
        let err = Dataset::new(schema.clone(), vec![good.clone(), empty], 0).unwrap_err();
        assert!(err.to_string().contains("empty rally") && err.to_string().contains("rally 5"));
        assert!(Dataset::new(schema.clone(), vec![], 0).is_err());
        let mut bad_winner = good.clone();
        bad_winner.winner = 2;
        assert!(Dataset::new(schema, vec![bad_winner], 0).is_err());
    }

    #[test]
    fn schema_rejects_degenerate_features() {
        assert!(FeatureSchema::new(vec![]).is_err());
        let f = |n: &str, v: &[&str]| Feature {
            name: n.into(),
            values: v.iter().map(|s| s.to_string()).collect(),
        };
        assert!(FeatureSchema::new(vec![f("a", &["x"])]).is_err());
        assert!(FeatureSchema::new(vec![f("a", &["x", "x"])]).is_err());
        assert!(FeatureSchema::new(vec![f("a", &["x", "y"]), f("a", &["p", "q"])]).is_err());
        assert!(FeatureSchema::new(vec![f("a", &["x", "y"]), f("b", &["x", "q"])]).is_ok());
    }
}
