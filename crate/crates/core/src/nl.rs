//! Template-based parsing of natural-language suggestions into constraints.
//!
//! Text is lowercased and tokenized; typed entities (tactic references,
//! feature names, integers, numbers, ranges and directions) are recognized
//! and replaced by slot tokens; remaining words are mapped through the
//! synonym table and stopwords are dropped. Each template pattern is
//! scored against the result by a Dice coefficient over the longest
//! common subsequence, with slot tokens matching entities of their type.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::constraint::{Constraint, Direction};
use crate::error::{Error, Result};
use crate::model::{FeatureId, TacticId};

const BUILTIN: &str = include_str!("../templates.json");

/// Longest run of unknown words a feature slot may absorb.
const MAX_UNKNOWN_RUN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SlotKind {
    Tactics,
    Feature,
    Int,
    Num,
    Range,
    Direction,
}

impl SlotKind {
    fn from_placeholder(s: &str) -> Option<Self> {
        Some(match s {
            "TACTICS" => SlotKind::Tactics,
            "FEATURE" | "FEATURES" => SlotKind::Feature,
            "INT" => SlotKind::Int,
            "NUM" => SlotKind::Num,
            "RANGE" => SlotKind::Range,
            "DIRECTION" => SlotKind::Direction,
            _ => return None,
        })
    }
}

impl fmt::Display for SlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SlotKind::Tactics => "TACTICS",
            SlotKind::Feature => "FEATURE",
            SlotKind::Int => "INT",
            SlotKind::Num => "NUM",
            SlotKind::Range => "RANGE",
            SlotKind::Direction => "DIRECTION",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    /// One of the nine constraint variant names.
    pub variant: String,
    /// How parameters without a slot are filled: `serve`, `range`, `first`
    /// (IndexRange); `longer`, `shorter`, `at_least`, `range` (LengthRange);
    /// `number` (FeatureImportance).
    #[serde(default)]
    pub mode: Option<String>,
    /// Default importance for FeatureImportance.
    #[serde(default)]
    pub value: Option<f64>,
    /// Default direction for ExpandTactic and TrimTactic.
    #[serde(default)]
    pub direction: Option<Direction>,
    /// Canonical utterance, phrased for the example features.
    pub example: String,
    pub patterns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateBank {
    pub version: u32,
    pub threshold: f64,
    /// Feature names the examples are written for.
    pub example_features: Vec<String>,
    pub synonyms: BTreeMap<String, String>,
    pub stopwords: Vec<String>,
    pub templates: Vec<Template>,
}

impl TemplateBank {
    pub fn builtin() -> Self {
        serde_json::from_str(BUILTIN).expect("built-in template bank is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bank: TemplateBank = serde_json::from_str(text)?;
        bank.validate()?;
        Ok(bank)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != 1 {
            return Err(Error::FormatVersion(self.version));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidParams("threshold must lie in [0, 1]".into()));
        }
        for (i, t) in self.templates.iter().enumerate() {
            let bad = |m: String| Err(Error::InvalidParams(format!("template {i} ({}): {m}", t.variant)));
            if !Constraint::VARIANTS.contains(&t.variant.as_str()) {
                return bad("unknown variant".into());
            }
            if t.patterns.is_empty() {
                return bad("no patterns".into());
            }
            let required = required_slots(t).map_err(|m| Error::InvalidParams(format!("template {i}: {m}")))?;
            for p in &t.patterns {
                let kinds = placeholder_kinds(p)?;
                if let Some(k) = required.iter().find(|k| !kinds.contains(k)) {
                    return bad(format!("pattern '{p}' lacks slot {k}"));
                }
            }
        }
        Ok(())
    }
}

/// Slots a template's parameters cannot do without.
fn required_slots(t: &Template) -> std::result::Result<Vec<SlotKind>, String> {
    let mode = t.mode.as_deref();
    Ok(match (t.variant.as_str(), mode) {
        ("IndexRange", Some("serve")) => vec![],
        ("IndexRange", Some("range")) => vec![SlotKind::Range],
        ("IndexRange", Some("first")) => vec![SlotKind::Int],
        ("LengthRange", Some("longer" | "shorter")) => vec![],
        ("LengthRange", Some("at_least")) => vec![SlotKind::Int],
        ("LengthRange", Some("range")) => vec![SlotKind::Range],
        ("FeatureImportance", Some("number")) => vec![SlotKind::Feature, SlotKind::Num],
        ("FeatureImportance", None) if t.value.is_some() => vec![SlotKind::Feature],
        ("SplitByFeature" | "SpecifyFeature", None) => vec![SlotKind::Tactics, SlotKind::Feature],
        ("MergeTactics" | "DeleteTactic" | "ExpandTactic" | "TrimTactic", None) => vec![SlotKind::Tactics],
        (v, m) => return Err(format!("unsupported mode {m:?} for {v}")),
    })
}

fn placeholder_kinds(pattern: &str) -> Result<Vec<SlotKind>> {
    let mut out = Vec::new();
    let mut rest = pattern;
    while let Some(open) = rest.find('{') {
        let close = rest[open..]
            .find('}')
            .ok_or_else(|| Error::InvalidParams(format!("unclosed slot in '{pattern}'")))?;
        let name = &rest[open + 1..open + close];
        out.push(
            SlotKind::from_placeholder(name)
                .ok_or_else(|| Error::InvalidParams(format!("unknown slot {{{name}}} in '{pattern}'")))?,
        );
        rest = &rest[open + close + 1..];
    }
    Ok(out)
}

/// What the parser knows about the session.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParseContext {
    pub tactic_ids: Vec<TacticId>,
    /// Tactics "this tactic" and "selected" refer to.
    pub selected: Vec<TacticId>,
    pub features: Vec<String>,
    pub typical_length: usize,
    pub serve_window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSpan {
    pub slot: SlotKind,
    /// Byte range in the raw text.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedSuggestion {
    pub constraint: Constraint,
    pub confidence: f64,
    pub raw_text: String,
    /// The template pattern that matched.
    pub template: String,
    pub slot_spans: Vec<SlotSpan>,
}

#[derive(Debug, Clone, PartialEq)]
enum Entity {
    Tactics(Vec<TacticId>),
    Selected,
    Features(Vec<FeatureId>),
    Int(u64),
    Num(f64),
    Range(u64, u64),
    Direction(Direction),
}

impl Entity {
    fn kind(&self) -> SlotKind {
        match self {
            Entity::Tactics(_) | Entity::Selected => SlotKind::Tactics,
            Entity::Features(_) => SlotKind::Feature,
            Entity::Int(_) => SlotKind::Int,
            Entity::Num(_) => SlotKind::Num,
            Entity::Range(..) => SlotKind::Range,
            Entity::Direction(_) => SlotKind::Direction,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Raw {
    Word(String),
    Number { value: f64, int: bool },
    Dash,
    Placeholder(SlotKind),
}

#[derive(Debug, Clone)]
struct RawTok {
    raw: Raw,
    start: usize,
    end: usize,
}

fn tokenize(text: &str) -> Vec<RawTok> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let end_of = |i: usize| chars.get(i).map_or(text.len(), |c| c.0);
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        if c.is_alphabetic() {
            let mut j = i;
            while j < chars.len() && chars[j].1.is_alphanumeric() {
                j += 1;
            }
            let word: String = chars[i..j].iter().flat_map(|c| c.1.to_lowercase()).collect();
            out.push(RawTok {
                raw: Raw::Word(word),
                start,
                end: end_of(j),
            });
            i = j;
        } else if c.is_ascii_digit() {
            let mut j = i;
            while j < chars.len() && chars[j].1.is_ascii_digit() {
                j += 1;
            }
            let mut int = true;
            if j + 1 < chars.len() && chars[j].1 == '.' && chars[j + 1].1.is_ascii_digit() {
                int = false;
                j += 1;
                while j < chars.len() && chars[j].1.is_ascii_digit() {
                    j += 1;
                }
            }
            let s: String = chars[i..j].iter().map(|c| c.1).collect();
            out.push(RawTok {
                raw: Raw::Number {
                    value: s.parse().unwrap_or(0.0),
                    int,
                },
                start,
                end: end_of(j),
            });
            i = j;
        } else if c == '{' {
            let close = chars[i..].iter().position(|c| c.1 == '}').map(|p| i + p);
            let kind = close.and_then(|j| {
                let name: String = chars[i + 1..j].iter().map(|c| c.1).collect();
                SlotKind::from_placeholder(&name)
            });
            match (close, kind) {
                (Some(j), Some(kind)) => {
                    out.push(RawTok {
                        raw: Raw::Placeholder(kind),
                        start,
                        end: end_of(j + 1),
                    });
                    i = j + 1;
                }
                _ => i += 1,
            }
        } else {
            if c == '-' || c == '\u{2013}' {
                out.push(RawTok {
                    raw: Raw::Dash,
                    start,
                    end: end_of(i + 1),
                });
            }
            i += 1;
        }
    }
    out
}

fn number_word(w: &str) -> Option<u64> {
    let words = ["two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"];
    words.iter().position(|x| *x == w).map(|p| p as u64 + 2)
}

const BACK_PHRASES: &[&[&str]] = &[
    &["follow", "up"],
    &["following"],
    &["after"],
    &["afterwards"],
    &["next"],
    &["later"],
    &["back"],
    &["end"],
    &["last"],
    &["subsequent"],
    &["trailing"],
    &["final"],
];

const FRONT_PHRASES: &[&[&str]] = &[
    &["before"],
    &["preceding"],
    &["previous"],
    &["front"],
    &["beginning"],
    &["first"],
    &["earlier"],
    &["prior"],
    &["leading"],
];

const SELECTED_PHRASES: &[&[&str]] = &[
    &["this", "tactic"],
    &["this", "pattern"],
    &["this", "one"],
    &["these", "tactics"],
    &["these", "patterns"],
    &["these"],
    &["selected", "tactics"],
    &["selected", "tactic"],
    &["selected", "ones"],
    &["selected", "one"],
    &["the", "selection"],
    &["selected"],
];

fn is_tactic_word(w: &str) -> bool {
    matches!(w, "tactic" | "tactics" | "pattern" | "patterns")
}

/// An analyzed token: a normalized word or an entity slot.
#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Slot(SlotKind),
}

#[derive(Debug, Clone)]
struct Analyzed {
    toks: Vec<Tok>,
    /// Parallel to `toks`.
    entities: Vec<Option<Entity>>,
    spans: Vec<(usize, usize)>,
}

/// Compiled template bank.
#[derive(Debug, Clone)]
pub struct Parser {
    bank: TemplateBank,
    stopwords: HashSet<String>,
    vocabulary: HashSet<String>,
    /// Per template, per pattern.
    compiled: Vec<Vec<Vec<Tok>>>,
}

struct Alignment {
    score: f64,
    /// Input token index matched to each pattern slot, by kind.
    slots: Vec<(SlotKind, usize)>,
    /// Input token range absorbed by a feature slot without a feature.
    unknown: Option<(usize, usize)>,
    complete: bool,
}

impl Parser {
    pub fn new(bank: TemplateBank) -> Result<Self> {
        bank.validate()?;
        let stopwords: HashSet<String> = bank.stopwords.iter().cloned().collect();
        let mut vocabulary: HashSet<String> = bank.synonyms.values().cloned().collect();
        for t in &bank.templates {
            for p in &t.patterns {
                for tok in tokenize(p) {
                    if let Raw::Word(w) = tok.raw {
                        vocabulary.insert(bank.synonyms.get(&w).cloned().unwrap_or(w));
                    }
                }
            }
        }
        let mut parser = Parser {
            bank,
            stopwords,
            vocabulary,
            compiled: Vec::new(),
        };
        let empty = ParseContext::default();
        parser.compiled = parser
            .bank
            .templates
            .iter()
            .map(|t| t.patterns.iter().map(|p| parser.analyze(p, &empty).toks).collect())
            .collect();
        Ok(parser)
    }

    pub fn builtin() -> &'static Parser {
        static PARSER: OnceLock<Parser> = OnceLock::new();
        PARSER.get_or_init(|| Parser::new(TemplateBank::builtin()).expect("built-in template bank is valid"))
    }

    pub fn bank(&self) -> &TemplateBank {
        &self.bank
    }

    pub fn templates(&self) -> &[Template] {
        &self.bank.templates
    }

    fn normalize(&self, w: &str) -> String {
        if let Some(s) = self.bank.synonyms.get(w) {
            return s.clone();
        }
        if self.vocabulary.contains(w) {
            return w.to_string();
        }
        for suffix in ["ing", "ed", "es", "s", "d"] {
            if let Some(stem) = w.strip_suffix(suffix).filter(|s| s.len() >= 3) {
                for cand in [stem.to_string(), format!("{stem}e")] {
                    if let Some(s) = self.bank.synonyms.get(&cand) {
                        return s.clone();
                    }
                    if self.vocabulary.contains(&cand) {
                        return cand;
                    }
                }
            }
        }
        w.to_string()
    }

    fn analyze(&self, text: &str, ctx: &ParseContext) -> Analyzed {
        let raw = tokenize(text);
        // numbers joined by a dash form a range, a dash directly before a
        // number makes it negative; other dashes are dropped
        let mut items: Vec<(Raw, usize, usize)> = Vec::new();
        let mut ranges: Vec<Option<(u64, u64)>> = Vec::new();
        let mut i = 0;
        while i < raw.len() {
            let t = &raw[i];
            match (&t.raw, raw.get(i + 1), raw.get(i + 2)) {
                (Raw::Number { value: a, int: true }, Some(d), Some(n))
                    if d.raw == Raw::Dash && matches!(n.raw, Raw::Number { int: true, .. }) =>
                {
                    let Raw::Number { value: b, .. } = n.raw else { unreachable!() };
                    items.push((t.raw.clone(), t.start, n.end));
                    ranges.push(Some((*a as u64, b as u64)));
                    i += 3;
                    continue;
                }
                (Raw::Dash, Some(n), _)
                    if n.start == t.end
                        && !matches!(items.last(), Some((Raw::Number { .. }, ..)))
                        && matches!(n.raw, Raw::Number { .. }) =>
                {
                    let Raw::Number { value, .. } = n.raw else { unreachable!() };
                    items.push((Raw::Number { value: -value, int: false }, t.start, n.end));
                    ranges.push(None);
                    i += 2;
                    continue;
                }
                (Raw::Dash, ..) => {}
                _ => {
                    items.push((t.raw.clone(), t.start, t.end));
                    ranges.push(None);
                }
            }
            i += 1;
        }

        let word = |j: usize| match items.get(j) {
            Some((Raw::Word(w), ..)) => Some(w.as_str()),
            _ => None,
        };
        let int_at = |j: usize| match items.get(j) {
            Some((Raw::Number { value, int: true }, ..)) if ranges[j].is_none() => Some(*value as u64),
            Some((Raw::Word(w), ..)) => number_word(w),
            _ => None,
        };
        let phrase_len = |j: usize, phrases: &[&[&str]]| {
            phrases
                .iter()
                .filter(|p| p.iter().enumerate().all(|(o, w)| word(j + o) == Some(*w)))
                .map(|p| p.len())
                .max()
        };
        let feature_tokens: Vec<Vec<String>> = ctx
            .features
            .iter()
            .map(|name| {
                tokenize(name)
                    .into_iter()
                    .filter_map(|t| match t.raw {
                        Raw::Word(w) => Some(w),
                        Raw::Number { value, .. } => Some(value.to_string()),
                        _ => None,
                    })
                    .collect()
            })
            .collect();
        let feature_at = |j: usize| {
            let mut best: Option<(usize, FeatureId)> = None;
            for (f, toks) in feature_tokens.iter().enumerate() {
                let fits = !toks.is_empty()
                    && toks.iter().enumerate().all(|(o, ft)| {
                        word(j + o).is_some_and(|w| w == ft || (o + 1 == toks.len() && w == format!("{ft}s")))
                    });
                if fits && best.is_none_or(|(l, _)| toks.len() > l) {
                    best = Some((toks.len(), f));
                }
            }
            best
        };

        let mut out = Analyzed {
            toks: Vec::new(),
            entities: Vec::new(),
            spans: Vec::new(),
        };
        let push = |out: &mut Analyzed, e: Entity, from: usize, to: usize| {
            out.toks.push(Tok::Slot(e.kind()));
            out.entities.push(Some(e));
            out.spans.push((items[from].1, items[to].2));
        };
        let mut j = 0;
        while j < items.len() {
            if let (Raw::Placeholder(kind), s, e) = &items[j] {
                out.toks.push(Tok::Slot(*kind));
                out.entities.push(None);
                out.spans.push((*s, *e));
                j += 1;
                continue;
            }
            if let Some((a, b)) = ranges[j] {
                push(&mut out, Entity::Range(a.min(b), a.max(b)), j, j);
                j += 1;
                continue;
            }
            // between 2 and 4, from 2 to 4, 2 to 4
            let lead = usize::from(matches!(word(j), Some("between" | "from")));
            if let (Some(a), Some("and" | "to"), Some(b)) = (int_at(j + lead), word(j + lead + 1), int_at(j + lead + 2)) {
                if lead == 1 || word(j + 1) == Some("to") {
                    push(&mut out, Entity::Range(a.min(b), a.max(b)), j, j + lead + 2);
                    j += lead + 3;
                    continue;
                }
            }
            if word(j).is_some_and(is_tactic_word) {
                if let Some(first) = int_at(j + 1) {
                    let mut ids = vec![first];
                    let mut end = j + 1;
                    loop {
                        let mut k = end + 1;
                        if matches!(word(k), Some("and" | "or" | "plus")) {
                            k += 1;
                        } else if word(k) == Some("with") && word(k + 1).is_some_and(is_tactic_word) {
                            k += 1;
                        }
                        if word(k).is_some_and(is_tactic_word) {
                            k += 1;
                        }
                        match int_at(k) {
                            Some(id) => {
                                ids.push(id);
                                end = k;
                            }
                            None => break,
                        }
                    }
                    push(&mut out, Entity::Tactics(ids), j, end);
                    j = end + 1;
                    continue;
                }
            }
            if let Some(len) = phrase_len(j, SELECTED_PHRASES) {
                push(&mut out, Entity::Selected, j, j + len - 1);
                j += len;
                continue;
            }
            if let Some((len, f)) = feature_at(j) {
                let mut features = vec![f];
                let mut end = j + len - 1;
                loop {
                    let mut k = end + 1;
                    if matches!(word(k), Some("and" | "or")) {
                        k += 1;
                    }
                    match feature_at(k) {
                        Some((l, g)) => {
                            if !features.contains(&g) {
                                features.push(g);
                            }
                            end = k + l - 1;
                        }
                        None => break,
                    }
                }
                push(&mut out, Entity::Features(features), j, end);
                j = end + 1;
                continue;
            }
            if let Some(len) = phrase_len(j, BACK_PHRASES) {
                push(&mut out, Entity::Direction(Direction::Back), j, j + len - 1);
                j += len;
                continue;
            }
            if let Some(len) = phrase_len(j, FRONT_PHRASES) {
                push(&mut out, Entity::Direction(Direction::Front), j, j + len - 1);
                j += len;
                continue;
            }
            match &items[j].0 {
                Raw::Number { value, int } => {
                    let e = if *int { Entity::Int(*value as u64) } else { Entity::Num(*value) };
                    push(&mut out, e, j, j);
                }
                Raw::Word(w) => {
                    if let Some(n) = number_word(w) {
                        push(&mut out, Entity::Int(n), j, j);
                    } else if !self.stopwords.contains(w) {
                        let norm = self.normalize(w);
                        if !self.stopwords.contains(&norm) {
                            out.toks.push(Tok::Word(norm));
                            out.entities.push(None);
                            out.spans.push((items[j].1, items[j].2));
                        }
                    }
                }
                _ => {}
            }
            j += 1;
        }
        out
    }

    /// Dice-style alignment of input `a` against pattern `b`. With
    /// `wildcard`, a feature slot may absorb a short run of plain words,
    /// scored like a single token.
    fn align(a: &[Tok], b: &[Tok], wildcard: bool) -> Alignment {
        let (la, lb) = (a.len(), b.len());
        let eq = |x: &Tok, y: &Tok| match (x, y) {
            (Tok::Word(p), Tok::Word(q)) => p == q,
            (Tok::Slot(p), Tok::Slot(q)) => p == q || (*p == SlotKind::Int && *q == SlotKind::Num),
            _ => false,
        };
        // f[i][j]: best gain aligning a[i..] with b[j..]; choice codes:
        // 0 skip a, 1 skip b, 2 match, 2+L wildcard run of length L
        let mut f = vec![vec![0usize; lb + 1]; la + 1];
        let mut choice = vec![vec![0usize; lb + 1]; la + 1];
        for i in (0..=la).rev() {
            for j in (0..=lb).rev() {
                if i == la || j == lb {
                    choice[i][j] = if i == la { 1 } else { 0 };
                    continue;
                }
                let mut best = (f[i + 1][j], 0);
                if f[i][j + 1] > best.0 {
                    best = (f[i][j + 1], 1);
                }
                if eq(&a[i], &b[j]) && 2 + f[i + 1][j + 1] > best.0 {
                    best = (2 + f[i + 1][j + 1], 2);
                }
                if wildcard && b[j] == Tok::Slot(SlotKind::Feature) {
                    let mut l = 1;
                    while l <= MAX_UNKNOWN_RUN && i + l <= la && matches!(a[i + l - 1], Tok::Word(_)) {
                        // the run counts as one matched token; longer runs win ties
                        if 2 + f[i + l][j + 1] >= best.0 {
                            best = (2 + f[i + l][j + 1], 2 + l);
                        }
                        l += 1;
                    }
                }
                f[i][j] = best.0;
                choice[i][j] = best.1;
            }
        }
        let mut slots = Vec::new();
        let mut unknown = None;
        let (mut i, mut j) = (0, 0);
        while i < la && j < lb {
            match choice[i][j] {
                0 => i += 1,
                1 => j += 1,
                2 => {
                    if let Tok::Slot(k) = b[j] {
                        slots.push((k, i));
                    }
                    i += 1;
                    j += 1;
                }
                c => {
                    let l = c - 2;
                    unknown = Some((i, i + l));
                    i += l;
                    j += 1;
                }
            }
        }
        let wanted = b.iter().filter(|t| matches!(t, Tok::Slot(_))).count();
        let complete = slots.len() + usize::from(unknown.is_some()) == wanted;
        let total = la + lb;
        Alignment {
            score: if total == 0 { 0.0 } else { f[0][0] as f64 / total as f64 },
            slots,
            unknown,
            complete,
        }
    }

    /// Parses `text` into a constraint. Pure given the bank and `ctx`.
    pub fn parse(&self, text: &str, ctx: &ParseContext) -> Result<ParsedSuggestion> {
        let input = self.analyze(text, ctx);
        let has_feature = input.toks.contains(&Tok::Slot(SlotKind::Feature));
        // best complete alignment per template, and the best one that needs
        // an unknown feature name
        let mut best: Option<(f64, usize, usize, Alignment)> = None;
        let mut best_unknown: Option<(f64, Alignment)> = None;
        let mut nearest: Vec<(f64, usize)> = Vec::new();
        for (ti, patterns) in self.compiled.iter().enumerate() {
            let mut template_best = 0.0f64;
            for (pi, pattern) in patterns.iter().enumerate() {
                let al = Self::align(&input.toks, pattern, false);
                template_best = template_best.max(al.score);
                if al.complete && best.as_ref().is_none_or(|b| al.score > b.0) {
                    best = Some((al.score, ti, pi, al));
                }
                if !has_feature && pattern.contains(&Tok::Slot(SlotKind::Feature)) {
                    let al = Self::align(&input.toks, pattern, true);
                    if al.complete && al.unknown.is_some() && best_unknown.as_ref().is_none_or(|b| al.score > b.0) {
                        best_unknown = Some((al.score, al));
                    }
                }
            }
            nearest.push((template_best, ti));
        }
        let threshold = self.bank.threshold;
        let accepted = best.filter(|b| b.0 >= threshold);
        let Some((score, ti, pi, al)) = accepted else {
            if let Some((_, al)) = best_unknown.filter(|b| b.0 >= threshold) {
                let (from, to) = al.unknown.unwrap();
                let span = (input.spans[from].0, input.spans[to - 1].1);
                return Err(Error::UnknownReference(text[span.0..span.1].to_string()));
            }
            nearest.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            return Err(Error::Unparsed {
                nearest: nearest.iter().take(3).map(|&(_, i)| self.bank.templates[i].example.clone()).collect(),
            });
        };
        let template = &self.bank.templates[ti];
        let mut matched = al.slots.clone();
        // optional counts and directions are taken even when the pattern
        // has no place for them
        for kind in [SlotKind::Int, SlotKind::Direction] {
            if !matched.iter().any(|(k, _)| *k == kind) {
                let used: HashSet<usize> = matched.iter().map(|m| m.1).collect();
                let free = (0..input.toks.len()).find(|i| input.toks[*i] == Tok::Slot(kind) && !used.contains(i));
                if let Some(i) = free {
                    matched.push((kind, i));
                }
            }
        }
        let slot = |kind: SlotKind| {
            matched
                .iter()
                .find(|(k, _)| *k == kind)
                .map(|&(_, i)| (input.entities[i].clone().expect("slot token carries an entity"), i))
        };
        let span_text = |i: usize| text[input.spans[i].0..input.spans[i].1].to_string();
        let tactics = || -> Result<Vec<TacticId>> {
            let (e, i) = slot(SlotKind::Tactics).expect("required slot");
            let ids = match e {
                Entity::Tactics(ids) => ids,
                Entity::Selected => ctx.selected.clone(),
                _ => unreachable!(),
            };
            if ids.is_empty() {
                return Err(Error::UnknownReference(span_text(i)));
            }
            if let Some(id) = ids.iter().find(|id| !ctx.tactic_ids.contains(id)) {
                return Err(Error::UnknownReference(format!("tactic {id}")));
            }
            Ok(ids)
        };
        let features = || -> Vec<FeatureId> {
            match slot(SlotKind::Feature) {
                Some((Entity::Features(fs), _)) => fs,
                _ => unreachable!("required slot"),
            }
        };
        let int = || match slot(SlotKind::Int) {
            Some((Entity::Int(n), _)) => Some(n as usize),
            _ => None,
        };
        let range = || match slot(SlotKind::Range) {
            Some((Entity::Range(a, b), _)) => (a as usize, b as usize),
            _ => unreachable!("required slot"),
        };
        let direction = || match slot(SlotKind::Direction) {
            Some((Entity::Direction(d), _)) => d,
            _ => template.direction.unwrap_or(Direction::Back),
        };
        let mode = template.mode.as_deref();
        let constraint = match template.variant.as_str() {
            "IndexRange" => {
                let (lo, hi) = match mode {
                    Some("serve") => (1, ctx.serve_window.max(1)),
                    Some("first") => (1, int().unwrap_or(1)),
                    _ => range(),
                };
                Constraint::IndexRange { lo, hi }
            }
            "LengthRange" => {
                let typical = ctx.typical_length.max(1);
                let (min, max) = match mode {
                    Some("longer") => (typical + 1, None),
                    Some("shorter") => (1, Some(typical.saturating_sub(1).max(1))),
                    Some("at_least") => (int().unwrap_or(1), None),
                    _ => {
                        let (a, b) = range();
                        (a, Some(b))
                    }
                };
                Constraint::LengthRange { min, max }
            }
            "FeatureImportance" => {
                let value = match slot(SlotKind::Num) {
                    Some((Entity::Num(v), _)) => v,
                    Some((Entity::Int(n), _)) => n as f64,
                    _ => template.value.unwrap_or(0.5),
                };
                Constraint::FeatureImportance {
                    feature: features()[0],
                    value,
                }
            }
            "SplitByFeature" => Constraint::SplitByFeature {
                tactics: tactics()?,
                feature: features()[0],
            },
            "SpecifyFeature" => Constraint::SpecifyFeature {
                tactics: tactics()?,
                features: features(),
            },
            "MergeTactics" => Constraint::MergeTactics { tactics: tactics()? },
            "ExpandTactic" => Constraint::ExpandTactic {
                tactic: tactics()?[0],
                direction: direction(),
                hits: int().unwrap_or(1),
            },
            "TrimTactic" => Constraint::TrimTactic {
                tactic: tactics()?[0],
                direction: direction(),
                hits: int().unwrap_or(1),
            },
            "DeleteTactic" => Constraint::DeleteTactic { tactics: tactics()? },
            other => unreachable!("validated variant {other}"),
        };
        let slot_spans = matched
            .iter()
            .map(|&(kind, i)| SlotSpan {
                slot: kind,
                start: input.spans[i].0,
                end: input.spans[i].1,
            })
            .collect();
        Ok(ParsedSuggestion {
            constraint,
            confidence: score,
            raw_text: text.to_string(),
            template: template.patterns[pi].clone(),
            slot_spans,
        })
    }
}

/// Parses with the built-in template bank.
pub fn parse(text: &str, ctx: &ParseContext) -> Result<ParsedSuggestion> {
    Parser::builtin().parse(text, ctx)
}

/// The built-in template bank.
pub fn templates() -> &'static [Template] {
    Parser::builtin().templates()
}
