//! Cover semantics, description length, scores and per-tactic statistics.
//!
//! The cover is a deterministic greedy assignment: inside each rally the
//! candidate usages of all tactics are ranked by (more non-null slots, longer
//! tactic, lower start index, lower tactic id) and accepted when they do not
//! overlap an already accepted usage at hit granularity. Value slots not
//! covered by a concrete tactic slot are residual single values.

use std::cmp::Reverse;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::CoverEngine;
use crate::error::{Error, Result};
use crate::model::{Dataset, FeatureId, Tactic, Usage};

/// Inclusive bounds on tactic length; `max = None` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthRange {
    pub min: usize,
    pub max: Option<usize>,
}

impl LengthRange {
    pub fn contains(&self, len: usize) -> bool {
        len >= self.min && self.max.is_none_or(|m| len <= m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    pub alpha: f64,
    pub beta: f64,
    /// 1-based inclusive bounds on a usage's start index.
    #[serde(default)]
    pub index_range: Option<(usize, usize)>,
    #[serde(default)]
    pub length_range: Option<LengthRange>,
    /// Per-feature importance in [-1, 1]; absent features weigh 0.
    #[serde(default)]
    pub importance: BTreeMap<FeatureId, f64>,
}

impl Default for MetricParams {
    fn default() -> Self {
        MetricParams {
            alpha: 1.0,
            beta: 1.0,
            index_range: None,
            length_range: None,
            importance: BTreeMap::new(),
        }
    }
}

impl MetricParams {
    pub fn with_weights(alpha: f64, beta: f64) -> Self {
        MetricParams {
            alpha,
            beta,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::InvalidParams("alpha and beta must be nonnegative".into()));
        }
        if let Some((lo, hi)) = self.index_range {
            if lo == 0 || lo > hi {
                return Err(Error::InvalidParams(format!("bad index range {lo}..{hi}")));
            }
        }
        if let Some(r) = self.length_range {
            if r.min == 0 || r.max.is_some_and(|m| m < r.min) {
                return Err(Error::InvalidParams(format!("bad length range {r:?}")));
            }
        }
        if self.importance.values().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::InvalidParams("importance must lie in [-1, 1]".into()));
        }
        Ok(())
    }

    pub fn feature_importance(&self, f: FeatureId) -> f64 {
        self.importance.get(&f).copied().unwrap_or(0.0)
    }

    pub fn index_in_range(&self, start: usize) -> bool {
        self.index_range.is_none_or(|(lo, hi)| (lo..=hi).contains(&start))
    }

    /// 0 when the length is acceptable, 1 otherwise.
    pub fn len_con(&self, len: usize) -> f64 {
        match self.length_range {
            Some(r) if !r.contains(len) => 1.0,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverResult {
    /// Accepted usages per tactic, parallel to the tactic list.
    pub usages: Vec<Vec<Usage>>,
    /// Per rally, per feature: slots not covered by a concrete tactic slot.
    pub residual_counts: Vec<Vec<u32>>,
    pub freq: Vec<usize>,
}

impl CoverResult {
    pub fn total_residual(&self) -> usize {
        self.residual_counts.iter().flatten().map(|&c| c as usize).sum()
    }
}

/// Cover priority of a tactic; smaller sorts first.
pub(crate) fn priority(t: &Tactic) -> (Reverse<usize>, Reverse<usize>, u64) {
    (Reverse(t.pattern.nonnull()), Reverse(t.len()), t.id)
}

pub fn cover(d: &Dataset, tactics: &[Tactic]) -> CoverResult {
    let k = d.k();
    let mut usages = vec![Vec::new(); tactics.len()];
    let mut residual_counts = Vec::with_capacity(d.rallies.len());
    for r in &d.rallies {
        let mut candidates = Vec::new();
        for (i, t) in tactics.iter().enumerate() {
            if t.len() > r.len() {
                continue;
            }
            for start in (1..=r.len() + 1 - t.len()).filter(|&s| t.pattern.matches_at(r, s)) {
                let (nonnull, len, id) = priority(t);
                candidates.push(((nonnull, len, start, id), i));
            }
        }
        candidates.sort();
        let mut taken = vec![false; r.len()];
        let mut covered = vec![0u32; k];
        for ((_, _, start, _), i) in candidates {
            let t = &tactics[i];
            let span = start - 1..start - 1 + t.len();
            if taken[span.clone()].iter().any(|&x| x) {
                continue;
            }
            taken[span].iter_mut().for_each(|x| *x = true);
            for (_, f, _) in t.pattern.slots() {
                covered[f] += 1;
            }
            usages[i].push(Usage { rally_id: r.id, start });
        }
        residual_counts.push(covered.iter().map(|&c| r.len() as u32 - c).collect());
    }
    for u in &mut usages {
        u.sort();
    }
    let freq = usages.iter().map(Vec::len).collect();
    CoverResult {
        usages,
        residual_counts,
        freq,
    }
}

/// The constraint-parameterized description length L*(S, T). With no index
/// range, no length range and zero importances this is
/// `|T| + alpha * sum(freq) + beta * sum(residual)`.
pub fn description_length(c: &CoverResult, tactics: &[Tactic], p: &MetricParams) -> f64 {
    let mut usage_term = 0.0;
    for (t, usages) in tactics.iter().zip(&c.usages) {
        let freq = usages.len() as f64;
        if usages.is_empty() {
            continue;
        }
        let out_of_range = usages.iter().filter(|u| !p.index_in_range(u.start)).count() as f64;
        let idx_con = out_of_range / freq;
        usage_term += freq * (1.0 + idx_con + p.len_con(t.len()));
    }
    let mut residual_term = 0.0;
    for per_feature in &c.residual_counts {
        for (f, &n) in per_feature.iter().enumerate() {
            residual_term += n as f64 * (1.0 + p.feature_importance(f));
        }
    }
    tactics.len() as f64 + p.alpha * usage_term + p.beta * residual_term
}

/// L*(S, T) computed from scratch.
pub fn dl_of(d: &Dataset, tactics: &[Tactic], p: &MetricParams) -> f64 {
    description_length(&cover(d, tactics), tactics, p)
}

/// Score of the set, `L*(S, {}) - L*(S, T)`, and the importance of each
/// member, `L*(S, T - t) - L*(S, T)`. Positive importance means the tactic
/// pays for itself.
pub fn score_and_importance(d: &Dataset, tactics: &[Tactic], p: &MetricParams) -> (f64, Vec<f64>) {
    let engine = CoverEngine::new(d, p.clone(), tactics.to_vec());
    let score = engine.empty_dl() - engine.dl();
    let importance = engine.slots().map(|s| engine.delta_remove(s)).collect();
    (score, importance)
}

/// Score, cover usages and importance of every tactic of a set, parallel to
/// the input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub dl: f64,
    pub score: f64,
    pub usages: Vec<Vec<Usage>>,
    pub importance: Vec<f64>,
}

impl Evaluation {
    pub fn stats(&self, d: &Dataset, i: usize) -> TacticStats {
        tactic_stats(d, &self.usages[i], self.importance[i])
    }
}

pub fn evaluate(d: &Dataset, tactics: &[Tactic], p: &MetricParams) -> Evaluation {
    let engine = CoverEngine::new(d, p.clone(), tactics.to_vec());
    Evaluation {
        dl: engine.dl(),
        score: engine.empty_dl() - engine.dl(),
        usages: engine.slots().map(|s| engine.usages(s)).collect(),
        importance: engine.slots().map(|s| engine.delta_remove(s)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TacticStats {
    pub freq: usize,
    /// `None` when the tactic has no usage.
    pub win_rate: Option<f64>,
    pub importance: f64,
    /// Start index -> (wins, losses) for the focal player.
    pub index_histogram: BTreeMap<usize, (usize, usize)>,
}

pub fn tactic_stats(d: &Dataset, usages: &[Usage], importance: f64) -> TacticStats {
    let index = d.rally_index();
    let mut histogram: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut wins = 0;
    for u in usages {
        let won = d.rallies[index[&u.rally_id]].winner == d.focal_player;
        let bucket = histogram.entry(u.start).or_default();
        if won {
            wins += 1;
            bucket.0 += 1;
        } else {
            bucket.1 += 1;
        }
    }
    TacticStats {
        freq: usages.len(),
        win_rate: (!usages.is_empty()).then(|| wins as f64 / usages.len() as f64),
        importance,
        index_histogram: histogram,
    }
}
