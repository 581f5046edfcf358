//! Polar projection of tactics. The angle comes from the two features a
//! tactic specifies most; the radius from a 1-D PCA of similarity vectors to
//! a fixed basis, fitted once and then frozen.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FeatureSchema, Pattern, PatternEvent, Tactic, TacticId};

pub const DEFAULT_BASIS_SIZE: usize = 10;
pub const MIN_RADIUS: f64 = 0.15;

fn substitution(a: &PatternEvent, b: &PatternEvent) -> f64 {
    let k = a.slots.len() as f64;
    let mut cost = 0.0;
    for (x, y) in a.slots.iter().zip(&b.slots) {
        cost += match (x, y) {
            (Some(x), Some(y)) if x != y => 1.0,
            (Some(_), None) | (None, Some(_)) => 0.5,
            _ => 0.0,
        };
    }
    cost / k
}

/// Event-level edit distance normalized by the longer length, in [0, 1].
pub fn tactic_distance(a: &Pattern, b: &Pattern) -> f64 {
    let (ea, eb) = (a.events(), b.events());
    let mut prev: Vec<f64> = (0..=eb.len()).map(|j| j as f64).collect();
    let mut cur = vec![0.0; eb.len() + 1];
    for i in 1..=ea.len() {
        cur[0] = i as f64;
        for j in 1..=eb.len() {
            let sub = prev[j - 1] + substitution(&ea[i - 1], &eb[j - 1]);
            cur[j] = sub.min(prev[j] + 1.0).min(cur[j - 1] + 1.0);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[eb.len()] / ea.len().max(eb.len()) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSet {
    pub tactics: Vec<Pattern>,
    pub names: Vec<String>,
}

impl BasisSet {
    pub fn new(tactics: Vec<Pattern>, names: Vec<String>) -> Result<Self> {
        if tactics.len() < 2 || names.len() != tactics.len() {
            return Err(Error::InvalidParams("a basis needs at least two named tactics".into()));
        }
        Ok(BasisSet { tactics, names })
    }

    pub fn from_tactics(tactics: &[Tactic]) -> Result<Self> {
        Self::new(
            tactics.iter().map(|t| t.pattern.clone()).collect(),
            tactics.iter().map(|t| format!("basis-{}", t.id)).collect(),
        )
    }

    /// Archetypes drawn from `tactics`: the shortest, the longest, the most
    /// specialized for each feature, then the most frequent, padded with
    /// single-value patterns up to `size` while distinct ones remain.
    pub fn archetypes(schema: &FeatureSchema, tactics: &[Tactic], freqs: &[usize], size: usize) -> Self {
        let size = size.max(2);
        let mut order: Vec<usize> = (0..tactics.len()).collect();
        order.sort_by_key(|&i| (std::cmp::Reverse(freqs.get(i).copied().unwrap_or(0)), tactics[i].id));
        let mut picks: Vec<usize> = Vec::new();
        let pick = |i: Option<usize>, picks: &mut Vec<usize>| {
            if let Some(i) = i {
                if picks.len() < size && !picks.iter().any(|&p| tactics[p].pattern == tactics[i].pattern) {
                    picks.push(i);
                }
            }
        };
        pick(order.iter().copied().min_by_key(|&i| tactics[i].len()), &mut picks);
        pick(order.iter().copied().max_by_key(|&i| (tactics[i].len(), std::cmp::Reverse(i))), &mut picks);
        for f in 0..schema.k() {
            let share = |i: usize| {
                let p = &tactics[i].pattern;
                p.nonnull_per_feature()[f] as f64 / p.nonnull() as f64
            };
            let best = order.iter().copied().filter(|&i| share(i) > 0.0).fold(None, |acc: Option<usize>, i| match acc {
                Some(b) if share(b) >= share(i) => Some(b),
                _ => Some(i),
            });
            pick(best, &mut picks);
        }
        for &i in &order {
            pick(Some(i), &mut picks);
        }
        let mut basis: Vec<Pattern> = picks.iter().map(|&i| tactics[i].pattern.clone()).collect();
        let mut names: Vec<String> = picks.iter().map(|&i| format!("tactic-{}", tactics[i].id)).collect();
        let k = schema.k();
        let max_values = (0..k).map(|f| schema.value_count(f)).max().unwrap_or(0);
        let mut v = 0;
        while basis.len() < size && (v as usize) < max_values {
            for f in 0..k {
                if basis.len() < size && (v as usize) < schema.value_count(f) {
                    let p = Pattern::single(k, f, v);
                    if !basis.contains(&p) {
                        names.push(format!("{}={}", schema.features[f].name, schema.value_name(f, v)));
                        basis.push(p);
                    }
                }
            }
            v += 1;
        }
        BasisSet { tactics: basis, names }
    }
}

/// Similarities to each basis tactic, scaled to unit length. A tactic
/// unlike every basis tactic maps to the uniform unit vector.
pub fn similarity_vector(t: &Pattern, basis: &BasisSet) -> Vec<f64> {
    let raw: Vec<f64> = basis.tactics.iter().map(|b| 1.0 - tactic_distance(t, b)).collect();
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= 1e-12 {
        let u = 1.0 / (raw.len() as f64).sqrt();
        return vec![u; raw.len()];
    }
    raw.iter().map(|x| x / norm).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionModel {
    pub basis: BasisSet,
    pub axis: Vec<f64>,
    pub center: Vec<f64>,
    pub radius_bounds: (f64, f64),
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub tactic_id: TacticId,
    pub angle: f64,
    pub radius: f64,
    pub freq: usize,
    pub importance: f64,
    pub win_rate: Option<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fits the frozen radius model on an initial tactic set. `freqs` is
/// parallel to `tactics` and fixes the axis sign: the most frequent tactic
/// projects nonnegative.
pub fn fit_projection(tactics: &[Tactic], freqs: &[usize], basis: BasisSet, k: usize) -> Result<ProjectionModel> {
    if tactics.is_empty() {
        return Err(Error::InvalidParams("cannot fit a projection on an empty tactic set".into()));
    }
    let b = basis.tactics.len();
    let vectors: Vec<Vec<f64>> = tactics.iter().map(|t| similarity_vector(&t.pattern, &basis)).collect();
    let m = vectors.len() as f64;
    let center: Vec<f64> = (0..b).map(|j| vectors.iter().map(|v| v[j]).sum::<f64>() / m).collect();
    let centered = DMatrix::from_fn(vectors.len(), b, |i, j| vectors[i][j] - center[j]);
    let cov = centered.transpose() * &centered / m;

    let mut axis = vec![0.0; b];
    axis[0] = 1.0;
    let distinct = vectors.iter().any(|v| v != &vectors[0]);
    if distinct {
        let eig = SymmetricEigen::new(cov);
        let (best, &lambda) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("non-empty basis");
        if lambda > 1e-12 {
            axis = eig.eigenvectors.column(best).iter().copied().collect();
            let norm = dot(&axis, &axis).sqrt();
            axis.iter_mut().for_each(|x| *x /= norm);
        }
    }
    let top = (0..tactics.len())
        .max_by_key(|&i| (freqs.get(i).copied().unwrap_or(0), std::cmp::Reverse(i)))
        .unwrap();
    let offset = |v: &[f64], axis: &[f64]| dot(&v.iter().zip(&center).map(|(x, c)| x - c).collect::<Vec<_>>(), axis);
    if offset(&vectors[top], &axis) < 0.0 {
        axis.iter_mut().for_each(|x| *x = -*x);
    }
    let projections: Vec<f64> = vectors.iter().map(|v| offset(v, &axis)).collect();
    let lo = projections.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = projections.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let radius_bounds = if hi - lo > 1e-12 { (lo, hi) } else { (lo - 1.0, lo + 1.0) };
    Ok(ProjectionModel {
        basis,
        axis,
        center,
        radius_bounds,
        k,
    })
}

impl ProjectionModel {
    /// A model for sessions without an initial tactic set: first basis
    /// direction as axis, unit bounds.
    pub fn fallback(basis: BasisSet, k: usize) -> Self {
        let b = basis.tactics.len();
        let mut axis = vec![0.0; b];
        axis[0] = 1.0;
        ProjectionModel {
            basis,
            axis,
            center: vec![0.0; b],
            radius_bounds: (0.0, 1.0),
            k,
        }
    }

    pub fn radius(&self, t: &Pattern) -> f64 {
        let v = similarity_vector(t, &self.basis);
        let x = dot(&v.iter().zip(&self.center).map(|(x, c)| x - c).collect::<Vec<_>>(), &self.axis);
        let (lo, hi) = self.radius_bounds;
        (MIN_RADIUS + (1.0 - MIN_RADIUS) * (x - lo) / (hi - lo)).clamp(MIN_RADIUS, 1.0)
    }

    pub fn angle(&self, t: &Pattern) -> f64 {
        polar_angle(&t.nonnull_per_feature())
    }

    pub fn project(&self, t: &Tactic, freq: usize, importance: f64, win_rate: Option<f64>) -> ProjectedPoint {
        ProjectedPoint {
            tactic_id: t.id,
            angle: self.angle(&t.pattern),
            radius: self.radius(&t.pattern),
            freq,
            importance,
            win_rate,
        }
    }
}

/// Primary feature (most non-null slots, ties to the lower id) and
/// secondary feature (next, same tie rule).
pub fn top_two(counts: &[u32]) -> (usize, Option<usize>) {
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by_key(|&f| (std::cmp::Reverse(counts[f]), f));
    (order[0], order.get(1).copied())
}

/// Angle in radians: the primary feature picks one of `k` equal sectors and
/// the secondary feature's rank among the others picks a subdivision.
pub fn polar_angle(counts: &[u32]) -> f64 {
    let k = counts.len();
    let sector = TAU / k as f64;
    let (primary, secondary) = top_two(counts);
    match secondary {
        None => sector * (primary as f64 + 0.5),
        Some(s) => {
            let rank = if s > primary { s - 1 } else { s };
            sector * primary as f64 + (rank as f64 + 0.5) * sector / (k - 1) as f64
        }
    }
}
