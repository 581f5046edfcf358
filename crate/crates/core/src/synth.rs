//! Synthetic rally datasets with planted tactics, and the constraint batch
//! used by the runtime benchmark.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraint::{Constraint, Direction};
use crate::error::{Error, Result};
use crate::io::{Embedding, GroundTruthFile, RawTactic, FORMAT_VERSION};
use crate::model::{Dataset, FeatureSchema, HitEvent, Pattern, PatternEvent, Rally, Tactic, Usage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub n_sequences: usize,
    pub sequence_length: usize,
    pub n_features: usize,
    pub n_tactics: usize,
    pub values_per_feature: usize,
    #[serde(default = "default_embed_fraction")]
    pub embed_fraction: f64,
    #[serde(default = "default_tactic_length")]
    pub tactic_length: usize,
    #[serde(default = "default_tactic_nonnull")]
    pub tactic_nonnull: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_embed_fraction() -> f64 {
    0.1
}

fn default_tactic_length() -> usize {
    3
}

fn default_tactic_nonnull() -> usize {
    7
}

impl SynthParams {
    pub fn new(n_sequences: usize, sequence_length: usize, n_features: usize, n_tactics: usize, values: usize) -> Self {
        SynthParams {
            n_sequences,
            sequence_length,
            n_features,
            n_tactics,
            values_per_feature: values,
            embed_fraction: default_embed_fraction(),
            tactic_length: default_tactic_length(),
            tactic_nonnull: default_tactic_nonnull(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if self.n_sequences == 0 || self.sequence_length == 0 || self.n_features == 0 {
            return bad("sequences, length and features must be positive");
        }
        if self.values_per_feature < 2 {
            return bad("each feature needs at least two values");
        }
        if !(self.embed_fraction > 0.0 && self.embed_fraction <= 1.0) {
            return bad("embed_fraction must lie in (0, 1]");
        }
        if self.n_tactics > 0 {
            if self.tactic_length == 0 || self.tactic_length > self.sequence_length {
                return bad("tactic longer than sequence");
            }
            let slots = self.tactic_length * self.n_features;
            let needed = if self.tactic_length > 1 { 2 } else { 1 };
            if self.tactic_nonnull > slots || self.tactic_nonnull < needed {
                return bad("tactic_nonnull does not fit the tactic shape");
            }
        }
        Ok(())
    }

    /// Number of sequences each tactic is embedded into.
    pub fn embed_count(&self) -> usize {
        ((self.embed_fraction * self.n_sequences as f64).ceil() as usize).min(self.n_sequences)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub dataset: Dataset,
    pub planted: Vec<Tactic>,
    /// Per planted tactic, the embeddings still intact after all writes.
    pub embeddings: Vec<Embedding>,
}

impl SynthData {
    pub fn ground_truth(&self) -> GroundTruthFile {
        GroundTruthFile {
            version: FORMAT_VERSION,
            schema: self.dataset.schema.clone(),
            tactics: self.planted.iter().map(|t| RawTactic::from_tactic(t, &self.dataset.schema)).collect(),
            embeddings: self.embeddings.clone(),
        }
    }
}

fn random_tactic(rng: &mut ChaCha8Rng, p: &SynthParams) -> Pattern {
    let k = p.n_features;
    let len = p.tactic_length;
    loop {
        let positions = index::sample(rng, len * k, p.tactic_nonnull);
        let mut events = vec![PatternEvent::empty(k); len];
        for pos in positions.iter() {
            events[pos / k].slots[pos % k] = Some(rng.gen_range(0..p.values_per_feature) as u32);
        }
        if !events[0].is_all_null() && !events[len - 1].is_all_null() {
            return Pattern::new(events).expect("boundary events are non-null");
        }
    }
}

/// Random sequences with `n_tactics` random tactics written into
/// `embed_fraction` of them. Rallies carrying tactic `i` are won by the
/// focal player with probability `0.5 + 0.4` for even `i`, `0.5 - 0.4` for
/// odd `i`.
pub fn generate(p: &SynthParams) -> Result<SynthData> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let k = p.n_features;
    let schema = FeatureSchema::synthetic(k, p.values_per_feature);

    let mut planted: Vec<Tactic> = Vec::with_capacity(p.n_tactics);
    while planted.len() < p.n_tactics {
        let pattern = random_tactic(&mut rng, p);
        if planted.iter().all(|t| t.pattern != pattern) {
            planted.push(Tactic::new(planted.len() as u64 + 1, pattern));
        }
    }

    let mut rallies: Vec<Rally> = (0..p.n_sequences)
        .map(|i| Rally {
            id: i as u64 + 1,
            events: (0..p.sequence_length)
                .map(|_| HitEvent::new((0..k).map(|_| rng.gen_range(0..p.values_per_feature) as u32).collect()))
                .collect(),
            server: rng.gen_range(0..2),
            winner: rng.gen_range(0..2),
        })
        .collect();

    let mut log: Vec<Vec<(usize, usize)>> = Vec::with_capacity(planted.len());
    for (i, t) in planted.iter().enumerate() {
        let win_prob = if i % 2 == 0 { 0.9 } else { 0.1 };
        let mut chosen: Vec<usize> = index::sample(&mut rng, p.n_sequences, p.embed_count()).into_vec();
        chosen.sort_unstable();
        let mut placed = Vec::with_capacity(chosen.len());
        for r in chosen {
            let start = rng.gen_range(1..=p.sequence_length - t.len() + 1);
            for (off, f, v) in t.pattern.slots() {
                rallies[r].events[start - 1 + off].values[f] = v;
            }
            rallies[r].winner = if rng.gen_bool(win_prob) { 0 } else { 1 };
            placed.push((r, start));
        }
        log.push(placed);
    }

    let embeddings = planted
        .iter()
        .zip(&log)
        .map(|(t, placed)| Embedding {
            tactic_id: t.id,
            usages: placed
                .iter()
                .filter(|&&(r, s)| t.pattern.matches_at(&rallies[r], s))
                .map(|&(r, s)| Usage {
                    rally_id: rallies[r].id,
                    start: s,
                })
                .collect(),
        })
        .collect();
    let dataset = Dataset::new(schema, rallies, 0)?;
    Ok(SynthData {
        dataset,
        planted,
        embeddings,
    })
}

/// Four global constraints (an index range covering every embedding, a
/// length range containing the planted length, one positive and one
/// negative feature importance) followed by five instances of each local
/// variant aimed at random planted tactics. Merges need two planted
/// tactics and are left out otherwise.
pub fn generate_constraint_suite(data: &SynthData, seed: u64) -> Vec<Constraint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = data.dataset.k();
    let max_start = data.embeddings.iter().flat_map(|e| e.usages.iter().map(|u| u.start)).max().unwrap_or(1);
    let planted_len = data.planted.iter().map(Tactic::len).max().unwrap_or(1);
    let mut out = vec![
        Constraint::IndexRange { lo: 1, hi: max_start },
        Constraint::LengthRange {
            min: planted_len.min(2),
            max: Some(planted_len),
        },
        Constraint::FeatureImportance { feature: 0, value: 0.5 },
        Constraint::FeatureImportance {
            feature: k - 1,
            value: -0.5,
        },
    ];
    if data.planted.is_empty() {
        return out;
    }
    let ids: Vec<u64> = data.planted.iter().map(|t| t.id).collect();
    let pick = |rng: &mut ChaCha8Rng| *ids.choose(rng).unwrap();
    let direction = |rng: &mut ChaCha8Rng| if rng.gen_bool(0.5) { Direction::Front } else { Direction::Back };
    for _ in 0..5 {
        out.push(Constraint::SplitByFeature {
            tactics: vec![pick(&mut rng)],
            feature: rng.gen_range(0..k),
        });
    }
    for _ in 0..5 {
        out.push(Constraint::SpecifyFeature {
            tactics: vec![pick(&mut rng)],
            features: vec![rng.gen_range(0..k)],
        });
    }
    if ids.len() >= 2 {
        for _ in 0..5 {
            let pair = index::sample(&mut rng, ids.len(), 2);
            out.push(Constraint::MergeTactics {
                tactics: vec![ids[pair.index(0)], ids[pair.index(1)]],
            });
        }
    }
    for _ in 0..5 {
        out.push(Constraint::ExpandTactic {
            tactic: pick(&mut rng),
            direction: direction(&mut rng),
            hits: 1,
        });
    }
    for _ in 0..5 {
        out.push(Constraint::TrimTactic {
            tactic: pick(&mut rng),
            direction: direction(&mut rng),
            hits: 1,
        });
    }
    for _ in 0..5 {
        out.push(Constraint::DeleteTactic {
            tactics: vec![pick(&mut rng)],
        });
    }
    out
}

/// Slot differences between two patterns at their best alignment; slots
/// outside a pattern count as null.
pub fn slot_difference(a: &Pattern, b: &Pattern) -> usize {
    let k = a.k();
    let at = |p: &Pattern, i: isize, f: usize| {
        if i < 0 || i >= p.len() as isize {
            None
        } else {
            p.get(i as usize, f)
        }
    };
    (1 - b.len() as isize..a.len() as isize)
        .map(|off| {
            let lo = off.min(0);
            let hi = (a.len() as isize).max(off + b.len() as isize);
            (lo..hi)
                .map(|i| (0..k).filter(|&f| at(a, i, f) != at(b, i - off, f)).count())
                .sum::<usize>()
        })
        .min()
        .unwrap_or(usize::MAX)
}

/// The "at most one value different" recovery criterion.
pub fn recovers(planted: &Pattern, mined: &Pattern) -> bool {
    slot_difference(planted, mined) <= 1
}

/// Fraction of planted tactics recovered by some mined tactic; `None` when
/// nothing was planted.
pub fn recovery_rate(planted: &[Tactic], mined: &[Tactic]) -> Option<f64> {
    if planted.is_empty() {
        return None;
    }
    let hit = planted.iter().filter(|p| mined.iter().any(|m| recovers(&p.pattern, &m.pattern))).count();
    Some(hit as f64 / planted.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::pat;

    #[test]
    fn d1_shape() {
        let d = generate(&SynthParams::new(500, 10, 3, 25, 10)).unwrap();
        assert_eq!(d.dataset.rallies.len(), 500);
        assert!(d.dataset.rallies.iter().all(|r| r.len() == 10));
        assert_eq!(d.planted.len(), 25);
        assert!(d.planted.iter().all(|t| t.len() == 3 && t.pattern.nonnull() == 7));
        assert!(d.embeddings.iter().all(|e| e.usages.len() <= 50));
        for (t, e) in d.planted.iter().zip(&d.embeddings) {
            for u in &e.usages {
                assert!(t.pattern.matches_at(d.dataset.rally(u.rally_id).unwrap(), u.start));
            }
        }
    }

    #[test]
    fn seeds_are_deterministic_and_distinct() {
        let mut p = SynthParams::new(20, 6, 2, 2, 4);
        p.tactic_nonnull = 4;
        assert_eq!(generate(&p).unwrap(), generate(&p).unwrap());
        assert_ne!(generate(&p).unwrap().dataset, generate(&p.clone().with_seed(1)).unwrap().dataset);
    }

    #[test]
    fn tactic_longer_than_sequence_rejected() {
        assert!(generate(&SynthParams::new(10, 2, 3, 1, 4)).is_err());
    }

    #[test]
    fn suite_shape() {
        let d = generate(&SynthParams::new(50, 10, 3, 5, 10)).unwrap();
        let suite = generate_constraint_suite(&d, 3);
        assert_eq!(suite.len(), 34);
        assert_eq!(suite.iter().filter(|c| c.is_global()).count(), 4);
        assert!(crate::constraint::compile_global(&suite[..4]).is_ok());
        let ids: Vec<u64> = d.planted.iter().map(|t| t.id).collect();
        assert!(suite[4..].iter().all(|c| c.tactics().iter().all(|id| ids.contains(id))));
    }

    #[test]
    fn one_slot_recovery_criterion() {
        let a = pat(&[&[Some(0), Some(1)], &[Some(2), None]]);
        assert!(recovers(&a, &a));
        assert!(recovers(&a, &pat(&[&[Some(0), None], &[Some(2), None]])));
        assert!(recovers(&a, &pat(&[&[Some(0), Some(1)], &[Some(2), Some(3)]])));
        assert!(!recovers(&a, &pat(&[&[Some(0), None], &[Some(2), Some(3)]])));
        assert!(recovers(&a, &pat(&[&[Some(0), Some(1)]])));
        assert!(!recovers(&a, &pat(&[&[Some(0), None]])));
        assert!(recovers(&a, &pat(&[&[Some(0), Some(1)], &[Some(2), None], &[Some(3), None]])));
        assert!(recovers(&pat(&[&[Some(0), None], &[Some(2), None]]), &pat(&[&[Some(0), None]])));
    }
}
