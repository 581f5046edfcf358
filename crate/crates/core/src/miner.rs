//! Initial tactic mining: a combination-based candidate generator and a
//! description-length optimizer, iterated until an iteration changes nothing.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cover::MetricParams;
use crate::engine::{CoverEngine, Prepared};
use crate::error::{Error, Result};
use crate::model::{Dataset, FeatureId, Pattern, PatternEvent, Tactic, TacticId, TacticSet, ValueId};

/// Tolerance for "strictly decreases" on floating description lengths.
pub(crate) const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinerConfig {
    pub seed: u64,
    pub max_iterations: usize,
    pub candidates_per_iteration: usize,
    pub max_tactic_length: usize,
    /// Minimum number of match positions for a generated candidate.
    #[serde(default = "default_min_support")]
    pub min_support: usize,
}

fn default_min_support() -> usize {
    2
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            seed: 0,
            max_iterations: 200,
            candidates_per_iteration: 200,
            max_tactic_length: 8,
            min_support: default_min_support(),
        }
    }
}

impl MinerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0
            || self.candidates_per_iteration == 0
            || self.max_tactic_length == 0
            || self.min_support == 0
        {
            return Err(Error::InvalidParams("miner budgets must be positive".into()));
        }
        Ok(())
    }
}

/// Places `b` with its first event at event offset `offset` of `a` and takes
/// the slot-wise union. Offsets range over `[1 - len(b), len(a)]`; the upper
/// end is plain concatenation. Returns `None` on conflicting concrete slots
/// or when the offset is out of range.
pub fn combine(a: &Pattern, b: &Pattern, offset: isize) -> Option<Pattern> {
    let (la, lb) = (a.len() as isize, b.len() as isize);
    if offset < 1 - lb || offset > la || a.k() != b.k() {
        return None;
    }
    let lo = offset.min(0);
    let hi = la.max(offset + lb);
    let mut events = vec![PatternEvent::empty(a.k()); (hi - lo) as usize];
    for (i, e) in a.events().iter().enumerate() {
        events[(i as isize - lo) as usize] = e.clone();
    }
    for (i, e) in b.events().iter().enumerate() {
        let target = &mut events[(i as isize + offset - lo) as usize];
        for (slot, v) in target.slots.iter_mut().zip(&e.slots) {
            match (*slot, *v) {
                (_, None) => {}
                (None, Some(v)) => *slot = Some(v),
                (Some(x), Some(y)) if x == y => {}
                _ => return None,
            }
        }
    }
    Pattern::new(events).ok()
}

/// Pool member the generator draws from: a live tactic or a single value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Item {
    Tactic(usize),
    Single(FeatureId, ValueId),
}

/// Per-iteration snapshot of where every pool item is used.
struct Pool {
    items: Vec<Item>,
    cumulative: Vec<u64>,
    /// Accepted usages per engine slot as (rally, 0-based start).
    tactic_usages: HashMap<usize, Vec<(u32, u32)>>,
    /// Residual (uncovered) positions per single value.
    residual_at: HashMap<(FeatureId, ValueId), Vec<(u32, u32)>>,
    /// Per rally, per position: bitmask of covered features.
    covered: Vec<Vec<u64>>,
}

impl Pool {
    fn build(engine: &CoverEngine<'_>) -> Self {
        let data = engine.data();
        let k = data.k();
        let mut tactic_usages: HashMap<usize, Vec<(u32, u32)>> = HashMap::new();
        let mut covered: Vec<Vec<u64>> = data.rallies.iter().map(|r| vec![0u64; r.len()]).collect();
        for (ri, _) in data.rallies.iter().enumerate() {
            for &(slot, start) in engine.accepted(ri) {
                tactic_usages.entry(slot as usize).or_default().push((ri as u32, start));
                for (off, f, _) in engine.tactic(slot as usize).pattern.slots() {
                    covered[ri][start as usize + off] |= 1 << f;
                }
            }
        }
        let mut residual_at: HashMap<(FeatureId, ValueId), Vec<(u32, u32)>> = HashMap::new();
        for (ri, r) in data.rallies.iter().enumerate() {
            for (pos, hit) in r.events.iter().enumerate() {
                for f in 0..k {
                    if covered[ri][pos] & (1 << f) == 0 {
                        residual_at.entry((f, hit.values[f])).or_default().push((ri as u32, pos as u32));
                    }
                }
            }
        }
        let mut items = Vec::new();
        let mut cumulative = Vec::new();
        let mut total = 0u64;
        let mut slots: Vec<_> = tactic_usages.keys().copied().collect();
        slots.sort_unstable();
        for s in slots {
            total += tactic_usages[&s].len() as u64;
            items.push(Item::Tactic(s));
            cumulative.push(total);
        }
        let mut singles: Vec<_> = residual_at.keys().copied().collect();
        singles.sort_unstable();
        for key in singles {
            total += residual_at[&key].len() as u64;
            items.push(Item::Single(key.0, key.1));
            cumulative.push(total);
        }
        Pool {
            items,
            cumulative,
            tactic_usages,
            residual_at,
            covered,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Option<Item> {
        let total = *self.cumulative.last()?;
        let x = rng.gen_range(0..total);
        let i = self.cumulative.partition_point(|&c| c <= x);
        Some(self.items[i])
    }
}

struct Generator<'e, 'd> {
    engine: &'e CoverEngine<'d>,
    pool: Pool,
    /// All positions of each single value, covered or not.
    occurrences: &'e HashMap<(FeatureId, ValueId), Vec<(u32, u32)>>,
}

pub(crate) fn value_occurrences(data: &Dataset) -> HashMap<(FeatureId, ValueId), Vec<(u32, u32)>> {
    let mut out: HashMap<(FeatureId, ValueId), Vec<(u32, u32)>> = HashMap::new();
    for (ri, r) in data.rallies.iter().enumerate() {
        for (pos, hit) in r.events.iter().enumerate() {
            for (f, &v) in hit.values.iter().enumerate() {
                out.entry((f, v)).or_default().push((ri as u32, pos as u32));
            }
        }
    }
    out
}

impl Generator<'_, '_> {
    fn pattern(&self, item: Item) -> Pattern {
        match item {
            Item::Tactic(s) => self.engine.tactic(s).pattern.clone(),
            Item::Single(f, v) => Pattern::single(self.engine.data().k(), f, v),
        }
    }

    fn all_matches(&self, item: Item) -> &[(u32, u32)] {
        match item {
            Item::Tactic(s) => self.engine.matches(s),
            Item::Single(f, v) => &self.occurrences[&(f, v)],
        }
    }

    fn random_usage(&self, item: Item, rng: &mut ChaCha8Rng) -> (u32, u32) {
        let list = match item {
            Item::Tactic(s) => &self.pool.tactic_usages[&s],
            Item::Single(f, v) => &self.pool.residual_at[&(f, v)],
        };
        list[rng.gen_range(0..list.len())]
    }

    /// Items occurring in rally `r` that overlap or touch `[start, end)`.
    fn neighbours(&self, r: u32, start: u32, end: u32, exclude: (Item, u32)) -> Vec<(Item, u32)> {
        let data = self.engine.data();
        let rally = &data.rallies[r as usize];
        let lo = start.saturating_sub(1);
        let hi = (end + 1).min(rally.len() as u32);
        let mut out = Vec::new();
        for &(slot, s) in self.engine.accepted(r as usize) {
            let len = self.engine.tactic(slot as usize).len() as u32;
            if s < hi && s + len > lo && (Item::Tactic(slot as usize), s) != exclude {
                out.push((Item::Tactic(slot as usize), s));
            }
        }
        for pos in lo..hi {
            let mask = self.pool.covered[r as usize][pos as usize];
            for f in 0..data.k() {
                let item = Item::Single(f, rally.value(pos as usize, f));
                if mask & (1 << f) == 0 && (item, pos) != exclude {
                    out.push((item, pos));
                }
            }
        }
        out
    }

    /// One combination attempt anchored at a concrete co-occurrence.
    fn attempt(&self, rng: &mut ChaCha8Rng, max_len: usize) -> Option<Attempt> {
        let a = self.pool.sample(rng)?;
        let (r, sa) = self.random_usage(a, rng);
        let pa = self.pattern(a);
        let near = self.neighbours(r, sa, sa + pa.len() as u32, (a, sa));
        if near.is_empty() {
            return None;
        }
        let (b, sb) = near[rng.gen_range(0..near.len())];
        let pb = self.pattern(b);
        let offset = sb as isize - sa as isize;
        // b immediately before a is the concatenation of b then a
        let (combined, anchor, shift) = if offset < 1 - pb.len() as isize {
            (combine(&pb, &pa, -offset)?, b, 0)
        } else {
            (combine(&pa, &pb, offset)?, a, (-offset).max(0))
        };
        (combined.len() <= max_len).then_some(Attempt {
            pattern: combined,
            anchor,
            shift,
            rally: r,
            start: sa.min(sb),
        })
    }

    /// Match positions of `combined`, which contains `anchor` at event
    /// offset `shift`.
    fn matches_via(&self, combined: &Pattern, anchor: Item, shift: isize) -> Vec<(u32, u32)> {
        let data = self.engine.data();
        let mut out: Vec<(u32, u32)> = self
            .all_matches(anchor)
            .iter()
            .filter_map(|&(r, s)| {
                let start = s as isize - shift;
                (start >= 0 && combined.matches_at(&data.rallies[r as usize], start as usize + 1))
                    .then_some((r, start as u32))
            })
            .collect();
        out.dedup();
        out
    }
}

/// A combined pattern, the pool item it was anchored on (contained at event
/// offset `shift`) and the rally window it was read from.
struct Attempt {
    pattern: Pattern,
    anchor: Item,
    shift: isize,
    rally: u32,
    start: u32,
}

/// Grows `pattern` (read from `rally` at 0-based `start`, matching at
/// `matches`) by the single slot of that rally, inside or next to the
/// window, that keeps the most matches. Returns `None` when no extension
/// keeps `min_support` matches or the length limit is reached.
fn extend(
    data: &Dataset,
    pattern: &Pattern,
    rally: u32,
    start: u32,
    matches: &[(u32, u32)],
    cfg: &MinerConfig,
) -> Option<(Pattern, u32, Vec<(u32, u32)>)> {
    let r = &data.rallies[rally as usize];
    let len = pattern.len() as isize;
    let lo = if pattern.len() < cfg.max_tactic_length { -1 } else { 0 };
    let hi = if pattern.len() < cfg.max_tactic_length { len } else { len - 1 };
    let mut best: Option<(usize, isize, FeatureId)> = None;
    for off in lo..=hi {
        let pos = start as isize + off;
        if pos < 0 || pos >= r.len() as isize {
            continue;
        }
        for f in 0..data.k() {
            if (0..len).contains(&off) && pattern.get(off as usize, f).is_some() {
                continue;
            }
            let v = r.value(pos as usize, f);
            let count = matches
                .iter()
                .filter(|&&(mr, ms)| {
                    let p = ms as isize + off;
                    let other = &data.rallies[mr as usize];
                    p >= 0 && (p as usize) < other.len() && other.value(p as usize, f) == v
                })
                .count();
            if count >= cfg.min_support && best.is_none_or(|(c, _, _)| count > c) {
                best = Some((count, off, f));
            }
        }
    }
    let (_, off, f) = best?;
    let pos = (start as isize + off) as usize;
    let v = r.value(pos, f);
    let grown = combine(pattern, &Pattern::single(data.k(), f, v), off)?;
    let shift = (-off).max(0) as u32;
    let grown_matches = matches
        .iter()
        .filter(|&&(mr, ms)| ms >= shift && grown.matches_at(&data.rallies[mr as usize], (ms - shift) as usize + 1))
        .map(|&(mr, ms)| (mr, ms - shift))
        .collect();
    Some((grown, start - shift, grown_matches))
}

/// Samples up to `cfg.candidates_per_iteration` new candidates from the
/// current engine state. Candidate ids are drawn from `next_id`.
fn generate_in(
    engine: &CoverEngine<'_>,
    occurrences: &HashMap<(FeatureId, ValueId), Vec<(u32, u32)>>,
    rng: &mut ChaCha8Rng,
    cfg: &MinerConfig,
    next_id: &mut TacticId,
) -> Vec<Prepared> {
    let generator = Generator {
        engine,
        pool: Pool::build(engine),
        occurrences,
    };
    let mut seen: HashSet<Pattern> = engine.slots().map(|s| engine.tactic(s).pattern.clone()).collect();
    let mut out = Vec::new();
    let budget = cfg.candidates_per_iteration;
    for _ in 0..budget * 10 {
        if out.len() >= budget {
            break;
        }
        let Some(attempt) = generator.attempt(rng, cfg.max_tactic_length) else {
            continue;
        };
        let mut pattern = attempt.pattern;
        let mut start = attempt.start;
        let mut matches = generator.matches_via(&pattern, attempt.anchor, attempt.shift);
        // emit the pair, then keep growing it along the rally it came from
        while matches.len() >= cfg.min_support && out.len() < budget {
            if seen.insert(pattern.clone()) {
                let tactic = Tactic::new(*next_id, pattern.clone());
                *next_id += 1;
                out.push(Prepared {
                    tactic,
                    matches: matches.clone(),
                });
            }
            match extend(engine.data(), &pattern, attempt.rally, start, &matches, cfg) {
                Some((p, s, m)) => (pattern, start, matches) = (p, s, m),
                None => break,
            }
        }
    }
    out
}

/// Public form of the generator: combines members of `tactics` and the
/// single values of `d`.
pub fn generate_candidates(
    tactics: &[Tactic],
    d: &Dataset,
    params: &MetricParams,
    rng: &mut ChaCha8Rng,
    cfg: &MinerConfig,
) -> Vec<Tactic> {
    let engine = CoverEngine::new(d, params.clone(), tactics.to_vec());
    let occurrences = value_occurrences(d);
    let mut next_id = tactics.iter().map(|t| t.id + 1).max().unwrap_or(1);
    generate_in(&engine, &occurrences, rng, cfg, &mut next_id)
        .into_iter()
        .map(|p| p.tactic)
        .collect()
}

/// Removes every unpinned tactic (other than `keep`) whose removal does not
/// increase L*, restricted to tactics with matches in `rallies` when given.
/// Repeats until nothing more can be removed. Returns the rallies touched by
/// removals.
fn sweep(engine: &mut CoverEngine<'_>, keep: Option<usize>, rallies: Option<&[u32]>) -> Vec<u32> {
    let mut touched_all = Vec::new();
    let mut scope: Option<HashSet<u32>> = rallies.map(|r| r.iter().copied().collect());
    loop {
        let mut removed = false;
        let slots: Vec<usize> = engine
            .slots()
            .filter(|&s| Some(s) != keep && !engine.tactic(s).pinned)
            .filter(|&s| match &scope {
                None => true,
                Some(set) => engine.matches(s).iter().any(|(r, _)| set.contains(r)),
            })
            .collect();
        for s in slots {
            if engine.delta_remove(s) <= EPS {
                let touched: Vec<u32> = engine.matches(s).iter().map(|m| m.0).collect();
                engine.remove(s);
                if let Some(set) = scope.as_mut() {
                    set.extend(touched.iter().copied());
                }
                touched_all.extend(touched);
                removed = true;
            }
        }
        if !removed {
            return touched_all;
        }
    }
}

/// Greedy admission: candidates are tried best-first by their L* change and
/// admitted iff L* strictly decreases; every admission is followed by a sweep
/// of the tactics it affects. Returns true if the set changed.
fn optimize_in(engine: &mut CoverEngine<'_>, candidates: Vec<Prepared>) -> bool {
    let mut scored: Vec<(f64, usize, Prepared)> = candidates
        .into_iter()
        .filter(|c| engine.find(&c.tactic.pattern).is_none())
        .enumerate()
        .map(|(i, c)| (engine.delta_add(&c), i, c))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut dirty = vec![false; engine.data().rallies.len()];
    let mut changed = false;
    for (delta, _, cand) in scored {
        let stale = cand.matches.iter().any(|&(r, _)| dirty[r as usize]);
        let delta = if stale { engine.delta_add(&cand) } else { delta };
        if delta >= -EPS {
            continue;
        }
        let rallies: Vec<u32> = cand.matches.iter().map(|m| m.0).collect();
        let slot = engine.add(cand);
        changed = true;
        rallies.iter().for_each(|&r| dirty[r as usize] = true);
        for r in sweep(engine, Some(slot), Some(&rallies)) {
            dirty[r as usize] = true;
        }
    }
    changed
}

/// Admits candidates into `tactics` greedily by L*; returns the new set.
pub fn optimize(d: &Dataset, tactics: &[Tactic], candidates: Vec<Tactic>, p: &MetricParams) -> Vec<Tactic> {
    let mut engine = CoverEngine::new(d, p.clone(), tactics.to_vec());
    let prepared = candidates.into_iter().map(|t| Prepared::new(d, t)).collect();
    optimize_in(&mut engine, prepared);
    engine.tactics()
}

/// Mines a tactic set from scratch. `seed_tactics` (typically pinned ones)
/// start in the set; new tactic ids are allocated from `first_id` upwards.
pub fn mine_with(
    d: &Dataset,
    p: &MetricParams,
    cfg: &MinerConfig,
    seed_tactics: Vec<Tactic>,
    first_id: TacticId,
) -> TacticSet {
    let mut engine = CoverEngine::new(d, p.clone(), seed_tactics);
    let occurrences = value_occurrences(d);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut next_id = first_id;
    sweep(&mut engine, None, None);
    for _ in 0..cfg.max_iterations {
        let candidates = generate_in(&engine, &occurrences, &mut rng, cfg, &mut next_id);
        if !optimize_in(&mut engine, candidates) {
            break;
        }
    }
    sweep(&mut engine, None, None);
    to_tactic_set(&engine)
}

pub fn mine_initial(d: &Dataset, p: &MetricParams, cfg: &MinerConfig) -> TacticSet {
    mine_with(d, p, cfg, Vec::new(), 1)
}

/// Tactic set ordered by id, with cover usages.
pub(crate) fn to_tactic_set(engine: &CoverEngine<'_>) -> TacticSet {
    let mut slots: Vec<usize> = engine.slots().collect();
    slots.sort_by_key(|&s| engine.tactic(s).id);
    TacticSet {
        tactics: slots.iter().map(|&s| engine.tactic(s).clone()).collect(),
        usages: slots.iter().map(|&s| engine.usages(s)).collect(),
    }
}
