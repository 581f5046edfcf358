//! Random instances and independent reference implementations shared by
//! the integration tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use steermine::constraint::{Constraint, Direction};
use steermine::model::{Dataset, FeatureSchema, HitEvent, Pattern, PatternEvent, Rally, Tactic, TacticId, Usage};

pub const EPS: f64 = 1e-9;

pub fn random_dataset(rng: &mut ChaCha8Rng, rallies: usize, len: (usize, usize), k: usize, v: usize) -> Dataset {
    let rallies = (0..rallies)
        .map(|i| {
            let n = rng.gen_range(len.0..=len.1);
            Rally {
                id: i as u64 + 1,
                events: (0..n)
                    .map(|_| HitEvent::new((0..k).map(|_| rng.gen_range(0..v as u32)).collect()))
                    .collect(),
                server: 0,
                winner: rng.gen_range(0..2),
            }
        })
        .collect();
    Dataset::new(FeatureSchema::synthetic(k, v), rallies, 0).unwrap()
}

pub fn random_pattern(rng: &mut ChaCha8Rng, k: usize, v: usize, max_len: usize, null_prob: f64) -> Pattern {
    loop {
        let len = rng.gen_range(1..=max_len);
        let events = (0..len)
            .map(|_| PatternEvent {
                slots: (0..k)
                    .map(|_| (!rng.gen_bool(null_prob)).then(|| rng.gen_range(0..v as u32)))
                    .collect(),
            })
            .collect();
        if let Some(p) = Pattern::normalized(events) {
            if p.len() == len {
                return p;
            }
        }
    }
}

/// A pattern read off a random window of a random rally, with some slots
/// blanked, so that it matches at least once.
pub fn pattern_from_data(rng: &mut ChaCha8Rng, d: &Dataset, max_len: usize, null_prob: f64) -> Pattern {
    loop {
        let r = &d.rallies[rng.gen_range(0..d.rallies.len())];
        let len = rng.gen_range(1..=max_len.min(r.len()));
        let start = rng.gen_range(0..=r.len() - len);
        let events = (start..start + len)
            .map(|i| PatternEvent {
                slots: r.events[i]
                    .values
                    .iter()
                    .map(|&x| (!rng.gen_bool(null_prob)).then_some(x))
                    .collect(),
            })
            .collect();
        if let Some(p) = Pattern::normalized(events) {
            return p;
        }
    }
}

/// Whether `p` occurs in `r` with its first event at 0-based `start`.
pub fn occurs(p: &Pattern, r: &Rally, start: usize) -> bool {
    start + p.len() <= r.len()
        && p.events().iter().enumerate().all(|(i, e)| {
            e.slots
                .iter()
                .enumerate()
                .all(|(f, s)| s.is_none_or(|x| r.events[start + i].values[f] == x))
        })
}

pub fn occurrences(p: &Pattern, d: &Dataset) -> usize {
    d.rallies
        .iter()
        .map(|r| (0..r.len()).filter(|&s| occurs(p, r, s)).count())
        .sum()
}

/// Count-based description length from accepted usages: one unit per
/// tactic, per usage and per uncovered value slot.
pub fn plain_dl(d: &Dataset, tactics: &[Tactic], usages: &[Vec<Usage>]) -> f64 {
    let total: usize = d.rallies.iter().map(|r| r.len() * d.k()).sum();
    let covered: usize = tactics.iter().zip(usages).map(|(t, u)| t.pattern.nonnull() * u.len()).sum();
    let uses: usize = usages.iter().map(Vec::len).sum();
    (tactics.len() + uses + total - covered) as f64
}

/// Reference cover: per rally, every subset of occurrences is enumerated;
/// among the non-overlapping ones the winner is the subset whose
/// membership vector, read in priority order, is lexicographically largest.
pub fn brute_cover(d: &Dataset, tactics: &[Tactic]) -> Vec<Vec<Usage>> {
    let mut out = vec![Vec::new(); tactics.len()];
    for r in &d.rallies {
        let mut occ: Vec<(usize, usize)> = Vec::new();
        for (i, t) in tactics.iter().enumerate() {
            for s in 0..r.len() {
                if occurs(&t.pattern, r, s) {
                    occ.push((i, s));
                }
            }
        }
        let key = |&(i, s): &(usize, usize)| {
            let t = &tactics[i];
            (std::cmp::Reverse(t.pattern.nonnull()), std::cmp::Reverse(t.len()), s, t.id)
        };
        occ.sort_by_key(key);
        assert!(occ.len() <= 16, "instance too large for enumeration");
        let mut best: Option<Vec<bool>> = None;
        for mask in 0u32..(1 << occ.len()) {
            let chosen: Vec<bool> = (0..occ.len()).map(|b| mask >> b & 1 == 1).collect();
            let mut used = vec![false; r.len()];
            let mut ok = true;
            for (b, &(i, s)) in occ.iter().enumerate() {
                if chosen[b] {
                    for x in &mut used[s..s + tactics[i].len()] {
                        ok &= !*x;
                        *x = true;
                    }
                }
            }
            if ok && best.as_ref().is_none_or(|bv| chosen > *bv) {
                best = Some(chosen);
            }
        }
        for (b, &(i, s)) in occ.iter().enumerate() {
            if best.as_ref().unwrap()[b] {
                out[i].push(Usage {
                    rally_id: r.id,
                    start: s + 1,
                });
            }
        }
    }
    for u in &mut out {
        u.sort();
    }
    out
}

/// Reference tactic distance: memoized recursion over prefix pairs.
pub fn distance_oracle(a: &Pattern, b: &Pattern) -> f64 {
    fn sub(x: &PatternEvent, y: &PatternEvent) -> f64 {
        let k = x.slots.len() as f64;
        let mut c = 0.0;
        for (p, q) in x.slots.iter().zip(&y.slots) {
            c += match (p, q) {
                (Some(p), Some(q)) if p != q => 1.0,
                (Some(_), None) | (None, Some(_)) => 0.5,
                _ => 0.0,
            };
        }
        c / k
    }
    fn go(a: &[PatternEvent], b: &[PatternEvent], i: usize, j: usize, memo: &mut BTreeMap<(usize, usize), f64>) -> f64 {
        if i == 0 {
            return j as f64;
        }
        if j == 0 {
            return i as f64;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = (go(a, b, i - 1, j, memo) + 1.0)
            .min(go(a, b, i, j - 1, memo) + 1.0)
            .min(go(a, b, i - 1, j - 1, memo) + sub(&a[i - 1], &b[j - 1]));
        memo.insert((i, j), v);
        v
    }
    let mut memo = BTreeMap::new();
    go(a.events(), b.events(), a.len(), b.len(), &mut memo) / a.len().max(b.len()) as f64
}

/// Reference two-pattern sup: `b` placed at the offset (in `a`'s frame)
/// with the most agreeing concrete slots, ties to the smaller offset.
/// Returns the sup, the sup's offset in `a`'s frame and the chosen offset
/// of `b`.
pub fn sup_oracle(a: &Pattern, b: &Pattern) -> Option<(Pattern, isize, isize)> {
    let at = |p: &Pattern, i: isize, f: usize| {
        if i < 0 || i >= p.len() as isize {
            None
        } else {
            p.get(i as usize, f)
        }
    };
    let k = a.k();
    let mut best: Option<(usize, isize)> = None;
    for off in -(b.len() as isize) + 1..a.len() as isize {
        let agree = (0..a.len() as isize)
            .flat_map(|i| (0..k).map(move |f| (i, f)))
            .filter(|&(i, f)| at(a, i, f).is_some() && at(a, i, f) == at(b, i - off, f))
            .count();
        if best.is_none_or(|(n, _)| agree > n) {
            best = Some((agree, off));
        }
    }
    let (agree, off) = best?;
    if agree == 0 {
        return None;
    }
    let kept: Vec<(isize, usize, u32)> = (0..a.len() as isize)
        .flat_map(|i| (0..k).map(move |f| (i, f)))
        .filter_map(|(i, f)| match (at(a, i, f), at(b, i - off, f)) {
            (Some(x), Some(y)) if x == y => Some((i, f, x)),
            _ => None,
        })
        .collect();
    let lo = kept.iter().map(|x| x.0).min()?;
    let hi = kept.iter().map(|x| x.0).max()?;
    let mut events = vec![PatternEvent::empty(k); (hi - lo + 1) as usize];
    for (i, f, x) in kept {
        events[(i - lo) as usize].slots[f] = Some(x);
    }
    Some((Pattern::new(events).unwrap(), lo, off))
}

/// Reference replay of the fine-tuning optimizer using only from-scratch
/// description lengths.
pub fn simulate_alg1(
    d: &Dataset,
    tactics: &[Tactic],
    adj: &[TacticId],
    can: &[Tactic],
    p: &steermine::cover::MetricParams,
) -> Vec<Tactic> {
    use steermine::cover::{cover, dl_of};
    let mut cur: Vec<Tactic> = tactics.iter().filter(|t| !adj.contains(&t.id)).cloned().collect();
    let present: HashSet<Pattern> = cur.iter().map(|t| t.pattern.clone()).collect();
    let mut seen = HashSet::new();
    let mut order: Vec<(usize, usize, TacticId, Tactic)> = can
        .iter()
        .filter(|t| !present.contains(&t.pattern) && seen.insert(t.pattern.clone()))
        .map(|t| {
            let alone = cover(d, std::slice::from_ref(t)).freq[0];
            (alone, t.pattern.null_slots(), t.id, t.clone())
        })
        .collect();
    order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut admitted: Vec<TacticId> = Vec::new();
    for (_, _, _, ct) in order {
        let base = dl_of(d, &cur, p);
        let mut with = cur.clone();
        with.push(ct.clone());
        if !(dl_of(d, &with, p) < base - EPS || admitted.is_empty()) {
            continue;
        }
        cur = with;
        let mut survivors = Vec::new();
        for id in admitted {
            let now = dl_of(d, &cur, p);
            let without: Vec<Tactic> = cur.iter().filter(|t| t.id != id).cloned().collect();
            if dl_of(d, &without, p) <= now + EPS {
                cur = without;
            } else {
                survivors.push(id);
            }
        }
        survivors.push(ct.id);
        admitted = survivors;
    }
    cur.sort_by_key(|t| t.id);
    cur
}

/// Pattern after dropping `hits` events at one end, renormalized.
pub fn trimmed(t: &Pattern, direction: Direction, hits: usize) -> Option<Pattern> {
    if hits >= t.len() {
        return None;
    }
    let ev = t.events();
    let kept = match direction {
        Direction::Back => ev[..ev.len() - hits].to_vec(),
        Direction::Front => ev[hits..].to_vec(),
    };
    Pattern::normalized(kept)
}

/// Structural satisfaction of a local constraint by `cand`, written from
/// the constraint definitions.
pub fn satisfies_oracle(c: &Constraint, targets: &[&Pattern], cand: &Pattern) -> bool {
    let t = targets[0];
    let same_len = cand.len() == t.len();
    let pairs = || {
        (0..t.len()).flat_map(move |i| (0..t.k()).map(move |f| (i, f, t.get(i, f), cand.get(i, f))))
    };
    match c {
        Constraint::SplitByFeature { feature, .. } => {
            same_len
                && pairs().all(|(_, _, x, y)| x.is_none() || x == y)
                && pairs().filter(|(_, _, x, y)| x.is_none() && y.is_some()).count() == 1
                && pairs().all(|(_, f, x, y)| !(x.is_none() && y.is_some()) || f == *feature)
        }
        Constraint::SpecifyFeature { features, .. } => {
            same_len
                && pairs().all(|(_, f, x, y)| match x {
                    Some(_) => x == y,
                    None => y.is_some() == features.contains(&f),
                })
        }
        Constraint::MergeTactics { .. } => {
            let mut acc = Some(t.clone());
            for b in &targets[1..] {
                acc = acc.and_then(|a| sup_oracle(&a, b).map(|s| s.0));
            }
            acc.as_ref() == Some(cand)
        }
        Constraint::ExpandTactic { direction, hits, .. } => {
            if cand.len() != t.len() + hits {
                return false;
            }
            let shift = if *direction == Direction::Front { *hits } else { 0 };
            let new: Vec<usize> = match direction {
                Direction::Back => (t.len()..cand.len()).collect(),
                Direction::Front => (0..*hits).collect(),
            };
            (0..t.len()).all(|i| t.events()[i] == cand.events()[i + shift])
                && new.iter().all(|&i| cand.events()[i].nonnull() > 0)
        }
        Constraint::TrimTactic { direction, hits, .. } => trimmed(t, *direction, *hits).as_ref() == Some(cand),
        _ => false,
    }
}

/// Patterns reachable from `t` by exactly `depth` single-slot edits (add,
/// remove or replace, at any event within `reach` events of `t`), as
/// sparse maps in `t`'s frame.
pub fn reachable(
    t: &Pattern,
    values: u32,
    reach: isize,
    max_depth: usize,
) -> Vec<Vec<BTreeMap<(isize, usize), u32>>> {
    let start: BTreeMap<(isize, usize), u32> = t.slots().map(|(i, f, v)| ((i as isize, f), v)).collect();
    let k = t.k();
    let mut levels = vec![vec![start.clone()]];
    let mut seen = HashSet::from([start]);
    for _ in 0..max_depth {
        let mut next = Vec::new();
        for s in levels.last().unwrap() {
            for e in -reach..t.len() as isize + reach {
                for f in 0..k {
                    let cur = s.get(&(e, f)).copied();
                    let mut succ = Vec::new();
                    match cur {
                        None => {
                            for v in 0..values {
                                let mut n = s.clone();
                                n.insert((e, f), v);
                                succ.push(n);
                            }
                        }
                        Some(old) => {
                            let mut n = s.clone();
                            n.remove(&(e, f));
                            succ.push(n);
                            for v in (0..values).filter(|&v| v != old) {
                                let mut n = s.clone();
                                n.insert((e, f), v);
                                succ.push(n);
                            }
                        }
                    }
                    for n in succ {
                        if seen.insert(n.clone()) {
                            next.push(n);
                        }
                    }
                }
            }
        }
        levels.push(next);
    }
    levels
}

pub fn map_to_pattern(m: &BTreeMap<(isize, usize), u32>, k: usize) -> Option<Pattern> {
    let lo = m.keys().map(|x| x.0).min()?;
    let hi = m.keys().map(|x| x.0).max()?;
    let mut events = vec![PatternEvent::empty(k); (hi - lo + 1) as usize];
    for (&(e, f), &v) in m {
        events[(e - lo) as usize].slots[f] = Some(v);
    }
    Pattern::new(events).ok()
}

/// A random local constraint over `ids`.
pub fn random_local(rng: &mut ChaCha8Rng, ids: &[TacticId], k: usize) -> Constraint {
    let pick = |rng: &mut ChaCha8Rng| ids[rng.gen_range(0..ids.len())];
    let direction = |rng: &mut ChaCha8Rng| if rng.gen_bool(0.5) { Direction::Front } else { Direction::Back };
    match rng.gen_range(0..6) {
        0 => Constraint::SplitByFeature {
            tactics: vec![pick(rng)],
            feature: rng.gen_range(0..k),
        },
        1 => Constraint::SpecifyFeature {
            tactics: vec![pick(rng)],
            features: vec![rng.gen_range(0..k)],
        },
        2 if ids.len() >= 2 => {
            let a = pick(rng);
            let mut b = pick(rng);
            while b == a {
                b = pick(rng);
            }
            Constraint::MergeTactics { tactics: vec![a, b] }
        }
        3 => Constraint::ExpandTactic {
            tactic: pick(rng),
            direction: direction(rng),
            hits: 1,
        },
        4 => Constraint::TrimTactic {
            tactic: pick(rng),
            direction: direction(rng),
            hits: 1,
        },
        _ => Constraint::DeleteTactic {
            tactics: vec![pick(rng)],
        },
    }
}
