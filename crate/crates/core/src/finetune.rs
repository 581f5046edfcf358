//! Local adjustment: a breadth-first generator of minimally modified
//! candidates and the locality-preserving fine-tuning optimizer.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::constraint::{Constraint, Direction};
use crate::cover::MetricParams;
use crate::engine::{scan_matches, CoverEngine, Prepared};
use crate::error::{Error, Result};
use crate::miner::EPS;
use crate::model::{Dataset, FeatureId, Pattern, PatternEvent, Tactic, TacticId, ValueId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Add,
    Remove,
    Replace,
}

/// One slot edit. `event` is an offset in the frame of the adjusted tactic:
/// `-1` is the hit before its first event, `len` the hit after its last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Modification {
    pub action: Action,
    pub event: isize,
    pub feature: FeatureId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<ValueId>,
}

impl Modification {
    pub fn add(event: isize, feature: FeatureId, value: ValueId) -> Self {
        Modification {
            action: Action::Add,
            event,
            feature,
            value: Some(value),
        }
    }

    pub fn remove(event: isize, feature: FeatureId) -> Self {
        Modification {
            action: Action::Remove,
            event,
            feature,
            value: None,
        }
    }

    pub fn replace(event: isize, feature: FeatureId, value: ValueId) -> Self {
        Modification {
            action: Action::Replace,
            event,
            feature,
            value: Some(value),
        }
    }
}

/// A pattern under edit, possibly with all-null events anywhere.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Window {
    origin: isize,
    events: Vec<PatternEvent>,
}

impl Window {
    fn of(p: &Pattern) -> Self {
        Window {
            origin: 0,
            events: p.events().to_vec(),
        }
    }

    fn apply(&self, m: &Modification) -> Option<Window> {
        let k = self.events[0].slots.len();
        if m.feature >= k {
            return None;
        }
        let mut w = self.clone();
        while m.event < w.origin {
            w.events.insert(0, PatternEvent::empty(k));
            w.origin -= 1;
        }
        while m.event >= w.origin + w.events.len() as isize {
            w.events.push(PatternEvent::empty(k));
        }
        let slot = &mut w.events[(m.event - w.origin) as usize].slots[m.feature];
        match (m.action, *slot, m.value) {
            (Action::Add, None, Some(v)) => *slot = Some(v),
            (Action::Remove, Some(_), _) => *slot = None,
            (Action::Replace, Some(old), Some(v)) if old != v => *slot = Some(v),
            _ => return None,
        }
        Some(w)
    }

    fn pattern(&self) -> Option<Pattern> {
        Pattern::normalized(self.events.clone())
    }

    /// Whether the window, anchored at `origin`, fits and agrees with the
    /// rally when the adjusted tactic starts at 0-based `start`.
    fn fits(&self, d: &Dataset, rally: u32, start: u32) -> bool {
        let r = &d.rallies[rally as usize];
        let first = start as isize + self.origin;
        if first < 0 || first as usize + self.events.len() > r.len() {
            return false;
        }
        self.events.iter().enumerate().all(|(i, e)| {
            let hit = &r.events[first as usize + i].values;
            e.slots.iter().zip(hit).all(|(s, v)| s.is_none_or(|s| s == *v))
        })
    }
}

/// Applies `mods` in order and normalizes. `None` when a modification does
/// not apply or nothing concrete is left.
pub fn apply_modifications(t: &Pattern, mods: &[Modification]) -> Option<Pattern> {
    let mut w = Window::of(t);
    for m in mods {
        w = w.apply(m)?;
    }
    w.pattern()
}

/// Structural part of "`candidate` satisfies `c`" for the adjusted
/// tactics `targets` (match requirements are checked separately).
pub fn satisfies(c: &Constraint, targets: &[&Pattern], candidate: &Pattern) -> bool {
    let t = match targets.first() {
        Some(t) => *t,
        None => return false,
    };
    match c {
        Constraint::SplitByFeature { feature, .. } => {
            let f = *feature;
            candidate.len() == t.len()
                && candidate.nonnull() == t.nonnull() + 1
                && (0..t.len()).all(|i| {
                    (0..t.k()).all(|g| match (t.get(i, g), candidate.get(i, g)) {
                        (Some(a), Some(b)) => a == b,
                        (None, None) => true,
                        (None, Some(_)) => g == f,
                        (Some(_), None) => false,
                    })
                })
        }
        Constraint::SpecifyFeature { features, .. } => {
            candidate.len() == t.len()
                && (0..t.len()).all(|i| {
                    (0..t.k()).all(|g| match (t.get(i, g), candidate.get(i, g)) {
                        (Some(a), Some(b)) => a == b,
                        (Some(_), None) => false,
                        (None, b) => b.is_some() == features.contains(&g),
                    })
                })
        }
        Constraint::MergeTactics { .. } => super_tactic(targets).is_some_and(|(s, _)| &s == candidate),
        Constraint::ExpandTactic { direction, hits, .. } => {
            if candidate.len() != t.len() + hits {
                return false;
            }
            let (kept, new) = match direction {
                Direction::Back => (&candidate.events()[..t.len()], &candidate.events()[t.len()..]),
                Direction::Front => (&candidate.events()[*hits..], &candidate.events()[..*hits]),
            };
            kept == t.events() && new.iter().all(|e| !e.is_all_null())
        }
        Constraint::TrimTactic { direction, hits, .. } => trim_target(t, *direction, *hits).as_ref() == Some(candidate),
        _ => false,
    }
}

fn trim_target(t: &Pattern, direction: Direction, hits: usize) -> Option<Pattern> {
    if hits >= t.len() {
        return None;
    }
    let events = t.events();
    let kept = match direction {
        Direction::Back => &events[..events.len() - hits],
        Direction::Front => &events[hits..],
    };
    Pattern::normalized(kept.to_vec())
}

/// Best-overlap offset of `b` against `a` (maximal number of agreeing
/// concrete slots, ties to the smaller offset) and that count.
fn best_offset(a: &Pattern, b: &Pattern) -> (isize, usize) {
    let mut best = (0, 0);
    let mut first = true;
    for off in 1 - b.len() as isize..a.len() as isize {
        let mut agree = 0;
        for (i, ea) in a.events().iter().enumerate() {
            let j = i as isize - off;
            if j < 0 || j >= b.len() as isize {
                continue;
            }
            let eb = &b.events()[j as usize];
            agree += ea.slots.iter().zip(&eb.slots).filter(|(x, y)| x.is_some() && x == y).count();
        }
        if first || agree > best.1 {
            best = (off, agree);
            first = false;
        }
    }
    best
}

/// The common-value generalization of `targets` and its offset in the frame
/// of the first target. `None` when no concrete value is shared.
pub fn super_tactic(targets: &[&Pattern]) -> Option<(Pattern, isize)> {
    let (first, rest) = targets.split_first()?;
    let mut cur = (*first).clone();
    let mut origin = 0isize;
    for b in rest {
        let (off, agree) = best_offset(&cur, b);
        if agree == 0 {
            return None;
        }
        let k = cur.k();
        let mut events = Vec::new();
        let mut lead = None;
        for (i, ea) in cur.events().iter().enumerate() {
            let j = i as isize - off;
            let slots = if j < 0 || j >= b.len() as isize {
                vec![None; k]
            } else {
                let eb = &b.events()[j as usize];
                ea.slots.iter().zip(&eb.slots).map(|(x, y)| if x == y { *x } else { None }).collect()
            };
            let e = PatternEvent { slots };
            if lead.is_none() && !e.is_all_null() {
                lead = Some(i);
            }
            events.push(e);
        }
        origin += lead? as isize;
        cur = Pattern::normalized(events)?;
    }
    Some((cur, origin))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub tactic: Tactic,
    /// Id of the adjusted tactic the modifications refer to.
    pub source: TacticId,
    pub modifications: Vec<Modification>,
}

/// Breadth-first search from `t` over `moves`, returning every distinct
/// goal pattern at the first depth where one exists, with one modification
/// path each. States for which `alive` fails are not expanded.
fn bfs(
    t: &Pattern,
    max_depth: usize,
    moves: impl Fn(&Window) -> Vec<Modification>,
    alive: impl Fn(&Window) -> bool,
    goal: impl Fn(&Pattern) -> bool,
) -> Vec<(Pattern, Vec<Modification>)> {
    let start = Window::of(t);
    let mut seen: HashSet<Window> = HashSet::from([start.clone()]);
    let mut frontier = vec![(start, Vec::new())];
    for depth in 0..=max_depth {
        let mut found: Vec<(Pattern, Vec<Modification>)> = Vec::new();
        let mut found_set = HashSet::new();
        for (w, path) in &frontier {
            if let Some(p) = w.pattern() {
                if goal(&p) && found_set.insert(p.clone()) {
                    found.push((p, path.clone()));
                }
            }
        }
        if !found.is_empty() || depth == max_depth {
            return found;
        }
        let mut next = Vec::new();
        for (w, path) in &frontier {
            for m in moves(w) {
                if let Some(nw) = w.apply(&m) {
                    if alive(&nw) && seen.insert(nw.clone()) {
                        let mut np = path.clone();
                        np.push(m);
                        next.push((nw, np));
                    }
                }
            }
        }
        if next.is_empty() {
            return Vec::new();
        }
        frontier = next;
    }
    Vec::new()
}

/// Values seen at frame offset `event`, feature `f`, across `matches`.
fn observed(d: &Dataset, matches: &[(u32, u32)], event: isize, f: FeatureId) -> BTreeSet<ValueId> {
    matches
        .iter()
        .filter_map(|&(r, s)| {
            let r = &d.rallies[r as usize];
            let pos = s as isize + event;
            (pos >= 0 && (pos as usize) < r.len()).then(|| r.value(pos as usize, f))
        })
        .collect()
}

fn any_fit(d: &Dataset, matches: &[(u32, u32)], w: &Window) -> bool {
    matches.iter().any(|&(r, s)| w.fits(d, r, s))
}

fn no_candidates(msg: impl Into<String>) -> Error {
    Error::NoCandidates(msg.into())
}

/// Generates the minimally modified candidates for the local constraint `c`
/// applied to `targets` (the tactics `c` references, in order). Candidate
/// ids are allocated from `next_id`.
pub fn generate_fine_tuning(
    d: &Dataset,
    targets: &[Tactic],
    c: &Constraint,
    next_id: &mut TacticId,
) -> Result<Vec<Candidate>> {
    let mut found: Vec<(Pattern, TacticId, Vec<Modification>)> = Vec::new();
    match c {
        Constraint::DeleteTactic { .. } => return Ok(Vec::new()),
        Constraint::SplitByFeature { feature, .. } => {
            for t in targets {
                found.extend(split(d, t, *feature)?);
            }
            if found.is_empty() {
                return Err(no_candidates(format!(
                    "no event of the tactic splits on feature {feature} into two or more frequent children"
                )));
            }
        }
        Constraint::SpecifyFeature { features, .. } => {
            for t in targets {
                found.extend(specify(d, t, features)?);
            }
        }
        Constraint::MergeTactics { .. } => {
            let pats: Vec<&Pattern> = targets.iter().map(|t| &t.pattern).collect();
            let (sup, origin) =
                super_tactic(&pats).ok_or_else(|| no_candidates("the tactics share no common value"))?;
            let first = &targets[0].pattern;
            let mut mods = Vec::new();
            for (i, f, _) in first.slots() {
                let j = i as isize - origin;
                if j < 0 || j >= sup.len() as isize || sup.get(j as usize, f) != first.get(i, f) {
                    mods.push(Modification::remove(i as isize, f));
                }
            }
            found.push((sup, targets[0].id, mods));
        }
        Constraint::ExpandTactic { direction, hits, .. } => {
            let t = &targets[0];
            found.extend(expand(d, t, *direction, *hits)?);
        }
        Constraint::TrimTactic { direction, hits, .. } => {
            let t = &targets[0];
            let target = trim_target(&t.pattern, *direction, *hits)
                .ok_or_else(|| no_candidates("trimming would remove every concrete value"))?;
            let len = t.len() as isize;
            let range = match direction {
                Direction::Back => len - *hits as isize..len,
                Direction::Front => 0..*hits as isize,
            };
            let moves = |w: &Window| {
                let first = range.clone().flat_map(|i| (0..t.pattern.k()).map(move |f| (i, f))).find(|&(i, f)| {
                    let at = i - w.origin;
                    at >= 0 && (at as usize) < w.events.len() && w.events[at as usize].slots[f].is_some()
                });
                first.map(|(i, f)| Modification::remove(i, f)).into_iter().collect()
            };
            let hits = bfs(&t.pattern, t.pattern.nonnull(), moves, |_| true, |p| p == &target);
            found.extend(hits.into_iter().map(|(p, m)| (p, t.id, m)));
        }
        _ => return Err(Error::InvalidParams(format!("{c} is not a local constraint"))),
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (pattern, source, modifications) in found {
        if !seen.insert(pattern.clone()) || scan_matches(d, &pattern).is_empty() {
            continue;
        }
        out.push(Candidate {
            tactic: Tactic::new(*next_id, pattern),
            source,
            modifications,
        });
        *next_id += 1;
    }
    if out.is_empty() {
        return Err(no_candidates(format!("no candidate for {c} matches the data")));
    }
    Ok(out)
}

type Found = Vec<(Pattern, TacticId, Vec<Modification>)>;

fn split(d: &Dataset, t: &Tactic, f: FeatureId) -> Result<Found> {
    let holes: Vec<usize> = (0..t.len()).filter(|&i| t.pattern.get(i, f).is_none()).collect();
    if holes.is_empty() {
        return Err(no_candidates(format!("tactic {} has no null slot in feature {f}", t.id)));
    }
    let matches = scan_matches(d, &t.pattern);
    let moves = |_: &Window| {
        holes
            .iter()
            .flat_map(|&i| observed(d, &matches, i as isize, f).into_iter().map(move |v| Modification::add(i as isize, f, v)))
            .collect()
    };
    let c = Constraint::SplitByFeature {
        tactics: vec![t.id],
        feature: f,
    };
    let children = bfs(&t.pattern, 1, moves, |_| true, |p| satisfies(&c, &[&t.pattern], p));
    let mut groups: BTreeMap<isize, Vec<(Pattern, Vec<Modification>)>> = BTreeMap::new();
    for (p, mods) in children {
        let freq = Prepared::new(d, Tactic::new(0, p.clone())).standalone_freq();
        if freq >= 2 {
            groups.entry(mods[0].event).or_default().push((p, mods));
        }
    }
    Ok(groups
        .into_values()
        .filter(|g| g.len() >= 2)
        .flatten()
        .map(|(p, m)| (p, t.id, m))
        .collect())
}

fn specify(d: &Dataset, t: &Tactic, features: &[FeatureId]) -> Result<Found> {
    let holes: Vec<(usize, FeatureId)> = (0..t.len())
        .flat_map(|i| features.iter().map(move |&f| (i, f)))
        .filter(|&(i, f)| t.pattern.get(i, f).is_none())
        .collect();
    if holes.is_empty() {
        return Err(no_candidates(format!("tactic {} already specifies every requested feature", t.id)));
    }
    let matches = scan_matches(d, &t.pattern);
    let moves = |w: &Window| {
        let next = holes.iter().find(|&&(i, f)| w.events[i - w.origin as usize].slots[f].is_none());
        match next {
            Some(&(i, f)) => observed(d, &matches, i as isize, f)
                .into_iter()
                .map(|v| Modification::add(i as isize, f, v))
                .collect(),
            None => Vec::new(),
        }
    };
    let c = Constraint::SpecifyFeature {
        tactics: vec![t.id],
        features: features.to_vec(),
    };
    let found = bfs(
        &t.pattern,
        holes.len(),
        moves,
        |w| any_fit(d, &matches, w),
        |p| satisfies(&c, &[&t.pattern], p),
    );
    Ok(found.into_iter().map(|(p, m)| (p, t.id, m)).collect())
}

fn expand(d: &Dataset, t: &Tactic, direction: Direction, hits: usize) -> Result<Found> {
    let matches = scan_matches(d, &t.pattern);
    let len = t.len() as isize;
    let room = matches.iter().any(|&(r, s)| match direction {
        Direction::Back => s as usize + t.len() + hits <= d.rallies[r as usize].len(),
        Direction::Front => s as usize >= hits,
    });
    if !room {
        return Err(no_candidates(format!(
            "every usage of tactic {} lies within {hits} hit(s) of the rally boundary",
            t.id
        )));
    }
    let moves = |w: &Window| {
        let added = w.events.len() - t.len();
        if added >= hits {
            return Vec::new();
        }
        let event = match direction {
            Direction::Back => len + added as isize,
            Direction::Front => -1 - added as isize,
        };
        (0..t.pattern.k())
            .flat_map(|f| observed(d, &matches, event, f).into_iter().map(move |v| Modification::add(event, f, v)))
            .collect()
    };
    let c = Constraint::ExpandTactic {
        tactic: t.id,
        direction,
        hits,
    };
    let found = bfs(
        &t.pattern,
        hits,
        moves,
        |w| any_fit(d, &matches, w),
        |p| satisfies(&c, &[&t.pattern], p),
    );
    Ok(found.into_iter().map(|(p, m)| (p, t.id, m)).collect())
}

/// Candidate order: standalone frequency desc, fewer null slots, lower id.
fn candidate_order(d: &Dataset, can: Vec<Tactic>) -> Vec<Prepared> {
    let mut prepared: Vec<(usize, Prepared)> = can
        .into_iter()
        .map(|t| {
            let p = Prepared::new(d, t);
            (p.standalone_freq(), p)
        })
        .collect();
    prepared.sort_by(|(fa, a), (fb, b)| {
        fb.cmp(fa)
            .then(a.tactic.pattern.null_slots().cmp(&b.tactic.pattern.null_slots()))
            .then(a.tactic.id.cmp(&b.tactic.id))
    });
    prepared.into_iter().map(|(_, p)| p).collect()
}

/// Replaces the tactics `adj` of `tactics` by candidates from `can`.
/// Candidates are visited by descending frequency; one is admitted when it
/// lowers L* or when nothing has been admitted yet, and each admission is
/// followed by pruning earlier admitted candidates whose removal does not
/// raise L*. Every other tactic is kept as is. Candidates already present
/// among the kept tactics are ignored.
pub fn fine_tune_optimize(
    d: &Dataset,
    tactics: &[Tactic],
    adj: &[TacticId],
    can: Vec<Tactic>,
    p: &MetricParams,
) -> Vec<Tactic> {
    let kept: Vec<Tactic> = tactics.iter().filter(|t| !adj.contains(&t.id)).cloned().collect();
    let present: HashSet<Pattern> = kept.iter().map(|t| t.pattern.clone()).collect();
    let mut unique = HashSet::new();
    let can: Vec<Tactic> = can
        .into_iter()
        .filter(|t| !present.contains(&t.pattern) && unique.insert(t.pattern.clone()))
        .collect();

    let mut engine = CoverEngine::new(d, p.clone(), kept);
    let mut admitted: Vec<usize> = Vec::new();
    for ct in candidate_order(d, can) {
        if !(engine.delta_add(&ct) < -EPS || admitted.is_empty()) {
            continue;
        }
        let slot = engine.add(ct);
        let mut survivors = Vec::new();
        for s in admitted {
            if engine.delta_remove(s) <= EPS {
                engine.remove(s);
            } else {
                survivors.push(s);
            }
        }
        survivors.push(slot);
        admitted = survivors;
    }
    let mut slots: Vec<usize> = engine.slots().collect();
    slots.sort_unstable();
    slots.iter().map(|&s| engine.tactic(s).clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::dl_of;
    use crate::model::tests::{pat, rally};
    use crate::model::FeatureSchema;

    fn data(rallies: &[&[&[u32]]]) -> Dataset {
        let k = rallies[0][0].len();
        Dataset::new(
            FeatureSchema::synthetic(k, 4),
            rallies.iter().enumerate().map(|(i, r)| rally(i as u64 + 1, r)).collect(),
            0,
        )
        .unwrap()
    }

    #[test]
    fn trim_back_removes_two_values_in_one_candidate() {
        let d = data(&[&[&[0, 1], &[1, 2], &[2, 3]], &[&[0, 1], &[1, 2], &[2, 0]]]);
        let t = Tactic::new(1, pat(&[&[Some(0), None], &[Some(1), Some(2)]]));
        let c = Constraint::TrimTactic {
            tactic: 1,
            direction: Direction::Back,
            hits: 1,
        };
        let mut next = 10;
        let out = generate_fine_tuning(&d, &[t], &c, &mut next).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].modifications.len(), 2);
        assert!(out[0].modifications.iter().all(|m| m.action == Action::Remove));
        assert_eq!(out[0].tactic.pattern, pat(&[&[Some(0), None]]));
        assert_eq!(out[0].tactic.id, 10);
    }

    #[test]
    fn expand_back_offers_one_candidate_per_observed_value() {
        let d = data(&[
            &[&[0, 0], &[1, 0]],
            &[&[0, 1], &[2, 0]],
            &[&[0, 0], &[3, 0]],
        ]);
        let t = Tactic::new(1, pat(&[&[Some(0), None]]));
        let c = Constraint::ExpandTactic {
            tactic: 1,
            direction: Direction::Back,
            hits: 1,
        };
        let out = generate_fine_tuning(&d, &[t], &c, &mut 2).unwrap();
        let f0: Vec<_> = out.iter().filter(|c| c.modifications[0].feature == 0).collect();
        assert_eq!(f0.len(), 3);
        assert!(out.iter().all(|c| c.modifications.len() == 1 && c.modifications[0].action == Action::Add));
        assert!(out.iter().all(|c| c.tactic.len() == 2));
    }

    #[test]
    fn expansion_blocked_by_rally_ends() {
        let d = data(&[&[&[1, 1], &[0, 0]], &[&[2, 2], &[0, 1]]]);
        let t = Tactic::new(1, pat(&[&[Some(0), None]]));
        let c = Constraint::ExpandTactic {
            tactic: 1,
            direction: Direction::Back,
            hits: 1,
        };
        assert!(matches!(generate_fine_tuning(&d, &[t], &c, &mut 2), Err(Error::NoCandidates(_))));
    }

    #[test]
    fn merge_of_identical_tactics_is_identity() {
        let a = pat(&[&[Some(0), Some(1)], &[None, Some(2)]]);
        assert_eq!(super_tactic(&[&a, &a]), Some((a.clone(), 0)));
    }

    #[test]
    fn merge_keeps_common_values_at_best_offset() {
        let a = pat(&[&[Some(0), Some(1)], &[Some(2), Some(3)]]);
        let b = pat(&[&[Some(2), Some(3)], &[Some(1), Some(1)]]);
        let (sup, origin) = super_tactic(&[&a, &b]).unwrap();
        assert_eq!(sup, pat(&[&[Some(2), Some(3)]]));
        assert_eq!(origin, 1);
    }

    #[test]
    fn split_needs_two_frequent_children() {
        let d = data(&[
            &[&[0, 1], &[1, 0]],
            &[&[0, 1], &[1, 0]],
            &[&[0, 2], &[1, 0]],
            &[&[0, 2], &[1, 0]],
            &[&[0, 3], &[1, 0]],
        ]);
        let t = Tactic::new(1, pat(&[&[Some(0), None], &[Some(1), None]]));
        let c = Constraint::SplitByFeature {
            tactics: vec![1],
            feature: 1,
        };
        let out = generate_fine_tuning(&d, &[t.clone()], &c, &mut 2).unwrap();
        let pats: Vec<_> = out.iter().map(|c| c.tactic.pattern.clone()).collect();
        assert_eq!(
            pats,
            vec![pat(&[&[Some(0), Some(1)], &[Some(1), None]]), pat(&[&[Some(0), Some(2)], &[Some(1), None]])]
        );
        let c0 = Constraint::SplitByFeature {
            tactics: vec![1],
            feature: 0,
        };
        assert!(matches!(generate_fine_tuning(&d, &[t], &c0, &mut 2), Err(Error::NoCandidates(_))));
    }

    #[test]
    fn specify_fills_every_event() {
        let d = data(&[&[&[0, 1], &[1, 2]], &[&[0, 1], &[1, 3]], &[&[0, 2], &[1, 3]]]);
        let t = Tactic::new(1, pat(&[&[Some(0), None], &[Some(1), None]]));
        let c = Constraint::SpecifyFeature {
            tactics: vec![1],
            features: vec![1],
        };
        let out = generate_fine_tuning(&d, &[t.clone()], &c, &mut 2).unwrap();
        assert_eq!(out.len(), 3);
        for cand in &out {
            assert_eq!(cand.modifications.len(), 2);
            assert!(satisfies(&c, &[&t.pattern], &cand.tactic.pattern));
            assert_eq!(apply_modifications(&t.pattern, &cand.modifications).as_ref(), Some(&cand.tactic.pattern));
        }
    }

    #[test]
    fn forced_admission_takes_the_most_frequent_candidate() {
        let d = data(&[&[&[0, 0], &[1, 1]], &[&[0, 0], &[2, 2]], &[&[0, 0], &[3, 3]], &[&[3, 0], &[3, 3]]]);
        let t = Tactic::new(1, pat(&[&[Some(0), Some(0)]]));
        let rare = Tactic::new(5, pat(&[&[Some(1), Some(1)]]));
        let common = Tactic::new(6, pat(&[&[None, Some(0)], &[Some(3), None]]));
        let p = MetricParams::with_weights(10.0, 1.0);
        assert!(dl_of(&d, &[rare.clone()], &p) > dl_of(&d, &[], &p));
        let out = fine_tune_optimize(&d, &[t], &[1], vec![rare, common.clone()], &p);
        assert_eq!(out, vec![common]);
    }

    #[test]
    fn delete_keeps_everything_else() {
        let d = data(&[&[&[0, 0], &[1, 1]], &[&[0, 0], &[1, 1]]]);
        let a = Tactic::new(1, pat(&[&[Some(0), Some(0)]]));
        let b = Tactic::new(2, pat(&[&[Some(1), Some(1)]]));
        let out = fine_tune_optimize(&d, &[a, b.clone()], &[1], Vec::new(), &MetricParams::default());
        assert_eq!(out, vec![b]);
    }
}
