//! Incremental evaluation of L* for a changing tactic set.
//!
//! The greedy cover is per-rally and its priority order depends only on the
//! tactics, so adding or removing a tactic only changes the rallies where
//! that tactic matches. The engine keeps every match of every live tactic
//! indexed by rally, the current cost of each rally, and recomputes only the
//! touched rallies. L* decomposes per usage as
//! `alpha * (1 + out_of_range + len_con)` plus the weighted residual, so
//! each rally cost is self-contained.

use std::cmp::Reverse;

use crate::cover::{priority, MetricParams};
use crate::model::{Dataset, Pattern, Tactic, Usage};

pub(crate) type Key = (Reverse<usize>, Reverse<usize>, u64);

/// Total cover order of a candidate usage: tactic specificity first, then
/// start, then tactic id.
#[inline]
fn rank(key: Key, start: u32) -> (Reverse<usize>, Reverse<usize>, u32, u64) {
    (key.0, key.1, start, key.2)
}

/// A tactic with all its match positions, ready to be evaluated.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    pub tactic: Tactic,
    /// (rally index, 0-based start), ordered.
    pub matches: Vec<(u32, u32)>,
}

impl Prepared {
    pub fn new(data: &Dataset, tactic: Tactic) -> Self {
        let matches = scan_matches(data, &tactic.pattern);
        Prepared { tactic, matches }
    }

    #[cfg(test)]
    pub fn support(&self) -> usize {
        self.matches.len()
    }

    /// Greedy non-overlapping occurrence count of the tactic on its own.
    pub fn standalone_freq(&self) -> usize {
        let len = self.tactic.len() as u32;
        let mut count = 0;
        let mut last: Option<(u32, u32)> = None;
        for &(r, s) in &self.matches {
            match last {
                Some((lr, end)) if lr == r && s < end => {}
                _ => {
                    count += 1;
                    last = Some((r, s + len));
                }
            }
        }
        count
    }
}

pub(crate) fn scan_matches(data: &Dataset, pattern: &Pattern) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    let len = pattern.len();
    for (ri, r) in data.rallies.iter().enumerate() {
        if r.len() < len {
            continue;
        }
        for start in 1..=r.len() + 1 - len {
            if pattern.matches_at(r, start) {
                out.push((ri as u32, start as u32 - 1));
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
struct Entry {
    tactic: Tactic,
    key: Key,
    len: u32,
    /// alpha * (1 + len_con)
    base_cost: f64,
    /// sum over concrete slots of beta * (1 + imp(feature))
    covered_weight: f64,
    matches: Vec<(u32, u32)>,
    rallies: Vec<u32>,
    freq: usize,
}

#[derive(Debug, Clone, Copy)]
struct Occ {
    key: Key,
    slot: u32,
    start: u32,
}

#[derive(Clone)]
pub(crate) struct CoverEngine<'a> {
    data: &'a Dataset,
    params: MetricParams,
    feature_weight: Vec<f64>,
    entries: Vec<Option<Entry>>,
    by_rally: Vec<Vec<Occ>>,
    rally_cost: Vec<f64>,
    accepted: Vec<Vec<(u32, u32)>>,
    live: usize,
}

fn distinct_rallies(matches: &[(u32, u32)]) -> Vec<u32> {
    let mut out: Vec<u32> = matches.iter().map(|m| m.0).collect();
    out.dedup();
    out
}

impl<'a> CoverEngine<'a> {
    pub fn new(data: &'a Dataset, params: MetricParams, tactics: Vec<Tactic>) -> Self {
        let prepared = tactics.into_iter().map(|t| Prepared::new(data, t)).collect();
        Self::from_prepared(data, params, prepared)
    }

    pub fn from_prepared(data: &'a Dataset, params: MetricParams, tactics: Vec<Prepared>) -> Self {
        let k = data.k();
        let feature_weight: Vec<f64> = (0..k).map(|f| params.beta * (1.0 + params.feature_importance(f))).collect();
        let row_weight: f64 = feature_weight.iter().sum();
        let mut engine = CoverEngine {
            data,
            params,
            feature_weight,
            entries: Vec::new(),
            by_rally: vec![Vec::new(); data.rallies.len()],
            rally_cost: data.rallies.iter().map(|r| r.len() as f64 * row_weight).collect(),
            accepted: vec![Vec::new(); data.rallies.len()],
            live: 0,
        };
        for p in tactics {
            engine.insert(p);
        }
        for r in 0..data.rallies.len() {
            engine.refresh_rally(r);
        }
        engine
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    fn make_entry(&self, p: Prepared) -> Entry {
        let k = self.data.k();
        let per_feature = p.tactic.pattern.nonnull_per_feature();
        let covered_weight = (0..k).map(|f| per_feature[f] as f64 * self.feature_weight[f]).sum();
        Entry {
            key: priority(&p.tactic),
            len: p.tactic.len() as u32,
            base_cost: self.params.alpha * (1.0 + self.params.len_con(p.tactic.len())),
            covered_weight,
            rallies: distinct_rallies(&p.matches),
            matches: p.matches,
            tactic: p.tactic,
            freq: 0,
        }
    }

    fn insert(&mut self, p: Prepared) -> usize {
        let entry = self.make_entry(p);
        let slot = self.entries.len();
        for &(r, start) in &entry.matches {
            let list = &mut self.by_rally[r as usize];
            let occ = Occ {
                key: entry.key,
                slot: slot as u32,
                start,
            };
            let at = list.partition_point(|o| rank(o.key, o.start) < rank(occ.key, occ.start));
            list.insert(at, occ);
        }
        self.entries.push(Some(entry));
        self.live += 1;
        slot
    }

    #[inline]
    fn usage_cost(&self, e: &Entry, start: u32) -> f64 {
        let oor = if self.params.index_in_range(start as usize + 1) {
            0.0
        } else {
            self.params.alpha
        };
        e.base_cost + oor - e.covered_weight
    }

    fn row_base(&self, r: usize) -> f64 {
        self.data.rallies[r].len() as f64 * self.feature_weight.iter().sum::<f64>()
    }

    /// Greedy cover of one rally from the merged occurrence lists, skipping
    /// `skip`. Returns the rally cost and, when asked, the accepted usages.
    fn eval_rally(
        &self,
        r: usize,
        extra: Option<(&Entry, u32, &[(u32, u32)])>,
        skip: Option<usize>,
        mut accepted: Option<&mut Vec<(u32, u32)>>,
    ) -> f64 {
        let rlen = self.data.rallies[r].len();
        let mut taken = [0u64; 4];
        let mut taken_big: Vec<bool> = Vec::new();
        if rlen > 256 {
            taken_big = vec![false; rlen];
        }
        let mut cost = self.row_base(r);
        let mut try_take = |entry: &Entry, slot: u32, start: u32, cost: &mut f64| {
            let s = start as usize;
            let e = s + entry.len as usize;
            let free = if rlen > 256 {
                taken_big[s..e].iter().all(|&x| !x)
            } else {
                (s..e).all(|i| taken[i >> 6] & (1 << (i & 63)) == 0)
            };
            if !free {
                return;
            }
            if rlen > 256 {
                taken_big[s..e].iter_mut().for_each(|x| *x = true);
            } else {
                (s..e).for_each(|i| taken[i >> 6] |= 1 << (i & 63));
            }
            *cost += self.usage_cost(entry, start);
            if let Some(acc) = accepted.as_deref_mut() {
                acc.push((slot, start));
            }
        };

        let list = &self.by_rally[r];
        let extra_occs: &[(u32, u32)] = match extra {
            Some((_, _, m)) => {
                let lo = m.partition_point(|x| x.0 < r as u32);
                let hi = m.partition_point(|x| x.0 <= r as u32);
                &m[lo..hi]
            }
            None => &[],
        };
        let mut i = 0;
        let mut j = 0;
        while i < list.len() || j < extra_occs.len() {
            let take_extra = match (list.get(i), extra_occs.get(j), extra) {
                (Some(o), Some(&(_, s)), Some((e, _, _))) => rank(e.key, s) < rank(o.key, o.start),
                (None, Some(_), _) => true,
                _ => false,
            };
            if take_extra {
                let (e, slot, _) = extra.unwrap();
                try_take(e, slot, extra_occs[j].1, &mut cost);
                j += 1;
            } else {
                let o = list[i];
                i += 1;
                if Some(o.slot as usize) == skip {
                    continue;
                }
                let e = self.entries[o.slot as usize].as_ref().unwrap();
                try_take(e, o.slot, o.start, &mut cost);
            }
        }
        cost
    }

    fn refresh_rally(&mut self, r: usize) {
        let old: Vec<(u32, u32)> = std::mem::take(&mut self.accepted[r]);
        for (slot, _) in &old {
            if let Some(e) = self.entries[*slot as usize].as_mut() {
                e.freq -= 1;
            }
        }
        let mut acc = Vec::new();
        let cost = self.eval_rally(r, None, None, Some(&mut acc));
        for (slot, _) in &acc {
            self.entries[*slot as usize].as_mut().unwrap().freq += 1;
        }
        self.accepted[r] = acc;
        self.rally_cost[r] = cost;
    }

    /// Current L*.
    pub fn dl(&self) -> f64 {
        self.live as f64 + self.rally_cost.iter().sum::<f64>()
    }

    /// L* of the empty tactic set under the same parameters.
    pub fn empty_dl(&self) -> f64 {
        (0..self.data.rallies.len()).map(|r| self.row_base(r)).sum()
    }

    /// Change of L* if `p` were added (with a provisional tactic id).
    pub fn delta_add(&self, p: &Prepared) -> f64 {
        let entry = self.make_entry(Prepared {
            tactic: p.tactic.clone(),
            matches: Vec::new(),
        });
        self.delta_add_entry(&entry, &p.matches)
    }

    fn delta_add_entry(&self, entry: &Entry, matches: &[(u32, u32)]) -> f64 {
        let slot = self.entries.len() as u32;
        let mut delta = 1.0;
        let mut last = u32::MAX;
        for &(r, _) in matches {
            if r == last {
                continue;
            }
            last = r;
            let r = r as usize;
            delta += self.eval_rally(r, Some((entry, slot, matches)), None, None) - self.rally_cost[r];
        }
        delta
    }

    pub fn add(&mut self, p: Prepared) -> usize {
        let slot = self.insert(p);
        let rallies = self.entries[slot].as_ref().unwrap().rallies.clone();
        for r in rallies {
            self.refresh_rally(r as usize);
        }
        slot
    }

    /// Change of L* if the tactic in `slot` were removed.
    pub fn delta_remove(&self, slot: usize) -> f64 {
        let e = self.entries[slot].as_ref().expect("live slot");
        let mut delta = -1.0;
        for &r in &e.rallies {
            let r = r as usize;
            delta += self.eval_rally(r, None, Some(slot), None) - self.rally_cost[r];
        }
        delta
    }

    pub fn remove(&mut self, slot: usize) -> Tactic {
        let e = self.entries[slot].take().expect("live slot");
        self.live -= 1;
        for &r in &e.rallies {
            self.by_rally[r as usize].retain(|o| o.slot as usize != slot);
        }
        for &r in &e.rallies {
            self.refresh_rally(r as usize);
        }
        e.tactic
    }

    pub fn slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().enumerate().filter(|(_, e)| e.is_some()).map(|(i, _)| i)
    }

    pub fn tactic(&self, slot: usize) -> &Tactic {
        &self.entries[slot].as_ref().unwrap().tactic
    }

    #[cfg(test)]
    pub fn freq(&self, slot: usize) -> usize {
        self.entries[slot].as_ref().unwrap().freq
    }

    pub fn matches(&self, slot: usize) -> &[(u32, u32)] {
        &self.entries[slot].as_ref().unwrap().matches
    }

    pub fn find(&self, pattern: &Pattern) -> Option<usize> {
        self.slots().find(|&s| &self.tactic(s).pattern == pattern)
    }

    /// Accepted usages in rally `r` as (slot, 0-based start).
    pub fn accepted(&self, r: usize) -> &[(u32, u32)] {
        &self.accepted[r]
    }

    pub fn usages(&self, slot: usize) -> Vec<Usage> {
        let e = self.entries[slot].as_ref().unwrap();
        let mut out = Vec::with_capacity(e.freq);
        for &r in &e.rallies {
            for &(s, start) in &self.accepted[r as usize] {
                if s as usize == slot {
                    out.push(Usage {
                        rally_id: self.data.rallies[r as usize].id,
                        start: start as usize + 1,
                    });
                }
            }
        }
        out.sort();
        out
    }

    pub fn tactics(&self) -> Vec<Tactic> {
        self.slots().map(|s| self.tactic(s).clone()).collect()
    }
}
