//! A steering session: the current tactic set, the accumulated metric
//! parameters, the frozen projection and the apply/undo history.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constraint::{compile_onto, Constraint};
use crate::cover::{evaluate, Evaluation, MetricParams, TacticStats};
use crate::error::{Error, Result};
use crate::finetune::{fine_tune_optimize, generate_fine_tuning, Modification};
use crate::miner::{mine_with, MinerConfig};
use crate::model::{Dataset, Pattern, Rally, Tactic, TacticId, Usage};
use crate::nl::ParseContext;
use crate::projection::{fit_projection, BasisSet, ProjectedPoint, ProjectionModel, DEFAULT_BASIS_SIZE};

pub const DEFAULT_SERVE_WINDOW: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    /// Starting parameters; global constraints are compiled on top.
    pub params: MetricParams,
    pub miner: MinerConfig,
    pub basis_size: usize,
    /// Last hit index of a "serving" tactic.
    pub serve_window: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            params: MetricParams::default(),
            miner: MinerConfig::default(),
            basis_size: DEFAULT_BASIS_SIZE,
            serve_window: DEFAULT_SERVE_WINDOW,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.miner.validate()?;
        if self.basis_size < 2 || self.serve_window == 0 {
            return Err(Error::InvalidParams("basis_size must be at least 2 and serve_window positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    /// Ordered by id.
    pub tactics: Vec<Tactic>,
    pub params: MetricParams,
    pub next_id: TacticId,
}

/// Where an added tactic came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Origin {
    pub source: TacticId,
    pub modifications: Vec<Modification>,
}

/// The effect an adjustment would have on the session, computed without
/// changing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentDiff {
    pub base_version: u64,
    pub constraint: Constraint,
    pub removed: Vec<TacticId>,
    pub added: Vec<Tactic>,
    pub added_stats: Vec<TacticStats>,
    /// Parallel to `added`; `None` for re-mined tactics.
    pub origins: Vec<Option<Origin>>,
    /// Both scores are measured under `params`.
    pub old_score: f64,
    pub new_score: f64,
    pub params: MetricParams,
    pub next_id: TacticId,
    /// Set when the constraint produced no candidates.
    pub reason: Option<String>,
}

impl AdjustmentDiff {
    pub fn is_empty(&self) -> bool {
        self.removed.is_empty() && self.added.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub constraint: Constraint,
    pub diff: AdjustmentDiff,
    /// State before the adjustment.
    pub snapshot: Snapshot,
}

/// Everything about a session except the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub config: SessionConfig,
    pub current: Snapshot,
    pub version: u64,
    pub history: Vec<HistoryEntry>,
    pub projection: ProjectionModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TacticView {
    pub tactic: Tactic,
    pub stats: TacticStats,
    pub point: ProjectedPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RallyUsage {
    pub usage: Usage,
    pub rally: Rally,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Drilldown {
    pub tactic: Tactic,
    pub stats: TacticStats,
    pub wins: Vec<RallyUsage>,
    pub losses: Vec<RallyUsage>,
}

#[derive(Debug, Clone)]
pub struct Session {
    dataset: Arc<Dataset>,
    state: SessionState,
}

impl Session {
    /// Mines the initial tactic set and fits the projection on it.
    pub fn new(dataset: Arc<Dataset>, config: SessionConfig) -> Result<Self> {
        config.validate()?;
        let mined = mine_with(&dataset, &config.params, &config.miner, Vec::new(), 1).tactics;
        let tactics = mined
            .into_iter()
            .enumerate()
            .map(|(i, t)| Tactic::new(i as TacticId + 1, t.pattern))
            .collect();
        Self::with_tactics(dataset, config, tactics)
    }

    /// Starts a session from a given tactic set.
    pub fn with_tactics(dataset: Arc<Dataset>, config: SessionConfig, mut tactics: Vec<Tactic>) -> Result<Self> {
        config.validate()?;
        check_tactics(&dataset, &tactics)?;
        tactics.sort_by_key(|t| t.id);
        let next_id = tactics.last().map_or(1, |t| t.id + 1);
        let current = Snapshot {
            tactics,
            params: config.params.clone(),
            next_id,
        };
        let projection = fit(&dataset, &current, config.basis_size);
        Ok(Session {
            dataset,
            state: SessionState {
                config,
                current,
                version: 0,
                history: Vec::new(),
                projection,
            },
        })
    }

    /// Rebuilds a session from saved state.
    pub fn restore(dataset: Arc<Dataset>, state: SessionState) -> Result<Self> {
        state.config.validate()?;
        check_tactics(&dataset, &state.current.tactics)?;
        Ok(Session { dataset, state })
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.dataset
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn snapshot(&self) -> &Snapshot {
        &self.state.current
    }

    pub fn tactics(&self) -> &[Tactic] {
        &self.state.current.tactics
    }

    pub fn params(&self) -> &MetricParams {
        &self.state.current.params
    }

    pub fn version(&self) -> u64 {
        self.state.version
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.state.history
    }

    pub fn projection(&self) -> &ProjectionModel {
        &self.state.projection
    }

    pub fn evaluation(&self) -> Evaluation {
        evaluate(&self.dataset, self.tactics(), self.params())
    }

    pub fn view(&self) -> Vec<TacticView> {
        let eval = self.evaluation();
        self.tactics()
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let stats = eval.stats(&self.dataset, i);
                let point = self.state.projection.project(t, stats.freq, stats.importance, stats.win_rate);
                TacticView {
                    tactic: t.clone(),
                    stats,
                    point,
                }
            })
            .collect()
    }

    pub fn project(&self) -> Vec<ProjectedPoint> {
        self.view().into_iter().map(|v| v.point).collect()
    }

    /// Refits the projection on the current set.
    pub fn reset_projection(&mut self) {
        self.state.projection = fit(&self.dataset, &self.state.current, self.state.config.basis_size);
        self.state.version += 1;
    }

    fn position(&self, id: TacticId) -> Result<usize> {
        self.tactics().iter().position(|t| t.id == id).ok_or(Error::UnknownTactic(id))
    }

    pub fn drilldown(&self, id: TacticId) -> Result<Drilldown> {
        let i = self.position(id)?;
        let eval = self.evaluation();
        let index = self.dataset.rally_index();
        let (mut wins, mut losses) = (Vec::new(), Vec::new());
        for &usage in &eval.usages[i] {
            let rally = self.dataset.rallies[index[&usage.rally_id]].clone();
            let list = if rally.winner == self.dataset.focal_player { &mut wins } else { &mut losses };
            list.push(RallyUsage { usage, rally });
        }
        Ok(Drilldown {
            tactic: self.tactics()[i].clone(),
            stats: eval.stats(&self.dataset, i),
            wins,
            losses,
        })
    }

    /// Lower median tactic length, weighting each tactic by its usage count
    /// (at least 1). 1 for an empty set.
    pub fn typical_length(&self) -> usize {
        let eval = self.evaluation();
        let mut lengths: Vec<usize> = Vec::new();
        for (t, u) in self.tactics().iter().zip(&eval.usages) {
            lengths.extend(std::iter::repeat_n(t.len(), u.len().max(1)));
        }
        lengths.sort_unstable();
        lengths.get(lengths.len().saturating_sub(1) / 2).copied().unwrap_or(1)
    }

    pub fn parse_context(&self, selected: &[TacticId]) -> ParseContext {
        ParseContext {
            tactic_ids: self.tactics().iter().map(|t| t.id).collect(),
            selected: selected.to_vec(),
            features: self.dataset.schema.features.iter().map(|f| f.name.clone()).collect(),
            typical_length: self.typical_length(),
            serve_window: self.state.config.serve_window,
        }
    }

    pub fn set_pinned(&mut self, id: TacticId, pinned: bool) -> Result<u64> {
        let i = self.position(id)?;
        self.state.current.tactics[i].pinned = pinned;
        self.state.version += 1;
        Ok(self.state.version)
    }

    /// Computes what `c` would do to the current set.
    pub fn preview(&self, c: &Constraint) -> Result<AdjustmentDiff> {
        c.validate(&self.dataset.schema)?;
        if c.is_global() {
            self.preview_global(c)
        } else {
            self.preview_local(c)
        }
    }

    fn preview_global(&self, c: &Constraint) -> Result<AdjustmentDiff> {
        let cur = &self.state.current;
        let params = compile_onto(&cur.params, std::slice::from_ref(c))?;
        let seeds: Vec<Tactic> = cur.tactics.iter().filter(|t| t.pinned).cloned().collect();
        let mined = mine_with(&self.dataset, &params, &self.state.config.miner, seeds, cur.next_id).tactics;
        let existing: HashMap<&Pattern, TacticId> = cur.tactics.iter().map(|t| (&t.pattern, t.id)).collect();
        let mut next_id = cur.next_id;
        let mut tactics = Vec::with_capacity(mined.len());
        for mut t in mined {
            match existing.get(&t.pattern) {
                Some(&id) => t.id = id,
                None => {
                    t.id = next_id;
                    next_id += 1;
                }
            }
            tactics.push(t);
        }
        let origins = vec![None; tactics.len()];
        self.diff(c, params, tactics, origins, next_id)
    }

    fn preview_local(&self, c: &Constraint) -> Result<AdjustmentDiff> {
        let cur = &self.state.current;
        let mut ids = c.tactics();
        let mut seen = HashSet::new();
        ids.retain(|id| seen.insert(*id));
        let mut targets = Vec::with_capacity(ids.len());
        for &id in &ids {
            let t = &cur.tactics[self.position(id)?];
            if t.pinned {
                return Err(Error::PinnedTactic(id));
            }
            targets.push(t.clone());
        }
        let mut counter = cur.next_id;
        let candidates = match generate_fine_tuning(&self.dataset, &targets, c, &mut counter) {
            Ok(cands) => cands,
            Err(Error::NoCandidates(reason)) => return Ok(self.empty_diff(c, reason)),
            Err(e) => return Err(e),
        };
        let origin_of: HashMap<TacticId, Origin> = candidates
            .iter()
            .map(|cand| {
                let origin = Origin {
                    source: cand.source,
                    modifications: cand.modifications.clone(),
                };
                (cand.tactic.id, origin)
            })
            .collect();
        let can = candidates.into_iter().map(|cand| cand.tactic).collect();
        let result = fine_tune_optimize(&self.dataset, &cur.tactics, &ids, can, &cur.params);
        let (mut tactics, mut admitted): (Vec<Tactic>, Vec<Tactic>) =
            result.into_iter().partition(|t| t.id < cur.next_id);
        admitted.sort_by_key(|t| t.id);
        let mut next_id = cur.next_id;
        let mut origins = vec![None; tactics.len()];
        for mut t in admitted {
            origins.push(origin_of.get(&t.id).cloned());
            t.id = next_id;
            next_id += 1;
            tactics.push(t);
        }
        self.diff(c, cur.params.clone(), tactics, origins, next_id)
    }

    fn diff(
        &self,
        c: &Constraint,
        params: MetricParams,
        new_tactics: Vec<Tactic>,
        origins: Vec<Option<Origin>>,
        next_id: TacticId,
    ) -> Result<AdjustmentDiff> {
        let cur = &self.state.current;
        let old_score = evaluate(&self.dataset, &cur.tactics, &params).score;
        let new_eval = evaluate(&self.dataset, &new_tactics, &params);
        let new_ids: HashSet<TacticId> = new_tactics.iter().map(|t| t.id).collect();
        let old_ids: HashSet<TacticId> = cur.tactics.iter().map(|t| t.id).collect();
        let removed = cur.tactics.iter().map(|t| t.id).filter(|id| !new_ids.contains(id)).collect();
        let mut added = Vec::new();
        let mut added_stats = Vec::new();
        let mut added_origins = Vec::new();
        for (i, (t, origin)) in new_tactics.iter().zip(origins).enumerate() {
            if !old_ids.contains(&t.id) {
                added.push(t.clone());
                added_stats.push(new_eval.stats(&self.dataset, i));
                added_origins.push(origin);
            }
        }
        Ok(AdjustmentDiff {
            base_version: self.state.version,
            constraint: c.clone(),
            removed,
            added,
            added_stats,
            origins: added_origins,
            old_score,
            new_score: new_eval.score,
            params,
            next_id,
            reason: None,
        })
    }

    fn empty_diff(&self, c: &Constraint, reason: String) -> AdjustmentDiff {
        let cur = &self.state.current;
        let score = evaluate(&self.dataset, &cur.tactics, &cur.params).score;
        AdjustmentDiff {
            base_version: self.state.version,
            constraint: c.clone(),
            removed: Vec::new(),
            added: Vec::new(),
            added_stats: Vec::new(),
            origins: Vec::new(),
            old_score: score,
            new_score: score,
            params: cur.params.clone(),
            next_id: cur.next_id,
            reason: Some(reason),
        }
    }

    /// Installs a previewed diff. Fails if the session changed since the
    /// preview or the preview found no candidates.
    pub fn apply(&mut self, diff: &AdjustmentDiff) -> Result<u64> {
        if diff.base_version != self.state.version {
            return Err(Error::StaleVersion {
                expected: diff.base_version,
                actual: self.state.version,
            });
        }
        if let Some(reason) = &diff.reason {
            return Err(Error::NoCandidates(reason.clone()));
        }
        check_tactics(&self.dataset, &diff.added)?;
        let before = self.state.current.clone();
        let mut tactics: Vec<Tactic> = before
            .tactics
            .iter()
            .filter(|t| !diff.removed.contains(&t.id))
            .chain(&diff.added)
            .cloned()
            .collect();
        tactics.sort_by_key(|t| t.id);
        self.state.current = Snapshot {
            tactics,
            params: diff.params.clone(),
            next_id: diff.next_id.max(before.next_id),
        };
        self.state.history.push(HistoryEntry {
            constraint: diff.constraint.clone(),
            diff: diff.clone(),
            snapshot: before,
        });
        self.state.version += 1;
        Ok(self.state.version)
    }

    /// Restores the state before the most recent apply.
    pub fn undo(&mut self) -> Result<u64> {
        let entry = self.state.history.pop().ok_or(Error::EmptyHistory)?;
        self.state.current = entry.snapshot;
        self.state.version += 1;
        Ok(self.state.version)
    }
}

fn check_tactics(d: &Dataset, tactics: &[Tactic]) -> Result<()> {
    let mut ids = HashSet::new();
    for t in tactics {
        t.pattern.check_schema(&d.schema)?;
        if !ids.insert(t.id) {
            return Err(Error::InvalidParams(format!("duplicate tactic id {}", t.id)));
        }
    }
    Ok(())
}

fn fit(d: &Dataset, snap: &Snapshot, basis_size: usize) -> ProjectionModel {
    let eval = evaluate(d, &snap.tactics, &snap.params);
    let freqs: Vec<usize> = eval.usages.iter().map(Vec::len).collect();
    let basis = BasisSet::archetypes(&d.schema, &snap.tactics, &freqs, basis_size);
    fit_projection(&snap.tactics, &freqs, basis.clone(), d.k()).unwrap_or_else(|_| ProjectionModel::fallback(basis, d.k()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::Direction;
    use crate::synth::{generate, SynthParams};

    fn session() -> Session {
        let data = generate(&SynthParams::new(40, 8, 3, 3, 5).with_seed(3)).unwrap();
        Session::new(Arc::new(data.dataset), SessionConfig::default()).unwrap()
    }

    #[test]
    fn initial_ids_are_compact() {
        let s = session();
        let ids: Vec<TacticId> = s.tactics().iter().map(|t| t.id).collect();
        assert_eq!(ids, (1..=ids.len() as TacticId).collect::<Vec<_>>());
        assert_eq!(s.snapshot().next_id, ids.len() as TacticId + 1);
    }

    #[test]
    fn delete_preview_matches_importance() {
        let s = session();
        let view = s.view();
        let target = &view[0];
        let diff = s.preview(&Constraint::DeleteTactic { tactics: vec![target.tactic.id] }).unwrap();
        assert_eq!(diff.removed, vec![target.tactic.id]);
        assert!(diff.added.is_empty());
        assert!((diff.new_score - (diff.old_score - target.stats.importance)).abs() < 1e-9);
    }

    #[test]
    fn apply_undo_restores_state() {
        let mut s = session();
        let before = s.snapshot().clone();
        let id = s.tactics()[0].id;
        let diff = s
            .preview(&Constraint::TrimTactic {
                tactic: id,
                direction: Direction::Back,
                hits: 1,
            })
            .unwrap();
        if diff.reason.is_none() {
            s.apply(&diff).unwrap();
            assert_eq!(s.history().len(), 1);
            assert!(matches!(s.apply(&diff), Err(Error::StaleVersion { .. })));
            s.undo().unwrap();
        }
        assert_eq!(s.snapshot(), &before);
        assert!(matches!(s.undo(), Err(Error::EmptyHistory)));
    }

    #[test]
    fn pinned_tactics_cannot_be_adjusted_and_survive_remine() {
        let mut s = session();
        let id = s.tactics()[0].id;
        s.set_pinned(id, true).unwrap();
        let err = s.preview(&Constraint::DeleteTactic { tactics: vec![id] }).unwrap_err();
        assert!(matches!(err, Error::PinnedTactic(_)));
        let diff = s.preview(&Constraint::LengthRange { min: 3, max: None }).unwrap();
        assert!(!diff.removed.contains(&id));
        s.apply(&diff).unwrap();
        assert!(s.tactics().iter().any(|t| t.id == id && t.pinned));
    }

    #[test]
    fn unknown_tactic_is_rejected() {
        let s = session();
        assert!(matches!(
            s.preview(&Constraint::DeleteTactic { tactics: vec![9999] }),
            Err(Error::UnknownTactic(9999))
        ));
    }
}
