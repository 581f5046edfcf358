//! Runtime and recovery benchmark over synthetic datasets, reported in the
//! column layout of the mining-runtime table: |S|, |s_i|, k, |T|, |V|,
//! initial mining time, average global-constraint time and average
//! local-constraint time, plus planted-tactic recovery.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraint::Constraint;
use crate::cover::MetricParams;
use crate::error::{Error, Result};
use crate::miner::{mine_initial, MinerConfig};
use crate::model::{Tactic, TacticId};
use crate::session::{Session, SessionConfig};
use crate::synth::{generate, generate_constraint_suite, recovery_rate, slot_difference, SynthParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub rows: Vec<SynthParams>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub params: MetricParams,
    #[serde(default)]
    pub miner: MinerConfig,
    /// Mine the first row once before timing anything.
    #[serde(default = "default_warmup")]
    pub warmup: bool,
}

fn default_warmup() -> bool {
    true
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidParams("benchmark needs at least one row and one seed".into()));
        }
        for (i, r) in self.rows.iter().enumerate() {
            r.validate().map_err(|e| Error::InvalidParams(format!("row {i}: {e}")))?;
        }
        self.params.validate()?;
        self.miner.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n_sequences: usize,
    pub sequence_length: usize,
    pub n_features: usize,
    pub n_tactics: usize,
    pub values_per_feature: usize,
    pub seed: u64,
    /// Seconds.
    pub t_initial: f64,
    pub avg_t_global: Option<f64>,
    pub avg_t_local: Option<f64>,
    pub max_t_global: Option<f64>,
    pub max_t_local: Option<f64>,
    pub initial_tactics: usize,
    pub final_tactics: usize,
    pub globals_applied: usize,
    pub locals_applied: usize,
    /// Local constraints for which no candidate exists.
    pub locals_without_candidates: usize,
    /// `None` when nothing was planted.
    pub recovery: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub hardware: String,
    pub rows: Vec<BenchRow>,
}

pub fn hardware_summary() -> String {
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    let model = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    format!("{}/{}, {cpus} logical cpus, {model}", std::env::consts::OS, std::env::consts::ARCH)
}

/// The session tactic closest to `planted`, skipping `used`; ties go to
/// the lower id.
fn nearest(tactics: &[Tactic], planted: &Tactic, used: &[TacticId]) -> Option<TacticId> {
    tactics
        .iter()
        .filter(|t| !used.contains(&t.id))
        .min_by_key(|t| (slot_difference(&planted.pattern, &t.pattern), t.id))
        .map(|t| t.id)
}

/// Rewrites the planted ids of a local constraint to session tactic ids.
fn resolve(c: &Constraint, planted: &[Tactic], tactics: &[Tactic]) -> Option<Constraint> {
    let mut used: Vec<TacticId> = Vec::new();
    for id in c.tactics() {
        let p = planted.iter().find(|t| t.id == id)?;
        used.push(nearest(tactics, p, &used)?);
    }
    let mut c = c.clone();
    match &mut c {
        Constraint::SplitByFeature { tactics, .. }
        | Constraint::SpecifyFeature { tactics, .. }
        | Constraint::MergeTactics { tactics }
        | Constraint::DeleteTactic { tactics } => *tactics = used,
        Constraint::ExpandTactic { tactic, .. } | Constraint::TrimTactic { tactic, .. } => *tactic = used[0],
        _ => {}
    }
    Some(c)
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn max(xs: &[f64]) -> Option<f64> {
    xs.iter().copied().reduce(f64::max)
}

pub fn run_row(p: &SynthParams, seed: u64, cfg: &BenchConfig) -> Result<BenchRow> {
    let data = generate(&p.clone().with_seed(seed))?;
    let config = SessionConfig {
        params: cfg.params.clone(),
        miner: MinerConfig { seed, ..cfg.miner.clone() },
        ..SessionConfig::default()
    };
    let dataset = Arc::new(data.dataset.clone());
    let started = Instant::now();
    let mut session = Session::new(dataset, config)?;
    let t_initial = started.elapsed().as_secs_f64();
    let initial_tactics = session.tactics().len();
    let recovery = recovery_rate(&data.planted, session.tactics());

    let suite = generate_constraint_suite(&data, seed);
    let (mut globals, mut locals): (Vec<Constraint>, Vec<Constraint>) =
        suite.into_iter().partition(Constraint::is_global);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    globals.shuffle(&mut rng);
    locals.shuffle(&mut rng);

    let mut t_global = Vec::new();
    for c in &globals {
        let started = Instant::now();
        let diff = session.preview(c)?;
        session.apply(&diff)?;
        t_global.push(started.elapsed().as_secs_f64());
    }
    let mut t_local = Vec::new();
    let mut without_candidates = 0;
    for c in &locals {
        let Some(c) = resolve(c, &data.planted, session.tactics()) else {
            continue;
        };
        let started = Instant::now();
        let diff = session.preview(&c)?;
        if diff.reason.is_some() {
            without_candidates += 1;
        } else {
            session.apply(&diff)?;
        }
        t_local.push(started.elapsed().as_secs_f64());
    }
    Ok(BenchRow {
        n_sequences: p.n_sequences,
        sequence_length: p.sequence_length,
        n_features: p.n_features,
        n_tactics: p.n_tactics,
        values_per_feature: p.values_per_feature,
        seed,
        t_initial,
        avg_t_global: mean(&t_global),
        avg_t_local: mean(&t_local),
        max_t_global: max(&t_global),
        max_t_local: max(&t_local),
        initial_tactics,
        final_tactics: session.tactics().len(),
        globals_applied: t_global.len(),
        locals_applied: t_local.len() - without_candidates,
        locals_without_candidates: without_candidates,
        recovery,
    })
}

/// Runs every row for every seed, one at a time.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    if cfg.warmup {
        let first = generate(&cfg.rows[0].clone().with_seed(cfg.seeds[0]))?;
        mine_initial(&first.dataset, &cfg.params, &cfg.miner);
    }
    let mut rows = Vec::new();
    for p in &cfg.rows {
        for &seed in &cfg.seeds {
            rows.push(run_row(p, seed, cfg)?);
        }
    }
    Ok(BenchReport {
        hardware: hardware_summary(),
        rows,
    })
}

impl BenchReport {
    /// Copy with every timing set to zero, for comparing runs.
    pub fn masked(&self) -> Self {
        let mut r = self.clone();
        for row in &mut r.rows {
            row.t_initial = 0.0;
            for t in [
                &mut row.avg_t_global,
                &mut row.avg_t_local,
                &mut row.max_t_global,
                &mut row.max_t_local,
            ] {
                if let Some(x) = t.as_mut() {
                    *x = 0.0;
                }
            }
        }
        r
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Fixed-width text table.
    pub fn table(&self) -> String {
        let opt = |x: Option<f64>, digits: usize| x.map_or("n/a".to_string(), |v| format!("{v:.digits$}"));
        let mut s = String::new();
        let _ = writeln!(s, "# {}", self.hardware);
        let _ = writeln!(
            s,
            "{:>6} {:>6} {:>3} {:>4} {:>4} {:>6} {:>10} {:>12} {:>12} {:>9}",
            "|S|", "|s_i|", "k", "|T|", "|V|", "seed", "t_i(s)", "avg.t_g(s)", "avg.t_l(s)", "recovery"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>6} {:>6} {:>3} {:>4} {:>4} {:>6} {:>10.3} {:>12} {:>12} {:>9}",
                r.n_sequences,
                r.sequence_length,
                r.n_features,
                r.n_tactics,
                r.values_per_feature,
                r.seed,
                r.t_initial,
                opt(r.avg_t_global, 3),
                opt(r.avg_t_local, 4),
                opt(r.recovery, 2),
            );
        }
        s
    }
}
