//! Batch front end: synthetic data, mining, constraint scripts, scoring and
//! the runtime benchmark.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use steermine::bench::{run_benchmark, BenchConfig};
use steermine::constraint::Constraint;
use steermine::cover::{evaluate, MetricParams};
use steermine::io::{load_dataset, save_dataset, TacticFile};
use steermine::miner::{mine_initial, MinerConfig};
use steermine::model::{Dataset, Tactic, TacticId};
use steermine::session::{Session, SessionConfig};
use steermine::synth::{generate, SynthParams};

#[derive(Debug, Parser)]
#[command(name = "steermine", version, about = "Constraint-steered tactic mining")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with planted tactics.
    Gen(GenArgs),
    /// Mine an initial tactic set.
    Mine(MineArgs),
    /// Apply a constraint script to a tactic set.
    Suggest(SuggestArgs),
    /// Report description length, score and per-tactic statistics.
    Score(ScoreArgs),
    /// Time mining and constraint processing over synthetic datasets.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ParamArgs {
    /// Weight of the tactic-set part of the description length.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Weight of the data part of the description length.
    #[arg(long)]
    pub beta: Option<f64>,
}

impl ParamArgs {
    fn apply(&self, mut p: MetricParams) -> MetricParams {
        p.alpha = self.alpha.unwrap_or(p.alpha);
        p.beta = self.beta.unwrap_or(p.beta);
        p
    }
}

#[derive(Debug, Clone, Args)]
pub struct MinerArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Candidates generated per iteration.
    #[arg(long)]
    pub candidates: Option<usize>,
    #[arg(long)]
    pub max_length: Option<usize>,
}

impl MinerArgs {
    fn config(&self) -> MinerConfig {
        let d = MinerConfig::default();
        MinerConfig {
            seed: self.seed,
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            candidates_per_iteration: self.candidates.unwrap_or(d.candidates_per_iteration),
            max_tactic_length: self.max_length.unwrap_or(d.max_tactic_length),
            ..d
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 500)]
    pub sequences: usize,
    #[arg(long, default_value_t = 10)]
    pub length: usize,
    #[arg(long, default_value_t = 3)]
    pub features: usize,
    #[arg(long, default_value_t = 25)]
    pub tactics: usize,
    #[arg(long, default_value_t = 10)]
    pub values: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dataset output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth output path.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct MineArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub miner: MinerArgs,
    /// Tactic file output path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SuggestArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Starting tactic file.
    #[arg(long)]
    pub tactics: PathBuf,
    /// One JSON constraint per line; blank lines and `#` comments are skipped.
    #[arg(long)]
    pub constraints: PathBuf,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub miner: MinerArgs,
    /// Adjusted tactic file output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-constraint log output path.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub tactics: PathBuf,
    #[command(flatten)]
    pub params: ParamArgs,
    /// Output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A benchmark row written as `S/s_i/k/T/V`, e.g. `500/10/3/25/10`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowSpec(pub [usize; 5]);

impl FromStr for RowSpec {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<usize> = s
            .split('/')
            .map(|x| x.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format!("bad row {s:?}: {e}"))?;
        let parts: [usize; 5] = parts.try_into().map_err(|_| format!("row {s:?} needs five numbers S/s_i/k/T/V"))?;
        Ok(RowSpec(parts))
    }
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// TOML benchmark config; overrides `--row` and `--seed`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset row S/s_i/k/T/V; repeatable. Defaults to 500/10/3/25/10.
    #[arg(long = "row")]
    pub rows: Vec<RowSpec>,
    /// Seed; repeatable.
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long)]
    pub no_warmup: bool,
    /// Zero every timing in the JSON report.
    #[arg(long)]
    pub mask_timings: bool,
    /// JSON report output path.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TacticScore {
    pub id: TacticId,
    pub length: usize,
    pub freq: usize,
    pub win_rate: Option<f64>,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub params: MetricParams,
    pub description_length: f64,
    pub score: f64,
    pub tactics: Vec<TacticScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub line: usize,
    pub constraint: Constraint,
    pub applied: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub removed: Vec<TacticId>,
    pub added: Vec<TacticId>,
    pub old_score: f64,
    pub new_score: f64,
}

fn write_json<T: Serialize>(path: &Path, x: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(x)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn dataset(path: &Path) -> Result<Dataset> {
    load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn tactic_file(path: &Path) -> Result<TacticFile> {
    TacticFile::load(path).with_context(|| format!("loading tactics {}", path.display()))
}

/// Tactic file with the score and description length of `tactics` under `p`.
pub fn scored_file(d: &Dataset, tactics: &[Tactic], p: &MetricParams) -> TacticFile {
    let eval = evaluate(d, tactics, p);
    let mut f = TacticFile::new(&d.schema, tactics);
    f.params = Some(p.clone());
    f.score = Some(eval.score);
    f.description_length = Some(eval.dl);
    f
}

pub fn gen(a: &GenArgs) -> Result<()> {
    let p = SynthParams::new(a.sequences, a.length, a.features, a.tactics, a.values).with_seed(a.seed);
    let data = generate(&p)?;
    save_dataset(&data.dataset, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(truth) = &a.truth {
        data.ground_truth().save(truth).with_context(|| format!("writing {}", truth.display()))?;
    }
    Ok(())
}

pub fn mine(a: &MineArgs) -> Result<()> {
    let d = dataset(&a.dataset)?;
    let p = a.params.apply(MetricParams::default());
    p.validate()?;
    let cfg = a.miner.config();
    cfg.validate()?;
    let mined = mine_initial(&d, &p, &cfg);
    let tactics: Vec<Tactic> = mined
        .tactics
        .into_iter()
        .enumerate()
        .map(|(i, t)| Tactic::new(i as TacticId + 1, t.pattern))
        .collect();
    write_json(&a.out, &scored_file(&d, &tactics, &p))
}

pub fn read_script(path: &Path) -> Result<Vec<(usize, Constraint)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let c = serde_json::from_str(line).with_context(|| format!("{}:{}: bad constraint", path.display(), i + 1))?;
        out.push((i + 1, c));
    }
    Ok(out)
}

pub fn suggest(a: &SuggestArgs) -> Result<Vec<ScriptStep>> {
    let d = Arc::new(dataset(&a.dataset)?);
    let file = tactic_file(&a.tactics)?;
    let tactics = file.resolve(&d.schema)?;
    let config = SessionConfig {
        params: a.params.apply(file.params.clone().unwrap_or_default()),
        miner: a.miner.config(),
        ..SessionConfig::default()
    };
    let mut session = Session::with_tactics(d.clone(), config, tactics)?;
    let mut steps = Vec::new();
    for (line, c) in read_script(&a.constraints)? {
        let diff = session.preview(&c).with_context(|| format!("line {line}: {c}"))?;
        let applied = diff.reason.is_none();
        if applied {
            session.apply(&diff)?;
        } else {
            eprintln!("line {line}: {c}: skipped, {}", diff.reason.as_deref().unwrap_or_default());
        }
        steps.push(ScriptStep {
            line,
            constraint: c,
            applied,
            reason: diff.reason.clone(),
            removed: diff.removed.clone(),
            added: diff.added.iter().map(|t| t.id).collect(),
            old_score: diff.old_score,
            new_score: diff.new_score,
        });
    }
    write_json(&a.out, &scored_file(&d, session.tactics(), session.params()))?;
    if let Some(r) = &a.report {
        write_json(r, &steps)?;
    }
    Ok(steps)
}

pub fn score(a: &ScoreArgs) -> Result<ScoreReport> {
    let d = dataset(&a.dataset)?;
    let file = tactic_file(&a.tactics)?;
    let tactics = file.resolve(&d.schema)?;
    let p = a.params.apply(file.params.clone().unwrap_or_default());
    p.validate()?;
    let eval = evaluate(&d, &tactics, &p);
    let report = ScoreReport {
        params: p,
        description_length: eval.dl,
        score: eval.score,
        tactics: tactics
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let s = eval.stats(&d, i);
                TacticScore {
                    id: t.id,
                    length: t.len(),
                    freq: s.freq,
                    win_rate: s.win_rate,
                    importance: s.importance,
                }
            })
            .collect(),
    };
    match &a.out {
        Some(path) => write_json(path, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(report)
}

pub fn bench_config(a: &BenchArgs) -> Result<BenchConfig> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => {
            let rows = if a.rows.is_empty() { vec![RowSpec([500, 10, 3, 25, 10])] } else { a.rows.clone() };
            BenchConfig {
                rows: rows.iter().map(|RowSpec([s, l, k, t, v])| SynthParams::new(*s, *l, *k, *t, *v)).collect(),
                seeds: if a.seeds.is_empty() { vec![0] } else { a.seeds.clone() },
                params: MetricParams::default(),
                miner: MinerConfig::default(),
                warmup: true,
            }
        }
    };
    cfg.params = a.params.apply(cfg.params);
    if a.no_warmup {
        cfg.warmup = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn bench(a: &BenchArgs) -> Result<()> {
    let cfg = bench_config(a)?;
    let report = run_benchmark(&cfg)?;
    print!("{}", report.table());
    if let Some(path) = &a.report {
        let out = if a.mask_timings { report.masked() } else { report };
        write_json(path, &out)?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => gen(a),
        Command::Mine(a) => mine(a),
        Command::Suggest(a) => suggest(a).map(|_| ()),
        Command::Score(a) => score(a).map(|_| ()),
        Command::Bench(a) => {
            if a.config.is_some() && (!a.rows.is_empty() || !a.seeds.is_empty()) {
                bail!("--config cannot be combined with --row or --seed");
            }
            bench(a)
        }
    }
}
