//! Reproducible benchmark experiments over CSV datasets.
//!
//! Every `(dataset, learner, seed)` cell is independent: the seed alone fixes
//! the subsample, the exploration draws and the tree's randomness, so the
//! same configuration always yields byte-identical JSON-lines output no
//! matter how many worker threads run the cells.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::bandit::{EmtCb, EpsilonGreedy, Learner, ParametricCb, ParametricConfig, PemtCb};
use crate::datasets::{load_csv, subsample, top_eigen_explained_variance, BanditEnv, LabelColumn, ScalingTransform, SupervisedDataset};
use crate::error::{Error, Result};
use crate::eval::{aggregate, run, welch_test, AggregatePoint, RunConfig, RunResult, Winner};
use crate::rng::{derive, derive_seed, Stream};
use crate::scorer::{PairFeaturizer, ScorerConfig};
use crate::tree::TreeConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    /// EMT-CB with the self-consistent scorer.
    Emt,
    /// EMT-CB with the interaction-feature scorer.
    EmtNoself,
    Parametric,
    /// Parametric learner stacked on EMT-CB estimates.
    Pemt,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 4] = [
        LearnerKind::Emt,
        LearnerKind::EmtNoself,
        LearnerKind::Parametric,
        LearnerKind::Pemt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::Emt => "emt",
            LearnerKind::EmtNoself => "emt-noself",
            LearnerKind::Parametric => "parametric",
            LearnerKind::Pemt => "pemt",
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LearnerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        LearnerKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let valid: Vec<&str> = LearnerKind::ALL.iter().map(|k| k.name()).collect();
            format!("unknown learner '{s}'; valid learners: {}", valid.join(", "))
        })
    }
}

/// Hyperparameters shared by every learner kind.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LearnerSettings {
    pub epsilon: f64,
    pub leaf_capacity: usize,
    pub eta: f64,
    pub budget: Option<usize>,
    pub hash_bits: u32,
}

impl Default for LearnerSettings {
    fn default() -> Self {
        LearnerSettings {
            epsilon: 0.1,
            leaf_capacity: 100,
            eta: 0.01,
            budget: None,
            hash_bits: 18,
        }
    }
}

impl LearnerSettings {
    fn tree(&self, seed: u64) -> TreeConfig {
        TreeConfig {
            leaf_capacity: self.leaf_capacity,
            memory_budget: self.budget,
            seed: derive_seed(seed, Stream::Tree),
        }
    }

    fn scorer(&self, featurizer: PairFeaturizer) -> ScorerConfig {
        ScorerConfig { eta: self.eta, featurizer }
    }

    fn parametric(&self) -> ParametricConfig {
        ParametricConfig {
            hash_bits: self.hash_bits,
            ..ParametricConfig::default()
        }
    }

    /// Checks everything that does not depend on the dataset; `actions`
    /// bounds the hash width check.
    pub fn validate(&self, actions: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidConfig(format!("--epsilon must lie in [0, 1], got {}", self.epsilon)));
        }
        self.tree(0)
            .validate()
            .map_err(|e| Error::InvalidConfig(format!("--leaf-capacity/--budget: {e}")))?;
        self.scorer(PairFeaturizer::AbsDiff)
            .validate()
            .map_err(|e| Error::InvalidConfig(format!("--eta: {e}")))?;
        self.parametric()
            .validate(actions)
            .map_err(|e| Error::InvalidConfig(format!("--hash-bits: {e}")))
    }
}

/// Builds a learner whose randomness is derived from `seed`.
pub fn build_learner(
    kind: LearnerKind,
    settings: &LearnerSettings,
    context_dim: usize,
    actions: usize,
    seed: u64,
) -> Result<Box<dyn Learner + Send>> {
    let policy = EpsilonGreedy::new(settings.epsilon, derive(seed, Stream::Exploration))?;
    Ok(match kind {
        LearnerKind::Emt | LearnerKind::EmtNoself => {
            let featurizer = if kind == LearnerKind::Emt {
                PairFeaturizer::AbsDiff
            } else {
                PairFeaturizer::Interaction
            };
            Box::new(EmtCb::new(
                context_dim,
                actions,
                settings.tree(seed),
                settings.scorer(featurizer),
                policy,
            )?)
        }
        LearnerKind::Parametric => Box::new(ParametricCb::new(context_dim, actions, settings.parametric(), policy)?),
        LearnerKind::Pemt => Box::new(PemtCb::new(
            context_dim,
            actions,
            settings.tree(seed),
            settings.scorer(PairFeaturizer::AbsDiff),
            settings.parametric(),
            policy,
        )?),
    })
}

/// Subsamples `data` with the seed's subsample stream and plays one run.
/// Learners given the same seed see the same stream.
pub fn run_seed(
    data: &SupervisedDataset,
    kind: LearnerKind,
    settings: &LearnerSettings,
    take: usize,
    seed: u64,
) -> Result<RunResult> {
    let sample = subsample(data, take, &mut derive(seed, Stream::Subsample))?;
    let horizon = sample.len();
    let mut learner = build_learner(kind, settings, sample.dim(), sample.classes(), seed)?;
    let mut env = BanditEnv::new(sample);
    run(learner.as_mut(), &mut env, &RunConfig::new(horizon, seed))
}

/// Loads a CSV and min-max scales it over the whole file.
pub fn prepare_dataset(path: &Path, label: &LabelColumn, has_header: bool) -> Result<SupervisedDataset> {
    let raw = load_csv(path, label, has_header)?;
    ScalingTransform::fit(&raw)?.apply(&raw)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub datasets: Vec<PathBuf>,
    pub label: String,
    pub has_header: bool,
    pub learners: Vec<LearnerKind>,
    pub seeds: u64,
    pub take: usize,
    #[serde(flatten)]
    pub settings: LearnerSettings,
    pub alpha: f64,
    /// Worker threads; `None` uses every core. Not echoed, since it never
    /// changes results.
    #[serde(skip)]
    pub jobs: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(datasets: Vec<PathBuf>, label: impl Into<String>, learners: Vec<LearnerKind>) -> Self {
        ExperimentConfig {
            datasets,
            label: label.into(),
            has_header: true,
            learners,
            seeds: 50,
            take: 4000,
            settings: LearnerSettings::default(),
            alpha: 0.05,
            jobs: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::InvalidConfig("at least one --dataset is required".into()));
        }
        if self.learners.is_empty() {
            return Err(Error::InvalidConfig("at least one --learner is required".into()));
        }
        if self.seeds == 0 {
            return Err(Error::InvalidConfig("--seeds must be at least 1".into()));
        }
        if self.take == 0 {
            return Err(Error::InvalidConfig("--take must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("--alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.jobs == Some(0) {
            return Err(Error::InvalidConfig("--jobs must be at least 1".into()));
        }
        self.settings.validate(2)
    }
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record<'a> {
    Config {
        command: &'a str,
        version: &'static str,
        config: &'a ExperimentConfig,
    },
    Checkpoint {
        dataset: &'a str,
        learner: LearnerKind,
        seed: u64,
        t: usize,
        progressive_reward: f64,
    },
    Summary {
        dataset: &'a str,
        learner: LearnerKind,
        seed: u64,
        t: usize,
        progressive_reward: f64,
        truncated: bool,
    },
    Aggregate {
        dataset: &'a str,
        learner: LearnerKind,
        seeds: usize,
        final_mean: f64,
        final_stderr: f64,
        points: &'a [AggregatePoint],
    },
    Pair {
        dataset: &'a str,
        learner_a: LearnerKind,
        learner_b: LearnerKind,
        mean_a: f64,
        mean_b: f64,
        t_statistic: f64,
        degrees_of_freedom: f64,
        p_value: f64,
        winner: String,
    },
    WinMatrix {
        learners: &'a [LearnerKind],
        wins: Vec<Vec<serde_json::Value>>,
    },
    Diagnose {
        dataset: &'a str,
        rows: usize,
        features: usize,
        classes: usize,
        top_eigen_explained: f64,
    },
}

fn emit(out: &mut dyn Write, record: &Record<'_>) -> Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Results of one `(dataset, learner)` cell across all seeds, in seed order.
#[derive(Clone, Debug)]
pub struct CellResults {
    pub dataset: String,
    pub learner: LearnerKind,
    pub runs: Vec<RunResult>,
}

fn load_all(cfg: &ExperimentConfig) -> Result<Vec<(String, SupervisedDataset)>> {
    let label: LabelColumn = cfg.label.parse().unwrap_or_else(|e| match e {});
    cfg.datasets
        .iter()
        .map(|path| {
            let ds = prepare_dataset(path, &label, cfg.has_header)?;
            cfg.settings
                .validate(ds.classes())
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
            Ok((path.display().to_string(), ds))
        })
        .collect()
}

/// Validates the configuration, loads every dataset, then runs every cell.
pub fn execute(cfg: &ExperimentConfig) -> Result<Vec<CellResults>> {
    cfg.validate()?;
    let data = load_all(cfg)?;
    let cells: Vec<(usize, LearnerKind, u64)> = (0..data.len())
        .flat_map(|d| {
            cfg.learners
                .iter()
                .flat_map(move |&l| (0..cfg.seeds).map(move |s| (d, l, s)))
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("--jobs: {e}")))?;
    let runs: Vec<RunResult> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(d, kind, seed)| {
                log::info!("{} {kind} seed {seed}", data[d].0);
                run_seed(&data[d].1, kind, &cfg.settings, cfg.take, seed)
            })
            .collect::<Result<_>>()
    })?;
    let per_cell = cfg.seeds as usize;
    Ok(runs
        .chunks(per_cell)
        .zip(cells.iter().step_by(per_cell))
        .map(|(chunk, &(d, learner, _))| CellResults {
            dataset: data[d].0.clone(),
            learner,
            runs: chunk.to_vec(),
        })
        .collect())
}

fn emit_runs(out: &mut dyn Write, cells: &[CellResults]) -> Result<()> {
    for cell in cells {
        for r in &cell.runs {
            for c in &r.checkpoints {
                emit(
                    out,
                    &Record::Checkpoint {
                        dataset: &cell.dataset,
                        learner: cell.learner,
                        seed: r.seed,
                        t: c.t,
                        progressive_reward: c.progressive_reward,
                    },
                )?;
            }
            emit(
                out,
                &Record::Summary {
                    dataset: &cell.dataset,
                    learner: cell.learner,
                    seed: r.seed,
                    t: r.rounds,
                    progressive_reward: r.final_reward,
                    truncated: r.truncated,
                },
            )?;
        }
        if cell.runs.len() >= 2 {
            match aggregate(&cell.runs) {
                Ok(agg) => emit(
                    out,
                    &Record::Aggregate {
                        dataset: &cell.dataset,
                        learner: cell.learner,
                        seeds: agg.seeds,
                        final_mean: agg.final_mean,
                        final_stderr: agg.final_stderr,
                        points: &agg.points,
                    },
                )?,
                // Truncated runs of unequal length cannot share a grid.
                Err(Error::MismatchedCheckpoints) => {
                    log::warn!("{} {}: checkpoint grids differ; no aggregate", cell.dataset, cell.learner)
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(())
}

/// Runs every cell and writes checkpoint, summary and aggregate records.
pub fn cmd_run(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<Vec<CellResults>> {
    let cells = execute(cfg)?;
    emit(out, &Record::Config { command: "run", version: env!("CARGO_PKG_VERSION"), config: cfg })?;
    emit_runs(out, &cells)?;
    out.flush()?;
    Ok(cells)
}

/// Pairwise Welch test of one learner against another on one dataset.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairOutcome {
    pub dataset: String,
    pub learner_a: LearnerKind,
    pub learner_b: LearnerKind,
    pub outcome: crate::eval::SignificanceOutcome,
}

/// `wins[i][j]` counts datasets where learner `i` significantly beats `j`;
/// the diagonal is `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct WinMatrix {
    pub learners: Vec<LearnerKind>,
    pub wins: Vec<Vec<Option<usize>>>,
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub cells: Vec<CellResults>,
    pub pairs: Vec<PairOutcome>,
    pub matrix: WinMatrix,
}

/// Compares every pair of learner entries by final progressive reward.
pub fn compare(cfg: &ExperimentConfig, cells: Vec<CellResults>) -> Result<Comparison> {
    let n = cfg.learners.len();
    let mut wins = vec![vec![Some(0); n]; n];
    for (i, row) in wins.iter_mut().enumerate() {
        row[i] = None;
    }
    let mut pairs = Vec::new();
    for per_dataset in cells.chunks(n) {
        let finals: Vec<Vec<f64>> = per_dataset
            .iter()
            .map(|c| c.runs.iter().map(|r| r.final_reward).collect())
            .collect();
        for i in 0..n {
            for j in i + 1..n {
                let outcome = welch_test(&finals[i], &finals[j], cfg.alpha)?;
                match outcome.winner {
                    Winner::A => *wins[i][j].as_mut().unwrap() += 1,
                    Winner::B => *wins[j][i].as_mut().unwrap() += 1,
                    Winner::Tie => {}
                }
                pairs.push(PairOutcome {
                    dataset: per_dataset[i].dataset.clone(),
                    learner_a: cfg.learners[i],
                    learner_b: cfg.learners[j],
                    outcome,
                });
            }
        }
    }
    Ok(Comparison {
        cells,
        pairs,
        matrix: WinMatrix {
            learners: cfg.learners.clone(),
            wins,
        },
    })
}

/// Runs every cell, then writes the run records followed by one pair record
/// per learner pair and dataset and a final win-count matrix.
pub fn cmd_compare(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<Comparison> {
    if cfg.learners.len() < 2 {
        return Err(Error::InvalidConfig("compare needs at least two --learner values".into()));
    }
    if cfg.seeds < 2 {
        return Err(Error::InvalidConfig("compare needs --seeds of at least 2".into()));
    }
    let cells = execute(cfg)?;
    let cmp = compare(cfg, cells)?;
    emit(out, &Record::Config { command: "compare", version: env!("CARGO_PKG_VERSION"), config: cfg })?;
    emit_runs(out, &cmp.cells)?;
    for p in &cmp.pairs {
        let o = &p.outcome;
        emit(
            out,
            &Record::Pair {
                dataset: &p.dataset,
                learner_a: p.learner_a,
                learner_b: p.learner_b,
                mean_a: o.mean_a,
                mean_b: o.mean_b,
                t_statistic: o.t_statistic,
                degrees_of_freedom: o.degrees_of_freedom,
                p_value: o.p_value,
                winner: match o.winner {
                    Winner::A => p.learner_a.to_string(),
                    Winner::B => p.learner_b.to_string(),
                    Winner::Tie => "tie".into(),
                },
            },
        )?;
    }
    let wins = cmp
        .matrix
        .wins
        .iter()
        .map(|row| {
            row.iter()
                .map(|w| w.map_or_else(|| "—".into(), serde_json::Value::from))
                .collect()
        })
        .collect();
    emit(out, &Record::WinMatrix { learners: &cmp.matrix.learners, wins })?;
    out.flush()?;
    Ok(cmp)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnosis {
    pub rows: usize,
    pub features: usize,
    pub classes: usize,
    /// Share of variance on the top principal component of the raw
    /// (unscaled) features.
    pub top_eigen_explained: f64,
}

pub fn cmd_diagnose(path: &Path, label: &LabelColumn, has_header: bool, out: &mut dyn Write) -> Result<Diagnosis> {
    let ds = load_csv(path, label, has_header)?;
    let diag = Diagnosis {
        rows: ds.len(),
        features: ds.dim(),
        classes: ds.classes(),
        top_eigen_explained: top_eigen_explained_variance(&ds)?,
    };
    emit(
        out,
        &Record::Diagnose {
            dataset: &path.display().to_string(),
            rows: diag.rows,
            features: diag.features,
            classes: diag.classes,
            top_eigen_explained: diag.top_eigen_explained,
        },
    )?;
    out.flush()?;
    Ok(diag)
}
