use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use emt::datasets::LabelColumn;
use emt::experiment::{cmd_compare, cmd_diagnose, cmd_run, ExperimentConfig, LearnerKind, LearnerSettings};
use emt::Error;

/// Eigen Memory Tree contextual-bandit benchmarks.
///
/// Output is JSON lines. Exit codes: 0 success, 1 invalid input, 2 runtime
/// failure.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (dataset, learner, seed) cell and record progressive reward.
    Run(ExperimentArgs),
    /// Run like `run`, then Welch-test every learner pair and count wins.
    Compare(ExperimentArgs),
    /// Print row count, feature count, class count and top-eigenvector
    /// explained variance of a dataset.
    Diagnose(DataArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV file (repeatable for run/compare).
    #[arg(long, required = true)]
    dataset: Vec<PathBuf>,
    /// Label column: header name or zero-based index.
    #[arg(long, default_value = "label")]
    label: String,
    /// The first row is data, not a header.
    #[arg(long)]
    no_header: bool,
    /// Write records here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Learner (repeatable): emt, emt-noself, parametric, pemt.
    #[arg(long, required = true, value_parser = |s: &str| s.parse::<LearnerKind>())]
    learner: Vec<LearnerKind>,
    /// Number of seeds per (dataset, learner); seeds are 0..N.
    #[arg(long, default_value_t = 50)]
    seeds: u64,
    /// Rows subsampled per seed.
    #[arg(long, default_value_t = 4000)]
    take: usize,
    /// Exploration probability.
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Memories per leaf before it splits.
    #[arg(long, default_value_t = 100)]
    leaf_capacity: usize,
    /// Scorer learning rate.
    #[arg(long, default_value_t = 0.01)]
    eta: f64,
    /// Memory budget with least-recently-used eviction [default: unbounded].
    #[arg(long)]
    budget: Option<usize>,
    /// log2 of the parametric weight-table size.
    #[arg(long, default_value_t = 18)]
    hash_bits: u32,
    /// Significance level for compare.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Worker threads [default: all cores].
    #[arg(long)]
    jobs: Option<usize>,
}

impl ExperimentArgs {
    fn config(&self) -> ExperimentConfig {
        ExperimentConfig {
            datasets: self.data.dataset.clone(),
            label: self.data.label.clone(),
            has_header: !self.data.no_header,
            learners: self.learner.clone(),
            seeds: self.seeds,
            take: self.take,
            settings: LearnerSettings {
                epsilon: self.epsilon,
                leaf_capacity: self.leaf_capacity,
                eta: self.eta,
                budget: self.budget,
                hash_bits: self.hash_bits,
            },
            alpha: self.alpha,
            jobs: self.jobs,
        }
    }
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|source| Error::Io {
            path: p.clone(),
            source,
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.config();
            cfg.validate()?;
            cmd_run(&cfg, &mut open_output(&args.data.output)?).map(drop)
        }
        Command::Compare(args) => {
            let cfg = args.config();
            cfg.validate()?;
            cmd_compare(&cfg, &mut open_output(&args.data.output)?).map(drop)
        }
        Command::Diagnose(args) => {
            let label: LabelColumn = args.label.parse().unwrap_or_else(|e| match e {});
            let mut out = open_output(&args.output)?;
            for path in &args.dataset {
                cmd_diagnose(path, &label, !args.no_header, &mut out)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
