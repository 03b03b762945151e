//! Command-line driver: corpus mining and synthesis, factor models, BM25
//! index statistics, continual training, evaluation and multi-run reports.
//!
//! [`run_command`] is the whole program; `main` only forwards `argv` and the
//! exit status.

mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Config(String),

    #[error("input not found: {}", .0.display())]
    MissingInput(PathBuf),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] driftloc::Error),
}

impl CliError {
    /// 1 for anything the caller can fix by changing inputs or settings,
    /// 2 for failures during a run.
    pub fn exit_code(&self) -> i32 {
        use driftloc::Error as E;
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::MissingInput(_) => 1,
            CliError::Io { .. } => 2,
            CliError::Core(e) => match e {
                E::Parse { .. }
                | E::Validation(_)
                | E::Config(_)
                | E::Dimension { .. }
                | E::MissingEmbedding(_)
                | E::Json(_) => 1,
                E::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 1,
                _ => 2,
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> CliError {
        CliError::Io { path: path.into(), source }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "driftloc",
    version,
    about = "Continual reinforcement learning for bug localization",
    after_help = "Any setting can be overridden as `--section.key value`, e.g. `--train.learning_rate 3e-4`.\n\
                  Log level: CLB_LOG=error|info|debug."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mine a git repository and bug metadata into a corpus file.
    Mine,
    /// Write a synthetic corpus.
    Synth,
    /// Fit the bug-inducing factor model on the training split.
    TrainFactors,
    /// Print BM25 index statistics per task.
    Index,
    /// Train one agent per seed.
    Train,
    /// Evaluate trained agents on the test split.
    Evaluate,
    /// Aggregate evaluated runs into mean ± std tables.
    Report {
        /// Run directories; defaults to the output directory.
        runs: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GranularityArg {
    File,
    Hunk,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LearnerArg {
    Clear,
    Ewc,
    Naive,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Debug, Args)]
struct Common {
    /// Settings file (`[section]` headers, `key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Single seed; replaces `experiment.seeds`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (mine, synth, train-factors, index) or run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Corpus file.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    granularity: Option<GranularityArg>,
    #[arg(long, global = true, value_enum)]
    learner: Option<LearnerArg>,
    /// Add the factor model's bug probability to every reward.
    #[arg(long, global = true, value_enum)]
    regression: Option<Switch>,
    /// Episodes per task per cycle.
    #[arg(long, global = true)]
    episodes: Option<usize>,
    #[arg(long, global = true)]
    cycles: Option<usize>,
    /// Candidates retrieved per bug.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Embedding dimension.
    #[arg(long, global = true)]
    dim: Option<usize>,
    /// Bug count of a synthetic corpus.
    #[arg(long, global = true)]
    bugs: Option<usize>,
}

/// Runs the program on `argv` (program name first) and returns its exit
/// status.
pub fn run_command<S: AsRef<str>>(argv: &[S]) -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("CLB_LOG", "warn"))
        .format_timestamp(None)
        .try_init();
    let argv: Vec<String> = argv.iter().map(|s| s.as_ref().to_string()).collect();
    let (rest, overrides) = match split_overrides(&argv) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(&rest) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match resolve(&cli, &overrides).and_then(|cfg| dispatch(&cli.command, &cfg)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

type Overrides = Vec<(String, String)>;

/// Pulls `--section.key value` and `--section.key=value` pairs out of argv,
/// returning the remaining arguments and the pairs.
fn split_overrides(argv: &[String]) -> Result<(Vec<String>, Overrides), CliError> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = argv.iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--").filter(|f| f.split('=').next().is_some_and(|k| k.contains('.'))) else {
            rest.push(arg.clone());
            continue;
        };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| CliError::Usage(format!("`--{flag}` needs a value")))?;
                (flag.to_string(), v.clone())
            }
        };
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}

/// Defaults, then the config file, then dotted overrides, then named flags.
fn resolve(cli: &Cli, overrides: &[(String, String)]) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.common.config {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::MissingInput(path.clone()));
            }
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            ExperimentConfig::from_text(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    let c = &cli.common;
    let path_str = |p: &PathBuf| p.to_string_lossy().into_owned();
    let named = [
        ("experiment.seeds", c.seed.map(|s| s.to_string())),
        ("paths.out", c.out.as_ref().map(path_str)),
        ("paths.corpus", c.corpus.as_ref().map(path_str)),
        (
            "experiment.granularity",
            c.granularity.map(|g| match g {
                GranularityArg::File => "file".into(),
                GranularityArg::Hunk => "hunk".into(),
            }),
        ),
        (
            "experiment.learner",
            c.learner.map(|l| match l {
                LearnerArg::Clear => "clear".into(),
                LearnerArg::Ewc => "ewc".into(),
                LearnerArg::Naive => "naive".into(),
            }),
        ),
        (
            "experiment.regression",
            c.regression.map(|r| match r {
                Switch::On => "on".into(),
                Switch::Off => "off".into(),
            }),
        ),
        ("train.episodes", c.episodes.map(|v| v.to_string())),
        ("train.cycles", c.cycles.map(|v| v.to_string())),
        ("env.k", c.k.map(|v| v.to_string())),
        ("embed.dim", c.dim.map(|v| v.to_string())),
        ("synth.bugs", c.bugs.map(|v| v.to_string())),
    ];
    for (key, value) in named {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    Ok(cfg)
}

fn dispatch(command: &Command, cfg: &ExperimentConfig) -> Result<(), CliError> {
    match command {
        Command::Mine => commands::mine(cfg),
        Command::Synth => commands::synth(cfg),
        Command::TrainFactors => commands::train_factors(cfg),
        Command::Index => commands::index(cfg),
        Command::Train => commands::train(cfg),
        Command::Evaluate => commands::evaluate(cfg),
        Command::Report { runs } => commands::report(cfg, runs),
    }
}
