//! Argument parsing and dispatch for the `equisig` binary.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::error::{ContextKind, ContextValue, ErrorKind as ClapErrorKind};
use clap::{Args, Parser, Subcommand};
use equisig::classifiers::{ClassifierKind, Criterion};
use equisig::pipeline::{self, ErrorKind, PipelineError, RunConfig, StageSummary};
use equisig::synthetic::{generate_market_csv, MarketSpec};
use thiserror::Error;

/// Environment variable naming the default output directory.
pub const OUTPUT_ENV: &str = "EQUISIG_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "equisig",
    version,
    about = "Buy/hold/sell signal classification and backtesting for daily equity data"
)]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Debug, Subcommand)]
enum CliCommand {
    /// Build the labelled feature dataset (dataset.csv).
    Transform(Overrides),
    /// Train and score a classifier per horizon (metrics.csv, metrics.json).
    Evaluate(Overrides),
    /// Rank features by PCA weighted occurrence (ranking.csv, variance.csv).
    Rank(Overrides),
    /// Trade each ticker's final window on model signals (trades_*.csv, backtest_*.json).
    Backtest(Overrides),
    /// Run every stage in order.
    Pipeline(Overrides),
    /// Write a synthetic market CSV.
    Synth(SynthArgs),
}

/// Flags shared by every stage. Each one overrides the config file.
#[derive(Debug, Default, Args)]
struct Overrides {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Market CSV or a dataset CSV from `transform`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory [env: EQUISIG_OUT].
    #[arg(long)]
    out: Option<PathBuf>,

    /// decision-tree, random-forest, knn or gaussian-nb.
    #[arg(long, value_parser = parse_kind)]
    model: Option<ClassifierKind>,
    /// gini or entropy.
    #[arg(long, value_parser = parse_criterion)]
    criterion: Option<Criterion>,
    #[arg(long)]
    trees: Option<usize>,
    /// Neighbours for knn.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    /// Features tried per forest split.
    #[arg(long)]
    mtry: Option<usize>,
    /// Seed for model training and the train/test shuffle.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train_fraction: Option<f64>,

    /// Add one metrics block per sector.
    #[arg(long)]
    by_sector: bool,
    /// Keep only tickers of this sector.
    #[arg(long)]
    sector: Option<String>,
    /// Train on the feature names listed in this file.
    #[arg(long)]
    features: Option<PathBuf>,

    /// Number of features to select.
    #[arg(long)]
    select_top: Option<usize>,
    /// Minimum absolute loading counted as a contribution.
    #[arg(long)]
    threshold: Option<f64>,

    /// Label horizon driving trades.
    #[arg(long)]
    horizon: Option<usize>,
    /// Fee per transaction in dollars.
    #[arg(long)]
    fee: Option<f64>,
    #[arg(long)]
    take_profit: Option<f64>,
    #[arg(long)]
    stop_loss: Option<f64>,
    /// Leave positions open after the last bar.
    #[arg(long)]
    no_liquidate: bool,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct SynthArgs {
    /// Destination CSV.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub tickers: usize,
    #[arg(long, default_value_t = 300)]
    pub days: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Fraction of numeric cells left blank.
    #[arg(long, default_value_t = 0.0)]
    pub missing_rate: f64,
}

fn parse_kind(s: &str) -> Result<ClassifierKind, String> {
    s.parse()
}

fn parse_criterion(s: &str) -> Result<Criterion, String> {
    s.parse()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Transform,
    Evaluate,
    Rank,
    Backtest,
    Pipeline,
    Synth(SynthArgs),
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Help or version text; not a failure.
    #[error("{0}")]
    Display(String),
    #[error("unknown command `{0}`")]
    UnknownCommand(String),
    #[error("bad flag {flag}: {message}")]
    BadFlag { flag: String, message: String },
    #[error("missing required {0}")]
    MissingRequired(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Display(_) => EXIT_OK,
            CliError::UnknownCommand(_) | CliError::BadFlag { .. } | CliError::MissingRequired(_) => EXIT_USAGE,
            CliError::Pipeline(e) => match e.kind() {
                ErrorKind::Usage => EXIT_USAGE,
                ErrorKind::Data => EXIT_DATA,
                ErrorKind::Numeric => EXIT_NUMERIC,
            },
            CliError::Io { .. } => EXIT_DATA,
        }
    }
}

fn context_string(e: &clap::Error, kind: ContextKind) -> Option<String> {
    match e.get(kind)? {
        ContextValue::String(s) => Some(s.clone()),
        ContextValue::Strings(v) => Some(v.join(", ")),
        other => Some(other.to_string()),
    }
}

fn from_clap(e: clap::Error) -> CliError {
    match e.kind() {
        ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => CliError::Display(e.to_string()),
        ClapErrorKind::InvalidSubcommand => {
            CliError::UnknownCommand(context_string(&e, ContextKind::InvalidSubcommand).unwrap_or_default())
        }
        ClapErrorKind::MissingRequiredArgument => {
            CliError::MissingRequired(context_string(&e, ContextKind::InvalidArg).unwrap_or_default())
        }
        ClapErrorKind::MissingSubcommand | ClapErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            CliError::MissingRequired("command".into())
        }
        _ => {
            let flag = context_string(&e, ContextKind::InvalidArg).unwrap_or_else(|| "argument".into());
            let message = e
                .to_string()
                .lines()
                .next()
                .unwrap_or_default()
                .trim_start_matches("error: ")
                .to_string();
            CliError::BadFlag { flag, message }
        }
    }
}

impl Overrides {
    fn apply(self, cfg: &mut RunConfig) {
        let c = &mut cfg.classifier;
        if let Some(v) = self.model {
            c.kind = v;
        }
        if let Some(v) = self.criterion {
            c.criterion = v;
        }
        if let Some(v) = self.trees {
            c.n_trees = v;
        }
        if let Some(v) = self.k {
            c.k = v;
        }
        if self.max_depth.is_some() {
            c.max_depth = self.max_depth;
        }
        if self.mtry.is_some() {
            c.mtry = self.mtry;
        }
        if let Some(v) = self.seed {
            c.seed = v;
            cfg.split.seed = v;
        }
        if let Some(v) = self.train_fraction {
            cfg.split.train_fraction = v;
        }
        if self.data.is_some() {
            cfg.data = self.data;
        }
        if self.out.is_some() {
            cfg.output_dir = self.out;
        }
        if self.by_sector {
            cfg.by_sector = true;
        }
        if self.sector.is_some() {
            cfg.sector = self.sector;
        }
        if self.features.is_some() {
            cfg.feature_subset = self.features;
        }
        if let Some(v) = self.select_top {
            cfg.rank.top_k = v;
        }
        if let Some(v) = self.threshold {
            cfg.rank.contribution_threshold = v;
        }
        let b = &mut cfg.backtest;
        if let Some(v) = self.horizon {
            b.signal_horizon = v;
        }
        if let Some(v) = self.fee {
            b.fee_per_transaction = v;
        }
        if let Some(v) = self.take_profit {
            b.take_profit_fraction = v;
        }
        if let Some(v) = self.stop_loss {
            b.stop_loss_fraction = v;
        }
        if self.no_liquidate {
            b.liquidate_at_end = false;
        }
    }
}

/// Parses `argv` (program name first). Settings resolve as flag, then config
/// file, then the output-directory environment variable, then defaults.
pub fn parse_cli<I, T>(argv: I) -> Result<(Command, RunConfig), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(from_clap)?;
    let (command, overrides) = match cli.command {
        CliCommand::Synth(a) => return Ok((Command::Synth(a), RunConfig::default())),
        CliCommand::Transform(o) => (Command::Transform, o),
        CliCommand::Evaluate(o) => (Command::Evaluate, o),
        CliCommand::Rank(o) => (Command::Rank, o),
        CliCommand::Backtest(o) => (Command::Backtest, o),
        CliCommand::Pipeline(o) => (Command::Pipeline, o),
    };
    let mut cfg = match &overrides.config {
        Some(path) => RunConfig::from_json_file(path)?,
        None => RunConfig::default(),
    };
    overrides.apply(&mut cfg);
    if cfg.output_dir.is_none() {
        cfg.output_dir = std::env::var_os(OUTPUT_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from);
    }
    if cfg.data.is_none() {
        return Err(CliError::MissingRequired("--data".into()));
    }
    Ok((command, cfg))
}

pub fn run_command(command: &Command, cfg: &RunConfig) -> Result<Vec<StageSummary>, CliError> {
    Ok(match command {
        Command::Transform => vec![pipeline::run_transform(cfg)?],
        Command::Evaluate => vec![pipeline::run_evaluate(cfg)?],
        Command::Rank => vec![pipeline::run_rank(cfg)?],
        Command::Backtest => vec![pipeline::run_backtest_stage(cfg)?],
        Command::Pipeline => pipeline::run_pipeline(cfg)?,
        Command::Synth(a) => {
            let spec = MarketSpec {
                tickers: a.tickers,
                days: a.days,
                seed: a.seed,
                missing_rate: a.missing_rate,
            };
            if !(0.0..1.0).contains(&spec.missing_rate) {
                return Err(CliError::BadFlag {
                    flag: "--missing-rate".into(),
                    message: "must lie in [0, 1)".into(),
                });
            }
            let text = generate_market_csv(&spec);
            if let Some(dir) = a.output.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| CliError::Io {
                    path: dir.to_path_buf(),
                    message: e.to_string(),
                })?;
            }
            pipeline::write_atomic(&a.output, text.as_bytes())?;
            vec![StageSummary {
                stage: "synth",
                message: format!("{} tickers x {} days", spec.tickers, spec.days),
                files: vec![a.output.clone()],
            }]
        }
    })
}

/// Parses, runs and prints; returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let result = parse_cli(argv).and_then(|(command, cfg)| {
        log::debug!("resolved configuration: {cfg:?}");
        run_command(&command, &cfg)
    });
    match result {
        Ok(summaries) => {
            for s in summaries {
                println!("{s}");
            }
            EXIT_OK
        }
        Err(CliError::Display(text)) => {
            print!("{text}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
