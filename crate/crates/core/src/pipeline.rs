//! Stage runners behind the command-line tool. Each stage reads the market
//! file named in [`RunConfig`], writes its reports into the output directory
//! and returns a one-line summary.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backtest::{
    run_backtest, write_trade_log_csv, BacktestConfig, BacktestError, BacktestReport, DatedSignal, PriceBar,
};
use crate::classifiers::{ClassifierError, ClassifierSpec};
use crate::evaluation::{evaluate_per_horizon, write_metrics_csv, EvalError, EvaluationReport};
use crate::ingest::{load_series, IngestError, RawField, TickerSeries};
use crate::model::{ModelDocument, ModelError};
use crate::pca::{rank_features, write_ranking_csv, write_variance_csv, PcaError, PcaRanking, RankConfig};
use crate::transform::{
    read_dataset_csv, shuffle_split, write_dataset_csv, Dataset, LabelConfig, SplitConfig, TransformError,
};

pub const DATASET_FILE: &str = "dataset.csv";
pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const SELECTED_METRICS_CSV: &str = "metrics_selected.csv";
pub const SELECTED_METRICS_JSON: &str = "metrics_selected.json";
pub const RANKING_CSV: &str = "ranking.csv";
pub const RANKING_JSON: &str = "ranking.json";
pub const VARIANCE_CSV: &str = "variance.csv";
pub const SELECTED_FEATURES_FILE: &str = "selected_features.txt";
pub const MODEL_FILE: &str = "model.json";
pub const RUN_FILE: &str = "run.json";

pub fn trades_file(ticker: &str) -> String {
    format!("trades_{ticker}.csv")
}

pub fn backtest_file(ticker: &str) -> String {
    format!("backtest_{ticker}.json")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{stage}: {source}")]
    Ingest {
        stage: &'static str,
        #[source]
        source: IngestError,
    },
    #[error("{stage}: {source}")]
    Transform {
        stage: &'static str,
        #[source]
        source: TransformError,
    },
    #[error("{stage}: {source}")]
    Evaluation {
        stage: &'static str,
        #[source]
        source: EvalError,
    },
    #[error("{stage}: {source}")]
    Pca {
        stage: &'static str,
        #[source]
        source: PcaError,
    },
    #[error("{stage}: {source}")]
    Model {
        stage: &'static str,
        #[source]
        source: ModelError,
    },
    #[error("{stage}: {source}")]
    Backtest {
        stage: &'static str,
        #[source]
        source: BacktestError,
    },
}

impl PipelineError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            PipelineError::Config(_) => ErrorKind::Usage,
            PipelineError::Pca { source, .. } => match source {
                PcaError::NoConvergence { .. } | PcaError::ZeroTotalVariance | PcaError::NotSymmetric { .. } => {
                    ErrorKind::Numeric
                }
                PcaError::InvalidConfig(_) | PcaError::KTooLarge { .. } => ErrorKind::Usage,
                _ => ErrorKind::Data,
            },
            PipelineError::Evaluation {
                source: EvalError::Classifier(ClassifierError::InvalidSpec(_)),
                ..
            }
            | PipelineError::Model {
                source: ModelError::Classifier(ClassifierError::InvalidSpec(_)),
                ..
            }
            | PipelineError::Backtest {
                source: BacktestError::InvalidConfig(_),
                ..
            } => ErrorKind::Usage,
            _ => ErrorKind::Data,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Every setting of a run; JSON keys match the field names.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Market CSV, or a dataset CSV written by the transform stage.
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub labels: LabelConfig,
    pub split: SplitConfig,
    pub classifier: ClassifierSpec,
    pub rank: RankConfig,
    pub backtest: BacktestConfig,
    /// Restricts every stage to the tickers of one sector.
    pub sector: Option<String>,
    /// Newline-separated feature names to train on.
    pub feature_subset: Option<PathBuf>,
    /// Adds one evaluation block per sector.
    pub by_sector: bool,
}

pub const DEFAULT_OUTPUT_DIR: &str = "equisig-out";

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let cfg = |e: &dyn std::fmt::Display| PipelineError::Config(e.to_string());
        self.labels.validate().map_err(|e| cfg(&e))?;
        self.split.validate().map_err(|e| cfg(&e))?;
        self.classifier.validate().map_err(|e| cfg(&e))?;
        self.rank.validate().map_err(|e| cfg(&e))?;
        self.backtest.validate().map_err(|e| cfg(&e))?;
        if !self.labels.horizons.contains(&self.backtest.signal_horizon) {
            return Err(PipelineError::Config(format!(
                "signal horizon {} is not among the label horizons",
                self.backtest.signal_horizon
            )));
        }
        if self.by_sector && self.sector.is_some() {
            return Err(PipelineError::Config(
                "by_sector and sector are mutually exclusive".into(),
            ));
        }
        Ok(())
    }

    fn data_path(&self) -> Result<&Path, PipelineError> {
        self.data
            .as_deref()
            .ok_or_else(|| PipelineError::Config("no input data path given".into()))
    }
}

/// What a stage did, for the one-line console summary.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSummary {
    pub stage: &'static str,
    pub message: String,
    pub files: Vec<PathBuf>,
}

impl std::fmt::Display for StageSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let n = self.files.len();
        let noun = if n == 1 { "file" } else { "files" };
        write!(f, "[{}] {} ({n} {noun})", self.stage, self.message)
    }
}

/// Writes through a temporary file in the destination directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(path, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

struct Output {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Output {
    fn new(cfg: &RunConfig) -> Result<Self, PipelineError> {
        let dir = cfg.output_dir();
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(Output {
            dir,
            written: Vec::new(),
        })
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.written.push(path);
        Ok(())
    }

    fn put_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), PipelineError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(&self.dir.join(name), e))?;
        text.push('\n');
        self.put(name, text.as_bytes())
    }

    fn summary(self, stage: &'static str, message: String) -> StageSummary {
        StageSummary {
            stage,
            message,
            files: self.written,
        }
    }
}

/// Loaded input: the feature dataset plus each ticker's sector when known.
pub struct Input {
    pub dataset: Dataset,
    pub sectors: BTreeMap<String, String>,
}

fn looks_like_dataset(path: &Path) -> Result<bool, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let header = text.lines().next().unwrap_or("");
    Ok(header.split(',').any(|c| c.starts_with("label_day")))
}

/// Reads the configured input, applying the sector filter.
pub fn load_input(cfg: &RunConfig, stage: &'static str) -> Result<Input, PipelineError> {
    let path = cfg.data_path()?;
    if !path.is_file() {
        return Err(io_err(path, "input file not found"));
    }
    let transform = |source| PipelineError::Transform { stage, source };
    if looks_like_dataset(path)? {
        if cfg.sector.is_some() || cfg.by_sector {
            return Err(PipelineError::Config(
                "sector options need a market file with a sector column".into(),
            ));
        }
        let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
        let dataset = read_dataset_csv(file).map_err(transform)?;
        return Ok(Input {
            dataset,
            sectors: BTreeMap::new(),
        });
    }
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut series: BTreeMap<String, TickerSeries> =
        load_series(file).map_err(|source| PipelineError::Ingest { stage, source })?;
    if let Some(sector) = &cfg.sector {
        series.retain(|_, s| &s.sector == sector);
        if series.is_empty() {
            return Err(PipelineError::Config(format!("no tickers in sector {sector:?}")));
        }
    }
    let sectors = series.iter().map(|(t, s)| (t.clone(), s.sector.clone())).collect();
    let dataset = Dataset::from_series(&series, &cfg.labels).map_err(transform)?;
    Ok(Input { dataset, sectors })
}

pub fn read_feature_list(path: &Path) -> Result<Vec<String>, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let names: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if names.is_empty() {
        return Err(PipelineError::Config(format!("{}: empty feature list", path.display())));
    }
    Ok(names)
}

fn training_view(ds: &Dataset, cfg: &RunConfig, stage: &'static str) -> Result<Dataset, PipelineError> {
    match &cfg.feature_subset {
        None => Ok(ds.clone()),
        Some(p) => ds
            .project(&read_feature_list(p)?)
            .map_err(|source| PipelineError::Transform { stage, source }),
    }
}

fn split_dataset(ds: &Dataset, cfg: &SplitConfig, stage: &'static str) -> Result<(Dataset, Dataset), PipelineError> {
    let (train, test) = shuffle_split(ds.len(), cfg).map_err(|source| PipelineError::Transform { stage, source })?;
    Ok((ds.select(&train), ds.select(&test)))
}

fn evaluate_one(
    ds: &Dataset,
    cfg: &RunConfig,
    sector: Option<String>,
    stage: &'static str,
) -> Result<EvaluationReport, PipelineError> {
    let (train, test) = split_dataset(ds, &cfg.split, stage)?;
    let mut report = evaluate_per_horizon(&cfg.classifier, &train, &test)
        .map_err(|source| PipelineError::Evaluation { stage, source })?;
    report.sector = sector;
    Ok(report)
}

/// Pooled evaluation, followed by one block per sector when requested.
pub fn evaluate_reports(
    input: &Input,
    cfg: &RunConfig,
    stage: &'static str,
) -> Result<Vec<EvaluationReport>, PipelineError> {
    let ds = training_view(&input.dataset, cfg, stage)?;
    let mut reports = vec![evaluate_one(&ds, cfg, cfg.sector.clone(), stage)?];
    if cfg.by_sector {
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, r) in ds.rows.iter().enumerate() {
            if let Some(s) = input.sectors.get(&r.ticker) {
                groups.entry(s).or_default().push(i);
            }
        }
        for (sector, idx) in groups {
            reports.push(evaluate_one(&ds.select(&idx), cfg, Some(sector.to_string()), stage)?);
        }
    }
    Ok(reports)
}

fn emit_metrics(
    out: &mut Output,
    reports: &[EvaluationReport],
    csv_name: &str,
    json_name: &str,
) -> Result<(), PipelineError> {
    let mut buf = Vec::new();
    write_metrics_csv(reports, &mut buf).map_err(|source| PipelineError::Evaluation {
        stage: "evaluate",
        source,
    })?;
    out.put(csv_name, &buf)?;
    out.put_json(json_name, &reports)
}

fn best_line(reports: &[EvaluationReport]) -> String {
    let pooled = &reports[0];
    let best = pooled
        .horizons
        .iter()
        .max_by(|a, b| a.micro_f1.total_cmp(&b.micro_f1).then(b.horizon.cmp(&a.horizon)));
    match best {
        Some(h) => format!(
            "{} over {} horizons, best micro-F1 {:.4} at day {}",
            pooled.model,
            pooled.horizons.len(),
            h.micro_f1,
            h.horizon
        ),
        None => format!("{}: no horizons", pooled.model),
    }
}

pub fn run_transform(cfg: &RunConfig) -> Result<StageSummary, PipelineError> {
    const STAGE: &str = "transform";
    cfg.validate()?;
    let input = load_input(cfg, STAGE)?;
    let mut out = Output::new(cfg)?;
    let mut buf = Vec::new();
    write_dataset_csv(&input.dataset, &mut buf).map_err(|source| PipelineError::Transform { stage: STAGE, source })?;
    out.put(DATASET_FILE, &buf)?;
    let message = format!(
        "{} feature rows from {} tickers",
        input.dataset.len(),
        input
            .dataset
            .rows
            .iter()
            .map(|r| &r.ticker)
            .collect::<std::collections::BTreeSet<_>>()
            .len()
    );
    Ok(out.summary(STAGE, message))
}

pub fn run_evaluate(cfg: &RunConfig) -> Result<StageSummary, PipelineError> {
    const STAGE: &str = "evaluate";
    cfg.validate()?;
    let input = load_input(cfg, STAGE)?;
    let reports = evaluate_reports(&input, cfg, STAGE)?;
    let mut out = Output::new(cfg)?;
    emit_metrics(&mut out, &reports, METRICS_CSV, METRICS_JSON)?;
    Ok(out.summary(STAGE, best_line(&reports)))
}

/// PCA ranking over the standardized training rows.
pub fn compute_ranking(input: &Input, cfg: &RunConfig, stage: &'static str) -> Result<PcaRanking<f64>, PipelineError> {
    let (train, _) = split_dataset(&input.dataset, &cfg.split, stage)?;
    let rows: Vec<&[f64]> = train.rows.iter().map(|r| r.features.as_slice()).collect();
    rank_features(&train.feature_names, &rows, &cfg.rank).map_err(|source| PipelineError::Pca { stage, source })
}

fn emit_ranking(out: &mut Output, ranking: &PcaRanking<f64>) -> Result<(), PipelineError> {
    let pca = |source| PipelineError::Pca { stage: "rank", source };
    let mut buf = Vec::new();
    write_ranking_csv(&ranking.scores, &mut buf).map_err(pca)?;
    out.put(RANKING_CSV, &buf)?;
    let mut buf = Vec::new();
    write_variance_csv(ranking, &mut buf).map_err(pca)?;
    out.put(VARIANCE_CSV, &buf)?;
    out.put_json(RANKING_JSON, ranking)?;
    let mut list = ranking.selected.join("\n");
    list.push('\n');
    out.put(SELECTED_FEATURES_FILE, list.as_bytes())
}

fn ranking_line(r: &PcaRanking<f64>) -> String {
    let k = r.config.n_components.min(r.cumulative_ratio.len());
    format!(
        "first {k} components explain {:.4} of variance; selected {}{}",
        r.cumulative_ratio[k - 1],
        r.selected.join(", "),
        if r.padded { " (padded)" } else { "" }
    )
}

pub fn run_rank(cfg: &RunConfig) -> Result<StageSummary, PipelineError> {
    const STAGE: &str = "rank";
    cfg.validate()?;
    let input = load_input(cfg, STAGE)?;
    let ranking = compute_ranking(&input, cfg, STAGE)?;
    let mut out = Output::new(cfg)?;
    emit_ranking(&mut out, &ranking)?;
    Ok(out.summary(STAGE, ranking_line(&ranking)))
}

/// Rows of one ticker in date order, split at its chronological cut.
struct TickerWindow {
    ticker: String,
    train: Vec<usize>,
    test: Vec<usize>,
}

/// The last `1 - train_fraction` of each ticker's rows form its trading
/// window. Training rows come from before the window, less the final
/// `horizon` rows whose labels look into it.
fn chronological_windows(ds: &Dataset, train_fraction: f64, horizon: usize) -> Vec<TickerWindow> {
    let mut by_ticker: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in ds.rows.iter().enumerate() {
        by_ticker.entry(&r.ticker).or_default().push(i);
    }
    by_ticker
        .into_iter()
        .map(|(ticker, mut idx)| {
            idx.sort_by_key(|&i| ds.rows[i].date);
            let cut = (idx.len() as f64 * train_fraction).floor() as usize;
            TickerWindow {
                ticker: ticker.to_string(),
                train: idx[..cut.saturating_sub(horizon)].to_vec(),
                test: idx[cut..].to_vec(),
            }
        })
        .collect()
}

pub struct BacktestOutcome {
    pub model: ModelDocument,
    pub reports: BTreeMap<String, BacktestReport>,
}

pub fn backtest_all(input: &Input, cfg: &RunConfig, stage: &'static str) -> Result<BacktestOutcome, PipelineError> {
    let full = &input.dataset;
    let close_idx = full
        .feature_index(RawField::PxOfficialClose.symbol())
        .ok_or_else(|| PipelineError::Config(format!("input has no {} column", RawField::PxOfficialClose.symbol())))?;
    let view = training_view(full, cfg, stage)?;
    let h = cfg.backtest.signal_horizon;
    let windows = chronological_windows(full, cfg.split.train_fraction, h);
    let train_idx: Vec<usize> = windows.iter().flat_map(|w| w.train.iter().copied()).collect();
    let model = ModelDocument::fit(&view.select(&train_idx), h, &cfg.classifier)
        .map_err(|source| PipelineError::Model { stage, source })?;

    let mut reports = BTreeMap::new();
    for w in windows.iter().filter(|w| !w.test.is_empty()) {
        let signals = model
            .predict_dataset(&view.select(&w.test))
            .map_err(|source| PipelineError::Model { stage, source })?;
        let (bars, dated): (Vec<PriceBar>, Vec<DatedSignal>) = w
            .test
            .iter()
            .zip(signals)
            .map(|(&i, signal)| {
                let r = &full.rows[i];
                (
                    PriceBar {
                        date: r.date,
                        close: r.features[close_idx],
                    },
                    DatedSignal { date: r.date, signal },
                )
            })
            .unzip();
        let report =
            run_backtest(&bars, &dated, &cfg.backtest).map_err(|source| PipelineError::Backtest { stage, source })?;
        reports.insert(w.ticker.clone(), report);
    }
    Ok(BacktestOutcome { model, reports })
}

fn emit_backtests(out: &mut Output, outcome: &BacktestOutcome) -> Result<(), PipelineError> {
    out.put_json(MODEL_FILE, &outcome.model)?;
    for (ticker, report) in &outcome.reports {
        let mut buf = Vec::new();
        write_trade_log_csv(&report.trades, &mut buf).map_err(|source| PipelineError::Backtest {
            stage: "backtest",
            source,
        })?;
        out.put(&trades_file(ticker), &buf)?;
        out.put_json(&backtest_file(ticker), report)?;
    }
    Ok(())
}

fn backtest_line(outcome: &BacktestOutcome) -> String {
    let trades: usize = outcome.reports.values().map(|r| r.trades.len()).sum();
    let profit: crate::backtest::Money = outcome.reports.values().map(|r| r.total_profit).sum();
    format!(
        "{} tickers, {trades} trades, total profit {profit}",
        outcome.reports.len()
    )
}

pub fn run_backtest_stage(cfg: &RunConfig) -> Result<StageSummary, PipelineError> {
    const STAGE: &str = "backtest";
    cfg.validate()?;
    let input = load_input(cfg, STAGE)?;
    let outcome = backtest_all(&input, cfg, STAGE)?;
    let mut out = Output::new(cfg)?;
    emit_backtests(&mut out, &outcome)?;
    Ok(out.summary(STAGE, backtest_line(&outcome)))
}

#[derive(Serialize)]
struct RunRecord<'a> {
    version: &'static str,
    split_seed: u64,
    classifier_seed: u64,
    config: &'a RunConfig,
}

/// Every stage in order, plus a re-evaluation on the selected features.
pub fn run_pipeline(cfg: &RunConfig) -> Result<Vec<StageSummary>, PipelineError> {
    cfg.validate()?;
    let mut summaries = vec![run_transform(cfg)?, run_evaluate(cfg)?, run_rank(cfg)?];

    const STAGE: &str = "select";
    let input = load_input(cfg, STAGE)?;
    let ranking = compute_ranking(&input, cfg, STAGE)?;
    let selected_cfg = RunConfig {
        feature_subset: Some(cfg.output_dir().join(SELECTED_FEATURES_FILE)),
        ..cfg.clone()
    };
    let reports = evaluate_reports(&input, &selected_cfg, STAGE)?;
    let mut out = Output::new(cfg)?;
    emit_metrics(&mut out, &reports, SELECTED_METRICS_CSV, SELECTED_METRICS_JSON)?;
    summaries.push(out.summary(
        STAGE,
        format!(
            "{} on top {} features: {}",
            reports[0].model,
            ranking.selected.len(),
            best_line(&reports)
        ),
    ));

    summaries.push(run_backtest_stage(cfg)?);

    let record_cfg = RunConfig {
        output_dir: None,
        ..cfg.clone()
    };
    let mut out = Output::new(cfg)?;
    out.put_json(
        RUN_FILE,
        &RunRecord {
            version: env!("CARGO_PKG_VERSION"),
            split_seed: cfg.split.seed,
            classifier_seed: cfg.classifier.seed,
            config: &record_cfg,
        },
    )?;
    summaries.push(out.summary("run", "wrote run metadata".into()));
    Ok(summaries)
}
