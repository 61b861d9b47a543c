//! Confusion matrices and per-horizon signal metrics.
//!
//! Each signal gets its own metric: precision for buys, recall for sells, F1
//! for holds, and micro-averaged F1 (accuracy) overall.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{Classifier, ClassifierError, ClassifierSpec, TrainedClassifier};
use crate::transform::{Dataset, Label, Scaler, TransformError};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("y_true has {0} labels but y_pred has {1}")]
    LengthMismatch(usize, usize),
    #[error("nothing to evaluate")]
    Empty,
    #[error("no horizon has both labelled training and test rows")]
    NoEvaluableHorizon,
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("metrics csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for EvalError {
    fn from(e: csv::Error) -> Self {
        EvalError::Csv(e.to_string())
    }
}

/// Rows are true labels, columns predictions, both in Sell, Hold, Buy order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    pub fn get(&self, truth: Label, predicted: Label) -> u64 {
        self.counts[truth.index()][predicted.index()]
    }
}

pub fn confusion_matrix(y_true: &[Label], y_pred: &[Label]) -> Result<ConfusionMatrix, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (t, p) in y_true.iter().zip(y_pred) {
        cm.counts[t.index()][p.index()] += 1;
    }
    Ok(cm)
}

/// One-vs-rest metrics for a class. A metric whose denominator is zero is
/// reported as 0 with the matching flag set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// The class was never predicted, so precision is vacuous.
    pub no_predictions: bool,
    /// The class never occurs in the truth, so recall is vacuous.
    pub no_instances: bool,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn class_metrics(cm: &ConfusionMatrix, class: Label) -> ClassMetrics {
    let c = class.index();
    let tp = cm.counts[c][c];
    let predicted: u64 = (0..3).map(|t| cm.counts[t][c]).sum();
    let actual: u64 = cm.counts[c].iter().sum();
    let (fp, fn_) = (predicted - tp, actual - tp);
    ClassMetrics {
        precision: ratio(tp, predicted),
        recall: ratio(tp, actual),
        // harmonic mean of precision and recall, in counts
        f1: ratio(2 * tp, 2 * tp + fp + fn_),
        no_predictions: predicted == 0,
        no_instances: actual == 0,
    }
}

/// Micro-averaged F1, which for single-label multiclass data is accuracy.
pub fn micro_f1(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    match cm.total() {
        0 => Err(EvalError::Empty),
        total => Ok(cm.trace() as f64 / total as f64),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonReport {
    pub horizon: usize,
    pub buy_precision: f64,
    pub sell_recall: f64,
    pub hold_f1: f64,
    pub micro_f1: f64,
    /// No buys were predicted.
    pub buy_precision_vacuous: bool,
    /// No true sells were present.
    pub sell_recall_vacuous: bool,
    pub confusion: ConfusionMatrix,
    pub n_train: usize,
    pub n_test: usize,
}

impl HorizonReport {
    pub fn from_confusion(horizon: usize, cm: ConfusionMatrix, n_train: usize) -> Result<Self, EvalError> {
        let buy = class_metrics(&cm, Label::Buy);
        let sell = class_metrics(&cm, Label::Sell);
        let hold = class_metrics(&cm, Label::Hold);
        Ok(HorizonReport {
            horizon,
            buy_precision: buy.precision,
            sell_recall: sell.recall,
            hold_f1: hold.f1,
            micro_f1: micro_f1(&cm)?,
            buy_precision_vacuous: buy.no_predictions,
            sell_recall_vacuous: sell.no_instances,
            confusion: cm,
            n_train,
            n_test: cm.total() as usize,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// `None` for the pooled dataset.
    pub sector: Option<String>,
    /// Model label as written to the metrics table.
    pub model: String,
    pub spec: ClassifierSpec,
    pub seed: u64,
    pub feature_names: Vec<String>,
    pub horizons: Vec<HorizonReport>,
}

/// Standardised feature matrix and labels of the rows labelled at `horizon`.
pub(crate) fn labelled_matrix(
    ds: &Dataset,
    scaler: &Scaler<f64>,
    horizon: usize,
) -> Result<(Vec<Vec<f64>>, Vec<Label>), TransformError> {
    let Some(slot) = ds.horizon_slot(horizon) else {
        return Ok((Vec::new(), Vec::new()));
    };
    let mut x = Vec::new();
    let mut y = Vec::new();
    for r in &ds.rows {
        if let Some(l) = r.labels[slot] {
            x.push(scaler.transform(&r.features)?);
            y.push(l);
        }
    }
    Ok((x, y))
}

/// Fits one classifier per horizon on the training rows and scores it on the
/// test rows. Features are standardised with a scaler fitted on `train`.
pub fn evaluate_per_horizon(
    spec: &ClassifierSpec,
    train: &Dataset,
    test: &Dataset,
) -> Result<EvaluationReport, EvalError> {
    spec.validate()?;
    let train_features: Vec<&[f64]> = train.rows.iter().map(|r| r.features.as_slice()).collect();
    let scaler = Scaler::fit(&train_features)?;

    let outcomes: Vec<Result<Option<HorizonReport>, EvalError>> = train
        .horizons
        .par_iter()
        .map(|&h| {
            let (x_train, y_train) = labelled_matrix(train, &scaler, h)?;
            let (x_test, y_test) = labelled_matrix(test, &scaler, h)?;
            if x_train.is_empty() || x_test.is_empty() {
                log::warn!("horizon {h}: no labelled train or test rows, skipped");
                return Ok(None);
            }
            let model = TrainedClassifier::fit(&x_train, &y_train, spec)?;
            let y_pred = model.predict_all(&x_test)?;
            let cm = confusion_matrix(&y_test, &y_pred)?;
            Ok(Some(HorizonReport::from_confusion(h, cm, x_train.len())?))
        })
        .collect();
    let mut horizons = Vec::new();
    for o in outcomes {
        horizons.extend(o?);
    }
    if horizons.is_empty() {
        return Err(EvalError::NoEvaluableHorizon);
    }
    Ok(EvaluationReport {
        sector: None,
        model: spec.kind.name().to_string(),
        spec: spec.clone(),
        seed: spec.seed,
        feature_names: train.feature_names.clone(),
        horizons,
    })
}

pub const POOLED_SECTOR: &str = "ALL";

/// One row of the flat metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub sector: String,
    pub model: String,
    pub horizon: usize,
    pub buy_precision: f64,
    pub sell_recall: f64,
    pub hold_f1: f64,
    pub micro_f1: f64,
    pub n_test: usize,
}

pub fn metrics_rows(reports: &[EvaluationReport]) -> Vec<MetricsRow> {
    reports
        .iter()
        .flat_map(|rep| {
            rep.horizons.iter().map(move |h| MetricsRow {
                sector: rep.sector.clone().unwrap_or_else(|| POOLED_SECTOR.to_string()),
                model: rep.model.clone(),
                horizon: h.horizon,
                buy_precision: h.buy_precision,
                sell_recall: h.sell_recall,
                hold_f1: h.hold_f1,
                micro_f1: h.micro_f1,
                n_test: h.n_test,
            })
        })
        .collect()
}

pub fn write_metrics_csv<W: Write>(reports: &[EvaluationReport], sink: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(sink);
    for row in metrics_rows(reports) {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| EvalError::Csv(e.to_string()))?;
    Ok(())
}

pub fn read_metrics_csv<R: Read>(source: R) -> Result<Vec<MetricsRow>, EvalError> {
    csv::Reader::from_reader(source)
        .deserialize()
        .map(|r| r.map_err(EvalError::from))
        .collect()
}
