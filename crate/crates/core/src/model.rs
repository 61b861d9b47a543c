//! A fitted classifier bundled with its scaler and feature layout.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{Classifier, ClassifierError, ClassifierSpec, TrainedClassifier};
use crate::evaluation::labelled_matrix;
use crate::transform::{Dataset, Label, Scaler, TransformError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("no training rows are labelled at horizon {0}")]
    NoLabelledRows(usize),
    #[error("model expects features {expected:?}, dataset has {found:?}")]
    FeatureMismatch { expected: Vec<String>, found: Vec<String> },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("model json: {0}")]
    Json(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub spec: ClassifierSpec,
    pub horizon: usize,
    pub feature_names: Vec<String>,
    pub n_train: usize,
    pub scaler: Scaler<f64>,
    pub model: TrainedClassifier<f64>,
}

impl ModelDocument {
    /// Fits on every row of `train` labelled at `horizon`.
    pub fn fit(train: &Dataset, horizon: usize, spec: &ClassifierSpec) -> Result<Self, ModelError> {
        let features: Vec<&[f64]> = train.rows.iter().map(|r| r.features.as_slice()).collect();
        let scaler = Scaler::fit(&features)?;
        let (x, y) = labelled_matrix(train, &scaler, horizon)?;
        if x.is_empty() {
            return Err(ModelError::NoLabelledRows(horizon));
        }
        let model = TrainedClassifier::fit(&x, &y, spec)?;
        Ok(ModelDocument {
            spec: spec.clone(),
            horizon,
            feature_names: train.feature_names.clone(),
            n_train: x.len(),
            scaler,
            model,
        })
    }

    /// Predicts from raw (unscaled) features.
    pub fn predict(&self, features: &[f64]) -> Result<Label, ModelError> {
        Ok(self.model.predict(&self.scaler.transform(features)?)?)
    }

    pub fn predict_dataset(&self, ds: &Dataset) -> Result<Vec<Label>, ModelError> {
        if ds.feature_names != self.feature_names {
            return Err(ModelError::FeatureMismatch {
                expected: self.feature_names.clone(),
                found: ds.feature_names.clone(),
            });
        }
        ds.rows.iter().map(|r| self.predict(&r.features)).collect()
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        serde_json::to_string_pretty(self).map_err(|e| ModelError::Json(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Json(e.to_string()))
    }
}
