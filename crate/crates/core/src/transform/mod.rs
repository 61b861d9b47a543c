//! Derived indicators, horizon labels, standardisation, the seeded split and
//! sector grouping.

mod dataset;
mod features;
mod labels;
mod scaler;
mod split;

use thiserror::Error;

pub use dataset::{read_dataset_csv, write_dataset_csv, Dataset};
pub use features::{
    assemble_features, derive_rec_percentages, rolling_std, FeatureRow, DERIVED_FEATURE_NAMES, FEATURE_COUNT,
    FEATURE_NAMES, LONG_STD_WINDOW, SHORT_STD_WINDOW,
};
pub use labels::{label_closes, label_horizons, label_move, Label, LabelConfig};
pub use scaler::Scaler;
pub use split::{group_by_sector, shuffle_split, SplitConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("rolling window must be at least 2, got {0}")]
    WindowTooSmall(usize),
    #[error("series for {0} produced no usable rows")]
    EmptySeries(String),
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("ticker {0} has no sector")]
    UnknownTicker(String),
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid label configuration: {0}")]
    InvalidLabelConfig(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("dataset csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for TransformError {
    fn from(e: csv::Error) -> Self {
        TransformError::Csv(e.to_string())
    }
}
