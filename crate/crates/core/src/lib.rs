//! Equity signal classification: multi-horizon labelling of daily records,
//! classical classifiers, PCA feature ranking and a long/short backtester.
//!
//! Numeric kernels are generic over [`num::Scalar`] (`f32` or `f64`); the
//! aliases below fix them to `f64`, which the pipeline uses throughout.

pub mod backtest;
pub mod classifiers;
pub mod evaluation;
pub mod ingest;
pub mod model;
pub mod num;
pub mod pca;
pub mod pipeline;
pub mod synthetic;
pub mod transform;

pub use backtest::{run_backtest, BacktestConfig, BacktestReport, Money};
pub use classifiers::{Classifier, ClassifierKind, ClassifierSpec, Criterion};
pub use evaluation::{EvaluationReport, HorizonReport};
pub use model::ModelDocument;
pub use pca::RankConfig;
pub use pipeline::{PipelineError, RunConfig};
pub use transform::{Dataset, Label, LabelConfig, SplitConfig};

pub type DecisionTree = classifiers::DecisionTree<f64>;
pub type RandomForest = classifiers::RandomForest<f64>;
pub type KnnModel = classifiers::KnnModel<f64>;
pub type GaussianNb = classifiers::GaussianNb<f64>;
pub type TrainedClassifier = classifiers::TrainedClassifier<f64>;
pub type Scaler = transform::Scaler<f64>;
pub type Matrix = pca::Matrix<f64>;
pub type EigenDecomposition = pca::EigenDecomposition<f64>;
pub type PcaRanking = pca::PcaRanking<f64>;
