//! Supervised classifiers behind one fit/predict contract.
//!
//! Every model predicts a [`Label`] and resolves prediction ties to
//! [`Label::Hold`]. All fits are pure functions of the data and `spec.seed`.

mod forest;
mod impurity;
mod knn;
mod naive_bayes;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Scalar;
use crate::transform::Label;

pub use forest::RandomForest;
pub use impurity::{entropy_impurity, gini_impurity, impurity};
pub use knn::{knn_predict, KnnModel};
pub use naive_bayes::GaussianNb;
pub use tree::{best_split, DecisionTree, Split, TreeNode, TIE_TOLERANCE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifierError {
    #[error("impurity of an empty node is undefined")]
    EmptyNode,
    #[error("no training rows")]
    EmptyTraining,
    #[error("expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("k = {k} exceeds the {n} training rows")]
    KTooLarge { k: usize, n: usize },
    #[error("invalid classifier spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    #[default]
    Gini,
    Entropy,
}

impl FromStr for Criterion {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gini" => Ok(Criterion::Gini),
            "entropy" => Ok(Criterion::Entropy),
            other => Err(format!("unknown criterion `{other}` (gini, entropy)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    DecisionTree,
    #[default]
    RandomForest,
    Knn,
    GaussianNb,
}

impl ClassifierKind {
    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::DecisionTree => "decision_tree",
            ClassifierKind::RandomForest => "random_forest",
            ClassifierKind::Knn => "knn",
            ClassifierKind::GaussianNb => "gaussian_nb",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "decision_tree" | "tree" => Ok(ClassifierKind::DecisionTree),
            "random_forest" | "forest" => Ok(ClassifierKind::RandomForest),
            "knn" => Ok(ClassifierKind::Knn),
            "gaussian_nb" | "naive_bayes" => Ok(ClassifierKind::GaussianNb),
            _ => Err(format!(
                "unknown model `{s}` (decision-tree, random-forest, knn, gaussian-nb)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub criterion: Criterion,
    pub n_trees: usize,
    pub k: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features tried per forest split; `None` means floor(sqrt(d)).
    pub mtry: Option<usize>,
    /// Forest trees train on bootstrap resamples when set.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        ClassifierSpec {
            kind: ClassifierKind::RandomForest,
            criterion: Criterion::Gini,
            n_trees: 10,
            k: 5,
            max_depth: None,
            min_samples_split: 2,
            mtry: None,
            bootstrap: true,
            seed: 42,
        }
    }
}

impl ClassifierSpec {
    pub fn of_kind(kind: ClassifierKind) -> Self {
        ClassifierSpec {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidSpec(m.to_string()));
        if self.n_trees == 0 {
            return bad("n_trees must be at least 1");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.min_samples_split < 2 {
            return bad("min_samples_split must be at least 2");
        }
        if self.mtry == Some(0) {
            return bad("mtry must be at least 1");
        }
        Ok(())
    }
}

pub trait Classifier<T: Scalar> {
    fn n_features(&self) -> usize;

    fn predict(&self, x: &[T]) -> Result<Label, ClassifierError>;

    fn predict_all<R: AsRef<[T]>>(&self, rows: &[R]) -> Result<Vec<Label>, ClassifierError> {
        rows.iter().map(|r| self.predict(r.as_ref())).collect()
    }
}

pub(crate) fn check_dim(expected: usize, x: &[impl Sized]) -> Result<(), ClassifierError> {
    if x.len() == expected {
        Ok(())
    } else {
        Err(ClassifierError::DimensionMismatch {
            expected,
            found: x.len(),
        })
    }
}

/// Validates a training matrix and returns its dimension.
pub(crate) fn check_training<T, R: AsRef<[T]>>(x: &[R], y: &[Label]) -> Result<usize, ClassifierError> {
    if x.is_empty() {
        return Err(ClassifierError::EmptyTraining);
    }
    if x.len() != y.len() {
        return Err(ClassifierError::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let d = x[0].as_ref().len();
    for r in x {
        check_dim(d, r.as_ref())?;
    }
    Ok(d)
}

/// A fitted model of any supported kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Scalar")]
pub enum TrainedClassifier<T> {
    DecisionTree(DecisionTree<T>),
    RandomForest(RandomForest<T>),
    Knn(KnnModel<T>),
    GaussianNb(GaussianNb<T>),
}

impl<T: Scalar> TrainedClassifier<T> {
    pub fn fit<R: AsRef<[T]> + Sync>(x: &[R], y: &[Label], spec: &ClassifierSpec) -> Result<Self, ClassifierError> {
        spec.validate()?;
        Ok(match spec.kind {
            ClassifierKind::DecisionTree => TrainedClassifier::DecisionTree(DecisionTree::fit(x, y, spec)?),
            ClassifierKind::RandomForest => TrainedClassifier::RandomForest(RandomForest::fit(x, y, spec)?),
            ClassifierKind::Knn => TrainedClassifier::Knn(KnnModel::fit(x, y, spec.k)?),
            ClassifierKind::GaussianNb => TrainedClassifier::GaussianNb(GaussianNb::fit(x, y)?),
        })
    }

    pub fn kind(&self) -> ClassifierKind {
        match self {
            TrainedClassifier::DecisionTree(_) => ClassifierKind::DecisionTree,
            TrainedClassifier::RandomForest(_) => ClassifierKind::RandomForest,
            TrainedClassifier::Knn(_) => ClassifierKind::Knn,
            TrainedClassifier::GaussianNb(_) => ClassifierKind::GaussianNb,
        }
    }
}

impl<T: Scalar> Classifier<T> for TrainedClassifier<T> {
    fn n_features(&self) -> usize {
        match self {
            TrainedClassifier::DecisionTree(m) => m.n_features(),
            TrainedClassifier::RandomForest(m) => m.n_features(),
            TrainedClassifier::Knn(m) => m.n_features(),
            TrainedClassifier::GaussianNb(m) => m.n_features(),
        }
    }

    fn predict(&self, x: &[T]) -> Result<Label, ClassifierError> {
        match self {
            TrainedClassifier::DecisionTree(m) => m.predict(x),
            TrainedClassifier::RandomForest(m) => m.predict(x),
            TrainedClassifier::Knn(m) => m.predict(x),
            TrainedClassifier::GaussianNb(m) => m.predict(x),
        }
    }
}
