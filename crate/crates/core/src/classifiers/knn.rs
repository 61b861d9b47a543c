use serde::{Deserialize, Serialize};

use super::{check_dim, check_training, Classifier, ClassifierError};
use crate::num::Scalar;
use crate::transform::Label;

/// k-nearest-neighbour vote under Euclidean distance.
///
/// Equal distances are ordered by training index; a tied vote predicts Hold.
pub fn knn_predict<T: Scalar, R: AsRef<[T]>>(
    train_x: &[R],
    train_y: &[Label],
    x: &[T],
    k: usize,
) -> Result<Label, ClassifierError> {
    let d = check_training(train_x, train_y)?;
    check_dim(d, x)?;
    if k == 0 || k > train_x.len() {
        return Err(ClassifierError::KTooLarge { k, n: train_x.len() });
    }
    // squared distance preserves the ordering
    let mut dist: Vec<(T, usize)> = train_x
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let d2 = r
                .as_ref()
                .iter()
                .zip(x)
                .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
            (d2, i)
        })
        .collect();
    let by_distance =
        |a: &(T, usize), b: &(T, usize)| a.0.partial_cmp(&b.0).expect("finite distances").then(a.1.cmp(&b.1));
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, by_distance);
        dist.truncate(k);
    }
    let mut votes = [0; 3];
    for &(_, i) in &dist {
        votes[train_y[i].index()] += 1;
    }
    Ok(Label::majority(&votes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct KnnModel<T> {
    pub k: usize,
    pub x: Vec<Vec<T>>,
    pub y: Vec<Label>,
}

impl<T: Scalar> KnnModel<T> {
    pub fn fit<R: AsRef<[T]>>(x: &[R], y: &[Label], k: usize) -> Result<Self, ClassifierError> {
        check_training(x, y)?;
        if k == 0 || k > x.len() {
            return Err(ClassifierError::KTooLarge { k, n: x.len() });
        }
        Ok(KnnModel {
            k,
            x: x.iter().map(|r| r.as_ref().to_vec()).collect(),
            y: y.to_vec(),
        })
    }
}

impl<T: Scalar> Classifier<T> for KnnModel<T> {
    fn n_features(&self) -> usize {
        self.x[0].len()
    }

    fn predict(&self, x: &[T]) -> Result<Label, ClassifierError> {
        knn_predict(&self.x, &self.y, x, self.k)
    }
}
