use serde::{Deserialize, Serialize};

use super::{check_dim, check_training, Classifier, ClassifierError};
use crate::num::Scalar;
use crate::transform::Label;

/// Relative variance floor: epsilon = VAR_SMOOTHING * max feature variance.
pub const VAR_SMOOTHING: f64 = 1e-9;

/// Gaussian naive Bayes over the classes seen in training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GaussianNb<T> {
    pub classes: Vec<Label>,
    pub priors: Vec<T>,
    pub means: Vec<Vec<T>>,
    /// Population variances plus `epsilon`.
    pub variances: Vec<Vec<T>>,
    pub epsilon: T,
}

fn population_moments<T: Scalar>(rows: &[&[T]], d: usize) -> (Vec<T>, Vec<T>) {
    let n = T::from_count(rows.len());
    let mut mean = vec![T::zero(); d];
    for r in rows {
        for (m, &v) in mean.iter_mut().zip(r.iter()) {
            *m = *m + v;
        }
    }
    mean.iter_mut().for_each(|m| *m = *m / n);
    let mut var = vec![T::zero(); d];
    for r in rows {
        for ((s, &v), &m) in var.iter_mut().zip(r.iter()).zip(&mean) {
            *s = *s + (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s = *s / n);
    (mean, var)
}

impl<T: Scalar> GaussianNb<T> {
    pub fn fit<R: AsRef<[T]>>(x: &[R], y: &[Label]) -> Result<Self, ClassifierError> {
        let d = check_training(x, y)?;
        let all: Vec<&[T]> = x.iter().map(|r| r.as_ref()).collect();
        let (_, overall_var) = population_moments(&all, d);
        let max_var = overall_var.iter().copied().fold(T::zero(), T::max);
        // all-constant features would give a zero floor
        let epsilon = if max_var > T::zero() {
            T::lit(VAR_SMOOTHING) * max_var
        } else {
            T::lit(VAR_SMOOTHING)
        };

        let n = T::from_count(x.len());
        let mut model = GaussianNb {
            classes: Vec::new(),
            priors: Vec::new(),
            means: Vec::new(),
            variances: Vec::new(),
            epsilon,
        };
        for class in Label::ALL {
            let rows: Vec<&[T]> = all
                .iter()
                .zip(y)
                .filter(|(_, &l)| l == class)
                .map(|(r, _)| *r)
                .collect();
            if rows.is_empty() {
                continue;
            }
            let (mean, var) = population_moments(&rows, d);
            model.classes.push(class);
            model.priors.push(T::from_count(rows.len()) / n);
            model.means.push(mean);
            model.variances.push(var.into_iter().map(|v| v + epsilon).collect());
        }
        Ok(model)
    }

    /// Unnormalised log posterior per class in `self.classes` order.
    pub fn log_scores(&self, x: &[T]) -> Result<Vec<T>, ClassifierError> {
        check_dim(self.n_features(), x)?;
        let two_pi = T::lit(std::f64::consts::TAU);
        let half = T::lit(0.5);
        Ok((0..self.classes.len())
            .map(|c| {
                self.means[c]
                    .iter()
                    .zip(&self.variances[c])
                    .zip(x)
                    .fold(self.priors[c].ln(), |acc, ((&m, &v), &xi)| {
                        acc - half * (two_pi * v).ln() - (xi - m) * (xi - m) / (T::lit(2.0) * v)
                    })
            })
            .collect())
    }
}

/// Argmax over classes; a tie for the maximum resolves to Hold.
pub(crate) fn argmax_label<T: Scalar>(classes: &[Label], scores: &[T]) -> Label {
    let best = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let mut winners = classes.iter().zip(scores).filter(|(_, &s)| s == best);
    match (winners.next(), winners.next()) {
        (Some((&only, _)), None) => only,
        _ => Label::Hold,
    }
}

impl<T: Scalar> Classifier<T> for GaussianNb<T> {
    fn n_features(&self) -> usize {
        self.means[0].len()
    }

    fn predict(&self, x: &[T]) -> Result<Label, ClassifierError> {
        Ok(argmax_label(&self.classes, &self.log_scores(x)?))
    }
}
