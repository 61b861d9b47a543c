use serde::{Deserialize, Serialize};

use super::TransformError;
use crate::num::Scalar;

/// Per-feature z-score parameters fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Scaler<T> {
    pub means: Vec<T>,
    /// Sample standard deviations; 0 marks a constant feature.
    pub stds: Vec<T>,
}

impl<T: Scalar> Scaler<T> {
    pub fn fit<R: AsRef<[T]>>(rows: &[R]) -> Result<Self, TransformError> {
        if rows.len() < 2 {
            return Err(TransformError::TooFewRows(rows.len()));
        }
        let d = rows[0].as_ref().len();
        let n = T::from_count(rows.len());
        let mut means = vec![T::zero(); d];
        for r in rows {
            let r = r.as_ref();
            if r.len() != d {
                return Err(TransformError::DimensionMismatch {
                    expected: d,
                    found: r.len(),
                });
            }
            for (m, &x) in means.iter_mut().zip(r) {
                *m = *m + x;
            }
        }
        for m in &mut means {
            *m = *m / n;
        }
        let mut ss = vec![T::zero(); d];
        for r in rows {
            for ((s, &x), &m) in ss.iter_mut().zip(r.as_ref()).zip(&means) {
                *s = *s + (x - m) * (x - m);
            }
        }
        let stds = ss.into_iter().map(|s| (s / (n - T::one())).sqrt()).collect();
        Ok(Scaler { means, stds })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn is_constant(&self, feature: usize) -> bool {
        self.stds[feature] == T::zero()
    }

    pub fn transform(&self, row: &[T]) -> Result<Vec<T>, TransformError> {
        if row.len() != self.dim() {
            return Err(TransformError::DimensionMismatch {
                expected: self.dim(),
                found: row.len(),
            });
        }
        Ok(row
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&x, (&m, &s))| if s == T::zero() { T::zero() } else { (x - m) / s })
            .collect())
    }

    pub fn transform_all<R: AsRef<[T]>>(&self, rows: &[R]) -> Result<Vec<Vec<T>>, TransformError> {
        rows.iter().map(|r| self.transform(r.as_ref())).collect()
    }
}
