use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, GrowParams, TreeNode};
use super::{check_dim, check_training, Classifier, ClassifierError, ClassifierSpec};
use crate::num::Scalar;
use crate::transform::Label;

/// Bagged CART ensemble with per-node feature subsampling.
///
/// Tree `i` draws its bootstrap sample and split candidates from ChaCha8
/// seeded with `seed` on stream `i`, so parallel and serial training agree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RandomForest<T> {
    pub n_features: usize,
    pub seed: u64,
    pub mtry: usize,
    pub bootstrap: bool,
    pub trees: Vec<TreeNode<T>>,
}

pub(crate) fn default_mtry(d: usize) -> usize {
    ((d as f64).sqrt().floor() as usize).max(1)
}

impl<T: Scalar> RandomForest<T> {
    pub fn fit<R: AsRef<[T]> + Sync>(x: &[R], y: &[Label], spec: &ClassifierSpec) -> Result<Self, ClassifierError> {
        let d = check_training(x, y)?;
        spec.validate()?;
        let mtry = spec.mtry.unwrap_or_else(|| default_mtry(d)).min(d);
        let params = GrowParams::from_spec(spec, Some(mtry));
        let n = x.len();
        let trees = (0..spec.n_trees)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                rng.set_stream(i as u64);
                let samples: Vec<usize> = if spec.bootstrap {
                    (0..n).map(|_| rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                grow(x, y, samples, 0, d, &params, &mut Some(&mut rng))
            })
            .collect();
        Ok(RandomForest {
            n_features: d,
            seed: spec.seed,
            mtry,
            bootstrap: spec.bootstrap,
            trees,
        })
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn votes(&self, x: &[T]) -> Result<[usize; 3], ClassifierError> {
        check_dim(self.n_features, x)?;
        let mut votes = [0; 3];
        for t in &self.trees {
            votes[t.predict_unchecked(x).index()] += 1;
        }
        Ok(votes)
    }
}

impl<T: Scalar> Classifier<T> for RandomForest<T> {
    fn n_features(&self) -> usize {
        self.n_features
    }

    /// Majority vote; ties resolve to Hold.
    fn predict(&self, x: &[T]) -> Result<Label, ClassifierError> {
        Ok(Label::majority(&self.votes(x)?))
    }
}
