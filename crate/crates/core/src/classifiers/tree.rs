use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::impurity::impurity;
use super::{check_dim, check_training, Classifier, ClassifierError, ClassifierSpec, Criterion};
use crate::num::Scalar;
use crate::transform::Label;

/// Impurity decreases closer than this are ties, resolved toward the lower
/// feature index and then the lower threshold.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub enum TreeNode<T> {
    /// `x[feature] <= threshold` goes left.
    Internal {
        feature: usize,
        threshold: T,
        left: Box<TreeNode<T>>,
        right: Box<TreeNode<T>>,
    },
    Leaf {
        counts: [usize; 3],
        label: Label,
    },
}

impl<T: Scalar> TreeNode<T> {
    fn leaf(counts: [usize; 3]) -> Self {
        TreeNode::Leaf {
            counts,
            label: Label::majority(&counts),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    pub(crate) fn predict_unchecked(&self, x: &[T]) -> Label {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { label, .. } => return *label,
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split<T> {
    pub feature: usize,
    pub threshold: T,
    pub decrease: T,
}

fn class_counts(y: &[Label], samples: &[usize]) -> [usize; 3] {
    let mut counts = [0; 3];
    for &s in samples {
        counts[y[s].index()] += 1;
    }
    counts
}

/// Midpoint of two consecutive distinct values that still separates them.
fn midpoint<T: Scalar>(lo: T, hi: T) -> T {
    let mid = lo + (hi - lo) / T::lit(2.0);
    if mid < hi {
        mid
    } else {
        lo
    }
}

/// Exhaustive CART search over `candidates` for the split of `samples` with the
/// largest weighted impurity decrease. Thresholds are midpoints between
/// consecutive distinct values. Returns `None` when no split has a positive
/// decrease.
pub fn best_split<T: Scalar, R: AsRef<[T]>>(
    x: &[R],
    y: &[Label],
    samples: &[usize],
    criterion: Criterion,
    candidates: &[usize],
) -> Option<Split<T>> {
    let parent_counts = class_counts(y, samples);
    let parent: T = impurity(criterion, &parent_counts).ok()?;
    let tol = T::lit(TIE_TOLERANCE);
    if parent <= tol {
        return None;
    }
    let n = T::from_count(samples.len());
    let mut features = candidates.to_vec();
    features.sort_unstable();
    features.dedup();

    let mut best: Option<Split<T>> = None;
    let mut order = samples.to_vec();
    for &f in &features {
        order.sort_by(|&a, &b| {
            x[a].as_ref()[f]
                .partial_cmp(&x[b].as_ref()[f])
                .expect("finite features")
        });
        let mut left = [0usize; 3];
        for i in 0..order.len() - 1 {
            left[y[order[i]].index()] += 1;
            let lo = x[order[i]].as_ref()[f];
            let hi = x[order[i + 1]].as_ref()[f];
            if lo >= hi {
                continue;
            }
            let right = [
                parent_counts[0] - left[0],
                parent_counts[1] - left[1],
                parent_counts[2] - left[2],
            ];
            let n_left = T::from_count(i + 1);
            let n_right = T::from_count(order.len() - i - 1);
            let child = n_left / n * impurity::<T>(criterion, &left).expect("non-empty")
                + n_right / n * impurity::<T>(criterion, &right).expect("non-empty");
            let decrease = parent - child;
            let threshold_best = best.map_or(tol, |b| b.decrease + tol);
            if decrease > threshold_best {
                best = Some(Split {
                    feature: f,
                    threshold: midpoint(lo, hi),
                    decrease,
                });
            }
        }
    }
    best
}

/// Lowest (feature, threshold) that separates the samples at all. Used when an
/// impure node has only zero-gain splits (XOR-like layouts), so unlimited trees
/// still reach pure leaves.
fn first_separating_split<T: Scalar, R: AsRef<[T]>>(
    x: &[R],
    samples: &[usize],
    candidates: &[usize],
) -> Option<Split<T>> {
    let mut features = candidates.to_vec();
    features.sort_unstable();
    features.into_iter().find_map(|f| {
        let values = samples.iter().map(|&s| x[s].as_ref()[f]);
        let lo = values.clone().fold(T::infinity(), T::min);
        let next = values.filter(|&v| v > lo).fold(T::infinity(), T::min);
        (next < T::infinity()).then(|| Split {
            feature: f,
            threshold: midpoint(lo, next),
            decrease: T::zero(),
        })
    })
}

pub(crate) struct GrowParams {
    pub criterion: Criterion,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features sampled per node; `None` uses every feature.
    pub mtry: Option<usize>,
}

impl GrowParams {
    pub fn from_spec(spec: &ClassifierSpec, mtry: Option<usize>) -> Self {
        GrowParams {
            criterion: spec.criterion,
            max_depth: spec.max_depth,
            min_samples_split: spec.min_samples_split,
            mtry,
        }
    }
}

pub(crate) fn grow<T: Scalar, R: AsRef<[T]>>(
    x: &[R],
    y: &[Label],
    samples: Vec<usize>,
    depth: usize,
    n_features: usize,
    params: &GrowParams,
    rng: &mut Option<&mut ChaCha8Rng>,
) -> TreeNode<T> {
    let counts = class_counts(y, &samples);
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    if pure || params.max_depth.is_some_and(|m| depth >= m) || samples.len() < params.min_samples_split {
        return TreeNode::leaf(counts);
    }
    let candidates: Vec<usize> = match (params.mtry, rng.as_deref_mut()) {
        (Some(m), Some(rng)) if m < n_features => {
            let mut c = index::sample(rng, n_features, m).into_vec();
            c.sort_unstable();
            c
        }
        _ => (0..n_features).collect(),
    };
    let split = best_split(x, y, &samples, params.criterion, &candidates)
        .or_else(|| first_separating_split(x, &samples, &candidates));
    let Some(split) = split else {
        return TreeNode::leaf(counts);
    };
    let (l, r): (Vec<usize>, Vec<usize>) = samples
        .into_iter()
        .partition(|&s| x[s].as_ref()[split.feature] <= split.threshold);
    TreeNode::Internal {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(grow(x, y, l, depth + 1, n_features, params, rng)),
        right: Box::new(grow(x, y, r, depth + 1, n_features, params, rng)),
    }
}

/// CART classification tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DecisionTree<T> {
    pub n_features: usize,
    pub root: TreeNode<T>,
}

impl<T: Scalar> DecisionTree<T> {
    pub fn fit<R: AsRef<[T]>>(x: &[R], y: &[Label], spec: &ClassifierSpec) -> Result<Self, ClassifierError> {
        let d = check_training(x, y)?;
        let params = GrowParams::from_spec(spec, None);
        let root = grow(x, y, (0..x.len()).collect(), 0, d, &params, &mut None);
        Ok(DecisionTree { n_features: d, root })
    }
}

impl<T: Scalar> Classifier<T> for DecisionTree<T> {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict(&self, x: &[T]) -> Result<Label, ClassifierError> {
        check_dim(self.n_features, x)?;
        Ok(self.root.predict_unchecked(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::ClassifierKind;
    use proptest::prelude::*;
    use Label::*;

    fn column(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&a| vec![a]).collect()
    }

    fn tree_spec() -> ClassifierSpec {
        ClassifierSpec::of_kind(ClassifierKind::DecisionTree)
    }

    #[test]
    fn separable_split() {
        let x = column(&[1.0, 2.0, 3.0, 4.0]);
        let y = [Sell, Sell, Buy, Buy];
        let s = best_split(&x, &y, &[0, 1, 2, 3], Criterion::Gini, &[0]).unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.threshold, 2.5);
        assert!((s.decrease - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pure_node_has_no_split() {
        let x = column(&[1.0, 2.0, 3.0]);
        assert_eq!(
            best_split(&x, &[Buy, Buy, Buy], &[0, 1, 2], Criterion::Entropy, &[0]),
            None
        );
    }

    #[test]
    fn restricted_candidates() {
        // feature 1 separates perfectly; feature 0 only partially
        let x = vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![3.0, 1.0], vec![1.5, 1.0]];
        let y = [Sell, Sell, Buy, Buy];
        let all = best_split(&x, &y, &[0, 1, 2, 3], Criterion::Gini, &[0, 1]).unwrap();
        assert_eq!((all.feature, all.threshold), (1, 0.5));
        let only0: Split<f64> = best_split(&x, &y, &[0, 1, 2, 3], Criterion::Gini, &[0]).unwrap();
        assert_eq!(only0.feature, 0);
        // sorted x0: 1(S) 1.5(B) 2(S) 3(B); cuts at 1.25 and 2.5 tie, lower wins
        assert_eq!(only0.threshold, 1.25);
        assert!((only0.decrease - (0.5 - 0.75 * (4.0 / 9.0))).abs() < 1e-15);
    }

    #[test]
    fn depth_one_tree_and_boundary_routing() {
        let x = column(&[1.0, 2.0, 3.0, 4.0]);
        let y = [Sell, Sell, Buy, Buy];
        let t = DecisionTree::fit(&x, &y, &tree_spec()).unwrap();
        assert_eq!(t.root.depth(), 1);
        assert_eq!(t.predict_all(&x).unwrap(), y);
        assert_eq!(t.predict(&[1.0]).unwrap(), Sell);
        assert_eq!(t.predict(&[2.5]).unwrap(), Sell);
        assert_eq!(t.predict(&[2.50001]).unwrap(), Buy);
        assert!(matches!(
            t.predict(&[1.0, 2.0]),
            Err(ClassifierError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn single_class_gives_single_leaf() {
        let x = column(&[1.0, 5.0, 9.0]);
        let t = DecisionTree::fit(&x, &[Hold, Hold, Hold], &tree_spec()).unwrap();
        assert_eq!(
            t.root,
            TreeNode::Leaf {
                counts: [0, 3, 0],
                label: Hold
            }
        );
        assert_eq!(t.predict(&[100.0]).unwrap(), Hold);
    }

    #[test]
    fn max_depth_zero_is_majority_leaf() {
        let x = column(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let spec = ClassifierSpec {
            max_depth: Some(0),
            ..tree_spec()
        };
        let t = DecisionTree::fit(&x, &[Sell, Buy, Buy, Hold, Buy], &spec).unwrap();
        assert_eq!(t.root.n_leaves(), 1);
        assert_eq!(t.predict(&[1.0]).unwrap(), Buy);
    }

    #[test]
    fn tied_leaf_predicts_hold() {
        let x = column(&[1.0, 1.0]);
        let t = DecisionTree::fit(&x, &[Sell, Buy], &tree_spec()).unwrap();
        assert_eq!(t.predict(&[1.0]).unwrap(), Hold);
    }

    #[test]
    fn xor_layout_still_fits() {
        let x = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let y = [Sell, Buy, Buy, Sell];
        assert_eq!(best_split(&x, &y, &[0, 1, 2, 3], Criterion::Gini, &[0, 1]), None);
        let t = DecisionTree::fit(&x, &y, &tree_spec()).unwrap();
        assert_eq!(t.predict_all(&x).unwrap(), y);
    }

    #[test]
    fn empty_training() {
        let x: Vec<Vec<f64>> = vec![];
        assert_eq!(
            DecisionTree::fit(&x, &[], &tree_spec()),
            Err(ClassifierError::EmptyTraining)
        );
    }

    fn label_strategy() -> impl Strategy<Value = Label> {
        prop_oneof![Just(Sell), Just(Hold), Just(Buy)]
    }

    proptest! {
        #[test]
        fn unlimited_tree_fits_consistent_data(
            rows in prop::collection::vec((prop::collection::vec(-5i32..5, 3), label_strategy()), 1..60)
        ) {
            let mut seen = std::collections::HashMap::new();
            let mut x = Vec::new();
            let mut y = Vec::new();
            for (r, l) in rows {
                if *seen.entry(r.clone()).or_insert(l) == l {
                    x.push(r.iter().map(|&v| v as f64).collect::<Vec<_>>());
                    y.push(l);
                }
            }
            let t = DecisionTree::fit(&x, &y, &tree_spec()).unwrap();
            prop_assert_eq!(t.predict_all(&x).unwrap(), y);
        }
    }
}
