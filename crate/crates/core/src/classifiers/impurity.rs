use super::{ClassifierError, Criterion};
use crate::num::Scalar;

fn proportions<T: Scalar>(counts: &[usize; 3]) -> Result<impl Iterator<Item = T> + '_, ClassifierError> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(ClassifierError::EmptyNode);
    }
    let total = T::from_count(total);
    Ok(counts.iter().map(move |&c| T::from_count(c) / total))
}

/// 1 - sum(p^2).
pub fn gini_impurity<T: Scalar>(counts: &[usize; 3]) -> Result<T, ClassifierError> {
    Ok(proportions::<T>(counts)?.fold(T::one(), |acc, p| acc - p * p))
}

/// Shannon entropy in bits, with 0 log 0 = 0.
pub fn entropy_impurity<T: Scalar>(counts: &[usize; 3]) -> Result<T, ClassifierError> {
    Ok(proportions::<T>(counts)?
        .filter(|&p| p > T::zero())
        .fold(T::zero(), |acc, p| acc - p * p.log2()))
}

pub fn impurity<T: Scalar>(criterion: Criterion, counts: &[usize; 3]) -> Result<T, ClassifierError> {
    match criterion {
        Criterion::Gini => gini_impurity(counts),
        Criterion::Entropy => entropy_impurity(counts),
    }
}
