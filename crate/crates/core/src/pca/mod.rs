//! Principal component ranking of features.

mod linalg;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use linalg::{
    covariance_matrix, jacobi_eigen, EigenDecomposition, Matrix, DEFAULT_JACOBI_TOLERANCE, MAX_JACOBI_SWEEPS,
};

use crate::num::Scalar;
use crate::transform::{Scaler, TransformError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PcaError {
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("matrix is {0}x{1}, expected square")]
    NotSquare(usize, usize),
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("Jacobi iteration did not converge after {sweeps} sweeps (max off-diagonal {off_diagonal:e})")]
    NoConvergence { sweeps: usize, off_diagonal: f64 },
    #[error("total variance is zero")]
    ZeroTotalVariance,
    #[error("cannot select {k} features out of {d}")]
    KTooLarge { k: usize, d: usize },
    #[error("invalid rank config: {0}")]
    InvalidConfig(String),
    #[error("feature name count {names} does not match row width {width}")]
    NameMismatch { names: usize, width: usize },
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for PcaError {
    fn from(e: csv::Error) -> Self {
        PcaError::Csv(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankConfig {
    pub n_components: usize,
    pub contribution_threshold: f64,
    /// Points awarded per component, PC-1 first.
    pub weights: Vec<u32>,
    pub top_k: usize,
}

impl Default for RankConfig {
    fn default() -> Self {
        RankConfig {
            n_components: 6,
            contribution_threshold: 0.1,
            weights: vec![6, 5, 4, 3, 2, 1],
            top_k: 6,
        }
    }
}

impl RankConfig {
    pub fn validate(&self) -> Result<(), PcaError> {
        let bad = |m: &str| Err(PcaError::InvalidConfig(m.to_string()));
        if self.n_components == 0 {
            return bad("n_components must be positive");
        }
        if self.weights.len() != self.n_components {
            return bad("need one weight per component");
        }
        if self.weights.contains(&0) || self.weights.windows(2).any(|w| w[0] <= w[1]) {
            return bad("weights must be positive and strictly decreasing");
        }
        if !(self.contribution_threshold > 0.0 && self.contribution_threshold <= 1.0) {
            return bad("contribution threshold must lie in (0, 1]");
        }
        if self.top_k == 0 {
            return bad("top_k must be positive");
        }
        Ok(())
    }

    pub fn max_weighted(&self) -> u32 {
        self.weights.iter().sum()
    }
}

/// Ratios of each eigenvalue to their total, and the running sum.
pub fn explained_variance<T: Scalar>(eigenvalues: &[T]) -> Result<(Vec<T>, Vec<T>), PcaError> {
    let clamped: Vec<T> = eigenvalues.iter().map(|&v| v.max(T::zero())).collect();
    let total = clamped.iter().fold(T::zero(), |a, &b| a + b);
    if total <= T::zero() {
        return Err(PcaError::ZeroTotalVariance);
    }
    let ratios: Vec<T> = clamped.iter().map(|&v| v / total).collect();
    let mut acc = T::zero();
    let cumulative = ratios
        .iter()
        .map(|&r| {
            acc = acc + r;
            acc
        })
        .collect();
    Ok((ratios, cumulative))
}

/// For each feature row of `loadings`, the component indices whose
/// absolute loading reaches the threshold.
pub fn valid_contributions<T: Scalar>(loadings: &[Vec<T>], cfg: &RankConfig) -> Vec<Vec<usize>> {
    let threshold = T::lit(cfg.contribution_threshold);
    loadings
        .iter()
        .map(|row| {
            row.iter()
                .take(cfg.n_components)
                .enumerate()
                .filter(|(_, l)| l.abs() >= threshold)
                .map(|(j, _)| j)
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub name: String,
    pub occurrences: usize,
    pub weighted_occurrence: u32,
    /// Zero-variance feature left out of the decomposition.
    #[serde(default)]
    pub constant: bool,
}

pub fn score_contributions(name: &str, components: &[usize], cfg: &RankConfig) -> FeatureScore {
    FeatureScore {
        name: name.to_string(),
        occurrences: components.len(),
        weighted_occurrence: components.iter().map(|&j| cfg.weights[j]).sum(),
        constant: false,
    }
}

pub fn weighted_occurrences(names: &[String], contributions: &[Vec<usize>], cfg: &RankConfig) -> Vec<FeatureScore> {
    names
        .iter()
        .zip(contributions)
        .map(|(n, c)| score_contributions(n, c, cfg))
        .collect()
}

/// Sorts `scores` (given in canonical feature order) by weighted occurrence,
/// then occurrences, then canonical position.
pub fn sort_scores(scores: &mut [FeatureScore]) {
    let mut indexed: Vec<(usize, FeatureScore)> = scores.iter().cloned().enumerate().collect();
    indexed.sort_by(|(i, a), (j, b)| {
        b.weighted_occurrence
            .cmp(&a.weighted_occurrence)
            .then(b.occurrences.cmp(&a.occurrences))
            .then(i.cmp(j))
    });
    for (slot, (_, s)) in scores.iter_mut().zip(indexed) {
        *slot = s;
    }
}

/// The first `top_k` names of `sorted`, plus whether zero-score features had
/// to be taken to fill the list.
pub fn select_top_features(sorted: &[FeatureScore], top_k: usize) -> Result<(Vec<String>, bool), PcaError> {
    if top_k > sorted.len() {
        return Err(PcaError::KTooLarge {
            k: top_k,
            d: sorted.len(),
        });
    }
    let chosen = &sorted[..top_k];
    let padded = chosen.iter().any(|s| s.weighted_occurrence == 0);
    Ok((chosen.iter().map(|s| s.name.clone()).collect(), padded))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PcaRanking<T> {
    /// Features that entered the decomposition, in canonical order.
    pub features: Vec<String>,
    pub eigenvalues: Vec<T>,
    pub explained_ratio: Vec<T>,
    pub cumulative_ratio: Vec<T>,
    /// Loadings on the leading components, one row per entry of `features`.
    pub loadings: Vec<Vec<T>>,
    /// Every input feature, sorted by rank.
    pub scores: Vec<FeatureScore>,
    pub selected: Vec<String>,
    pub padded: bool,
    pub config: RankConfig,
}

/// Standardizes `rows`, decomposes their covariance and scores each column.
pub fn rank_features<T: Scalar, R: AsRef<[T]>>(
    names: &[String],
    rows: &[R],
    cfg: &RankConfig,
) -> Result<PcaRanking<T>, PcaError> {
    cfg.validate()?;
    if rows.len() < 2 {
        return Err(PcaError::TooFewRows(rows.len()));
    }
    let width = rows[0].as_ref().len();
    if names.len() != width {
        return Err(PcaError::NameMismatch {
            names: names.len(),
            width,
        });
    }
    if cfg.top_k > width {
        return Err(PcaError::KTooLarge { k: cfg.top_k, d: width });
    }
    let scaler = Scaler::fit(rows)?;
    let kept: Vec<usize> = (0..width).filter(|&j| !scaler.is_constant(j)).collect();
    if kept.is_empty() {
        return Err(PcaError::ZeroTotalVariance);
    }
    let standardized: Vec<Vec<T>> = rows
        .iter()
        .map(|r| {
            let z = scaler.transform(r.as_ref())?;
            Ok(kept.iter().map(|&j| z[j]).collect())
        })
        .collect::<Result<_, TransformError>>()?;

    let cov = covariance_matrix(&standardized)?;
    let eigen = jacobi_eigen(&cov, T::lit(DEFAULT_JACOBI_TOLERANCE))?;
    let (explained_ratio, cumulative_ratio) = explained_variance(&eigen.eigenvalues)?;

    let n_comp = cfg.n_components.min(kept.len());
    let loadings: Vec<Vec<T>> = (0..kept.len())
        .map(|f| (0..n_comp).map(|c| eigen.eigenvectors[(f, c)]).collect())
        .collect();
    let contributions = valid_contributions(&loadings, cfg);

    let mut scores: Vec<FeatureScore> = Vec::with_capacity(width);
    let mut next = kept.iter().zip(&contributions).peekable();
    for (j, name) in names.iter().enumerate() {
        match next.peek() {
            Some((&k, c)) if k == j => {
                scores.push(score_contributions(name, c, cfg));
                next.next();
            }
            _ => scores.push(FeatureScore {
                name: name.clone(),
                occurrences: 0,
                weighted_occurrence: 0,
                constant: true,
            }),
        }
    }
    sort_scores(&mut scores);
    let (selected, padded) = select_top_features(&scores, cfg.top_k)?;
    if padded {
        log::warn!("fewer than {} features contribute; selection padded", cfg.top_k);
    }
    Ok(PcaRanking {
        features: kept.iter().map(|&j| names[j].clone()).collect(),
        eigenvalues: eigen.eigenvalues,
        explained_ratio,
        cumulative_ratio,
        loadings,
        scores,
        selected,
        padded,
        config: cfg.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub feature: String,
    pub occurrences: usize,
    pub weighted_occurrence: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub component: usize,
    pub ratio: f64,
    pub cumulative: f64,
}

pub fn write_ranking_csv<W: Write>(scores: &[FeatureScore], w: W) -> Result<(), PcaError> {
    let mut out = csv::Writer::from_writer(w);
    for s in scores {
        out.serialize(RankingRow {
            feature: s.name.clone(),
            occurrences: s.occurrences,
            weighted_occurrence: s.weighted_occurrence,
        })?;
    }
    out.flush().map_err(|e| PcaError::Csv(e.to_string()))
}

pub fn read_ranking_csv<R: Read>(r: R) -> Result<Vec<RankingRow>, PcaError> {
    csv::Reader::from_reader(r)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(Into::into)
}

pub fn write_variance_csv<T: Scalar, W: Write>(ranking: &PcaRanking<T>, w: W) -> Result<(), PcaError> {
    let mut out = csv::Writer::from_writer(w);
    for (i, (r, c)) in ranking
        .explained_ratio
        .iter()
        .zip(&ranking.cumulative_ratio)
        .enumerate()
    {
        out.serialize(VarianceRow {
            component: i + 1,
            ratio: r.as_f64(),
            cumulative: c.as_f64(),
        })?;
    }
    out.flush().map_err(|e| PcaError::Csv(e.to_string()))
}

pub fn read_variance_csv<R: Read>(r: R) -> Result<Vec<VarianceRow>, PcaError> {
    csv::Reader::from_reader(r)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(Into::into)
}
