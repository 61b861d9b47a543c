use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::FeatureRow;
use super::TransformError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 0.7,
            seed: 42,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<(), TransformError> {
        if self.train_fraction > 0.0 && self.train_fraction < 1.0 {
            Ok(())
        } else {
            Err(TransformError::InvalidFraction(self.train_fraction))
        }
    }
}

/// Seeded Fisher-Yates permutation of `0..n_rows` (ChaCha8 seeded from the
/// 64-bit seed); the first `floor(n * train_fraction)` entries are the
/// training set.
pub fn shuffle_split(n_rows: usize, cfg: &SplitConfig) -> Result<(Vec<usize>, Vec<usize>), TransformError> {
    cfg.validate()?;
    if n_rows == 0 {
        return Err(TransformError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n_rows).collect();
    for i in (1..n_rows).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let n_train = (n_rows as f64 * cfg.train_fraction).floor() as usize;
    let test = order.split_off(n_train);
    Ok((order, test))
}

/// Partitions rows by the sector of their ticker, keeping row order within each group.
pub fn group_by_sector(
    rows: &[FeatureRow],
    sectors: &BTreeMap<String, String>,
) -> Result<BTreeMap<String, Vec<FeatureRow>>, TransformError> {
    let mut out: BTreeMap<String, Vec<FeatureRow>> = BTreeMap::new();
    for r in rows {
        let sector = sectors
            .get(&r.ticker)
            .ok_or_else(|| TransformError::UnknownTicker(r.ticker.clone()))?;
        out.entry(sector.clone()).or_default().push(r.clone());
    }
    Ok(out)
}
