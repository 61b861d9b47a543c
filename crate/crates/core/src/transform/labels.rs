use std::fmt;

use serde::{Deserialize, Serialize};

use super::TransformError;
use crate::ingest::TickerSeries;

/// Direction class of a future price move. Codes match the dataset encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Sell = 0,
    Hold = 1,
    Buy = 2,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Sell, Label::Hold, Label::Buy];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_code(code: u8) -> Option<Label> {
        match code {
            0 => Some(Label::Sell),
            1 => Some(Label::Hold),
            2 => Some(Label::Buy),
            _ => None,
        }
    }

    /// Majority class of a vote tally; any tie for the top count resolves to Hold.
    pub fn majority(counts: &[usize; 3]) -> Label {
        let max = *counts.iter().max().expect("three counts");
        let mut winners = Label::ALL.into_iter().filter(|l| counts[l.index()] == max);
        match (winners.next(), winners.next()) {
            (Some(only), None) => only,
            _ => Label::Hold,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Sell => "sell",
            Label::Hold => "hold",
            Label::Buy => "buy",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelConfig {
    /// Look-ahead distances in trading rows.
    pub horizons: Vec<usize>,
    pub up_threshold: f64,
    pub down_threshold: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig {
            horizons: (1..=10).collect(),
            up_threshold: 1.01,
            down_threshold: 0.99,
        }
    }
}

impl LabelConfig {
    pub fn validate(&self) -> Result<(), TransformError> {
        let bad = |m: &str| Err(TransformError::InvalidLabelConfig(m.to_string()));
        if !(self.down_threshold < 1.0 && 1.0 < self.up_threshold) {
            return bad("thresholds must satisfy down < 1 < up");
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return bad("horizons must be non-empty and positive");
        }
        let mut sorted = self.horizons.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.horizons.len() {
            return bad("horizons must be distinct");
        }
        Ok(())
    }

    pub fn max_horizon(&self) -> usize {
        self.horizons.iter().copied().max().unwrap_or(0)
    }
}

/// Classifies the move from `current` to `future`. Both thresholds are inclusive.
pub fn label_move(current: f64, future: f64, cfg: &LabelConfig) -> Label {
    if future >= cfg.up_threshold * current {
        Label::Buy
    } else if future <= cfg.down_threshold * current {
        Label::Sell
    } else {
        Label::Hold
    }
}

/// Per-day label vectors (one slot per configured horizon) for a close series.
pub fn label_closes(closes: &[f64], cfg: &LabelConfig) -> Vec<Vec<Option<Label>>> {
    (0..closes.len())
        .map(|i| {
            cfg.horizons
                .iter()
                .map(|&n| closes.get(i + n).map(|&future| label_move(closes[i], future, cfg)))
                .collect()
        })
        .collect()
}

pub fn label_horizons(series: &TickerSeries, cfg: &LabelConfig) -> Vec<Vec<Option<Label>>> {
    label_closes(&series.closes(), cfg)
}
