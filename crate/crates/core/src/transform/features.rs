use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::labels::{label_horizons, Label, LabelConfig};
use super::TransformError;
use crate::ingest::{DailyRecord, RawField, TickerSeries, RAW_FIELD_COUNT};
use crate::num::{sample_std, Scalar};

pub const SHORT_STD_WINDOW: usize = 5;
pub const LONG_STD_WINDOW: usize = 10;

pub const DERIVED_FEATURE_NAMES: [&str; 5] = ["buy_percent", "hold_percent", "sell_percent", "std_5day", "std_10day"];

pub const FEATURE_COUNT: usize = RAW_FIELD_COUNT + DERIVED_FEATURE_NAMES.len();

/// Canonical feature order: the raw market fields, then the derived indicators.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "PX_OFFICIAL_CLOSE",
    "PX_VOLUME",
    "CUR_MKT_CAP",
    "HISTORICAL_MARKET_CAP",
    "SHORT_INT",
    "SHORT_INT_RATIO",
    "PE_RATIO",
    "PX_TO_BOOK_RATIO",
    "RETURN_ON_ASSET",
    "BEST_EPS",
    "BEST_EPS_LO",
    "BEST_EPS_HI",
    "BEST_CAPEX",
    "BEST_CAPEX_LO",
    "BEST_CAPEX_HI",
    "TOT_ANALYST_REC",
    "TOT_BUY_REC",
    "TOT_SELL_REC",
    "TOT_HOLD_REC",
    "EQY_REC_CONS",
    "BEST_ANALYST_RATING",
    "BEST_EST_LONG_TERM_GROWTH",
    "BEST_TARGET_PRICE",
    "buy_percent",
    "hold_percent",
    "sell_percent",
    "std_5day",
    "std_10day",
];

/// One ticker-day: feature vector plus one optional label per horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub ticker: String,
    pub date: NaiveDate,
    pub features: Vec<f64>,
    pub labels: Vec<Option<Label>>,
}

/// Analyst recommendation shares `(buy, hold, sell)`; `None` when there are no analysts.
pub fn derive_rec_percentages(record: &DailyRecord) -> Option<(f64, f64, f64)> {
    let total = record.get(RawField::TotAnalystRec);
    if total <= 0.0 {
        return None;
    }
    Some((
        record.get(RawField::TotBuyRec) / total,
        record.get(RawField::TotHoldRec) / total,
        record.get(RawField::TotSellRec) / total,
    ))
}

/// Trailing sample standard deviation over `window` values ending at each day.
pub fn rolling_std<T: Scalar>(closes: &[T], window: usize) -> Result<Vec<Option<T>>, TransformError> {
    if window < 2 {
        return Err(TransformError::WindowTooSmall(window));
    }
    Ok((0..closes.len())
        .map(|i| {
            if i + 1 < window {
                None
            } else {
                sample_std(&closes[i + 1 - window..=i])
            }
        })
        .collect())
}

/// Builds feature rows for one ticker. Days lacking a derived value or any label are dropped.
pub fn assemble_features(series: &TickerSeries, label_cfg: &LabelConfig) -> Result<Vec<FeatureRow>, TransformError> {
    if series.is_empty() {
        return Err(TransformError::EmptySeries(series.ticker.clone()));
    }
    label_cfg.validate()?;
    let closes = series.closes();
    let std_short = rolling_std(&closes, SHORT_STD_WINDOW)?;
    let std_long = rolling_std(&closes, LONG_STD_WINDOW)?;
    let labels = label_horizons(series, label_cfg);

    let mut rows = Vec::new();
    for (i, record) in series.records.iter().enumerate() {
        let (Some(pct), Some(s5), Some(s10)) = (derive_rec_percentages(record), std_short[i], std_long[i]) else {
            continue;
        };
        if labels[i].iter().all(Option::is_none) {
            continue;
        }
        let mut features = Vec::with_capacity(FEATURE_COUNT);
        features.extend_from_slice(&record.values);
        features.extend_from_slice(&[pct.0, pct.1, pct.2, s5, s10]);
        rows.push(FeatureRow {
            ticker: series.ticker.clone(),
            date: record.date,
            features,
            labels: labels[i].clone(),
        });
    }
    Ok(rows)
}
