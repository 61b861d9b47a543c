use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;

use super::features::{assemble_features, FeatureRow, FEATURE_NAMES};
use super::labels::{Label, LabelConfig};
use super::TransformError;
use crate::ingest::{TickerSeries, DATE_COLUMN, DATE_FORMAT, TICKER_COLUMN};

/// Feature rows with their column names and label horizons.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub horizons: Vec<usize>,
    pub rows: Vec<FeatureRow>,
}

impl Dataset {
    /// Assembles every ticker in map order (tickers sorted, dates ascending within each).
    pub fn from_series(
        series: &BTreeMap<String, TickerSeries>,
        label_cfg: &LabelConfig,
    ) -> Result<Dataset, TransformError> {
        let mut rows = Vec::new();
        for s in series.values() {
            rows.extend(assemble_features(s, label_cfg)?);
        }
        if rows.is_empty() {
            return Err(TransformError::EmptyDataset);
        }
        Ok(Dataset {
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            horizons: label_cfg.horizons.clone(),
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// Slot of horizon `n` in each row's label vector.
    pub fn horizon_slot(&self, n: usize) -> Option<usize> {
        self.horizons.iter().position(|&h| h == n)
    }

    pub fn with_rows(&self, rows: Vec<FeatureRow>) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            horizons: self.horizons.clone(),
            rows,
        }
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        self.with_rows(indices.iter().map(|&i| self.rows[i].clone()).collect())
    }

    /// Keeps only the named columns, in the order given.
    pub fn project<S: AsRef<str>>(&self, names: &[S]) -> Result<Dataset, TransformError> {
        let idx = names
            .iter()
            .map(|n| {
                self.feature_index(n.as_ref())
                    .ok_or_else(|| TransformError::UnknownFeature(n.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let rows = self
            .rows
            .iter()
            .map(|r| FeatureRow {
                features: idx.iter().map(|&i| r.features[i]).collect(),
                ..r.clone()
            })
            .collect();
        Ok(Dataset {
            feature_names: names.iter().map(|n| n.as_ref().to_string()).collect(),
            horizons: self.horizons.clone(),
            rows,
        })
    }
}

fn label_column(h: usize) -> String {
    format!("label_day{h}")
}

pub fn write_dataset_csv<W: Write>(ds: &Dataset, sink: W) -> Result<(), TransformError> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec![DATE_COLUMN.to_string(), TICKER_COLUMN.to_string()];
    header.extend(ds.feature_names.iter().cloned());
    header.extend(ds.horizons.iter().map(|&h| label_column(h)));
    w.write_record(&header)?;
    for r in &ds.rows {
        let mut rec = vec![r.date.format(DATE_FORMAT).to_string(), r.ticker.clone()];
        rec.extend(r.features.iter().map(f64::to_string));
        rec.extend(
            r.labels
                .iter()
                .map(|l| l.map_or(String::new(), |l| l.code().to_string())),
        );
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| TransformError::Csv(e.to_string()))?;
    Ok(())
}

pub fn read_dataset_csv<R: Read>(source: R) -> Result<Dataset, TransformError> {
    let mut rdr = csv::Reader::from_reader(source);
    let header = rdr.headers()?.clone();
    if header.len() < 2 || &header[0] != DATE_COLUMN || &header[1] != TICKER_COLUMN {
        return Err(TransformError::Csv("header must start with date,ticker".into()));
    }
    let mut feature_names = Vec::new();
    let mut horizons = Vec::new();
    for col in header.iter().skip(2) {
        match col.strip_prefix("label_day") {
            Some(h) => horizons.push(
                h.parse()
                    .map_err(|_| TransformError::Csv(format!("bad label column `{col}`")))?,
            ),
            None if horizons.is_empty() => feature_names.push(col.to_string()),
            None => return Err(TransformError::Csv(format!("feature `{col}` after labels"))),
        }
    }
    let bad = |line: u64, what: &str| TransformError::Csv(format!("line {line}: {what}"));
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let date = NaiveDate::parse_from_str(&rec[0], DATE_FORMAT).map_err(|_| bad(line, "bad date"))?;
        let nf = feature_names.len();
        let features = (0..nf)
            .map(|j| rec[2 + j].parse::<f64>().map_err(|_| bad(line, "bad feature value")))
            .collect::<Result<Vec<_>, _>>()?;
        let labels = (0..horizons.len())
            .map(|j| match &rec[2 + nf + j] {
                "" => Ok(None),
                s => s
                    .parse::<u8>()
                    .ok()
                    .and_then(Label::from_code)
                    .map(Some)
                    .ok_or_else(|| bad(line, "bad label")),
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(FeatureRow {
            ticker: rec[1].to_string(),
            date,
            features,
            labels,
        });
    }
    Ok(Dataset {
        feature_names,
        horizons,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate_market, MarketSpec};

    fn small() -> Dataset {
        let series = generate_market(&MarketSpec {
            tickers: 2,
            days: 30,
            ..MarketSpec::default()
        });
        Dataset::from_series(&series, &LabelConfig::default()).unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let ds = small();
        let mut buf = Vec::new();
        write_dataset_csv(&ds, &mut buf).unwrap();
        let back = read_dataset_csv(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
        let header = String::from_utf8(buf).unwrap();
        assert!(header.lines().next().unwrap().ends_with("label_day9,label_day10"));
    }

    #[test]
    fn projection_copies_columns_exactly() {
        let ds = small();
        let names = ["TOT_HOLD_REC", "PX_OFFICIAL_CLOSE", "std_5day"];
        let p = ds.project(&names).unwrap();
        assert_eq!(p.feature_names, names);
        for (a, b) in ds.rows.iter().zip(&p.rows) {
            for (j, n) in names.iter().enumerate() {
                assert_eq!(
                    b.features[j].to_bits(),
                    a.features[ds.feature_index(n).unwrap()].to_bits()
                );
            }
            assert_eq!(a.labels, b.labels);
        }
        assert!(matches!(ds.project(&["nope"]), Err(TransformError::UnknownFeature(_))));
    }
}
