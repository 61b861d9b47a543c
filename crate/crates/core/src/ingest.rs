//! Daily market CSV ingestion: parsing, null policy and per-ticker grouping.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DATE_COLUMN: &str = "date";
pub const TICKER_COLUMN: &str = "ticker";
pub const SECTOR_COLUMN: &str = "sector";
pub const DATE_FORMAT: &str = "%Y-%m-%d";

pub const RAW_FIELD_COUNT: usize = 23;

#[derive(Debug, Error, PartialEq)]
pub enum IngestError {
    #[error("input is empty (no header row)")]
    EmptyInput,
    #[error("required column `{0}` is missing from the header")]
    SchemaError(String),
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("every row was dropped during cleaning")]
    AllRowsDropped,
    #[error("duplicate record for ticker {ticker} on {date}")]
    DuplicateKey { ticker: String, date: NaiveDate },
    #[error("ticker {ticker} is listed under both `{first}` and `{second}`")]
    SectorConflict {
        ticker: String,
        first: String,
        second: String,
    },
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for IngestError {
    fn from(e: csv::Error) -> Self {
        IngestError::Csv(e.to_string())
    }
}

/// The raw per-day market fields, in canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RawField {
    PxOfficialClose,
    PxVolume,
    CurMktCap,
    HistoricalMarketCap,
    ShortInt,
    ShortIntRatio,
    PeRatio,
    PxToBookRatio,
    ReturnOnAsset,
    BestEps,
    BestEpsLo,
    BestEpsHi,
    BestCapex,
    BestCapexLo,
    BestCapexHi,
    TotAnalystRec,
    TotBuyRec,
    TotSellRec,
    TotHoldRec,
    EqyRecCons,
    BestAnalystRating,
    BestEstLongTermGrowth,
    BestTargetPrice,
}

impl RawField {
    pub const ALL: [RawField; RAW_FIELD_COUNT] = [
        RawField::PxOfficialClose,
        RawField::PxVolume,
        RawField::CurMktCap,
        RawField::HistoricalMarketCap,
        RawField::ShortInt,
        RawField::ShortIntRatio,
        RawField::PeRatio,
        RawField::PxToBookRatio,
        RawField::ReturnOnAsset,
        RawField::BestEps,
        RawField::BestEpsLo,
        RawField::BestEpsHi,
        RawField::BestCapex,
        RawField::BestCapexLo,
        RawField::BestCapexHi,
        RawField::TotAnalystRec,
        RawField::TotBuyRec,
        RawField::TotSellRec,
        RawField::TotHoldRec,
        RawField::EqyRecCons,
        RawField::BestAnalystRating,
        RawField::BestEstLongTermGrowth,
        RawField::BestTargetPrice,
    ];

    /// Column header used in the input CSV.
    pub fn symbol(self) -> &'static str {
        match self {
            RawField::PxOfficialClose => "PX_OFFICIAL_CLOSE",
            RawField::PxVolume => "PX_VOLUME",
            RawField::CurMktCap => "CUR_MKT_CAP",
            RawField::HistoricalMarketCap => "HISTORICAL_MARKET_CAP",
            RawField::ShortInt => "SHORT_INT",
            RawField::ShortIntRatio => "SHORT_INT_RATIO",
            RawField::PeRatio => "PE_RATIO",
            RawField::PxToBookRatio => "PX_TO_BOOK_RATIO",
            RawField::ReturnOnAsset => "RETURN_ON_ASSET",
            RawField::BestEps => "BEST_EPS",
            RawField::BestEpsLo => "BEST_EPS_LO",
            RawField::BestEpsHi => "BEST_EPS_HI",
            RawField::BestCapex => "BEST_CAPEX",
            RawField::BestCapexLo => "BEST_CAPEX_LO",
            RawField::BestCapexHi => "BEST_CAPEX_HI",
            RawField::TotAnalystRec => "TOT_ANALYST_REC",
            RawField::TotBuyRec => "TOT_BUY_REC",
            RawField::TotSellRec => "TOT_SELL_REC",
            RawField::TotHoldRec => "TOT_HOLD_REC",
            RawField::EqyRecCons => "EQY_REC_CONS",
            RawField::BestAnalystRating => "BEST_ANALYST_RATING",
            RawField::BestEstLongTermGrowth => "BEST_EST_LONG_TERM_GROWTH",
            RawField::BestTargetPrice => "BEST_TARGET_PRICE",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Analyst recommendation counts must be non-negative integers.
    pub fn is_count(self) -> bool {
        matches!(
            self,
            RawField::TotAnalystRec | RawField::TotBuyRec | RawField::TotSellRec | RawField::TotHoldRec
        )
    }

    pub fn from_symbol(symbol: &str) -> Option<RawField> {
        RawField::ALL.into_iter().find(|f| f.symbol() == symbol)
    }
}

/// Full header of the input CSV in canonical order.
pub fn csv_header() -> Vec<&'static str> {
    let mut cols = vec![DATE_COLUMN, TICKER_COLUMN, SECTOR_COLUMN];
    cols.extend(RawField::ALL.iter().map(|f| f.symbol()));
    cols
}

/// One parsed but unvalidated CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub line: u64,
    pub date: Option<NaiveDate>,
    pub ticker: Option<String>,
    pub sector: Option<String>,
    pub values: [Option<f64>; RAW_FIELD_COUNT],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawTable {
    pub rows: Vec<RawRow>,
    /// Numeric cells that were present but unusable and were turned into missing values.
    pub invalid_cells: usize,
}

impl RawTable {
    pub const N_COLUMNS: usize = RAW_FIELD_COUNT + 3;

    pub fn n_columns(&self) -> usize {
        Self::N_COLUMNS
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// One complete ticker-day after cleaning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyRecord {
    pub date: NaiveDate,
    pub ticker: String,
    pub sector: String,
    pub values: [f64; RAW_FIELD_COUNT],
}

impl DailyRecord {
    pub fn get(&self, field: RawField) -> f64 {
        self.values[field.index()]
    }

    pub fn close(&self) -> f64 {
        self.get(RawField::PxOfficialClose)
    }

    /// buy + sell + hold <= total. Violations are tolerated ("no opinion" analysts).
    pub fn rec_counts_consistent(&self) -> bool {
        self.get(RawField::TotBuyRec) + self.get(RawField::TotSellRec) + self.get(RawField::TotHoldRec)
            <= self.get(RawField::TotAnalystRec)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CleanTable {
    pub rows: Vec<DailyRecord>,
    /// Rows dropped per column that was missing (a row missing two columns counts twice).
    pub dropped: BTreeMap<String, usize>,
    /// Surviving rows whose buy + sell + hold exceeded the analyst total.
    pub inconsistent_rec_counts: usize,
}

impl CleanTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_raw(&self) -> RawTable {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| RawRow {
                line: i as u64 + 2,
                date: Some(r.date),
                ticker: Some(r.ticker.clone()),
                sector: Some(r.sector.clone()),
                values: r.values.map(Some),
            })
            .collect();
        RawTable { rows, invalid_cells: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickerSeries {
    pub ticker: String,
    pub sector: String,
    pub records: Vec<DailyRecord>,
}

impl TickerSeries {
    pub fn closes(&self) -> Vec<f64> {
        self.records.iter().map(DailyRecord::close).collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn parse_numeric(field: RawField, cell: &str) -> Result<Option<f64>, ()> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    let v: f64 = cell.parse().map_err(|_| ())?;
    if !v.is_finite() {
        return Err(());
    }
    if field == RawField::PxOfficialClose && v <= 0.0 {
        return Err(());
    }
    if field.is_count() && (v < 0.0 || v.fract() != 0.0) {
        return Err(());
    }
    Ok(Some(v))
}

fn non_empty(cell: &str) -> Option<String> {
    let cell = cell.trim();
    (!cell.is_empty()).then(|| cell.to_string())
}

/// Parses a market CSV. Columns are located by header name; extra columns are ignored.
pub fn parse_market_csv<R: Read>(source: R) -> Result<RawTable, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(IngestError::EmptyInput);
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| IngestError::SchemaError(name.to_string()))
    };
    let date_col = find(DATE_COLUMN)?;
    let ticker_col = find(TICKER_COLUMN)?;
    let sector_col = find(SECTOR_COLUMN)?;
    let mut value_cols = [0usize; RAW_FIELD_COUNT];
    for field in RawField::ALL {
        value_cols[field.index()] = find(field.symbol())?;
    }

    let mut table = RawTable::default();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(IngestError::MalformedRow {
                line,
                reason: format!("expected {} columns, found {}", headers.len(), record.len()),
            });
        }
        let date = match record[date_col].trim() {
            "" => None,
            s => Some(
                NaiveDate::parse_from_str(s, DATE_FORMAT).map_err(|_| IngestError::MalformedRow {
                    line,
                    reason: format!("date `{s}` is not YYYY-MM-DD"),
                })?,
            ),
        };
        let mut values = [None; RAW_FIELD_COUNT];
        for field in RawField::ALL {
            match parse_numeric(field, &record[value_cols[field.index()]]) {
                Ok(v) => values[field.index()] = v,
                Err(()) => table.invalid_cells += 1,
            }
        }
        table.rows.push(RawRow {
            line,
            date,
            ticker: non_empty(&record[ticker_col]),
            sector: non_empty(&record[sector_col]),
            values,
        });
    }
    if table.invalid_cells > 0 {
        log::warn!("{} unusable numeric cells treated as missing", table.invalid_cells);
    }
    Ok(table)
}

/// Drops every row with any missing key or raw field.
pub fn validate_and_clean(table: &RawTable) -> Result<CleanTable, IngestError> {
    let mut out = CleanTable::default();
    for row in &table.rows {
        let mut missing: Vec<&str> = Vec::new();
        if row.date.is_none() {
            missing.push(DATE_COLUMN);
        }
        if row.ticker.is_none() {
            missing.push(TICKER_COLUMN);
        }
        if row.sector.is_none() {
            missing.push(SECTOR_COLUMN);
        }
        for field in RawField::ALL {
            if row.values[field.index()].is_none() {
                missing.push(field.symbol());
            }
        }
        if !missing.is_empty() {
            for col in missing {
                *out.dropped.entry(col.to_string()).or_default() += 1;
            }
            continue;
        }
        let record = DailyRecord {
            date: row.date.expect("checked"),
            ticker: row.ticker.clone().expect("checked"),
            sector: row.sector.clone().expect("checked"),
            values: row.values.map(|v| v.expect("checked")),
        };
        if !record.rec_counts_consistent() {
            out.inconsistent_rec_counts += 1;
        }
        out.rows.push(record);
    }
    if out.rows.is_empty() {
        return Err(IngestError::AllRowsDropped);
    }
    if out.inconsistent_rec_counts > 0 {
        log::warn!(
            "{} rows have buy + sell + hold recommendations above the analyst total",
            out.inconsistent_rec_counts
        );
    }
    Ok(out)
}

/// Groups rows per ticker, sorted by date.
pub fn partition_by_ticker(table: &CleanTable) -> Result<BTreeMap<String, TickerSeries>, IngestError> {
    let mut out: BTreeMap<String, TickerSeries> = BTreeMap::new();
    for rec in &table.rows {
        let series = out.entry(rec.ticker.clone()).or_insert_with(|| TickerSeries {
            ticker: rec.ticker.clone(),
            sector: rec.sector.clone(),
            records: Vec::new(),
        });
        if series.sector != rec.sector {
            return Err(IngestError::SectorConflict {
                ticker: rec.ticker.clone(),
                first: series.sector.clone(),
                second: rec.sector.clone(),
            });
        }
        series.records.push(rec.clone());
    }
    for series in out.values_mut() {
        series.records.sort_by_key(|r| r.date);
        if let Some(w) = series.records.windows(2).find(|w| w[0].date == w[1].date) {
            return Err(IngestError::DuplicateKey {
                ticker: series.ticker.clone(),
                date: w[0].date,
            });
        }
    }
    Ok(out)
}

/// Writes records in the input schema so they can be parsed back unchanged.
pub fn write_market_csv<W: Write>(records: &[DailyRecord], sink: W) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(csv_header())?;
    for r in records {
        let mut row = vec![
            r.date.format(DATE_FORMAT).to_string(),
            r.ticker.clone(),
            r.sector.clone(),
        ];
        row.extend(r.values.iter().map(f64::to_string));
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|e| IngestError::Csv(e.to_string()))?;
    Ok(())
}

/// Convenience: parse, clean and partition in one step.
pub fn load_series<R: Read>(source: R) -> Result<BTreeMap<String, TickerSeries>, IngestError> {
    let raw = parse_market_csv(source)?;
    let clean = validate_and_clean(&raw)?;
    partition_by_ticker(&clean)
}
