//! Seeded synthetic data: a multi-ticker market feed in the input schema and a
//! feature-level dataset with a planted signal. Used by tests, the acceptance
//! suite and `equisig synth`.

use std::collections::BTreeMap;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::ingest::{csv_header, DailyRecord, RawField, TickerSeries, DATE_FORMAT, RAW_FIELD_COUNT};
use crate::transform::{Dataset, FeatureRow, Label, FEATURE_COUNT, FEATURE_NAMES};

pub const SECTORS: [&str; 4] = ["Technology", "Energy", "Health Care", "Financials"];

#[derive(Debug, Clone, PartialEq)]
pub struct MarketSpec {
    pub tickers: usize,
    pub days: usize,
    pub seed: u64,
    /// Probability that any single numeric cell is blanked in the CSV output.
    pub missing_rate: f64,
}

impl Default for MarketSpec {
    fn default() -> Self {
        MarketSpec {
            tickers: 4,
            days: 300,
            seed: 7,
            missing_rate: 0.0,
        }
    }
}

fn start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2010, 1, 4).expect("valid date")
}

/// The `n`-th weekday on or after the start date.
fn trading_day(n: usize) -> NaiveDate {
    let mut d = start_date();
    let mut left = n;
    while left > 0 {
        d = d + Days::new(1);
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            left -= 1;
        }
    }
    d
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let p = 10f64.powi(decimals);
    (x * p).round() / p
}

/// A complete record with fixed analyst counts (10 total: 5 buy, 3 hold, 2 sell).
pub fn record_with_close(ticker: &str, sector: &str, day: i64, close: f64) -> DailyRecord {
    let mut values = [1.0; RAW_FIELD_COUNT];
    values[RawField::PxOfficialClose.index()] = close;
    values[RawField::PxVolume.index()] = 1_000_000.0;
    values[RawField::TotAnalystRec.index()] = 10.0;
    values[RawField::TotBuyRec.index()] = 5.0;
    values[RawField::TotHoldRec.index()] = 3.0;
    values[RawField::TotSellRec.index()] = 2.0;
    DailyRecord {
        date: start_date() + Days::new(day as u64),
        ticker: ticker.to_string(),
        sector: sector.to_string(),
        values,
    }
}

fn ticker_name(i: usize) -> String {
    format!("TK{i:02}")
}

/// Simulates one ticker. Analyst sentiment follows an AR(1) process that also
/// tilts the next day's return, so recommendation features carry signal.
fn simulate_ticker(index: usize, days: usize, rng: &mut ChaCha8Rng) -> TickerSeries {
    let ticker = ticker_name(index);
    let sector = SECTORS[index % SECTORS.len()].to_string();
    let mut close: f64 = rng.gen_range(20.0..400.0);
    let shares: f64 = rng.gen_range(1e8..5e9f64).round();
    let eps_base = close / rng.gen_range(10.0..35.0);
    let book_per_share = close / rng.gen_range(1.0..8.0);
    let roa_base: f64 = rng.gen_range(0.01..0.15);
    let capex_base: f64 = rng.gen_range(1e8..5e9);
    let growth_base: f64 = rng.gen_range(2.0..20.0);
    let analysts = 8.0 + (index % 12) as f64;
    let mut sentiment = 0.0f64;

    let mut records = Vec::with_capacity(days);
    for day in 0..days {
        let z: f64 = rng.sample(StandardNormal);
        let ret = 0.006 * sentiment + 0.01 * z;
        close = round_to((close * ret.exp()).max(1.0), 2);
        let e: f64 = rng.sample(StandardNormal);
        sentiment = 0.9 * sentiment + 0.44 * e;
        let tilt = sentiment.tanh();

        let buy = (analysts * (0.45 + 0.25 * tilt)).round().clamp(0.0, analysts);
        let sell = (analysts * (0.2 - 0.15 * tilt)).round().clamp(0.0, analysts - buy);
        let hold = analysts - buy - sell;
        let volume = (1e6 * (0.3 * rng.sample::<f64, _>(StandardNormal)).exp()).round();
        let short_int = (5e5 * (0.2 * rng.sample::<f64, _>(StandardNormal)).exp()).round();
        let eps = eps_base * (1.0 + 0.02 * rng.sample::<f64, _>(StandardNormal));
        let capex = capex_base * (1.0 + 0.05 * rng.sample::<f64, _>(StandardNormal));
        let noise = |rng: &mut ChaCha8Rng, s: f64| s * rng.sample::<f64, _>(StandardNormal);

        let mut v = [0.0; RAW_FIELD_COUNT];
        v[RawField::PxOfficialClose.index()] = close;
        v[RawField::PxVolume.index()] = volume;
        v[RawField::CurMktCap.index()] = round_to(close * shares, 0);
        v[RawField::HistoricalMarketCap.index()] = round_to(close * shares * (1.0 + noise(rng, 0.01)), 0);
        v[RawField::ShortInt.index()] = short_int;
        v[RawField::ShortIntRatio.index()] = round_to(short_int / volume, 4);
        v[RawField::PeRatio.index()] = round_to(close / eps, 4);
        v[RawField::PxToBookRatio.index()] = round_to(close / book_per_share, 4);
        v[RawField::ReturnOnAsset.index()] = round_to(roa_base + noise(rng, 0.002), 5);
        v[RawField::BestEps.index()] = round_to(eps, 4);
        v[RawField::BestEpsLo.index()] = round_to(eps * 0.9, 4);
        v[RawField::BestEpsHi.index()] = round_to(eps * 1.1, 4);
        v[RawField::BestCapex.index()] = round_to(capex, 0);
        v[RawField::BestCapexLo.index()] = round_to(capex * 0.85, 0);
        v[RawField::BestCapexHi.index()] = round_to(capex * 1.15, 0);
        v[RawField::TotAnalystRec.index()] = analysts;
        v[RawField::TotBuyRec.index()] = buy;
        v[RawField::TotSellRec.index()] = sell;
        v[RawField::TotHoldRec.index()] = hold;
        v[RawField::EqyRecCons.index()] = round_to(1.0 + 4.0 * buy / analysts, 4);
        v[RawField::BestAnalystRating.index()] = round_to(3.0 + 1.5 * tilt + noise(rng, 0.1), 4);
        v[RawField::BestEstLongTermGrowth.index()] = round_to(growth_base + noise(rng, 0.5), 4);
        v[RawField::BestTargetPrice.index()] = round_to(close * (1.1 + 0.05 * tilt), 2);

        records.push(DailyRecord {
            date: trading_day(day),
            ticker: ticker.clone(),
            sector: sector.clone(),
            values: v,
        });
    }
    TickerSeries {
        ticker,
        sector,
        records,
    }
}

pub fn generate_market(spec: &MarketSpec) -> BTreeMap<String, TickerSeries> {
    (0..spec.tickers)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64);
            let s = simulate_ticker(i, spec.days, &mut rng);
            (s.ticker.clone(), s)
        })
        .collect()
}

/// Renders the market as input CSV, interleaved by date like a daily feed.
pub fn generate_market_csv(spec: &MarketSpec) -> String {
    let market = generate_market(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x6d69_7373);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(csv_header()).expect("in-memory write");
    for day in 0..spec.days {
        for s in market.values() {
            let r = &s.records[day];
            let mut row = vec![
                r.date.format(DATE_FORMAT).to_string(),
                r.ticker.clone(),
                r.sector.clone(),
            ];
            for v in r.values {
                if spec.missing_rate > 0.0 && rng.gen_bool(spec.missing_rate) {
                    row.push(String::new());
                } else {
                    row.push(v.to_string());
                }
            }
            w.write_record(&row).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

/// Feature indices driving the planted day-10 label.
pub const PLANTED_SIGNAL_FEATURES: [usize; 2] = [16, 18];

/// Correlated feature blocks: (members, idiosyncratic noise scale). The first block
/// holds the signal features and is the most tightly correlated.
const BLOCKS: [(&[usize], f64); 6] = [
    (&[15, 16, 17, 18, 23, 24], 0.3),
    (&[0, 2, 3, 22, 9], 0.5),
    (&[10, 11, 12, 13, 14], 0.7),
    (&[1, 4, 5, 19], 0.6),
    (&[6, 7, 8, 20], 0.8),
    (&[21, 25, 26, 27], 1.0),
];

/// Dataset of `n_rows` feature rows whose day-10 label is a thresholded sum of
/// the two features in [`PLANTED_SIGNAL_FEATURES`], with `label_noise` of the
/// labels replaced by a uniformly random class. Only horizon 10 is labelled.
pub fn planted_signal_dataset(n_rows: usize, label_noise: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
    let rows = (0..n_rows)
        .map(|i| {
            let mut x = [0.0f64; FEATURE_COUNT];
            for (members, sigma) in BLOCKS {
                let factor: f64 = rng.sample(StandardNormal);
                for &j in members {
                    let e: f64 = rng.sample(StandardNormal);
                    x[j] = factor + sigma * e;
                }
            }
            let s = 0.5 * (x[PLANTED_SIGNAL_FEATURES[0]] + x[PLANTED_SIGNAL_FEATURES[1]]);
            let mut label = if s > 0.44 {
                Label::Buy
            } else if s < -0.44 {
                Label::Sell
            } else {
                Label::Hold
            };
            if rng.gen_bool(label_noise) {
                label = Label::ALL[rng.gen_range(0..3)];
            }
            // heterogeneous units so that standardisation matters
            let features = x
                .iter()
                .enumerate()
                .map(|(j, v)| v * 10f64.powi((j % 4) as i32) + j as f64)
                .collect();
            let mut labels = vec![None; 10];
            labels[9] = Some(label);
            FeatureRow {
                ticker: ticker_name(i % 8),
                date: base + Days::new((i / 8) as u64),
                features,
                labels,
            }
        })
        .collect();
    Dataset {
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        horizons: (1..=10).collect(),
        rows,
    }
}
