//! Single-share long/short backtester over daily closes.
//!
//! Prices and fees are held as integer ten-thousandths of a dollar, so every
//! profit identity holds exactly.

use std::fmt;
use std::io::{Read, Write};
use std::ops::{Add, Neg, Sub};

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::transform::Label;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BacktestError {
    #[error("no bars to trade")]
    Empty,
    #[error("bar {index}: price date {price_date} does not match signal date {signal_date}")]
    Misaligned {
        index: usize,
        price_date: NaiveDate,
        signal_date: NaiveDate,
    },
    #[error("{0} bars of prices but {1} signals")]
    LengthMismatch(usize, usize),
    #[error("bar {0}: close must be positive")]
    NonPositiveClose(usize),
    #[error("initial price must be positive")]
    NonPositiveInitialPrice,
    #[error("invalid backtest config: {0}")]
    InvalidConfig(String),
    #[error("trade log: {0}")]
    Csv(String),
}

impl From<csv::Error> for BacktestError {
    fn from(e: csv::Error) -> Self {
        BacktestError::Csv(e.to_string())
    }
}

/// Whole units per dollar.
pub const MONEY_SCALE: i64 = 10_000;
const PPM: i128 = 1_000_000;

/// A dollar amount in units of $0.0001.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Money(pub i64);

impl Money {
    pub const ZERO: Money = Money(0);

    /// Rounds to the nearest $0.0001.
    pub fn from_dollars(v: f64) -> Money {
        Money((v * MONEY_SCALE as f64).round() as i64)
    }

    pub fn to_dollars(self) -> f64 {
        self.0 as f64 / MONEY_SCALE as f64
    }

    pub fn units(self) -> i64 {
        self.0
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, o: Money) -> Money {
        Money(self.0 + o.0)
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, o: Money) -> Money {
        Money(self.0 - o.0)
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl std::iter::Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let a = self.0.unsigned_abs();
        let scale = MONEY_SCALE as u64;
        write!(f, "{sign}{}.{:04}", a / scale, a % scale)
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.to_dollars())
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Money, D::Error> {
        f64::deserialize(d).map(Money::from_dollars)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktestConfig {
    pub fee_per_transaction: f64,
    pub take_profit_fraction: f64,
    pub stop_loss_fraction: f64,
    /// Label horizon whose prediction drives the trades.
    pub signal_horizon: usize,
    pub liquidate_at_end: bool,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            fee_per_transaction: 0.01,
            take_profit_fraction: 0.01,
            stop_loss_fraction: 0.01,
            signal_horizon: 10,
            liquidate_at_end: true,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<(), BacktestError> {
        let bad = |m: &str| Err(BacktestError::InvalidConfig(m.to_string()));
        if !(self.fee_per_transaction >= 0.0 && self.fee_per_transaction.is_finite()) {
            return bad("fee must be non-negative");
        }
        if !(self.take_profit_fraction > 0.0 && self.stop_loss_fraction > 0.0) {
            return bad("take-profit and stop-loss fractions must be positive");
        }
        if !(1..=10).contains(&self.signal_horizon) {
            return bad("signal horizon must be within 1..=10");
        }
        Ok(())
    }

    pub fn fee(&self) -> Money {
        Money::from_dollars(self.fee_per_transaction)
    }

    fn tp_ppm(&self) -> i128 {
        (self.take_profit_fraction * PPM as f64).round() as i128
    }

    fn sl_ppm(&self) -> i128 {
        (self.stop_loss_fraction * PPM as f64).round() as i128
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Long,
    Short,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Long => "long",
            Side::Short => "short",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitReason {
    TakeProfit,
    StopLoss,
    SignalReversal,
    EndOfData,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Position {
    Flat,
    Long { entry: Money, date: NaiveDate },
    Short { entry: Money, date: NaiveDate },
}

impl Position {
    pub fn side(&self) -> Option<Side> {
        match self {
            Position::Flat => None,
            Position::Long { .. } => Some(Side::Long),
            Position::Short { .. } => Some(Side::Short),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trade {
    pub open_date: NaiveDate,
    pub close_date: NaiveDate,
    pub side: Side,
    pub entry_price: Money,
    pub exit_price: Money,
    pub exit_reason: ExitReason,
    /// Net of the opening and closing fee.
    pub pnl: Money,
}

/// Closes `position` at `exit`. Panics on `Flat`.
pub fn close_position(position: Position, exit: Money, date: NaiveDate, reason: ExitReason, fee: Money) -> Trade {
    let (side, entry, open_date) = match position {
        Position::Long { entry, date } => (Side::Long, entry, date),
        Position::Short { entry, date } => (Side::Short, entry, date),
        Position::Flat => panic!("no open position to close"),
    };
    let gross = match side {
        Side::Long => exit - entry,
        Side::Short => entry - exit,
    };
    Trade {
        open_date,
        close_date: date,
        side,
        entry_price: entry,
        exit_price: exit,
        exit_reason: reason,
        pnl: gross - fee - fee,
    }
}

/// Exit triggered by the take-profit or stop-loss band, executed at `close`.
pub fn check_stops(position: &Position, close: Money, cfg: &BacktestConfig) -> Option<(Money, ExitReason)> {
    let c = close.0 as i128 * PPM;
    let (tp, sl) = (cfg.tp_ppm(), cfg.sl_ppm());
    let reason = match *position {
        Position::Flat => return None,
        Position::Long { entry, .. } => {
            let e = entry.0 as i128;
            if c >= e * (PPM + tp) {
                ExitReason::TakeProfit
            } else if c <= e * (PPM - sl) {
                ExitReason::StopLoss
            } else {
                return None;
            }
        }
        Position::Short { entry, .. } => {
            let e = entry.0 as i128;
            if c <= e * (PPM - tp) {
                ExitReason::TakeProfit
            } else if c >= e * (PPM + sl) {
                ExitReason::StopLoss
            } else {
                return None;
            }
        }
    };
    Some((close, reason))
}

/// Position transition for one signal at `close`, with the trade it closes.
pub fn apply_signal(
    position: Position,
    signal: Label,
    close: Money,
    date: NaiveDate,
    cfg: &BacktestConfig,
) -> (Position, Option<Trade>) {
    let long = Position::Long { entry: close, date };
    let short = Position::Short { entry: close, date };
    match (position, signal) {
        (_, Label::Hold) => (position, None),
        (Position::Flat, Label::Buy) => (long, None),
        (Position::Flat, Label::Sell) => (short, None),
        (Position::Long { .. }, Label::Buy) | (Position::Short { .. }, Label::Sell) => (position, None),
        (Position::Long { .. }, Label::Sell) => (
            short,
            Some(close_position(
                position,
                close,
                date,
                ExitReason::SignalReversal,
                cfg.fee(),
            )),
        ),
        (Position::Short { .. }, Label::Buy) => (
            long,
            Some(close_position(
                position,
                close,
                date,
                ExitReason::SignalReversal,
                cfg.fee(),
            )),
        ),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceBar {
    pub date: NaiveDate,
    pub close: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatedSignal {
    pub date: NaiveDate,
    pub signal: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub trades: Vec<Trade>,
    pub total_profit: Money,
    pub initial_price: Money,
    pub return_percentage: f64,
    /// Side still held after the last bar when liquidation is off.
    pub open_position: Option<Side>,
}

pub fn return_percentage(total_profit: f64, initial_price: f64) -> Result<f64, BacktestError> {
    if initial_price <= 0.0 {
        return Err(BacktestError::NonPositiveInitialPrice);
    }
    Ok(100.0 * total_profit / initial_price)
}

/// Replays the bars in order. On each bar a triggered stop is realised
/// first, then the bar's signal acts on the resulting position.
pub fn run_backtest(
    bars: &[PriceBar],
    signals: &[DatedSignal],
    cfg: &BacktestConfig,
) -> Result<BacktestReport, BacktestError> {
    cfg.validate()?;
    if bars.is_empty() {
        return Err(BacktestError::Empty);
    }
    if bars.len() != signals.len() {
        return Err(BacktestError::LengthMismatch(bars.len(), signals.len()));
    }
    let fee = cfg.fee();
    let mut position = Position::Flat;
    let mut trades = Vec::new();
    let mut last = (bars[0].date, Money::ZERO);
    for (i, (bar, sig)) in bars.iter().zip(signals).enumerate() {
        if bar.date != sig.date {
            return Err(BacktestError::Misaligned {
                index: i,
                price_date: bar.date,
                signal_date: sig.date,
            });
        }
        let close = Money::from_dollars(bar.close);
        if close.0 <= 0 {
            return Err(BacktestError::NonPositiveClose(i));
        }
        if let Some((exit, reason)) = check_stops(&position, close, cfg) {
            trades.push(close_position(position, exit, bar.date, reason, fee));
            position = Position::Flat;
        }
        let (next, closed) = apply_signal(position, sig.signal, close, bar.date, cfg);
        trades.extend(closed);
        position = next;
        last = (bar.date, close);
    }
    if cfg.liquidate_at_end && position != Position::Flat {
        trades.push(close_position(position, last.1, last.0, ExitReason::EndOfData, fee));
        position = Position::Flat;
    }
    let total_profit: Money = trades.iter().map(|t| t.pnl).sum();
    let initial_price = Money::from_dollars(bars[0].close);
    Ok(BacktestReport {
        return_percentage: return_percentage(total_profit.to_dollars(), initial_price.to_dollars())?,
        trades,
        total_profit,
        initial_price,
        open_position: position.side(),
    })
}

pub fn write_trade_log_csv<W: Write>(trades: &[Trade], sink: W) -> Result<(), BacktestError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
    w.write_record([
        "open_date",
        "close_date",
        "side",
        "entry_price",
        "exit_price",
        "exit_reason",
        "pnl",
    ])?;
    for t in trades {
        w.serialize(t)?;
    }
    w.flush().map_err(|e| BacktestError::Csv(e.to_string()))
}

pub fn read_trade_log_csv<R: Read>(source: R) -> Result<Vec<Trade>, BacktestError> {
    csv::Reader::from_reader(source)
        .deserialize()
        .map(|r| r.map_err(BacktestError::from))
        .collect()
}
