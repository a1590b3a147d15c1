//! Exchange-rate matrices, trading matrices, exchange options and return
//! matrices.
//!
//! Layout convention: for currencies `i < j`, the upper entry `(i, j)` is the
//! ask (bank sell) quote and the mirrored lower entry `(j, i)` is the bid
//! (bank buy) quote of the same pair. Diagonal entries of a rate matrix are 1.
//!
//! Indices are 0-based in code and 1-based in error messages and files.

use crate::grid::Grid;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const DIAGONAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarketError {
    #[error("day {day}: rate grid must be square with m > 1 (got m = {m})")]
    InvalidDimension { day: usize, m: usize },
    #[error("day {day}: diagonal entry ({i},{i}) must be 1")]
    NonUnitDiagonal { day: usize, i: usize },
    #[error("day {day}: entry ({i},{j}) must be finite and strictly positive")]
    NonPositiveEntry { day: usize, i: usize, j: usize },
    #[error("day {day}: ask ({i},{j}) must strictly exceed mirrored bid ({j},{i})")]
    SpreadViolation { day: usize, i: usize, j: usize },
    #[error("expected day {expected}, got day {found}")]
    DayMismatch { expected: usize, found: usize },
    #[error("currency count mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("next-day return requested for day {day} but no day {} quotes supplied", day + 1)]
    MissingNextDay { day: usize },
    #[error("day {day}: both mirrored returns ({i},{j}) and ({j},{i}) are nonzero")]
    ComplementarityViolation { day: usize, i: usize, j: usize },
    #[error("day {day}: return diagonal ({i},{i}) must be 0")]
    NonZeroDiagonal { day: usize, i: usize },
    #[error("day {day}: return entry ({i},{j}) must be finite and nonnegative")]
    NegativeReturn { day: usize, i: usize, j: usize },
    #[error("rate must be strictly positive, got {0}")]
    NonPositiveRate(f64),
}

/// Day-`k` quote matrix: unit diagonal, asks above, bids below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateMatrix {
    day: usize,
    entries: Grid,
}

impl RateMatrix {
    /// Validates a candidate grid. Rate matrices are only ever checked here.
    pub fn new(day: usize, entries: Grid) -> Result<Self, MarketError> {
        let m = entries.dim();
        if m < 2 {
            return Err(MarketError::InvalidDimension { day, m });
        }
        for i in 0..m {
            if (entries[(i, i)] - 1.0).abs() > DIAGONAL_TOL {
                return Err(MarketError::NonUnitDiagonal { day, i: i + 1 });
            }
        }
        for (i, j) in Grid::off_diagonal(m) {
            let x = entries[(i, j)];
            if !(x.is_finite() && x > 0.0) {
                return Err(MarketError::NonPositiveEntry {
                    day,
                    i: i + 1,
                    j: j + 1,
                });
            }
        }
        for i in 0..m {
            for j in i + 1..m {
                if entries[(i, j)] <= entries[(j, i)] {
                    return Err(MarketError::SpreadViolation {
                        day,
                        i: i + 1,
                        j: j + 1,
                    });
                }
            }
        }
        Ok(Self { day, entries })
    }

    pub fn from_rows(day: usize, rows: &[Vec<f64>]) -> Result<Self, MarketError> {
        let grid = Grid::from_rows(rows).ok_or(MarketError::InvalidDimension {
            day,
            m: rows.len(),
        })?;
        Self::new(day, grid)
    }

    pub fn day(&self) -> usize {
        self.day
    }

    pub fn dim(&self) -> usize {
        self.entries.dim()
    }

    pub fn entries(&self) -> &Grid {
        &self.entries
    }

    /// Ask quote of the unordered pair containing `(i, j)`.
    pub fn ask(&self, i: usize, j: usize) -> f64 {
        self.entries[(i.min(j), i.max(j))]
    }

    /// Bid quote of the unordered pair containing `(i, j)`.
    pub fn bid(&self, i: usize, j: usize) -> f64 {
        self.entries[(i.max(j), i.min(j))]
    }
}

/// Opening and closing quotes for one trading day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyQuotes {
    open: RateMatrix,
    close: RateMatrix,
}

impl DailyQuotes {
    pub fn new(open: RateMatrix, close: RateMatrix) -> Result<Self, MarketError> {
        if open.day != close.day {
            return Err(MarketError::DayMismatch {
                expected: open.day,
                found: close.day,
            });
        }
        if open.dim() != close.dim() {
            return Err(MarketError::DimensionMismatch {
                left: open.dim(),
                right: close.dim(),
            });
        }
        Ok(Self { open, close })
    }

    pub fn day(&self) -> usize {
        self.open.day
    }

    pub fn dim(&self) -> usize {
        self.open.dim()
    }

    pub fn open(&self) -> &RateMatrix {
        &self.open
    }

    pub fn close(&self) -> &RateMatrix {
        &self.close
    }
}

/// Price-relative matrix: zero diagonal, nonnegative, and at most one
/// nonzero entry per mirrored pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnMatrix {
    day: usize,
    entries: Grid,
}

impl ReturnMatrix {
    pub fn new(day: usize, entries: Grid) -> Result<Self, MarketError> {
        let m = entries.dim();
        if m < 2 {
            return Err(MarketError::InvalidDimension { day, m });
        }
        for i in 0..m {
            if entries[(i, i)] != 0.0 {
                return Err(MarketError::NonZeroDiagonal { day, i: i + 1 });
            }
        }
        for (i, j) in Grid::off_diagonal(m) {
            let x = entries[(i, j)];
            if !(x.is_finite() && x >= 0.0) {
                return Err(MarketError::NegativeReturn {
                    day,
                    i: i + 1,
                    j: j + 1,
                });
            }
        }
        for i in 0..m {
            for j in i + 1..m {
                if entries[(i, j)] > 0.0 && entries[(j, i)] > 0.0 {
                    return Err(MarketError::ComplementarityViolation {
                        day,
                        i: i + 1,
                        j: j + 1,
                    });
                }
            }
        }
        Ok(Self { day, entries })
    }

    pub fn from_rows(day: usize, rows: &[Vec<f64>]) -> Result<Self, MarketError> {
        let grid = Grid::from_rows(rows).ok_or(MarketError::InvalidDimension {
            day,
            m: rows.len(),
        })?;
        Self::new(day, grid)
    }

    pub fn zeros(day: usize, m: usize) -> Self {
        Self {
            day,
            entries: Grid::zeros(m),
        }
    }

    pub fn day(&self) -> usize {
        self.day
    }

    pub fn dim(&self) -> usize {
        self.entries.dim()
    }

    pub fn entries(&self) -> &Grid {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// Same entries relabelled to another day.
    pub fn with_day(&self, day: usize) -> Self {
        Self {
            day,
            entries: self.entries.clone(),
        }
    }

    /// Entrywise transpose (`Rev`). Keeps the day label.
    pub fn rev(&self) -> Self {
        Self {
            day: self.day,
            entries: self.entries.transpose(),
        }
    }

    /// Largest entry.
    pub fn max_entry(&self) -> f64 {
        self.entries.as_flat().iter().copied().fold(0.0, f64::max)
    }
}

/// Which day's triangle supplies the upper (ask) part of a trading matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpperAnchor {
    /// `S^(k)_(k+1)`: diagonal and asks from day k, bids from day k+1.
    Today,
    /// `S^(k+1)_(k)`: asks from day k+1, diagonal and bids from day k.
    NextDay,
}

fn check_consecutive(s_k: &RateMatrix, s_k1: &RateMatrix) -> Result<(), MarketError> {
    if s_k1.day != s_k.day + 1 {
        return Err(MarketError::DayMismatch {
            expected: s_k.day + 1,
            found: s_k1.day,
        });
    }
    if s_k.dim() != s_k1.dim() {
        return Err(MarketError::DimensionMismatch {
            left: s_k.dim(),
            right: s_k1.dim(),
        });
    }
    Ok(())
}

/// Splices two consecutive rate matrices into a trading matrix.
pub fn trading_matrix(
    s_k: &RateMatrix,
    s_k1: &RateMatrix,
    anchor: UpperAnchor,
) -> Result<Grid, MarketError> {
    check_consecutive(s_k, s_k1)?;
    let (upper, lower) = match anchor {
        UpperAnchor::Today => (s_k, s_k1),
        UpperAnchor::NextDay => (s_k1, s_k),
    };
    let m = s_k.dim();
    let mut out = Grid::zeros(m);
    for i in 0..m {
        for j in 0..m {
            out[(i, j)] = match i.cmp(&j) {
                std::cmp::Ordering::Less => upper.entries[(i, j)],
                std::cmp::Ordering::Greater => lower.entries[(i, j)],
                std::cmp::Ordering::Equal => 1.0,
            };
        }
    }
    Ok(out)
}

/// The two day-(k+1) exchange options. An entry is the day-(k+1) bid of its
/// pair when the trade is profitable and exactly 0 otherwise. Both mirrored
/// positions of a pair carry the same value; the diagonal is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeOptions {
    /// `ŝ̄`: nonzero when the next-day bid exceeds today's ask.
    pub ask_side: Grid,
    /// `ŝ̲`: nonzero when the next-day ask exceeds today's bid.
    pub bid_side: Grid,
}

pub fn exchange_options(
    s_k: &RateMatrix,
    s_k1: &RateMatrix,
) -> Result<ExchangeOptions, MarketError> {
    check_consecutive(s_k, s_k1)?;
    let m = s_k.dim();
    let mut ask_side = Grid::zeros(m);
    let mut bid_side = Grid::zeros(m);
    for (i, j) in Grid::off_diagonal(m) {
        let next_bid = s_k1.bid(i, j);
        if next_bid > s_k.ask(i, j) {
            ask_side[(i, j)] = next_bid;
        }
        if s_k1.ask(i, j) > s_k.bid(i, j) {
            bid_side[(i, j)] = next_bid;
        }
    }
    Ok(ExchangeOptions { ask_side, bid_side })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReturnHorizon {
    /// Day-k opening over day-k closing quotes.
    SameDay,
    /// Day-k opening over day-(k+1) closing quotes.
    NextDay,
}

/// Builds `R^(k)` (same-day) or `R^(k+1)` (next-day) from quotes.
///
/// Upper `(i, j)`: open ask / close bid, when the open ask is strictly
/// greater. Lower `(j, i)`: open bid / close ask, when the open bid is
/// strictly greater. Everything else is 0. The next-day matrix is labelled
/// day k+1.
pub fn compute_return_matrix(
    quotes_k: &DailyQuotes,
    quotes_k1: Option<&DailyQuotes>,
    horizon: ReturnHorizon,
) -> Result<ReturnMatrix, MarketError> {
    let day = quotes_k.day();
    let (close, out_day) = match horizon {
        ReturnHorizon::SameDay => (&quotes_k.close, day),
        ReturnHorizon::NextDay => {
            let next = quotes_k1.ok_or(MarketError::MissingNextDay { day })?;
            if next.day() != day + 1 {
                return Err(MarketError::DayMismatch {
                    expected: day + 1,
                    found: next.day(),
                });
            }
            if next.dim() != quotes_k.dim() {
                return Err(MarketError::DimensionMismatch {
                    left: quotes_k.dim(),
                    right: next.dim(),
                });
            }
            (&next.close, day + 1)
        }
    };
    let open = &quotes_k.open;
    let m = open.dim();
    let mut entries = Grid::zeros(m);
    for i in 0..m {
        for j in i + 1..m {
            let (open_ask, open_bid) = (open.ask(i, j), open.bid(i, j));
            let (close_ask, close_bid) = (close.ask(i, j), close.bid(i, j));
            let upper = if open_ask > close_bid {
                open_ask / close_bid
            } else {
                0.0
            };
            let lower = if open_bid > close_ask {
                open_bid / close_ask
            } else {
                0.0
            };
            if upper > 0.0 && lower > 0.0 {
                return Err(MarketError::ComplementarityViolation {
                    day: out_day,
                    i: i + 1,
                    j: j + 1,
                });
            }
            entries[(i, j)] = upper;
            entries[(j, i)] = lower;
        }
    }
    Ok(ReturnMatrix {
        day: out_day,
        entries,
    })
}

pub fn reciprocal_rate(rate: f64) -> Result<f64, MarketError> {
    if rate.is_finite() && rate > 0.0 {
        Ok(1.0 / rate)
    } else {
        Err(MarketError::NonPositiveRate(rate))
    }
}
