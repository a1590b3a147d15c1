//! Growth rates, benchmark and prediction-quality summaries of a ledger.

use super::{BacktestError, BacktestLedger};
use crate::market::ReturnMatrix;
use crate::predictor::{effectiveness_ratio, is_effective, success_rate, OrderLabel};

/// `I_N`: product of daily growth factors.
pub fn final_return_no_cost(ledger: &BacktestLedger) -> Result<f64, BacktestError> {
    nonempty(ledger)?;
    Ok(ledger.records.iter().map(|r| r.growth_factor()).product())
}

/// `LI_N`: mean log growth factor.
pub fn growth_rate_no_cost(ledger: &BacktestLedger) -> Result<f64, BacktestError> {
    nonempty(ledger)?;
    let n = ledger.len() as f64;
    Ok(ledger.records.iter().map(|r| r.growth_factor().ln()).sum::<f64>() / n)
}

/// Mean of `ln(1 − c_k)`.
pub fn mean_log_cost_factor(ledger: &BacktestLedger) -> Result<f64, BacktestError> {
    nonempty(ledger)?;
    let mut total = 0.0;
    for r in &ledger.records {
        if r.c >= 1.0 {
            return Err(BacktestError::CostRatioAtLeastOne { day: r.day, c: r.c });
        }
        total += (-r.c).ln_1p();
    }
    Ok(total / ledger.len() as f64)
}

/// `F_N / F_0`: product of `(ψ ⋄ R)(1 − c_k)`.
pub fn final_return_with_cost(ledger: &BacktestLedger) -> Result<f64, BacktestError> {
    nonempty(ledger)?;
    let mut product = 1.0;
    for r in &ledger.records {
        if r.c >= 1.0 {
            return Err(BacktestError::CostRatioAtLeastOne { day: r.day, c: r.c });
        }
        product *= r.growth_factor() * (1.0 - r.c);
    }
    Ok(product)
}

/// `R_N = LI_N + mean ln(1 − c_k)`.
pub fn growth_rate_with_cost(ledger: &BacktestLedger) -> Result<f64, BacktestError> {
    Ok(growth_rate_no_cost(ledger)? + mean_log_cost_factor(ledger)?)
}

/// Mean log growth of holding the single ordered pair `(i, j)` (0-based),
/// earning both mirrored entries.
pub fn single_pair_benchmark(returns: &[ReturnMatrix], i: usize, j: usize) -> Result<f64, BacktestError> {
    if returns.is_empty() {
        return Err(BacktestError::EmptyLedger);
    }
    let mut total = 0.0;
    for (idx, r) in returns.iter().enumerate() {
        let x = r.get(i, j) + r.get(j, i);
        if x <= 0.0 {
            return Err(BacktestError::NonPositivePairReturn { day: idx + 1 });
        }
        total += x.ln();
    }
    Ok(total / returns.len() as f64)
}

/// Success rates of whole segments `2..`, where every day carries a forecast
/// built from a completed segment.
pub fn segment_success_rates(ledger: &BacktestLedger, len: usize) -> Vec<f64> {
    let full = ledger.len() / len;
    (2..=full)
        .map(|s| {
            let days = &ledger.records[(s - 1) * len..s * len];
            let predicted: Vec<OrderLabel> = days
                .iter()
                .map(|r| r.order_pred.unwrap_or(OrderLabel::Undetermined))
                .collect();
            let actual: Vec<OrderLabel> = days.iter().map(|r| r.order_actual).collect();
            success_rate(&predicted, &actual).expect("equal nonempty slices")
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub days: usize,
    pub final_capital: f64,
    pub i_n: f64,
    pub li_n: f64,
    pub f_n: f64,
    pub r_n: f64,
    /// Fraction of effective segments; `None` with fewer than two segments.
    pub eta: Option<f64>,
    pub theta: Vec<f64>,
}

pub fn summarize(ledger: &BacktestLedger, segment_len: usize) -> Result<Summary, BacktestError> {
    let theta = segment_success_rates(ledger, segment_len);
    let flags: Vec<bool> = theta.iter().map(|&t| is_effective(t)).collect();
    Ok(Summary {
        days: ledger.len(),
        final_capital: ledger.records.last().ok_or(BacktestError::EmptyLedger)?.f,
        i_n: final_return_no_cost(ledger)?,
        li_n: growth_rate_no_cost(ledger)?,
        f_n: final_return_with_cost(ledger)?,
        r_n: growth_rate_with_cost(ledger)?,
        eta: effectiveness_ratio(&flags).ok(),
        theta,
    })
}

fn nonempty(ledger: &BacktestLedger) -> Result<(), BacktestError> {
    if ledger.is_empty() {
        Err(BacktestError::EmptyLedger)
    } else {
        Ok(())
    }
}
