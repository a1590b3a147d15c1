//! Lower bound on the growth-rate gap between the on-line strategy and
//! holding any single currency pair.
//!
//! When every nonzero daily return lies in `[r, 1]` with a daily maximum of
//! 1, and forecasts are convex combinations of past return matrices, the
//! cost-adjusted growth rate satisfies
//!
//! ```text
//! R_N − R*_N ≥ (1/N)·ln(ψ_1(i,j) / ψ_{N+1}(i,j)) + (1/N)·Σ ln(1 − c_k) + (1/N)·Σ γ_k·(r − 1)
//! ```
//!
//! for IITC, with `r − 1/r` in place of `r − 1` for EIITC.

use super::metrics::{growth_rate_with_cost, mean_log_cost_factor, single_pair_benchmark};
use super::{BacktestConfig, BacktestError, BacktestLedger, Predictor};
use crate::market::ReturnMatrix;
use crate::update::UpdateRule;

const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport {
    pub lhs_gap: f64,
    pub rhs_bound: f64,
    pub holds: bool,
}

/// Checks that each day's nonzero entries lie in `[r_floor, 1]` and that the
/// largest equals 1.
pub fn check_normalized(returns: &[ReturnMatrix], r_floor: f64) -> Result<(), BacktestError> {
    for (idx, r) in returns.iter().enumerate() {
        let day = idx + 1;
        let max = r.max_entry();
        if (max - 1.0).abs() > NORMALIZATION_TOL {
            return Err(BacktestError::NormalizationViolated(format!(
                "day {day}: largest return is {max}, expected 1"
            )));
        }
        if let Some(&low) = r
            .entries()
            .as_flat()
            .iter()
            .find(|&&x| x > 0.0 && x < r_floor - NORMALIZATION_TOL)
        {
            return Err(BacktestError::NormalizationViolated(format!(
                "day {day}: return {low} below floor {r_floor}"
            )));
        }
    }
    Ok(())
}

/// Evaluates both sides of the bound for pair `(i, j)` (0-based).
///
/// Refuses, unless `force` is set, runs whose forecasts transpose past
/// matrices or that mix uniform weight into the updates.
pub fn universality_gap(
    ledger: &BacktestLedger,
    cfg: &BacktestConfig,
    pair: (usize, usize),
    r_floor: f64,
    force: bool,
) -> Result<GapReport, BacktestError> {
    let first = ledger.records.first().ok_or(BacktestError::EmptyLedger)?;
    let last = ledger.records.last().ok_or(BacktestError::EmptyLedger)?;
    let (i, j) = pair;
    if i == j || i >= first.dim() || j >= first.dim() {
        return Err(BacktestError::InvalidConfig(format!(
            "benchmark pair ({}, {}) is not an off-diagonal position",
            i + 1,
            j + 1
        )));
    }
    if !(r_floor > 0.0 && r_floor < 1.0) {
        return Err(BacktestError::InvalidConfig(format!("r_floor must lie in (0, 1), got {r_floor}")));
    }
    if !force {
        if cfg.support_floor > 0.0 {
            return Err(BacktestError::NormalizationViolated(
                "updates mix in uniform weight".into(),
            ));
        }
        let transposed = matches!(cfg.predictor, Predictor::CrossRate(_))
            && ledger.records.iter().any(|r| r.pred_reversed);
        if transposed {
            return Err(BacktestError::NormalizationViolated(
                "forecasts include transposed return matrices".into(),
            ));
        }
    }
    let returns: Vec<ReturnMatrix> = ledger.records.iter().map(|r| r.r_actual.clone()).collect();
    check_normalized(&returns, r_floor)?;
    for (idx, r) in returns.iter().enumerate() {
        if r.get(i, j) + r.get(j, i) < r_floor - NORMALIZATION_TOL {
            return Err(BacktestError::NormalizationViolated(format!(
                "day {}: benchmark pair return below floor",
                idx + 1
            )));
        }
    }

    let n = ledger.len() as f64;
    let lhs_gap = growth_rate_with_cost(ledger)? - single_pair_benchmark(&returns, i, j)?;
    let start = first.psi.get(i, j);
    let end = last.psi_next.get(i, j);
    let per_day = match cfg.rule {
        UpdateRule::Iitc => r_floor - 1.0,
        UpdateRule::Eiitc => r_floor - 1.0 / r_floor,
    };
    let gamma_sum: f64 = ledger.records.iter().map(|r| r.gamma).sum();
    let rhs_bound = (start / end).ln() / n + mean_log_cost_factor(ledger)? + gamma_sum * per_day / n;
    Ok(GapReport {
        lhs_gap,
        rhs_bound,
        holds: lhs_gap >= rhs_bound - 1e-9,
    })
}
