//! Proportional transaction costs.
//!
//! Rebalancing from the drifted holdings to the target weights costs a
//! fraction `c` of the traded volume, and the cost itself reduces the capital
//! being allocated, so `T` solves `T = c·Σ|F·ψ_next − H − T·ψ_next|` where `H`
//! is the holdings grid. The map is a contraction with constant `c`.

use crate::grid::Grid;
use crate::market::ReturnMatrix;
use crate::portfolio::{boxtimes, diamond, l1_distance, PortfolioError, PortfolioMatrix};
use crate::update::UpdateRule;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostError {
    #[error("cost rate must lie in [0, 1), got {0}")]
    InvalidC(f64),
    #[error("invalid cost parameters: {0}")]
    InvalidParams(String),
    #[error("capital must be strictly positive, got {0}")]
    NonPositiveCapital(f64),
    #[error("fixed point not reached after {iterations} iterations (last step {last_step:e})")]
    NoConvergence { iterations: usize, last_step: f64 },
    #[error("capital identity fails: F = {f_k}, F'·(ψ⋄R) = {implied}")]
    PreconditionViolation { f_k: f64, implied: f64 },
    #[error("cost {t} is not below capital {f_prev}")]
    CostExceedsCapital { t: f64, f_prev: f64 },
    #[error(transparent)]
    Portfolio(#[from] PortfolioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub c: f64,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            c: 0.0,
            fp_tol: 1e-10,
            fp_max_iter: 10_000,
        }
    }
}

impl CostParams {
    pub fn with_rate(c: f64) -> Self {
        Self {
            c,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), CostError> {
        check_c(self.c)?;
        if !(self.fp_tol > 0.0 && self.fp_tol.is_finite()) {
            return Err(CostError::InvalidParams(format!(
                "fp_tol must be positive, got {}",
                self.fp_tol
            )));
        }
        if self.fp_max_iter == 0 {
            return Err(CostError::InvalidParams("fp_max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_c(c: f64) -> Result<(), CostError> {
    if (0.0..1.0).contains(&c) {
        Ok(())
    } else {
        Err(CostError::InvalidC(c))
    }
}

fn check_capital(f: f64) -> Result<(), CostError> {
    if f > 0.0 && f.is_finite() {
        Ok(())
    } else {
        Err(CostError::NonPositiveCapital(f))
    }
}

/// Traded volume `F_k · d(next, realized)` before costs.
pub fn delta(
    next: &PortfolioMatrix,
    realized: &PortfolioMatrix,
    capital_f_k: f64,
) -> Result<f64, CostError> {
    check_capital(capital_f_k)?;
    Ok(capital_f_k * l1_distance(next, realized)?)
}

/// Iterates `T ← c·Σ|a − T·b|` from 0 until successive iterates differ by
/// less than `fp_tol`.
pub fn fixed_point(a: &[f64], b: &[f64], params: &CostParams) -> Result<f64, CostError> {
    params.validate()?;
    let c = params.c;
    let map = |t: f64| c * a.iter().zip(b).map(|(x, y)| (x - t * y).abs()).sum::<f64>();
    let mut t = 0.0;
    let mut last_step = f64::INFINITY;
    for _ in 0..params.fp_max_iter {
        let next = map(t);
        last_step = (next - t).abs();
        if last_step < params.fp_tol {
            return Ok(next);
        }
        t = next;
    }
    Err(CostError::NoConvergence {
        iterations: params.fp_max_iter,
        last_step,
    })
}

/// Cost of moving from the holdings grid (currency amounts) to
/// `F_k · psi_next`.
pub fn solve_rebalancing_cost(
    f_k: f64,
    holdings: &Grid,
    psi_next: &PortfolioMatrix,
    params: &CostParams,
) -> Result<f64, CostError> {
    check_capital(f_k)?;
    let target = psi_next.renormalized();
    if holdings.dim() != target.dim() {
        return Err(PortfolioError::DimensionMismatch {
            left: holdings.dim(),
            right: target.dim(),
        }
        .into());
    }
    let b = target.weights().as_flat();
    let a: Vec<f64> = b
        .iter()
        .zip(holdings.as_flat())
        .map(|(w, h)| f_k * w - h)
        .collect();
    fixed_point(&a, b, params)
}

/// Day-(k+1) cost from day-k capital, weights and returns.
pub fn solve_transaction_cost(
    f_k: f64,
    f_prime_k: f64,
    psi_k: &PortfolioMatrix,
    psi_next: &PortfolioMatrix,
    r_k: &ReturnMatrix,
    params: &CostParams,
) -> Result<f64, CostError> {
    check_capital(f_k)?;
    check_capital(f_prime_k)?;
    let implied = f_prime_k * diamond(psi_k, r_k)?;
    if (f_k - implied).abs() > 1e-9 * f_k.abs().max(implied.abs()) {
        return Err(CostError::PreconditionViolation { f_k, implied });
    }
    let holdings = boxtimes(psi_k.weights(), r_k.entries())?.map(|x| f_prime_k * x);
    solve_rebalancing_cost(f_k, &holdings, psi_next, params)
}

pub fn cost_bounds(delta_val: f64, c: f64) -> Result<(f64, f64), CostError> {
    check_c(c)?;
    Ok((c / (1.0 + c) * delta_val, c / (1.0 - c) * delta_val))
}

/// `c_k = T_k / F_{k−1}`, with `c_1 = 0`.
pub fn cost_ratio(day: usize, t_k: f64, f_prev: f64) -> Result<f64, CostError> {
    if day <= 1 {
        return Ok(0.0);
    }
    check_capital(f_prev)?;
    if t_k >= f_prev {
        return Err(CostError::CostExceedsCapital { t: t_k, f_prev });
    }
    Ok(t_k / f_prev)
}

/// Upper bound on a day's cost ratio when every return on the portfolio's
/// support lies in `[r_floor, 1]`: `(c/(1−c))·(e^{g(1−r)} − 1)` with `g = γ`
/// for IITC and `g = γ/r` for EIITC.
pub fn theoretical_cost_ratio_bound(
    rule: UpdateRule,
    gamma: f64,
    r_floor: f64,
    c: f64,
) -> Result<f64, CostError> {
    check_c(c)?;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(CostError::InvalidParams(format!("gamma must be nonnegative, got {gamma}")));
    }
    if !(r_floor > 0.0 && r_floor < 1.0) {
        return Err(CostError::InvalidParams(format!(
            "r_floor must lie in (0, 1), got {r_floor}"
        )));
    }
    let g = match rule {
        UpdateRule::Iitc => gamma,
        UpdateRule::Eiitc => gamma / r_floor,
    };
    let x = g * (1.0 - r_floor);
    Ok(c / (1.0 - c) * x.exp() * (-(-x).exp_m1()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::portfolio::{realized_portfolio, tests::arb_portfolio, uniform_portfolio};
    use crate::update::apply_update;
    use proptest::prelude::*;

    /// Root of the strictly decreasing `h(T) = c·Σ|a − T·b| − T` by repeated
    /// bracketing scans.
    fn scan_root(a: &[f64], b: &[f64], c: f64) -> f64 {
        let h = |t: f64| c * a.iter().zip(b).map(|(x, y)| (x - t * y).abs()).sum::<f64>() - t;
        let vol: f64 = a.iter().map(|x| x.abs()).sum();
        let (mut lo, mut hi) = (0.0, c / (1.0 - c) * vol + 1e-12);
        while hi - lo > 1e-13 {
            let step = (hi - lo) / 64.0;
            let mut t = lo;
            while t + step <= hi && h(t + step) > 0.0 {
                t += step;
            }
            lo = t;
            hi = (t + step).min(hi);
        }
        0.5 * (lo + hi)
    }

    fn three_currency_shift() -> (PortfolioMatrix, PortfolioMatrix, ReturnMatrix) {
        let mut w = Grid::zeros(3);
        w[(0, 1)] = 0.6;
        w[(0, 2)] = 0.4;
        let psi = PortfolioMatrix::new(1, w).unwrap();
        let mut n = Grid::zeros(3);
        n[(0, 1)] = 0.4;
        n[(0, 2)] = 0.6;
        let next = PortfolioMatrix::new(2, n).unwrap();
        let mut r = Grid::zeros(3);
        r[(0, 1)] = 1.0;
        r[(0, 2)] = 1.0;
        (psi, next, ReturnMatrix::new(1, r).unwrap())
    }

    #[test]
    fn delta_examples() {
        let (psi, next, _) = three_currency_shift();
        assert_eq!(delta(&psi, &psi, 100.0).unwrap(), 0.0);
        assert!((delta(&psi, &next, 125.0).unwrap() - 50.0).abs() < 1e-12);
        assert!(delta(&psi, &next, 0.0).is_err());
    }

    #[test]
    fn no_rebalancing_costs_nothing() {
        let (psi, _, r) = three_currency_shift();
        let realized = realized_portfolio(&psi, &r).unwrap();
        let t = solve_transaction_cost(100.0, 100.0, &psi, &realized, &r, &CostParams::with_rate(0.01))
            .unwrap();
        assert_eq!(t, 0.0);
    }

    #[test]
    fn costless_market() {
        let (psi, next, r) = three_currency_shift();
        let t = solve_transaction_cost(100.0, 100.0, &psi, &next, &r, &CostParams::default()).unwrap();
        assert_eq!(t, 0.0);
    }

    #[test]
    fn full_shift_matches_scan_and_sandwich() {
        let (psi, next, r) = three_currency_shift();
        let params = CostParams::with_rate(0.01);
        let t = solve_transaction_cost(100.0, 100.0, &psi, &next, &r, &params).unwrap();
        let a: Vec<f64> = next
            .weights()
            .as_flat()
            .iter()
            .zip(psi.weights().as_flat())
            .map(|(n, p)| 100.0 * n - 100.0 * p)
            .collect();
        let oracle = scan_root(&a, next.weights().as_flat(), 0.01);
        assert!((t - oracle).abs() < 1e-8, "{t} vs {oracle}");
        let d = delta(&next, &psi, 100.0).unwrap();
        let (lo, hi) = cost_bounds(d, 0.01).unwrap();
        assert!(lo <= t && t <= hi);
    }

    #[test]
    fn capital_identity_checked() {
        let (psi, next, r) = three_currency_shift();
        assert!(matches!(
            solve_transaction_cost(120.0, 100.0, &psi, &next, &r, &CostParams::default()),
            Err(CostError::PreconditionViolation { .. })
        ));
    }

    #[test]
    fn bounds_examples() {
        assert_eq!(cost_bounds(0.0, 0.3).unwrap(), (0.0, 0.0));
        let (lo, hi) = cost_bounds(50.0, 0.01).unwrap();
        assert!((lo - 0.49505).abs() < 1e-5);
        assert!((hi - 0.50505).abs() < 1e-5);
        assert_eq!(cost_bounds(1.0, 1.0).unwrap_err(), CostError::InvalidC(1.0));
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(cost_ratio(2, 0.0, 100.0).unwrap(), 0.0);
        assert!((cost_ratio(2, 0.5, 100.0).unwrap() - 0.005).abs() < 1e-18);
        assert_eq!(cost_ratio(1, 7.0, 1.0).unwrap(), 0.0);
        assert!(matches!(
            cost_ratio(3, 2.0, 1.0),
            Err(CostError::CostExceedsCapital { .. })
        ));
    }

    #[test]
    fn theoretical_bound_examples() {
        for rule in [UpdateRule::Iitc, UpdateRule::Eiitc] {
            assert_eq!(theoretical_cost_ratio_bound(rule, 0.0, 0.5, 0.01).unwrap(), 0.0);
        }
        let b = theoretical_cost_ratio_bound(UpdateRule::Iitc, 0.1, 0.5, 0.01).unwrap();
        let direct = (0.01 / 0.99) * 0.05f64.exp() * (1.0 - (-0.05f64).exp());
        assert!((b - direct).abs() < 1e-18);
        assert!((b - 5.179e-4).abs() < 1e-6);
        let e = theoretical_cost_ratio_bound(UpdateRule::Eiitc, 0.1, 0.5, 0.01).unwrap();
        assert!(e >= b);
        assert!(theoretical_cost_ratio_bound(UpdateRule::Iitc, 0.1, 1.0, 0.01).is_err());
    }

    #[test]
    fn non_convergence_reported() {
        let params = CostParams {
            c: 0.9,
            fp_tol: 1e-15,
            fp_max_iter: 3,
        };
        assert!(matches!(
            fixed_point(&[1.0, 0.0], &[1.0, 0.0], &params),
            Err(CostError::NoConvergence { iterations: 3, .. })
        ));
    }

    fn arb_solve() -> impl Strategy<Value = (PortfolioMatrix, PortfolioMatrix, f64, f64)> {
        (2usize..6).prop_flat_map(|m| (arb_portfolio(m), arb_portfolio(m), 0.1f64..1000.0, 0.0f64..0.05))
    }

    proptest! {
        #[test]
        fn converged_cost_lies_in_sandwich((realized, next, f, c) in arb_solve()) {
            let holdings = realized.weights().map(|w| f * w);
            let t = solve_rebalancing_cost(f, &holdings, &next, &CostParams::with_rate(c)).unwrap();
            let d = delta(&next, &realized, f).unwrap();
            let (lo, hi) = cost_bounds(d, c).unwrap();
            prop_assert!(lo - 1e-9 <= t && t <= hi + 1e-9, "{} not in [{}, {}]", t, lo, hi);
        }

        #[test]
        fn iteration_contracts_and_converges((realized, next, f, c) in (2usize..6).prop_flat_map(|m| (arb_portfolio(m), arb_portfolio(m), 0.1f64..10.0, 0.0f64..0.5))) {
            let a: Vec<f64> = next.weights().as_flat().iter().zip(realized.weights().as_flat()).map(|(n, p)| f * (n - p)).collect();
            let b = next.weights().as_flat();
            let map = |t: f64| c * a.iter().zip(b).map(|(x, y)| (x - t * y).abs()).sum::<f64>();
            let (mut prev, mut cur) = (0.0, map(0.0));
            for _ in 0..20 {
                let nxt = map(cur);
                prop_assert!((nxt - cur).abs() <= c * (cur - prev).abs() + 1e-12);
                prev = cur;
                cur = nxt;
            }
            let t = fixed_point(&a, b, &CostParams::with_rate(c)).unwrap();
            prop_assert!((t - scan_root(&a, b, c)).abs() < 1e-8);
        }

        #[test]
        fn iitc_cost_ratio_within_theoretical_bound(
            psi in (2usize..5).prop_flat_map(arb_portfolio),
            raw in prop::collection::vec(0.0f64..1.0, 16),
            gamma in 0.0f64..2.0,
            r_floor in 0.05f64..0.95,
            c in 0.0f64..0.05,
        ) {
            // returns on the realized support lie in [r_floor, 1]
            let m = psi.dim();
            let mut holdings_psi = Grid::zeros(m);
            let mut r_pred = Grid::zeros(m);
            for (k, (i, j)) in Grid::off_diagonal(m).filter(|&(i, j)| i < j).enumerate() {
                holdings_psi[(i, j)] = psi.get(i, j) + psi.get(j, i);
                r_pred[(i, j)] = r_floor + (1.0 - r_floor) * raw[k % raw.len()];
            }
            let realized = PortfolioMatrix::normalized(1, holdings_psi).unwrap();
            let r_pred = ReturnMatrix::new(1, r_pred).unwrap();
            let next = apply_update(UpdateRule::Iitc, &realized, &r_pred, gamma).unwrap();
            let t = solve_rebalancing_cost(1.0, realized.weights(), &next, &CostParams::with_rate(c)).unwrap();
            let bound = theoretical_cost_ratio_bound(UpdateRule::Iitc, gamma, r_floor, c).unwrap();
            prop_assert!(t <= bound + 1e-9, "{} > {}", t, bound);
        }
    }

    #[test]
    fn uniform_target_from_uniform_holdings_is_free() {
        let u = uniform_portfolio(1, 4).unwrap();
        let t = solve_rebalancing_cost(3.0, &u.weights().map(|w| 3.0 * w), &u, &CostParams::with_rate(0.2))
            .unwrap();
        assert_eq!(t, 0.0);
    }
}
