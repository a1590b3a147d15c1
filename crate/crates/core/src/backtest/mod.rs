//! Day-by-day on-line portfolio loop.
//!
//! Day `k`: the portfolio `ψ_k` earns `ψ_k ⋄ R_k`, drifts to the realized
//! portfolio, the predictor forecasts `R′_{k+1}` from data up to day `k`, the
//! update rule produces `ψ_{k+1}`, and the rebalancing cost `T_{k+1}` is
//! charged against the capital before day `k+1` opens.
//!
//! A day on which the portfolio earns nothing is parked: capital and weights
//! carry over unchanged.

pub mod metrics;
pub mod universality;

use crate::cost::{cost_ratio, solve_rebalancing_cost, solve_transaction_cost, CostError, CostParams};
use crate::market::{compute_return_matrix, DailyQuotes, MarketError, ReturnHorizon, ReturnMatrix};
use crate::portfolio::{diamond, realized_portfolio, uniform_portfolio, PortfolioError, PortfolioMatrix};
use crate::predictor::{
    linear_prediction, order_of, predict_next, segment_cross_rate, OrderLabel, PredictError,
    PredictorConfig,
};
use crate::update::{apply_update, mix_uniform, UpdateError, UpdateRule};
use serde::{Deserialize, Serialize};
use std::ops::RangeInclusive;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Portfolio(#[from] PortfolioError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Update(#[from] UpdateError),
    #[error(transparent)]
    Predict(#[from] PredictError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BacktestError {
    #[error("need at least {needed} days, got {got}")]
    TooFewDays { needed: usize, got: usize },
    #[error("invalid backtest configuration: {0}")]
    InvalidConfig(String),
    #[error("day {day}: {source}")]
    AtDay {
        day: usize,
        #[source]
        source: StepError,
    },
    #[error("empty ledger")]
    EmptyLedger,
    #[error("day {day}: cost ratio {c} is not below 1")]
    CostRatioAtLeastOne { day: usize, c: f64 },
    #[error("day {day}: pair return must be positive for the benchmark")]
    NonPositivePairReturn { day: usize },
    #[error("inputs fall outside the bound's hypotheses: {0}")]
    NormalizationViolated(String),
    #[error("invalid block unit l = {l} for horizon N = {n}")]
    InvalidBlockUnit { l: usize, n: usize },
}

fn at_day<E: Into<StepError>>(day: usize) -> impl FnOnce(E) -> BacktestError {
    move |e| BacktestError::AtDay {
        day,
        source: e.into(),
    }
}

/// Per-day trade-off parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GammaSchedule {
    Constant(f64),
    /// `gamma0 / i` on the i-th block, where block `i` spans `i·block_len` days.
    BlockDecaying { gamma0: f64, block_len: usize },
}

impl GammaSchedule {
    pub fn validate(&self) -> Result<(), BacktestError> {
        let (g, l) = match *self {
            GammaSchedule::Constant(g) => (g, 1),
            GammaSchedule::BlockDecaying { gamma0, block_len } => (gamma0, block_len),
        };
        if !(g.is_finite() && g >= 0.0) {
            return Err(BacktestError::InvalidConfig(format!("gamma must be >= 0, got {g}")));
        }
        if l == 0 {
            return Err(BacktestError::InvalidConfig("block length must be >= 1".into()));
        }
        Ok(())
    }

    pub fn gamma_at(&self, day: usize) -> f64 {
        match *self {
            GammaSchedule::Constant(g) => g,
            GammaSchedule::BlockDecaying { gamma0, block_len } => gamma0 / block_index(day, block_len) as f64,
        }
    }
}

/// Smallest `i ≥ 1` with `i(i+1)l/2 ≥ day`.
fn block_index(day: usize, l: usize) -> usize {
    let mut i = 1;
    while i * (i + 1) * l / 2 < day {
        i += 1;
    }
    i
}

/// Blocks `Γ_1..Γ_n` covering `1..=n_days`; block `i < n` has `i·l` days and
/// the last block takes the remainder.
pub fn gamma_partition(n_days: usize, l: usize) -> Result<Vec<RangeInclusive<usize>>, BacktestError> {
    if !(l > 1 && l < n_days) {
        return Err(BacktestError::InvalidBlockUnit { l, n: n_days });
    }
    let count = block_index(n_days, l);
    Ok((1..=count)
        .map(|i| {
            let start = i * (i - 1) * l / 2 + 1;
            let end = if i == count { n_days } else { i * (i + 1) * l / 2 };
            start..=end
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Predictor {
    CrossRate(PredictorConfig),
    /// Nonnegative weights on lags 1, 2, ...
    Linear { weights: Vec<f64> },
}

impl Predictor {
    pub fn lag1() -> Self {
        Predictor::Linear { weights: vec![1.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub predictor: Predictor,
    pub rule: UpdateRule,
    pub gamma: GammaSchedule,
    pub support_floor: f64,
    pub costs: CostParams,
    pub f0: f64,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            predictor: Predictor::CrossRate(PredictorConfig::default()),
            rule: UpdateRule::Iitc,
            gamma: GammaSchedule::Constant(0.1),
            support_floor: 0.0,
            costs: CostParams::default(),
            f0: 1.0,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<(), BacktestError> {
        let invalid = |e: String| BacktestError::InvalidConfig(e);
        if !(self.f0 > 0.0 && self.f0.is_finite()) {
            return Err(invalid(format!("f0 must be positive, got {}", self.f0)));
        }
        if !(0.0..1.0).contains(&self.support_floor) {
            return Err(invalid(format!(
                "support floor must lie in [0, 1), got {}",
                self.support_floor
            )));
        }
        self.gamma.validate()?;
        self.costs.validate().map_err(|e| invalid(e.to_string()))?;
        match &self.predictor {
            Predictor::CrossRate(p) => p.segment.validate().map_err(|e| invalid(e.to_string()))?,
            Predictor::Linear { weights } => {
                if weights.is_empty() || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || weights[0] <= 0.0 {
                    return Err(invalid("linear weights must be nonnegative with a positive lag-1 weight".into()));
                }
            }
        }
        Ok(())
    }

    /// Segment length used for effectiveness statistics.
    pub fn segment_len(&self) -> usize {
        match &self.predictor {
            Predictor::CrossRate(p) => p.segment.len,
            Predictor::Linear { .. } => crate::predictor::SegmentConfig::default().len,
        }
    }
}

/// Everything known about day `k` once its update has been made.
#[derive(Debug, Clone, PartialEq)]
pub struct DayRecord {
    pub day: usize,
    /// Capital at the close of day k.
    pub f: f64,
    /// Capital invested at the open of day k, after paying `t`.
    pub f_prime: f64,
    /// Rebalancing cost charged at the open of day k.
    pub t: f64,
    /// `t` relative to the previous close.
    pub c: f64,
    pub diamond: f64,
    pub parked: bool,
    pub psi: PortfolioMatrix,
    pub psi_realized: PortfolioMatrix,
    /// Portfolio chosen for day k+1.
    pub psi_next: PortfolioMatrix,
    pub r_actual: ReturnMatrix,
    /// Forecast of this day's returns made on day k−1.
    pub r_pred: Option<ReturnMatrix>,
    pub order_actual: OrderLabel,
    pub order_pred: Option<OrderLabel>,
    /// The forecast for this day was a transposed past matrix.
    pub pred_reversed: bool,
    pub used_prior_segment: bool,
    /// Trade-off parameter of the update made at the end of this day.
    pub gamma: f64,
}

impl DayRecord {
    pub fn growth_factor(&self) -> f64 {
        if self.parked {
            1.0
        } else {
            self.diamond
        }
    }

    pub fn dim(&self) -> usize {
        self.psi.dim()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BacktestLedger {
    pub records: Vec<DayRecord>,
}

impl BacktestLedger {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn f0(&self) -> Option<f64> {
        self.records.first().map(|r| r.f_prime + r.t)
    }
}

struct ForecastMeta {
    r_pred: ReturnMatrix,
    order: OrderLabel,
    reversed: bool,
    used_prior_segment: bool,
}

/// Runs the loop over same-day returns built from each day's quotes.
pub fn run_backtest(quotes: &[DailyQuotes], cfg: &BacktestConfig) -> Result<BacktestLedger, BacktestError> {
    if quotes.len() < 2 {
        return Err(BacktestError::TooFewDays {
            needed: 2,
            got: quotes.len(),
        });
    }
    let returns = quotes
        .iter()
        .enumerate()
        .map(|(idx, q)| {
            compute_return_matrix(q, None, ReturnHorizon::SameDay)
                .map(|r| r.with_day(idx + 1))
                .map_err(at_day(idx + 1))
        })
        .collect::<Result<Vec<_>, _>>()?;
    run_backtest_on_returns(&returns, cfg)
}

/// Runs the loop over a prepared return sequence; position `k−1` is day `k`.
pub fn run_backtest_on_returns(
    returns: &[ReturnMatrix],
    cfg: &BacktestConfig,
) -> Result<BacktestLedger, BacktestError> {
    cfg.validate()?;
    if returns.is_empty() {
        return Err(BacktestError::TooFewDays { needed: 1, got: 0 });
    }
    let m = returns[0].dim();
    if let Some(bad) = returns.iter().position(|r| r.dim() != m) {
        return Err(at_day(bad + 1)(PortfolioError::DimensionMismatch {
            left: m,
            right: returns[bad].dim(),
        }));
    }
    let n_days = returns.len();
    let mut psi = uniform_portfolio(1, m).map_err(at_day(1))?;
    let mut f_prime = cfg.f0;
    let mut t = 0.0;
    let mut c = 0.0;
    let mut orders: Vec<OrderLabel> = Vec::with_capacity(n_days);
    let mut series: Vec<f64> = Vec::new();
    let mut pending: Option<ForecastMeta> = None;
    let mut records = Vec::with_capacity(n_days);

    for k in 1..=n_days {
        let r = &returns[k - 1];
        orders.push(order_of(r));
        let d = diamond(&psi, r).map_err(at_day(k))?;
        let parked = d <= 0.0;
        let f_k = if parked { f_prime } else { f_prime * d };
        let realized = if parked {
            psi.with_day(k)
        } else {
            realized_portfolio(&psi, r).map_err(at_day(k))?
        };

        let forecast = match &cfg.predictor {
            Predictor::CrossRate(pc) => {
                if k % pc.segment.len == 0 {
                    let w = segment_cross_rate(&orders, k / pc.segment.len, &pc.segment, pc.adjusted)
                        .map_err(at_day(k))?;
                    series.push(w);
                }
                let p = predict_next(pc, &series, &returns[..k], &orders, k).map_err(at_day(k))?;
                ForecastMeta {
                    r_pred: p.r_pred,
                    order: p.order,
                    reversed: p.reversed,
                    used_prior_segment: p.used_prior_segment,
                }
            }
            Predictor::Linear { weights } => {
                let r_pred = linear_prediction(weights, &returns[..k], k).map_err(at_day(k))?;
                ForecastMeta {
                    order: order_of(&r_pred),
                    r_pred,
                    reversed: false,
                    used_prior_segment: false,
                }
            }
        };

        let gamma = cfg.gamma.gamma_at(k + 1);
        let updated = match apply_update(cfg.rule, &realized, &forecast.r_pred, gamma) {
            Ok(p) => p,
            // the forecast gives the realized portfolio nothing to tilt toward
            Err(UpdateError::ZeroDiamond) => realized.clone(),
            Err(e) => return Err(at_day(k)(e)),
        };
        let psi_next = mix_uniform(&updated, cfg.support_floor)
            .map_err(at_day(k))?
            .with_day(k + 1);

        let t_next = if parked {
            let holdings = psi.weights().map(|w| f_k * w);
            solve_rebalancing_cost(f_k, &holdings, &psi_next, &cfg.costs)
        } else {
            solve_transaction_cost(f_k, f_prime, &psi, &psi_next, r, &cfg.costs)
        }
        .map_err(at_day(k))?;
        let c_next = cost_ratio(k + 1, t_next, f_k).map_err(at_day(k + 1))?;

        let prev = pending.take();
        records.push(DayRecord {
            day: k,
            f: f_k,
            f_prime,
            t,
            c,
            diamond: d,
            parked,
            psi: psi.clone(),
            psi_realized: realized,
            psi_next: psi_next.clone(),
            r_actual: r.with_day(k),
            order_actual: orders[k - 1],
            order_pred: prev.as_ref().map(|p| p.order),
            pred_reversed: prev.as_ref().is_some_and(|p| p.reversed),
            used_prior_segment: prev.as_ref().is_some_and(|p| p.used_prior_segment),
            r_pred: prev.map(|p| p.r_pred),
            gamma,
        });

        f_prime = f_k - t_next;
        t = t_next;
        c = c_next;
        psi = psi_next;
        pending = Some(forecast);
    }
    Ok(BacktestLedger { records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::predictor::{MpcrMethod, MpoMethod, SegmentConfig};
    use proptest::prelude::*;

    fn constant_pair(n: usize, value: f64) -> Vec<ReturnMatrix> {
        (1..=n)
            .map(|d| ReturnMatrix::from_rows(d, &[vec![0.0, value], vec![0.0, 0.0]]).unwrap())
            .collect()
    }

    #[test]
    fn partition_example() {
        let p = gamma_partition(10, 2).unwrap();
        assert_eq!(p, vec![1..=2, 3..=6, 7..=10]);
        assert!(gamma_partition(10, 1).is_err());
        assert!(gamma_partition(10, 10).is_err());
    }

    #[test]
    fn partition_count_matches_closed_form() {
        for n in 3..400 {
            for l in 2..n.min(20) {
                let expected = (((1.0 + 8.0 * n as f64 / l as f64).sqrt() - 1.0) / 2.0).ceil() as usize;
                assert_eq!(gamma_partition(n, l).unwrap().len(), expected, "N={n} l={l}");
            }
        }
    }

    #[test]
    fn block_schedule_decays_by_block() {
        let s = GammaSchedule::BlockDecaying { gamma0: 1.0, block_len: 2 };
        assert_eq!(s.gamma_at(1), 1.0);
        assert_eq!(s.gamma_at(2), 1.0);
        assert_eq!(s.gamma_at(3), 0.5);
        assert_eq!(s.gamma_at(6), 0.5);
        assert!((s.gamma_at(7) - 1.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn geometric_growth_on_single_pair() {
        let n = 12;
        for rule in [UpdateRule::Iitc, UpdateRule::Eiitc] {
            let cfg = BacktestConfig {
                rule,
                gamma: GammaSchedule::Constant(0.5),
                f0: 2.0,
                ..BacktestConfig::default()
            };
            let ledger = run_backtest_on_returns(&constant_pair(n, 1.1), &cfg).unwrap();
            let last = ledger.records.last().unwrap();
            // the uniform start holds half its capital in the direction that earns nothing
            let expected = 2.0 * 0.5 * 1.1f64.powi(n as i32);
            assert!((last.f - expected).abs() < 1e-12 * expected, "{rule}: {} vs {}", last.f, expected);
        }
    }

    #[test]
    fn geometric_growth_from_concentrated_start() {
        // once the weight sits on the live pair, growth is exactly 1.1 per day
        let cfg = BacktestConfig {
            gamma: GammaSchedule::Constant(0.0),
            ..BacktestConfig::default()
        };
        let ledger = run_backtest_on_returns(&constant_pair(8, 1.1), &cfg).unwrap();
        for rec in &ledger.records[1..] {
            assert!((rec.diamond - 1.1).abs() < 1e-15);
        }
    }

    #[test]
    fn passive_strategy_pays_nothing() {
        let returns: Vec<_> = [1.2, 0.9, 1.05, 1.3]
            .iter()
            .enumerate()
            .map(|(d, &v)| {
                ReturnMatrix::from_rows(
                    d + 1,
                    &[vec![0.0, v, 1.0], vec![0.0, 0.0, 0.8 + v / 10.0], vec![0.0, 0.0, 0.0]],
                )
                .unwrap()
            })
            .collect();
        let cfg = BacktestConfig {
            gamma: GammaSchedule::Constant(0.0),
            costs: CostParams::with_rate(0.0),
            ..BacktestConfig::default()
        };
        let ledger = run_backtest_on_returns(&returns, &cfg).unwrap();
        let mut capital = 1.0;
        for rec in &ledger.records {
            assert_eq!(rec.t, 0.0);
            assert_eq!(rec.psi_next.weights(), rec.psi_realized.weights());
            capital *= rec.diamond;
        }
        assert!((ledger.records.last().unwrap().f - capital).abs() < 1e-12);
    }

    #[test]
    fn zero_return_day_is_parked() {
        let mut returns = constant_pair(4, 1.1);
        returns[2] = ReturnMatrix::zeros(3, 2);
        let cfg = BacktestConfig {
            costs: CostParams::with_rate(0.01),
            ..BacktestConfig::default()
        };
        let ledger = run_backtest_on_returns(&returns, &cfg).unwrap();
        let rec = &ledger.records[2];
        assert!(rec.parked);
        assert_eq!(rec.growth_factor(), 1.0);
        assert_eq!(rec.f, rec.f_prime);
        assert_eq!(rec.psi_realized.weights(), rec.psi.weights());
    }

    #[test]
    fn first_day_conventions() {
        let ledger = run_backtest_on_returns(&constant_pair(3, 1.1), &BacktestConfig::default()).unwrap();
        let first = &ledger.records[0];
        assert_eq!(first.c, 0.0);
        assert_eq!(first.t, 0.0);
        assert!(first.r_pred.is_none() && first.order_pred.is_none());
        assert_eq!(ledger.f0(), Some(1.0));
        assert!(ledger.records[1].r_pred.is_some());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            run_backtest_on_returns(&[], &BacktestConfig::default()),
            Err(BacktestError::TooFewDays { .. })
        ));
        let cfg = BacktestConfig {
            f0: 0.0,
            ..BacktestConfig::default()
        };
        assert!(matches!(
            run_backtest_on_returns(&constant_pair(2, 1.1), &cfg),
            Err(BacktestError::InvalidConfig(_))
        ));
    }

    fn arb_returns() -> impl Strategy<Value = Vec<ReturnMatrix>> {
        (2usize..5, 2usize..40).prop_flat_map(|(m, n)| {
            prop::collection::vec(prop::collection::vec((any::<bool>(), 0.0f64..2.0), m * (m - 1) / 2), n)
                .prop_map(move |days| {
                    days.into_iter()
                        .enumerate()
                        .map(|(d, pairs)| {
                            let mut g = Grid::zeros(m);
                            let mut it = pairs.into_iter();
                            for i in 0..m {
                                for j in i + 1..m {
                                    let (up, v) = it.next().unwrap();
                                    if up {
                                        g[(i, j)] = v;
                                    } else {
                                        g[(j, i)] = v;
                                    }
                                }
                            }
                            ReturnMatrix::new(d + 1, g).unwrap()
                        })
                        .collect()
                })
        })
    }

    fn arb_config() -> impl Strategy<Value = BacktestConfig> {
        (any::<bool>(), 0.0f64..1.0, 0.0f64..0.05, any::<bool>(), any::<bool>(), any::<bool>(), 1usize..6).prop_map(
            |(eiitc, gamma, c, mpcr2, mpo2, adjusted, len)| BacktestConfig {
                predictor: Predictor::CrossRate(PredictorConfig {
                    mpcr: if mpcr2 { MpcrMethod::Mpcr2 } else { MpcrMethod::Mpcr1 },
                    mpo: if mpo2 { MpoMethod::Mpo2 } else { MpoMethod::Mpo1 },
                    adjusted,
                    segment: SegmentConfig { len, ..SegmentConfig::default() },
                }),
                rule: if eiitc { UpdateRule::Eiitc } else { UpdateRule::Iitc },
                gamma: GammaSchedule::Constant(gamma),
                costs: CostParams::with_rate(c),
                ..BacktestConfig::default()
            },
        )
    }

    proptest! {
        #[test]
        fn capital_identities_hold(returns in arb_returns(), cfg in arb_config()) {
            let ledger = run_backtest_on_returns(&returns, &cfg).unwrap();
            let mut f_prev = cfg.f0;
            for rec in &ledger.records {
                prop_assert!((rec.f_prime - (f_prev - rec.t)).abs() <= 1e-9 * f_prev);
                if !rec.parked {
                    prop_assert!((rec.f - rec.f_prime * rec.diamond).abs() <= 1e-9 * rec.f.max(1e-300));
                }
                f_prev = rec.f;
            }
            prop_assert_eq!(ledger.records[0].c, 0.0);
        }

        #[test]
        fn future_days_do_not_change_the_past(returns in arb_returns(), cfg in arb_config(), cut in 0usize..40, scale in 0.1f64..3.0) {
            let n = returns.len();
            let k = cut % (n - 1) + 1;
            let base = run_backtest_on_returns(&returns, &cfg).unwrap();
            let mut altered = returns.clone();
            let g = altered[k].entries().map(|x| x * scale);
            altered[k] = ReturnMatrix::new(k + 1, g.transpose()).unwrap();
            let other = run_backtest_on_returns(&altered, &cfg).unwrap();
            prop_assert_eq!(&base.records[..k], &other.records[..k]);
        }
    }
}
