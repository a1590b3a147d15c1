//! Order-based return prediction.
//!
//! Each day's return matrix gets an order label saying whether its unique
//! maximum sits above or below the diagonal. Days are grouped into segments
//! of `L`; a segment's cross rate is the share of days whose order differs
//! from the day before. The next segment's cross rate is forecast (MPCR),
//! turned into a next-day order forecast (MPO), and finally into a predicted
//! return matrix.
//!
//! Day indices in this module are 1-based: `orders[0]` is day 1.

use crate::grid::Grid;
use crate::market::{MarketError, ReturnMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictError {
    #[error("empty day range")]
    EmptyRange,
    #[error("no day before day {k} has a nonzero order")]
    NoPredecessor { k: usize },
    #[error("need at least two cross rates, got {0}")]
    TooShort(usize),
    #[error("cross-rate history is empty")]
    EmptyHistory,
    #[error("not enough history to predict day {day}")]
    InsufficientHistory { day: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty sequence")]
    EmptySequence,
    #[error("invalid predictor configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Market(#[from] MarketError),
}

/// Location of a return matrix's unique maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum OrderLabel {
    /// Tie for the maximum, or an all-zero matrix.
    Undetermined = 0,
    Upper = 1,
    Lower = 2,
}

impl OrderLabel {
    pub fn swapped(self) -> Self {
        match self {
            OrderLabel::Upper => OrderLabel::Lower,
            OrderLabel::Lower => OrderLabel::Upper,
            OrderLabel::Undetermined => OrderLabel::Undetermined,
        }
    }

    pub fn is_determined(self) -> bool {
        self != OrderLabel::Undetermined
    }
}

impl From<OrderLabel> for u8 {
    fn from(o: OrderLabel) -> u8 {
        o as u8
    }
}

impl TryFrom<u8> for OrderLabel {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(OrderLabel::Undetermined),
            1 => Ok(OrderLabel::Upper),
            2 => Ok(OrderLabel::Lower),
            _ => Err(format!("order label must be 0, 1 or 2, got {v}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum MpcrMethod {
    /// Persistence: the last observed cross rate.
    #[value(name = "1")]
    Mpcr1,
    /// Alternation: `c_A` after a high cross rate, `c_B` after a low one.
    #[value(name = "2")]
    Mpcr2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum MpoMethod {
    /// Expect a flip of today's order when crossings are likely.
    #[value(name = "1")]
    Mpo1,
    /// Expect yesterday's order when crossings are likely.
    #[value(name = "2")]
    Mpo2,
}

impl std::fmt::Display for MpcrMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MpcrMethod::Mpcr1 => "MPCR1",
            MpcrMethod::Mpcr2 => "MPCR2",
        })
    }
}

impl std::fmt::Display for MpoMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MpoMethod::Mpo1 => "MPO1",
            MpoMethod::Mpo2 => "MPO2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentConfig {
    pub len: usize,
    pub c_a: f64,
    pub c_b: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            len: 5,
            c_a: 0.25,
            c_b: 0.75,
        }
    }
}

impl SegmentConfig {
    pub fn validate(&self) -> Result<(), PredictError> {
        if self.len == 0 {
            return Err(PredictError::InvalidConfig("segment length L must be >= 1".into()));
        }
        if !(0.0..0.5).contains(&self.c_a) {
            return Err(PredictError::InvalidConfig(format!(
                "c_A must lie in [0, 1/2), got {}",
                self.c_a
            )));
        }
        if !(0.5..=1.0).contains(&self.c_b) {
            return Err(PredictError::InvalidConfig(format!(
                "c_B must lie in [1/2, 1], got {}",
                self.c_b
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub mpcr: MpcrMethod,
    pub mpo: MpoMethod,
    pub adjusted: bool,
    pub segment: SegmentConfig,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            mpcr: MpcrMethod::Mpcr1,
            mpo: MpoMethod::Mpo1,
            adjusted: false,
            segment: SegmentConfig::default(),
        }
    }
}

/// `true` for the upper half-interval `[1/2, 1]`.
pub fn in_upper_half(w: f64) -> bool {
    w >= 0.5
}

pub fn order_of(r: &ReturnMatrix) -> OrderLabel {
    let entries = r.entries();
    let m = entries.dim();
    let alpha = r.max_entry();
    let mut hits = (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).filter(|&(i, j)| entries[(i, j)] == alpha);
    match (hits.next(), hits.next()) {
        (Some((i, j)), None) if i < j => OrderLabel::Upper,
        (Some((i, j)), None) if i > j => OrderLabel::Lower,
        _ => OrderLabel::Undetermined,
    }
}

pub fn rev(r: &ReturnMatrix) -> ReturnMatrix {
    r.rev()
}

/// Share of cross positions among `orders`. The first day is compared with
/// `prev` when given and skipped otherwise; the denominator is always the
/// number of days.
pub fn cross_rate(orders: &[OrderLabel], prev: Option<OrderLabel>) -> Result<f64, PredictError> {
    if orders.is_empty() {
        return Err(PredictError::EmptyRange);
    }
    let mut crosses = orders.windows(2).filter(|w| w[0] != w[1]).count();
    if prev.is_some_and(|p| p != orders[0]) {
        crosses += 1;
    }
    Ok(crosses as f64 / orders.len() as f64)
}

/// Latest day `l < k` with a nonzero order.
pub fn nearest_nonzero_index(orders: &[OrderLabel], k: usize) -> Result<usize, PredictError> {
    let upto = (k.saturating_sub(1)).min(orders.len());
    orders[..upto]
        .iter()
        .rposition(|o| o.is_determined())
        .map(|idx| idx + 1)
        .ok_or(PredictError::NoPredecessor { k })
}

/// Cross rate over days `start..=end` that skips undetermined days: each
/// determined day is compared with the nearest earlier determined day.
pub fn adjusted_cross_rate(
    orders: &[OrderLabel],
    start: usize,
    end: usize,
) -> Result<f64, PredictError> {
    if start == 0 || end < start || end > orders.len() {
        return Err(PredictError::EmptyRange);
    }
    let mut crosses = 0usize;
    let mut counted = 0usize;
    let mut last = orders[..start - 1].iter().rev().copied().find(|o| o.is_determined());
    for &o in &orders[start - 1..end] {
        if !o.is_determined() {
            continue;
        }
        counted += 1;
        if last.is_some_and(|p| p != o) {
            crosses += 1;
        }
        last = Some(o);
    }
    Ok(if counted == 0 {
        0.0
    } else {
        crosses as f64 / counted as f64
    })
}

/// Cross rate of segment `n` (1-based): days `(n−1)L+1 ..= nL`.
pub fn segment_cross_rate(
    orders: &[OrderLabel],
    n: usize,
    seg: &SegmentConfig,
    adjusted: bool,
) -> Result<f64, PredictError> {
    if n == 0 || n * seg.len > orders.len() {
        return Err(PredictError::EmptyRange);
    }
    let start = (n - 1) * seg.len + 1;
    let end = n * seg.len;
    if adjusted {
        adjusted_cross_rate(orders, start, end)
    } else {
        let prev = (start > 1).then(|| orders[start - 2]);
        cross_rate(&orders[start - 1..end], prev)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionProbabilities {
    pub aa: f64,
    pub ab: f64,
    pub ba: f64,
    pub bb: f64,
}

pub fn transition_probabilities(series: &[f64]) -> Result<TransitionProbabilities, PredictError> {
    if series.len() < 2 {
        return Err(PredictError::TooShort(series.len()));
    }
    let mut counts = [0usize; 4];
    for w in series.windows(2) {
        let idx = 2 * usize::from(in_upper_half(w[0])) + usize::from(in_upper_half(w[1]));
        counts[idx] += 1;
    }
    let total = (series.len() - 1) as f64;
    Ok(TransitionProbabilities {
        aa: counts[0] as f64 / total,
        ab: counts[1] as f64 / total,
        ba: counts[2] as f64 / total,
        bb: counts[3] as f64 / total,
    })
}

/// Forecast of the next segment's cross rate.
pub fn mpcr_predict(
    method: MpcrMethod,
    history: &[f64],
    seg: &SegmentConfig,
) -> Result<f64, PredictError> {
    let &last = history.last().ok_or(PredictError::EmptyHistory)?;
    Ok(match method {
        MpcrMethod::Mpcr1 => last,
        MpcrMethod::Mpcr2 if in_upper_half(last) => seg.c_a,
        MpcrMethod::Mpcr2 => seg.c_b,
    })
}

/// Which past day feeds the prediction for day `k + 1`, and whether it is
/// transposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Source {
    pub day: usize,
    pub reversed: bool,
}

/// Chooses the source day for predicting day `k + 1` from the history of
/// orders up to day `k`.
pub fn select_source(
    mpo: MpoMethod,
    adjusted: bool,
    w_pred: f64,
    orders: &[OrderLabel],
    k: usize,
) -> Result<Source, PredictError> {
    if k == 0 || k > orders.len() {
        return Err(PredictError::InsufficientHistory { day: k + 1 });
    }
    let high = in_upper_half(w_pred);
    let anchor = if adjusted {
        nearest_nonzero_index(orders, k + 1)
            .map_err(|_| PredictError::InsufficientHistory { day: k + 1 })?
    } else {
        k
    };
    let source = match (mpo, high) {
        (MpoMethod::Mpo1, true) => Source {
            day: anchor,
            reversed: true,
        },
        (MpoMethod::Mpo2, true) => {
            let day = if adjusted {
                nearest_nonzero_index(orders, anchor)
                    .map_err(|_| PredictError::InsufficientHistory { day: k + 1 })?
            } else if k >= 2 {
                k - 1
            } else {
                return Err(PredictError::InsufficientHistory { day: k + 1 });
            };
            Source {
                day,
                reversed: false,
            }
        }
        (_, false) => Source {
            day: anchor,
            reversed: false,
        },
    };
    Ok(source)
}

/// Predicted order of day `k + 1`, from orders alone.
pub fn mpo_predict(
    mpo: MpoMethod,
    adjusted: bool,
    w_pred: f64,
    orders: &[OrderLabel],
    k: usize,
) -> Result<OrderLabel, PredictError> {
    let src = select_source(mpo, adjusted, w_pred, orders, k)?;
    let o = orders[src.day - 1];
    Ok(if src.reversed { o.swapped() } else { o })
}

/// Predicted return matrix for day `k + 1`.
pub fn predict_return(
    mpo: MpoMethod,
    adjusted: bool,
    w_pred: f64,
    returns: &[ReturnMatrix],
    orders: &[OrderLabel],
    k: usize,
) -> Result<ReturnMatrix, PredictError> {
    if returns.len() < k {
        return Err(PredictError::InsufficientHistory { day: k + 1 });
    }
    let src = select_source(mpo, adjusted, w_pred, orders, k)?;
    let base = &returns[src.day - 1];
    let r = if src.reversed { base.rev() } else { base.clone() };
    Ok(r.with_day(k + 1))
}

/// Full record of one day-ahead prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub r_pred: ReturnMatrix,
    pub order: OrderLabel,
    /// Forecast cross rate; `None` before any segment has completed.
    pub w_pred: Option<f64>,
    pub source_day: usize,
    pub reversed: bool,
    /// The source day lies before the segment of the predicted day.
    pub used_prior_segment: bool,
    /// The configured method lacked history and persistence was used.
    pub fallback: bool,
}

/// Cross-rate pipeline prediction for day `k + 1`.
///
/// `series` holds the cross rates of completed segments `1..=floor(k/L)`.
/// Until a segment completes, or whenever the configured method lacks
/// history, the prediction is day `k`'s matrix unchanged.
pub fn predict_next(
    cfg: &PredictorConfig,
    series: &[f64],
    returns: &[ReturnMatrix],
    orders: &[OrderLabel],
    k: usize,
) -> Result<Prediction, PredictError> {
    if k == 0 || returns.len() < k || orders.len() < k {
        return Err(PredictError::InsufficientHistory { day: k + 1 });
    }
    let segment_start = (k / cfg.segment.len) * cfg.segment.len + 1;
    let w_pred = if series.is_empty() {
        None
    } else {
        Some(mpcr_predict(cfg.mpcr, series, &cfg.segment)?)
    };
    let selected = w_pred.and_then(|w| select_source(cfg.mpo, cfg.adjusted, w, orders, k).ok());
    let (src, fallback) = match selected {
        Some(src) => (src, false),
        None => (
            Source {
                day: k,
                reversed: false,
            },
            true,
        ),
    };
    let base = &returns[src.day - 1];
    let r_pred = if src.reversed { base.rev() } else { base.clone() }.with_day(k + 1);
    let o = orders[src.day - 1];
    Ok(Prediction {
        order: if src.reversed { o.swapped() } else { o },
        r_pred,
        w_pred,
        source_day: src.day,
        reversed: src.reversed,
        used_prior_segment: src.day < segment_start,
        fallback,
    })
}

/// `Σ_l a_l R^(k−l+1)` over the lags available at day `k`, with the weights
/// renormalized over those lags.
pub fn linear_prediction(
    weights: &[f64],
    returns: &[ReturnMatrix],
    k: usize,
) -> Result<ReturnMatrix, PredictError> {
    if k == 0 || returns.len() < k {
        return Err(PredictError::InsufficientHistory { day: k + 1 });
    }
    if weights.is_empty() || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(PredictError::InvalidConfig(
            "linear weights must be nonnegative and nonempty".into(),
        ));
    }
    let lags = weights.len().min(k);
    let total: f64 = weights[..lags].iter().sum();
    if total <= 0.0 {
        return Err(PredictError::InvalidConfig(
            "linear weights over available lags sum to 0".into(),
        ));
    }
    let m = returns[0].dim();
    let mut acc = Grid::zeros(m);
    for (lag, &a) in weights[..lags].iter().enumerate() {
        let r = returns[k - 1 - lag].entries();
        for (i, j) in Grid::off_diagonal(m) {
            acc[(i, j)] += a / total * r[(i, j)];
        }
    }
    Ok(ReturnMatrix::new(k + 1, acc)?)
}

/// Share of days where the prediction matches an actual determined order.
pub fn success_rate(
    predicted: &[OrderLabel],
    actual: &[OrderLabel],
) -> Result<f64, PredictError> {
    if predicted.len() != actual.len() {
        return Err(PredictError::LengthMismatch {
            left: predicted.len(),
            right: actual.len(),
        });
    }
    if predicted.is_empty() {
        return Err(PredictError::EmptySequence);
    }
    let hits = predicted
        .iter()
        .zip(actual)
        .filter(|(p, a)| a.is_determined() && p == a)
        .count();
    Ok(hits as f64 / predicted.len() as f64)
}

pub fn is_effective(theta: f64) -> bool {
    theta >= 0.5
}

pub fn effectiveness_ratio(flags: &[bool]) -> Result<f64, PredictError> {
    if flags.is_empty() {
        return Err(PredictError::EmptySequence);
    }
    Ok(flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use OrderLabel::{Lower as L2, Undetermined as Z, Upper as U1};

    fn ret(rows: &[Vec<f64>]) -> ReturnMatrix {
        ReturnMatrix::from_rows(1, rows).unwrap()
    }

    fn seq(v: &[u8]) -> Vec<OrderLabel> {
        v.iter().map(|&x| OrderLabel::try_from(x).unwrap()).collect()
    }

    #[test]
    fn order_examples() {
        assert_eq!(order_of(&ret(&[vec![0.0, 1.2], vec![0.0, 0.0]])), U1);
        assert_eq!(order_of(&ret(&[vec![0.0, 0.0], vec![0.9, 0.0]])), L2);
        let tie = ret(&[
            vec![0.0, 1.1, 1.1],
            vec![0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0],
        ]);
        assert_eq!(order_of(&tie), Z);
        assert_eq!(order_of(&ReturnMatrix::zeros(1, 3)), Z);
    }

    #[test]
    fn rev_examples() {
        let r = ret(&[vec![0.0, 1.2], vec![0.0, 0.0]]);
        assert_eq!(rev(&rev(&r)), r);
        assert_eq!(order_of(&rev(&r)), L2);
        assert_eq!(rev(&ReturnMatrix::zeros(1, 2)), ReturnMatrix::zeros(1, 2));
    }

    #[test]
    fn order_label_serializes_as_integer() {
        assert_eq!(serde_json::to_string(&L2).unwrap(), "2");
        assert_eq!(serde_json::from_str::<OrderLabel>("1").unwrap(), U1);
        assert!(serde_json::from_str::<OrderLabel>("3").is_err());
    }

    #[test]
    fn cross_rate_examples() {
        assert_eq!(cross_rate(&seq(&[1, 1, 2, 1]), None).unwrap(), 0.5);
        assert_eq!(cross_rate(&seq(&[1, 1, 1, 1]), None).unwrap(), 0.0);
        assert_eq!(cross_rate(&seq(&[1, 2, 1, 2]), Some(L2)).unwrap(), 1.0);
        assert_eq!(cross_rate(&[], None).unwrap_err(), PredictError::EmptyRange);
    }

    #[test]
    fn nearest_nonzero_examples() {
        assert_eq!(nearest_nonzero_index(&seq(&[1, 0, 2]), 3).unwrap(), 1);
        assert_eq!(nearest_nonzero_index(&seq(&[1, 2, 1]), 2).unwrap(), 1);
        assert_eq!(
            nearest_nonzero_index(&seq(&[0, 0, 1]), 2).unwrap_err(),
            PredictError::NoPredecessor { k: 2 }
        );
    }

    #[test]
    fn adjusted_cross_rate_examples() {
        let w = adjusted_cross_rate(&seq(&[1, 0, 2, 0, 1]), 1, 5).unwrap();
        assert!((w - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(adjusted_cross_rate(&seq(&[0, 0, 0]), 1, 3).unwrap(), 0.0);
    }

    #[test]
    fn transition_examples() {
        let p = transition_probabilities(&[0.2, 0.3, 0.6, 0.7, 0.1]).unwrap();
        assert_eq!((p.aa, p.ab, p.ba, p.bb), (0.25, 0.25, 0.25, 0.25));
        let p = transition_probabilities(&[0.1, 0.0, 0.4]).unwrap();
        assert_eq!((p.aa, p.ab, p.ba, p.bb), (1.0, 0.0, 0.0, 0.0));
        assert_eq!(transition_probabilities(&[0.1]).unwrap_err(), PredictError::TooShort(1));
    }

    #[test]
    fn mpcr_examples() {
        let seg = SegmentConfig::default();
        assert_eq!(mpcr_predict(MpcrMethod::Mpcr1, &[0.9, 0.3], &seg).unwrap(), 0.3);
        assert_eq!(mpcr_predict(MpcrMethod::Mpcr2, &[0.7], &seg).unwrap(), 0.25);
        assert_eq!(mpcr_predict(MpcrMethod::Mpcr2, &[0.2], &seg).unwrap(), 0.75);
        assert_eq!(mpcr_predict(MpcrMethod::Mpcr2, &[0.5], &seg).unwrap(), 0.25);
        assert_eq!(
            mpcr_predict(MpcrMethod::Mpcr1, &[], &seg).unwrap_err(),
            PredictError::EmptyHistory
        );
    }

    #[test]
    fn mpo_examples() {
        assert_eq!(mpo_predict(MpoMethod::Mpo1, false, 0.8, &seq(&[1]), 1).unwrap(), L2);
        assert_eq!(mpo_predict(MpoMethod::Mpo1, false, 0.2, &seq(&[1]), 1).unwrap(), U1);
        assert_eq!(mpo_predict(MpoMethod::Mpo2, false, 0.9, &seq(&[2, 1]), 2).unwrap(), L2);
        assert_eq!(mpo_predict(MpoMethod::Mpo1, false, 0.5, &seq(&[1]), 1).unwrap(), L2);
        assert_eq!(
            mpo_predict(MpoMethod::Mpo2, false, 0.9, &seq(&[1]), 1).unwrap_err(),
            PredictError::InsufficientHistory { day: 2 }
        );
    }

    #[test]
    fn adjusted_mpo_skips_undetermined_days() {
        let orders = seq(&[2, 1, 0]);
        // anchor l(4) = 2; MPO1' high flips it, MPO2' high reaches l(2) = 1
        assert_eq!(mpo_predict(MpoMethod::Mpo1, true, 0.9, &orders, 3).unwrap(), L2);
        assert_eq!(mpo_predict(MpoMethod::Mpo1, true, 0.1, &orders, 3).unwrap(), U1);
        assert_eq!(mpo_predict(MpoMethod::Mpo2, true, 0.9, &orders, 3).unwrap(), L2);
        assert!(mpo_predict(MpoMethod::Mpo1, true, 0.1, &seq(&[0, 0]), 2).is_err());
    }

    #[test]
    fn predict_return_examples() {
        let r = ret(&[vec![0.0, 1.2], vec![0.0, 0.0]]);
        let returns = vec![r.clone()];
        let orders = vec![order_of(&r)];
        let low = predict_return(MpoMethod::Mpo1, false, 0.3, &returns, &orders, 1).unwrap();
        assert_eq!(low.entries(), r.entries());
        assert_eq!(low.day(), 2);
        let high = predict_return(MpoMethod::Mpo1, false, 0.6, &returns, &orders, 1).unwrap();
        assert_eq!(high.entries(), &r.entries().transpose());
    }

    #[test]
    fn pipeline_falls_back_before_first_segment() {
        let r = ret(&[vec![0.0, 1.2], vec![0.0, 0.0]]);
        let cfg = PredictorConfig::default();
        let p = predict_next(&cfg, &[], std::slice::from_ref(&r), &[U1], 1).unwrap();
        assert!(p.fallback);
        assert_eq!(p.w_pred, None);
        assert_eq!(p.r_pred.entries(), r.entries());
        assert_eq!(p.order, U1);
    }

    #[test]
    fn pipeline_flags_prior_segment_use() {
        let up = ret(&[vec![0.0, 1.2], vec![0.0, 0.0]]);
        let cfg = PredictorConfig {
            segment: SegmentConfig {
                len: 2,
                ..SegmentConfig::default()
            },
            ..PredictorConfig::default()
        };
        let returns = vec![up.clone(), up.rev(), up.clone(), up.rev()];
        let orders: Vec<_> = returns.iter().map(order_of).collect();
        // k = 2 ends segment 1, so day 3 is predicted from day 2
        let p = predict_next(&cfg, &[1.0], &returns, &orders, 2).unwrap();
        assert_eq!(p.source_day, 2);
        assert!(p.reversed && p.used_prior_segment && !p.fallback);
        assert_eq!(p.order, U1);
        let p = predict_next(&cfg, &[1.0], &returns, &orders, 3).unwrap();
        assert!(!p.used_prior_segment);
    }

    #[test]
    fn linear_prediction_renormalizes_over_available_lags() {
        let a = ret(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        let b = ret(&[vec![0.0, 2.0], vec![0.0, 0.0]]);
        let p = linear_prediction(&[0.5, 0.5], &[a.clone(), b.clone()], 2).unwrap();
        assert!((p.get(0, 1) - 1.5).abs() < 1e-15);
        let p = linear_prediction(&[0.25, 0.75], &[a], 1).unwrap();
        assert_eq!(p.get(0, 1), 1.0);
    }

    #[test]
    fn success_and_effectiveness_examples() {
        assert_eq!(success_rate(&seq(&[1, 2, 1, 2]), &seq(&[1, 2, 2, 2])).unwrap(), 0.75);
        assert_eq!(success_rate(&seq(&[1, 2]), &seq(&[1, 2])).unwrap(), 1.0);
        assert_eq!(success_rate(&seq(&[0, 1]), &seq(&[0, 1])).unwrap(), 0.5);
        assert!(is_effective(0.5) && !is_effective(0.49));
        let e = effectiveness_ratio(&[true, true, false]).unwrap();
        assert!((e - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(effectiveness_ratio(&[true; 4]).unwrap(), 1.0);
        assert_eq!(effectiveness_ratio(&[false; 4]).unwrap(), 0.0);
        assert!(success_rate(&seq(&[1]), &seq(&[1, 2])).is_err());
    }

    fn arb_return(m: usize) -> impl Strategy<Value = ReturnMatrix> {
        prop::collection::vec((any::<bool>(), prop::sample::select(vec![0.0, 0.5, 1.0, 1.5, 2.0])), m * (m - 1) / 2)
            .prop_map(move |pairs| {
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
                ReturnMatrix::new(1, g).unwrap()
            })
    }

    fn arb_orders(min: usize, max: usize, zeros: bool) -> impl Strategy<Value = Vec<OrderLabel>> {
        let lo = if zeros { 0u8 } else { 1 };
        prop::collection::vec(lo..=2u8, min..max).prop_map(|v| seq(&v))
    }

    proptest! {
        #[test]
        fn rev_swaps_order(r in (2usize..5).prop_flat_map(arb_return)) {
            prop_assert_eq!(order_of(&rev(&r)), order_of(&r).swapped());
            prop_assert!(ReturnMatrix::new(1, rev(&r).entries().clone()).is_ok());
        }

        #[test]
        fn adjusted_matches_plain_without_ties(orders in arb_orders(2, 30, false), cut in 0usize..29) {
            let start = cut % orders.len() + 1;
            let end = orders.len();
            let prev = (start > 1).then(|| orders[start - 2]);
            let plain = cross_rate(&orders[start - 1..end], prev).unwrap();
            let adj = adjusted_cross_rate(&orders, start, end).unwrap();
            prop_assert!((plain - adj).abs() < 1e-15);
        }

        #[test]
        fn transition_masses_sum_to_one(series in prop::collection::vec(0.0f64..=1.0, 2..50)) {
            let p = transition_probabilities(&series).unwrap();
            prop_assert!((p.aa + p.ab + p.ba + p.bb - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn predicted_matrix_order_matches_mpo(
            returns in (2usize..4).prop_flat_map(|m| prop::collection::vec(arb_return(m), 1..8)),
            w in 0.0f64..=1.0,
            adjusted in any::<bool>(),
            mpo2 in any::<bool>(),
        ) {
            let orders: Vec<_> = returns.iter().map(order_of).collect();
            let k = returns.len();
            let mpo = if mpo2 { MpoMethod::Mpo2 } else { MpoMethod::Mpo1 };
            match (mpo_predict(mpo, adjusted, w, &orders, k), predict_return(mpo, adjusted, w, &returns, &orders, k)) {
                (Ok(o), Ok(r)) => prop_assert_eq!(order_of(&r), o),
                (Err(a), Err(b)) => prop_assert_eq!(a, b),
                (a, b) => prop_assert!(false, "disagreement {:?} vs {:?}", a, b.map(|r| r.day())),
            }
        }

        #[test]
        fn plain_cross_rate_on_lattice(orders in arb_orders(1, 9, true), prev in prop::option::of(0u8..=2)) {
            let w = cross_rate(&orders, prev.map(|p| OrderLabel::try_from(p).unwrap())).unwrap();
            let scaled = w * orders.len() as f64;
            prop_assert!((scaled - scaled.round()).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&w));
        }
    }
}
