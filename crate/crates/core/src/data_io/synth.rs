//! Seeded synthetic markets and order processes.

use super::DataError;
use crate::grid::Grid;
use crate::market::{compute_return_matrix, DailyQuotes, RateMatrix, ReturnHorizon, ReturnMatrix};
use crate::predictor::OrderLabel;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMarketSpec {
    pub m: usize,
    pub days: usize,
    pub seed: u64,
    pub spread_epsilon: f64,
    /// Mean of each log mid-rate step (overnight and intraday).
    pub drift: f64,
    /// Standard deviation of each log mid-rate step.
    pub vol: f64,
    /// Keep every upper return active so [`induced_returns`] can rescale
    /// each day onto `[r_floor, 1]`.
    pub normalize: bool,
    pub r_floor: f64,
}

impl Default for SyntheticMarketSpec {
    fn default() -> Self {
        Self {
            m: 3,
            days: 250,
            seed: 0,
            spread_epsilon: 0.001,
            drift: 0.0,
            vol: 0.01,
            normalize: false,
            r_floor: 0.5,
        }
    }
}

impl SyntheticMarketSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: String| Err(DataError::InvalidSpec(msg));
        if self.m < 2 {
            return bad(format!("m must satisfy m > 1, got {}", self.m));
        }
        if self.days < 2 {
            return bad(format!("days must be at least 2, got {}", self.days));
        }
        if !(self.spread_epsilon.is_finite() && self.spread_epsilon > 0.0) {
            return bad(format!("spread epsilon must be positive, got {}", self.spread_epsilon));
        }
        if !self.drift.is_finite() || !(self.vol.is_finite() && self.vol >= 0.0) {
            return bad(format!("drift {} / vol {} must be finite with vol >= 0", self.drift, self.vol));
        }
        if self.normalize && !(self.r_floor > 0.0 && self.r_floor < 1.0) {
            return bad(format!("r_floor must lie in (0, 1), got {}", self.r_floor));
        }
        Ok(())
    }
}

/// Exponentiated random walk on each pair's mid rate, quoted at `mid ± ε`.
///
/// Closing mids never fall more than `ε` below the open, so no bid-side
/// return fires; in normalize mode they also never rise more than `ε` above
/// it, so every ask-side return fires.
pub fn generate_market(spec: &SyntheticMarketSpec) -> Result<Vec<DailyQuotes>, DataError> {
    spec.validate()?;
    let eps = spec.spread_epsilon;
    let floor = 3.0 * eps;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let step = Normal::new(spec.drift, spec.vol).map_err(|e| DataError::InvalidSpec(e.to_string()))?;
    let start = Normal::new(0.0, 0.3).map_err(|e| DataError::InvalidSpec(e.to_string()))?;
    let pairs: Vec<(usize, usize)> = (0..spec.m).flat_map(|i| (i + 1..spec.m).map(move |j| (i, j))).collect();
    let mut mids: Vec<f64> = pairs.iter().map(|_| f64::exp(start.sample(&mut rng)).max(floor)).collect();

    let mut out = Vec::with_capacity(spec.days);
    for day in 1..=spec.days {
        let mut open = Grid::filled(spec.m, 1.0);
        let mut close = Grid::filled(spec.m, 1.0);
        for (mid, &(i, j)) in mids.iter_mut().zip(&pairs) {
            let open_mid = if day == 1 {
                *mid
            } else {
                (*mid * step.sample(&mut rng).exp()).max(floor)
            };
            let mut close_mid = (open_mid * step.sample(&mut rng).exp()).max(open_mid - eps).max(floor);
            if spec.normalize {
                close_mid = close_mid.min(open_mid + eps);
            }
            open[(i, j)] = open_mid + eps;
            open[(j, i)] = open_mid - eps;
            close[(i, j)] = close_mid + eps;
            close[(j, i)] = close_mid - eps;
            *mid = close_mid;
        }
        let invariant = |source| DataError::Invariant { day, source };
        let open = RateMatrix::new(day, open).map_err(invariant)?;
        let close = RateMatrix::new(day, close).map_err(invariant)?;
        out.push(DailyQuotes::new(open, close).map_err(invariant)?);
    }
    Ok(out)
}

/// Same-day return matrices with each day's nonzero entries mapped affinely
/// onto `[r_floor, 1]`. The largest entry becomes exactly 1; a day whose
/// nonzero entries are all equal maps them all to 1.
pub fn induced_returns(quotes: &[DailyQuotes], r_floor: f64) -> Result<Vec<ReturnMatrix>, DataError> {
    if !(r_floor > 0.0 && r_floor < 1.0) {
        return Err(DataError::InvalidSpec(format!("r_floor must lie in (0, 1), got {r_floor}")));
    }
    quotes
        .iter()
        .map(|q| {
            let day = q.day();
            let invariant = |source| DataError::Invariant { day, source };
            let raw = compute_return_matrix(q, None, ReturnHorizon::SameDay).map_err(invariant)?;
            let flat = raw.entries().as_flat();
            let nonzero = flat.iter().copied().filter(|&x| x > 0.0);
            let lo = nonzero.clone().fold(f64::INFINITY, f64::min);
            let hi = nonzero.fold(0.0, f64::max);
            let scaled = raw.entries().map(|x| {
                if x <= 0.0 {
                    0.0
                } else if x == hi || hi == lo {
                    1.0
                } else {
                    (r_floor + (1.0 - r_floor) * (x - lo) / (hi - lo)).min(1.0)
                }
            });
            ReturnMatrix::new(day, scaled).map_err(invariant)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOrderSpec {
    pub segments: usize,
    pub segment_len: usize,
    /// Joint masses of consecutive segment classes `(AA, AB, BA, BB)`, where
    /// class A has cross rate below 1/2.
    pub targets: [f64; 4],
    /// Segments per independent block.
    pub dependence_gap: usize,
    pub seed: u64,
    pub m: usize,
}

impl Default for SyntheticOrderSpec {
    fn default() -> Self {
        Self {
            segments: 1000,
            segment_len: 5,
            targets: [0.25; 4],
            dependence_gap: 4,
            seed: 0,
            m: 2,
        }
    }
}

const MASS_TOL: f64 = 1e-12;

impl SyntheticOrderSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: String| Err(DataError::InvalidSpec(msg));
        if self.segments == 0 {
            return bad("segment count must be positive".into());
        }
        if self.segment_len < 2 {
            return bad(format!("segment length must be at least 2, got {}", self.segment_len));
        }
        if self.dependence_gap == 0 {
            return bad("dependence gap must be at least 1".into());
        }
        if self.m < 2 {
            return bad(format!("m must satisfy m > 1, got {}", self.m));
        }
        if self.targets.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return bad(format!("transition masses must be nonnegative, got {:?}", self.targets));
        }
        let total: f64 = self.targets.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return bad(format!("transition masses must sum to 1, got {total}"));
        }
        Ok(())
    }

    /// Marginal class probabilities and the within-block joint masses.
    fn kernel(&self) -> Result<([f64; 2], [f64; 4]), DataError> {
        let [aa, ab, ba, bb] = self.targets;
        if (ab - ba).abs() > MASS_TOL {
            return Err(DataError::InfeasibleTargets(format!(
                "a stationary sequence needs P_AB = P_BA, got {ab} and {ba}"
            )));
        }
        let pi = [aa + ab, ba + bb];
        let indep = [pi[0] * pi[0], pi[0] * pi[1], pi[1] * pi[0], pi[1] * pi[1]];
        let k = self.dependence_gap as f64;
        if self.dependence_gap == 1 {
            if self.targets.iter().zip(&indep).any(|(t, p)| (t - p).abs() > 1e-9) {
                return Err(DataError::InfeasibleTargets(
                    "with a dependence gap of 1 the targets must factor as a product".into(),
                ));
            }
            return Ok((pi, indep));
        }
        let mut within = [0.0; 4];
        for idx in 0..4 {
            let q = (k * self.targets[idx] - indep[idx]) / (k - 1.0);
            if q < -MASS_TOL {
                return Err(DataError::InfeasibleTargets(format!(
                    "targets {:?} need a dependence gap above {}",
                    self.targets, self.dependence_gap
                )));
            }
            within[idx] = q.max(0.0);
        }
        Ok((pi, within))
    }
}

/// Class-A/B sequence: blocks of `dependence_gap` segments, each block
/// starting from the marginal and moving by the within-block kernel, so
/// averaged over blocks the consecutive-pair masses equal the targets.
fn segment_classes(spec: &SyntheticOrderSpec, rng: &mut impl Rng) -> Result<Vec<bool>, DataError> {
    let (pi, within) = spec.kernel()?;
    let mut classes = Vec::with_capacity(spec.segments);
    for n in 0..spec.segments {
        let is_b = if n % spec.dependence_gap == 0 || pi[0] == 0.0 || pi[1] == 0.0 {
            rng.random::<f64>() >= pi[0]
        } else {
            let prev_b = classes[n - 1];
            let (stay, row) = if prev_b { (within[3], pi[1]) } else { (within[0], pi[0]) };
            let leave = rng.random::<f64>() >= stay / row;
            leave != prev_b
        };
        classes.push(is_b);
    }
    Ok(classes)
}

/// One matrix whose unique maximum sits in the labelled triangle. Entries
/// stay within 0.3% of 1 so capital stays representable over long runs.
fn labelled_matrix(day: usize, m: usize, order: OrderLabel, rng: &mut impl Rng) -> ReturnMatrix {
    let mut g = Grid::zeros(m);
    let mut max = 0.0f64;
    for i in 0..m {
        for j in i + 1..m {
            let v = rng.random_range(0.999..1.001);
            if rng.random::<bool>() {
                g[(i, j)] = v;
            } else {
                g[(j, i)] = v;
            }
            max = max.max(v);
        }
    }
    let pairs = m * (m - 1) / 2;
    let pick = rng.random_range(0..pairs);
    let (i, j) = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).nth(pick).unwrap_or((0, 1));
    let top = max + 0.0005 + rng.random::<f64>() * 0.0005;
    g[(i, j)] = 0.0;
    g[(j, i)] = 0.0;
    match order {
        OrderLabel::Lower => g[(j, i)] = top,
        _ => g[(i, j)] = top,
    }
    ReturnMatrix::new(day, g).expect("generated entries are nonnegative with one side per pair")
}

/// Return matrices whose order labels follow a finitely dependent sequence
/// of segment classes. Every day's label is Upper or Lower.
pub fn generate_order_process(spec: &SyntheticOrderSpec) -> Result<(Vec<ReturnMatrix>, Vec<OrderLabel>), DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let classes = segment_classes(spec, &mut rng)?;
    let len = spec.segment_len;
    let mut orders = Vec::with_capacity(spec.segments * len);
    let mut current = if rng.random::<bool>() {
        OrderLabel::Upper
    } else {
        OrderLabel::Lower
    };
    for (n, &is_b) in classes.iter().enumerate() {
        // The first segment has no predecessor, so its first day never crosses.
        let slots = if n == 0 { len - 1 } else { len };
        let class_counts: Vec<usize> = (0..=slots).filter(|&c| (2 * c >= len) == is_b).collect();
        let count = class_counts[rng.random_range(0..class_counts.len())];
        let mut crosses = vec![false; len];
        for idx in sample(&mut rng, slots, count) {
            crosses[idx + len - slots] = true;
        }
        for cross in crosses {
            if cross {
                current = current.swapped();
            }
            orders.push(current);
        }
    }
    let returns = orders
        .iter()
        .enumerate()
        .map(|(idx, &o)| labelled_matrix(idx + 1, spec.m, o, &mut rng))
        .collect();
    Ok((returns, orders))
}
