//! Seeded Monte Carlo checks of the growth, cost and prediction guarantees.
//!
//! Replicate `r` draws everything from `seed + r`; replicates run on a rayon
//! pool and results are reported in replicate order.

use crate::backtest::metrics::{growth_rate_with_cost, single_pair_benchmark, summarize};
use crate::backtest::universality::universality_gap;
use crate::backtest::{run_backtest_on_returns, BacktestConfig, BacktestLedger, GammaSchedule, Predictor};
use crate::cost::{cost_bounds, delta, solve_rebalancing_cost, theoretical_cost_ratio_bound, CostParams};
use crate::data_io::synth::{generate_market, generate_order_process, induced_returns, SyntheticMarketSpec, SyntheticOrderSpec};
use crate::grid::Grid;
use crate::market::ReturnMatrix;
use crate::portfolio::PortfolioMatrix;
use crate::predictor::{MpcrMethod, MpoMethod, PredictorConfig, SegmentConfig};
use crate::update::UpdateRule;
use clap::ValueEnum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

const GAP_TOL: f64 = 1e-9;
const LEDGER_REL_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("invalid verification config: {0}")]
    InvalidConfig(String),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum Suite {
    Universality,
    Profitability,
    CostBound,
    All,
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Suite::Universality => "universality",
            Suite::Profitability => "profitability",
            Suite::CostBound => "cost-bound",
            Suite::All => "all",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub suite: Suite,
    pub replicates: usize,
    pub seed: u64,
    pub jobs: Option<usize>,
    /// Days per universality market.
    pub days: usize,
    pub r_floor: f64,
    pub segments: usize,
    pub segment_len: usize,
    /// Same-class transition mass for the first profitability scenario.
    pub paa_pbb: f64,
    /// Class-switching transition mass for the second scenario.
    pub pab_pba: f64,
    pub mpo: MpoMethod,
    pub eta_slack: f64,
    /// Fixed-point solves per cost-bound replicate.
    pub solves_per_replicate: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            suite: Suite::All,
            replicates: 10,
            seed: 1,
            jobs: None,
            days: 250,
            r_floor: 0.5,
            segments: 20_000,
            segment_len: 5,
            paa_pbb: 0.78,
            pab_pba: 0.6,
            mpo: MpoMethod::Mpo1,
            eta_slack: 0.05,
            solves_per_replicate: 100,
        }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<(), VerifyError> {
        let bad = |m: String| Err(VerifyError::InvalidConfig(m));
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1".into());
        }
        if self.days < 2 {
            return bad(format!("days must be at least 2, got {}", self.days));
        }
        if !(self.r_floor > 0.0 && self.r_floor < 1.0) {
            return bad(format!("r_floor must lie in (0, 1), got {}", self.r_floor));
        }
        if self.segments < 2 || self.segment_len < 2 {
            return bad("profitability needs at least 2 segments of length at least 2".into());
        }
        for (name, p) in [("paa-pbb", self.paa_pbb), ("pab-pba", self.pab_pba)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.solves_per_replicate == 0 {
            return bad("solves per replicate must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    /// Seed of the first failing replicate.
    pub failing_seed: Option<u64>,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {}: {}", self.name, self.detail)?;
        if let Some(seed) = self.failing_seed {
            write!(f, " (failing seed {seed})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct SuiteReport {
    pub criteria: Vec<CriterionResult>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }
}

/// Outcome of one check on one replicate: `Err` carries a description.
type Check = Result<(), String>;

fn summarize_checks(name: &str, seeds: &[u64], checks: &[Check], ok_detail: String) -> CriterionResult {
    let failure = seeds.iter().zip(checks).find_map(|(s, c)| c.as_ref().err().map(|e| (*s, e.clone())));
    let failures = checks.iter().filter(|c| c.is_err()).count();
    match failure {
        None => CriterionResult {
            name: name.into(),
            passed: true,
            detail: ok_detail,
            failing_seed: None,
        },
        Some((seed, msg)) => CriterionResult {
            name: name.into(),
            passed: false,
            detail: format!("{failures}/{} replicates failed; first: {msg}", checks.len()),
            failing_seed: Some(seed),
        },
    }
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, VerifyError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| VerifyError::Pool(e.to_string()))
}

pub fn run_suite(cfg: &VerifyConfig) -> Result<SuiteReport, VerifyError> {
    cfg.validate()?;
    let pool = pool(cfg.jobs)?;
    let mut report = SuiteReport::default();
    let run = |suite: Suite| match suite {
        Suite::Universality => universality_suite(cfg),
        Suite::Profitability => profitability_suite(cfg),
        Suite::CostBound => cost_bound_suite(cfg),
        Suite::All => unreachable!(),
    };
    let suites: &[Suite] = match cfg.suite {
        Suite::All => &[Suite::CostBound, Suite::Universality, Suite::Profitability],
        ref one => std::slice::from_ref(one),
    };
    for &s in suites {
        report.criteria.extend(pool.install(|| run(s)));
    }
    Ok(report)
}

/// Capital identities `F′_k = F_{k−1} − T_k`, `F_k = F′_k·growth` and
/// `(1/N)·ln(F_N/F_0) = R_N`, all to relative `1e-9`.
pub fn check_ledger_integrity(ledger: &BacktestLedger) -> Check {
    let f0 = ledger.f0().ok_or("empty ledger")?;
    let rel = |a: f64, b: f64| (a - b).abs() <= LEDGER_REL_TOL * a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    let mut prev = f0;
    for r in &ledger.records {
        if !rel(r.f_prime, prev - r.t) {
            return Err(format!("day {}: F' = {} but F_prev - T = {}", r.day, r.f_prime, prev - r.t));
        }
        if !rel(r.f, r.f_prime * r.growth_factor()) {
            return Err(format!("day {}: F = {} but F'·growth = {}", r.day, r.f, r.f_prime * r.growth_factor()));
        }
        prev = r.f;
    }
    let n = ledger.len() as f64;
    let from_capital = (prev / f0).ln() / n;
    let r_n = growth_rate_with_cost(ledger).map_err(|e| e.to_string())?;
    if (from_capital - r_n).abs() > LEDGER_REL_TOL * r_n.abs().max(1.0 / n) {
        return Err(format!("R_N = {r_n} but ln(F_N/F_0)/N = {from_capital}"));
    }
    Ok(())
}

/// Every realized `c_k` (k ≥ 2) against the bound for the previous day's
/// update.
pub fn check_cost_ratios(ledger: &BacktestLedger, rule: UpdateRule, r_floor: f64, c: f64) -> Check {
    for w in ledger.records.windows(2) {
        let bound = theoretical_cost_ratio_bound(rule, w[0].gamma, r_floor, c).map_err(|e| e.to_string())?;
        if w[1].c > bound + GAP_TOL {
            return Err(format!("day {}: c = {:e} exceeds bound {:e}", w[1].day, w[1].c, bound));
        }
    }
    Ok(())
}

/// Draw of one randomized normalized market for the universality sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepInstance {
    pub seed: u64,
    pub m: usize,
    pub c: f64,
    pub gamma: f64,
    pub returns: Vec<ReturnMatrix>,
}

pub fn sweep_instance(seed: u64, days: usize, r_floor: f64) -> SweepInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(2..=4);
    let c = [0.0, 0.005][rng.random_range(0..2)];
    let gamma = [0.0, 0.1, 0.5][rng.random_range(0..3)];
    let spec = SyntheticMarketSpec {
        m,
        days,
        seed: rng.random(),
        spread_epsilon: 0.001,
        drift: 0.0,
        vol: rng.random_range(0.002..0.02),
        normalize: true,
        r_floor,
    };
    let quotes = generate_market(&spec).expect("sweep market spec is valid");
    let returns = induced_returns(&quotes, r_floor).expect("generated quotes validate");
    SweepInstance {
        seed,
        m,
        c,
        gamma,
        returns,
    }
}

pub fn lag1_config(rule: UpdateRule, gamma: GammaSchedule, c: f64) -> BacktestConfig {
    BacktestConfig {
        predictor: Predictor::lag1(),
        rule,
        gamma,
        costs: CostParams::with_rate(c),
        ..BacktestConfig::default()
    }
}

struct SweepOutcome {
    gap: Check,
    cost: Check,
    ledger: Check,
    worst_margin: f64,
}

fn sweep_replicate(seed: u64, cfg: &VerifyConfig) -> SweepOutcome {
    let inst = sweep_instance(seed, cfg.days, cfg.r_floor);
    let mut out = SweepOutcome {
        gap: Ok(()),
        cost: Ok(()),
        ledger: Ok(()),
        worst_margin: f64::INFINITY,
    };
    for rule in [UpdateRule::Iitc, UpdateRule::Eiitc] {
        let bcfg = lag1_config(rule, GammaSchedule::Constant(inst.gamma), inst.c);
        let ledger = match run_backtest_on_returns(&inst.returns, &bcfg) {
            Ok(l) => l,
            Err(e) => {
                let msg = Err(format!("{rule}: {e}"));
                out.gap = msg.clone();
                out.cost = msg.clone();
                out.ledger = msg;
                return out;
            }
        };
        for i in 0..inst.m {
            for j in i + 1..inst.m {
                match universality_gap(&ledger, &bcfg, (i, j), cfg.r_floor, false) {
                    Ok(rep) => {
                        out.worst_margin = out.worst_margin.min(rep.lhs_gap - rep.rhs_bound);
                        if !rep.holds && out.gap.is_ok() {
                            out.gap = Err(format!(
                                "{rule} pair ({},{}): gap {} < bound {}",
                                i + 1,
                                j + 1,
                                rep.lhs_gap,
                                rep.rhs_bound
                            ));
                        }
                    }
                    Err(e) if out.gap.is_ok() => out.gap = Err(format!("{rule}: {e}")),
                    Err(_) => {}
                }
            }
        }
        if out.cost.is_ok() {
            out.cost = check_cost_ratios(&ledger, rule, cfg.r_floor, inst.c).map_err(|e| format!("{rule}: {e}"));
        }
        if out.ledger.is_ok() {
            out.ledger = check_ledger_integrity(&ledger).map_err(|e| format!("{rule}: {e}"));
        }
    }
    out
}

/// `R_N − max_pair R*_N` on prefixes of one run.
pub fn long_run_gaps(returns: &[ReturnMatrix], cfg: &BacktestConfig, checkpoints: &[usize]) -> Result<Vec<f64>, String> {
    let ledger = run_backtest_on_returns(returns, cfg).map_err(|e| e.to_string())?;
    let m = returns.first().map_or(0, |r| r.dim());
    checkpoints
        .iter()
        .map(|&n| {
            if n == 0 || n > ledger.len() {
                return Err(format!("checkpoint {n} outside 1..={}", ledger.len()));
            }
            let prefix = BacktestLedger {
                records: ledger.records[..n].to_vec(),
            };
            let r_n = growth_rate_with_cost(&prefix).map_err(|e| e.to_string())?;
            let mut best = f64::NEG_INFINITY;
            for i in 0..m {
                for j in i + 1..m {
                    best = best.max(single_pair_benchmark(&returns[..n], i, j).map_err(|e| e.to_string())?);
                }
            }
            Ok(r_n - best)
        })
        .collect()
}

/// The negative part of the gap is nonincreasing across checkpoints, or each
/// later shortfall stays inside `C·ln N / N` fitted at the first checkpoint.
pub fn long_run_gap_acceptable(checkpoints: &[usize], gaps: &[f64]) -> bool {
    let neg: Vec<f64> = gaps.iter().map(|g| (-g).max(0.0)).collect();
    if neg.windows(2).all(|w| w[1] <= w[0] + GAP_TOL) {
        return true;
    }
    let n0 = checkpoints[0] as f64;
    let scale = neg[0] * n0 / n0.ln();
    checkpoints
        .iter()
        .zip(&neg)
        .all(|(&n, &p)| p <= scale * (n as f64).ln() / n as f64 + GAP_TOL)
}

pub const LONG_RUN_CHECKPOINTS: [usize; 3] = [100, 400, 1600];

fn long_run_replicate(seed: u64, r_floor: f64) -> Check {
    let inst = sweep_instance(seed, *LONG_RUN_CHECKPOINTS.last().unwrap(), r_floor);
    let schedule = GammaSchedule::BlockDecaying {
        gamma0: 0.5,
        block_len: 5,
    };
    let bcfg = lag1_config(UpdateRule::Iitc, schedule, inst.c);
    let gaps = long_run_gaps(&inst.returns, &bcfg, &LONG_RUN_CHECKPOINTS)?;
    if long_run_gap_acceptable(&LONG_RUN_CHECKPOINTS, &gaps) {
        Ok(())
    } else {
        Err(format!("gaps at {LONG_RUN_CHECKPOINTS:?}: {gaps:?}"))
    }
}

fn universality_suite(cfg: &VerifyConfig) -> Vec<CriterionResult> {
    let seeds: Vec<u64> = (0..cfg.replicates as u64).map(|r| cfg.seed.wrapping_add(r)).collect();
    let outcomes: Vec<SweepOutcome> = seeds.par_iter().map(|&s| sweep_replicate(s, cfg)).collect();
    let long_run: Vec<Check> = seeds.par_iter().map(|&s| long_run_replicate(s, cfg.r_floor)).collect();
    let worst = outcomes.iter().map(|o| o.worst_margin).fold(f64::INFINITY, f64::min);
    let gaps: Vec<Check> = outcomes.iter().map(|o| o.gap.clone()).collect();
    let costs: Vec<Check> = outcomes.iter().map(|o| o.cost.clone()).collect();
    let ledgers: Vec<Check> = outcomes.iter().map(|o| o.ledger.clone()).collect();
    vec![
        summarize_checks(
            "universality gap",
            &seeds,
            &gaps,
            format!("{} markets, both rules, every pair; smallest margin {worst:.3e}", seeds.len()),
        ),
        summarize_checks("cost-ratio bound", &seeds, &costs, "every realized c_k within bound".into()),
        summarize_checks("ledger integrity (sweep)", &seeds, &ledgers, "capital identities hold".into()),
        summarize_checks(
            "long-run gap",
            &seeds,
            &long_run,
            format!("checkpoints {LONG_RUN_CHECKPOINTS:?} under block-decaying gamma"),
        ),
    ]
}

/// Targets with the given same-class mass, split symmetrically.
pub fn same_class_targets(paa_pbb: f64) -> [f64; 4] {
    let same = paa_pbb / 2.0;
    let cross = (1.0 - paa_pbb) / 2.0;
    [same, cross, cross, same]
}

/// Effectiveness ratio of a cross-rate backtest on a synthetic order
/// process, with the ledger integrity check of that run.
pub fn profitability_run(
    spec: &SyntheticOrderSpec,
    mpcr: MpcrMethod,
    mpo: MpoMethod,
) -> Result<(f64, Check), String> {
    let (returns, _) = generate_order_process(spec).map_err(|e| e.to_string())?;
    let bcfg = BacktestConfig {
        predictor: Predictor::CrossRate(PredictorConfig {
            mpcr,
            mpo,
            adjusted: false,
            segment: SegmentConfig {
                len: spec.segment_len,
                ..SegmentConfig::default()
            },
        }),
        ..BacktestConfig::default()
    };
    let ledger = run_backtest_on_returns(&returns, &bcfg).map_err(|e| e.to_string())?;
    let eta = summarize(&ledger, spec.segment_len)
        .map_err(|e| e.to_string())?
        .eta
        .ok_or("fewer than two segments")?;
    Ok((eta, check_ledger_integrity(&ledger)))
}

fn profitability_suite(cfg: &VerifyConfig) -> Vec<CriterionResult> {
    let scenarios = [
        ("profitability MPCR1", same_class_targets(cfg.paa_pbb), MpcrMethod::Mpcr1, cfg.paa_pbb - cfg.eta_slack),
        ("profitability MPCR2", same_class_targets(1.0 - cfg.pab_pba), MpcrMethod::Mpcr2, 0.5 - cfg.eta_slack),
    ];
    let seeds: Vec<u64> = (0..cfg.replicates as u64).map(|r| cfg.seed.wrapping_add(r)).collect();
    let mut results = Vec::new();
    let mut ledger_checks: Vec<Check> = vec![Ok(()); seeds.len()];
    for (name, targets, mpcr, threshold) in scenarios {
        let runs: Vec<Result<(f64, Check), String>> = seeds
            .par_iter()
            .map(|&seed| {
                let spec = SyntheticOrderSpec {
                    segments: cfg.segments,
                    segment_len: cfg.segment_len,
                    targets,
                    dependence_gap: 4,
                    seed,
                    m: 2,
                };
                profitability_run(&spec, mpcr, cfg.mpo)
            })
            .collect();
        let mut etas = Vec::new();
        let checks: Vec<Check> = runs
            .iter()
            .zip(ledger_checks.iter_mut())
            .map(|(run, ledger)| match run {
                Ok((eta, integrity)) => {
                    etas.push(*eta);
                    if ledger.is_ok() {
                        *ledger = integrity.clone();
                    }
                    if *eta >= threshold {
                        Ok(())
                    } else {
                        Err(format!("eta {eta:.4} < {threshold:.4}"))
                    }
                }
                Err(e) => Err(e.clone()),
            })
            .collect();
        let min_eta = etas.iter().copied().fold(f64::INFINITY, f64::min);
        results.push(summarize_checks(
            name,
            &seeds,
            &checks,
            format!("eta_hat = {min_eta:.4} >= {threshold:.4} ({} segments, {})", cfg.segments, cfg.mpo),
        ));
    }
    results.push(summarize_checks(
        "ledger integrity (profitability)",
        &seeds,
        &ledger_checks,
        "capital identities hold".into(),
    ));
    results
}

fn random_portfolio(rng: &mut impl Rng, day: usize, m: usize) -> PortfolioMatrix {
    let mut g = Grid::zeros(m);
    for (i, j) in Grid::off_diagonal(m) {
        if rng.random::<f64>() < 0.8 {
            g[(i, j)] = rng.random::<f64>();
        }
    }
    if g.sum() == 0.0 {
        g[(0, 1)] = 1.0;
    }
    PortfolioMatrix::normalized(day, g).expect("nonnegative weights with positive total")
}

/// Root of the strictly decreasing `t ↦ c·Σ|a − t·b| − t` by bisection.
fn bisect_cost(f_k: f64, holdings: &Grid, target: &PortfolioMatrix, c: f64) -> f64 {
    let w = target.weights();
    let h = |t: f64| {
        c * Grid::off_diagonal(w.dim())
            .map(|p| ((f_k - t) * w[p] - holdings[p]).abs())
            .sum::<f64>()
            - t
    };
    let (mut lo, mut hi) = (0.0, f_k);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn cost_replicate(seed: u64, solves: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for n in 0..solves {
        let m = [2, 3, 4, 6][rng.random_range(0..4)];
        let c = rng.random_range(0.0..=0.05);
        let f_k = rng.random_range(0.1..10.0);
        let realized = random_portfolio(&mut rng, 1, m);
        let next = random_portfolio(&mut rng, 2, m);
        let holdings = realized.weights().map(|x| f_k * x);
        let t = solve_rebalancing_cost(f_k, &holdings, &next, &CostParams::with_rate(c))
            .map_err(|e| format!("solve {n}: {e}"))?;
        let d = delta(&next, &realized, f_k).map_err(|e| e.to_string())?;
        let (lo, hi) = cost_bounds(d, c).map_err(|e| e.to_string())?;
        if t < lo - 1e-9 || t > hi + 1e-9 {
            return Err(format!("solve {n}: T = {t} outside [{lo}, {hi}]"));
        }
        let reference = bisect_cost(f_k, &holdings, &next, c);
        if (t - reference).abs() > 1e-8 {
            return Err(format!("solve {n}: T = {t} but bisection gives {reference}"));
        }
    }
    Ok(())
}

fn cost_bound_suite(cfg: &VerifyConfig) -> Vec<CriterionResult> {
    let seeds: Vec<u64> = (0..cfg.replicates as u64).map(|r| cfg.seed.wrapping_add(r)).collect();
    let checks: Vec<Check> = seeds
        .par_iter()
        .map(|&s| cost_replicate(s, cfg.solves_per_replicate))
        .collect();
    vec![summarize_checks(
        "cost sandwich",
        &seeds,
        &checks,
        format!("{} fixed-point solves inside bounds and matching bisection", seeds.len() * cfg.solves_per_replicate),
    )]
}
