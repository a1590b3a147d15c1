//! Command-line driver: `generate`, `backtest` and `verify`.
//!
//! Exit codes: 0 success, 1 I/O or data failure, 2 configuration error,
//! 3 verification failure.

use crate::backtest::metrics::summarize;
use crate::backtest::{run_backtest, run_backtest_on_returns, BacktestConfig, BacktestError, GammaSchedule, Predictor};
use crate::cost::CostParams;
use crate::data_io::ledger_io::{read_order_process, write_ledger_jsonl, write_order_process, write_summary_csv};
use crate::data_io::rates_csv::{load_rates, write_rates};
use crate::data_io::synth::{generate_market, generate_order_process, SyntheticMarketSpec, SyntheticOrderSpec};
use crate::data_io::DataError;
use crate::predictor::{MpcrMethod, MpoMethod, PredictorConfig, SegmentConfig};
use crate::update::UpdateRule;
use crate::verify::{run_suite, Suite, VerifyConfig, VerifyError};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fxfolio", version, about = "FX portfolio backtesting and verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic rates file or order-process file.
    Generate(GenerateArgs),
    /// Run the on-line strategy over a rates or order-process file.
    Backtest(BacktestArgs),
    /// Run a Monte Carlo verification suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("kind").required(true).args(["market", "orders"])))]
pub struct GenerateArgs {
    /// Generate a rates CSV.
    #[arg(long)]
    pub market: bool,
    /// Generate an order-process JSON-lines file.
    #[arg(long)]
    pub orders: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Currency count.
    #[arg(long, default_value_t = 3)]
    pub m: usize,
    #[arg(long, default_value_t = 250)]
    pub days: usize,
    #[arg(long, default_value_t = 0.001)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.0)]
    pub drift: f64,
    #[arg(long, default_value_t = 0.01)]
    pub vol: f64,
    /// Keep every ask-side return active so returns can be rescaled onto [r_floor, 1].
    #[arg(long)]
    pub normalize: bool,
    #[arg(long, default_value_t = 0.5)]
    pub r_floor: f64,
    #[arg(long, default_value_t = 1000)]
    pub segments: usize,
    /// Segment length.
    #[arg(long = "L", default_value_t = 5)]
    pub segment_len: usize,
    /// Transition masses AA,AB,BA,BB.
    #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.25, 0.25, 0.25])]
    pub targets: Vec<f64>,
    /// Segments per independent block.
    #[arg(long = "K", default_value_t = 4)]
    pub dependence_gap: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PredictorKind {
    CrossRate,
    Lag1,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["input", "order_input"])))]
pub struct BacktestArgs {
    /// Rates CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Order-process JSON-lines file.
    #[arg(long = "orders")]
    pub order_input: Option<PathBuf>,
    #[arg(long, default_value = "ledger.jsonl")]
    pub ledger: PathBuf,
    #[arg(long, default_value = "summary.csv")]
    pub summary: PathBuf,
    #[arg(long, value_enum, default_value_t = UpdateRule::Iitc)]
    pub rule: UpdateRule,
    #[arg(long, default_value_t = 0.1)]
    pub gamma: f64,
    /// Switch to gamma/i on blocks of i·l days.
    #[arg(long)]
    pub gamma_block_len: Option<usize>,
    #[arg(long, value_enum, default_value_t = PredictorKind::CrossRate)]
    pub predictor: PredictorKind,
    #[arg(long, value_enum, default_value_t = MpcrMethod::Mpcr1)]
    pub mpcr: MpcrMethod,
    #[arg(long, value_enum, default_value_t = MpoMethod::Mpo1)]
    pub mpo: MpoMethod,
    /// Skip undetermined days when counting crosses.
    #[arg(long)]
    pub adjusted: bool,
    #[arg(long = "L", default_value_t = 5)]
    pub segment_len: usize,
    #[arg(long, default_value_t = 0.25)]
    pub c_a: f64,
    #[arg(long, default_value_t = 0.75)]
    pub c_b: f64,
    /// Proportional transaction cost rate.
    #[arg(long, default_value_t = 0.0)]
    pub cost: f64,
    #[arg(long, default_value_t = 0.0)]
    pub support_floor: f64,
    #[arg(long, default_value_t = 1.0)]
    pub f0: f64,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    pub suite: Suite,
    #[arg(long, default_value_t = 10)]
    pub replicates: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, env = "FXFOLIO_JOBS")]
    pub jobs: Option<usize>,
    #[arg(long, default_value_t = 250)]
    pub days: usize,
    #[arg(long, default_value_t = 0.5)]
    pub r_floor: f64,
    #[arg(long, default_value_t = 20_000)]
    pub segments: usize,
    #[arg(long = "L", default_value_t = 5)]
    pub segment_len: usize,
    #[arg(long, default_value_t = 0.78)]
    pub paa_pbb: f64,
    #[arg(long, default_value_t = 0.6)]
    pub pab_pba: f64,
    #[arg(long, value_enum, default_value_t = MpoMethod::Mpo1)]
    pub mpo: MpoMethod,
    #[arg(long, default_value_t = 100)]
    pub solves: usize,
}

/// Failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl ToString) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.to_string(),
        }
    }

    fn io(message: impl ToString) -> Self {
        Self {
            code: EXIT_IO,
            message: message.to_string(),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::InvalidSpec(_) | DataError::InfeasibleTargets(_) => CliError::config(e),
            _ => CliError::io(e),
        }
    }
}

impl From<BacktestError> for CliError {
    fn from(e: BacktestError) -> Self {
        match e {
            BacktestError::InvalidConfig(_) | BacktestError::InvalidBlockUnit { .. } => CliError::config(e),
            _ => CliError::io(e),
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::InvalidConfig(_) => CliError::config(e),
            VerifyError::Pool(_) => CliError::io(e),
        }
    }
}

fn print_config(out: &mut impl Write, name: &str, value: &impl Serialize) -> Result<(), CliError> {
    let json = serde_json::to_string(value).map_err(CliError::io)?;
    writeln!(out, "config {name} {json}").map_err(CliError::io)
}

fn cmd_generate(args: &GenerateArgs, out: &mut impl Write) -> Result<(), CliError> {
    if args.market {
        let spec = SyntheticMarketSpec {
            m: args.m,
            days: args.days,
            seed: args.seed,
            spread_epsilon: args.epsilon,
            drift: args.drift,
            vol: args.vol,
            normalize: args.normalize,
            r_floor: args.r_floor,
        };
        print_config(out, "generate-market", &spec)?;
        let quotes = generate_market(&spec)?;
        write_rates(&args.out, &quotes)?;
        writeln!(out, "wrote {} days to {}", quotes.len(), args.out.display()).map_err(CliError::io)?;
    } else {
        let targets: [f64; 4] = args
            .targets
            .as_slice()
            .try_into()
            .map_err(|_| CliError::config("--targets needs four masses"))?;
        let spec = SyntheticOrderSpec {
            segments: args.segments,
            segment_len: args.segment_len,
            targets,
            dependence_gap: args.dependence_gap,
            seed: args.seed,
            m: args.m,
        };
        print_config(out, "generate-orders", &spec)?;
        let (returns, orders) = generate_order_process(&spec)?;
        write_order_process(&args.out, &returns, &orders)?;
        writeln!(out, "wrote {} days to {}", returns.len(), args.out.display()).map_err(CliError::io)?;
    }
    Ok(())
}

fn backtest_config(args: &BacktestArgs) -> BacktestConfig {
    let predictor = match args.predictor {
        PredictorKind::CrossRate => Predictor::CrossRate(PredictorConfig {
            mpcr: args.mpcr,
            mpo: args.mpo,
            adjusted: args.adjusted,
            segment: SegmentConfig {
                len: args.segment_len,
                c_a: args.c_a,
                c_b: args.c_b,
            },
        }),
        PredictorKind::Lag1 => Predictor::lag1(),
    };
    let gamma = match args.gamma_block_len {
        Some(block_len) => GammaSchedule::BlockDecaying {
            gamma0: args.gamma,
            block_len,
        },
        None => GammaSchedule::Constant(args.gamma),
    };
    BacktestConfig {
        predictor,
        rule: args.rule,
        gamma,
        support_floor: args.support_floor,
        costs: CostParams::with_rate(args.cost),
        f0: args.f0,
    }
}

fn cmd_backtest(args: &BacktestArgs, out: &mut impl Write) -> Result<(), CliError> {
    let cfg = backtest_config(args);
    print_config(out, "backtest", &cfg)?;
    cfg.validate()?;
    let ledger = match (&args.input, &args.order_input) {
        (Some(path), _) => run_backtest(&load_rates(path)?, &cfg)?,
        (None, Some(path)) => run_backtest_on_returns(&read_order_process(path)?.0, &cfg)?,
        (None, None) => return Err(CliError::config("one of --input or --orders is required")),
    };
    let summary = summarize(&ledger, cfg.segment_len())?;
    write_ledger_jsonl(&args.ledger, &ledger)?;
    write_summary_csv(&args.summary, &summary)?;
    let eta = summary.eta.map_or_else(|| "n/a".to_string(), |e| format!("{e:.6}"));
    writeln!(
        out,
        "days={} F_N/F_0={:.10} I_N={:.10} LI_N={:.10e} R_N={:.10e} eta={eta}",
        summary.days, summary.f_n, summary.i_n, summary.li_n, summary.r_n
    )
    .map_err(CliError::io)
}

fn cmd_verify(args: &VerifyArgs, out: &mut impl Write) -> Result<(), CliError> {
    let cfg = VerifyConfig {
        suite: args.suite,
        replicates: args.replicates,
        seed: args.seed,
        jobs: args.jobs,
        days: args.days,
        r_floor: args.r_floor,
        segments: args.segments,
        segment_len: args.segment_len,
        paa_pbb: args.paa_pbb,
        pab_pba: args.pab_pba,
        mpo: args.mpo,
        solves_per_replicate: args.solves,
        ..VerifyConfig::default()
    };
    print_config(out, "verify", &cfg)?;
    let report = run_suite(&cfg)?;
    for c in &report.criteria {
        writeln!(out, "{c}").map_err(CliError::io)?;
    }
    if report.all_passed() {
        Ok(())
    } else {
        let seed = report.criteria.iter().find_map(|c| c.failing_seed);
        Err(CliError {
            code: EXIT_VERIFY,
            message: match seed {
                Some(s) => format!("verification failed (seed {s})"),
                None => "verification failed".into(),
            },
        })
    }
}

/// Parses `args` and runs the command, writing results to `out` and errors
/// to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut impl Write, err: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = write!(if e.use_stderr() { err as &mut dyn Write } else { out as &mut dyn Write }, "{}", e.render());
            return code;
        }
    };
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a, out),
        Command::Backtest(a) => cmd_backtest(a, out),
        Command::Verify(a) => cmd_verify(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}
