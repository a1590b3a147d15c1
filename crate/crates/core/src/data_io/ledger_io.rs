//! Ledger JSON lines, run summaries and order-process files.
//!
//! Floats are written in shortest round-trip form, so read-back is exact.

use super::DataError;
use crate::backtest::metrics::Summary;
use crate::backtest::{BacktestLedger, DayRecord};
use crate::grid::Grid;
use crate::market::ReturnMatrix;
use crate::portfolio::PortfolioMatrix;
use crate::predictor::OrderLabel;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
struct LedgerLine {
    day: usize,
    #[serde(rename = "F")]
    f: f64,
    #[serde(rename = "Fp")]
    f_prime: f64,
    #[serde(rename = "T")]
    t: f64,
    c: f64,
    diamond: f64,
    order_actual: OrderLabel,
    order_pred: Option<OrderLabel>,
    gamma: f64,
    parked: bool,
    pred_reversed: bool,
    used_prior_segment: bool,
    m: usize,
    psi: Vec<f64>,
    psi_realized: Vec<f64>,
    psi_next: Vec<f64>,
    r_actual: Vec<f64>,
    r_pred: Option<Vec<f64>>,
}

impl From<&DayRecord> for LedgerLine {
    fn from(r: &DayRecord) -> Self {
        Self {
            day: r.day,
            f: r.f,
            f_prime: r.f_prime,
            t: r.t,
            c: r.c,
            diamond: r.diamond,
            order_actual: r.order_actual,
            order_pred: r.order_pred,
            gamma: r.gamma,
            parked: r.parked,
            pred_reversed: r.pred_reversed,
            used_prior_segment: r.used_prior_segment,
            m: r.dim(),
            psi: r.psi.weights().as_flat().to_vec(),
            psi_realized: r.psi_realized.weights().as_flat().to_vec(),
            psi_next: r.psi_next.weights().as_flat().to_vec(),
            r_actual: r.r_actual.entries().as_flat().to_vec(),
            r_pred: r.r_pred.as_ref().map(|p| p.entries().as_flat().to_vec()),
        }
    }
}

impl LedgerLine {
    fn into_record(self, line: u64) -> Result<DayRecord, DataError> {
        let m = self.m;
        let day = self.day;
        let grid = |v: Vec<f64>, field: &str| {
            Grid::from_flat(m, v).ok_or_else(|| DataError::parse(line, 0, format!("{field} must have m*m entries")))
        };
        let bad = |field: &str, e: String| DataError::parse(line, 0, format!("{field}: {e}"));
        let portfolio = |v, d, field: &str| {
            PortfolioMatrix::new(d, grid(v, field)?).map_err(|e| bad(field, e.to_string()))
        };
        let returns = |v, d, field: &str| ReturnMatrix::new(d, grid(v, field)?).map_err(|e| bad(field, e.to_string()));
        Ok(DayRecord {
            day,
            f: self.f,
            f_prime: self.f_prime,
            t: self.t,
            c: self.c,
            diamond: self.diamond,
            parked: self.parked,
            psi: portfolio(self.psi, day, "psi")?,
            psi_realized: portfolio(self.psi_realized, day, "psi_realized")?,
            psi_next: portfolio(self.psi_next, day + 1, "psi_next")?,
            r_actual: returns(self.r_actual, day, "r_actual")?,
            r_pred: self.r_pred.map(|v| returns(v, day, "r_pred")).transpose()?,
            order_actual: self.order_actual,
            order_pred: self.order_pred,
            pred_reversed: self.pred_reversed,
            used_prior_segment: self.used_prior_segment,
            gamma: self.gamma,
        })
    }
}

pub fn write_ledger_jsonl(path: &Path, ledger: &BacktestLedger) -> Result<(), DataError> {
    if ledger.is_empty() {
        return Err(DataError::EmptyLedger);
    }
    let file = File::create(path).map_err(DataError::io(path))?;
    write_ledger_to(BufWriter::new(file), ledger).map_err(DataError::io(path))
}

pub fn write_ledger_to(mut writer: impl Write, ledger: &BacktestLedger) -> std::io::Result<()> {
    for rec in &ledger.records {
        serde_json::to_writer(&mut writer, &LedgerLine::from(rec))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn read_ledger_jsonl(path: &Path) -> Result<BacktestLedger, DataError> {
    let file = File::open(path).map_err(DataError::io(path))?;
    read_ledger_from(BufReader::new(file), path)
}

fn read_ledger_from(reader: impl BufRead, path: &Path) -> Result<BacktestLedger, DataError> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(DataError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let n = idx as u64 + 1;
        let parsed: LedgerLine =
            serde_json::from_str(&line).map_err(|e| DataError::parse(n, e.column() as u64, e.to_string()))?;
        records.push(parsed.into_record(n)?);
    }
    Ok(BacktestLedger { records })
}

const SUMMARY_HEADER: [&str; 7] = ["days", "final_capital", "I_N", "LI_N", "F_N", "R_N", "eta"];

fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_summary_csv(path: &Path, summary: &Summary) -> Result<(), DataError> {
    let file = File::create(path).map_err(DataError::io(path))?;
    write_summary_to(BufWriter::new(file), summary).map_err(DataError::io(path))
}

pub fn write_summary_to(writer: impl Write, summary: &Summary) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(SUMMARY_HEADER)?;
    wtr.write_record([
        summary.days.to_string(),
        sci(summary.final_capital),
        sci(summary.i_n),
        sci(summary.li_n),
        sci(summary.f_n),
        sci(summary.r_n),
        summary.eta.map(sci).unwrap_or_default(),
    ])?;
    wtr.flush()
}

#[derive(Debug, Serialize, Deserialize)]
struct OrderLine {
    day: usize,
    order: OrderLabel,
    m: usize,
    r: Vec<f64>,
}

pub fn write_order_process(path: &Path, returns: &[ReturnMatrix], orders: &[OrderLabel]) -> Result<(), DataError> {
    let file = File::create(path).map_err(DataError::io(path))?;
    let mut w = BufWriter::new(file);
    let result: std::io::Result<()> = (|| {
        for (idx, (r, &order)) in returns.iter().zip(orders).enumerate() {
            let line = OrderLine {
                day: idx + 1,
                order,
                m: r.dim(),
                r: r.entries().as_flat().to_vec(),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    })();
    result.map_err(DataError::io(path))
}

pub fn read_order_process(path: &Path) -> Result<(Vec<ReturnMatrix>, Vec<OrderLabel>), DataError> {
    let file = File::open(path).map_err(DataError::io(path))?;
    let mut returns = Vec::new();
    let mut orders = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(DataError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let n = idx as u64 + 1;
        let parsed: OrderLine =
            serde_json::from_str(&line).map_err(|e| DataError::parse(n, e.column() as u64, e.to_string()))?;
        if parsed.day != returns.len() + 1 {
            return Err(DataError::NonMonotoneDays {
                prev: returns.len(),
                found: parsed.day,
            });
        }
        let grid = Grid::from_flat(parsed.m, parsed.r).ok_or_else(|| DataError::parse(n, 0, "r must have m*m entries"))?;
        let r = ReturnMatrix::new(parsed.day, grid).map_err(|source| DataError::Invariant {
            day: parsed.day,
            source,
        })?;
        returns.push(r);
        orders.push(parsed.order);
    }
    Ok((returns, orders))
}
