//! File formats and synthetic data.

pub mod ledger_io;
pub mod rates_csv;
pub mod synth;

use crate::market::MarketError;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: u64,
        message: String,
    },
    #[error("day {day}: {source}")]
    Invariant {
        day: usize,
        #[source]
        source: MarketError,
    },
    #[error("day {found} appears after day {prev}")]
    NonMonotoneDays { prev: usize, found: usize },
    #[error("day {day}: missing quote for pair ({i},{j})")]
    MissingEntry { day: usize, i: usize, j: usize },
    #[error("invalid generator settings: {0}")]
    InvalidSpec(String),
    #[error("infeasible transition targets: {0}")]
    InfeasibleTargets(String),
    #[error("refusing to write an empty ledger")]
    EmptyLedger,
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> DataError {
        let path = path.into();
        move |source| DataError::Io { path, source }
    }

    pub(crate) fn parse(line: u64, column: u64, message: impl Into<String>) -> DataError {
        DataError::Parse {
            line,
            column,
            message: message.into(),
        }
    }
}
