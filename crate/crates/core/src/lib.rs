//! Matrix-valued foreign-exchange portfolio selection.
//!
//! Quotes for `m` currencies are held as `m x m` rate matrices. Daily
//! price relatives, portfolios over ordered currency pairs, entropy-regularized
//! updates, proportional transaction costs and an order-based return predictor
//! combine into an on-line backtest with Monte Carlo verification tooling.

pub mod backtest;
pub mod cli;
pub mod cost;
pub mod data_io;
pub mod grid;
pub mod market;
pub mod portfolio;
pub mod predictor;
pub mod update;
pub mod verify;
