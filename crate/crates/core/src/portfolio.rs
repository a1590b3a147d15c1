//! Portfolio matrices and the products, distances and divergences defined on
//! them. Logarithms are natural.

use crate::grid::Grid;
use crate::market::ReturnMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the grand sum of a portfolio.
pub const SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PortfolioError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("portfolio needs m > 1 currencies, got {0}")]
    InvalidM(usize),
    #[error("portfolio diagonal ({i},{i}) must be 0")]
    NonZeroDiagonal { i: usize },
    #[error("portfolio weight ({i},{j}) must be finite and nonnegative")]
    NegativeWeight { i: usize, j: usize },
    #[error("portfolio weights sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("portfolio earns nothing on day {day}: no realized portfolio exists")]
    ZeroReturn { day: usize },
    #[error("weight at ({i},{j}) has no support in the base portfolio")]
    SupportViolation { i: usize, j: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioMatrix {
    day: usize,
    weights: Grid,
}

impl PortfolioMatrix {
    pub fn new(day: usize, weights: Grid) -> Result<Self, PortfolioError> {
        check_shape(&weights)?;
        let sum = weights.sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(PortfolioError::NotNormalized { sum });
        }
        Ok(Self { day, weights })
    }

    pub fn from_rows(day: usize, rows: &[Vec<f64>]) -> Result<Self, PortfolioError> {
        let grid = Grid::from_rows(rows).ok_or(PortfolioError::InvalidM(rows.len()))?;
        Self::new(day, grid)
    }

    /// Scales nonnegative weights so they sum to exactly 1.
    pub fn normalized(day: usize, weights: Grid) -> Result<Self, PortfolioError> {
        check_shape(&weights)?;
        let sum = weights.sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(PortfolioError::NotNormalized { sum });
        }
        Ok(Self {
            day,
            weights: weights.map(|w| w / sum),
        })
    }

    pub fn day(&self) -> usize {
        self.day
    }

    pub fn dim(&self) -> usize {
        self.weights.dim()
    }

    pub fn weights(&self) -> &Grid {
        &self.weights
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn with_day(&self, day: usize) -> Self {
        Self {
            day,
            weights: self.weights.clone(),
        }
    }

    /// Renormalized copy; absorbs rounding drift in the grand sum.
    pub fn renormalized(&self) -> Self {
        let sum = self.weights.sum();
        Self {
            day: self.day,
            weights: self.weights.map(|w| w / sum),
        }
    }
}

fn check_shape(weights: &Grid) -> Result<(), PortfolioError> {
    let m = weights.dim();
    if m < 2 {
        return Err(PortfolioError::InvalidM(m));
    }
    for i in 0..m {
        if weights[(i, i)] != 0.0 {
            return Err(PortfolioError::NonZeroDiagonal { i: i + 1 });
        }
    }
    for (i, j) in Grid::off_diagonal(m) {
        let w = weights[(i, j)];
        if !(w.is_finite() && w >= 0.0) {
            return Err(PortfolioError::NegativeWeight { i: i + 1, j: j + 1 });
        }
    }
    Ok(())
}

fn same_dim(a: usize, b: usize) -> Result<(), PortfolioError> {
    if a == b {
        Ok(())
    } else {
        Err(PortfolioError::DimensionMismatch { left: a, right: b })
    }
}

/// Entrywise product `A ⊠ B`.
pub fn boxtimes(a: &Grid, b: &Grid) -> Result<Grid, PortfolioError> {
    a.zip_with(b, |x, y| x * y)
        .ok_or(PortfolioError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        })
}

/// Grand sum of `ψ ⊠ R`: the day's gross growth factor.
pub fn diamond(psi: &PortfolioMatrix, r: &ReturnMatrix) -> Result<f64, PortfolioError> {
    Ok(boxtimes(psi.weights(), r.entries())?.sum())
}

/// Weights reached by letting `psi` drift through one day of returns.
pub fn realized_portfolio(
    psi: &PortfolioMatrix,
    r: &ReturnMatrix,
) -> Result<PortfolioMatrix, PortfolioError> {
    let grown = boxtimes(psi.weights(), r.entries())?;
    let growth = grown.sum();
    if growth <= 0.0 {
        return Err(PortfolioError::ZeroReturn { day: r.day() });
    }
    Ok(PortfolioMatrix {
        day: r.day(),
        weights: grown.map(|w| w / growth),
    })
}

pub fn l1_distance(a: &PortfolioMatrix, b: &PortfolioMatrix) -> Result<f64, PortfolioError> {
    same_dim(a.dim(), b.dim())?;
    Ok(a.weights
        .as_flat()
        .iter()
        .zip(b.weights.as_flat())
        .map(|(x, y)| (x - y).abs())
        .sum())
}

/// `Σ next·ln(next/base)` with `0·ln 0 = 0`.
pub fn relative_entropy(
    next: &PortfolioMatrix,
    base: &PortfolioMatrix,
) -> Result<f64, PortfolioError> {
    same_dim(next.dim(), base.dim())?;
    let mut total = 0.0;
    for (i, j) in Grid::off_diagonal(next.dim()) {
        let p = next.get(i, j);
        if p == 0.0 {
            continue;
        }
        let q = base.get(i, j);
        if q == 0.0 {
            return Err(PortfolioError::SupportViolation { i: i + 1, j: j + 1 });
        }
        total += p * (p / q).ln();
    }
    Ok(total.max(0.0))
}

pub fn uniform_portfolio(day: usize, m: usize) -> Result<PortfolioMatrix, PortfolioError> {
    if m < 2 {
        return Err(PortfolioError::InvalidM(m));
    }
    let w = 1.0 / (m * (m - 1)) as f64;
    let mut weights = Grid::filled(m, w);
    for i in 0..m {
        weights[(i, i)] = 0.0;
    }
    Ok(PortfolioMatrix { day, weights })
}
