//! Dense square `m x m` grid of `f64`, row-major.
//!
//! Every matrix-valued quantity in the crate (rates, returns, portfolios)
//! wraps one of these and layers its own invariants on top.

use serde::{Deserialize, Serialize};
use std::ops::{Index, IndexMut};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    m: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(m: usize) -> Self {
        Self {
            m,
            data: vec![0.0; m * m],
        }
    }

    pub fn filled(m: usize, value: f64) -> Self {
        Self {
            m,
            data: vec![value; m * m],
        }
    }

    /// Builds a grid from nested rows. Returns `None` unless the rows form a
    /// non-empty square.
    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let m = rows.len();
        if m == 0 || rows.iter().any(|r| r.len() != m) {
            return None;
        }
        Some(Self {
            m,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    /// Builds a grid from a row-major flat vector of length `m * m`.
    pub fn from_flat(m: usize, data: Vec<f64>) -> Option<Self> {
        (m > 0 && data.len() == m * m).then_some(Self { m, data })
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.m).map(<[f64]>::to_vec).collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.m + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.m + j] = value;
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.m);
        for i in 0..self.m {
            for j in 0..self.m {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    /// Iterator over off-diagonal positions `(i, j)`, row-major.
    pub fn off_diagonal(m: usize) -> impl Iterator<Item = (usize, usize)> {
        (0..m).flat_map(move |i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            m: self.m,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Option<Self> {
        (self.m == other.m).then(|| Self {
            m: self.m,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }
}

impl Index<(usize, usize)> for Grid {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.m + j]
    }
}

impl IndexMut<(usize, usize)> for Grid {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.m + j]
    }
}
