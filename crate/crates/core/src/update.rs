//! Entropy-regularized portfolio updates.
//!
//! Both rules tilt the realized portfolio multiplicatively toward positions
//! with high predicted return and renormalize. EIITC additionally scales the
//! exponent by the realized portfolio's predicted growth `ψ′ ⋄ R′`.

use crate::grid::Grid;
use crate::market::ReturnMatrix;
use crate::portfolio::{diamond, relative_entropy, uniform_portfolio, PortfolioError, PortfolioMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UpdateError {
    #[error("gamma must be finite and nonnegative, got {0}")]
    InvalidGamma(f64),
    #[error("support floor must lie in [0, 1), got {0}")]
    InvalidSupportFloor(f64),
    #[error("realized portfolio earns nothing under the predicted returns")]
    ZeroDiamond,
    #[error(transparent)]
    Portfolio(#[from] PortfolioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum UpdateRule {
    Iitc,
    Eiitc,
}

impl std::fmt::Display for UpdateRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            UpdateRule::Iitc => "iitc",
            UpdateRule::Eiitc => "eiitc",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateConfig {
    pub rule: UpdateRule,
    /// Weight of uniform mixed into every update; 0 keeps the closed forms verbatim.
    pub support_floor: f64,
}

impl Default for UpdateConfig {
    fn default() -> Self {
        Self {
            rule: UpdateRule::Iitc,
            support_floor: 0.0,
        }
    }
}

impl UpdateConfig {
    pub fn validate(&self) -> Result<(), UpdateError> {
        if !(0.0..1.0).contains(&self.support_floor) {
            return Err(UpdateError::InvalidSupportFloor(self.support_floor));
        }
        Ok(())
    }
}

fn check_gamma(gamma: f64) -> Result<(), UpdateError> {
    if gamma.is_finite() && gamma >= 0.0 {
        Ok(())
    } else {
        Err(UpdateError::InvalidGamma(gamma))
    }
}

fn check_dims(realized: &PortfolioMatrix, r_pred: &ReturnMatrix) -> Result<(), UpdateError> {
    if realized.dim() != r_pred.dim() {
        return Err(PortfolioError::DimensionMismatch {
            left: realized.dim(),
            right: r_pred.dim(),
        }
        .into());
    }
    Ok(())
}

/// `ψ′ ⊙ exp(scale · R′)`, renormalized, computed with the max exponent over
/// the support subtracted.
fn tilt(realized: &PortfolioMatrix, r_pred: &ReturnMatrix, scale: f64) -> PortfolioMatrix {
    let m = realized.dim();
    let w = realized.weights();
    let r = r_pred.entries();
    let shift = Grid::off_diagonal(m)
        .filter(|&(i, j)| w[(i, j)] > 0.0)
        .map(|(i, j)| scale * r[(i, j)])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out = Grid::zeros(m);
    for (i, j) in Grid::off_diagonal(m) {
        if w[(i, j)] > 0.0 {
            out[(i, j)] = w[(i, j)] * (scale * r[(i, j)] - shift).exp();
        }
    }
    PortfolioMatrix::normalized(realized.day(), out)
        .expect("tilted weights stay on the simplex")
}

pub fn iitc_update(
    realized: &PortfolioMatrix,
    r_pred: &ReturnMatrix,
    gamma: f64,
) -> Result<PortfolioMatrix, UpdateError> {
    check_gamma(gamma)?;
    check_dims(realized, r_pred)?;
    if gamma == 0.0 {
        return Ok(realized.clone());
    }
    Ok(tilt(realized, r_pred, gamma))
}

pub fn eiitc_update(
    realized: &PortfolioMatrix,
    r_pred: &ReturnMatrix,
    gamma: f64,
) -> Result<PortfolioMatrix, UpdateError> {
    check_gamma(gamma)?;
    check_dims(realized, r_pred)?;
    let growth = diamond(realized, r_pred)?;
    if growth <= 0.0 {
        return Err(UpdateError::ZeroDiamond);
    }
    if gamma == 0.0 {
        return Ok(realized.clone());
    }
    Ok(tilt(realized, r_pred, gamma / growth))
}

pub fn apply_update(
    rule: UpdateRule,
    realized: &PortfolioMatrix,
    r_pred: &ReturnMatrix,
    gamma: f64,
) -> Result<PortfolioMatrix, UpdateError> {
    match rule {
        UpdateRule::Iitc => iitc_update(realized, r_pred, gamma),
        UpdateRule::Eiitc => eiitc_update(realized, r_pred, gamma),
    }
}

/// `(1 − floor)·ψ + floor·uniform`.
pub fn mix_uniform(psi: &PortfolioMatrix, floor: f64) -> Result<PortfolioMatrix, UpdateError> {
    if !(0.0..1.0).contains(&floor) {
        return Err(UpdateError::InvalidSupportFloor(floor));
    }
    if floor == 0.0 {
        return Ok(psi.clone());
    }
    let u = uniform_portfolio(psi.day(), psi.dim())?;
    let mixed = psi
        .weights()
        .zip_with(u.weights(), |a, b| (1.0 - floor) * a + floor * b)
        .expect("same dimension");
    Ok(PortfolioMatrix::normalized(psi.day(), mixed)?)
}

/// Objective maximized by each rule.
///
/// IITC: `γ·(ψ ⋄ R′) − d_re(ψ, ψ′)`.
/// EIITC: `γ·[ln D + Σ R′(ψ − ψ′) / D] − d_re(ψ, ψ′)` with `D = ψ′ ⋄ R′`,
/// the first-order expansion of `γ·ln(ψ ⋄ R′)` around `ψ′`.
pub fn objective_value(
    rule: UpdateRule,
    psi_next: &PortfolioMatrix,
    realized: &PortfolioMatrix,
    r_pred: &ReturnMatrix,
    gamma: f64,
) -> Result<f64, UpdateError> {
    check_gamma(gamma)?;
    check_dims(realized, r_pred)?;
    let entropy = relative_entropy(psi_next, realized)?;
    match rule {
        UpdateRule::Iitc => Ok(gamma * diamond(psi_next, r_pred)? - entropy),
        UpdateRule::Eiitc => {
            let base = diamond(realized, r_pred)?;
            if base <= 0.0 {
                return Err(UpdateError::ZeroDiamond);
            }
            let r = r_pred.entries();
            let linear: f64 = Grid::off_diagonal(r.dim())
                .map(|(i, j)| r[(i, j)] * (psi_next.get(i, j) - realized.get(i, j)))
                .sum();
            Ok(gamma * (base.ln() + linear / base) - entropy)
        }
    }
}
