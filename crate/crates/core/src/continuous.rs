//! Long-only mean-variance weights on the probability simplex, found by
//! projected gradient descent, plus the budget-rounding bridge to lots.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::market::MarketStats;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const MAX_ITERATIONS: u64 = 100_000;

/// Optimal weights for one risk-aversion setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSolution {
    pub weights: Vec<f64>,
    pub risk_aversion: f64,
    pub utility: f64,
    pub iterations: u64,
    pub residual: f64,
}

/// Integer lots obtained by rounding budgeted weights to whole positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundedAllocation {
    pub lots: Vec<u64>,
    pub spent: f64,
    pub budget: f64,
    /// spent − budget; positive when rounding overshoots the budget.
    pub violation: f64,
}

impl RoundedAllocation {
    pub fn total_lots(&self) -> u64 {
        self.lots.iter().sum()
    }
}

/// (φ_c/2)·xᵀΣx − rᵀx. No feasibility requirement on x; probes off the
/// simplex (zero vector, single coordinates) are legitimate inputs.
pub fn utility_continuous(x: &[f64], stats: &MarketStats, phi_c: f64) -> Result<f64> {
    if x.len() != stats.num_assets() {
        return Err(Error::Dimension(format!(
            "{} weights for {} assets",
            x.len(),
            stats.num_assets()
        )));
    }
    Ok(0.5 * phi_c * linalg::quad_form(&stats.covariance, x) - linalg::dot(&stats.returns, x))
}

/// Exact Euclidean projection onto {x ≥ 0, Σx = 1} by the sort-and-threshold
/// rule: find the largest support whose shifted entries stay positive.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut threshold = sorted[0] - 1.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (j + 1) as f64;
        if u > candidate {
            threshold = candidate;
        }
    }
    v.iter().map(|&x| (x - threshold).max(0.0)).collect()
}

/// Minimizes (φ_c/2)xᵀΣx − rᵀx over the simplex by projected gradient
/// descent with fixed step 1/(φ_c·λ_max(Σ) + ε). The reported residual is
/// ‖x − P(x − ∇)‖₂, the projected-gradient stationarity measure.
pub fn solve_continuous(stats: &MarketStats, phi_c: f64, tol: f64) -> Result<ContinuousSolution> {
    stats.validate()?;
    if !phi_c.is_finite() || phi_c <= 0.0 {
        return Err(Error::Invalid(format!("risk aversion must be positive, got {phi_c}")));
    }
    if !tol.is_finite() || tol <= 0.0 {
        return Err(Error::Invalid(format!("tolerance must be positive, got {tol}")));
    }
    let k = stats.num_assets();
    let (_, lambda_max) = linalg::sym_eig_range(&stats.covariance);
    let step = 1.0 / (phi_c * lambda_max.max(0.0) + 1e-12);
    let mut x = vec![1.0 / k as f64; k];
    let mut residual = f64::INFINITY;
    for iteration in 0..=MAX_ITERATIONS {
        let mut gradient = linalg::mat_vec(&stats.covariance, &x);
        for (g, r) in gradient.iter_mut().zip(&stats.returns) {
            *g = phi_c * *g - r;
        }
        let probe: Vec<f64> = x.iter().zip(&gradient).map(|(xi, gi)| xi - gi).collect();
        let projected = project_to_simplex(&probe);
        residual = x
            .iter()
            .zip(&projected)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if residual <= tol {
            let utility = utility_continuous(&x, stats, phi_c)?;
            return Ok(ContinuousSolution {
                weights: x,
                risk_aversion: phi_c,
                utility,
                iterations: iteration,
                residual,
            });
        }
        if iteration == MAX_ITERATIONS {
            break;
        }
        let stepped: Vec<f64> = x
            .iter()
            .zip(&gradient)
            .map(|(xi, gi)| xi - step * gi)
            .collect();
        x = project_to_simplex(&stepped);
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
        residual,
        best: x,
    })
}

/// lots_i = round_half_even(B·w_i / p_i). Rounding can overshoot the budget;
/// the signed overshoot is reported, never hidden.
pub fn round_to_lots(weights: &[f64], stats: &MarketStats, budget: f64) -> Result<RoundedAllocation> {
    if weights.len() != stats.num_assets() {
        return Err(Error::Dimension(format!(
            "{} weights for {} assets",
            weights.len(),
            stats.num_assets()
        )));
    }
    if !budget.is_finite() || budget <= 0.0 {
        return Err(Error::Invalid(format!("budget must be positive, got {budget}")));
    }
    let mut lots = Vec::with_capacity(weights.len());
    for (i, (&w, &p)) in weights.iter().zip(&stats.prices).enumerate() {
        if !(0.0..=f64::INFINITY).contains(&w) {
            return Err(Error::Invalid(format!("weight {w} at index {i} is negative")));
        }
        if p <= 0.0 {
            return Err(Error::NonPositivePrice {
                ticker: format!("asset {i}"),
                date: "latest".into(),
                price: p,
            });
        }
        lots.push((budget * w / p).round_ties_even() as u64);
    }
    let spent: f64 = lots
        .iter()
        .zip(&stats.prices)
        .map(|(&l, &p)| l as f64 * p)
        .sum();
    Ok(RoundedAllocation {
        lots,
        spent,
        budget,
        violation: spent - budget,
    })
}
