//! The integer-lot mean-variance problem: objective, rescaling bridge to
//! the continuous scale, feasibility checks, counting of the search space,
//! and portfolio metrics in volatility-return coordinates.

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esg::d_esg_stocks;
use crate::linalg;
use crate::market::{EsgTable, MarketStats};

/// Upper bound on the portfolio's score distance, with the order of the
/// distance and the table it is measured against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EsgConstraint {
    pub max_distance: f64,
    pub order: f64,
    pub table: EsgTable,
}

/// Allocation of `n_tot` lots across assets minimizing
/// (φ_c/(2·N_tot))·xᵀΣx − rᵀx, optionally under a budget cap pᵀx ≤ B and a
/// score-distance cap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteProblem {
    pub stats: MarketStats,
    pub phi_c: f64,
    pub n_tot: u64,
    pub budget: Option<f64>,
    pub esg: Option<EsgConstraint>,
}

impl DiscreteProblem {
    pub fn new(
        stats: MarketStats,
        phi_c: f64,
        n_tot: u64,
        budget: Option<f64>,
        esg: Option<EsgConstraint>,
    ) -> Result<Self> {
        stats.validate()?;
        if !phi_c.is_finite() || phi_c <= 0.0 {
            return Err(Error::Invalid(format!(
                "risk aversion must be positive, got {phi_c}"
            )));
        }
        if n_tot == 0 {
            return Err(Error::Invalid("total lot count must be positive".into()));
        }
        if let Some(b) = budget {
            if !b.is_finite() || b <= 0.0 {
                return Err(Error::Invalid(format!("budget must be positive, got {b}")));
            }
        }
        if let Some(c) = &esg {
            if !c.max_distance.is_finite() || c.max_distance < 0.0 {
                return Err(Error::Invalid(format!(
                    "distance cap must be non-negative, got {}",
                    c.max_distance
                )));
            }
            if !c.order.is_finite() || c.order < 1.0 {
                return Err(Error::Invalid(format!(
                    "distance order must be >= 1, got {}",
                    c.order
                )));
            }
            if c.table.len() != stats.num_assets() {
                return Err(Error::Dimension(format!(
                    "{} scored assets for {} priced assets",
                    c.table.len(),
                    stats.num_assets()
                )));
            }
            c.table.uniform_scale()?;
        }
        Ok(Self {
            stats,
            phi_c,
            n_tot,
            budget,
            esg,
        })
    }

    pub fn k(&self) -> usize {
        self.stats.num_assets()
    }

    /// Risk aversion on the per-lot scale.
    pub fn phi_d(&self) -> f64 {
        self.phi_c / self.n_tot as f64
    }
}

/// Feasibility of one allocation, constraint by constraint. Infeasibility
/// is data, not an error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// Σ lots − N_tot.
    pub lot_sum_residual: i64,
    pub spent: f64,
    /// B − pᵀx when a budget is set; negative means overspent.
    pub budget_slack: Option<f64>,
    /// Measured distance; absent when no cap is set or lots are off-count.
    pub esg_distance: Option<f64>,
    /// D − D_ESG when a cap is set; negative means the cap is exceeded.
    pub esg_slack: Option<f64>,
}

impl FeasibilityReport {
    pub fn lot_sum_ok(&self) -> bool {
        self.lot_sum_residual == 0
    }

    pub fn budget_ok(&self) -> bool {
        self.budget_slack.is_none_or(|s| s >= 0.0)
    }

    pub fn esg_ok(&self, cap_present: bool) -> bool {
        match self.esg_slack {
            Some(s) => s >= 0.0,
            None => !cap_present,
        }
    }

    pub fn feasible(&self, problem: &DiscreteProblem) -> bool {
        self.lot_sum_ok() && self.budget_ok() && self.esg_ok(problem.esg.is_some())
    }
}

/// φ_d = φ_c / N_tot: the risk aversion that makes lot-space optimization
/// agree with weight-space optimization at portfolio size N_tot.
pub fn rescale_phi(phi_c: f64, n_tot: u64) -> Result<f64> {
    if !phi_c.is_finite() || phi_c <= 0.0 {
        return Err(Error::Invalid(format!(
            "risk aversion must be positive, got {phi_c}"
        )));
    }
    if n_tot == 0 {
        return Err(Error::Invalid("total lot count must be positive".into()));
    }
    Ok(phi_c / n_tot as f64)
}

/// Objective on raw lots with no feasibility checks. Callers that have not
/// already validated the allocation should use [`utility_discrete`].
pub fn utility_discrete_unchecked(lots: &[u64], stats: &MarketStats, phi_c: f64, n_tot: u64) -> f64 {
    let x: Vec<f64> = lots.iter().map(|&l| l as f64).collect();
    0.5 * phi_c / n_tot as f64 * linalg::quad_form(&stats.covariance, &x)
        - linalg::dot(&stats.returns, &x)
}

/// (φ_c/(2·N_tot))·xᵀΣx − rᵀx on raw integer lots.
pub fn utility_discrete(lots: &[u64], problem: &DiscreteProblem) -> Result<f64> {
    if lots.len() != problem.k() {
        return Err(Error::Dimension(format!(
            "{} lots for {} assets",
            lots.len(),
            problem.k()
        )));
    }
    let sum: u64 = lots.iter().sum();
    if sum != problem.n_tot {
        return Err(Error::Invalid(format!(
            "lots sum to {sum}, expected {}",
            problem.n_tot
        )));
    }
    Ok(utility_discrete_unchecked(
        lots,
        &problem.stats,
        problem.phi_c,
        problem.n_tot,
    ))
}

/// Relative weights x / N_tot.
pub fn naive_weights(lots: &[u64], n_tot: u64) -> Result<Vec<f64>> {
    if n_tot == 0 {
        return Err(Error::Invalid("total lot count must be positive".into()));
    }
    Ok(lots.iter().map(|&l| l as f64 / n_tot as f64).collect())
}

/// Volatility-return coordinates of a weight vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortfolioPoint {
    pub volatility: f64,
    pub expected_return: f64,
}

/// (√(wᵀΣw), rᵀw). A slightly negative radicand from round-off is clamped
/// to zero; anything below −1e-12 signals a broken covariance.
pub fn portfolio_point(weights: &[f64], stats: &MarketStats) -> Result<PortfolioPoint> {
    if weights.len() != stats.num_assets() {
        return Err(Error::Dimension(format!(
            "{} weights for {} assets",
            weights.len(),
            stats.num_assets()
        )));
    }
    let radicand = linalg::quad_form(&stats.covariance, weights);
    if radicand < -1e-12 {
        return Err(Error::NotPsd(radicand));
    }
    Ok(PortfolioPoint {
        volatility: radicand.max(0.0).sqrt(),
        expected_return: linalg::dot(&stats.returns, weights),
    })
}

fn binomial(n: u64, r: u64) -> BigUint {
    if r > n {
        return BigUint::ZERO;
    }
    let r = r.min(n - r);
    let mut result = BigUint::from(1u32);
    for i in 1..=r {
        result = result * BigUint::from(n - r + i) / BigUint::from(i);
    }
    result
}

/// C(n+k−1, k). This is the count commonly printed in reports of the search
/// space size; the enumeration oracle is sized by [`count_compositions`].
pub fn count_combinations(n: u64, k: u64) -> BigUint {
    binomial(n + k - 1, k)
}

/// C(N_tot+k−1, k−1): the exact number of non-negative integer vectors of
/// length k summing to N_tot.
pub fn count_compositions(n_tot: u64, k: u64) -> BigUint {
    if k == 0 {
        return if n_tot == 0 {
            BigUint::from(1u32)
        } else {
            BigUint::ZERO
        };
    }
    binomial(n_tot + k - 1, k - 1)
}

/// Uniform draw from the compositions of `n_tot` over `k` assets, by
/// sampling k−1 distinct bar positions among n_tot+k−1 slots (Floyd's
/// algorithm keeps it O(k log k) regardless of n_tot).
pub(crate) fn sample_composition<R: rand::Rng + ?Sized>(
    rng: &mut R,
    n_tot: u64,
    k: usize,
) -> Vec<u64> {
    if k <= 1 {
        return vec![n_tot];
    }
    let total = n_tot + k as u64 - 1;
    let bars = k as u64 - 1;
    let mut chosen = std::collections::BTreeSet::new();
    for i in (total - bars)..total {
        let candidate = rng.random_range(0..=i);
        if !chosen.insert(candidate) {
            chosen.insert(i);
        }
    }
    let mut lots = Vec::with_capacity(k);
    let mut previous: i128 = -1;
    for &bar in &chosen {
        lots.push((bar as i128 - previous - 1) as u64);
        previous = bar as i128;
    }
    lots.push((total as i128 - 1 - previous) as u64);
    lots
}

/// Evaluates every constraint of `problem` at `lots` and reports residuals.
pub fn check_feasible(lots: &[u64], problem: &DiscreteProblem) -> Result<FeasibilityReport> {
    if lots.len() != problem.k() {
        return Err(Error::Dimension(format!(
            "{} lots for {} assets",
            lots.len(),
            problem.k()
        )));
    }
    let sum: u64 = lots.iter().sum();
    let lot_sum_residual = sum as i64 - problem.n_tot as i64;
    let spent: f64 = lots
        .iter()
        .zip(&problem.stats.prices)
        .map(|(&l, &p)| l as f64 * p)
        .sum();
    let budget_slack = problem.budget.map(|b| b - spent);
    let (esg_distance, esg_slack) = match &problem.esg {
        Some(cap) if sum == problem.n_tot => {
            let d = d_esg_stocks(lots, problem.n_tot, &cap.table, cap.order)?;
            (Some(d), Some(cap.max_distance - d))
        }
        _ => (None, None),
    };
    Ok(FeasibilityReport {
        lot_sum_residual,
        spent,
        budget_slack,
        esg_distance,
        esg_slack,
    })
}
