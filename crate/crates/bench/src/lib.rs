//! Shared fixtures for the benchmark targets: deterministic random instances
//! sized so a single run finishes in milliseconds.

use dmpt_core::discrete::DiscreteProblem;
use dmpt_core::market::MarketStats;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Factor-loading covariance with a diagonal floor, plus independent
/// returns and prices; same seed, same instance.
pub fn random_stats(seed: u64, k: usize) -> MarketStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..k).map(|_| rng.random_range(-0.2..0.2)).collect())
        .collect();
    let mut cov = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            let s: f64 = a.iter().map(|row| row[i] * row[j]).sum();
            cov[i][j] = s + if i == j { 0.01 } else { 0.0 };
        }
    }
    MarketStats {
        returns: (0..k).map(|_| rng.random_range(0.0..0.2)).collect(),
        covariance: cov,
        prices: (0..k).map(|_| rng.random_range(10.0..200.0)).collect(),
    }
}

/// Unconstrained lot-selection instance over the fixture market.
pub fn problem(seed: u64, k: usize, n_tot: u64, phi_c: f64) -> DiscreteProblem {
    DiscreteProblem::new(random_stats(seed, k), phi_c, n_tot, None, None)
        .expect("fixture instance is valid")
}
