//! Wasserstein-style distance between a portfolio's score distribution and
//! the all-best reference portfolio, in score space and in stock space.

use crate::error::{Error, Result};
use crate::market::EsgTable;

pub const DEFAULT_ORDER: f64 = 1.0;

const WEIGHT_SUM_TOL: f64 = 1e-9;

fn check_order(p: f64) -> Result<()> {
    if !p.is_finite() || p < 1.0 {
        return Err(Error::Invalid(format!("distance order must be >= 1, got {p}")));
    }
    Ok(())
}

/// |gap|^p, kept exact for the common p = 1 case.
fn gap_power(gap: f64, p: f64) -> f64 {
    if p == 1.0 {
        gap
    } else {
        gap.powf(p)
    }
}

fn root(sum: f64, p: f64) -> f64 {
    if p == 1.0 {
        sum
    } else {
        sum.powf(1.0 / p)
    }
}

/// Weighted p-mean of per-entry gaps. `gaps` must already be non-negative.
/// The accumulated sum is clamped to the largest carried gap power so that
/// float round-off can never push the result past the attainable maximum.
fn weighted_gap_mean(weights: &[f64], gaps: &[f64], p: f64) -> f64 {
    let mut sum = 0.0;
    let mut cap = 0.0f64;
    for (&w, &g) in weights.iter().zip(gaps) {
        let term = gap_power(g, p);
        sum += w * term;
        if w > 0.0 {
            cap = cap.max(term);
        }
    }
    root(sum.clamp(0.0, cap), p)
}

/// Distance of a distribution over score values from the best score:
/// [Σ πᵢ·|best − scoreᵢ|^p]^{1/p}.
pub fn d_esg_scores(pi: &[f64], scores: &[f64], best: f64, p: f64) -> Result<f64> {
    check_order(p)?;
    if pi.len() != scores.len() {
        return Err(Error::Dimension(format!(
            "{} probabilities for {} score values",
            pi.len(),
            scores.len()
        )));
    }
    if pi.is_empty() {
        return Err(Error::Invalid("empty score distribution".into()));
    }
    if !best.is_finite() || scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Invalid("non-finite score".into()));
    }
    let mut total = 0.0;
    for &w in pi {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::Invalid(format!("negative probability {w}")));
        }
        total += w;
    }
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::Invalid(format!(
            "probabilities sum to {total}, expected 1 within {WEIGHT_SUM_TOL:e}"
        )));
    }
    let gaps: Vec<f64> = scores.iter().map(|s| (best - s).abs()).collect();
    Ok(weighted_gap_mean(pi, &gaps, p))
}

/// Stock-space form on integer lots: weights xᵢ/N_tot against the common
/// scale's best score. Requires a homogeneous scale across assets.
pub fn d_esg_stocks(lots: &[u64], n_tot: u64, esg: &EsgTable, p: f64) -> Result<f64> {
    check_order(p)?;
    if n_tot == 0 {
        return Err(Error::Invalid("total lot count must be positive".into()));
    }
    if lots.len() != esg.len() {
        return Err(Error::Dimension(format!(
            "{} lots for {} scored assets",
            lots.len(),
            esg.len()
        )));
    }
    let sum: u64 = lots.iter().sum();
    if sum != n_tot {
        return Err(Error::Invalid(format!(
            "lots sum to {sum}, expected {n_tot}"
        )));
    }
    let (best, _) = esg.uniform_scale()?;
    let weights: Vec<f64> = lots.iter().map(|&l| l as f64 / n_tot as f64).collect();
    let gaps: Vec<f64> = esg.scores.iter().map(|s| (best - s).abs()).collect();
    Ok(weighted_gap_mean(&weights, &gaps, p))
}

/// Per-asset-scale form: each gap is normalized by that asset's own scale
/// width, so the result lives in [0, 1] regardless of scale mixture.
pub fn d_esg_heterogeneous(lots: &[u64], n_tot: u64, esg: &EsgTable, p: f64) -> Result<f64> {
    check_order(p)?;
    if n_tot == 0 {
        return Err(Error::Invalid("total lot count must be positive".into()));
    }
    if lots.len() != esg.len() {
        return Err(Error::Dimension(format!(
            "{} lots for {} scored assets",
            lots.len(),
            esg.len()
        )));
    }
    esg.validate()?;
    let sum: u64 = lots.iter().sum();
    if sum != n_tot {
        return Err(Error::Invalid(format!(
            "lots sum to {sum}, expected {n_tot}"
        )));
    }
    let weights: Vec<f64> = lots.iter().map(|&l| l as f64 / n_tot as f64).collect();
    let mut gaps = Vec::with_capacity(esg.len());
    for i in 0..esg.len() {
        let width = (esg.best[i] - esg.worst[i]).abs();
        if width == 0.0 {
            return Err(Error::DegenerateScale(esg.best[i]));
        }
        gaps.push((esg.best[i] - esg.scores[i]).abs() / width);
    }
    Ok(weighted_gap_mean(&weights, &gaps, p))
}

/// Width of the common score scale, the largest attainable distance.
pub fn d_max(esg: &EsgTable) -> Result<f64> {
    let (best, worst) = esg.uniform_scale()?;
    Ok((best - worst).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table(scores: Vec<f64>, best: f64, worst: f64) -> EsgTable {
        let k = scores.len();
        EsgTable::new(
            (0..k).map(|i| format!("T{i}")).collect(),
            scores,
            vec![best; k],
            vec![worst; k],
        )
        .unwrap()
    }

    fn random_composition(rng: &mut ChaCha8Rng, n: u64, k: usize) -> Vec<u64> {
        let mut lots = vec![0u64; k];
        for _ in 0..n {
            lots[rng.random_range(0..k)] += 1;
        }
        lots
    }

    #[test]
    fn score_space_examples() {
        assert_eq!(d_esg_scores(&[1.0], &[4.0], 4.0, 1.0).unwrap(), 0.0);
        assert_eq!(d_esg_scores(&[1.0], &[1.0], 4.0, 1.0).unwrap(), 3.0);
        assert_abs_diff_eq!(
            d_esg_scores(&[0.5, 0.5], &[4.0, 2.0], 4.0, 1.0).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            d_esg_scores(&[0.5, 0.5], &[4.0, 2.0], 4.0, 2.0).unwrap(),
            2.0f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn score_space_rejects_bad_distributions() {
        assert!(matches!(
            d_esg_scores(&[0.6, 0.6], &[4.0, 2.0], 4.0, 1.0),
            Err(Error::Invalid(_))
        ));
        assert!(matches!(
            d_esg_scores(&[1.2, -0.2], &[4.0, 2.0], 4.0, 1.0),
            Err(Error::Invalid(_))
        ));
        assert!(matches!(
            d_esg_scores(&[1.0], &[4.0], 4.0, 0.5),
            Err(Error::Invalid(_))
        ));
        assert!(matches!(
            d_esg_scores(&[1.0], &[4.0, 2.0], 4.0, 1.0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn stock_space_examples() {
        let t = table(vec![4.0, 2.0], 4.0, 1.0);
        assert_eq!(d_esg_stocks(&[2, 0], 2, &t, 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            d_esg_stocks(&[1, 1], 2, &t, 1.0).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert!(matches!(
            d_esg_stocks(&[1, 2], 2, &t, 1.0),
            Err(Error::Invalid(_))
        ));
    }

    #[test]
    fn stock_space_agrees_with_score_space() {
        let t = table(vec![4.0, 3.5, 2.0, 1.0], 4.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..200 {
            let lots = random_composition(&mut rng, 12, 4);
            let weights: Vec<f64> = lots.iter().map(|&l| l as f64 / 12.0).collect();
            for p in [1.0, 1.5, 2.0, 3.0] {
                let a = d_esg_stocks(&lots, 12, &t, p).unwrap();
                let b = d_esg_scores(&weights, &t.scores, 4.0, p).unwrap();
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn heterogeneous_examples() {
        let own_best = EsgTable::new(
            vec!["A".into(), "B".into()],
            vec![4.0, 100.0],
            vec![4.0, 100.0],
            vec![1.0, 0.0],
        )
        .unwrap();
        assert_eq!(d_esg_heterogeneous(&[1, 1], 2, &own_best, 1.0).unwrap(), 0.0);

        let own_worst = EsgTable::new(
            vec!["A".into(), "B".into()],
            vec![1.0, 0.0],
            vec![4.0, 100.0],
            vec![1.0, 0.0],
        )
        .unwrap();
        assert_abs_diff_eq!(
            d_esg_heterogeneous(&[1, 1], 2, &own_worst, 1.0).unwrap(),
            1.0,
            epsilon = 1e-15
        );

        let half = EsgTable::new(
            vec!["A".into()],
            vec![50.0],
            vec![100.0],
            vec![0.0],
        )
        .unwrap();
        assert_abs_diff_eq!(
            d_esg_heterogeneous(&[3], 3, &half, 1.0).unwrap(),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn scale_width_examples() {
        assert_eq!(d_max(&table(vec![2.0, 3.0], 4.0, 1.0)).unwrap(), 3.0);
        assert_eq!(d_max(&table(vec![50.0], 0.0, 100.0)).unwrap(), 100.0);

        let degenerate = EsgTable {
            tickers: vec!["A".into()],
            scores: vec![4.0],
            best: vec![4.0],
            worst: vec![4.0],
        };
        assert!(matches!(d_max(&degenerate), Err(Error::DegenerateScale(_))));

        let mixed = EsgTable::new(
            vec!["A".into(), "B".into()],
            vec![2.0, 50.0],
            vec![4.0, 100.0],
            vec![1.0, 0.0],
        )
        .unwrap();
        assert!(matches!(d_max(&mixed), Err(Error::MixedScales(_))));
    }

    #[test]
    fn order_one_is_the_weighted_mean_of_gaps() {
        let t = table(vec![4.0, 3.0, 2.5, 1.5, 1.0], 4.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..300 {
            let lots = random_composition(&mut rng, 20, 5);
            let d = d_esg_stocks(&lots, 20, &t, 1.0).unwrap();
            let mean_gap: f64 = lots
                .iter()
                .zip(&t.scores)
                .map(|(&l, &s)| l as f64 / 20.0 * (4.0 - s))
                .sum();
            assert_abs_diff_eq!(d, mean_gap, epsilon = 1e-12);
        }
    }

    #[test]
    fn moving_weight_to_better_scores_strictly_shrinks_distance() {
        let t = table(vec![4.0, 3.0, 2.0, 1.0], 4.0, 1.0);
        // B holds the worse assets; A moves one lot from score 1 to score 3
        // and one from score 2 to score 4.
        let b = [0u64, 2, 3, 5];
        let a = [1u64, 3, 2, 4];
        for p in [1.0, 1.5, 2.0, 3.0] {
            let da = d_esg_stocks(&a, 10, &t, p).unwrap();
            let db = d_esg_stocks(&b, 10, &t, p).unwrap();
            assert!(da < db, "p={p}: {da} !< {db}");
        }
    }

    #[test]
    fn equal_scores_can_be_relabeled_freely() {
        let t = table(vec![4.0, 2.0, 2.0, 1.0], 4.0, 1.0);
        for p in [1.0, 1.5, 2.0, 3.0] {
            let a = d_esg_stocks(&[2, 5, 1, 2], 10, &t, p).unwrap();
            let b = d_esg_stocks(&[2, 1, 5, 2], 10, &t, p).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn distances_stay_within_scale_bounds(seed in 0u64..1u64 << 48, p_choice in 0usize..4) {
            let t = table(vec![4.0, 3.5, 2.5, 1.5, 1.0], 4.0, 1.0);
            let p = [1.0, 1.5, 2.0, 3.0][p_choice];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lots = random_composition(&mut rng, 40, 5);
            let d = d_esg_stocks(&lots, 40, &t, p).unwrap();
            prop_assert!((0.0..=3.0).contains(&d));
            let h = d_esg_heterogeneous(&lots, 40, &t, p).unwrap();
            prop_assert!((0.0..=1.0).contains(&h));
        }
    }
}
