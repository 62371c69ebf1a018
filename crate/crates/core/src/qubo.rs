//! Binary-quadratic compilation of the integer-lot problem: bounded binary
//! lot encoding, slack registers for the inequality caps, squared penalty
//! terms, a spin-variable view, and exact decode back to lots.
//!
//! Money enters the budget penalty in integer cents and the order-1 score
//! constraint in integer milli-units, so every constraint residual is a
//! whole number and the squared penalties stay exact.

use std::collections::BTreeMap;

use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};

use crate::discrete::{check_feasible, DiscreteProblem, FeasibilityReport};
use crate::error::{Error, Result};

/// One register of bits with positional place values.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BitRegister {
    pub start: usize,
    pub places: Vec<u64>,
}

impl BitRegister {
    pub fn len(&self) -> usize {
        self.places.len()
    }

    pub fn is_empty(&self) -> bool {
        self.places.is_empty()
    }

    pub fn max_value(&self) -> u64 {
        self.places.iter().sum()
    }

    fn read(&self, bits: &[bool]) -> u64 {
        self.places
            .iter()
            .enumerate()
            .filter(|(i, _)| bits[self.start + i])
            .map(|(_, &p)| p)
            .sum()
    }

    /// Greedy fill in descending place order; covers every value in
    /// [0, max_value] for the truncated-binary place layout used here.
    fn write(&self, value: u64, bits: &mut [bool]) -> Result<()> {
        let mut order: Vec<usize> = (0..self.places.len()).collect();
        order.sort_by(|&a, &b| self.places[b].cmp(&self.places[a]));
        let mut remaining = value;
        for idx in order {
            if self.places[idx] <= remaining {
                remaining -= self.places[idx];
                bits[self.start + idx] = true;
            } else {
                bits[self.start + idx] = false;
            }
        }
        if remaining != 0 {
            return Err(Error::Invalid(format!(
                "value {value} exceeds register capacity {}",
                self.max_value()
            )));
        }
        Ok(())
    }
}

/// Where each asset's lots and each slack variable live in the bit vector.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecodeMap {
    pub assets: Vec<BitRegister>,
    pub budget_slack: Option<BitRegister>,
    pub esg_slack: Option<BitRegister>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyWeights {
    pub lambda_sum: f64,
    pub lambda_budget: f64,
    pub lambda_esg: f64,
}

fn serialize_quadratic<S: Serializer>(
    map: &BTreeMap<(u32, u32), f64>,
    serializer: S,
) -> std::result::Result<S::Ok, S::Error> {
    let mut seq = serializer.serialize_seq(Some(map.len()))?;
    for (&(i, j), &v) in map {
        seq.serialize_element(&(i, j, v))?;
    }
    seq.end()
}

/// The compiled quadratic form E(a) = offset + Σᵢ linearᵢ·aᵢ +
/// Σ_{i<j} quadratic_{ij}·aᵢaⱼ over bits a ∈ {0,1}.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuboInstance {
    pub num_bits: usize,
    pub linear: Vec<f64>,
    #[serde(serialize_with = "serialize_quadratic")]
    pub quadratic: BTreeMap<(u32, u32), f64>,
    pub offset: f64,
    pub decode_map: DecodeMap,
    pub penalty_weights: PenaltyWeights,
}

/// Everything known about one decoded assignment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecodedSample {
    pub lots: Vec<u64>,
    pub report: FeasibilityReport,
    pub budget_slack_units: Option<u64>,
    pub esg_slack_units: Option<u64>,
}

/// Same quadratic form over spins s ∈ {−1,+1}.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinInstance {
    pub num_spins: usize,
    pub h: Vec<f64>,
    pub j: BTreeMap<(u32, u32), f64>,
    pub offset: f64,
}

pub fn spin_to_bit(s: i8) -> Result<u8> {
    match s {
        -1 => Ok(0),
        1 => Ok(1),
        other => Err(Error::Invalid(format!("spin must be -1 or +1, got {other}"))),
    }
}

pub fn bit_to_spin(a: u8) -> Result<i8> {
    match a {
        0 => Ok(-1),
        1 => Ok(1),
        other => Err(Error::Invalid(format!("bit must be 0 or 1, got {other}"))),
    }
}

/// ⌈k·(log₂(N_tot+1) + 1)⌉: upper bound on the non-slack bits needed to
/// encode k lot counts of at most N_tot each.
pub fn qubit_bound(k: usize, n_tot: u64) -> u64 {
    ((k as f64) * ((n_tot as f64 + 1.0).log2() + 1.0)).ceil() as u64
}

/// Place values 1, 2, 4, …, plus a truncated top place, so that subsets of
/// places cover exactly [0, max_value].
fn bounded_places(max_value: u64) -> Vec<u64> {
    if max_value == 0 {
        return Vec::new();
    }
    let width = 64 - max_value.leading_zeros() as u64;
    let mut places: Vec<u64> = (0..width - 1).map(|b| 1u64 << b).collect();
    places.push(max_value - (1u64 << (width - 1)) + 1);
    places
}

fn round_to_units(value: f64, scale: f64, what: &str) -> Result<i64> {
    let scaled = (value * scale).round();
    if !scaled.is_finite() || scaled.abs() >= 9.2e18 {
        return Err(Error::Unsupported(format!(
            "{what} {value} does not fit integer arithmetic at scale {scale}"
        )));
    }
    Ok(scaled as i64)
}

struct Accumulator {
    linear: Vec<f64>,
    quadratic: BTreeMap<(u32, u32), f64>,
    offset: f64,
}

impl Accumulator {
    fn new(num_bits: usize) -> Self {
        Self {
            linear: vec![0.0; num_bits],
            quadratic: BTreeMap::new(),
            offset: 0.0,
        }
    }

    fn add_quadratic(&mut self, i: usize, j: usize, value: f64) {
        if value == 0.0 {
            return;
        }
        debug_assert_ne!(i, j);
        let key = (i.min(j) as u32, i.max(j) as u32);
        *self.quadratic.entry(key).or_insert(0.0) += value;
    }

    /// Adds weight·(Σ coefᵢ·aᵢ + constant)², expanded over binary aᵢ where
    /// aᵢ² = aᵢ.
    fn add_squared_penalty(&mut self, weight: f64, terms: &[(usize, f64)], constant: f64) {
        self.offset += weight * constant * constant;
        for (idx, (bit, coef)) in terms.iter().enumerate() {
            self.linear[*bit] += weight * (coef * coef + 2.0 * constant * coef);
            for (bit2, coef2) in &terms[idx + 1..] {
                self.add_quadratic(*bit, *bit2, 2.0 * weight * coef * coef2);
            }
        }
    }
}

/// Compiles `problem` into a QUBO. Lot registers use B_a = ⌊log₂N_tot⌋+1
/// bits per asset; the lot-sum equality becomes λ_sum·(Σx − N_tot)²; the
/// budget cap gains a cent-valued slack register; an order-1 score cap is
/// multiplied through by N_tot and gains a milli-unit slack register.
/// Automatic penalty weights are twice the objective's coefficient-bound
/// spread, which provably dominates any single-unit constraint violation.
pub fn encode(problem: &DiscreteProblem, penalties: Option<PenaltyWeights>) -> Result<QuboInstance> {
    let k = problem.k();
    let n_tot = problem.n_tot;
    let stats = &problem.stats;

    if let Some(cap) = &problem.esg {
        if cap.order != 1.0 {
            return Err(Error::Unsupported(format!(
                "only order-1 score caps have a linear binary encoding, got order {}; \
                 use the integer-space sampler for other orders",
                cap.order
            )));
        }
    }

    let lot_places = bounded_places(n_tot);
    let bits_per_asset = lot_places.len();
    let mut assets = Vec::with_capacity(k);
    for a in 0..k {
        assets.push(BitRegister {
            start: a * bits_per_asset,
            places: lot_places.clone(),
        });
    }
    let mut next_bit = k * bits_per_asset;
    debug_assert!(next_bit as u64 <= qubit_bound(k, n_tot));

    let budget_data = match problem.budget {
        Some(budget) => {
            let mut price_cents = Vec::with_capacity(k);
            for (i, &p) in stats.prices.iter().enumerate() {
                let cents = round_to_units(p, 100.0, "price")?;
                if cents <= 0 {
                    return Err(Error::Unsupported(format!(
                        "price {p} of asset {i} is below one cent; \
                         the budget penalty needs positive integer prices"
                    )));
                }
                price_cents.push(cents);
            }
            let budget_cents = round_to_units(budget, 100.0, "budget")?;
            if budget_cents <= 0 {
                return Err(Error::Unsupported(format!("budget {budget} is below one cent")));
            }
            let places = bounded_places(budget_cents as u64);
            if places.len() > 63 {
                return Err(Error::Unsupported(format!(
                    "budget of {budget_cents} cents needs {} slack bits, over the 63-bit cap",
                    places.len()
                )));
            }
            let register = BitRegister {
                start: next_bit,
                places,
            };
            next_bit += register.len();
            Some((price_cents, budget_cents, register))
        }
        None => None,
    };

    let esg_data = match &problem.esg {
        Some(cap) => {
            let (best, _) = cap.table.uniform_scale()?;
            let mut gap_milli = Vec::with_capacity(k);
            for &s in &cap.table.scores {
                gap_milli.push(round_to_units((best - s).abs(), 1000.0, "score gap")?);
            }
            let bound_milli =
                round_to_units(cap.max_distance * n_tot as f64, 1000.0, "distance bound")?;
            let places = bounded_places(bound_milli.max(0) as u64);
            if places.len() > 63 {
                return Err(Error::Unsupported(format!(
                    "distance bound of {bound_milli} milli-units needs {} slack bits, \
                     over the 63-bit cap",
                    places.len()
                )));
            }
            let register = BitRegister {
                start: next_bit,
                places,
            };
            next_bit += register.len();
            Some((gap_milli, bound_milli, register))
        }
        None => None,
    };

    let num_bits = next_bit;
    let mut acc = Accumulator::new(num_bits);

    // Objective (φ_c/(2N))·xᵀΣx − rᵀx on the decoded lots.
    let scale = 0.5 * problem.phi_c / n_tot as f64;
    let asset_bits: Vec<Vec<(usize, f64)>> = assets
        .iter()
        .map(|reg| {
            reg.places
                .iter()
                .enumerate()
                .map(|(i, &p)| (reg.start + i, p as f64))
                .collect()
        })
        .collect();
    for i in 0..k {
        for j in i..k {
            let sigma = stats.covariance[i][j];
            if sigma == 0.0 {
                continue;
            }
            if i == j {
                let factor = scale * sigma;
                for (idx, &(bit, place)) in asset_bits[i].iter().enumerate() {
                    acc.linear[bit] += factor * place * place;
                    for &(bit2, place2) in &asset_bits[i][idx + 1..] {
                        acc.add_quadratic(bit, bit2, 2.0 * factor * place * place2);
                    }
                }
            } else {
                let factor = 2.0 * scale * sigma;
                for &(bit, place) in &asset_bits[i] {
                    for &(bit2, place2) in &asset_bits[j] {
                        acc.add_quadratic(bit, bit2, factor * place * place2);
                    }
                }
            }
        }
        for &(bit, place) in &asset_bits[i] {
            acc.linear[bit] -= stats.returns[i] * place;
        }
    }

    // Constraint residuals are integers ≥ 1 when violated, so twice the
    // objective's attainable spread makes any violation cost more than any
    // objective difference between assignments.
    let spread: f64 = acc.linear.iter().map(|c| c.abs()).sum::<f64>()
        + acc.quadratic.values().map(|c| c.abs()).sum::<f64>()
        + 1.0;
    let weights = penalties.unwrap_or(PenaltyWeights {
        lambda_sum: 2.0 * spread,
        lambda_budget: 2.0 * spread,
        lambda_esg: 2.0 * spread,
    });

    let sum_terms: Vec<(usize, f64)> = asset_bits.iter().flatten().copied().collect();
    acc.add_squared_penalty(weights.lambda_sum, &sum_terms, -(n_tot as f64));

    if let Some((price_cents, budget_cents, register)) = &budget_data {
        let mut terms = Vec::new();
        for i in 0..k {
            for &(bit, place) in &asset_bits[i] {
                terms.push((bit, price_cents[i] as f64 * place));
            }
        }
        for (idx, &place) in register.places.iter().enumerate() {
            terms.push((register.start + idx, place as f64));
        }
        acc.add_squared_penalty(weights.lambda_budget, &terms, -(*budget_cents as f64));
    }

    if let Some((gap_milli, bound_milli, register)) = &esg_data {
        let mut terms = Vec::new();
        for i in 0..k {
            for &(bit, place) in &asset_bits[i] {
                terms.push((bit, gap_milli[i] as f64 * place));
            }
        }
        for (idx, &place) in register.places.iter().enumerate() {
            terms.push((register.start + idx, place as f64));
        }
        acc.add_squared_penalty(weights.lambda_esg, &terms, -(*bound_milli as f64));
    }

    Ok(QuboInstance {
        num_bits,
        linear: acc.linear,
        quadratic: acc.quadratic,
        offset: acc.offset,
        decode_map: DecodeMap {
            assets,
            budget_slack: budget_data.map(|(_, _, r)| r),
            esg_slack: esg_data.map(|(_, _, r)| r),
        },
        penalty_weights: weights,
    })
}

impl QuboInstance {
    fn check_len(&self, bits: &[bool]) -> Result<()> {
        if bits.len() != self.num_bits {
            return Err(Error::Dimension(format!(
                "{} bits for a {}-bit instance",
                bits.len(),
                self.num_bits
            )));
        }
        Ok(())
    }

    /// offset + Σ linearᵢ·aᵢ + Σ quadratic_{ij}·aᵢaⱼ.
    pub fn energy(&self, bits: &[bool]) -> Result<f64> {
        self.check_len(bits)?;
        let mut e = self.offset;
        for (i, &a) in bits.iter().enumerate() {
            if a {
                e += self.linear[i];
            }
        }
        for (&(i, j), &v) in &self.quadratic {
            if bits[i as usize] && bits[j as usize] {
                e += v;
            }
        }
        Ok(e)
    }

    /// Lots only; slack registers are ignored by construction.
    pub fn decode_lots(&self, bits: &[bool]) -> Result<Vec<u64>> {
        self.check_len(bits)?;
        Ok(self
            .decode_map
            .assets
            .iter()
            .map(|reg| reg.read(bits))
            .collect())
    }

    /// Lots plus the feasibility report of the owning problem and the raw
    /// slack-register values.
    pub fn decode(&self, bits: &[bool], problem: &DiscreteProblem) -> Result<DecodedSample> {
        let lots = self.decode_lots(bits)?;
        if lots.len() != problem.k() {
            return Err(Error::Dimension(format!(
                "instance decodes {} assets, problem has {}",
                lots.len(),
                problem.k()
            )));
        }
        let report = check_feasible(&lots, problem)?;
        Ok(DecodedSample {
            lots,
            report,
            budget_slack_units: self.decode_map.budget_slack.as_ref().map(|r| r.read(bits)),
            esg_slack_units: self.decode_map.esg_slack.as_ref().map(|r| r.read(bits)),
        })
    }

    /// Bit assignment holding the given lots and slack-register values.
    pub fn encode_assignment(
        &self,
        lots: &[u64],
        budget_slack: u64,
        esg_slack: u64,
    ) -> Result<Vec<bool>> {
        if lots.len() != self.decode_map.assets.len() {
            return Err(Error::Dimension(format!(
                "{} lots for {} encoded assets",
                lots.len(),
                self.decode_map.assets.len()
            )));
        }
        let mut bits = vec![false; self.num_bits];
        for (reg, &value) in self.decode_map.assets.iter().zip(lots) {
            reg.write(value, &mut bits)?;
        }
        match &self.decode_map.budget_slack {
            Some(reg) => reg.write(budget_slack, &mut bits)?,
            None if budget_slack != 0 => {
                return Err(Error::Invalid("no budget slack register".into()))
            }
            None => {}
        }
        match &self.decode_map.esg_slack {
            Some(reg) => reg.write(esg_slack, &mut bits)?,
            None if esg_slack != 0 => return Err(Error::Invalid("no score slack register".into())),
            None => {}
        }
        Ok(bits)
    }

    /// Energy-preserving change of variables a = (s+1)/2.
    pub fn to_spin(&self) -> SpinInstance {
        let mut offset = self.offset;
        let mut h = vec![0.0; self.num_bits];
        let mut j = BTreeMap::new();
        for (i, &l) in self.linear.iter().enumerate() {
            offset += 0.5 * l;
            h[i] += 0.5 * l;
        }
        for (&(a, b), &q) in &self.quadratic {
            offset += 0.25 * q;
            h[a as usize] += 0.25 * q;
            h[b as usize] += 0.25 * q;
            *j.entry((a, b)).or_insert(0.0) += 0.25 * q;
        }
        SpinInstance {
            num_spins: self.num_bits,
            h,
            j,
            offset,
        }
    }

    /// Interchange document: bit count, linear vector, quadratic triplets,
    /// offset, decode map, penalty weights.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }
}

impl SpinInstance {
    pub fn energy(&self, spins: &[i8]) -> Result<f64> {
        if spins.len() != self.num_spins {
            return Err(Error::Dimension(format!(
                "{} spins for a {}-spin instance",
                spins.len(),
                self.num_spins
            )));
        }
        for &s in spins {
            spin_to_bit(s)?;
        }
        let mut e = self.offset;
        for (i, &s) in spins.iter().enumerate() {
            e += self.h[i] * f64::from(s);
        }
        for (&(a, b), &v) in &self.j {
            e += v * f64::from(spins[a as usize]) * f64::from(spins[b as usize]);
        }
        Ok(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::{utility_discrete_unchecked, EsgConstraint};
    use crate::market::{EsgTable, MarketStats};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stats(returns: Vec<f64>, covariance: Vec<Vec<f64>>, prices: Vec<f64>) -> MarketStats {
        MarketStats {
            returns,
            covariance,
            prices,
        }
    }

    fn identity(k: usize) -> Vec<Vec<f64>> {
        (0..k)
            .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect()
    }

    fn random_psd_stats(rng: &mut ChaCha8Rng, k: usize) -> MarketStats {
        let a: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..k).map(|_| rng.random_range(-0.2..0.2)).collect())
            .collect();
        let mut cov = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in 0..k {
                let mut acc = 0.0;
                for (l, row) in a.iter().enumerate() {
                    acc += row[i] * a[l][j];
                }
                cov[i][j] = acc + if i == j { 0.01 } else { 0.0 };
            }
        }
        stats(
            (0..k).map(|_| rng.random_range(0.0..0.2)).collect(),
            cov,
            (0..k).map(|_| rng.random_range(10.0..200.0)).collect(),
        )
    }

    fn mask_to_bits(mask: u32, n: usize) -> Vec<bool> {
        (0..n).map(|i| mask >> i & 1 == 1).collect()
    }

    fn for_each_composition(n: u64, k: usize, f: &mut impl FnMut(&[u64])) {
        fn recurse(prefix: &mut Vec<u64>, remaining: u64, k: usize, f: &mut impl FnMut(&[u64])) {
            if prefix.len() == k - 1 {
                prefix.push(remaining);
                f(prefix);
                prefix.pop();
                return;
            }
            for v in 0..=remaining {
                prefix.push(v);
                recurse(prefix, remaining - v, k, f);
                prefix.pop();
            }
        }
        recurse(&mut Vec::with_capacity(k), n, k, f);
    }

    #[test]
    fn bounded_places_cover_exactly_zero_to_max() {
        for max in 1..=9u64 {
            let places = bounded_places(max);
            let mut reachable = std::collections::BTreeSet::new();
            for mask in 0u32..1 << places.len() {
                let value: u64 = places
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> i & 1 == 1)
                    .map(|(_, &p)| p)
                    .sum();
                reachable.insert(value);
            }
            let expected: std::collections::BTreeSet<u64> = (0..=max).collect();
            assert_eq!(reachable, expected, "max={max}, places={places:?}");
        }
        assert!(bounded_places(0).is_empty());
        assert_eq!(bounded_places(1), vec![1]);
        assert_eq!(bounded_places(3), vec![1, 2]);
        assert_eq!(bounded_places(5), vec![1, 2, 2]);
    }

    #[test]
    fn spin_bit_maps_are_inverse() {
        assert_eq!(spin_to_bit(-1).unwrap(), 0);
        assert_eq!(spin_to_bit(1).unwrap(), 1);
        assert!(spin_to_bit(0).is_err());
        assert!(bit_to_spin(2).is_err());
        for a in [0u8, 1] {
            assert_eq!(spin_to_bit(bit_to_spin(a).unwrap()).unwrap(), a);
        }
    }

    #[test]
    fn qubit_bound_examples() {
        assert_eq!(qubit_bound(4, 3), 12);
        assert_eq!(qubit_bound(4, 1000), 44);
        assert_eq!(qubit_bound(1, 1), 2);
    }

    fn two_asset_problem() -> DiscreteProblem {
        DiscreteProblem::new(
            stats(vec![0.1, 0.2], identity(2), vec![1.0, 1.0]),
            2.0,
            3,
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn unconstrained_energy_equals_objective_plus_lot_sum_penalty() {
        let problem = two_asset_problem();
        let inst = encode(&problem, None).unwrap();
        assert_eq!(inst.num_bits, 4);
        assert!(inst.num_bits as u64 <= qubit_bound(2, 3));

        // Bits (1,1 | 0,0) decode to lots (3,0) via places (1,2).
        let bits = vec![true, true, false, false];
        assert_eq!(inst.decode_lots(&bits).unwrap(), vec![3, 0]);
        let q = utility_discrete_unchecked(&[3, 0], &problem.stats, 2.0, 3);
        assert_abs_diff_eq!(inst.energy(&bits).unwrap(), q, epsilon = 1e-12);

        for mask in 0u32..16 {
            let bits = mask_to_bits(mask, 4);
            let lots = inst.decode_lots(&bits).unwrap();
            let sum: u64 = lots.iter().sum();
            let expected = utility_discrete_unchecked(&lots, &problem.stats, 2.0, 3)
                + inst.penalty_weights.lambda_sum * (sum as f64 - 3.0).powi(2);
            let energy = inst.energy(&bits).unwrap();
            assert_relative_eq!(energy, expected, max_relative = 1e-12, epsilon = 1e-12);
            assert!(energy.is_finite());
        }

        let zeros = vec![false; 4];
        assert_abs_diff_eq!(
            inst.energy(&zeros).unwrap(),
            inst.penalty_weights.lambda_sum * 9.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn encode_decode_round_trips_on_random_lot_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for _ in 0..500 {
            let k = rng.random_range(1..5usize);
            let n_tot = rng.random_range(1..40u64);
            let s = random_psd_stats(&mut rng, k);
            let problem = DiscreteProblem::new(s, 1.5, n_tot, None, None).unwrap();
            let inst = encode(&problem, None).unwrap();
            let mut lots = vec![0u64; k];
            for _ in 0..n_tot {
                lots[rng.random_range(0..k)] += 1;
            }
            let bits = inst.encode_assignment(&lots, 0, 0).unwrap();
            assert_eq!(inst.decode_lots(&bits).unwrap(), lots);
        }
    }

    #[test]
    fn decode_reports_lot_sum_violations_and_ignores_slack() {
        let problem = DiscreteProblem::new(
            stats(vec![0.1, 0.2], identity(2), vec![0.10, 0.20]),
            2.0,
            3,
            Some(1.0),
            None,
        )
        .unwrap();
        let inst = encode(&problem, None).unwrap();
        let slack_reg = inst.decode_map.budget_slack.clone().unwrap();
        assert!(!slack_reg.is_empty());

        let off_count = inst.encode_assignment(&[1, 0], 0, 0).unwrap();
        let decoded = inst.decode(&off_count, &problem).unwrap();
        assert_eq!(decoded.report.lot_sum_residual, -2);
        assert!(!decoded.report.feasible(&problem));

        // Same lots, different slack: decoded lots unchanged, energy not.
        let a = inst.encode_assignment(&[2, 1], 0, 0).unwrap();
        let b = inst.encode_assignment(&[2, 1], slack_reg.max_value(), 0).unwrap();
        assert_eq!(inst.decode_lots(&a).unwrap(), vec![2, 1]);
        assert_eq!(inst.decode_lots(&b).unwrap(), vec![2, 1]);
        assert_ne!(inst.energy(&a).unwrap(), inst.energy(&b).unwrap());
        let da = inst.decode(&a, &problem).unwrap();
        assert_eq!(da.budget_slack_units, Some(0));
        let db = inst.decode(&b, &problem).unwrap();
        assert_eq!(db.budget_slack_units, Some(slack_reg.max_value()));
    }

    #[test]
    fn spin_form_preserves_energies() {
        let problem = two_asset_problem();
        let inst = encode(&problem, None).unwrap();
        let spin = inst.to_spin();
        for mask in 0u32..1 << inst.num_bits {
            let bits = mask_to_bits(mask, inst.num_bits);
            let spins: Vec<i8> = bits
                .iter()
                .map(|&a| bit_to_spin(u8::from(a)).unwrap())
                .collect();
            assert_relative_eq!(
                inst.energy(&bits).unwrap(),
                spin.energy(&spins).unwrap(),
                max_relative = 1e-12,
                epsilon = 1e-12
            );
        }

        let null = QuboInstance {
            num_bits: 2,
            linear: vec![0.0, 0.0],
            quadratic: BTreeMap::new(),
            offset: 0.0,
            decode_map: DecodeMap {
                assets: vec![BitRegister {
                    start: 0,
                    places: vec![1, 2],
                }],
                budget_slack: None,
                esg_slack: None,
            },
            penalty_weights: PenaltyWeights {
                lambda_sum: 0.0,
                lambda_budget: 0.0,
                lambda_esg: 0.0,
            },
        };
        let null_spin = null.to_spin();
        for mask in 0u32..4 {
            let bits = mask_to_bits(mask, 2);
            let spins: Vec<i8> = bits.iter().map(|&a| if a { 1 } else { -1 }).collect();
            assert_eq!(null.energy(&bits).unwrap(), 0.0);
            assert_eq!(null_spin.energy(&spins).unwrap(), 0.0);
        }
    }

    #[test]
    fn spin_form_matches_on_a_random_twelve_bit_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let num_bits = 12;
        let linear: Vec<f64> = (0..num_bits).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut quadratic = BTreeMap::new();
        for i in 0..num_bits as u32 {
            for j in (i + 1)..num_bits as u32 {
                if rng.random::<f64>() < 0.6 {
                    quadratic.insert((i, j), rng.random_range(-2.0..2.0));
                }
            }
        }
        let inst = QuboInstance {
            num_bits,
            linear,
            quadratic,
            offset: rng.random_range(-1.0..1.0),
            decode_map: DecodeMap {
                assets: vec![BitRegister {
                    start: 0,
                    places: bounded_places(1 << num_bits - 1),
                }],
                budget_slack: None,
                esg_slack: None,
            },
            penalty_weights: PenaltyWeights {
                lambda_sum: 0.0,
                lambda_budget: 0.0,
                lambda_esg: 0.0,
            },
        };
        let spin = inst.to_spin();
        let mut worst: f64 = 0.0;
        for mask in 0u32..1 << num_bits {
            let bits = mask_to_bits(mask, num_bits);
            let spins: Vec<i8> = bits.iter().map(|&a| if a { 1 } else { -1 }).collect();
            let diff = (inst.energy(&bits).unwrap() - spin.energy(&spins).unwrap()).abs();
            worst = worst.max(diff);
        }
        assert!(worst <= 1e-9, "worst spin/bit energy gap {worst}");
    }

    /// Exhaustive QUBO minimum vs composition-space oracle.
    fn assert_global_minimum_is_feasible_argmin(problem: &DiscreteProblem) {
        let inst = encode(problem, None).unwrap();
        assert!(inst.num_bits <= 20, "test instance too wide: {}", inst.num_bits);

        // Dense mirror of the sparse form keeps the 2^n scan cheap.
        let n = inst.num_bits;
        let mut pair = vec![vec![0.0f64; n]; n];
        for (&(i, j), &v) in &inst.quadratic {
            pair[i as usize][j as usize] = v;
        }
        let mut best_energy = f64::INFINITY;
        let mut best_mask = 0u32;
        for mask in 0u32..1 << n {
            let mut e = inst.offset;
            let mut rest = mask;
            while rest != 0 {
                let i = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                e += inst.linear[i];
                let mut rest2 = rest;
                while rest2 != 0 {
                    let j = rest2.trailing_zeros() as usize;
                    rest2 &= rest2 - 1;
                    e += pair[i][j];
                }
            }
            if e < best_energy {
                best_energy = e;
                best_mask = mask;
            }
        }
        let bits = mask_to_bits(best_mask, n);
        let qubo_best = inst.decode_lots(&bits).unwrap();

        let mut oracle: Option<(f64, Vec<u64>)> = None;
        for_each_composition(problem.n_tot, problem.k(), &mut |lots| {
            let report = check_feasible(lots, problem).unwrap();
            if !report.feasible(problem) {
                return;
            }
            let u =
                utility_discrete_unchecked(lots, &problem.stats, problem.phi_c, problem.n_tot);
            if oracle.as_ref().is_none_or(|(b, _)| u < *b) {
                oracle = Some((u, lots.to_vec()));
            }
        });
        let (oracle_u, oracle_lots) = oracle.expect("feasible set nonempty");
        assert_eq!(qubo_best, oracle_lots, "energy {best_energy} vs {oracle_u}");
        let report = check_feasible(&qubo_best, problem).unwrap();
        assert!(report.feasible(problem));
    }

    #[test]
    fn global_minimum_decodes_to_the_feasible_argmin() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        // Unconstrained, k up to 3, N_tot up to 6.
        for _ in 0..6 {
            let k = rng.random_range(2..4usize);
            let n_tot = rng.random_range(2..7u64);
            let problem =
                DiscreteProblem::new(random_psd_stats(&mut rng, k), 2.0, n_tot, None, None)
                    .unwrap();
            assert_global_minimum_is_feasible_argmin(&problem);
        }

        // Budget-capped, cent-exact prices keep the encoding lossless.
        for _ in 0..4 {
            let k = 3;
            let n_tot = rng.random_range(2..7u64);
            let mut s = random_psd_stats(&mut rng, k);
            s.prices = vec![0.03, 0.07, 0.11];
            let budget = 0.01 * f64::from(rng.random_range(25..60u32));
            let problem = DiscreteProblem::new(s, 2.0, n_tot, Some(budget), None).unwrap();
            assert_global_minimum_is_feasible_argmin(&problem);
        }

        // Score-capped on a milli-exact grid.
        for trial in 0..3 {
            let k = 2;
            let n_tot = 2 + trial as u64;
            let s = random_psd_stats(&mut rng, k);
            let table = EsgTable::new(
                vec!["A".into(), "B".into()],
                vec![3.5, 1.5],
                vec![4.0, 4.0],
                vec![1.0, 1.0],
            )
            .unwrap();
            let cap = EsgConstraint {
                max_distance: 1.2,
                order: 1.0,
                table,
            };
            let problem = DiscreteProblem::new(s, 2.0, n_tot, None, Some(cap)).unwrap();
            assert_global_minimum_is_feasible_argmin(&problem);
        }
    }

    #[test]
    fn rejects_higher_order_score_caps() {
        let table =
            EsgTable::new(vec!["A".into()], vec![2.0], vec![4.0], vec![1.0]).unwrap();
        let problem = DiscreteProblem::new(
            stats(vec![0.1], vec![vec![0.04]], vec![10.0]),
            1.0,
            3,
            None,
            Some(EsgConstraint {
                max_distance: 1.0,
                order: 2.0,
                table,
            }),
        )
        .unwrap();
        assert!(matches!(encode(&problem, None), Err(Error::Unsupported(_))));
    }

    #[test]
    fn json_document_carries_the_full_instance() {
        let problem = two_asset_problem();
        let inst = encode(&problem, None).unwrap();
        let doc = inst.to_json();
        let parsed: serde_json::Value = serde_json::from_str(&doc).unwrap();
        assert_eq!(parsed["num_bits"], 4);
        assert_eq!(parsed["linear"].as_array().unwrap().len(), 4);
        assert!(parsed["quadratic"].as_array().unwrap().len() >= 2);
        assert!(parsed["decode_map"]["assets"].as_array().unwrap().len() == 2);
        assert!(parsed["penalty_weights"]["lambda_sum"].as_f64().unwrap() > 0.0);
    }
}
