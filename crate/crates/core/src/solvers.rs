//! Minimizers for the integer-lot problem: an exhaustive composition oracle,
//! simulated annealing in lot space, simulated annealing over the QUBO bits,
//! and the lot-count calibration loop that spends a budget down to a target
//! slack.
//!
//! Restarts run independently on per-restart seeds (base seed + index) and
//! merge by a total order (feasible first, then utility, then lexicographic
//! lots), so results are identical across thread counts.

use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discrete::{
    check_feasible, count_compositions, sample_composition, utility_discrete_unchecked,
    DiscreteProblem, EsgConstraint, FeasibilityReport,
};
use crate::error::{Error, Result};
use crate::linalg;
use crate::market::MarketStats;
use crate::qubo::{encode, PenaltyWeights, QuboInstance};

/// Largest composition count the exhaustive oracle will enumerate.
pub const EXHAUSTIVE_GUARD: u64 = 10_000_000;

pub const DEFAULT_RESTARTS: u32 = 32;
pub const DEFAULT_SWEEPS: u32 = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerChoice {
    Exhaustive,
    SaInteger,
    SaQubo,
}

impl SamplerChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            SamplerChoice::Exhaustive => "exhaustive",
            SamplerChoice::SaInteger => "sa-integer",
            SamplerChoice::SaQubo => "sa-qubo",
        }
    }
}

impl std::str::FromStr for SamplerChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(SamplerChoice::Exhaustive),
            "sa-integer" => Ok(SamplerChoice::SaInteger),
            "sa-qubo" => Ok(SamplerChoice::SaQubo),
            other => Err(Error::Invalid(format!("unknown sampler {other:?}"))),
        }
    }
}

/// Annealing-run settings. Temperatures default to a geometric ladder from
/// 10× down to 1e-4× the instance's objective-spread estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub seed: u64,
    pub restarts: u32,
    /// Metropolis proposals per restart.
    pub sweeps: u32,
    pub t_hi: Option<f64>,
    pub t_lo: Option<f64>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            restarts: DEFAULT_RESTARTS,
            sweeps: DEFAULT_SWEEPS,
            t_hi: None,
            t_lo: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::Invalid("restarts must be positive".into()));
        }
        if self.sweeps == 0 {
            return Err(Error::Invalid("sweeps must be positive".into()));
        }
        if let (Some(hi), Some(lo)) = (self.t_hi, self.t_lo) {
            if !(hi > lo && lo > 0.0) {
                return Err(Error::Invalid(format!(
                    "temperature ladder needs t_hi > t_lo > 0, got {hi} and {lo}"
                )));
            }
        }
        for t in [self.t_hi, self.t_lo].into_iter().flatten() {
            if !t.is_finite() || t <= 0.0 {
                return Err(Error::Invalid(format!("temperatures must be positive, got {t}")));
            }
        }
        Ok(())
    }

    fn ladder(&self, spread: f64) -> (f64, f64) {
        let hi = self.t_hi.unwrap_or(10.0 * spread);
        let lo = self.t_lo.unwrap_or(1e-4 * spread);
        if hi > lo && lo > 0.0 {
            (hi, lo)
        } else {
            // Degenerate spread estimate (e.g. zero objective): fall back to
            // a fixed ladder so the chain still cools.
            (1.0, 1e-4)
        }
    }
}

/// One restart's best allocation with its exact utility.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub lots: Vec<u64>,
    pub utility: f64,
    pub feasible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub sampler: String,
    pub config: Option<SamplerConfig>,
    /// Winning bit assignment, QUBO sampler only.
    pub best_bits: Option<Vec<bool>>,
    /// QUBO energy of `best_bits`, recomputable from the encoded instance.
    pub qubo_energy: Option<f64>,
    /// Wall time is reporting metadata, deliberately excluded from the
    /// serialized form so equal runs serialize byte-identically.
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub best: Vec<u64>,
    pub utility: f64,
    pub feasible: bool,
    pub report: FeasibilityReport,
    pub samples: Vec<SampleRecord>,
    pub provenance: Provenance,
}

/// Normalized squared constraint residuals; 0 iff feasible.
fn violation_score(report: &FeasibilityReport, problem: &DiscreteProblem) -> f64 {
    let mut score = 0.0;
    let lot = report.lot_sum_residual as f64 / problem.n_tot as f64;
    score += lot * lot;
    if let Some(slack) = report.budget_slack {
        if slack < 0.0 {
            let b = problem.budget.unwrap_or(1.0).max(1e-9);
            score += (slack / b) * (slack / b);
        }
    }
    if let Some(slack) = report.esg_slack {
        if slack < 0.0 {
            let cap = problem
                .esg
                .as_ref()
                .map(|c| c.max_distance)
                .unwrap_or(1.0)
                .max(1e-9);
            score += (slack / cap) * (slack / cap);
        }
    }
    score
}

struct Evaluated {
    utility: f64,
    feasible: bool,
    violation: f64,
}

fn evaluate(lots: &[u64], problem: &DiscreteProblem) -> Evaluated {
    let report = check_feasible(lots, problem).expect("dimensions fixed by caller");
    Evaluated {
        utility: utility_discrete_unchecked(lots, &problem.stats, problem.phi_c, problem.n_tot),
        feasible: report.feasible(problem),
        violation: violation_score(&report, problem),
    }
}

/// Total order used everywhere a winner is picked: feasibility first, then
/// utility, then least violation, then lexicographic lots. Strict.
#[allow(clippy::too_many_arguments)]
fn is_better(
    feas_a: bool,
    u_a: f64,
    v_a: f64,
    lots_a: &[u64],
    feas_b: bool,
    u_b: f64,
    v_b: f64,
    lots_b: &[u64],
) -> bool {
    if feas_a != feas_b {
        return feas_a;
    }
    if feas_a {
        if u_a != u_b {
            return u_a < u_b;
        }
        lots_a < lots_b
    } else {
        if v_a != v_b {
            return v_a < v_b;
        }
        if u_a != u_b {
            return u_a < u_b;
        }
        lots_a < lots_b
    }
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

/// Enumerates every composition of N_tot over k assets and returns the exact
/// feasible argmin (ties to the lexicographically smallest lot vector). If
/// nothing is feasible, the least-violating composition is returned with
/// `feasible: false`.
pub fn solve_exhaustive(problem: &DiscreteProblem) -> Result<SolveResult> {
    let started = Instant::now();
    let count = count_compositions(problem.n_tot, problem.k() as u64);
    if count > BigUint::from(EXHAUSTIVE_GUARD) {
        return Err(Error::GuardExceeded {
            count: count.to_string(),
            guard: EXHAUSTIVE_GUARD,
        });
    }
    let mut best: Option<(bool, f64, f64, Vec<u64>)> = None;
    for_each_composition(problem.n_tot, problem.k(), &mut |lots| {
        let e = evaluate(lots, problem);
        let replace = match &best {
            None => true,
            Some((feas, u, v, b)) => {
                is_better(e.feasible, e.utility, e.violation, lots, *feas, *u, *v, b)
            }
        };
        if replace {
            best = Some((e.feasible, e.utility, e.violation, lots.to_vec()));
        }
    });
    let (feasible, utility, _, lots) = best.expect("composition set is never empty");
    let report = check_feasible(&lots, problem)?;
    Ok(SolveResult {
        best: lots.clone(),
        utility,
        feasible,
        report,
        samples: vec![SampleRecord {
            lots,
            utility,
            feasible,
        }],
        provenance: Provenance {
            sampler: SamplerChoice::Exhaustive.as_str().into(),
            config: None,
            best_bits: None,
            qubo_energy: None,
            wall_time: started.elapsed(),
        },
    })
}

/// Per-asset |best − score|^order, the additive measure behind the distance:
/// D(x) = (Σ xᵢ·gᵢ / N)^(1/order), so D ≤ cap ⟺ Σ xᵢ·gᵢ ≤ N·cap^order.
fn gap_powers(cap: &EsgConstraint) -> Result<(Vec<f64>, f64)> {
    let (best, _) = cap.table.uniform_scale()?;
    let powers = cap
        .table
        .scores
        .iter()
        .map(|s| {
            let g = (best - s).abs();
            if cap.order == 1.0 {
                g
            } else {
                g.powf(cap.order)
            }
        })
        .collect();
    let cap_power = if cap.order == 1.0 {
        cap.max_distance
    } else {
        cap.max_distance.powf(cap.order)
    };
    Ok((powers, cap_power))
}

/// Greedy first-improvement descent over single-lot transfers, using exact
/// arithmetic for every candidate. Strictly decreases the (feasibility,
/// utility, violation) order each accepted move, so it terminates.
fn greedy_descent(lots: &mut [u64], problem: &DiscreteProblem, max_accepts: usize) {
    let k = lots.len();
    if k < 2 {
        return;
    }
    let mut current = evaluate(lots, problem);
    let mut accepts = 0;
    loop {
        let mut improved = false;
        'scan: for src in 0..k {
            if lots[src] == 0 {
                continue;
            }
            for dst in 0..k {
                if dst == src {
                    continue;
                }
                lots[src] -= 1;
                lots[dst] += 1;
                let candidate = evaluate(lots, problem);
                let take = is_better(
                    candidate.feasible,
                    candidate.utility,
                    candidate.violation,
                    lots,
                    current.feasible,
                    current.utility,
                    current.violation,
                    &[],
                ) && (candidate.feasible != current.feasible
                    || candidate.utility != current.utility
                    || candidate.violation != current.violation);
                if take {
                    current = candidate;
                    improved = true;
                    accepts += 1;
                    if accepts >= max_accepts {
                        return;
                    }
                    break 'scan;
                }
                lots[src] += 1;
                lots[dst] -= 1;
            }
        }
        if !improved {
            return;
        }
    }
}

/// Moves lots off the most expensive / worst-scored assets until the start
/// state satisfies the caps, when possible. Deterministic.
fn repair_toward_feasible(lots: &mut [u64], problem: &DiscreteProblem, gap_powers: &Option<(Vec<f64>, f64)>) {
    let k = lots.len();
    if k < 2 {
        return;
    }
    let budget = problem.budget;
    let limit = 4 * problem.n_tot as usize + 16;
    for _ in 0..limit {
        let spent: f64 = lots
            .iter()
            .zip(&problem.stats.prices)
            .map(|(&l, &p)| l as f64 * p)
            .sum();
        let over_budget = budget.is_some_and(|b| spent > b);
        let over_cap = match gap_powers {
            Some((powers, cap_power)) => {
                let measure: f64 = lots
                    .iter()
                    .zip(powers)
                    .map(|(&l, &g)| l as f64 * g)
                    .sum();
                measure > *cap_power * problem.n_tot as f64
            }
            None => false,
        };
        let keys: Option<&[f64]> = if over_budget {
            Some(&problem.stats.prices)
        } else if over_cap {
            gap_powers.as_ref().map(|(p, _)| p.as_slice())
        } else {
            return;
        };
        let keys = keys.expect("key selection covers both branches");
        let mut src = None;
        for i in 0..k {
            if lots[i] > 0 && src.is_none_or(|s: usize| keys[i] > keys[s]) {
                src = Some(i);
            }
        }
        let mut dst = 0;
        for i in 1..k {
            if keys[i] < keys[dst] {
                dst = i;
            }
        }
        let Some(src) = src else { return };
        if src == dst || keys[src] <= keys[dst] {
            return;
        }
        lots[src] -= 1;
        lots[dst] += 1;
    }
}

struct ChainOutcome {
    lots: Vec<u64>,
    utility: f64,
    feasible: bool,
    violation: f64,
    bits: Option<Vec<bool>>,
    qubo_energy: Option<f64>,
}

fn finish_outcome(lots: Vec<u64>, problem: &DiscreteProblem) -> ChainOutcome {
    let e = evaluate(&lots, problem);
    ChainOutcome {
        lots,
        utility: e.utility,
        feasible: e.feasible,
        violation: e.violation,
        bits: None,
        qubo_energy: None,
    }
}

fn sa_integer_restart(
    problem: &DiscreteProblem,
    gap_data: &Option<(Vec<f64>, f64)>,
    sweeps: u32,
    t_hi: f64,
    t_lo: f64,
    penalty_base: f64,
    seed: u64,
) -> ChainOutcome {
    let k = problem.k();
    let n = problem.n_tot;
    if k == 1 {
        return finish_outcome(vec![n], problem);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lots = sample_composition(&mut rng, n, k);
    repair_toward_feasible(&mut lots, problem, gap_data);

    let stats = &problem.stats;
    let scale = 0.5 * problem.phi_c / n as f64;
    let cap_measure = gap_data.as_ref().map(|(_, cp)| cp * n as f64);
    let budget = problem.budget;

    // Incremental chain state.
    let lots_f: Vec<f64> = lots.iter().map(|&l| l as f64).collect();
    let mut sigma_x = linalg::mat_vec(&stats.covariance, &lots_f);
    let mut cost: f64 = lots
        .iter()
        .zip(&stats.prices)
        .map(|(&l, &p)| l as f64 * p)
        .sum();
    let mut measure: f64 = match gap_data {
        Some((powers, _)) => lots.iter().zip(powers).map(|(&l, &g)| l as f64 * g).sum(),
        None => 0.0,
    };
    let mut utility = utility_discrete_unchecked(&lots, stats, problem.phi_c, n);

    let soft_violation = |cost: f64, measure: f64| -> f64 {
        let mut v = 0.0;
        if let Some(b) = budget {
            let over = (cost - b).max(0.0) / b.max(1e-9);
            v += over * over;
        }
        if let Some(cap_m) = cap_measure {
            let over = (measure - cap_m).max(0.0) / cap_m.max(1e-9);
            v += over * over;
        }
        v
    };
    let quick_ok = |cost: f64, measure: f64| -> bool {
        budget.is_none_or(|b| cost <= b + 1e-9 * b.abs().max(1.0))
            && cap_measure.is_none_or(|cm| measure <= cm + 1e-9 * cm.abs().max(1.0))
    };

    let mut best: Option<(f64, Vec<u64>)> = None;
    let consider_best = |lots: &[u64], best: &mut Option<(f64, Vec<u64>)>| {
        let e = evaluate(lots, problem);
        if !e.feasible {
            return;
        }
        let replace = match best {
            None => true,
            Some((u, b)) => e.utility < *u || (e.utility == *u && lots < b.as_slice()),
        };
        if replace {
            *best = Some((e.utility, lots.to_vec()));
        }
    };

    if quick_ok(cost, measure) {
        consider_best(&lots, &mut best);
    }

    let steps = sweeps.max(1);
    let ratio = t_lo / t_hi;
    let weight_growth: f64 = 1e4;
    for step in 0..steps {
        let progress = if steps == 1 {
            0.0
        } else {
            f64::from(step) / f64::from(steps - 1)
        };
        let temperature = t_hi * ratio.powf(progress);
        let weight = penalty_base * weight_growth.powf(progress);

        let nonempty = lots.iter().filter(|&&l| l > 0).count();
        let mut pick = rng.random_range(0..nonempty);
        let mut src = 0;
        for (i, &l) in lots.iter().enumerate() {
            if l > 0 {
                if pick == 0 {
                    src = i;
                    break;
                }
                pick -= 1;
            }
        }
        let mut dst = rng.random_range(0..k - 1);
        if dst >= src {
            dst += 1;
        }

        let delta_quad = 2.0 * (sigma_x[dst] - sigma_x[src]) + stats.covariance[src][src]
            + stats.covariance[dst][dst]
            - 2.0 * stats.covariance[src][dst];
        let delta_utility = scale * delta_quad - (stats.returns[dst] - stats.returns[src]);
        let new_cost = cost + stats.prices[dst] - stats.prices[src];
        let new_measure = match gap_data {
            Some((powers, _)) => measure + powers[dst] - powers[src],
            None => 0.0,
        };
        let delta_penalty = weight * (soft_violation(new_cost, new_measure) - soft_violation(cost, measure));
        let delta = delta_utility + delta_penalty;
        let accept = delta <= 0.0 || rng.random::<f64>() < (-delta / temperature).exp();
        if !accept {
            continue;
        }
        lots[src] -= 1;
        lots[dst] += 1;
        cost = new_cost;
        measure = new_measure;
        utility += delta_utility;
        for (l, row) in sigma_x.iter_mut().enumerate() {
            *row += stats.covariance[l][dst] - stats.covariance[l][src];
        }
        if quick_ok(cost, measure) {
            let candidate_better = best
                .as_ref()
                .is_none_or(|(u, _)| utility < u + 1e-9);
            if candidate_better {
                consider_best(&lots, &mut best);
            }
        }
    }

    // Deterministic zero-temperature tail from the best point seen (or the
    // final chain state when nothing feasible showed up).
    let mut descent_start = match &best {
        Some((_, b)) => b.clone(),
        None => lots.clone(),
    };
    greedy_descent(
        &mut descent_start,
        problem,
        20 * n as usize + 100,
    );
    consider_best(&descent_start, &mut best);

    match best {
        Some((_, lots)) => finish_outcome(lots, problem),
        None => finish_outcome(descent_start, problem),
    }
}

fn merge_outcomes(
    outcomes: Vec<ChainOutcome>,
    problem: &DiscreteProblem,
    sampler: SamplerChoice,
    config: &SamplerConfig,
    started: Instant,
) -> Result<SolveResult> {
    let mut winner: Option<usize> = None;
    for (i, o) in outcomes.iter().enumerate() {
        let replace = match winner {
            None => true,
            Some(w) => {
                let b = &outcomes[w];
                is_better(
                    o.feasible, o.utility, o.violation, &o.lots, b.feasible, b.utility,
                    b.violation, &b.lots,
                )
            }
        };
        if replace {
            winner = Some(i);
        }
    }
    let w = winner.expect("at least one restart");
    let best = outcomes[w].lots.clone();
    let report = check_feasible(&best, problem)?;
    Ok(SolveResult {
        utility: outcomes[w].utility,
        feasible: outcomes[w].feasible,
        report,
        provenance: Provenance {
            sampler: sampler.as_str().into(),
            config: Some(*config),
            best_bits: outcomes[w].bits.clone(),
            qubo_energy: outcomes[w].qubo_energy,
            wall_time: started.elapsed(),
        },
        samples: outcomes
            .into_iter()
            .map(|o| SampleRecord {
                lots: o.lots,
                utility: o.utility,
                feasible: o.feasible,
            })
            .collect(),
        best,
    })
}

/// Simulated annealing in lot space. Moves transfer one lot between assets,
/// so the lot-sum holds at every step; caps act as adaptive soft penalties
/// during the walk and are re-checked exactly on every candidate best.
pub fn solve_sa_integer(problem: &DiscreteProblem, config: &SamplerConfig) -> Result<SolveResult> {
    config.validate()?;
    let started = Instant::now();
    let gap_data = match &problem.esg {
        Some(cap) => Some(gap_powers(cap)?),
        None => None,
    };
    let n = problem.n_tot as f64;
    let spread = 0.5 * problem.phi_c / n * n * n * linalg::max_abs_entry(&problem.stats.covariance)
        + n * problem
            .stats
            .returns
            .iter()
            .fold(0.0f64, |acc, r| acc.max(r.abs()))
        + 1e-9;
    let (t_hi, t_lo) = config.ladder(spread);
    let outcomes: Vec<ChainOutcome> = (0..config.restarts)
        .into_par_iter()
        .map(|restart| {
            sa_integer_restart(
                problem,
                &gap_data,
                config.sweeps,
                t_hi,
                t_lo,
                spread,
                config.seed.wrapping_add(u64::from(restart)),
            )
        })
        .collect();
    merge_outcomes(outcomes, problem, SamplerChoice::SaInteger, config, started)
}

fn sa_qubo_restart(
    problem: &DiscreteProblem,
    instance: &QuboInstance,
    neighbors: &[Vec<(usize, f64)>],
    sweeps: u32,
    t_hi: f64,
    t_lo: f64,
    seed: u64,
) -> ChainOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_bits = instance.num_bits;

    // Warm start: a random composition, slack registers preloaded with the
    // residual each cap would need to close exactly.
    let lots = sample_composition(&mut rng, problem.n_tot, problem.k());
    let budget_slack = instance
        .decode_map
        .budget_slack
        .as_ref()
        .map(|reg| {
            let spent: i128 = lots
                .iter()
                .zip(&problem.stats.prices)
                .map(|(&l, &p)| (p * 100.0).round() as i128 * l as i128)
                .sum();
            let budget = problem
                .budget
                .map(|b| (b * 100.0).round() as i128)
                .unwrap_or(0);
            (budget - spent).clamp(0, reg.max_value() as i128) as u64
        })
        .unwrap_or(0);
    let esg_slack = instance
        .decode_map
        .esg_slack
        .as_ref()
        .map(|reg| {
            let cap = problem.esg.as_ref().expect("slack register implies cap");
            let (best, _) = cap.table.uniform_scale().expect("validated at encode");
            let used: i128 = lots
                .iter()
                .zip(&cap.table.scores)
                .map(|(&l, &s)| ((best - s).abs() * 1000.0).round() as i128 * l as i128)
                .sum();
            let bound = (cap.max_distance * problem.n_tot as f64 * 1000.0).round() as i128;
            (bound - used).clamp(0, reg.max_value() as i128) as u64
        })
        .unwrap_or(0);
    let mut bits = instance
        .encode_assignment(&lots, budget_slack, esg_slack)
        .expect("composition fits the registers");

    // Local fields: flipping bit i changes the energy by (1 − 2aᵢ)·fᵢ.
    let mut field: Vec<f64> = instance.linear.clone();
    for (i, nbrs) in neighbors.iter().enumerate() {
        for &(j, w) in nbrs {
            if bits[j] {
                field[i] += w;
            }
        }
    }
    let mut energy = instance.energy(&bits).expect("length matches");
    let mut best_energy = energy;
    let mut best_bits = bits.clone();

    let steps = sweeps.max(1);
    let ratio = t_lo / t_hi;
    for step in 0..steps {
        let progress = if steps == 1 {
            0.0
        } else {
            f64::from(step) / f64::from(steps - 1)
        };
        let temperature = t_hi * ratio.powf(progress);
        let i = rng.random_range(0..num_bits);
        let delta = if bits[i] { -field[i] } else { field[i] };
        let accept = delta <= 0.0 || rng.random::<f64>() < (-delta / temperature).exp();
        if !accept {
            continue;
        }
        bits[i] = !bits[i];
        energy += delta;
        let sign = if bits[i] { 1.0 } else { -1.0 };
        for &(j, w) in &neighbors[i] {
            field[j] += sign * w;
        }
        if energy < best_energy + 1e-9 {
            let exact = instance.energy(&bits).expect("length matches");
            if exact < best_energy {
                best_energy = exact;
                best_bits.copy_from_slice(&bits);
            }
        }
    }

    // Zero-temperature sweep on the best assignment, fields rebuilt fresh.
    let mut field: Vec<f64> = instance.linear.clone();
    for (i, nbrs) in neighbors.iter().enumerate() {
        for &(j, w) in nbrs {
            if best_bits[j] {
                field[i] += w;
            }
        }
    }
    for _pass in 0..200 {
        let mut improved = false;
        for i in 0..num_bits {
            let delta = if best_bits[i] { -field[i] } else { field[i] };
            if delta < 0.0 {
                best_bits[i] = !best_bits[i];
                let sign = if best_bits[i] { 1.0 } else { -1.0 };
                for &(j, w) in &neighbors[i] {
                    field[j] += sign * w;
                }
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    let final_energy = instance.energy(&best_bits).expect("length matches");

    let decoded_lots = instance.decode_lots(&best_bits).expect("length matches");
    let e = evaluate(&decoded_lots, problem);
    ChainOutcome {
        lots: decoded_lots,
        utility: e.utility,
        feasible: e.feasible,
        violation: e.violation,
        bits: Some(best_bits),
        qubo_energy: Some(final_energy),
    }
}

/// Simulated annealing over the compiled QUBO bits with explicit penalty
/// weights; `None` selects the automatic weights.
pub fn solve_sa_qubo_with(
    problem: &DiscreteProblem,
    config: &SamplerConfig,
    penalties: Option<PenaltyWeights>,
) -> Result<SolveResult> {
    config.validate()?;
    let started = Instant::now();
    let instance = encode(problem, penalties)?;
    let mut neighbors: Vec<Vec<(usize, f64)>> = vec![Vec::new(); instance.num_bits];
    for (&(i, j), &w) in &instance.quadratic {
        neighbors[i as usize].push((j as usize, w));
        neighbors[j as usize].push((i as usize, w));
    }
    // Schedule runs on the objective scale; constraint penalties sit far
    // above it on purpose, and the warm start keeps chains near the
    // feasible manifold instead of asking the ladder to cross them.
    let objective_spread = 0.5 * instance.penalty_weights.lambda_sum.abs().max(2e-9);
    let (t_hi, t_lo) = config.ladder(objective_spread);
    let outcomes: Vec<ChainOutcome> = (0..config.restarts)
        .into_par_iter()
        .map(|restart| {
            sa_qubo_restart(
                problem,
                &instance,
                &neighbors,
                config.sweeps,
                t_hi,
                t_lo,
                config.seed.wrapping_add(u64::from(restart)),
            )
        })
        .collect();
    merge_outcomes(outcomes, problem, SamplerChoice::SaQubo, config, started)
}

/// Simulated annealing over the compiled QUBO bits with automatic penalties.
pub fn solve_sa_qubo(problem: &DiscreteProblem, config: &SamplerConfig) -> Result<SolveResult> {
    solve_sa_qubo_with(problem, config, None)
}

pub fn solve(
    choice: SamplerChoice,
    problem: &DiscreteProblem,
    config: &SamplerConfig,
) -> Result<SolveResult> {
    match choice {
        SamplerChoice::Exhaustive => solve_exhaustive(problem),
        SamplerChoice::SaInteger => solve_sa_integer(problem, config),
        SamplerChoice::SaQubo => solve_sa_qubo(problem, config),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStep {
    pub n_tot: u64,
    /// Remaining budget at this lot count; absent when infeasible.
    pub slack: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub n_tot: u64,
    pub result: SolveResult,
    pub trace: Vec<CalibrationStep>,
}

const CALIBRATION_STEP_CAP: usize = 400;

/// Grows N_tot from ⌊B/max price⌋ (5% steps) until the solved portfolio
/// leaves at most `slack_tol` of the budget unspent, or the problem turns
/// infeasible, in which case the last feasible result wins.
pub fn calibrate_ntot(
    stats: &MarketStats,
    phi_c: f64,
    budget: f64,
    esg: Option<EsgConstraint>,
    sampler: SamplerChoice,
    slack_tol: f64,
    config: &SamplerConfig,
) -> Result<Calibration> {
    stats.validate()?;
    if !budget.is_finite() || budget <= 0.0 {
        return Err(Error::Invalid(format!("budget must be positive, got {budget}")));
    }
    if !slack_tol.is_finite() || slack_tol < 0.0 {
        return Err(Error::Invalid(format!(
            "slack tolerance must be non-negative, got {slack_tol}"
        )));
    }
    let min_price = stats.prices.iter().cloned().fold(f64::INFINITY, f64::min);
    if budget < min_price {
        return Err(Error::Infeasible(format!(
            "no feasible lot count: budget {budget} is below the cheapest lot at {min_price}"
        )));
    }
    let max_price = stats.prices.iter().cloned().fold(0.0f64, f64::max);
    let mut n_tot = ((budget / max_price).floor() as u64).max(1);
    let mut trace = Vec::new();
    let mut last: Option<(u64, SolveResult)> = None;
    for _ in 0..CALIBRATION_STEP_CAP {
        let problem = DiscreteProblem::new(stats.clone(), phi_c, n_tot, Some(budget), esg.clone())?;
        let result = solve(sampler, &problem, config)?;
        if !result.feasible {
            trace.push(CalibrationStep {
                n_tot,
                slack: None,
            });
            break;
        }
        let slack = budget - result.report.spent;
        trace.push(CalibrationStep {
            n_tot,
            slack: Some(slack),
        });
        let done = slack <= slack_tol;
        last = Some((n_tot, result));
        if done {
            break;
        }
        n_tot += (n_tot as f64 * 0.05).ceil().max(1.0) as u64;
    }
    match last {
        Some((n_tot, result)) => Ok(Calibration {
            n_tot,
            result,
            trace,
        }),
        None => Err(Error::Infeasible(format!(
            "no feasible lot count: every tried N_tot overspends the budget {budget}"
        ))),
    }
}
