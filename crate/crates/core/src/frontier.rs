//! Random portfolio clouds in volatility-return space, the piecewise-linear
//! upper envelope over volatility bins, and the vertical distance of a point
//! from that envelope.
//!
//! Sampling is chunked; each chunk reseeds its own generator from the base
//! seed and the chunk index, so the cloud is identical at any thread count.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discrete::{portfolio_point, sample_composition, PortfolioPoint};
use crate::error::{Error, Result};
use crate::market::MarketStats;

pub const DEFAULT_BINS: usize = 50;

const CHUNK: usize = 4096;
const CHUNK_SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum CloudMode {
    /// Uniform weights on the simplex (symmetric Dirichlet, concentration 1).
    Continuous,
    /// Uniform random compositions of `n_tot` whole lots.
    Discrete { n_tot: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    /// Originating weights; for discrete draws these are lots / N_tot.
    pub weights: Vec<f64>,
    pub point: PortfolioPoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierCloud {
    pub mode: CloudMode,
    pub points: Vec<CloudPoint>,
    /// Upper boundary knots over [`DEFAULT_BINS`] volatility bins, sorted by
    /// volatility. Recompute at another resolution with [`envelope`].
    pub envelope: Vec<PortfolioPoint>,
}

/// Draws `n_samples` random portfolios and their volatility-return points.
pub fn sample_cloud(
    stats: &MarketStats,
    n_samples: usize,
    mode: CloudMode,
    seed: u64,
) -> Result<FrontierCloud> {
    stats.validate()?;
    if n_samples == 0 {
        return Err(Error::Invalid("sample count must be positive".into()));
    }
    if let CloudMode::Discrete { n_tot } = mode {
        if n_tot == 0 {
            return Err(Error::Invalid("total lot count must be positive".into()));
        }
    }
    let k = stats.num_assets();
    let chunks = n_samples.div_ceil(CHUNK);
    let per_chunk: Vec<Vec<CloudPoint>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let chunk_seed =
                seed.wrapping_add((chunk as u64).wrapping_mul(CHUNK_SEED_STRIDE));
            let mut rng = ChaCha8Rng::seed_from_u64(chunk_seed);
            let count = CHUNK.min(n_samples - chunk * CHUNK);
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let weights = match mode {
                    CloudMode::Continuous => {
                        // Normalized unit exponentials are Dirichlet(1,…,1).
                        let draws: Vec<f64> = (0..k)
                            .map(|_| -(1.0 - rng.random::<f64>()).ln())
                            .collect();
                        let total: f64 = draws.iter().sum();
                        draws.iter().map(|d| d / total).collect()
                    }
                    CloudMode::Discrete { n_tot } => sample_composition(&mut rng, n_tot, k)
                        .iter()
                        .map(|&l| l as f64 / n_tot as f64)
                        .collect::<Vec<f64>>(),
                };
                let point = portfolio_point(&weights, stats)?;
                out.push(CloudPoint { weights, point });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let points: Vec<CloudPoint> = per_chunk.into_iter().flatten().collect();
    let envelope = envelope(&points, DEFAULT_BINS);
    Ok(FrontierCloud {
        mode,
        points,
        envelope,
    })
}

/// Best return per volatility bin. Each knot sits at the volatility of the
/// bin's best point (first seen wins ties); empty bins are omitted, so knots
/// come out sorted by volatility. Empty input gives an empty envelope.
pub fn envelope(points: &[CloudPoint], n_bins: usize) -> Vec<PortfolioPoint> {
    if points.is_empty() || n_bins == 0 {
        return Vec::new();
    }
    let vmin = points
        .iter()
        .map(|p| p.point.volatility)
        .fold(f64::INFINITY, f64::min);
    let vmax = points
        .iter()
        .map(|p| p.point.volatility)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(vmax > vmin) {
        let best = points
            .iter()
            .max_by(|a, b| {
                a.point
                    .expected_return
                    .partial_cmp(&b.point.expected_return)
                    .expect("finite returns")
            })
            .expect("nonempty");
        return vec![best.point];
    }
    let width = vmax - vmin;
    let mut best: Vec<Option<PortfolioPoint>> = vec![None; n_bins];
    for p in points {
        let raw = ((p.point.volatility - vmin) / width * n_bins as f64) as usize;
        let bin = raw.min(n_bins - 1);
        let replace = match &best[bin] {
            None => true,
            Some(cur) => p.point.expected_return > cur.expected_return,
        };
        if replace {
            best[bin] = Some(p.point);
        }
    }
    best.into_iter().flatten().collect()
}

/// Envelope return at the point's volatility (linear between knots, clamped
/// to the nearest knot outside the range) minus the point's return. Positive
/// means the point sits below the frontier estimate.
pub fn frontier_gap(point: &PortfolioPoint, envelope: &[PortfolioPoint]) -> Result<f64> {
    if envelope.is_empty() {
        return Err(Error::Invalid("envelope has no knots".into()));
    }
    let v = point.volatility;
    let first = envelope[0];
    let last = envelope[envelope.len() - 1];
    let env_return = if v <= first.volatility {
        first.expected_return
    } else if v >= last.volatility {
        last.expected_return
    } else {
        let upper = envelope
            .iter()
            .position(|knot| knot.volatility >= v)
            .expect("v below the last knot");
        let hi = envelope[upper];
        let lo = envelope[upper - 1];
        if hi.volatility > lo.volatility {
            let t = (v - lo.volatility) / (hi.volatility - lo.volatility);
            lo.expected_return + t * (hi.expected_return - lo.expected_return)
        } else {
            lo.expected_return.max(hi.expected_return)
        }
    };
    Ok(env_return - point.expected_return)
}

/// Writes `volatility,return,w0,…` rows for external plotting.
pub fn write_cloud_csv<W: Write>(mut out: W, cloud: &FrontierCloud) -> Result<W> {
    let k = cloud.points.first().map_or(0, |p| p.weights.len());
    let mut header = String::from("volatility,return");
    for i in 0..k {
        header.push_str(&format!(",w{i}"));
    }
    writeln!(out, "{header}").map_err(io_err)?;
    for p in &cloud.points {
        let mut row = format!("{},{}", p.point.volatility, p.point.expected_return);
        for w in &p.weights {
            row.push_str(&format!(",{w}"));
        }
        writeln!(out, "{row}").map_err(io_err)?;
    }
    Ok(out)
}

/// Writes `volatility,return` knot rows.
pub fn write_envelope_csv<W: Write>(mut out: W, knots: &[PortfolioPoint]) -> Result<W> {
    writeln!(out, "volatility,return").map_err(io_err)?;
    for knot in knots {
        writeln!(out, "{},{}", knot.volatility, knot.expected_return).map_err(io_err)?;
    }
    Ok(out)
}

fn io_err(source: std::io::Error) -> Error {
    Error::Io {
        path: "<writer>".into(),
        source,
    }
}
