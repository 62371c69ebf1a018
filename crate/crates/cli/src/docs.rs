//! The JSON documents the binary writes and the verifier reads back.
//!
//! Every field is either configuration (enough to rebuild the problem from
//! the raw input files) or a value recomputable from that configuration, so
//! a result file can be audited without the manifest.

use dmpt_core::discrete::PortfolioPoint;
use dmpt_core::solvers::{CalibrationStep, SolveResult};
use serde::{Deserialize, Serialize};

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ResultDoc {
    Continuous(ContinuousDoc),
    Discrete(DiscreteDoc),
}

#[derive(Serialize, Deserialize)]
pub struct ContinuousDoc {
    pub tickers: Vec<String>,
    pub phi: f64,
    pub tol: f64,
    pub weights: Vec<f64>,
    pub utility: f64,
    pub iterations: u64,
    pub residual: f64,
    pub point: PortfolioPoint,
    pub rounded: Option<RoundedDoc>,
}

#[derive(Serialize, Deserialize)]
pub struct RoundedDoc {
    pub lots: Vec<u64>,
    pub n_tot: u64,
    pub spent: f64,
    pub budget: f64,
    pub violation: f64,
}

#[derive(Serialize, Deserialize)]
pub struct EsgCapDoc {
    pub max_distance: f64,
    pub order: f64,
}

#[derive(Serialize, Deserialize)]
pub struct BaselineDoc {
    pub lots: Vec<u64>,
    pub n_tot: u64,
    pub utility: f64,
    pub spent: f64,
    pub violation: f64,
    pub point: PortfolioPoint,
}

#[derive(Serialize, Deserialize)]
pub struct GapsDoc {
    pub solution: f64,
    pub baseline: f64,
}

#[derive(Serialize, Deserialize)]
pub struct CalibrationDoc {
    pub n_tot: u64,
    pub trace: Vec<CalibrationStep>,
}

#[derive(Serialize, Deserialize)]
pub struct DiscreteDoc {
    pub tickers: Vec<String>,
    /// Risk aversion as given on the command line.
    pub phi: f64,
    pub rescale_phi: bool,
    /// Continuous-scale risk aversion actually optimized: `phi` when
    /// rescaling is on, `phi · n_tot` when it is off.
    pub effective_phi_c: f64,
    pub n_tot: u64,
    pub budget: Option<f64>,
    pub esg: Option<EsgCapDoc>,
    pub sampler: String,
    pub result: SolveResult,
    /// Lots normalized by the lot total.
    pub weights: Vec<f64>,
    pub point: PortfolioPoint,
    pub calibration: Option<CalibrationDoc>,
    pub baseline: Option<BaselineDoc>,
    pub gaps: Option<GapsDoc>,
}

/// Pretty JSON with a trailing newline; the byte layout reruns must match.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("documents serialize");
    bytes.push(b'\n');
    bytes
}
