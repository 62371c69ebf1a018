//! Mean-variance portfolio construction over real weights and integer lots.
//!
//! The crate covers the full pipeline: price ingestion and moment
//! estimation, the continuous long-only problem on the simplex, the
//! integer-lot problem with budget and ESG-distance constraints, an exact
//! binary-quadratic (QUBO) compilation of that problem, exhaustive and
//! annealing-style solvers, and risk/return frontier sampling.

pub mod continuous;
pub mod discrete;
pub mod error;
pub mod esg;
pub mod frontier;
mod linalg;
pub mod market;
pub mod qubo;
pub mod solvers;

pub use continuous::{ContinuousSolution, RoundedAllocation};
pub use discrete::{DiscreteProblem, EsgConstraint, FeasibilityReport, PortfolioPoint};
pub use error::{Error, Result};
pub use frontier::{CloudMode, FrontierCloud};
pub use market::{EsgTable, MarketStats, PriceHistory};
pub use qubo::{QuboInstance, SpinInstance};
pub use solvers::{Calibration, SamplerChoice, SamplerConfig, SolveResult};
