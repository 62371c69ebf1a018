//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("ticker {0} not present in input")]
    UnknownTicker(String),

    #[error("only {0} common dates across requested tickers, need at least 2")]
    TooFewDates(usize),

    #[error("non-positive price {price} for {ticker} on {date}")]
    NonPositivePrice {
        ticker: String,
        date: String,
        price: f64,
    },

    #[error("price history has {0} rows, need at least 3 to estimate moments")]
    TooFewRows(usize),

    #[error("score {score} for {ticker} outside its scale [{lo}, {hi}]")]
    ScoreOutOfScale {
        ticker: String,
        score: f64,
        lo: f64,
        hi: f64,
    },

    #[error("degenerate score scale: best and worst are both {0}")]
    DegenerateScale(f64),

    #[error("mixed per-asset score scales: {0}")]
    MixedScales(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("covariance is not positive semidefinite (witness {0:.3e})")]
    NotPsd(f64),

    #[error("did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        iterations: u64,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("search space of {count} states exceeds the exhaustive guard of {guard}")]
    GuardExceeded { count: String, guard: u64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}
