//! Input plumbing shared by the subcommands: ticker discovery, market
//! statistics from a price CSV, score tables.

use std::path::Path;

use dmpt_core::market::{estimate_stats, load_esg, load_prices, EsgTable, MarketStats};
use dmpt_core::{Error, Result};

pub fn parse_ticker_list(raw: &str) -> Vec<String> {
    raw.split(',')
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Tickers present in a long-format price CSV, in first-appearance order.
pub fn discover_tickers(path: &Path) -> Result<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let ticker_col = headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case("ticker"))
        .ok_or_else(|| {
            Error::Malformed(format!("{}: no 'ticker' column", path.display()))
        })?;
    let mut seen = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let ticker = record.get(ticker_col).unwrap_or_default();
        if !ticker.is_empty() && !seen.iter().any(|t| t == ticker) {
            seen.push(ticker.to_string());
        }
    }
    if seen.is_empty() {
        return Err(Error::Malformed(format!(
            "{}: no tickers found",
            path.display()
        )));
    }
    Ok(seen)
}

fn csv_err(path: &Path, source: csv::Error) -> Error {
    match source.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io {
            path: path.display().to_string(),
            source: io,
        },
        other => Error::Malformed(format!("{}: {other:?}", path.display())),
    }
}

/// Estimated moments for the requested tickers (or every ticker in the file,
/// in first-appearance order, when none are requested).
pub fn load_stats(
    prices: &Path,
    tickers: Option<&str>,
    periods_per_year: u32,
) -> Result<(Vec<String>, MarketStats)> {
    let tickers = match tickers {
        Some(raw) => {
            let list = parse_ticker_list(raw);
            if list.is_empty() {
                return Err(Error::Invalid("ticker list is empty".into()));
            }
            list
        }
        None => discover_tickers(prices)?,
    };
    let history = load_prices(prices, &tickers)?;
    let stats = estimate_stats(&history, periods_per_year)?;
    Ok((tickers, stats))
}

pub fn load_scores(path: &Path, tickers: &[String]) -> Result<EsgTable> {
    load_esg(path, tickers)
}
