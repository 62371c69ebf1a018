//! Price and ESG ingestion, return/covariance estimation, and a seeded
//! synthetic market generator used by tests and demos.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Aligned closing prices: one row per date, one column per asset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceHistory {
    pub tickers: Vec<String>,
    pub dates: Vec<NaiveDate>,
    pub closes: Vec<Vec<f64>>,
}

impl PriceHistory {
    /// Validates shape, strictly increasing dates, and positive finite prices.
    pub fn new(tickers: Vec<String>, dates: Vec<NaiveDate>, closes: Vec<Vec<f64>>) -> Result<Self> {
        if tickers.is_empty() {
            return Err(Error::Invalid("no tickers".into()));
        }
        if dates.len() != closes.len() {
            return Err(Error::Dimension(format!(
                "{} dates but {} price rows",
                dates.len(),
                closes.len()
            )));
        }
        if dates.len() < 2 {
            return Err(Error::TooFewDates(dates.len()));
        }
        for w in dates.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Malformed(format!(
                    "dates not strictly increasing at {}",
                    w[1]
                )));
            }
        }
        for (row, date) in closes.iter().zip(&dates) {
            if row.len() != tickers.len() {
                return Err(Error::Dimension(format!(
                    "row for {date} has {} prices, expected {}",
                    row.len(),
                    tickers.len()
                )));
            }
            for (price, ticker) in row.iter().zip(&tickers) {
                if !price.is_finite() || *price <= 0.0 {
                    return Err(Error::NonPositivePrice {
                        ticker: ticker.clone(),
                        date: date.to_string(),
                        price: *price,
                    });
                }
            }
        }
        Ok(Self {
            tickers,
            dates,
            closes,
        })
    }

    pub fn num_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn num_rows(&self) -> usize {
        self.dates.len()
    }
}

/// Annualized first and second moments plus latest prices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketStats {
    /// Annualized expected simple returns, one per asset.
    pub returns: Vec<f64>,
    /// Annualized sample covariance of simple returns, row-major.
    pub covariance: Vec<Vec<f64>>,
    /// Latest closing price per asset.
    pub prices: Vec<f64>,
}

impl MarketStats {
    pub fn num_assets(&self) -> usize {
        self.returns.len()
    }

    /// Checks dimensions, positive prices, symmetry to 1e-10, and that the
    /// covariance is positive semidefinite up to eigenvalue round-off.
    pub fn validate(&self) -> Result<()> {
        let k = self.returns.len();
        if k == 0 {
            return Err(Error::Invalid("no assets".into()));
        }
        if self.prices.len() != k || self.covariance.len() != k {
            return Err(Error::Dimension(format!(
                "{} returns, {} prices, {} covariance rows",
                k,
                self.prices.len(),
                self.covariance.len()
            )));
        }
        for row in &self.covariance {
            if row.len() != k {
                return Err(Error::Dimension(format!(
                    "covariance row of length {}, expected {k}",
                    row.len()
                )));
            }
        }
        for (i, p) in self.prices.iter().enumerate() {
            if !p.is_finite() || *p <= 0.0 {
                return Err(Error::NonPositivePrice {
                    ticker: format!("asset {i}"),
                    date: "latest".into(),
                    price: *p,
                });
            }
        }
        if self.returns.iter().any(|r| !r.is_finite()) {
            return Err(Error::Invalid("non-finite expected return".into()));
        }
        let scale = linalg::max_abs_entry(&self.covariance).max(1.0);
        for i in 0..k {
            for j in (i + 1)..k {
                if (self.covariance[i][j] - self.covariance[j][i]).abs() > 1e-10 * scale {
                    return Err(Error::Invalid(format!(
                        "covariance not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let trace: f64 = (0..k).map(|i| self.covariance[i][i]).sum();
        let (min_eig, _) = linalg::sym_eig_range(&self.covariance);
        if min_eig < -1e-8 * trace.abs() {
            return Err(Error::NotPsd(min_eig));
        }
        Ok(())
    }
}

/// Per-asset sustainability scores with their scale endpoints.
///
/// `best` and `worst` give, per asset, the score of an ideally sustainable
/// and an ideally unsustainable company on that asset's scale. Scales may
/// differ across assets; orientation is free (best may be the low end).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EsgTable {
    pub tickers: Vec<String>,
    pub scores: Vec<f64>,
    pub best: Vec<f64>,
    pub worst: Vec<f64>,
}

impl EsgTable {
    pub fn new(
        tickers: Vec<String>,
        scores: Vec<f64>,
        best: Vec<f64>,
        worst: Vec<f64>,
    ) -> Result<Self> {
        let t = Self {
            tickers,
            scores,
            best,
            worst,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.tickers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tickers.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.tickers.len();
        if k == 0 {
            return Err(Error::Invalid("empty score table".into()));
        }
        if self.scores.len() != k || self.best.len() != k || self.worst.len() != k {
            return Err(Error::Dimension("score table columns differ in length".into()));
        }
        for i in 0..k {
            let (s, b, w) = (self.scores[i], self.best[i], self.worst[i]);
            if !s.is_finite() || !b.is_finite() || !w.is_finite() {
                return Err(Error::Invalid(format!(
                    "non-finite score entry for {}",
                    self.tickers[i]
                )));
            }
            if b == w {
                return Err(Error::DegenerateScale(b));
            }
            let (lo, hi) = (b.min(w), b.max(w));
            if s < lo || s > hi {
                return Err(Error::ScoreOutOfScale {
                    ticker: self.tickers[i].clone(),
                    score: s,
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }

    /// The common (best, worst) scale, or an error naming the first asset
    /// whose scale differs from asset 0's.
    pub fn uniform_scale(&self) -> Result<(f64, f64)> {
        self.validate()?;
        let (b0, w0) = (self.best[0], self.worst[0]);
        for i in 1..self.len() {
            if self.best[i] != b0 || self.worst[i] != w0 {
                return Err(Error::MixedScales(format!(
                    "{} uses ({}, {}), {} uses ({}, {})",
                    self.tickers[0], b0, w0, self.tickers[i], self.best[i], self.worst[i]
                )));
            }
        }
        Ok((b0, w0))
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_f64(field: &str, what: &str, line: u64) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Malformed(format!("line {line}: cannot parse {what} {field:?}")))
}

/// Loads long-format `date,ticker,close` CSV, keeping the requested tickers
/// in the given order and only the dates on which all of them traded.
pub fn load_prices(path: &Path, tickers: &[String]) -> Result<PriceHistory> {
    if tickers.is_empty() {
        return Err(Error::Invalid("no tickers requested".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for t in tickers {
        if !seen.insert(t.as_str()) {
            return Err(Error::Invalid(format!("ticker {t} requested twice")));
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => io_err(path, io),
            other => Error::Malformed(format!("{other:?}")),
        })?;
    {
        let headers = reader
            .headers()
            .map_err(|e| Error::Malformed(e.to_string()))?;
        let got: Vec<String> = headers.iter().map(|h| h.to_ascii_lowercase()).collect();
        if got != ["date", "ticker", "close"] {
            return Err(Error::Malformed(format!(
                "expected header date,ticker,close, found {}",
                got.join(",")
            )));
        }
    }
    let index: BTreeMap<&str, usize> = tickers
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    let mut by_date: BTreeMap<NaiveDate, Vec<Option<f64>>> = BTreeMap::new();
    let mut found = vec![false; tickers.len()];
    for (row, record) in reader.records().enumerate() {
        let line = row as u64 + 2;
        let record = record.map_err(|e| Error::Malformed(format!("line {line}: {e}")))?;
        if record.len() != 3 {
            return Err(Error::Malformed(format!(
                "line {line}: expected 3 fields, found {}",
                record.len()
            )));
        }
        let Some(&col) = index.get(&record[1]) else {
            continue;
        };
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|_| Error::Malformed(format!("line {line}: bad date {:?}", &record[0])))?;
        let close = parse_f64(&record[2], "close", line)?;
        if !close.is_finite() || close <= 0.0 {
            return Err(Error::NonPositivePrice {
                ticker: record[1].to_string(),
                date: date.to_string(),
                price: close,
            });
        }
        found[col] = true;
        let slot = &mut by_date.entry(date).or_insert_with(|| vec![None; tickers.len()])[col];
        if slot.is_some() {
            return Err(Error::Malformed(format!(
                "duplicate close for {} on {date}",
                &record[1]
            )));
        }
        *slot = Some(close);
    }
    for (t, ok) in tickers.iter().zip(&found) {
        if !ok {
            return Err(Error::UnknownTicker(t.clone()));
        }
    }
    let mut dates = Vec::new();
    let mut closes = Vec::new();
    for (date, row) in by_date {
        if row.iter().all(Option::is_some) {
            dates.push(date);
            closes.push(row.into_iter().map(Option::unwrap).collect());
        }
    }
    if dates.len() < 2 {
        return Err(Error::TooFewDates(dates.len()));
    }
    PriceHistory::new(tickers.to_vec(), dates, closes)
}

/// Simple returns from consecutive closes, annualized mean and sample
/// covariance (unbiased, scaled by `periods_per_year`), latest prices.
pub fn estimate_stats(history: &PriceHistory, periods_per_year: u32) -> Result<MarketStats> {
    if periods_per_year == 0 {
        return Err(Error::Invalid("periods_per_year must be positive".into()));
    }
    let rows = history.num_rows();
    if rows < 3 {
        return Err(Error::TooFewRows(rows));
    }
    let k = history.num_assets();
    let t = rows - 1;
    let mut samples = vec![vec![0.0; k]; t];
    for s in 0..t {
        for a in 0..k {
            samples[s][a] = history.closes[s + 1][a] / history.closes[s][a] - 1.0;
        }
    }
    let ppy = f64::from(periods_per_year);
    let mut mean = vec![0.0; k];
    for a in 0..k {
        let mut acc = 0.0;
        for row in &samples {
            acc += row[a];
        }
        mean[a] = acc / t as f64;
    }
    let mut covariance = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let mut acc = 0.0;
            for row in &samples {
                acc += (row[i] - mean[i]) * (row[j] - mean[j]);
            }
            let c = ppy * acc / (t - 1) as f64;
            covariance[i][j] = c;
            covariance[j][i] = c;
        }
    }
    let stats = MarketStats {
        returns: mean.iter().map(|m| m * ppy).collect(),
        covariance,
        prices: history.closes[rows - 1].clone(),
    };
    stats.validate()?;
    Ok(stats)
}

/// Loads `ticker,score,best,worst` CSV for the requested tickers, in order.
pub fn load_esg(path: &Path, tickers: &[String]) -> Result<EsgTable> {
    if tickers.is_empty() {
        return Err(Error::Invalid("no tickers requested".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => io_err(path, io),
            other => Error::Malformed(format!("{other:?}")),
        })?;
    {
        let headers = reader
            .headers()
            .map_err(|e| Error::Malformed(e.to_string()))?;
        let got: Vec<String> = headers.iter().map(|h| h.to_ascii_lowercase()).collect();
        if got != ["ticker", "score", "best", "worst"] {
            return Err(Error::Malformed(format!(
                "expected header ticker,score,best,worst, found {}",
                got.join(",")
            )));
        }
    }
    let mut rows: BTreeMap<String, (f64, f64, f64)> = BTreeMap::new();
    for (row, record) in reader.records().enumerate() {
        let line = row as u64 + 2;
        let record = record.map_err(|e| Error::Malformed(format!("line {line}: {e}")))?;
        if record.len() != 4 {
            return Err(Error::Malformed(format!(
                "line {line}: expected 4 fields, found {}",
                record.len()
            )));
        }
        let ticker = record[0].to_string();
        let score = parse_f64(&record[1], "score", line)?;
        let best = parse_f64(&record[2], "best", line)?;
        let worst = parse_f64(&record[3], "worst", line)?;
        if rows.insert(ticker.clone(), (score, best, worst)).is_some() {
            return Err(Error::Malformed(format!("duplicate score row for {ticker}")));
        }
    }
    let mut scores = Vec::with_capacity(tickers.len());
    let mut best = Vec::with_capacity(tickers.len());
    let mut worst = Vec::with_capacity(tickers.len());
    for t in tickers {
        let Some(&(s, b, w)) = rows.get(t) else {
            return Err(Error::UnknownTicker(t.clone()));
        };
        scores.push(s);
        best.push(b);
        worst.push(w);
    }
    EsgTable::new(tickers.to_vec(), scores, best, worst)
}

/// Deterministic synthetic market: `k` correlated geometric random walks
/// over `t` dates, with final prices spread over [20, 300) and scores on a
/// best-4 / worst-1 scale. Same seed, same market.
pub fn synthesize_market(seed: u64, k: usize, t: usize) -> Result<(PriceHistory, EsgTable)> {
    if k == 0 {
        return Err(Error::Invalid("need at least one asset".into()));
    }
    if t < 3 {
        return Err(Error::Invalid(format!(
            "need at least 3 dates to later estimate moments, got {t}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ppy: f64 = 252.0;
    let mut drift = Vec::with_capacity(k);
    let mut vol = Vec::with_capacity(k);
    let mut load = Vec::with_capacity(k);
    let mut target = Vec::with_capacity(k);
    let mut scores = Vec::with_capacity(k);
    for _ in 0..k {
        drift.push(rng.random_range(0.03..0.16));
        vol.push(rng.random_range(0.12..0.32));
        // Common-factor loading; idiosyncratic part keeps unit variance.
        load.push(rng.random_range(0.2..0.7));
        target.push(rng.random_range(20.0..300.0));
        scores.push(1.0 + 0.5 * rng.random_range(0..7u32) as f64);
    }
    let mut log_prices = vec![vec![0.0f64; k]; t];
    for row in 1..t {
        let factor: f64 = rng.sample(StandardNormal);
        for a in 0..k {
            let eps: f64 = rng.sample(StandardNormal);
            let shock = load[a] * factor + (1.0 - load[a] * load[a]).sqrt() * eps;
            let step = (drift[a] - 0.5 * vol[a] * vol[a]) / ppy + vol[a] / ppy.sqrt() * shock;
            log_prices[row][a] = log_prices[row - 1][a] + step;
        }
    }
    // Rescale each path so its final close hits the drawn target; a common
    // multiplier per asset leaves returns, and hence the moments, unchanged.
    let mut closes = vec![vec![0.0f64; k]; t];
    for a in 0..k {
        let scale = target[a] / log_prices[t - 1][a].exp();
        for row in 0..t {
            closes[row][a] = scale * log_prices[row][a].exp();
        }
    }
    let start = NaiveDate::from_ymd_opt(2010, 1, 1).expect("valid date");
    let dates: Vec<NaiveDate> = (0..t)
        .map(|i| start.checked_add_days(Days::new(i as u64)).expect("in range"))
        .collect();
    let tickers: Vec<String> = (0..k).map(|i| format!("SYN{i:02}")).collect();
    let history = PriceHistory::new(tickers.clone(), dates, closes)?;
    let esg = EsgTable::new(tickers, scores, vec![4.0; k], vec![1.0; k])?;
    Ok((history, esg))
}
