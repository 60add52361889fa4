//! Observed option chains: quote records, daily grouping, and the chain CSV
//! interchange format.
//!
//! Chain CSV columns, in this exact order:
//! `date, maturity_date, strike, type{C,P}, bid, ask, spot, underlying_id`
//! with ISO-8601 dates and prices quoted to at most 2 decimal places.

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::fmt12;
use crate::types::{MarketState, OptionKind, OptionSpec};

/// One quoted option with bid/ask (when available) and the working mid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quote {
    pub opt: OptionSpec,
    pub bid: Option<f64>,
    pub ask: Option<f64>,
    pub mid: f64,
}

impl Quote {
    /// Equal-weight bid/ask average as the mid.
    pub fn from_bid_ask(opt: OptionSpec, bid: f64, ask: f64) -> Result<Self> {
        if !(bid <= ask) {
            return Err(Error::invalid(format!("bid {bid} above ask {ask}")));
        }
        Ok(Quote { opt, bid: Some(bid), ask: Some(ask), mid: 0.5 * (bid + ask) })
    }

    /// Frictionless quote with no spread.
    pub fn from_mid(opt: OptionSpec, mid: f64) -> Self {
        Quote { opt, bid: None, ask: None, mid }
    }
}

/// An option chain at one valuation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteSet {
    pub quotes: Vec<Quote>,
    pub mkt: MarketState,
}

impl QuoteSet {
    pub fn new(quotes: Vec<Quote>, mkt: MarketState) -> Result<Self> {
        for (i, q) in quotes.iter().enumerate() {
            if q.opt.maturity <= mkt.time_now {
                return Err(Error::invalid(format!(
                    "quote {i} expires at {} which is not after valuation time {}",
                    q.opt.maturity, mkt.time_now
                )));
            }
            if let (Some(b), Some(a)) = (q.bid, q.ask) {
                if !(b <= q.mid && q.mid <= a) {
                    return Err(Error::invalid(format!(
                        "quote {i} violates bid <= mid <= ask: {b} / {} / {a}",
                        q.mid
                    )));
                }
            }
        }
        Ok(QuoteSet { quotes, mkt })
    }

    pub fn len(&self) -> usize {
        self.quotes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quotes.is_empty()
    }

    /// Distinct maturities in ascending order.
    pub fn maturities(&self) -> Vec<f64> {
        let mut taus: Vec<f64> = self.quotes.iter().map(|q| q.opt.maturity).collect();
        taus.sort_by(|a, b| a.partial_cmp(b).unwrap());
        taus.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        taus
    }

    /// Mid prices in quote order.
    pub fn mids(&self) -> Vec<f64> {
        self.quotes.iter().map(|q| q.mid).collect()
    }
}

/// Term structure of per-maturity discount rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    /// (maturity in years, continuously compounded rate), ascending.
    entries: Vec<(f64, f64)>,
}

impl RateCurve {
    pub fn flat(rate: f64) -> Self {
        RateCurve { entries: vec![(0.0, rate)] }
    }

    pub fn new(mut entries: Vec<(f64, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("rate curve needs at least one entry"));
        }
        entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Ok(RateCurve { entries })
    }

    /// Rate for the entry nearest to `tau`.
    pub fn rate_for(&self, tau: f64) -> f64 {
        self.entries
            .iter()
            .min_by(|a, b| {
                (a.0 - tau).abs().partial_cmp(&(b.0 - tau).abs()).unwrap()
            })
            .map(|e| e.1)
            .unwrap()
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }
}

/// One parsed chain CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRow {
    pub date: NaiveDate,
    pub maturity_date: NaiveDate,
    pub strike: f64,
    pub kind: OptionKind,
    pub bid: f64,
    pub ask: f64,
    pub spot: f64,
    pub underlying_id: String,
}

/// All rows for one trading day.
#[derive(Debug, Clone)]
pub struct DailyChain {
    pub date: NaiveDate,
    pub spot: f64,
    pub rows: Vec<ChainRow>,
}

impl DailyChain {
    /// Quotes paired with business days to maturity; year fractions are
    /// calendar days / 365.
    pub fn quotes(&self) -> Vec<(Quote, i64)> {
        self.rows
            .iter()
            .filter_map(|r| {
                let tau = (r.maturity_date - r.date).num_days() as f64 / 365.0;
                let opt = OptionSpec::new(r.strike, tau, r.kind).ok()?;
                let q = Quote::from_bid_ask(opt, r.bid, r.ask).ok()?;
                Some((q, business_days_between(r.date, r.maturity_date)))
            })
            .collect()
    }
}

/// Count of business days d with a < d <= b (weekends excluded; no holiday
/// calendar).
pub fn business_days_between(a: NaiveDate, b: NaiveDate) -> i64 {
    if b <= a {
        return 0;
    }
    let mut count = 0;
    let mut d = a;
    while d < b {
        d = d.succ_opt().expect("date overflow");
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            count += 1;
        }
    }
    count
}

/// Per-file report of skipped rows.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SkipReport {
    pub parsed: usize,
    pub skipped: Vec<(usize, String)>,
}

/// Read a chain CSV, grouping rows into daily chains (dates ascending).
/// Malformed rows are skipped and reported rather than failing the file.
pub fn read_chain_csv(path: &Path) -> Result<(Vec<DailyChain>, SkipReport)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut report = SkipReport::default();
    let mut rows: Vec<ChainRow> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // header is line 1
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                report.skipped.push((line, e.to_string()));
                continue;
            }
        };
        match parse_row(&record) {
            Ok(row) => {
                report.parsed += 1;
                rows.push(row);
            }
            Err(e) => report.skipped.push((line, e.to_string())),
        }
    }
    rows.sort_by_key(|r| r.date);
    let mut days: Vec<DailyChain> = Vec::new();
    for row in rows {
        match days.last_mut() {
            Some(day) if day.date == row.date => day.rows.push(row),
            _ => days.push(DailyChain { date: row.date, spot: row.spot, rows: vec![row] }),
        }
    }
    Ok((days, report))
}

fn parse_row(record: &csv::StringRecord) -> Result<ChainRow> {
    if record.len() < 8 {
        return Err(Error::Parse(format!("expected 8 columns, found {}", record.len())));
    }
    let field = |i: usize| record.get(i).unwrap_or("").trim();
    let date = NaiveDate::parse_from_str(field(0), "%Y-%m-%d")
        .map_err(|e| Error::Parse(format!("bad date {:?}: {e}", field(0))))?;
    let maturity_date = NaiveDate::parse_from_str(field(1), "%Y-%m-%d")
        .map_err(|e| Error::Parse(format!("bad maturity_date {:?}: {e}", field(1))))?;
    let num = |i: usize, name: &str| -> Result<f64> {
        field(i)
            .parse::<f64>()
            .map_err(|e| Error::Parse(format!("bad {name} {:?}: {e}", field(i))))
    };
    let strike = num(2, "strike")?;
    let kind = OptionKind::parse(field(3))?;
    let bid = num(4, "bid")?;
    let ask = num(5, "ask")?;
    let spot = num(6, "spot")?;
    if maturity_date <= date {
        return Err(Error::Parse("maturity_date must follow date".into()));
    }
    if !(strike > 0.0) || !(spot > 0.0) {
        return Err(Error::Parse("strike and spot must be positive".into()));
    }
    if bid < 0.0 || ask < bid {
        return Err(Error::Parse(format!("bad bid/ask pair {bid}/{ask}")));
    }
    Ok(ChainRow {
        date,
        maturity_date,
        strike,
        kind,
        bid,
        ask,
        spot,
        underlying_id: field(7).to_string(),
    })
}

/// Write rows in the chain CSV format.
pub fn write_chain_csv(path: &Path, rows: &[ChainRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", "maturity_date", "strike", "type", "bid", "ask", "spot", "underlying_id"])?;
    for r in rows {
        w.write_record([
            r.date.format("%Y-%m-%d").to_string(),
            r.maturity_date.format("%Y-%m-%d").to_string(),
            fmt12(r.strike),
            r.kind.code().to_string(),
            format!("{:.2}", r.bid),
            format!("{:.2}", r.ask),
            fmt12(r.spot),
            r.underlying_id.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
