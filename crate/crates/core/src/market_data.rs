//! Price panels from CSV files and the simple-return panels built from them.
//!
//! Expected file layout: a header row, one date column, and one numeric
//! column per ticker. Cells that do not parse as numbers are kept as missing
//! values and removed later together with their whole return row.

use std::collections::HashSet;
use std::path::Path;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use nalgebra::DMatrix;

use crate::error::{LabError, Result};
use crate::stochastics::{RngStream, SamplePanel};

pub const DEFAULT_DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    pub dates: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    /// Dates by tickers; missing cells are NaN.
    pub prices: DMatrix<f64>,
}

impl PricePanel {
    pub fn new(dates: Vec<NaiveDate>, tickers: Vec<String>, prices: DMatrix<f64>) -> Result<Self> {
        if prices.nrows() != dates.len() || prices.ncols() != tickers.len() {
            return Err(LabError::Shape(format!(
                "{}x{} prices for {} dates and {} tickers",
                prices.nrows(),
                prices.ncols(),
                dates.len(),
                tickers.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(t) = tickers.iter().find(|t| !seen.insert(t.as_str())) {
            return Err(LabError::Domain(format!("duplicate ticker {t}")));
        }
        if let Some(w) = dates.windows(2).find(|w| w[1] <= w[0]) {
            return Err(if w[0] == w[1] {
                LabError::DuplicateDate(w[0].to_string())
            } else {
                LabError::Domain("dates must be increasing".into())
            });
        }
        Ok(Self { dates, tickers, prices })
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    /// Date of the later price in each return.
    pub dates: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    pub returns: DMatrix<f64>,
    /// Rows removed because some return was missing or not finite.
    pub dropped: usize,
}

impl ReturnsPanel {
    pub fn n_days(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.returns.ncols()
    }

    pub fn to_sample_panel(&self) -> Result<SamplePanel> {
        SamplePanel::new(self.returns.clone(), self.tickers.clone())
    }
}

fn data_error(path: &Path, message: impl Into<String>) -> LabError {
    LabError::Data { path: path.to_path_buf(), message: message.into() }
}

/// Reads a price CSV, sorting rows by date.
pub fn load_price_csv(path: &Path, date_column: &str, date_format: &str) -> Result<PricePanel> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| data_error(path, e.to_string()))?;
    let headers = reader.headers().map_err(|e| data_error(path, e.to_string()))?.clone();
    let date_idx = headers
        .iter()
        .position(|h| h == date_column)
        .ok_or_else(|| data_error(path, format!("no column named {date_column:?}")))?;
    let tickers: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != date_idx)
        .map(|(_, h)| h.to_string())
        .collect();
    if tickers.is_empty() {
        return Err(data_error(path, "no ticker columns"));
    }

    let mut rows: Vec<(NaiveDate, Vec<f64>)> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| data_error(path, e.to_string()))?;
        let raw_date = record.get(date_idx).unwrap_or("");
        let date = NaiveDate::parse_from_str(raw_date, date_format)
            .map_err(|e| data_error(path, format!("row {}: cannot parse date {raw_date:?}: {e}", line + 2)))?;
        let values = (0..record.len())
            .filter(|&i| i != date_idx)
            .map(|i| record.get(i).and_then(|c| c.parse::<f64>().ok()).unwrap_or(f64::NAN))
            .collect::<Vec<_>>();
        if values.len() != tickers.len() {
            return Err(data_error(path, format!("row {} has {} fields", line + 2, record.len())));
        }
        rows.push((date, values));
    }
    if rows.len() < 2 {
        return Err(data_error(path, format!("need at least 2 data rows, found {}", rows.len())));
    }
    rows.sort_by_key(|(d, _)| *d);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(LabError::DuplicateDate(w[0].0.to_string()));
    }
    let prices = DMatrix::from_fn(rows.len(), tickers.len(), |i, j| rows[i].1[j]);
    PricePanel::new(rows.into_iter().map(|(d, _)| d).collect(), tickers, prices)
}

/// Writes a panel in the layout `load_price_csv` expects.
pub fn write_price_csv(panel: &PricePanel, path: &Path, date_column: &str) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec![date_column.to_string()];
    header.extend(panel.tickers.iter().cloned());
    writer.write_record(&header)?;
    for (i, date) in panel.dates.iter().enumerate() {
        let mut record = vec![date.format(DEFAULT_DATE_FORMAT).to_string()];
        record.extend(panel.prices.row(i).iter().map(|p| if p.is_nan() { String::new() } else { p.to_string() }));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// `p_t / p_{t-1} - 1`, dropping every row with a missing or infinite entry.
pub fn to_simple_returns(panel: &PricePanel) -> Result<ReturnsPanel> {
    if panel.n_dates() < 2 {
        return Err(LabError::InsufficientData { needed: 2, got: panel.n_dates() });
    }
    let p = &panel.prices;
    let mut kept_rows = Vec::new();
    let mut dates = Vec::new();
    for t in 1..p.nrows() {
        let row: Vec<f64> = (0..p.ncols()).map(|j| p[(t, j)] / p[(t - 1, j)] - 1.0).collect();
        if row.iter().all(|r| r.is_finite()) {
            kept_rows.push(row);
            dates.push(panel.dates[t]);
        }
    }
    let dropped = p.nrows() - 1 - kept_rows.len();
    if kept_rows.is_empty() {
        return Err(LabError::EmptyReturns);
    }
    let returns = DMatrix::from_fn(kept_rows.len(), p.ncols(), |i, j| kept_rows[i][j]);
    Ok(ReturnsPanel { dates, tickers: panel.tickers.clone(), returns, dropped })
}

/// The first `n_days` rows and first `n_assets` columns.
pub fn subset(panel: &ReturnsPanel, n_days: usize, n_assets: usize) -> Result<ReturnsPanel> {
    if n_days == 0 || n_assets == 0 {
        return Err(LabError::Size(format!("requested an empty subset ({n_days} days, {n_assets} assets)")));
    }
    if panel.n_days() < n_days {
        return Err(LabError::Size(format!("need {n_days} days, panel has {} ({} short)", panel.n_days(), n_days - panel.n_days())));
    }
    if panel.n_assets() < n_assets {
        return Err(LabError::Size(format!(
            "need {n_assets} assets, panel has {} ({} short)",
            panel.n_assets(),
            n_assets - panel.n_assets()
        )));
    }
    Ok(ReturnsPanel {
        dates: panel.dates[..n_days].to_vec(),
        tickers: panel.tickers[..n_assets].to_vec(),
        returns: panel.returns.view((0, 0), (n_days, n_assets)).into_owned(),
        dropped: panel.dropped,
    })
}

/// Predictors for asset `asset` on each day `t >= window`: the returns at
/// `t - 1` and `t - 2` and the sample standard deviation of the `window`
/// returns before `t`. Labels are `1` when the return at `t` is positive.
pub fn lagged_features(panel: &ReturnsPanel, asset: usize, window: usize) -> Result<(SamplePanel, Vec<f64>)> {
    if window < 2 {
        return Err(LabError::Domain(format!("volatility window must be at least 2, got {window}")));
    }
    if asset >= panel.n_assets() {
        return Err(LabError::Shape(format!("asset {asset} of {}", panel.n_assets())));
    }
    let r = panel.returns.column(asset);
    let t_len = panel.n_days();
    if t_len <= window + 1 {
        return Err(LabError::InsufficientData { needed: window + 2, got: t_len });
    }
    let rows = t_len - window;
    let mut x = DMatrix::zeros(rows, 3);
    let mut labels = Vec::with_capacity(rows);
    for (i, t) in (window..t_len).enumerate() {
        let past = r.rows(t - window, window);
        let m = past.mean();
        let var = past.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (window - 1) as f64;
        x[(i, 0)] = r[t - 1];
        x[(i, 1)] = r[t - 2];
        x[(i, 2)] = var.sqrt();
        labels.push(if r[t] > 0.0 { 1.0 } else { 0.0 });
    }
    let panel = SamplePanel::new(x, vec!["lag1".into(), "lag2".into(), "trailing_vol".into()])?;
    Ok((panel, labels))
}

/// Weekdays starting at `start`.
pub fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

/// Seed of the bundled synthetic price fixture.
pub const FIXTURE_SEED: u64 = 20_240_601;

/// Geometric random walk: each ticker gets a drift in `[2e-4, 8e-4]` and a
/// daily volatility in `[0.01, 0.025]`, prices start at 100. Returns the
/// panel and the generating returns.
pub fn geometric_random_walk(stream: &RngStream, n_tickers: usize, n_days: usize) -> Result<(PricePanel, DMatrix<f64>)> {
    if n_days < 2 || n_tickers == 0 {
        return Err(LabError::Size(format!("{n_tickers} tickers over {n_days} days")));
    }
    let mut s = stream.sampler();
    let drift: Vec<f64> = (0..n_tickers).map(|_| s.uniform(2e-4, 8e-4)).collect();
    let vol: Vec<f64> = (0..n_tickers).map(|_| s.uniform(0.01, 0.025)).collect();
    let shocks = s.normal_matrix(n_days - 1, n_tickers);
    let returns = DMatrix::from_fn(n_days - 1, n_tickers, |t, j| drift[j] + vol[j] * shocks[(t, j)]);
    let mut prices = DMatrix::from_element(n_days, n_tickers, 100.0);
    for t in 1..n_days {
        for j in 0..n_tickers {
            prices[(t, j)] = prices[(t - 1, j)] * (1.0 + returns[(t - 1, j)]);
        }
    }
    let tickers = (0..n_tickers).map(|j| format!("SYN{j}")).collect();
    let start = NaiveDate::from_ymd_opt(2015, 1, 2).expect("valid date");
    Ok((PricePanel::new(business_days(start, n_days), tickers, prices)?, returns))
}

/// Prices whose simple returns all share the same sample mean, so the mean
/// vector is proportional to the ones vector.
pub fn equal_mean_walk(stream: &RngStream, n_tickers: usize, n_days: usize) -> Result<PricePanel> {
    if n_days < 3 || n_tickers == 0 {
        return Err(LabError::Size(format!("{n_tickers} tickers over {n_days} days")));
    }
    let mut s = stream.sampler();
    let mut shocks = s.normal_matrix(n_days - 1, n_tickers) * 0.01;
    for mut col in shocks.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    let mut prices = DMatrix::from_element(n_days, n_tickers, 50.0);
    for t in 1..n_days {
        for j in 0..n_tickers {
            prices[(t, j)] = prices[(t - 1, j)] * (1.0 + 5e-4 + shocks[(t - 1, j)]);
        }
    }
    let tickers = (0..n_tickers).map(|j| format!("EQ{j}")).collect();
    let start = NaiveDate::from_ymd_opt(2015, 1, 2).expect("valid date");
    PricePanel::new(business_days(start, n_days), tickers, prices)
}
