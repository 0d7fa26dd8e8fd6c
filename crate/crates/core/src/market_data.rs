//! Ingest, validation and alignment of price panels and monthly exogenous
//! series (implied volatility, news-based uncertainty trackers).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time-aligned adjusted closing prices, one row per asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricePanel {
    asset_ids: Vec<String>,
    timestamps: Vec<NaiveDate>,
    /// `prices[i][t]`: asset `i` at `timestamps[t]`.
    prices: Vec<Vec<f64>>,
}

impl PricePanel {
    pub fn new(
        asset_ids: Vec<String>,
        timestamps: Vec<NaiveDate>,
        prices: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if asset_ids.is_empty() {
            return Err(Error::Validation("panel has no assets".into()));
        }
        if asset_ids.len() != prices.len() {
            return Err(Error::Validation(format!(
                "{} asset ids but {} price rows",
                asset_ids.len(),
                prices.len()
            )));
        }
        check_increasing(&timestamps)?;
        for (id, row) in asset_ids.iter().zip(&prices) {
            if row.len() != timestamps.len() {
                return Err(Error::Validation(format!(
                    "asset {id} has {} prices for {} dates",
                    row.len(),
                    timestamps.len()
                )));
            }
            for (p, d) in row.iter().zip(&timestamps) {
                if !(p.is_finite() && *p > 0.0) {
                    return Err(Error::Validation(format!(
                        "nonpositive or non-finite price {p} for asset {id} on {d}"
                    )));
                }
            }
        }
        Ok(Self {
            asset_ids,
            timestamps,
            prices,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }

    pub fn n_times(&self) -> usize {
        self.timestamps.len()
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn timestamps(&self) -> &[NaiveDate] {
        &self.timestamps
    }

    pub fn prices(&self) -> &[Vec<f64>] {
        &self.prices
    }

    /// Last observation of every calendar month.
    pub fn month_end(&self) -> PricePanel {
        let mut keep = Vec::new();
        for t in 0..self.timestamps.len() {
            let last_of_month = t + 1 == self.timestamps.len()
                || month_index(self.timestamps[t + 1]) != month_index(self.timestamps[t]);
            if last_of_month {
                keep.push(t);
            }
        }
        PricePanel {
            asset_ids: self.asset_ids.clone(),
            timestamps: keep.iter().map(|&t| self.timestamps[t]).collect(),
            prices: self
                .prices
                .iter()
                .map(|row| keep.iter().map(|&t| row[t]).collect())
                .collect(),
        }
    }

    /// Writes the canonical CSV form (`date,<asset>...`).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str("date");
        for id in &self.asset_ids {
            out.push(',');
            out.push_str(id);
        }
        out.push('\n');
        for (t, d) in self.timestamps.iter().enumerate() {
            out.push_str(&d.format("%Y-%m-%d").to_string());
            for row in &self.prices {
                out.push(',');
                out.push_str(&format!("{}", row[t]));
            }
            out.push('\n');
        }
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// One gross-return vector `r_i = C_i(t) / C_i(t-1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnVector {
    pub timestamp: NaiveDate,
    pub values: Vec<f64>,
}

/// A named monthly series such as the VIX or one EMV category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousSeries {
    pub name: String,
    pub timestamps: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl ExogenousSeries {
    pub fn new(name: impl Into<String>, timestamps: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if timestamps.len() != values.len() {
            return Err(Error::Validation(format!(
                "series {name}: {} dates but {} values",
                timestamps.len(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("series {name}: non-finite value {v}")));
        }
        check_increasing(&timestamps)?;
        Ok(Self {
            name,
            timestamps,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value keyed by month index (see [`month_index`]).
    pub fn by_month(&self) -> BTreeMap<i32, f64> {
        self.timestamps
            .iter()
            .zip(&self.values)
            .map(|(d, v)| (month_index(*d), *v))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedAsset {
    pub asset: String,
    pub reason: String,
}

/// Result of loading a price file: the validated panel plus any assets that
/// were dropped because of gaps.
#[derive(Debug, Clone)]
pub struct LoadReport {
    pub panel: PricePanel,
    pub rejected: Vec<RejectedAsset>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Drop assets with a nonpositive price instead of failing the load.
    pub drop_nonpositive: bool,
}

/// Months since year 0, used as a join key for monthly data.
pub fn month_index(d: NaiveDate) -> i32 {
    d.year() * 12 + d.month0() as i32
}

pub fn month_start(index: i32) -> NaiveDate {
    NaiveDate::from_ymd_opt(index.div_euclid(12), index.rem_euclid(12) as u32 + 1, 1)
        .expect("valid month index")
}

/// Accepts `YYYY-MM-DD` or `YYYY-MM` (first of month).
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .or_else(|| NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d").ok())
}

fn check_increasing(timestamps: &[NaiveDate]) -> Result<()> {
    for w in timestamps.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Validation(format!(
                "timestamps not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

fn read_records(path: &Path) -> Result<(csv::StringRecord, Vec<csv::StringRecord>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = rdr.headers()?.clone();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?);
    }
    Ok((header, rows))
}

pub fn load_price_panel(path: &Path) -> Result<LoadReport> {
    load_price_panel_with(path, LoadOptions::default())
}

pub fn load_price_panel_with(path: &Path, opts: LoadOptions) -> Result<LoadReport> {
    let (header, rows) = read_records(path)?;
    if header.get(0) != Some("date") {
        return Err(Error::Parse {
            row: 1,
            column: 1,
            message: format!("first header column must be `date`, found {:?}", header.get(0)),
        });
    }
    if header.len() < 2 {
        return Err(Error::Parse {
            row: 1,
            column: 2,
            message: "no asset columns".into(),
        });
    }
    let ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let n = ids.len();
    let mut timestamps = Vec::with_capacity(rows.len());
    let mut cells: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(rows.len()); n];
    for (r, rec) in rows.iter().enumerate() {
        // 1-based file row, header is row 1
        let row = r + 2;
        let date = parse_date(rec.get(0).unwrap_or("")).ok_or_else(|| Error::Parse {
            row,
            column: 1,
            message: format!("bad date {:?}", rec.get(0)),
        })?;
        timestamps.push(date);
        for i in 0..n {
            let raw = rec.get(i + 1).unwrap_or("");
            let v = if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
                None
            } else {
                Some(raw.parse::<f64>().map_err(|_| Error::Parse {
                    row,
                    column: i + 2,
                    message: format!("not a number: {raw:?}"),
                })?)
            };
            cells[i].push(v);
        }
    }
    check_increasing(&timestamps)?;

    let mut kept_ids = Vec::new();
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for (i, col) in cells.into_iter().enumerate() {
        if let Some(t) = col.iter().position(Option::is_none) {
            rejected.push(RejectedAsset {
                asset: ids[i].clone(),
                reason: format!("missing price on {}", timestamps[t]),
            });
            continue;
        }
        let prices: Vec<f64> = col.into_iter().map(|v| v.unwrap()).collect();
        if let Some(t) = prices.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
            if opts.drop_nonpositive {
                rejected.push(RejectedAsset {
                    asset: ids[i].clone(),
                    reason: format!("nonpositive price {} on {}", prices[t], timestamps[t]),
                });
                continue;
            }
            return Err(Error::Validation(format!(
                "nonpositive price {} for asset {} on {} (row {}, column {})",
                prices[t],
                ids[i],
                timestamps[t],
                t + 2,
                i + 2
            )));
        }
        kept_ids.push(ids[i].clone());
        kept.push(prices);
    }
    if kept_ids.is_empty() {
        return Err(Error::Validation("every asset was rejected".into()));
    }
    let panel = PricePanel::new(kept_ids, timestamps, kept)?;
    Ok(LoadReport { panel, rejected })
}

/// Loads `date,value` or `date,<category>...`; one series per value column.
pub fn load_exogenous(path: &Path) -> Result<Vec<ExogenousSeries>> {
    let (header, rows) = read_records(path)?;
    if header.get(0) != Some("date") || header.len() < 2 {
        return Err(Error::Parse {
            row: 1,
            column: 1,
            message: "expected header `date,value` or `date,<category>,...`".into(),
        });
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut timestamps = Vec::with_capacity(rows.len());
    let mut cols = vec![Vec::with_capacity(rows.len()); names.len()];
    for (r, rec) in rows.iter().enumerate() {
        let row = r + 2;
        timestamps.push(parse_date(rec.get(0).unwrap_or("")).ok_or_else(|| Error::Parse {
            row,
            column: 1,
            message: format!("bad date {:?}", rec.get(0)),
        })?);
        for (k, col) in cols.iter_mut().enumerate() {
            let raw = rec.get(k + 1).unwrap_or("");
            col.push(raw.parse::<f64>().map_err(|_| Error::Parse {
                row,
                column: k + 2,
                message: format!("not a number: {raw:?}"),
            })?);
        }
    }
    names
        .into_iter()
        .zip(cols)
        .map(|(name, values)| ExogenousSeries::new(name, timestamps.clone(), values))
        .collect()
}

pub fn write_exogenous(series: &[ExogenousSeries], path: &Path) -> Result<()> {
    let first = series
        .first()
        .ok_or_else(|| Error::Validation("no series to write".into()))?;
    if series.iter().any(|s| s.timestamps != first.timestamps) {
        return Err(Error::Validation("series do not share timestamps".into()));
    }
    let mut out = String::from("date");
    for s in series {
        out.push(',');
        out.push_str(&s.name);
    }
    out.push('\n');
    for (t, d) in first.timestamps.iter().enumerate() {
        out.push_str(&d.format("%Y-%m-%d").to_string());
        for s in series {
            out.push_str(&format!(",{}", s.values[t]));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn compute_returns(panel: &PricePanel) -> Result<Vec<ReturnVector>> {
    let t_len = panel.n_times();
    if t_len < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 dates to form returns, have {t_len}"
        )));
    }
    Ok((1..t_len)
        .map(|t| ReturnVector {
            timestamp: panel.timestamps[t],
            values: panel.prices.iter().map(|row| row[t] / row[t - 1]).collect(),
        })
        .collect())
}

/// One `(x_t, y_{t+lag})` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub month: NaiveDate,
    pub x: f64,
    pub y: f64,
}

/// Pairs `x_t` with `y_{t+lag}` over the months where both exist.
pub fn align_monthly(
    a: &ExogenousSeries,
    b: &ExogenousSeries,
    lag: usize,
) -> Result<Vec<AlignedPair>> {
    let bm = b.by_month();
    let pairs: Vec<AlignedPair> = a
        .timestamps
        .iter()
        .zip(&a.values)
        .filter_map(|(d, x)| {
            let m = month_index(*d);
            bm.get(&(m + lag as i32)).map(|y| AlignedPair {
                month: month_start(m),
                x: *x,
                y: *y,
            })
        })
        .collect();
    if pairs.is_empty() {
        return Err(Error::Alignment(format!(
            "no overlapping months between {} and {} at lag {lag}",
            a.name, b.name
        )));
    }
    Ok(pairs)
}

/// How a daily series is collapsed to one value per month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MonthlyAggregation {
    #[default]
    Mean,
    Last,
    Max,
}

/// Collapses a dated series to calendar months; output dates are the first
/// of each month.
pub fn aggregate_monthly(
    timestamps: &[NaiveDate],
    values: &[f64],
    how: MonthlyAggregation,
) -> (Vec<NaiveDate>, Vec<f64>) {
    let mut out_dates = Vec::new();
    let mut out_vals = Vec::new();
    let mut i = 0;
    while i < timestamps.len() {
        let m = month_index(timestamps[i]);
        let mut j = i;
        while j < timestamps.len() && month_index(timestamps[j]) == m {
            j += 1;
        }
        let chunk = &values[i..j];
        let v = match how {
            MonthlyAggregation::Mean => chunk.iter().sum::<f64>() / chunk.len() as f64,
            MonthlyAggregation::Last => chunk[chunk.len() - 1],
            MonthlyAggregation::Max => chunk.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        };
        out_dates.push(month_start(m));
        out_vals.push(v);
        i = j;
    }
    (out_dates, out_vals)
}
