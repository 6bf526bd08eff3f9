//! Minute-bar ingestion, gap repair, day slicing, condition computation,
//! standardization, and train/val/test dataset assembly with tiered
//! upsampling of extreme-trend days.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use cofindiff_core::condition::{scaled_log_returns, ConditionPair, StandardizationStats};
use cofindiff_core::DAY_STEPS;

use crate::error::{AppError, Result};

/// CSV column names for the minute-bar input.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields, default)]
pub struct ColumnMap {
    pub ticker: String,
    pub date: String,
    pub time: String,
    pub price: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            ticker: "ticker".into(),
            date: "date".into(),
            time: "time".into(),
            price: "price".into(),
        }
    }
}

/// One minute bar after parsing. `minute` is the minute of day (0..1440).
#[derive(Debug, Clone, PartialEq)]
pub struct PriceBar {
    pub ticker: String,
    pub date: NaiveDate,
    pub minute: u32,
    pub price: f64,
}

/// A row that failed to parse, with its 1-based line number.
#[derive(Debug, Clone, Serialize)]
pub struct RowError {
    pub line: usize,
    pub message: String,
}

/// Fraction of bad rows above which ingestion aborts.
const BAD_ROW_LIMIT: f64 = 0.01;

fn parse_minute(s: &str) -> Option<u32> {
    let mut parts = s.split(':');
    let h: u32 = parts.next()?.parse().ok()?;
    let m: u32 = parts.next()?.parse().ok()?;
    if h >= 24 || m >= 60 {
        return None;
    }
    Some(h * 60 + m)
}

/// Parse a minute-bar CSV. Bars come back sorted by (ticker, date, minute);
/// malformed rows are reported with line numbers. Ingestion aborts when more
/// than 1% of rows fail.
pub fn load_price_csv(
    path: &Path,
    schema: &ColumnMap,
) -> Result<(Vec<PriceBar>, Vec<RowError>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => AppError::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string()),
        ),
        _ => AppError::Csv(e.to_string()),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| AppError::Csv(e.to_string()))?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| AppError::Csv(format!("missing column '{name}' in header")))
    };
    let (ci_ticker, ci_date, ci_time, ci_price) = (
        col(&schema.ticker)?,
        col(&schema.date)?,
        col(&schema.time)?,
        col(&schema.price)?,
    );

    let mut bars = Vec::new();
    let mut errors = Vec::new();
    let mut total = 0usize;
    for (idx, record) in reader.records().enumerate() {
        total += 1;
        let line = idx + 2; // 1-based, after the header row
        let fail = |message: String, errors: &mut Vec<RowError>| {
            errors.push(RowError { line, message });
        };
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                fail(format!("line {line}: {e}"), &mut errors);
                continue;
            }
        };
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let date = match NaiveDate::parse_from_str(field(ci_date), "%Y-%m-%d") {
            Ok(d) => d,
            Err(_) => {
                fail(
                    format!("line {line}: unparseable date '{}'", field(ci_date)),
                    &mut errors,
                );
                continue;
            }
        };
        let minute = match parse_minute(field(ci_time)) {
            Some(m) => m,
            None => {
                fail(
                    format!("line {line}: unparseable time '{}'", field(ci_time)),
                    &mut errors,
                );
                continue;
            }
        };
        let price: f64 = match field(ci_price).parse() {
            Ok(p) => p,
            Err(_) => {
                fail(
                    format!("line {line}: unparseable price '{}'", field(ci_price)),
                    &mut errors,
                );
                continue;
            }
        };
        if !price.is_finite() || price <= 0.0 {
            fail(
                format!("line {line}: non-positive price {price}"),
                &mut errors,
            );
            continue;
        }
        bars.push(PriceBar {
            ticker: field(ci_ticker).to_string(),
            date,
            minute,
            price,
        });
    }
    if total > 0 && errors.len() as f64 > BAD_ROW_LIMIT * total as f64 {
        let sample = errors.iter().take(10).map(|e| e.message.clone()).collect();
        return Err(AppError::TooManyBadRows {
            rows: errors.len(),
            total,
            sample,
        });
    }
    bars.sort_by(|a, b| {
        (&a.ticker, a.date, a.minute).cmp(&(&b.ticker, b.date, b.minute))
    });
    Ok((bars, errors))
}

/// The intraday session: `points` consecutive minutes starting at
/// `start_minute`. With the default 301 points a day yields 300 returns.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields, default)]
pub struct SessionGrid {
    pub start_minute: u32,
    pub points: usize,
}

impl Default for SessionGrid {
    fn default() -> Self {
        Self {
            start_minute: 9 * 60,
            points: DAY_STEPS + 1,
        }
    }
}

/// One trading day's repaired price path and return sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaySeries {
    pub ticker: String,
    pub date: NaiveDate,
    /// points prices on the session grid (length T + 1).
    pub prices: Vec<f64>,
    pub log_returns: Vec<f64>,
    /// 100 x log_returns; the representation every condition uses.
    pub scaled_returns: Vec<f64>,
}

impl DaySeries {
    pub fn from_prices(ticker: String, date: NaiveDate, prices: Vec<f64>) -> Self {
        let scaled_returns = scaled_log_returns(&prices);
        let log_returns = scaled_returns.iter().map(|r| r / 100.0).collect();
        Self {
            ticker,
            date,
            prices,
            log_returns,
            scaled_returns,
        }
    }

    pub fn condition(&self) -> ConditionPair {
        ConditionPair::from_scaled_returns(&self.scaled_returns)
    }
}

/// Slice sorted bars into ticker-days on the session grid, forward-filling
/// gaps with the last prior price. Days with no price at or before the first
/// grid minute are dropped (and logged).
pub fn forward_fill_and_slice(bars: &[PriceBar], session: &SessionGrid) -> Vec<DaySeries> {
    let mut groups: BTreeMap<(String, NaiveDate), Vec<&PriceBar>> = BTreeMap::new();
    for bar in bars {
        groups
            .entry((bar.ticker.clone(), bar.date))
            .or_default()
            .push(bar);
    }
    let mut days = Vec::new();
    for ((ticker, date), mut day_bars) in groups {
        day_bars.sort_by_key(|b| b.minute);
        let first_minute = session.start_minute;
        // Opening price: last bar at or before the first grid minute.
        let mut last_price = day_bars
            .iter()
            .take_while(|b| b.minute <= first_minute)
            .last()
            .map(|b| b.price);
        let Some(mut current) = last_price.take() else {
            log::warn!("{ticker} {date}: no opening price at or before minute {first_minute}, day dropped");
            continue;
        };
        let mut prices = Vec::with_capacity(session.points);
        let mut cursor = day_bars
            .iter()
            .position(|b| b.minute > first_minute)
            .unwrap_or(day_bars.len());
        prices.push(current);
        for offset in 1..session.points {
            let minute = first_minute + offset as u32;
            while cursor < day_bars.len() && day_bars[cursor].minute <= minute {
                current = day_bars[cursor].price;
                cursor += 1;
            }
            prices.push(current);
        }
        days.push(DaySeries::from_prices(ticker, date, prices));
    }
    days
}

/// Fit standardization stats on the pooled scaled returns of the training
/// days. The same stats are applied to every split.
pub fn standardize(train_days: &[DaySeries]) -> Result<StandardizationStats> {
    let pooled: Vec<f64> = train_days
        .iter()
        .flat_map(|d| d.scaled_returns.iter().copied())
        .collect();
    Ok(StandardizationStats::fit(&pooled)?)
}

/// Inclusive date ranges for the three splits.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: (NaiveDate, NaiveDate),
    pub val: (NaiveDate, NaiveDate),
    pub test: (NaiveDate, NaiveDate),
}

impl SplitSpec {
    fn ranges(&self) -> [(&'static str, (NaiveDate, NaiveDate)); 3] {
        [("train", self.train), ("val", self.val), ("test", self.test)]
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, (lo, hi)) in self.ranges() {
            if lo > hi {
                problems.push(format!("{name} range is empty: {lo} > {hi}"));
            }
        }
        let rs = self.ranges();
        for i in 0..rs.len() {
            for j in i + 1..rs.len() {
                let (na, (a0, a1)) = rs[i];
                let (nb, (b0, b1)) = rs[j];
                if a0 <= b1 && b0 <= a1 {
                    problems.push(format!("{na} and {nb} date ranges overlap"));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(AppError::Validation(problems))
        }
    }
}

/// Upsampling tiers: quantiles of |trend| over the training split. Each tier
/// adds `factor` extra copies of its member days.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct UpsampleTiers {
    pub quantiles: Vec<f64>,
    pub factor: usize,
}

impl Default for UpsampleTiers {
    fn default() -> Self {
        Self {
            quantiles: vec![0.25, 0.10, 0.05],
            factor: 5,
        }
    }
}

/// One dataset entry: day, its condition, and its training multiplicity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub day: DaySeries,
    pub condition: ConditionPair,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct DatasetSplit {
    pub train: Vec<DatasetEntry>,
    pub val: Vec<DatasetEntry>,
    pub test: Vec<DatasetEntry>,
}

impl DatasetSplit {
    /// Total training multiset size after upsampling.
    pub fn train_multiset_size(&self) -> usize {
        self.train.iter().map(|e| e.multiplicity).sum()
    }
}

/// Assign each training day its tier multiplicity. Tiers apply additively;
/// quantile ties break by (date, ticker) lexicographic order.
fn train_multiplicities(entries: &[(usize, f64, NaiveDate, String)], tiers: &UpsampleTiers) -> Vec<usize> {
    let n = entries.len();
    let mut order: Vec<usize> = (0..n).collect();
    // Descending |trend|; ties by ascending (date, ticker).
    order.sort_by(|&a, &b| {
        entries[b].1
            .partial_cmp(&entries[a].1)
            .unwrap()
            .then_with(|| (entries[a].2, &entries[a].3).cmp(&(entries[b].2, &entries[b].3)))
    });
    let mut mult = vec![1usize; n];
    for &q in &tiers.quantiles {
        let k = ((q * n as f64).ceil() as usize).min(n);
        for &idx in order.iter().take(k) {
            mult[idx] += tiers.factor;
        }
    }
    mult
}

/// Split the days by date and upsample the training tiers. Val and test are
/// never upsampled.
pub fn build_dataset(
    days: Vec<DaySeries>,
    spec: &SplitSpec,
    tiers: &UpsampleTiers,
) -> Result<DatasetSplit> {
    spec.validate()?;
    let mut split = DatasetSplit::default();
    let mut train_days = Vec::new();
    for day in days {
        let cond = day.condition();
        let in_range = |(lo, hi): (NaiveDate, NaiveDate)| lo <= day.date && day.date <= hi;
        if in_range(spec.train) {
            train_days.push((day, cond));
        } else if in_range(spec.val) {
            split.val.push(DatasetEntry {
                day,
                condition: cond,
                multiplicity: 1,
            });
        } else if in_range(spec.test) {
            split.test.push(DatasetEntry {
                day,
                condition: cond,
                multiplicity: 1,
            });
        }
    }
    let keyed: Vec<(usize, f64, NaiveDate, String)> = train_days
        .iter()
        .enumerate()
        .map(|(i, (day, cond))| (i, cond.trend.abs(), day.date, day.ticker.clone()))
        .collect();
    let mult = train_multiplicities(&keyed, tiers);
    split.train = train_days
        .into_iter()
        .zip(mult)
        .map(|((day, condition), multiplicity)| DatasetEntry {
            day,
            condition,
            multiplicity,
        })
        .collect();
    Ok(split)
}

/// Manifest describing an assembled dataset; written next to the per-day
/// return files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub stats: StandardizationStats,
    pub trend_std: f64,
    pub rv_std: f64,
    pub splits: BTreeMap<String, Vec<DatasetManifestEntry>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifestEntry {
    pub ticker: String,
    pub date: NaiveDate,
    pub trend: f64,
    pub rv: f64,
    pub multiplicity: usize,
}

/// Standard deviations of the training-split conditions, used to rescale the
/// condition scalars before embedding.
pub fn condition_scales(train: &[DatasetEntry]) -> (f64, f64) {
    let trends: Vec<f64> = train.iter().map(|e| e.condition.trend).collect();
    let rvs: Vec<f64> = train.iter().map(|e| e.condition.rv).collect();
    let std = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len().max(1) as f64;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len().max(1) as f64;
        v.sqrt().max(1e-12)
    };
    (std(&trends), std(&rvs))
}

impl DatasetManifest {
    pub fn from_split(split: &DatasetSplit, stats: StandardizationStats) -> Self {
        let (trend_std, rv_std) = condition_scales(&split.train);
        let mut splits = BTreeMap::new();
        for (name, entries) in [
            ("train", &split.train),
            ("val", &split.val),
            ("test", &split.test),
        ] {
            splits.insert(
                name.to_string(),
                entries
                    .iter()
                    .map(|e| DatasetManifestEntry {
                        ticker: e.day.ticker.clone(),
                        date: e.day.date,
                        trend: e.condition.trend,
                        rv: e.condition.rv,
                        multiplicity: e.multiplicity,
                    })
                    .collect(),
            );
        }
        Self {
            stats,
            trend_std,
            rv_std,
            splits,
        }
    }
}
