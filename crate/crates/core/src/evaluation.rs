//! Rolling daily forecasts over a test window and their comparison with
//! what was observed.
//!
//! The history for the first forecast is seeded with the interevent times of
//! the `warmup_events` most recent events; the forward filter then absorbs
//! every later event as it happens, so the history grows over the window.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::forecasting::{forecast_probability, scheduled_weights, weights_from_filter, ForecastQuery};
use crate::hmm::{ForwardFilter, HmmParams};

/// Low-group size used when splitting sorted forecasts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplitRule {
    /// Exact number of forecasts in the low group.
    Count(usize),
    /// Fraction of forecasts in the low group, rounded to nearest.
    Fraction(f64),
}

impl SplitRule {
    /// 9000 of 9693 forecasts in the low group.
    pub const DEFAULT_FRACTION: f64 = 9000.0 / 9693.0;

    pub fn low_count(self, total: usize) -> usize {
        match self {
            SplitRule::Count(k) => k,
            SplitRule::Fraction(f) => (f * total as f64).round() as usize,
        }
    }
}

impl Default for SplitRule {
    fn default() -> Self {
        SplitRule::Fraction(Self::DEFAULT_FRACTION)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Interevent times seeding the first forecast's history.
    #[serde(default = "default_warmup")]
    pub warmup_events: usize,
    pub forecast_start: NaiveDate,
    /// Last forecast date, inclusive.
    pub forecast_end: NaiveDate,
    /// Issue time as a fraction of the day (0 = midnight).
    #[serde(default)]
    pub forecast_time_of_day: f64,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<f64>,
    #[serde(default)]
    pub split_low_count: SplitRule,
    /// Region labels to forecast separately (region models only).
    #[serde(default)]
    pub regions: Option<Vec<usize>>,
    /// Last calendar date the catalog is complete through; defaults to the
    /// date of the last event.
    #[serde(default)]
    pub catalog_end: Option<NaiveDate>,
}

fn default_warmup() -> usize {
    30
}

fn default_horizons() -> Vec<f64> {
    vec![1.0, 5.0, 10.0]
}

impl EvalConfig {
    pub fn new(forecast_start: NaiveDate, forecast_end: NaiveDate) -> Self {
        Self {
            warmup_events: default_warmup(),
            forecast_start,
            forecast_end,
            forecast_time_of_day: 0.0,
            horizons: default_horizons(),
            split_low_count: SplitRule::default(),
            regions: None,
            catalog_end: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.forecast_start > self.forecast_end {
            return Err(Error::Configuration("forecast_start must not be after forecast_end".into()));
        }
        if self.horizons.is_empty() || self.horizons.iter().any(|&n| !(n > 0.0)) {
            return Err(Error::Configuration("horizons must be non-empty and positive".into()));
        }
        if self.warmup_events == 0 {
            return Err(Error::Configuration("warmup_events must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.forecast_time_of_day) {
            return Err(Error::Configuration("forecast_time_of_day must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Number of forecast days, both endpoints included.
    pub fn n_days(&self) -> usize {
        ((self.forecast_end - self.forecast_start).num_days() + 1).max(0) as usize
    }
}

/// One probability and its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastCell {
    pub horizon: f64,
    pub region: Option<usize>,
    pub probability: f64,
    /// Whether an event (in the region) occurred within the horizon; `None`
    /// when the window runs past the end of the catalog.
    pub outcome: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyForecast {
    pub date: NaiveDate,
    /// Issue time in catalog days.
    pub time: f64,
    /// Interevent times in the history.
    pub t: usize,
    /// Days since the most recent event.
    pub w: f64,
    /// Scheduled state weights.
    pub weights: Vec<f64>,
    pub cells: Vec<ForecastCell>,
}

impl DailyForecast {
    pub fn cell(&self, horizon: f64, region: Option<usize>) -> Option<&ForecastCell> {
        self.cells.iter().find(|c| c.horizon == horizon && c.region == region)
    }
}

/// Daily scheduled forecasts from `forecast_start` to `forecast_end`.
pub fn run_rolling_forecasts(
    catalog: &Catalog,
    params: &HmmParams<f64>,
    config: &EvalConfig,
) -> Result<Vec<DailyForecast>> {
    config.validate()?;
    params.validate()?;
    let region_model = params.region_dist.is_some();
    if config.regions.is_some() && !region_model {
        return Err(Error::Configuration("regional forecasts need a model with a region component".into()));
    }
    if let (Some(regs), Some(r)) = (&config.regions, params.n_regions()) {
        if let Some(v) = regs.iter().find(|&&v| v == 0 || v > r) {
            return Err(Error::Configuration(format!("region {v} outside 1..={r}")));
        }
    }

    let times: Vec<f64> = catalog.events.iter().map(|e| e.time).collect();
    let start = catalog.time_of(config.forecast_start, config.forecast_time_of_day);
    let seen = times.partition_point(|&t| t <= start);
    if seen == 0 {
        return Err(Error::InsufficientHistory(format!("no events on or before {}", config.forecast_start)));
    }
    let coverage_end = match config.catalog_end {
        Some(d) => catalog.time_of(d, 1.0),
        None => *times.last().expect("non-empty"),
    };

    let first = seen.saturating_sub(config.warmup_events + 1);
    let mut filter = ForwardFilter::new(params);
    let mut next = first + 1;
    let mut out = Vec::with_capacity(config.n_days());

    for day in 0..config.n_days() {
        let date = config.forecast_start + chrono::Duration::days(day as i64);
        let now = catalog.time_of(date, config.forecast_time_of_day);
        while next < times.len() && times[next] <= now {
            let region = if region_model {
                Some(
                    catalog.events[next]
                        .region
                        .ok_or_else(|| Error::Configuration(format!("event {} has no region label", next + 1)))?,
                )
            } else {
                None
            };
            filter.push(times[next] - times[next - 1], region)?;
            next += 1;
        }
        let w = now - times[next - 1];
        let base = weights_from_filter(&filter, 0.0);
        let sched = scheduled_weights(&base, params, w)?;

        let mut cells = Vec::new();
        for &n in &config.horizons {
            let outcome_known = now + n <= coverage_end;
            let lo = times.partition_point(|&t| t <= now);
            let hi = times.partition_point(|&t| t <= now + n);
            let window = &catalog.events[lo..hi];
            cells.push(ForecastCell {
                horizon: n,
                region: None,
                probability: forecast_probability(&sched, params, &ForecastQuery::new(n))?,
                outcome: outcome_known.then_some(!window.is_empty()),
            });
            for &v in config.regions.iter().flatten() {
                cells.push(ForecastCell {
                    horizon: n,
                    region: Some(v),
                    probability: forecast_probability(&sched, params, &ForecastQuery::in_region(n, v))?,
                    outcome: outcome_known.then(|| window.iter().any(|e| e.region == Some(v))),
                });
            }
        }
        out.push(DailyForecast { date, time: now, t: filter.len(), w, weights: sched.weights, cells });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Low,
    High,
}

impl std::fmt::Display for Group {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Group::Low => "low",
            Group::High => "high",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: Group,
    pub range_lo: f64,
    pub range_hi: f64,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub observed_count: usize,
    pub observed_proportion: f64,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Quartiles by the median-of-halves rule (the middle value of an odd
/// sample belongs to neither half).
fn quartiles(sorted: &[f64]) -> (f64, f64, f64) {
    let n = sorted.len();
    if n == 1 {
        return (sorted[0], sorted[0], sorted[0]);
    }
    let lower = &sorted[..n / 2];
    let upper = &sorted[n.div_ceil(2)..];
    (median(lower), median(sorted), median(upper))
}

fn summarize_group(group: Group, rows: &[(f64, bool)]) -> GroupSummary {
    let probs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let count = rows.len();
    let observed_count = rows.iter().filter(|r| r.1).count();
    let (q1, median, q3) = quartiles(&probs);
    GroupSummary {
        group,
        range_lo: probs[0],
        range_hi: probs[count - 1],
        count,
        mean: probs.iter().sum::<f64>() / count as f64,
        median,
        q1,
        q3,
        observed_count,
        observed_proportion: observed_count as f64 / count as f64,
    }
}

/// Evaluable `(probability, outcome)` pairs at one horizon/region, sorted
/// ascending by probability and then by date.
fn sorted_cells(forecasts: &[DailyForecast], horizon: f64, region: Option<usize>) -> Vec<(NaiveDate, f64, bool)> {
    let mut rows: Vec<(NaiveDate, f64, bool)> = forecasts
        .iter()
        .filter_map(|f| {
            let c = f.cell(horizon, region)?;
            Some((f.date, c.probability, c.outcome?))
        })
        .collect();
    rows.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    rows
}

/// Splits the evaluable forecasts into low and high groups.
pub fn summarize(
    forecasts: &[DailyForecast],
    horizon: f64,
    split: SplitRule,
    region: Option<usize>,
) -> Result<(GroupSummary, GroupSummary)> {
    let rows = sorted_cells(forecasts, horizon, region);
    let total = rows.len();
    let k = split.low_count(total);
    if k == 0 || k >= total {
        return Err(Error::DegenerateSplit { split: k, total });
    }
    let pairs: Vec<(f64, bool)> = rows.iter().map(|r| (r.1, r.2)).collect();
    Ok((summarize_group(Group::Low, &pairs[..k]), summarize_group(Group::High, &pairs[k..])))
}

pub const SUMMARY_CSV_HEADER: &str =
    "group,range_lo,range_hi,count,mean,median,q1,q3,observed_count,observed_proportion";

pub fn summary_csv(groups: &[GroupSummary]) -> String {
    let mut out = format!("{SUMMARY_CSV_HEADER}\n");
    for g in groups {
        out.push_str(&format!(
            "{},{:.6},{:.6},{},{:.6},{:.6},{:.6},{:.6},{},{:.6}\n",
            g.group,
            g.range_lo,
            g.range_hi,
            g.count,
            g.mean,
            g.median,
            g.q1,
            g.q3,
            g.observed_count,
            g.observed_proportion
        ));
    }
    out
}

/// Aligned plain-text table with one row per group.
pub fn summary_table(title: &str, groups: &[GroupSummary]) -> String {
    let mut out = format!("{title}\n");
    out.push_str(&format!(
        "{:<6} {:>18} {:>7} {:>8} {:>8} {:>8} {:>8} {:>9} {:>10}\n",
        "group", "range", "number", "mean", "median", "q1", "q3", "observed", "proportion"
    ));
    for g in groups {
        let range = format!("({:.4}, {:.4})", g.range_lo, g.range_hi);
        out.push_str(&format!(
            "{:<6} {:>18} {:>7} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>9} {:>10.4}\n",
            g.group.to_string(),
            range,
            g.count,
            g.mean,
            g.median,
            g.q1,
            g.q3,
            g.observed_count,
            g.observed_proportion
        ));
    }
    out
}

/// One bin of a forecast-sorted reliability check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub count: usize,
    pub mean_forecast: f64,
    pub observed_count: usize,
    /// Central binomial interval for the count of events.
    pub interval: (u64, u64),
    pub within: bool,
}

/// Sorts evaluable forecasts, cuts them into `n_bins` equal groups and
/// checks each group's event count against the central `confidence`
/// binomial interval at the group's mean forecast.
pub fn calibration_bins(
    forecasts: &[DailyForecast],
    horizon: f64,
    region: Option<usize>,
    n_bins: usize,
    confidence: f64,
) -> Result<Vec<CalibrationBin>> {
    let rows = sorted_cells(forecasts, horizon, region);
    if n_bins == 0 || rows.len() < n_bins {
        return Err(Error::DegenerateSplit { split: n_bins, total: rows.len() });
    }
    let tail = 0.5 * (1.0 - confidence);
    (0..n_bins)
        .map(|b| {
            let chunk = &rows[b * rows.len() / n_bins..(b + 1) * rows.len() / n_bins];
            let count = chunk.len();
            let mean_forecast = chunk.iter().map(|r| r.1).sum::<f64>() / count as f64;
            let observed_count = chunk.iter().filter(|r| r.2).count();
            let dist =
                Binomial::new(mean_forecast.clamp(0.0, 1.0), count as u64).map_err(|e| Error::Domain(e.to_string()))?;
            let interval = (dist.inverse_cdf(tail), dist.inverse_cdf(1.0 - tail));
            let k = observed_count as u64;
            Ok(CalibrationBin {
                count,
                mean_forecast,
                observed_count,
                interval,
                within: interval.0 <= k && k <= interval.1,
            })
        })
        .collect()
}

fn label(horizon: f64, region: Option<usize>) -> String {
    match region {
        None => format!("N{horizon}"),
        Some(v) => format!("N{horizon}_r{v}"),
    }
}

/// Plot-ready tables of a rolling-forecast run.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesExport {
    /// One row per forecast day with probabilities, outcomes and an
    /// indicator for events dated that day.
    pub daily_csv: String,
    /// `(label, csv)` per horizon/region: forecasts sorted ascending, ranked.
    pub sorted_csv: Vec<(String, String)>,
}

pub fn export_series(forecasts: &[DailyForecast], catalog: &Catalog) -> SeriesExport {
    let keys: Vec<(f64, Option<usize>)> =
        forecasts.first().map(|f| f.cells.iter().map(|c| (c.horizon, c.region)).collect()).unwrap_or_default();

    let mut daily = String::from("date,t,w");
    for (n, r) in &keys {
        daily.push_str(&format!(",p_{}", label(*n, *r)));
    }
    for (n, r) in &keys {
        daily.push_str(&format!(",outcome_{}", label(*n, *r)));
    }
    daily.push_str(",event\n");

    let event_dates: Vec<NaiveDate> = catalog.events.iter().map(|e| catalog.date_of(e.time)).collect();
    for f in forecasts {
        daily.push_str(&format!("{},{},{:.6}", f.date, f.t, f.w));
        for (n, r) in &keys {
            let p = f.cell(*n, *r).map_or(f64::NAN, |c| c.probability);
            daily.push_str(&format!(",{p:.8}"));
        }
        for (n, r) in &keys {
            match f.cell(*n, *r).and_then(|c| c.outcome) {
                Some(o) => daily.push_str(if o { ",1" } else { ",0" }),
                None => daily.push(','),
            }
        }
        let lo = event_dates.partition_point(|d| *d < f.date);
        let hit = event_dates.get(lo).is_some_and(|d| *d == f.date);
        daily.push_str(if hit { ",1\n" } else { ",0\n" });
    }

    let sorted_csv = keys
        .iter()
        .map(|&(n, r)| {
            let mut rows: Vec<(NaiveDate, f64, Option<bool>)> =
                forecasts.iter().filter_map(|f| f.cell(n, r).map(|c| (f.date, c.probability, c.outcome))).collect();
            rows.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let mut csv = String::from("rank,date,probability,outcome\n");
            for (i, (d, p, o)) in rows.iter().enumerate() {
                let o = o.map_or(String::new(), |o| u8::from(o).to_string());
                csv.push_str(&format!("{},{d},{p:.8},{o}\n", i + 1));
            }
            (label(n, r), csv)
        })
        .collect();

    SeriesExport { daily_csv: daily, sorted_csv }
}
