//! Calibrated series, smoothing filters and time-bucket aggregation.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedSeries {
    pub channel: u8,
    pub unit: String,
    pub points: Vec<SeriesPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub t_us: u64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    MovingAverage,
    Median,
}

impl FromStr for FilterKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "moving_average" => Ok(FilterKind::MovingAverage),
            "median" => Ok(FilterKind::Median),
            other => Err(format!("unknown filter {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub window: usize,
}

impl FilterSpec {
    pub fn new(kind: FilterKind, window: usize) -> Result<Self, String> {
        if window == 0 {
            return Err("filter window must be at least 1".into());
        }
        Ok(Self { kind, window })
    }
}

/// Filters values in place order. Output `i` covers the last
/// `min(i + 1, window)` inputs, so the output has the input's length.
pub fn filter_values(values: &[f64], spec: FilterSpec) -> Vec<f64> {
    let w = spec.window.max(1);
    let mut scratch = Vec::with_capacity(w);
    (0..values.len())
        .map(|i| {
            let win = &values[(i + 1).saturating_sub(w)..=i];
            match spec.kind {
                FilterKind::MovingAverage => win.iter().sum::<f64>() / win.len() as f64,
                FilterKind::Median => {
                    scratch.clear();
                    scratch.extend_from_slice(win);
                    scratch.sort_by(f64::total_cmp);
                    let n = scratch.len();
                    if n % 2 == 1 {
                        scratch[n / 2]
                    } else {
                        (scratch[n / 2 - 1] + scratch[n / 2]) / 2.0
                    }
                }
            }
        })
        .collect()
}

pub fn apply_filter(series: &CalibratedSeries, spec: FilterSpec) -> CalibratedSeries {
    let values: Vec<f64> = series.points.iter().map(|p| p.value).collect();
    let filtered = filter_values(&values, spec);
    CalibratedSeries {
        channel: series.channel,
        unit: series.unit.clone(),
        points: series
            .points
            .iter()
            .zip(filtered)
            .map(|(p, value)| SeriesPoint { t_us: p.t_us, value })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stat {
    Min,
    Max,
    Mean,
    Count,
}

impl FromStr for Stat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "min" => Ok(Stat::Min),
            "max" => Ok(Stat::Max),
            "mean" => Ok(Stat::Mean),
            "count" => Ok(Stat::Count),
            other => Err(format!("unknown stat {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub bucket_start_us: u64,
    pub value: f64,
    pub count: usize,
}

/// Groups points into `[k * bucket, (k + 1) * bucket)` buckets counted from
/// t = 0. Empty buckets produce no row. Points must be in time order.
pub fn aggregate(points: &[SeriesPoint], bucket_us: u64, stat: Stat) -> Vec<AggregateRow> {
    assert!(bucket_us > 0, "bucket width must be positive");
    let mut rows = Vec::new();
    let mut i = 0;
    while i < points.len() {
        let bucket = points[i].t_us / bucket_us;
        let start = i;
        while i < points.len() && points[i].t_us / bucket_us == bucket {
            i += 1;
        }
        let vals = points[start..i].iter().map(|p| p.value);
        let n = i - start;
        let value = match stat {
            Stat::Min => vals.fold(f64::INFINITY, f64::min),
            Stat::Max => vals.fold(f64::NEG_INFINITY, f64::max),
            Stat::Mean => vals.sum::<f64>() / n as f64,
            Stat::Count => n as f64,
        };
        rows.push(AggregateRow {
            bucket_start_us: bucket * bucket_us,
            value,
            count: n,
        });
    }
    rows
}
