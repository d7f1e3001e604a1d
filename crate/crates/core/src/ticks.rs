//! Tick-data ingestion: millisecond aggregation, active/passive news-window
//! slicing, and extraction of clock-time returns, trade-time returns, and
//! inter-trade durations.

use std::path::Path;

use chrono::{NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};

use crate::durations::{DurationSeries, SeriesOrigin};
use crate::error::{Error, Result};

pub const DEFAULT_WINDOW_MS: i64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub timestamp_ms: i64,
    pub price: f64,
}

/// Millisecond-stamped price records after per-millisecond aggregation:
/// strictly increasing timestamps, at most one record per millisecond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickSeries {
    pub records: Vec<TickRecord>,
}

impl TickSeries {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn first_ms(&self) -> Option<i64> {
        self.records.first().map(|r| r.timestamp_ms)
    }

    pub fn last_ms(&self) -> Option<i64> {
        self.records.last().map(|r| r.timestamp_ms)
    }

    /// Most recent price at or before `t`, if any.
    pub fn inforce_at(&self, t: i64) -> Option<f64> {
        let idx = self
            .records
            .partition_point(|r| r.timestamp_ms <= t);
        if idx == 0 {
            None
        } else {
            Some(self.records[idx - 1].price)
        }
    }
}

/// Parses a two-column CSV with header `timestamp_ms,price`. Returns raw
/// records in file order; `sorted_warning` is true when the input was not
/// already sorted by timestamp.
pub fn parse_ticks(path: &Path) -> Result<(Vec<TickRecord>, bool)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    {
        let headers = reader.headers()?;
        if headers.len() < 2 || &headers[0] != "timestamp_ms" || &headers[1] != "price" {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "expected header timestamp_ms,price, got {}",
                    headers.iter().collect::<Vec<_>>().join(",")
                ),
            });
        }
    }
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2; // header is line 1
        let row = row.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let ts: i64 = row
            .get(0)
            .ok_or_else(|| Error::Parse {
                line,
                message: "missing timestamp_ms".into(),
            })?
            .trim()
            .parse()
            .map_err(|e| Error::Parse {
                line,
                message: format!("bad timestamp_ms: {e}"),
            })?;
        let price: f64 = row
            .get(1)
            .ok_or_else(|| Error::Parse {
                line,
                message: "missing price".into(),
            })?
            .trim()
            .parse()
            .map_err(|e| Error::Parse {
                line,
                message: format!("bad price: {e}"),
            })?;
        if !(price > 0.0) {
            return Err(Error::Parse {
                line,
                message: format!("price must be positive, got {price}"),
            });
        }
        records.push(TickRecord {
            timestamp_ms: ts,
            price,
        });
    }
    let sorted_warning = records.windows(2).any(|w| w[0].timestamp_ms > w[1].timestamp_ms);
    Ok((records, sorted_warning))
}

/// Collapses same-millisecond trades to a single record carrying the final
/// in-force price of that millisecond (file order within a millisecond).
/// Stable-sorts unsorted input first. Idempotent.
pub fn aggregate_ms(raw: &[TickRecord]) -> TickSeries {
    let mut sorted = raw.to_vec();
    sorted.sort_by_key(|r| r.timestamp_ms); // stable: preserves file order per ms
    let mut records: Vec<TickRecord> = Vec::with_capacity(sorted.len());
    for r in sorted {
        match records.last_mut() {
            Some(last) if last.timestamp_ms == r.timestamp_ms => last.price = r.price,
            _ => records.push(r),
        }
    }
    TickSeries { records }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsEntry {
    pub date: NaiveDate,
    pub time: NaiveTime,
    pub label: String,
    pub consensus: Option<f64>,
    pub actual: Option<f64>,
}

/// Calendar of pre-scheduled announcements, unique per (date, time).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NewsCalendar {
    pub entries: Vec<NewsEntry>,
}

impl NewsCalendar {
    pub fn contains(&self, date: NaiveDate, time: NaiveTime) -> bool {
        self.entries.iter().any(|e| e.date == date && e.time == time)
    }
}

/// Parses a calendar CSV with header `date,time,label,consensus,actual`;
/// consensus and actual may be empty.
pub fn parse_calendar(path: &Path) -> Result<NewsCalendar> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    let mut entries: Vec<NewsEntry> = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let date = NaiveDate::parse_from_str(row.get(0).unwrap_or("").trim(), "%Y-%m-%d")
            .map_err(|e| Error::Parse {
                line,
                message: format!("bad date: {e}"),
            })?;
        let time = NaiveTime::parse_from_str(row.get(1).unwrap_or("").trim(), "%H:%M").map_err(
            |e| Error::Parse {
                line,
                message: format!("bad time: {e}"),
            },
        )?;
        if entries.iter().any(|e| e.date == date && e.time == time) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate calendar entry for {date} {time}"),
            });
        }
        let parse_opt = |s: Option<&str>| -> Option<f64> {
            s.and_then(|v| {
                let v = v.trim();
                if v.is_empty() {
                    None
                } else {
                    v.parse().ok()
                }
            })
        };
        entries.push(NewsEntry {
            date,
            time,
            label: row.get(2).unwrap_or("").trim().to_string(),
            consensus: parse_opt(row.get(3)),
            actual: parse_opt(row.get(4)),
        });
    }
    Ok(NewsCalendar { entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Active,
    Passive,
}

/// A 1000-second (by default) slice of ticks starting at a candidate
/// announcement time: active when an announcement matched, passive otherwise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowSlice {
    pub kind: WindowKind,
    pub start_ms: i64,
    pub ticks: TickSeries,
    /// True when the window extends past the end of the data.
    pub truncated: bool,
}

fn ms_of(date: NaiveDate, time: NaiveTime) -> i64 {
    date.and_time(time).and_utc().timestamp_millis()
}

/// Partitions candidate windows into active and passive slices. Candidate
/// times default to 08:30 and 10:00 on every date carrying tick data; a date
/// whose (date, time) appears in the calendar yields an active slice, any
/// other candidate yields a passive slice.
pub fn slice_windows(
    ticks: &TickSeries,
    calendar: &NewsCalendar,
    window_ms: i64,
    candidate_times: &[NaiveTime],
) -> Result<Vec<WindowSlice>> {
    if window_ms <= 0 {
        return Err(Error::ParamDomain("window_ms must be positive".into()));
    }
    let last = match ticks.last_ms() {
        Some(t) => t,
        None => return Ok(Vec::new()),
    };
    let mut dates: Vec<NaiveDate> = ticks
        .records
        .iter()
        .map(|r| {
            chrono::DateTime::from_timestamp_millis(r.timestamp_ms)
                .expect("timestamp in range")
                .date_naive()
        })
        .collect();
    dates.dedup();
    dates.sort();
    dates.dedup();

    let mut slices = Vec::new();
    for date in dates {
        for &time in candidate_times {
            let start = ms_of(date, time);
            let end = start + window_ms;
            let lo = ticks.records.partition_point(|r| r.timestamp_ms < start);
            let hi = ticks.records.partition_point(|r| r.timestamp_ms < end);
            let kind = if calendar.contains(date, time) {
                WindowKind::Active
            } else {
                WindowKind::Passive
            };
            slices.push(WindowSlice {
                kind,
                start_ms: start,
                ticks: TickSeries {
                    records: ticks.records[lo..hi].to_vec(),
                },
                truncated: end > last + 1,
            });
        }
    }
    Ok(slices)
}

/// Clock-time returns r_tau(t) = p(t) - p(t - tau) over the grid
/// t = t0 + tau, t0 + 2 tau, ... using the in-force price at each grid point.
pub fn clock_returns(ticks: &TickSeries, tau: i64) -> Result<Vec<f64>> {
    if tau <= 0 {
        return Err(Error::ParamDomain("tau must be positive".into()));
    }
    let (first, last) = match (ticks.first_ms(), ticks.last_ms()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::Data("empty tick series".into())),
    };
    if last - first < tau {
        return Err(Error::Data(format!(
            "series spans {} ms, shorter than tau {tau}",
            last - first
        )));
    }
    let mut out = Vec::new();
    let mut t = first + tau;
    while t <= last {
        let p_now = ticks.inforce_at(t).expect("grid point after first tick");
        let p_prev = ticks.inforce_at(t - tau).expect("grid point at/after first tick");
        out.push(p_now - p_prev);
        t += tau;
    }
    Ok(out)
}

/// Non-overlapping trade-time returns r_m = p[jm] - p[(j-1)m].
pub fn trade_returns(ticks: &TickSeries, m: usize) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::ParamDomain("m must be >= 1".into()));
    }
    if ticks.len() < m + 1 {
        return Err(Error::Data(format!(
            "need at least {} ticks for m = {m}",
            m + 1
        )));
    }
    let prices: Vec<f64> = ticks.records.iter().map(|r| r.price).collect();
    let mut out = Vec::new();
    let mut j = m;
    while j < prices.len() {
        out.push(prices[j] - prices[j - m]);
        j += m;
    }
    Ok(out)
}

/// Successive timestamp differences of an aggregated series; all >= 1 ms.
pub fn durations(ticks: &TickSeries) -> Result<DurationSeries> {
    if ticks.len() < 2 {
        return Err(Error::Data("need at least 2 ticks".into()));
    }
    let values = ticks
        .records
        .windows(2)
        .map(|w| (w[1].timestamp_ms - w[0].timestamp_ms) as f64)
        .collect();
    Ok(DurationSeries {
        values,
        origin: SeriesOrigin::Observed,
    })
}
