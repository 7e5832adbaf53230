//! Bar files, trading-session calendars, resampling and log returns.
//!
//! Bar timestamps mark the END of the bar: a 15s bar stamped 09:15:15 covers
//! (09:15:00, 09:15:15]. A timestamp belongs to a session window when
//! `open < time <= close`.

use std::fmt;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One timestamped price observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bar {
    pub timestamp: NaiveDateTime,
    pub price: f64,
}

/// A single intraday trading window, `open..close` (exchange-local time).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionWindow {
    pub open: NaiveTime,
    pub close: NaiveTime,
}

impl SessionWindow {
    pub fn new(open: NaiveTime, close: NaiveTime) -> Result<Self> {
        if open >= close {
            return Err(Error::invalid(format!(
                "session window {open}..{close} is empty"
            )));
        }
        Ok(Self { open, close })
    }

    pub fn contains(&self, time: NaiveTime) -> bool {
        self.open < time && time <= self.close
    }

    pub fn seconds(&self) -> i64 {
        (self.close - self.open).num_seconds()
    }
}

impl fmt::Display for SessionWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-{}",
            self.open.format("%H:%M:%S"),
            self.close.format("%H:%M:%S")
        )
    }
}

impl FromStr for SessionWindow {
    type Err = Error;

    /// Parses `HH:MM[:SS]-HH:MM[:SS]`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once('-')
            .ok_or_else(|| Error::invalid(format!("session window `{s}` must be OPEN-CLOSE")))?;
        Self::new(parse_clock(a)?, parse_clock(b)?)
    }
}

fn parse_clock(s: &str) -> Result<NaiveTime> {
    let s = s.trim();
    NaiveTime::parse_from_str(s, "%H:%M:%S")
        .or_else(|_| NaiveTime::parse_from_str(s, "%H:%M"))
        .map_err(|_| Error::invalid(format!("bad clock time `{s}`")))
}

/// Session windows that apply from `effective` onwards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CalendarEntry {
    pub effective: NaiveDate,
    pub windows: Vec<SessionWindow>,
}

/// Effective-dated session regimes. The entry with the latest effective date
/// not after a given date applies to that date.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionCalendar {
    entries: Vec<CalendarEntry>,
}

impl SessionCalendar {
    pub fn new(mut entries: Vec<CalendarEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("calendar has no entries"));
        }
        entries.sort_by_key(|e| e.effective);
        for pair in entries.windows(2) {
            if pair[0].effective == pair[1].effective {
                return Err(Error::invalid(format!(
                    "two calendar entries share effective date {}",
                    pair[0].effective
                )));
            }
        }
        for entry in &entries {
            if entry.windows.is_empty() {
                return Err(Error::invalid(format!(
                    "calendar entry {} has no windows",
                    entry.effective
                )));
            }
            for pair in entry.windows.windows(2) {
                if pair[0].close > pair[1].open {
                    return Err(Error::invalid(format!(
                        "calendar entry {}: windows {} and {} overlap or are unordered",
                        entry.effective, pair[0], pair[1]
                    )));
                }
            }
        }
        Ok(Self { entries })
    }

    /// CSI300 index-futures sessions: 09:15-11:30 & 13:00-15:15 until the end
    /// of 2015, 09:30-11:30 & 13:00-15:00 from 2016-01-01.
    pub fn csi300() -> Self {
        let t = |h, m| NaiveTime::from_hms_opt(h, m, 0).unwrap();
        let w = |a, b| SessionWindow { open: a, close: b };
        Self {
            entries: vec![
                CalendarEntry {
                    effective: NaiveDate::from_ymd_opt(1900, 1, 1).unwrap(),
                    windows: vec![w(t(9, 15), t(11, 30)), w(t(13, 0), t(15, 15))],
                },
                CalendarEntry {
                    effective: NaiveDate::from_ymd_opt(2016, 1, 1).unwrap(),
                    windows: vec![w(t(9, 30), t(11, 30)), w(t(13, 0), t(15, 0))],
                },
            ],
        }
    }

    pub fn entries(&self) -> &[CalendarEntry] {
        &self.entries
    }

    pub fn windows_for(&self, date: NaiveDate) -> Option<&[SessionWindow]> {
        let idx = self.entries.partition_point(|e| e.effective <= date);
        idx.checked_sub(1).map(|i| self.entries[i].windows.as_slice())
    }

    /// Index of the window (on that date) containing the timestamp.
    pub fn window_of(&self, ts: NaiveDateTime) -> Option<(usize, SessionWindow)> {
        self.windows_for(ts.date())?
            .iter()
            .enumerate()
            .find(|(_, w)| w.contains(ts.time()))
            .map(|(i, w)| (i, *w))
    }

    pub fn session_seconds(&self, date: NaiveDate) -> i64 {
        self.windows_for(date)
            .map(|ws| ws.iter().map(SessionWindow::seconds).sum())
            .unwrap_or(0)
    }

    /// Every bar-end timestamp for `date` at `frequency` seconds.
    pub fn bar_times(&self, date: NaiveDate, frequency: u32) -> Vec<NaiveDateTime> {
        let step = chrono::Duration::seconds(i64::from(frequency));
        let mut out = Vec::new();
        for w in self.windows_for(date).unwrap_or(&[]) {
            let mut t = date.and_time(w.open) + step;
            let close = date.and_time(w.close);
            while t <= close {
                out.push(t);
                t += step;
            }
        }
        out
    }
}

impl Default for SessionCalendar {
    fn default() -> Self {
        Self::csi300()
    }
}

/// What to do when bars are missing inside a session window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingBarPolicy {
    #[default]
    Reject,
    ForwardFill,
}

impl FromStr for MissingBarPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reject" => Ok(Self::Reject),
            "forward-fill" | "ffill" => Ok(Self::ForwardFill),
            other => Err(Error::invalid(format!("unknown missing-bar policy `{other}`"))),
        }
    }
}

/// Validated intraday bars at a fixed frequency, grouped into trading days.
#[derive(Debug, Clone, PartialEq)]
pub struct BarSeries {
    frequency: u32,
    timestamps: Vec<NaiveDateTime>,
    prices: Vec<f64>,
    day_starts: Vec<usize>,
}

impl BarSeries {
    /// Validates `bars` against the calendar. Row numbers in errors are
    /// 1-based positions in `bars`.
    pub fn new(
        frequency: u32,
        bars: Vec<Bar>,
        calendar: &SessionCalendar,
        policy: MissingBarPolicy,
    ) -> Result<Self> {
        Self::from_rows(
            frequency,
            bars.into_iter().enumerate().map(|(i, b)| (i + 1, b)),
            calendar,
            policy,
        )
    }

    fn from_rows(
        frequency: u32,
        rows: impl IntoIterator<Item = (usize, Bar)>,
        calendar: &SessionCalendar,
        policy: MissingBarPolicy,
    ) -> Result<Self> {
        if frequency == 0 {
            return Err(Error::invalid("frequency must be positive"));
        }
        let step = i64::from(frequency);
        let mut series = Self {
            frequency,
            timestamps: Vec::new(),
            prices: Vec::new(),
            day_starts: Vec::new(),
        };
        let mut prev: Option<(NaiveDateTime, usize)> = None;
        for (row, bar) in rows {
            if !(bar.price > 0.0) || !bar.price.is_finite() {
                return Err(Error::NonPositivePrice {
                    row,
                    price: bar.price,
                });
            }
            let ts = bar.timestamp;
            let (window_idx, window) =
                calendar
                    .window_of(ts)
                    .ok_or_else(|| Error::OutsideSession {
                        row,
                        timestamp: ts.to_string(),
                    })?;
            let offset = (ts - ts.date().and_time(window.open)).num_seconds();
            if ts.nanosecond() != 0 || offset % step != 0 {
                return Err(Error::MalformedRow {
                    row,
                    message: format!("timestamp {ts} is not on the {frequency}s bar grid"),
                });
            }
            match prev {
                Some((p, _)) if ts <= p => {
                    return Err(Error::NonMonotoneTimestamp {
                        row,
                        timestamp: ts.to_string(),
                        previous: p.to_string(),
                    });
                }
                Some((p, pw)) if p.date() == ts.date() => {
                    let gap = (ts - p).num_seconds();
                    if pw == window_idx && gap > step {
                        match policy {
                            MissingBarPolicy::Reject => {
                                return Err(Error::MissingBars {
                                    row,
                                    timestamp: ts.to_string(),
                                    previous: p.to_string(),
                                });
                            }
                            MissingBarPolicy::ForwardFill => {
                                let last = *series.prices.last().expect("previous bar exists");
                                let mut t = p + chrono::Duration::seconds(step);
                                while t < ts {
                                    series.timestamps.push(t);
                                    series.prices.push(last);
                                    t += chrono::Duration::seconds(step);
                                }
                            }
                        }
                    }
                }
                _ => series.day_starts.push(series.timestamps.len()),
            }
            series.timestamps.push(ts);
            series.prices.push(bar.price);
            prev = Some((ts, window_idx));
        }
        Ok(series)
    }

    /// Builds a series without calendar validation. Used for derived series
    /// whose structure is already known to be valid.
    pub(crate) fn from_parts(
        frequency: u32,
        timestamps: Vec<NaiveDateTime>,
        prices: Vec<f64>,
    ) -> Self {
        let mut day_starts = Vec::new();
        for (i, t) in timestamps.iter().enumerate() {
            if i == 0 || timestamps[i - 1].date() != t.date() {
                day_starts.push(i);
            }
        }
        Self {
            frequency,
            timestamps,
            prices,
            day_starts,
        }
    }

    pub fn frequency(&self) -> u32 {
        self.frequency
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn bar(&self, i: usize) -> Bar {
        Bar {
            timestamp: self.timestamps[i],
            price: self.prices[i],
        }
    }

    pub fn bars(&self) -> impl Iterator<Item = Bar> + '_ {
        (0..self.len()).map(|i| self.bar(i))
    }

    /// Index of the first bar of each trading day.
    pub fn day_starts(&self) -> &[usize] {
        &self.day_starts
    }

    pub fn day_count(&self) -> usize {
        self.day_starts.len()
    }

    pub fn day_ranges(&self) -> Vec<Range<usize>> {
        day_ranges(&self.day_starts, self.len())
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.day_starts
            .iter()
            .map(|&i| self.timestamps[i].date())
            .collect()
    }
}

pub(crate) fn day_ranges(starts: &[usize], len: usize) -> Vec<Range<usize>> {
    starts
        .iter()
        .enumerate()
        .map(|(d, &s)| s..starts.get(d + 1).copied().unwrap_or(len))
        .collect()
}

/// Column layout of a bar CSV file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvFormat {
    /// When false, columns are positional: timestamp first, price second.
    pub has_header: bool,
    pub timestamp_column: String,
    pub price_column: String,
    /// chrono format string; `None` accepts ISO-8601 or `yyyyMMdd HHmmss`.
    pub timestamp_format: Option<String>,
}

impl Default for CsvFormat {
    fn default() -> Self {
        Self {
            has_header: true,
            timestamp_column: "timestamp".into(),
            price_column: "price".into(),
            timestamp_format: None,
        }
    }
}

const DEFAULT_TIMESTAMP_FORMATS: &[&str] = &[
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M:%S",
    "%Y%m%d %H%M%S",
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%d %H:%M:%S%.f",
];

/// Canonical timestamp layout used when writing bar files.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

fn parse_timestamp(s: &str, format: Option<&str>) -> Option<NaiveDateTime> {
    let s = s.trim();
    match format {
        Some(f) => NaiveDateTime::parse_from_str(s, f).ok(),
        None => DEFAULT_TIMESTAMP_FORMATS
            .iter()
            .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok()),
    }
}

/// Options for [`parse_bars`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParseOptions {
    pub format: CsvFormat,
    pub frequency: u32,
    pub calendar: SessionCalendar,
    pub missing: MissingBarPolicy,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            format: CsvFormat::default(),
            frequency: 15,
            calendar: SessionCalendar::csi300(),
            missing: MissingBarPolicy::Reject,
        }
    }
}

pub fn parse_bars(path: impl AsRef<Path>, options: &ParseOptions) -> Result<BarSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_bars_from_reader(file, options)
}

/// Parses `timestamp,price` rows. Row numbers in errors are file line numbers.
pub fn parse_bars_from_reader<R: Read>(reader: R, options: &ParseOptions) -> Result<BarSeries> {
    let fmt = &options.format;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(fmt.has_header)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let (ts_col, px_col) = if fmt.has_header {
        let headers = rdr.headers()?.clone();
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::MalformedRow {
                    row: 1,
                    message: format!("header has no `{name}` column"),
                })
        };
        (find(&fmt.timestamp_column)?, find(&fmt.price_column)?)
    } else {
        (0, 1)
    };

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let field = |i: usize| {
            record.get(i).ok_or_else(|| Error::MalformedRow {
                row,
                message: format!("expected at least {} columns", i + 1),
            })
        };
        let raw_ts = field(ts_col)?;
        let timestamp = parse_timestamp(raw_ts, fmt.timestamp_format.as_deref()).ok_or_else(
            || Error::MalformedRow {
                row,
                message: format!("cannot parse timestamp `{raw_ts}`"),
            },
        )?;
        let raw_px = field(px_col)?;
        let price: f64 = raw_px.parse().map_err(|_| Error::MalformedRow {
            row,
            message: format!("cannot parse price `{raw_px}`"),
        })?;
        rows.push((row, Bar { timestamp, price }));
    }
    BarSeries::from_rows(options.frequency, rows, &options.calendar, options.missing)
}

/// Writes the series in the canonical `timestamp,price` layout read by
/// [`parse_bars`].
pub fn write_bars<W: Write>(writer: W, series: &BarSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp", "price"])?;
    for bar in series.bars() {
        w.write_record([
            bar.timestamp.format(TIMESTAMP_FORMAT).to_string(),
            format!("{}", bar.price),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<bar writer>", e))?;
    Ok(())
}

pub fn write_bars_to_path(path: impl AsRef<Path>, series: &BarSeries) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_bars(std::io::BufWriter::new(file), series)
}

/// Keeps the last price of each `target_frequency` bucket. Buckets are
/// aligned to each session window's open; the bucket end becomes the new
/// bar timestamp (clamped to the window close).
pub fn resample(
    series: &BarSeries,
    target_frequency: u32,
    calendar: &SessionCalendar,
) -> Result<BarSeries> {
    let source = series.frequency();
    if target_frequency == 0 || !target_frequency.is_multiple_of(source) {
        return Err(Error::invalid(format!(
            "target frequency {target_frequency}s is not a multiple of {source}s"
        )));
    }
    if target_frequency == source {
        return Ok(series.clone());
    }
    let step = i64::from(target_frequency);
    let mut timestamps: Vec<NaiveDateTime> = Vec::with_capacity(series.len() / 2 + 1);
    let mut prices: Vec<f64> = Vec::with_capacity(series.len() / 2 + 1);
    for bar in series.bars() {
        let (_, window) = calendar
            .window_of(bar.timestamp)
            .ok_or_else(|| Error::Misaligned(format!(
                "bar {} lies outside the calendar used for resampling",
                bar.timestamp
            )))?;
        let open = bar.timestamp.date().and_time(window.open);
        let close = bar.timestamp.date().and_time(window.close);
        let offset = (bar.timestamp - open).num_seconds();
        let buckets = (offset + step - 1) / step;
        let end = (open + chrono::Duration::seconds(buckets * step)).min(close);
        if timestamps.last() == Some(&end) {
            *prices.last_mut().expect("bucket has a price") = bar.price;
        } else {
            timestamps.push(end);
            prices.push(bar.price);
        }
    }
    Ok(BarSeries::from_parts(target_frequency, timestamps, prices))
}

/// Intraday log returns. Day `d` contributes `bars_d - 1` returns; there is
/// never a return spanning two days.
#[derive(Debug, Clone, PartialEq)]
pub struct LogReturnSeries {
    pub values: Vec<f64>,
    /// Index into `values` of the first return of each day.
    pub day_starts: Vec<usize>,
}

impl LogReturnSeries {
    pub fn day_ranges(&self) -> Vec<Range<usize>> {
        day_ranges(&self.day_starts, self.values.len())
    }
}

pub fn log_returns(series: &BarSeries) -> Result<LogReturnSeries> {
    if series.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: series.len(),
        });
    }
    let prices = series.prices();
    let mut values = Vec::with_capacity(series.len());
    let mut day_starts = Vec::with_capacity(series.day_count());
    for range in series.day_ranges() {
        day_starts.push(values.len());
        let day = &prices[range];
        values.extend(day.windows(2).map(|w| w[1].ln() - w[0].ln()));
    }
    Ok(LogReturnSeries { values, day_starts })
}
