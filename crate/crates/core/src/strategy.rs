//! Trading-rule blocks, the position state machine and the strategy grid.
//!
//! Rule truth table (`x0` = indicator at t-1, `x1` = at t):
//!
//! | family | open long                    | close long          | open short                   | close short          |
//! |--------|------------------------------|---------------------|------------------------------|----------------------|
//! | MA     | `x0 <= 1+b && x1 > 1+b`      | `x0 > 1+b && x1 <= 1+b` | `x0 >= 1-b && x1 < 1-b`  | `x0 < 1-b && x1 >= 1-b` |
//! | KDJ    | `K0 < D0 && K1 >= D1 && 20 <= K1 <= 80` | `K0 > D0 && K1 <= D1` | `K0 > D0 && K1 <= D1 && 20 <= K1 <= 80` | `K0 < D0 && K1 >= D1` |
//! | Boll   | `x0 <= K && x1 > K`          | `x0 >= K && x1 < K` | `x0 >= -K && x1 < -K`        | `x0 <= -K && x1 > -K` |
//!
//! Within a bar, close signals are applied before open signals, and an open
//! is ignored when the same side is already held. Warm-up bars and the last
//! bar of every trading day are flat.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators::{self, IndicatorSeries};
use crate::ingest::BarSeries;

/// Bar frequencies (seconds) of the standard grid.
pub const GRID_FREQUENCIES: [u32; 3] = [15, 30, 60];
pub const MA_SHORT: [usize; 4] = [1, 5, 10, 15];
pub const MA_LONG: [usize; 4] = [20, 30, 60, 120];
pub const MA_BAND: [f64; 4] = [0.0001, 0.0005, 0.001, 0.0015];
/// `(n, m, k)`: RSV window, %K smoothing, %D smoothing.
pub const KDJ_PARAMS: [(usize, usize, usize); 5] =
    [(5, 1, 3), (5, 3, 3), (9, 3, 3), (14, 3, 3), (19, 3, 3)];
pub const BOLL_WINDOW: [usize; 4] = [20, 30, 60, 120];
pub const BOLL_WIDTH: [f64; 6] = [0.1, 0.5, 1.0, 1.5, 2.0, 2.5];

/// %K must lie in this band for a KDJ open.
const KDJ_OPEN_BAND: (f64, f64) = (20.0, 80.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "MA")]
    Ma,
    #[serde(rename = "KDJ")]
    Kdj,
    #[serde(rename = "Boll")]
    Boll,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Ma, Family::Kdj, Family::Boll];

    pub fn label(self) -> &'static str {
        match self {
            Family::Ma => "MA",
            Family::Kdj => "KDJ",
            Family::Boll => "Boll",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MA" => Ok(Family::Ma),
            "KDJ" | "KDJR" => Ok(Family::Kdj),
            "BOLL" => Ok(Family::Boll),
            _ => Err(Error::invalid(format!("unknown strategy family `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Params {
    Ma { short: usize, long: usize, band: f64 },
    Kdj { n: usize, m: usize, k: usize },
    Boll { n: usize, width: f64 },
}

/// One strategy: rule family, parameters and bar frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub frequency: u32,
    pub params: Params,
}

impl StrategySpec {
    pub fn new(frequency: u32, params: Params) -> Result<Self> {
        let spec = Self { frequency, params };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frequency == 0 {
            return Err(Error::invalid("strategy frequency must be positive"));
        }
        match self.params {
            Params::Ma { short, long, band } => {
                if short < 1 || short >= long {
                    return Err(Error::invalid(format!(
                        "MA needs 1 <= n_s < n_l, got ({short},{long})"
                    )));
                }
                if !(band >= 0.0) {
                    return Err(Error::invalid(format!("MA band must be >= 0, got {band}")));
                }
            }
            Params::Kdj { n, m, k } => {
                if n < 1 || m < 1 || k < 1 {
                    return Err(Error::invalid("KDJ parameters must be positive"));
                }
            }
            Params::Boll { n, width } => {
                if n < 2 {
                    return Err(Error::invalid("Boll window must be at least 2"));
                }
                if !(width > 0.0) {
                    return Err(Error::invalid(format!("Boll width must be > 0, got {width}")));
                }
            }
        }
        Ok(())
    }

    pub fn family(&self) -> Family {
        match self.params {
            Params::Ma { .. } => Family::Ma,
            Params::Kdj { .. } => Family::Kdj,
            Params::Boll { .. } => Family::Boll,
        }
    }

    /// Whether the parameters come from the standard grid.
    pub fn is_grid_cell(&self) -> bool {
        enumerate_grid().contains(self)
    }

    /// Report identifier, e.g. `Boll_30(120,0.1)`.
    pub fn id(&self) -> String {
        self.to_string()
    }

    /// Bars needed before the indicator is defined.
    pub fn warmup(&self) -> usize {
        match self.params {
            Params::Ma { long, .. } => long - 1,
            Params::Kdj { n, .. } => n - 1,
            Params::Boll { n, .. } => n - 1,
        }
    }
}

impl fmt::Display for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.family(), self.frequency)?;
        match self.params {
            Params::Ma { short, long, band } => write!(f, "({short},{long},{band})"),
            Params::Kdj { n, m, k } => write!(f, "({n},{m},{k})"),
            Params::Boll { n, width } => write!(f, "({n},{width})"),
        }
    }
}

impl FromStr for StrategySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("cannot parse strategy id `{s}`"));
        let s = s.trim();
        let (head, rest) = s.split_once('(').ok_or_else(bad)?;
        let args = rest.strip_suffix(')').ok_or_else(bad)?;
        let (family, freq) = head.split_once('_').ok_or_else(bad)?;
        let family: Family = family.parse()?;
        let frequency: u32 = freq.parse().map_err(|_| bad())?;
        let args: Vec<&str> = args.split(',').map(str::trim).collect();
        let int = |i: usize| args[i].parse::<usize>().map_err(|_| bad());
        let real = |i: usize| args[i].parse::<f64>().map_err(|_| bad());
        let params = match (family, args.len()) {
            (Family::Ma, 3) => Params::Ma {
                short: int(0)?,
                long: int(1)?,
                band: real(2)?,
            },
            (Family::Kdj, 3) => Params::Kdj {
                n: int(0)?,
                m: int(1)?,
                k: int(2)?,
            },
            (Family::Boll, 2) => Params::Boll {
                n: int(0)?,
                width: real(1)?,
            },
            _ => return Err(bad()),
        };
        StrategySpec::new(frequency, params)
    }
}

/// Every cell of the standard grid: 192 MA, 15 KDJ and 72 Boll strategies,
/// family-major, then frequency, then parameters.
pub fn enumerate_grid() -> Vec<StrategySpec> {
    grid(&Family::ALL, &GRID_FREQUENCIES)
}

/// Grid cells restricted to some families and frequencies.
pub fn grid(families: &[Family], frequencies: &[u32]) -> Vec<StrategySpec> {
    let mut out = Vec::new();
    for family in Family::ALL.iter().filter(|f| families.contains(f)) {
        for &frequency in frequencies {
            let mut push = |params| out.push(StrategySpec { frequency, params });
            match family {
                Family::Ma => {
                    for short in MA_SHORT {
                        for long in MA_LONG {
                            for band in MA_BAND {
                                push(Params::Ma { short, long, band });
                            }
                        }
                    }
                }
                Family::Kdj => {
                    for (n, m, k) in KDJ_PARAMS {
                        push(Params::Kdj { n, m, k });
                    }
                }
                Family::Boll => {
                    for n in BOLL_WINDOW {
                        for width in BOLL_WIDTH {
                            push(Params::Boll { n, width });
                        }
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Long,
    Short,
}

impl Side {
    pub fn sign(self) -> i8 {
        match self {
            Side::Long => 1,
            Side::Short => -1,
        }
    }

    pub fn of(position: i8) -> Option<Side> {
        match position {
            1 => Some(Side::Long),
            -1 => Some(Side::Short),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Open(Side),
    Close(Side),
    /// Day-end liquidation.
    ForcedClose(Side),
}

/// Audit record of one state-machine transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignalEvent {
    pub bar: usize,
    pub kind: EventKind,
}

/// Rule outputs for one bar.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Signals {
    pub open_long: bool,
    pub close_long: bool,
    pub open_short: bool,
    pub close_short: bool,
}

impl Signals {
    pub fn ma(r0: f64, r1: f64, band: f64) -> Self {
        let (up, low) = (1.0 + band, 1.0 - band);
        Self {
            open_long: r0 <= up && r1 > up,
            close_long: r0 > up && r1 <= up,
            open_short: r0 >= low && r1 < low,
            close_short: r0 < low && r1 >= low,
        }
    }

    pub fn kdj(k0: f64, d0: f64, k1: f64, d1: f64) -> Self {
        let in_band = (KDJ_OPEN_BAND.0..=KDJ_OPEN_BAND.1).contains(&k1);
        let up = k0 < d0 && k1 >= d1;
        let down = k0 > d0 && k1 <= d1;
        Self {
            open_long: up && in_band,
            close_long: down,
            open_short: down && in_band,
            close_short: up,
        }
    }

    pub fn boll(s0: f64, s1: f64, width: f64) -> Self {
        Self {
            open_long: s0 <= width && s1 > width,
            close_long: s0 >= width && s1 < width,
            open_short: s0 >= -width && s1 < -width,
            close_short: s0 <= -width && s1 > -width,
        }
    }
}

/// Per-bar positions in {-1, 0, +1} with the transition audit log.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionSeries {
    positions: Vec<i8>,
    day_starts: Vec<usize>,
    events: Vec<SignalEvent>,
}

impl PositionSeries {
    /// Wraps an externally produced path. Day-end flatness is not enforced
    /// here; the backtest checks it.
    pub fn from_positions(positions: Vec<i8>, day_starts: Vec<usize>) -> Result<Self> {
        if let Some(p) = positions.iter().find(|p| !(-1..=1).contains(*p)) {
            return Err(Error::invalid(format!("position {p} outside {{-1,0,1}}")));
        }
        if day_starts.first().is_some_and(|&s| s != 0)
            || day_starts.windows(2).any(|w| w[0] >= w[1])
            || day_starts.last().is_some_and(|&s| s >= positions.len())
        {
            return Err(Error::Misaligned("day starts are not valid bar indices".into()));
        }
        Ok(Self {
            positions,
            day_starts,
            events: Vec::new(),
        })
    }

    pub fn positions(&self) -> &[i8] {
        &self.positions
    }

    pub fn day_starts(&self) -> &[usize] {
        &self.day_starts
    }

    pub fn events(&self) -> &[SignalEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Last bar index of each day.
    pub fn day_ends(&self) -> impl Iterator<Item = usize> + '_ {
        self.day_starts
            .iter()
            .skip(1)
            .map(|&s| s - 1)
            .chain((!self.positions.is_empty()).then(|| self.positions.len() - 1))
    }
}

/// Runs the position machine over `len` bars split into days. `signal(t)`
/// returns `None` while the rule is not yet evaluable at `t`.
fn run_machine(
    len: usize,
    day_starts: &[usize],
    mut signal: impl FnMut(usize, usize) -> Option<Signals>,
) -> PositionSeries {
    let mut positions = vec![0i8; len];
    let mut events = Vec::new();
    for range in crate::ingest::day_ranges(day_starts, len) {
        let mut pos = 0i8;
        let last = range.end - 1;
        for t in range.clone() {
            if t == last {
                if let Some(side) = Side::of(pos) {
                    events.push(SignalEvent {
                        bar: t,
                        kind: EventKind::ForcedClose(side),
                    });
                }
                pos = 0;
            } else if let Some(s) = signal(t, range.start) {
                if (pos == 1 && s.close_long) || (pos == -1 && s.close_short) {
                    events.push(SignalEvent {
                        bar: t,
                        kind: EventKind::Close(Side::of(pos).unwrap()),
                    });
                    pos = 0;
                }
                let open = if s.open_long {
                    Some(Side::Long)
                } else if s.open_short {
                    Some(Side::Short)
                } else {
                    None
                };
                if let Some(side) = open {
                    if pos != side.sign() {
                        if let Some(prev) = Side::of(pos) {
                            events.push(SignalEvent {
                                bar: t,
                                kind: EventKind::Close(prev),
                            });
                        }
                        events.push(SignalEvent {
                            bar: t,
                            kind: EventKind::Open(side),
                        });
                        pos = side.sign();
                    }
                }
            }
            positions[t] = pos;
        }
    }
    PositionSeries {
        positions,
        day_starts: day_starts.to_vec(),
        events,
    }
}

fn pair(values: &[f64], t: usize, floor: usize) -> Option<(f64, f64)> {
    if t <= floor {
        return None;
    }
    let (a, b) = (values[t - 1], values[t]);
    (!a.is_nan() && !b.is_nan()).then_some((a, b))
}

/// MA filter-band rules on a single-day ratio series `R`.
pub fn ma_signals(ratio: &IndicatorSeries, band: f64) -> PositionSeries {
    ma_machine(ratio.values(), &[0], band, false)
}

/// KDJ cross rules on single-day %K / %D series.
pub fn kdj_signals(k: &IndicatorSeries, d: &IndicatorSeries) -> PositionSeries {
    kdj_machine(k.values(), d.values(), &[0], false)
}

/// SBoll band rules on a single-day z-score series.
pub fn boll_signals(z: &IndicatorSeries, width: f64) -> PositionSeries {
    boll_machine(z.values(), &[0], width, false)
}

fn ma_machine(r: &[f64], days: &[usize], band: f64, cross_day: bool) -> PositionSeries {
    run_machine(r.len(), days, |t, start| {
        let floor = if cross_day { 0 } else { start };
        pair(r, t, floor).map(|(a, b)| Signals::ma(a, b, band))
    })
}

fn kdj_machine(k: &[f64], d: &[f64], days: &[usize], cross_day: bool) -> PositionSeries {
    run_machine(k.len(), days, |t, start| {
        let floor = if cross_day { 0 } else { start };
        let (k0, k1) = pair(k, t, floor)?;
        let (d0, d1) = pair(d, t, floor)?;
        Some(Signals::kdj(k0, d0, k1, d1))
    })
}

fn boll_machine(z: &[f64], days: &[usize], width: f64, cross_day: bool) -> PositionSeries {
    run_machine(z.len(), days, |t, start| {
        let floor = if cross_day { 0 } else { start };
        pair(z, t, floor).map(|(a, b)| Signals::boll(a, b, width))
    })
}

/// Indicator values needed by one strategy over a whole bar series.
#[derive(Debug, Clone, PartialEq)]
pub enum IndicatorPath {
    Ratio(Vec<f64>),
    Kdj { k: Vec<f64>, d: Vec<f64> },
    Sboll(Vec<f64>),
}

/// Computes the strategy's indicator per trading day (or over the whole
/// series when `cross_day_windows` is set). Undefined entries are NaN.
pub fn indicator_path(
    spec: &StrategySpec,
    series: &BarSeries,
    cross_day_windows: bool,
) -> Result<IndicatorPath> {
    spec.validate()?;
    let prices = series.prices();
    let segments = if cross_day_windows {
        std::iter::once(0..prices.len()).collect()
    } else {
        series.day_ranges()
    };
    let mut a = Vec::with_capacity(prices.len());
    let mut b = Vec::new();
    for seg in segments {
        let p = &prices[seg];
        match spec.params {
            Params::Ma { short, long, .. } => {
                a.extend_from_slice(indicators::sma_ratio(p, short, long)?.values())
            }
            Params::Kdj { n, m, k } => {
                let kdj = indicators::kdj(p, n, m, k)?;
                a.extend_from_slice(kdj.k.values());
                b.extend_from_slice(kdj.d.values());
            }
            Params::Boll { n, .. } => a.extend_from_slice(indicators::sboll(p, n)?.values()),
        }
    }
    Ok(match spec.params {
        Params::Ma { .. } => IndicatorPath::Ratio(a),
        Params::Kdj { .. } => IndicatorPath::Kdj { k: a, d: b },
        Params::Boll { .. } => IndicatorPath::Sboll(a),
    })
}

/// Applies the strategy's rule block to a precomputed indicator path.
pub fn positions_from_path(
    spec: &StrategySpec,
    path: &IndicatorPath,
    day_starts: &[usize],
    cross_day_windows: bool,
) -> Result<PositionSeries> {
    Ok(match (spec.params, path) {
        (Params::Ma { band, .. }, IndicatorPath::Ratio(r)) => {
            ma_machine(r, day_starts, band, cross_day_windows)
        }
        (Params::Kdj { .. }, IndicatorPath::Kdj { k, d }) => {
            kdj_machine(k, d, day_starts, cross_day_windows)
        }
        (Params::Boll { width, .. }, IndicatorPath::Sboll(z)) => {
            boll_machine(z, day_starts, width, cross_day_windows)
        }
        _ => {
            return Err(Error::Misaligned(format!(
                "indicator path does not match strategy {spec}"
            )))
        }
    })
}

/// Positions of `spec` over every day of `series`.
pub fn positions(
    spec: &StrategySpec,
    series: &BarSeries,
    cross_day_windows: bool,
) -> Result<PositionSeries> {
    let path = indicator_path(spec, series, cross_day_windows)?;
    positions_from_path(spec, &path, series.day_starts(), cross_day_windows)
}
