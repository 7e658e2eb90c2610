//! Canonical daily series, epoch-day arithmetic, incidence derivation and
//! phase splitting around an intervention date.

use std::fmt;

use chrono::NaiveDate;
use thiserror::Error;

/// Minimum number of days each phase needs to support a fit.
pub const MIN_PHASE_DAYS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("no observations")]
    NoObservations,
    #[error("no cases")]
    NoCases,
    #[error("at least {needed} observations required, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("duplicate observation for {0}")]
    DuplicateDay(NaiveDate),
    #[error("insufficient phase data: {before} day(s) before and {after} day(s) after the order (need {MIN_PHASE_DAYS} each)")]
    InsufficientPhaseData { before: usize, after: usize },
    #[error("series is not ordered by day")]
    Unordered,
}

/// Day index with 2020-03-11 as day 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EpochDay(pub i32);

impl EpochDay {
    pub fn origin() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 3, 11).expect("valid origin date")
    }

    pub fn from_date(date: NaiveDate) -> Self {
        let delta = date.signed_duration_since(Self::origin()).num_days();
        EpochDay(delta as i32 + 1)
    }

    pub fn to_date(self) -> NaiveDate {
        Self::origin() + chrono::Duration::days(i64::from(self.0) - 1)
    }

    pub fn index(self) -> i32 {
        self.0
    }

    /// The day as a model time coordinate.
    pub fn t(self) -> f64 {
        f64::from(self.0)
    }

    pub fn next(self) -> Self {
        EpochDay(self.0 + 1)
    }

    pub fn prev(self) -> Self {
        EpochDay(self.0 - 1)
    }
}

impl fmt::Display for EpochDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_date())
    }
}

/// Inclusive day range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: EpochDay,
    pub end: EpochDay,
}

impl Window {
    pub fn new(start: EpochDay, end: EpochDay) -> Self {
        Window { start, end }
    }

    /// Window covering every day representable; used for "whole series" fits.
    pub fn all() -> Self {
        Window {
            start: EpochDay(i32::MIN),
            end: EpochDay(i32::MAX),
        }
    }

    pub fn contains(&self, day: EpochDay) -> bool {
        self.start <= day && day <= self.end
    }
}

/// Anything that can be viewed as a real-valued cumulative curve.
///
/// Implemented by [`CaseSeries`] (integer counts) and [`CurveSeries`]
/// (real-valued, e.g. noiseless model curves).
pub trait Cumulative {
    fn points(&self) -> Vec<(EpochDay, f64)>;

    fn points_in(&self, window: Window) -> Vec<(EpochDay, f64)> {
        self.points()
            .into_iter()
            .filter(|(d, _)| window.contains(*d))
            .collect()
    }
}

/// Cumulative confirmed-case counts for one region, one entry per day.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseSeries {
    region: String,
    days: Vec<(EpochDay, u64)>,
}

impl CaseSeries {
    /// Builds a series, checking it is gap-free, strictly increasing in day
    /// and non-decreasing in count.
    pub fn new(region: impl Into<String>, days: Vec<(EpochDay, u64)>) -> Result<Self, SeriesError> {
        if days.is_empty() {
            return Err(SeriesError::NoObservations);
        }
        for pair in days.windows(2) {
            if pair[1].0 != pair[0].0.next() || pair[1].1 < pair[0].1 {
                return Err(SeriesError::Unordered);
            }
        }
        Ok(CaseSeries {
            region: region.into(),
            days,
        })
    }

    /// Consecutive counts starting at `start`.
    pub fn from_counts(
        region: impl Into<String>,
        start: EpochDay,
        counts: &[u64],
    ) -> Result<Self, SeriesError> {
        let days = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| (EpochDay(start.0 + i as i32), c))
            .collect();
        Self::new(region, days)
    }

    pub fn region(&self) -> &str {
        &self.region
    }

    pub fn days(&self) -> &[(EpochDay, u64)] {
        &self.days
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn first_day(&self) -> EpochDay {
        self.days[0].0
    }

    pub fn last_day(&self) -> EpochDay {
        self.days[self.days.len() - 1].0
    }

    pub fn counts(&self) -> Vec<u64> {
        self.days.iter().map(|&(_, c)| c).collect()
    }

    pub fn window(&self) -> Window {
        Window::new(self.first_day(), self.last_day())
    }

    /// Appends another series that continues this one; used to re-join phases.
    pub fn concat(&self, other: &CaseSeries) -> Result<CaseSeries, SeriesError> {
        let mut days = self.days.clone();
        days.extend_from_slice(&other.days);
        CaseSeries::new(self.region.clone(), days)
    }
}

impl Cumulative for CaseSeries {
    fn points(&self) -> Vec<(EpochDay, f64)> {
        self.days.iter().map(|&(d, c)| (d, c as f64)).collect()
    }
}

/// Real-valued cumulative curve, without the integer/monotone constraints of
/// [`CaseSeries`].
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSeries {
    pub region: String,
    pub points: Vec<(EpochDay, f64)>,
}

impl CurveSeries {
    pub fn from_fn(region: impl Into<String>, days: impl IntoIterator<Item = i32>, mut f: impl FnMut(f64) -> f64) -> Self {
        CurveSeries {
            region: region.into(),
            points: days.into_iter().map(|d| (EpochDay(d), f(f64::from(d)))).collect(),
        }
    }
}

impl Cumulative for CurveSeries {
    fn points(&self) -> Vec<(EpochDay, f64)> {
        self.points.clone()
    }
}

/// New cases per day.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidenceSeries {
    region: String,
    days: Vec<(EpochDay, u64)>,
}

impl IncidenceSeries {
    pub fn new(region: impl Into<String>, days: Vec<(EpochDay, u64)>) -> Result<Self, SeriesError> {
        for pair in days.windows(2) {
            if pair[1].0 != pair[0].0.next() {
                return Err(SeriesError::Unordered);
            }
        }
        Ok(IncidenceSeries {
            region: region.into(),
            days,
        })
    }

    pub fn from_counts(region: impl Into<String>, start: EpochDay, counts: &[u64]) -> Self {
        IncidenceSeries {
            region: region.into(),
            days: counts
                .iter()
                .enumerate()
                .map(|(i, &c)| (EpochDay(start.0 + i as i32), c))
                .collect(),
        }
    }

    pub fn region(&self) -> &str {
        &self.region
    }

    pub fn days(&self) -> &[(EpochDay, u64)] {
        &self.days
    }

    pub fn counts(&self) -> Vec<u64> {
        self.days.iter().map(|&(_, c)| c).collect()
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    /// Running sum back to a cumulative series.
    pub fn cumulative(&self) -> Result<CaseSeries, SeriesError> {
        let mut total = 0u64;
        let days = self
            .days
            .iter()
            .map(|&(d, c)| {
                total += c;
                (d, total)
            })
            .collect();
        CaseSeries::new(self.region.clone(), days)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MobilityMetric {
    MaxTravelDistanceKm,
    HomeDwellMinutes,
}

impl MobilityMetric {
    pub fn label(self) -> &'static str {
        match self {
            MobilityMetric::MaxTravelDistanceKm => "distance",
            MobilityMetric::HomeDwellMinutes => "dwell",
        }
    }
}

impl fmt::Display for MobilityMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Daily mobility metric for one region. Gaps are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilitySeries {
    pub region: String,
    pub metric: MobilityMetric,
    pub days: Vec<(EpochDay, f64)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterventionOrder {
    pub region: String,
    pub effective_day: EpochDay,
}

/// Repairs a raw cumulative feed: sorts by date, forward-fills missing days
/// and clamps any dip up to the running maximum.
pub fn clean_cumulative(
    region: impl Into<String>,
    raw: &[(NaiveDate, u64)],
) -> Result<CaseSeries, SeriesError> {
    if raw.is_empty() {
        return Err(SeriesError::NoObservations);
    }
    let mut sorted = raw.to_vec();
    sorted.sort_by_key(|&(d, _)| d);
    for pair in sorted.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(SeriesError::DuplicateDay(pair[0].0));
        }
    }
    if sorted.iter().all(|&(_, c)| c == 0) {
        return Err(SeriesError::NoCases);
    }

    let mut days: Vec<(EpochDay, u64)> = Vec::with_capacity(sorted.len());
    let mut running_max = 0u64;
    for (date, count) in sorted {
        let day = EpochDay::from_date(date);
        if let Some(&(last_day, last_count)) = days.last() {
            let mut fill = last_day.next();
            while fill < day {
                days.push((fill, last_count));
                fill = fill.next();
            }
        }
        running_max = running_max.max(count);
        days.push((day, running_max));
    }
    CaseSeries::new(region, days)
}

/// First differences of a cumulative series; day one keeps its full count.
pub fn to_incidence(cases: &CaseSeries) -> IncidenceSeries {
    let mut prev = 0u64;
    let days = cases
        .days()
        .iter()
        .map(|&(d, c)| {
            let new = c - prev;
            prev = c;
            (d, new)
        })
        .collect();
    IncidenceSeries {
        region: cases.region().to_string(),
        days,
    }
}

/// Splits into days strictly before the order and days from the order on.
pub fn split_at_order(
    series: &CaseSeries,
    order: &InterventionOrder,
) -> Result<(CaseSeries, CaseSeries), SeriesError> {
    let cut = series
        .days()
        .partition_point(|&(d, _)| d < order.effective_day);
    let before = cut;
    let after = series.len() - cut;
    if before < MIN_PHASE_DAYS || after < MIN_PHASE_DAYS {
        return Err(SeriesError::InsufficientPhaseData { before, after });
    }
    let region = series.region().to_string();
    Ok((
        CaseSeries {
            region: region.clone(),
            days: series.days()[..cut].to_vec(),
        },
        CaseSeries {
            region,
            days: series.days()[cut..].to_vec(),
        },
    ))
}
