//! Ten-Hundred plot coordinates.
//!
//! Each region's cumulative curve is reduced to the times at which it crosses
//! 10, 100, 1000, ... cases. Consecutive tenfold intervals are paired as
//! `(x = later interval, y = earlier interval)`: equal durations sit on the
//! diagonal (exponential growth), a longer later interval lands lower-right
//! (sub-exponential) and a shorter one upper-left (super-exponential).

use std::fmt;

use crate::timeseries::Cumulative;

pub const DEFAULT_BASE_THRESHOLD: f64 = 10.0;
pub const DEFAULT_TOLERANCE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct DecadeCrossings {
    pub region: String,
    /// (threshold, fractional day) in increasing order.
    pub crossings: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrowthClass {
    SubExponential,
    Exponential,
    SuperExponential,
}

impl GrowthClass {
    pub fn name(self) -> &'static str {
        match self {
            GrowthClass::SubExponential => "sub_exponential",
            GrowthClass::Exponential => "exponential",
            GrowthClass::SuperExponential => "super_exponential",
        }
    }
}

impl fmt::Display for GrowthClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TenHundredPoint {
    pub region: String,
    /// Days taken by the later tenfold increase.
    pub x: f64,
    /// Days taken by the earlier tenfold increase.
    pub y: f64,
    pub classification: GrowthClass,
}

/// Crossing times of successive powers of ten, interpolated linearly in
/// log-cases between the bracketing observations. A threshold already
/// exceeded on the first observed day cannot be timed and is skipped with a
/// warning.
pub fn decade_crossings<S: Cumulative + ?Sized>(
    region: &str,
    series: &S,
    base_threshold: f64,
) -> DecadeCrossings {
    let points = series.points();
    let mut out = DecadeCrossings {
        region: region.to_string(),
        crossings: Vec::new(),
        warnings: Vec::new(),
    };
    let max = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if points.is_empty() || !(max >= base_threshold) {
        out.warnings
            .push(format!("series never reaches {base_threshold} cases"));
        return out;
    }

    let mut threshold = base_threshold;
    let mut idx = 0;
    while threshold <= max {
        while points[idx].1 < threshold {
            idx += 1;
        }
        let (d1, y1) = points[idx];
        let time = if idx == 0 {
            if y1 > threshold {
                out.warnings.push(format!(
                    "series starts above {threshold} cases; crossing time unknown"
                ));
                threshold *= 10.0;
                continue;
            }
            d1.t()
        } else {
            let (d0, y0) = points[idx - 1];
            // A bracket starting at zero has no log; interpolate linearly there.
            let frac = if y0 <= 0.0 {
                (threshold - y0) / (y1 - y0)
            } else {
                (threshold.ln() - y0.ln()) / (y1.ln() - y0.ln())
            };
            d0.t() + frac * (d1.t() - d0.t())
        };
        out.crossings.push((threshold, time));
        threshold *= 10.0;
    }
    out
}

/// Classifies a pair of tenfold durations.
pub fn classify(x: f64, y: f64, tolerance: f64) -> GrowthClass {
    if (x - y).abs() / x.max(y) <= tolerance {
        GrowthClass::Exponential
    } else if x > y {
        GrowthClass::SubExponential
    } else {
        GrowthClass::SuperExponential
    }
}

/// One point per pair of consecutive tenfold intervals; empty when fewer
/// than three crossings exist.
pub fn tenhundred_points(crossings: &DecadeCrossings, tolerance: f64) -> Vec<TenHundredPoint> {
    let durations: Vec<f64> = crossings
        .crossings
        .windows(2)
        .map(|w| w[1].1 - w[0].1)
        .collect();
    durations
        .windows(2)
        .map(|pair| TenHundredPoint {
            region: crossings.region.clone(),
            x: pair[1],
            y: pair[0],
            classification: classify(pair[1], pair[0], tolerance),
        })
        .collect()
}
