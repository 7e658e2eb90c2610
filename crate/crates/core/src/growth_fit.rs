//! Growth-model fits and doubling times.
//!
//! Two cumulative-case models are supported:
//!
//! * exponential `y = a·exp(b·t)`, fitted by ordinary least squares on `ln y`;
//! * power law `y = t^b + k`, fitted by least squares on the linear scale.
//!   For fixed `b` the best offset `k` is the mean of `y - t^b`, so only `b`
//!   is searched (coarse log-spaced scan, then bounded Brent refinement).
//!
//! Doubling times come in three flavours: `ln 2 / b` for an exponential fit,
//! the instantaneous `ln 2 · y / y'` along a power-law fit, and the empirical
//! one-day ratio `ln 2 / ln(y_t / y_{t-1})` taken straight from the data.

use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::stats::{median_iqr_with, QuantileMethod};
use crate::timeseries::{Cumulative, EpochDay, MobilitySeries, Window};

/// Exponent bracket searched by the power-law fit.
pub const POWER_LAW_B_MIN: f64 = 0.01;
pub const POWER_LAW_B_MAX: f64 = 10.0;
/// Absolute tolerance on the power-law exponent.
pub const POWER_LAW_TOL: f64 = 1e-6;
const POWER_LAW_SCAN: usize = 400;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {needed} points in window, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("log of zero")]
    LogOfZero,
    #[error("power-law fit needs t >= 1, got t = {0}")]
    TimeBeforeOrigin(i32),
    #[error("no growth observed")]
    NoGrowth,
    #[error("no defined doubling times in window")]
    NoDefinedDays,
    #[error("expected a {expected} fit, got {got}")]
    WrongModel { expected: ModelKind, got: ModelKind },
    #[error("growth coefficient must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("non-finite data")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Exponential,
    PowerLaw,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Exponential => "exponential",
            ModelKind::PowerLaw => "power_law",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exponential" | "exp" => Ok(ModelKind::Exponential),
            "power_law" | "powerlaw" => Ok(ModelKind::PowerLaw),
            other => Err(format!("unknown model '{other}'")),
        }
    }
}

/// Fitted growth model. For the power law `a` is fixed at 1; for the
/// exponential `k` is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthFit {
    pub model: ModelKind,
    pub a: f64,
    pub b: f64,
    pub k: f64,
    pub window: (EpochDay, EpochDay),
    pub n: usize,
    /// Log scale for the exponential model, linear scale for the power law.
    pub r_squared: f64,
    pub rmse: f64,
    /// Set when the power-law exponent sits on the edge of its search bracket.
    pub at_bracket_boundary: bool,
}

impl GrowthFit {
    pub fn predict(&self, t: f64) -> f64 {
        match self.model {
            ModelKind::Exponential => self.a * (self.b * t).exp(),
            ModelKind::PowerLaw => t.powf(self.b) + self.k,
        }
    }

    /// Sum of squared residuals on the scale the model was fitted on.
    pub fn sse(&self) -> f64 {
        self.rmse * self.rmse * self.n as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub window: (EpochDay, EpochDay),
    pub n: usize,
    pub r_squared: f64,
}

/// Per-day doubling times and their summary over the defined days.
#[derive(Debug, Clone, PartialEq)]
pub struct DoublingTimeSummary {
    pub per_day: Vec<(EpochDay, Option<f64>)>,
    pub median: f64,
    pub iqr: f64,
    pub min: f64,
    pub max: f64,
    /// Days whose doubling time is undefined.
    pub excluded: usize,
}

impl DoublingTimeSummary {
    pub fn from_per_day(
        per_day: Vec<(EpochDay, Option<f64>)>,
        method: QuantileMethod,
    ) -> Option<Self> {
        let defined: Vec<f64> = per_day.iter().filter_map(|&(_, td)| td).collect();
        let summary = median_iqr_with(&defined, method).ok()?;
        Some(DoublingTimeSummary {
            excluded: per_day.len() - defined.len(),
            per_day,
            median: summary.median,
            iqr: summary.iqr,
            min: summary.min,
            max: summary.max,
        })
    }

    pub fn defined(&self) -> impl Iterator<Item = f64> + '_ {
        self.per_day.iter().filter_map(|&(_, td)| td)
    }
}

fn collect_points(points: Vec<(EpochDay, f64)>, needed: usize) -> Result<Vec<(EpochDay, f64)>, FitError> {
    if points.len() < needed {
        return Err(FitError::TooFewPoints {
            needed,
            got: points.len(),
        });
    }
    if points.iter().any(|(_, y)| !y.is_finite()) {
        return Err(FitError::NonFinite);
    }
    Ok(points)
}

/// Ordinary least squares of `y` on `x`: (slope, intercept, sse, sst).
fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut sst = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
        sst += (yi - my) * (yi - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let sse = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| {
            let e = yi - (intercept + slope * xi);
            e * e
        })
        .sum();
    (slope, intercept, sse, sst)
}

fn r_squared(sse: f64, sst: f64) -> f64 {
    let scale = sst.max(sse).max(f64::MIN_POSITIVE);
    if sst <= 1e-24 * scale || sst == 0.0 {
        // Flat data: a perfect flat fit explains everything there is.
        return if sse <= 1e-20 * scale.max(1.0) { 1.0 } else { 0.0 };
    }
    (1.0 - sse / sst).clamp(0.0, 1.0)
}

/// Fits `y = a·exp(b·t)` by least squares on `ln y`.
pub fn fit_exponential<S: Cumulative + ?Sized>(series: &S, window: Window) -> Result<GrowthFit, FitError> {
    let points = collect_points(series.points_in(window), 4)?;
    if points.iter().any(|&(_, y)| y <= 0.0) {
        return Err(FitError::LogOfZero);
    }
    let t: Vec<f64> = points.iter().map(|(d, _)| d.t()).collect();
    let ln_y: Vec<f64> = points.iter().map(|(_, y)| y.ln()).collect();
    let (b, ln_a, sse, sst) = ols(&t, &ln_y);
    let n = points.len();
    Ok(GrowthFit {
        model: ModelKind::Exponential,
        a: ln_a.exp(),
        b,
        k: 0.0,
        window: (points[0].0, points[n - 1].0),
        n,
        r_squared: r_squared(sse, sst),
        rmse: (sse / n as f64).sqrt(),
        at_bracket_boundary: false,
    })
}

struct PowerLawProblem {
    t: Vec<f64>,
    y: Vec<f64>,
}

impl PowerLawProblem {
    /// Optimal offset and resulting SSE for a fixed exponent.
    fn profile(&self, b: f64) -> (f64, f64) {
        let n = self.t.len() as f64;
        let resid: Vec<f64> = self
            .t
            .iter()
            .zip(&self.y)
            .map(|(t, y)| y - t.powf(b))
            .collect();
        let k = resid.iter().sum::<f64>() / n;
        let sse = resid.iter().map(|r| (r - k) * (r - k)).sum();
        (k, sse)
    }

    fn sse(&self, b: f64) -> f64 {
        self.profile(b).1
    }
}

/// Bounded scalar minimisation (Brent's golden-section/parabolic method).
/// Returns the abscissa of the best point found.
pub(crate) fn minimize_bounded(f: impl Fn(f64) -> f64, lo: f64, hi: f64, xtol: f64) -> f64 {
    const GOLDEN: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (lo, hi);
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;

    for _ in 0..500 {
        let m = 0.5 * (a + b);
        let tol1 = 1e-10 * x.abs() + xtol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            // Parabola through x, w, v.
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            e = d;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if m >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else {
            x + tol1.copysign(d)
        };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    x
}

/// Fits `y = t^b + k` by least squares on the linear scale.
pub fn fit_power_law<S: Cumulative + ?Sized>(series: &S, window: Window) -> Result<GrowthFit, FitError> {
    let points = collect_points(series.points_in(window), 4)?;
    if let Some(&(d, _)) = points.iter().find(|(d, _)| d.index() < 1) {
        return Err(FitError::TimeBeforeOrigin(d.index()));
    }
    let problem = PowerLawProblem {
        t: points.iter().map(|(d, _)| d.t()).collect(),
        y: points.iter().map(|&(_, y)| y).collect(),
    };

    // Coarse log-spaced scan locates the basin; Brent polishes inside it.
    let ln_lo = POWER_LAW_B_MIN.ln();
    let ln_hi = POWER_LAW_B_MAX.ln();
    let grid: Vec<f64> = (0..POWER_LAW_SCAN)
        .map(|i| (ln_lo + (ln_hi - ln_lo) * i as f64 / (POWER_LAW_SCAN - 1) as f64).exp())
        .collect();
    let best = grid
        .iter()
        .map(|&b| problem.sse(b))
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(POWER_LAW_SCAN - 1)];
    let mut b = minimize_bounded(|b| problem.sse(b), lo, hi, POWER_LAW_TOL);
    // Brent never evaluates the bracket ends; compare them explicitly.
    for edge in [lo, hi] {
        if problem.sse(edge) < problem.sse(b) {
            b = edge;
        }
    }
    let (k, sse) = problem.profile(b);
    if !sse.is_finite() {
        return Err(FitError::NonFinite);
    }
    let n = points.len();
    let mean_y = problem.y.iter().sum::<f64>() / n as f64;
    let sst = problem.y.iter().map(|y| (y - mean_y) * (y - mean_y)).sum();
    let boundary_tol = 10.0 * POWER_LAW_TOL;
    Ok(GrowthFit {
        model: ModelKind::PowerLaw,
        a: 1.0,
        b,
        k,
        window: (points[0].0, points[n - 1].0),
        n,
        r_squared: r_squared(sse, sst),
        rmse: (sse / n as f64).sqrt(),
        at_bracket_boundary: b - POWER_LAW_B_MIN < boundary_tol || POWER_LAW_B_MAX - b < boundary_tol,
    })
}

/// Ordinary least squares trend of a mobility series; gaps are skipped.
pub fn fit_linear(series: &MobilitySeries, window: Window) -> Result<LinearFit, FitError> {
    let points: Vec<(EpochDay, f64)> = series
        .days
        .iter()
        .copied()
        .filter(|(d, _)| window.contains(*d))
        .collect();
    let points = collect_points(points, 3)?;
    let t: Vec<f64> = points.iter().map(|(d, _)| d.t()).collect();
    let v: Vec<f64> = points.iter().map(|&(_, v)| v).collect();
    let (slope, intercept, sse, sst) = ols(&t, &v);
    Ok(LinearFit {
        slope,
        intercept,
        window: (points[0].0, points[points.len() - 1].0),
        n: points.len(),
        r_squared: r_squared(sse, sst),
    })
}

/// `ln 2 / b`; `None` when there is no growth.
pub fn doubling_time_exponential(b: f64) -> Option<f64> {
    (b > 0.0 && b.is_finite()).then(|| LN_2 / b)
}

/// Instantaneous doubling time `ln 2 · y(t) / y'(t)` along a power-law fit,
/// for every day in `window`.
pub fn doubling_time_power_law(fit: &GrowthFit, window: Window) -> Result<DoublingTimeSummary, FitError> {
    doubling_time_power_law_with(fit, window, QuantileMethod::Linear)
}

pub fn doubling_time_power_law_with(
    fit: &GrowthFit,
    window: Window,
    method: QuantileMethod,
) -> Result<DoublingTimeSummary, FitError> {
    if fit.model != ModelKind::PowerLaw {
        return Err(FitError::WrongModel {
            expected: ModelKind::PowerLaw,
            got: fit.model,
        });
    }
    if !(fit.b > 0.0) {
        return Err(FitError::NonPositiveRate(fit.b));
    }
    let per_day: Vec<(EpochDay, Option<f64>)> = (window.start.index()..=window.end.index())
        .map(|i| {
            let t = f64::from(i);
            let td = power_law_doubling_at(fit.b, fit.k, t);
            (EpochDay(i), td)
        })
        .collect();
    DoublingTimeSummary::from_per_day(per_day, method).ok_or(FitError::NoDefinedDays)
}

fn power_law_doubling_at(b: f64, k: f64, t: f64) -> Option<f64> {
    if t <= 0.0 {
        return None;
    }
    let y = t.powf(b) + k;
    let slope = b * t.powf(b - 1.0);
    let td = LN_2 * y / slope;
    (y > 0.0 && td.is_finite()).then_some(td)
}

/// Doubling time from consecutive-day ratios, `ln 2 / ln(y_t / y_{t-1})`.
/// Days without growth are undefined and left out of the summary.
pub fn empirical_doubling_time<S: Cumulative + ?Sized>(
    series: &S,
    window: Window,
) -> Result<DoublingTimeSummary, FitError> {
    empirical_doubling_time_with(series, window, QuantileMethod::Linear)
}

pub fn empirical_doubling_time_with<S: Cumulative + ?Sized>(
    series: &S,
    window: Window,
    method: QuantileMethod,
) -> Result<DoublingTimeSummary, FitError> {
    let points = collect_points(series.points_in(window), 2)?;
    let per_day = points
        .windows(2)
        .map(|pair| {
            let (d0, y0) = pair[0];
            let (d1, y1) = pair[1];
            let td = (y0 > 0.0 && y1 > y0).then(|| {
                let dt = f64::from(d1.index() - d0.index());
                LN_2 * dt / (y1 / y0).ln()
            });
            (d1, td.filter(|v| v.is_finite()))
        })
        .collect();
    DoublingTimeSummary::from_per_day(per_day, method).ok_or(FitError::NoGrowth)
}
