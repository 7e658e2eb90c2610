//! Before/after-order analysis per region, national summaries, and the
//! cross-region mobility/growth correlation.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::growth_fit::{
    doubling_time_exponential, doubling_time_power_law_with, empirical_doubling_time_with, fit_exponential,
    fit_linear, fit_power_law, DoublingTimeSummary, FitError, GrowthFit, LinearFit, ModelKind,
};
use crate::stats::{correlate, median_iqr_with, CorrelationResult, QuantileMethod, StatsError};
use crate::timeseries::{
    split_at_order, CaseSeries, EpochDay, InterventionOrder, MobilityMetric, MobilitySeries, Window,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhaseError {
    #[error("no analysable regions ({skipped} skipped)")]
    NothingAnalysed { skipped: usize },
    #[error("need at least 4 regions with both fits, got {0}")]
    TooFewRegions(usize),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Doubling-time results for one side of the order.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseFits {
    pub window: Window,
    pub empirical: DoublingTimeSummary,
    pub exp_fit: Option<GrowthFit>,
    pub exp_dt: Option<f64>,
    pub pl_fit: Option<GrowthFit>,
    pub pl_dt: Option<DoublingTimeSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDetail {
    pub before: PhaseFits,
    pub after: PhaseFits,
    /// After-median minus before-median of the empirical doubling time.
    pub change: f64,
    /// Why an optional pathway (a model fit or its doubling time) is missing.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhaseOutcome {
    Analyzed(Box<PhaseDetail>),
    Skipped { reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseReport {
    pub region: String,
    pub order_day: Option<EpochDay>,
    pub outcome: PhaseOutcome,
}

impl PhaseReport {
    pub fn detail(&self) -> Option<&PhaseDetail> {
        match &self.outcome {
            PhaseOutcome::Analyzed(d) => Some(d),
            PhaseOutcome::Skipped { .. } => None,
        }
    }

    pub fn skipped(region: impl Into<String>, order_day: Option<EpochDay>, reason: impl Into<String>) -> Self {
        PhaseReport {
            region: region.into(),
            order_day,
            outcome: PhaseOutcome::Skipped {
                reason: reason.into(),
            },
        }
    }

    /// A report carrying only empirical summaries, e.g. replayed from
    /// published per-region medians.
    pub fn from_empirical(
        region: impl Into<String>,
        order_day: Option<EpochDay>,
        before: DoublingTimeSummary,
        after: DoublingTimeSummary,
    ) -> Self {
        let phase = |empirical: DoublingTimeSummary| {
            let window = match (empirical.per_day.first(), empirical.per_day.last()) {
                (Some(a), Some(b)) => Window::new(a.0, b.0),
                _ => Window::all(),
            };
            PhaseFits {
                window,
                empirical,
                exp_fit: None,
                exp_dt: None,
                pl_fit: None,
                pl_dt: None,
            }
        };
        let change = after.median - before.median;
        PhaseReport {
            region: region.into(),
            order_day,
            outcome: PhaseOutcome::Analyzed(Box::new(PhaseDetail {
                before: phase(before),
                after: phase(after),
                change,
                notes: Vec::new(),
            })),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseOptions {
    pub quantile_method: QuantileMethod,
}

fn analyze_phase(
    series: &CaseSeries,
    label: &str,
    options: PhaseOptions,
    notes: &mut Vec<String>,
) -> Result<PhaseFits, FitError> {
    let window = series.window();
    let empirical = empirical_doubling_time_with(series, window, options.quantile_method)?;

    let exp_fit = fit_exponential(series, window)
        .map_err(|e| notes.push(format!("{label} exponential fit: {e}")))
        .ok();
    let exp_dt = exp_fit.as_ref().and_then(|f| {
        let dt = doubling_time_exponential(f.b);
        if dt.is_none() {
            notes.push(format!("{label} exponential doubling time: no growth"));
        }
        dt
    });

    let pl_fit = fit_power_law(series, window)
        .map_err(|e| notes.push(format!("{label} power-law fit: {e}")))
        .ok();
    if pl_fit.as_ref().is_some_and(|f| f.at_bracket_boundary) {
        notes.push(format!("{label} power-law exponent at search boundary"));
    }
    let pl_dt = pl_fit.as_ref().and_then(|f| {
        doubling_time_power_law_with(f, window, options.quantile_method)
            .map_err(|e| notes.push(format!("{label} power-law doubling time: {e}")))
            .ok()
    });

    Ok(PhaseFits {
        window,
        empirical,
        exp_fit,
        exp_dt,
        pl_fit,
        pl_dt,
    })
}

/// Splits a region at its order date and runs the empirical, exponential and
/// power-law doubling-time pathways on each phase.
pub fn analyze_region(cases: &CaseSeries, order: &InterventionOrder, options: PhaseOptions) -> PhaseReport {
    let region = cases.region().to_string();
    let order_day = Some(order.effective_day);
    let (before, after) = match split_at_order(cases, order) {
        Ok(parts) => parts,
        Err(e) => return PhaseReport::skipped(region, order_day, e.to_string()),
    };
    let mut notes = Vec::new();
    let before = match analyze_phase(&before, "before", options, &mut notes) {
        Ok(p) => p,
        Err(e) => return PhaseReport::skipped(region, order_day, format!("before order: {e}")),
    };
    let after = match analyze_phase(&after, "after", options, &mut notes) {
        Ok(p) => p,
        Err(e) => return PhaseReport::skipped(region, order_day, format!("after order: {e}")),
    };
    let change = after.empirical.median - before.empirical.median;
    PhaseReport {
        region,
        order_day,
        outcome: PhaseOutcome::Analyzed(Box::new(PhaseDetail {
            before,
            after,
            change,
            notes,
        })),
    }
}

/// One report per case series, in region order. Regions without an order
/// are reported as skipped.
pub fn analyze_all(cases: &[CaseSeries], orders: &[InterventionOrder], options: PhaseOptions) -> Vec<PhaseReport> {
    let by_region: BTreeMap<&str, &InterventionOrder> = orders.iter().map(|o| (o.region.as_str(), o)).collect();
    let mut reports: Vec<PhaseReport> = cases
        .par_iter()
        .map(|series| match by_region.get(series.region()) {
            Some(order) => analyze_region(series, order, options),
            None => PhaseReport::skipped(series.region(), None, "no order"),
        })
        .collect();
    reports.sort_by(|a, b| a.region.cmp(&b.region));
    reports
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NationalSummary {
    pub before: PhaseStats,
    pub after: PhaseStats,
    pub analyzed: usize,
    pub skipped: usize,
}

fn phase_stats(values: &[f64], method: QuantileMethod) -> Result<PhaseStats, StatsError> {
    let s = median_iqr_with(values, method)?;
    Ok(PhaseStats {
        median: s.median,
        q1: s.q1,
        q3: s.q3,
        iqr: s.iqr,
        min: s.min,
        max: s.max,
    })
}

/// Median/IQR/range of the per-region empirical medians, per phase.
pub fn national_summary(reports: &[PhaseReport], method: QuantileMethod) -> Result<NationalSummary, PhaseError> {
    let details: Vec<&PhaseDetail> = reports.iter().filter_map(PhaseReport::detail).collect();
    let skipped = reports.len() - details.len();
    if details.is_empty() {
        return Err(PhaseError::NothingAnalysed { skipped });
    }
    let before: Vec<f64> = details.iter().map(|d| d.before.empirical.median).collect();
    let after: Vec<f64> = details.iter().map(|d| d.after.empirical.median).collect();
    Ok(NationalSummary {
        before: phase_stats(&before, method)?,
        after: phase_stats(&after, method)?,
        analyzed: details.len(),
        skipped,
    })
}

/// Growth coefficient of every region over a common window.
/// Returns the fits and the (region, reason) pairs that failed.
pub fn fit_growth_coefficients(
    cases: &[CaseSeries],
    window: Window,
    model: ModelKind,
) -> (BTreeMap<String, GrowthFit>, Vec<(String, String)>) {
    let results: Vec<(String, Result<GrowthFit, FitError>)> = cases
        .par_iter()
        .map(|s| {
            let fit = match model {
                ModelKind::Exponential => fit_exponential(s, window),
                ModelKind::PowerLaw => fit_power_law(s, window),
            };
            (s.region().to_string(), fit)
        })
        .collect();
    split_results(results)
}

/// Linear mobility trend of every region over a common window.
pub fn fit_mobility_trends(
    series: &[MobilitySeries],
    window: Window,
) -> (BTreeMap<String, LinearFit>, Vec<(String, String)>) {
    let results = series
        .par_iter()
        .map(|s| (s.region.clone(), fit_linear(s, window)))
        .collect();
    split_results(results)
}

fn split_results<T>(results: Vec<(String, Result<T, FitError>)>) -> (BTreeMap<String, T>, Vec<(String, String)>) {
    let mut ok = BTreeMap::new();
    let mut failed = Vec::new();
    for (region, r) in results {
        match r {
            Ok(fit) => {
                ok.insert(region, fit);
            }
            Err(e) => failed.push((region, e.to_string())),
        }
    }
    failed.sort();
    (ok, failed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityCorrelation {
    pub metric: MobilityMetric,
    pub result: CorrelationResult,
    pub matched: Vec<String>,
    /// Regions present on only one side.
    pub excluded: Vec<String>,
}

/// Pearson correlation between case growth coefficients and mobility slopes,
/// pairing regions by name.
pub fn correlate_mobility_growth(
    case_fits: &BTreeMap<String, GrowthFit>,
    mobility_fits: &BTreeMap<String, LinearFit>,
    metric: MobilityMetric,
) -> Result<MobilityCorrelation, PhaseError> {
    let mut matched = Vec::new();
    let mut growth = Vec::new();
    let mut slopes = Vec::new();
    for (region, fit) in case_fits {
        if let Some(m) = mobility_fits.get(region) {
            matched.push(region.clone());
            growth.push(fit.b);
            slopes.push(m.slope);
        }
    }
    let mut excluded: Vec<String> = case_fits
        .keys()
        .chain(mobility_fits.keys())
        .filter(|r| !(case_fits.contains_key(*r) && mobility_fits.contains_key(*r)))
        .cloned()
        .collect();
    excluded.sort();
    excluded.dedup();
    if matched.len() < 4 {
        return Err(PhaseError::TooFewRegions(matched.len()));
    }
    let result = correlate(&growth, &slopes)?;
    Ok(MobilityCorrelation {
        metric,
        result,
        matched,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn two_rate(region: &str, order: i32, r1: f64, r2: f64, days: i32, scale: f64) -> CaseSeries {
        let pivot = f64::from(order - 1);
        let counts: Vec<u64> = (1..=days)
            .map(|d| {
                let t = f64::from(d);
                let y = if t <= pivot {
                    scale * (r1 * t).exp()
                } else {
                    scale * (r1 * pivot).exp() * (r2 * (t - pivot)).exp()
                };
                y.round() as u64
            })
            .collect();
        CaseSeries::from_counts(region, EpochDay(1), &counts).unwrap()
    }

    fn order(region: &str, day: i32) -> InterventionOrder {
        InterventionOrder {
            region: region.into(),
            effective_day: EpochDay(day),
        }
    }

    #[test]
    fn rate_drop_lengthens_doubling_time() {
        let s = two_rate("R", 15, 0.35, 0.10, 31, 1000.0);
        let report = analyze_region(&s, &order("R", 15), PhaseOptions::default());
        let d = report.detail().expect("analysed");
        assert!((d.before.empirical.median - LN_2 / 0.35).abs() < 0.02);
        assert!((d.after.empirical.median - LN_2 / 0.10).abs() < 0.05);
        assert!((d.change - 4.95).abs() < 0.07);
        assert_eq!(d.change, d.after.empirical.median - d.before.empirical.median);
        assert!((d.before.exp_dt.unwrap() - LN_2 / 0.35).abs() < 0.02);
        assert!(d.after.pl_fit.is_some());
        assert!(d.before.pl_dt.is_some());
    }

    #[test]
    fn constant_rate_has_no_change() {
        let s = two_rate("R", 15, 0.2, 0.2, 31, 1000.0);
        let d = analyze_region(&s, &order("R", 15), PhaseOptions::default());
        assert!(d.detail().unwrap().change.abs() < 0.05);
    }

    #[test]
    fn order_outside_series_is_skipped() {
        let s = two_rate("R", 15, 0.2, 0.2, 31, 100.0);
        let report = analyze_region(&s, &order("R", 60), PhaseOptions::default());
        match report.outcome {
            PhaseOutcome::Skipped { reason } => assert!(reason.contains("insufficient phase data")),
            _ => panic!("expected skip"),
        }
    }

    #[test]
    fn regions_without_orders_are_skipped() {
        let cases = vec![two_rate("B", 15, 0.3, 0.1, 31, 100.0), two_rate("A", 15, 0.3, 0.1, 31, 100.0)];
        let reports = analyze_all(&cases, &[order("B", 15)], PhaseOptions::default());
        assert_eq!(reports[0].region, "A");
        assert_eq!(reports[0].outcome, PhaseOutcome::Skipped { reason: "no order".into() });
        assert!(reports[1].detail().is_some());
        let summary = national_summary(&reports, QuantileMethod::Linear).unwrap();
        assert_eq!((summary.analyzed, summary.skipped), (1, 1));
        assert_eq!(summary.before.iqr, 0.0);
        assert_eq!(summary.before.median, reports[1].detail().unwrap().before.empirical.median);
    }

    #[test]
    fn all_skipped_summary_errors() {
        let reports = vec![PhaseReport::skipped("A", None, "no order")];
        assert_eq!(
            national_summary(&reports, QuantileMethod::Linear),
            Err(PhaseError::NothingAnalysed { skipped: 1 })
        );
    }

    fn growth(b: f64) -> GrowthFit {
        GrowthFit {
            model: ModelKind::PowerLaw,
            a: 1.0,
            b,
            k: 0.0,
            window: (EpochDay(1), EpochDay(31)),
            n: 31,
            r_squared: 1.0,
            rmse: 0.0,
            at_bracket_boundary: false,
        }
    }

    fn trend(slope: f64) -> LinearFit {
        LinearFit {
            slope,
            intercept: 0.0,
            window: (EpochDay(1), EpochDay(31)),
            n: 31,
            r_squared: 1.0,
        }
    }

    #[test]
    fn correlation_matches_by_region() {
        let mut cases = BTreeMap::new();
        let mut mob = BTreeMap::new();
        for (i, r) in ["a", "b", "c", "d", "e"].iter().enumerate() {
            cases.insert(r.to_string(), growth(1.0 + i as f64));
            mob.insert(r.to_string(), trend(-(i as f64) * 0.5 + if i % 2 == 0 { 0.01 } else { -0.01 }));
        }
        cases.insert("only_cases".into(), growth(9.0));
        mob.insert("only_mobility".into(), trend(1.0));
        let c = correlate_mobility_growth(&cases, &mob, MobilityMetric::MaxTravelDistanceKm).unwrap();
        assert_eq!(c.result.n, 5);
        assert!(c.result.r < -0.99);
        assert_eq!(c.excluded, vec!["only_cases".to_string(), "only_mobility".to_string()]);
    }

    #[test]
    fn correlation_degenerate_and_small() {
        let cases: BTreeMap<String, GrowthFit> = (0..6).map(|i| (format!("r{i}"), growth(1.0 + f64::from(i)))).collect();
        let flat: BTreeMap<String, LinearFit> = (0..6).map(|i| (format!("r{i}"), trend(-0.3))).collect();
        let err = correlate_mobility_growth(&cases, &flat, MobilityMetric::HomeDwellMinutes).unwrap_err();
        assert_eq!(err.to_string(), "degenerate input");
        let few: BTreeMap<String, LinearFit> = (0..3).map(|i| (format!("r{i}"), trend(f64::from(i)))).collect();
        assert_eq!(
            correlate_mobility_growth(&cases, &few, MobilityMetric::HomeDwellMinutes),
            Err(PhaseError::TooFewRegions(3))
        );
    }
}
