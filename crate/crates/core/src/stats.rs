//! Correlation, Fisher-z intervals, t-test p-values and order statistics.

use std::fmt;
use std::str::FromStr;

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

/// Two-sided 95% standard normal critical value.
pub const Z_CRIT_95: f64 = 1.959964;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("degenerate input")]
    Degenerate,
    #[error("empty input")]
    Empty,
    #[error("correlation {0} outside [-1, 1]")]
    OutOfRange(f64),
    #[error("confidence level {0} outside (0, 1)")]
    BadLevel(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationResult {
    pub r: f64,
    pub n: usize,
    pub ci95: (f64, f64),
    pub p_value: f64,
}

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewSamples {
            needed: 3,
            got: x.len(),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    // Relative threshold so that constant inputs with rounding noise in the mean
    // still count as zero variance.
    let scale_x = x.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    let scale_y = y.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    if sxx <= 1e-24 * scale_x || syy <= 1e-24 * scale_y {
        return Err(StatsError::Degenerate);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn check_r_n(r: f64, n: usize) -> Result<(), StatsError> {
    if !(-1.0..=1.0).contains(&r) || r.is_nan() {
        return Err(StatsError::OutOfRange(r));
    }
    if n < 4 {
        return Err(StatsError::TooFewSamples { needed: 4, got: n });
    }
    Ok(())
}

fn z_critical(level: f64) -> Result<f64, StatsError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::BadLevel(level));
    }
    if (level - 0.95).abs() < 1e-15 {
        return Ok(Z_CRIT_95);
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(0.5 + level / 2.0))
}

/// Fisher z-transform confidence interval for a correlation coefficient.
pub fn fisher_ci(r: f64, n: usize, level: f64) -> Result<(f64, f64), StatsError> {
    check_r_n(r, n)?;
    let z_crit = z_critical(level)?;
    if r.abs() == 1.0 {
        return Ok((r, r));
    }
    let z = r.atanh();
    let half = z_crit / ((n - 3) as f64).sqrt();
    Ok(((z - half).tanh(), (z + half).tanh()))
}

/// Two-sided p-value of H0: rho = 0 using the Student-t statistic with n-2
/// degrees of freedom.
pub fn p_value_pearson(r: f64, n: usize) -> Result<f64, StatsError> {
    check_r_n(r, n)?;
    if r.abs() == 1.0 {
        return Ok(0.0);
    }
    if r == 0.0 {
        return Ok(1.0);
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    Ok((2.0 * dist.sf(t.abs())).clamp(0.0, 1.0))
}

/// Pearson r with its 95% Fisher interval and p-value.
pub fn correlate(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    let r = pearson(x, y)?;
    let n = x.len();
    Ok(CorrelationResult {
        r,
        n,
        ci95: fisher_ci(r, n, 0.95)?,
        p_value: p_value_pearson(r, n)?,
    })
}

/// Sample quantile convention. All interpolate linearly between order
/// statistics and differ in plotting position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuantileMethod {
    /// Position p(n-1)+1.
    #[default]
    Linear,
    /// Position p(n+1).
    Weibull,
    /// Position pn+1/2.
    Hazen,
}

impl QuantileMethod {
    pub fn name(self) -> &'static str {
        match self {
            QuantileMethod::Linear => "linear",
            QuantileMethod::Weibull => "weibull",
            QuantileMethod::Hazen => "hazen",
        }
    }

    fn position(self, p: f64, n: usize) -> f64 {
        let n = n as f64;
        let h = match self {
            QuantileMethod::Linear => p * (n - 1.0) + 1.0,
            QuantileMethod::Weibull => p * (n + 1.0),
            QuantileMethod::Hazen => p * n + 0.5,
        };
        h.clamp(1.0, n)
    }
}

impl FromStr for QuantileMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(QuantileMethod::Linear),
            "weibull" => Ok(QuantileMethod::Weibull),
            "hazen" => Ok(QuantileMethod::Hazen),
            other => Err(format!(
                "unknown quantile method '{other}' (expected linear, weibull or hazen)"
            )),
        }
    }
}

impl fmt::Display for QuantileMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Quantile of already-sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64, method: QuantileMethod) -> f64 {
    let h = method.position(p, sorted.len());
    let lo = h.floor() as usize;
    let frac = h - h.floor();
    let below = sorted[lo - 1];
    if lo >= sorted.len() {
        return below;
    }
    below + frac * (sorted[lo] - below)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub min: f64,
    pub max: f64,
}

pub fn median_iqr(values: &[f64]) -> Result<Summary, StatsError> {
    median_iqr_with(values, QuantileMethod::Linear)
}

pub fn median_iqr_with(values: &[f64], method: QuantileMethod) -> Result<Summary, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25, method);
    let q3 = quantile_sorted(&sorted, 0.75, method);
    Ok(Summary {
        median: quantile_sorted(&sorted, 0.5, method),
        q1,
        q3,
        iqr: q3 - q1,
        min: sorted[0],
        max: sorted[sorted.len() - 1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pearson_basic() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-15);
        // sxy = 2, sxx = syy = 5 after centring.
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap();
        assert!((r - 0.6).abs() < 1e-12);
    }

    #[test]
    fn pearson_errors() {
        assert_eq!(
            pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]),
            Err(StatsError::LengthMismatch(3, 2))
        );
        let err = pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap_err();
        assert_eq!(err.to_string(), "degenerate input");
        let err = pearson(&[0.1, 0.1, 0.1, 0.1], &[1.0, 2.0, 3.0, 4.0]).unwrap_err();
        assert_eq!(err, StatsError::Degenerate);
    }

    #[test]
    fn fisher_ci_values() {
        // tanh(±1.959964/7)
        let (lo, hi) = fisher_ci(0.0, 52, 0.95).unwrap();
        assert!((lo + 0.273).abs() < 5e-4 && (hi - 0.273).abs() < 5e-4);
        let (lo, hi) = fisher_ci(-0.586, 50, 0.95).unwrap();
        assert!((lo + 0.742).abs() < 0.005 && (hi + 0.370).abs() < 0.005);
        let (lo, hi) = fisher_ci(0.526, 50, 0.95).unwrap();
        assert!((lo - 0.293).abs() < 0.005 && (hi - 0.700).abs() < 0.005);
        assert_eq!(fisher_ci(1.0, 10, 0.95).unwrap(), (1.0, 1.0));
        assert!(fisher_ci(0.3, 3, 0.95).is_err());
    }

    #[test]
    fn fisher_ci_other_level() {
        let (lo95, hi95) = fisher_ci(0.3, 30, 0.95).unwrap();
        let (lo99, hi99) = fisher_ci(0.3, 30, 0.99).unwrap();
        assert!(lo99 < lo95 && hi99 > hi95);
    }

    #[test]
    fn p_values() {
        assert_eq!(p_value_pearson(0.0, 20).unwrap(), 1.0);
        assert!(p_value_pearson(-0.586, 50).unwrap() < 1e-5);
        // t = 1.633, df = 8; value from an independent t-CDF evaluation.
        assert!((p_value_pearson(0.5, 10).unwrap() - 0.141113).abs() < 1e-5);
    }

    #[test]
    fn median_iqr_small() {
        let s = median_iqr(&[5.0, 1.0, 4.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.median, s.q1, s.q3, s.iqr), (3.0, 2.0, 4.0, 2.0));
        assert_eq!((s.min, s.max), (1.0, 5.0));
        assert_eq!(median_iqr(&[]), Err(StatsError::Empty));
        let one = median_iqr(&[2.5]).unwrap();
        assert_eq!((one.median, one.iqr), (2.5, 0.0));
    }

    #[test]
    fn quantile_methods_differ() {
        let v = [1.0, 2.0, 3.0, 4.0];
        let lin = median_iqr_with(&v, QuantileMethod::Linear).unwrap();
        let wei = median_iqr_with(&v, QuantileMethod::Weibull).unwrap();
        let haz = median_iqr_with(&v, QuantileMethod::Hazen).unwrap();
        assert_eq!((lin.q1, lin.q3), (1.75, 3.25));
        assert_eq!((wei.q1, wei.q3), (1.25, 3.75));
        assert_eq!((haz.q1, haz.q3), (1.5, 3.5));
        assert_eq!("hazen".parse::<QuantileMethod>().unwrap(), QuantileMethod::Hazen);
        assert!("r7".parse::<QuantileMethod>().is_err());
    }

    proptest! {
        #[test]
        fn pearson_affine_invariance(
            xs in prop::collection::vec(-100.0f64..100.0, 5..30),
            noise in prop::collection::vec(-50.0f64..50.0, 30),
            a in prop::sample::select(vec![-3.0, -0.5, 0.25, 2.0]),
            c in prop::sample::select(vec![-2.0, 0.5, 4.0]),
            b in -10.0f64..10.0, d in -10.0f64..10.0,
        ) {
            let ys: Vec<f64> = xs.iter().zip(&noise).map(|(x, e)| 0.3 * x + e).collect();
            if let Ok(r) = pearson(&xs, &ys) {
                let xt: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
                let yt: Vec<f64> = ys.iter().map(|y| c * y + d).collect();
                let rt = pearson(&xt, &yt).unwrap();
                prop_assert!((rt - (a * c).signum() * r).abs() < 1e-9);
            }
        }

        #[test]
        fn fisher_ci_contains_r_and_narrows(r in -0.99f64..0.99, n in 4usize..500) {
            let (lo, hi) = fisher_ci(r, n, 0.95).unwrap();
            prop_assert!(lo <= r && r <= hi);
            let (lo2, hi2) = fisher_ci(r, n + 1, 0.95).unwrap();
            prop_assert!(hi2 - lo2 < hi - lo);
        }

        #[test]
        fn fisher_round_trip(r in -0.9999f64..0.9999) {
            prop_assert!((r.atanh().tanh() - r).abs() < 1e-12);
        }

        #[test]
        fn quantile_bounds(v in prop::collection::vec(-1e3f64..1e3, 1..60)) {
            for m in [QuantileMethod::Linear, QuantileMethod::Weibull, QuantileMethod::Hazen] {
                let s = median_iqr_with(&v, m).unwrap();
                prop_assert!(s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max);
            }
        }
    }
}
