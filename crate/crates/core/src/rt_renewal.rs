//! Time-varying reproduction number from incidence via the renewal equation.
//!
//! Incidence is modelled as `I_t ~ Poisson(R_t · Λ_t)` with infection
//! potential `Λ_t = Σ_s I_{t-s} w_s`. Holding `R` constant over a sliding
//! window and placing a gamma prior on it gives a gamma posterior:
//!
//! ```text
//! shape = prior_shape + Σ_window I
//! rate  = 1 / prior_scale + Σ_window Λ
//! ```
//!
//! [`simulate_renewal`] runs the same equation forward and is used to check
//! the estimator against planted values.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use statrs::function::gamma::gamma_lr;
use thiserror::Error;

use crate::timeseries::{EpochDay, IncidenceSeries};

pub const DEFAULT_SI_MEAN: f64 = 3.96;
pub const DEFAULT_SI_SD: f64 = 4.75;
pub const DEFAULT_SI_MAX_DAYS: usize = 20;
pub const DEFAULT_WINDOW: usize = 7;
pub const DEFAULT_PRIOR_SHAPE: f64 = 1.0;
pub const DEFAULT_PRIOR_SCALE: f64 = 5.0;

/// Absolute accuracy of the credible-interval bounds.
pub const QUANTILE_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RtError {
    #[error("serial interval mean and sd must be positive (mean = {mean}, sd = {sd})")]
    BadSerialInterval { mean: f64, sd: f64 },
    #[error("serial interval support must be at least 2 days, got {0}")]
    ShortSupport(usize),
    #[error("serial interval pmf must be non-negative with positive mass")]
    BadPmf,
    #[error("window must be at least 1 day")]
    ZeroWindow,
    #[error("prior shape and scale must be positive (shape = {shape}, scale = {scale})")]
    BadPrior { shape: f64, scale: f64 },
}

/// Discrete serial-interval distribution. `weights[s]` is the probability of
/// an `s`-day interval; `weights[0]` is always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SerialInterval {
    weights: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

impl SerialInterval {
    /// Normalises arbitrary non-negative weights for lags `1..=len`.
    pub fn from_weights(lag_weights: &[f64]) -> Result<Self, RtError> {
        if lag_weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(RtError::BadPmf);
        }
        let total: f64 = lag_weights.iter().sum();
        if !(total > 0.0) {
            return Err(RtError::BadPmf);
        }
        let mut weights = Vec::with_capacity(lag_weights.len() + 1);
        weights.push(0.0);
        weights.extend(lag_weights.iter().map(|w| w / total));
        let mean = weights.iter().enumerate().map(|(s, w)| s as f64 * w).sum::<f64>();
        let var = weights
            .iter()
            .enumerate()
            .map(|(s, w)| (s as f64 - mean).powi(2) * w)
            .sum::<f64>();
        Ok(SerialInterval {
            weights,
            mean,
            sd: var.sqrt(),
        })
    }

    /// All mass on a single lag.
    pub fn spike(lag: usize) -> Self {
        assert!(lag >= 1, "same-day transmission is excluded");
        let mut w = vec![0.0; lag];
        w[lag - 1] = 1.0;
        Self::from_weights(&w).expect("valid spike")
    }

    /// Probability mass including the zero lag.
    pub fn pmf(&self) -> &[f64] {
        &self.weights
    }

    /// Largest lag with (possibly) positive mass.
    pub fn support(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn discrete_mean(&self) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(s, w)| s as f64 * w)
            .sum()
    }
}

/// Gamma CDF with the given shape and rate.
pub fn gamma_cdf(shape: f64, rate: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x.is_infinite() {
        1.0
    } else {
        gamma_lr(shape, rate * x)
    }
}

/// Gamma quantile by bisection on the regularised incomplete gamma function.
pub fn gamma_quantile(shape: f64, rate: f64, p: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&p));
    if p <= 0.0 {
        return 0.0;
    }
    let mean = shape / rate;
    let mut hi = mean.max(1.0 / rate);
    while gamma_cdf(shape, rate, hi) < p {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > QUANTILE_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gamma_cdf(shape, rate, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Gamma serial interval with the given mean and sd, discretised by
/// midpoint rounding. Lags run `1..max_days`; mass beyond the last lag is
/// folded into it and the zero lag is dropped before renormalising.
pub fn discretize_serial_interval(mean: f64, sd: f64, max_days: usize) -> Result<SerialInterval, RtError> {
    if !(mean > 0.0 && sd > 0.0) || !mean.is_finite() || !sd.is_finite() {
        return Err(RtError::BadSerialInterval { mean, sd });
    }
    if max_days < 2 {
        return Err(RtError::ShortSupport(max_days));
    }
    let shape = (mean / sd).powi(2);
    let rate = mean / (sd * sd);
    let last = max_days - 1;
    let mut lag_weights: Vec<f64> = (1..=last)
        .map(|s| {
            let s = s as f64;
            (gamma_cdf(shape, rate, s + 0.5) - gamma_cdf(shape, rate, s - 0.5)).max(0.0)
        })
        .collect();
    lag_weights[last - 1] += (1.0 - gamma_cdf(shape, rate, last as f64 + 0.5)).max(0.0);
    SerialInterval::from_weights(&lag_weights)
}

/// Λ_t = Σ_{s≥1} I_{t-s} w_s, treating days before the series as zero.
pub fn infection_potential(incidence: &IncidenceSeries, si: &SerialInterval) -> Vec<f64> {
    potential_from_counts(&incidence.counts(), si)
}

fn potential_from_counts(counts: &[u64], si: &SerialInterval) -> Vec<f64> {
    let w = si.pmf();
    (0..counts.len())
        .map(|t| {
            (1..w.len().min(t + 1))
                .map(|s| counts[t - s] as f64 * w[s])
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RtEstimate {
    /// Last day of the window the estimate refers to.
    pub day: EpochDay,
    pub posterior_shape: f64,
    pub posterior_rate: f64,
    pub mean: f64,
    pub ci95: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RtPrior {
    pub shape: f64,
    pub scale: f64,
}

impl Default for RtPrior {
    fn default() -> Self {
        RtPrior {
            shape: DEFAULT_PRIOR_SHAPE,
            scale: DEFAULT_PRIOR_SCALE,
        }
    }
}

/// Estimates plus anything that stopped the estimator from producing them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RtSeries {
    pub estimates: Vec<RtEstimate>,
    pub warnings: Vec<String>,
}

/// Conjugate gamma posterior from window sums of incidence and potential.
pub fn posterior(sum_incidence: f64, sum_potential: f64, prior: RtPrior, day: EpochDay) -> RtEstimate {
    let shape = prior.shape + sum_incidence;
    let rate = 1.0 / prior.scale + sum_potential;
    RtEstimate {
        day,
        posterior_shape: shape,
        posterior_rate: rate,
        mean: shape / rate,
        ci95: (
            gamma_quantile(shape, rate, 0.025),
            gamma_quantile(shape, rate, 0.975),
        ),
    }
}

/// Sliding-window posterior for R_t. Windows start on the second observed
/// day, since the first day has no infection potential by construction.
pub fn estimate_rt(
    incidence: &IncidenceSeries,
    si: &SerialInterval,
    window: usize,
    prior: RtPrior,
) -> Result<RtSeries, RtError> {
    if window == 0 {
        return Err(RtError::ZeroWindow);
    }
    if !(prior.shape > 0.0 && prior.scale > 0.0) {
        return Err(RtError::BadPrior {
            shape: prior.shape,
            scale: prior.scale,
        });
    }
    let needed = window + si.support();
    if incidence.len() < needed {
        return Ok(RtSeries {
            estimates: Vec::new(),
            warnings: vec![format!(
                "incidence has {} day(s); need at least {} (window {} + serial-interval support {})",
                incidence.len(),
                needed,
                window,
                si.support()
            )],
        });
    }
    let counts = incidence.counts();
    let lambda = potential_from_counts(&counts, si);
    let days = incidence.days();
    let estimates = (window..counts.len())
        .map(|end| {
            let start = end + 1 - window;
            let sum_i: f64 = counts[start..=end].iter().map(|&c| c as f64).sum();
            let sum_l: f64 = lambda[start..=end].iter().sum();
            posterior(sum_i, sum_l, prior, days[end].0)
        })
        .collect();
    Ok(RtSeries {
        estimates,
        warnings: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimulationMode {
    /// `I_t = round_half_up(R_t · Λ_t)`.
    Deterministic,
    /// `I_t ~ Poisson(R_t · Λ_t)`.
    Poisson,
}

/// Runs the renewal equation forward for `horizon` days in total, the first
/// of which are the seed counts. `r_schedule[t]` applies on day `t`; the last
/// entry is held if the schedule is shorter than the horizon.
pub fn simulate_renewal(
    r_schedule: &[f64],
    si: &SerialInterval,
    seed_incidence: &[u64],
    horizon: usize,
    mode: SimulationMode,
    rng_seed: u64,
) -> IncidenceSeries {
    assert!(!seed_incidence.is_empty(), "seed incidence must be non-empty");
    assert!(horizon > 0, "horizon must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let w = si.pmf();
    let mut counts: Vec<u64> = Vec::with_capacity(horizon);
    for t in 0..horizon {
        if t < seed_incidence.len() {
            counts.push(seed_incidence[t]);
            continue;
        }
        let lambda: f64 = (1..w.len().min(t + 1)).map(|s| counts[t - s] as f64 * w[s]).sum();
        let r = r_schedule
            .get(t)
            .or_else(|| r_schedule.last())
            .copied()
            .unwrap_or(0.0)
            .max(0.0);
        let expected = r * lambda;
        let next = match mode {
            SimulationMode::Deterministic => (expected + 0.5).floor() as u64,
            SimulationMode::Poisson if expected > 0.0 => Poisson::new(expected)
                .map(|p| p.sample(&mut rng) as u64)
                .unwrap_or(0),
            SimulationMode::Poisson => 0,
        };
        counts.push(next);
    }
    IncidenceSeries::from_counts("simulated", EpochDay(1), &counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_si_is_normalised() {
        let si = discretize_serial_interval(DEFAULT_SI_MEAN, DEFAULT_SI_SD, DEFAULT_SI_MAX_DAYS).unwrap();
        assert_eq!(si.pmf().len(), DEFAULT_SI_MAX_DAYS);
        assert_eq!(si.pmf()[0], 0.0);
        assert!((si.pmf().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_si_is_a_spike() {
        let si = discretize_serial_interval(4.0, 1e-6, 10).unwrap();
        assert!(si.pmf()[4] > 0.999);
    }

    /// Discrete mean of the midpoint-discretised gamma computed by
    /// trapezoidal integration of the gamma density.
    fn discrete_mean_by_quadrature(mean: f64, sd: f64, max_days: usize) -> f64 {
        let shape = (mean / sd).powi(2);
        let rate = mean / (sd * sd);
        let ln_norm = shape * rate.ln() - statrs::function::gamma::ln_gamma(shape);
        let pdf = |x: f64| if x <= 0.0 { 0.0 } else { (ln_norm + (shape - 1.0) * x.ln() - rate * x).exp() };
        let integrate = |a: f64, b: f64| {
            let n = 4000;
            let h = (b - a) / n as f64;
            // Skip the integrable singularity at 0 for shape < 1.
            let a = a.max(1e-12);
            (0..n).map(|i| {
                let x0 = a + i as f64 * h;
                0.5 * h * (pdf(x0) + pdf(x0 + h))
            }).sum::<f64>()
        };
        let last = max_days - 1;
        let mut w: Vec<f64> = (1..=last).map(|s| integrate(s as f64 - 0.5, s as f64 + 0.5)).collect();
        w[last - 1] += integrate(last as f64 + 0.5, 400.0);
        let total: f64 = w.iter().sum();
        w.iter().enumerate().map(|(i, wi)| (i + 1) as f64 * wi / total).sum()
    }

    #[test]
    fn discretised_mean_close_to_continuous() {
        let si = discretize_serial_interval(3.96, 4.75, 20).unwrap();
        // Dropping the lag-0 mass pushes the discrete mean above the continuous one.
        assert!(si.discrete_mean() > 3.96, "mean {}", si.discrete_mean());
        let oracle = discrete_mean_by_quadrature(3.96, 4.75, 20);
        assert!((si.discrete_mean() - oracle).abs() < 1e-3);
    }

    #[test]
    fn discretize_rejects_bad_params() {
        assert!(discretize_serial_interval(0.0, 1.0, 10).is_err());
        assert!(discretize_serial_interval(3.0, -1.0, 10).is_err());
        assert!(discretize_serial_interval(3.0, 1.0, 1).is_err());
    }

    #[test]
    fn potential_unit_shift() {
        let inc = IncidenceSeries::from_counts("r", EpochDay(1), &[10, 0, 0, 0]);
        assert_eq!(infection_potential(&inc, &SerialInterval::spike(1)), vec![0.0, 10.0, 0.0, 0.0]);
        let zero = IncidenceSeries::from_counts("r", EpochDay(1), &[0; 6]);
        assert!(infection_potential(&zero, &SerialInterval::spike(2)).iter().all(|&l| l == 0.0));
    }

    #[test]
    fn potential_of_constant_incidence() {
        let si = discretize_serial_interval(3.96, 4.75, 20).unwrap();
        let inc = IncidenceSeries::from_counts("r", EpochDay(1), &[5; 40]);
        let lambda = infection_potential(&inc, &si);
        for &l in &lambda[si.support()..] {
            assert!((l - 5.0).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_window_returns_prior() {
        let inc = IncidenceSeries::from_counts("r", EpochDay(1), &[0; 12]);
        let out = estimate_rt(&inc, &SerialInterval::spike(1), 7, RtPrior::default()).unwrap();
        assert!(!out.estimates.is_empty());
        for e in &out.estimates {
            assert_eq!(e.posterior_shape, 1.0);
            assert_eq!(e.posterior_rate, 0.2);
            assert!((e.mean - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn conjugate_update_arithmetic() {
        let e = posterior(100.0, 50.0, RtPrior::default(), EpochDay(1));
        assert!((e.mean - 101.0 / 50.2).abs() < 1e-12);
        assert!((e.mean - 2.012).abs() < 5e-4);
        assert!(e.ci95.0 < e.mean && e.mean < e.ci95.1);
    }

    #[test]
    fn gamma_quantile_matches_known_values() {
        // Exponential(1): quantile = -ln(1 - p).
        assert!((gamma_quantile(1.0, 1.0, 0.975) + (0.025f64).ln()).abs() < 1e-7);
        // Gamma(shape 2, rate 1) 2.5% point, from the closed-form CDF
        // 1 - e^{-x}(1 + x) solved independently.
        let q = gamma_quantile(2.0, 1.0, 0.025);
        assert!((1.0 - (-q).exp() * (1.0 + q) - 0.025).abs() < 1e-8);
    }

    #[test]
    fn short_incidence_warns() {
        let inc = IncidenceSeries::from_counts("r", EpochDay(1), &[1; 10]);
        let si = discretize_serial_interval(3.96, 4.75, 20).unwrap();
        let out = estimate_rt(&inc, &si, 7, RtPrior::default()).unwrap();
        assert!(out.estimates.is_empty());
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn bad_estimator_params() {
        let inc = IncidenceSeries::from_counts("r", EpochDay(1), &[1; 10]);
        let si = SerialInterval::spike(1);
        assert_eq!(estimate_rt(&inc, &si, 0, RtPrior::default()), Err(RtError::ZeroWindow));
        assert!(estimate_rt(&inc, &si, 3, RtPrior { shape: 0.0, scale: 1.0 }).is_err());
    }

    #[test]
    fn simulator_geometric_doubling() {
        let out = simulate_renewal(&[2.0], &SerialInterval::spike(1), &[10], 6, SimulationMode::Deterministic, 0);
        assert_eq!(out.counts(), vec![10, 20, 40, 80, 160, 320]);
    }

    #[test]
    fn simulator_extinction() {
        let si = discretize_serial_interval(3.96, 4.75, 20).unwrap();
        let out = simulate_renewal(&[0.0], &si, &[10, 12, 9], 30, SimulationMode::Poisson, 1);
        assert_eq!(&out.counts()[..3], &[10, 12, 9]);
        assert!(out.counts()[3..].iter().all(|&c| c == 0));
    }

    #[test]
    fn simulator_rounds_half_up() {
        let out = simulate_renewal(&[1.5], &SerialInterval::spike(1), &[1], 3, SimulationMode::Deterministic, 0);
        // 1.5 -> 2, then 3.0 -> 3.
        assert_eq!(out.counts(), vec![1, 2, 3]);
    }

    /// Growth rate r solving Σ w_s e^{-r s} = 1/R, found by bisection.
    fn euler_lotka_rate(si: &SerialInterval, r0: f64) -> f64 {
        let g = |r: f64| si.pmf().iter().enumerate().map(|(s, w)| w * (-r * s as f64).exp()).sum::<f64>() - 1.0 / r0;
        let (mut lo, mut hi) = (0.0, 2.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 { lo = mid } else { hi = mid }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn simulated_growth_follows_euler_lotka() {
        use crate::growth_fit::fit_exponential;
        use crate::timeseries::Window;
        let si = discretize_serial_interval(3.96, 4.75, 20).unwrap();
        let out = simulate_renewal(&[1.5], &si, &[20], 60, SimulationMode::Deterministic, 0);
        let cumulative = out.cumulative().unwrap();
        let fit = fit_exponential(&cumulative, Window::new(EpochDay(31), EpochDay(60))).unwrap();
        let r = euler_lotka_rate(&si, 1.5);
        assert!(((fit.b - r) / r).abs() < 0.05, "fit {} vs euler-lotka {}", fit.b, r);
    }

    proptest! {
        #[test]
        fn discretised_pmf_normalised(mean in 0.5f64..15.0, sd in 0.05f64..10.0, max_days in 2usize..40) {
            let si = discretize_serial_interval(mean, sd, max_days).unwrap();
            prop_assert!((si.pmf().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(si.pmf().iter().all(|&w| w >= 0.0));
            prop_assert_eq!(si.pmf()[0], 0.0);
        }

        #[test]
        fn posterior_mean_monotone(sum_i in 0.0f64..1e4, sum_l in 0.0f64..1e4, d in 0.5f64..100.0) {
            let base = posterior(sum_i, sum_l, RtPrior::default(), EpochDay(1)).mean;
            prop_assert!(posterior(sum_i + d, sum_l, RtPrior::default(), EpochDay(1)).mean > base);
            prop_assert!(posterior(sum_i, sum_l + d, RtPrior::default(), EpochDay(1)).mean < base);
        }

        #[test]
        fn poisson_simulation_is_reproducible(seed in any::<u64>(), r in 0.5f64..2.5) {
            let si = SerialInterval::from_weights(&[0.2, 0.5, 0.3]).unwrap();
            let a = simulate_renewal(&[r], &si, &[30], 40, SimulationMode::Poisson, seed);
            let b = simulate_renewal(&[r], &si, &[30], 40, SimulationMode::Poisson, seed);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn credible_interval_brackets_mean(shape in 0.5f64..5000.0, rate in 0.05f64..5000.0) {
            let e = posterior(shape - 0.5, rate, RtPrior { shape: 0.5, scale: 1e9 }, EpochDay(1));
            prop_assert!(e.ci95.0 <= e.mean && e.mean <= e.ci95.1);
        }
    }
}
