//! Seeded synthetic corpora with planted growth-rate drops and planted
//! mobility/growth relations. Used by the `synth` subcommand and by tests.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::growth_fit::fit_power_law;
use crate::ingest::{write_cases_csv, write_mobility_csv, write_orders_csv, IngestError};
use crate::timeseries::{CaseSeries, EpochDay, InterventionOrder, MobilityMetric, MobilitySeries, Window};

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub regions: usize,
    pub days: i32,
    pub seed: u64,
    /// Range of the pre-order daily growth rate.
    pub rate_before: (f64, f64),
    /// Range of the post-order daily growth rate.
    pub rate_after: (f64, f64),
    /// Range of the order day (inclusive).
    pub order_day: (i32, i32),
    /// Distance slope = `distance_coef · b + noise`, b the power-law exponent.
    pub distance_coef: f64,
    pub dwell_coef: f64,
    pub mobility_noise: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            regions: 50,
            days: 31,
            seed: 2020,
            rate_before: (0.25, 0.45),
            rate_after: (0.05, 0.15),
            order_day: (10, 20),
            distance_coef: -0.5,
            dwell_coef: 0.5,
            mobility_noise: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedRegion {
    pub region: String,
    pub rate_before: f64,
    pub rate_after: f64,
    pub order_day: EpochDay,
    pub power_law_b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub cases: Vec<CaseSeries>,
    pub orders: Vec<InterventionOrder>,
    pub distance: Vec<MobilitySeries>,
    pub dwell: Vec<MobilitySeries>,
    pub planted: Vec<PlantedRegion>,
}

/// Cumulative counts growing at `rate_before` until the day before the order
/// and at `rate_after` from the order day on.
pub fn two_rate_counts(scale: f64, rate_before: f64, rate_after: f64, order_day: i32, days: i32) -> Vec<u64> {
    let pivot = f64::from(order_day - 1);
    (1..=days)
        .map(|d| {
            let t = f64::from(d);
            let log_y = if t <= pivot {
                rate_before * t
            } else {
                rate_before * pivot + rate_after * (t - pivot)
            };
            (scale * log_y.exp()).round() as u64
        })
        .collect()
}

pub fn generate(spec: &CorpusSpec) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut corpus = Corpus {
        cases: Vec::new(),
        orders: Vec::new(),
        distance: Vec::new(),
        dwell: Vec::new(),
        planted: Vec::new(),
    };
    let width = spec.regions.to_string().len();
    for i in 0..spec.regions {
        let region = format!("Region {:0width$}", i + 1);
        let rate_before = rng.random_range(spec.rate_before.0..=spec.rate_before.1);
        let rate_after = rng.random_range(spec.rate_after.0..=spec.rate_after.1);
        let order_day = rng.random_range(spec.order_day.0..=spec.order_day.1);
        let scale = rng.random_range(20.0..200.0);
        let counts = two_rate_counts(scale, rate_before, rate_after, order_day, spec.days);
        let cases = CaseSeries::from_counts(region.clone(), EpochDay(1), &counts)
            .expect("two-rate counts are non-decreasing");
        let b = fit_power_law(&cases, Window::all())
            .map(|f| f.b)
            .expect("synthetic series is fittable");

        let mut mobility = |metric: MobilityMetric, coef: f64, base: f64| {
            let slope = coef * b + rng.random_range(-spec.mobility_noise..=spec.mobility_noise);
            // Keep every value positive over the whole window.
            let intercept = base + (slope.abs() + spec.mobility_noise) * f64::from(spec.days);
            MobilitySeries {
                region: region.clone(),
                metric,
                days: (1..=spec.days)
                    .map(|d| (EpochDay(d), intercept + slope * f64::from(d)))
                    .collect(),
            }
        };
        let distance = mobility(MobilityMetric::MaxTravelDistanceKm, spec.distance_coef, 5.0);
        let dwell = mobility(MobilityMetric::HomeDwellMinutes, spec.dwell_coef, 600.0);

        corpus.cases.push(cases);
        corpus.orders.push(InterventionOrder {
            region: region.clone(),
            effective_day: EpochDay(order_day),
        });
        corpus.distance.push(distance);
        corpus.dwell.push(dwell);
        corpus.planted.push(PlantedRegion {
            region,
            rate_before,
            rate_after,
            order_day: EpochDay(order_day),
            power_law_b: b,
        });
    }
    corpus
}

fn create(path: &Path) -> Result<BufWriter<File>, IngestError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })
}

/// Writes `cases.csv`, `orders.csv`, `distance.csv` and `dwell.csv`.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<(), IngestError> {
    std::fs::create_dir_all(dir).map_err(|source| IngestError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_cases_csv(&corpus.cases, create(&dir.join("cases.csv"))?)?;
    write_orders_csv(&corpus.orders, create(&dir.join("orders.csv"))?)?;
    write_mobility_csv(&corpus.distance, create(&dir.join("distance.csv"))?)?;
    write_mobility_csv(&corpus.dwell, create(&dir.join("dwell.csv"))?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_seeded() {
        let spec = CorpusSpec {
            regions: 5,
            ..CorpusSpec::default()
        };
        assert_eq!(generate(&spec), generate(&spec));
        let other = generate(&CorpusSpec { seed: 1, ..spec.clone() });
        assert_ne!(generate(&spec).planted, other.planted);
    }

    #[test]
    fn mobility_stays_positive() {
        let c = generate(&CorpusSpec::default());
        assert!(c.distance.iter().chain(&c.dwell).all(|s| s.days.iter().all(|&(_, v)| v > 0.0)));
    }
}
