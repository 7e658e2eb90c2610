//! Epidemic growth analysis around dated interventions.
//!
//! The crate fits exponential and power-law growth curves to cumulative case
//! counts, derives empirical and model-based doubling times before and after
//! an intervention, estimates time-varying reproduction numbers with a
//! conjugate renewal-equation model, computes Ten-Hundred plot coordinates,
//! and correlates mobility trends with case growth across regions.
//!
//! Modules:
//!
//! * [`timeseries`]: day indexing, series types, cleaning and phase splits
//! * [`ingest`]: CSV and configuration parsing
//! * [`growth_fit`]: curve fits and doubling times
//! * [`rt_renewal`]: serial intervals, R_t estimation, renewal simulation
//! * [`stats`]: correlation, intervals, quantiles
//! * [`phase`]: per-region before/after analysis and cross-region summaries
//! * [`tenhundred`]: decade-crossing plot coordinates
//! * [`report`]: command-line front end and output writers
//! * [`synthetic`]: seeded synthetic corpora

// NaN-rejecting guards are written as negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod growth_fit;
pub mod ingest;
pub mod phase;
pub mod report;
pub mod rt_renewal;
pub mod stats;
pub mod synthetic;
pub mod tenhundred;
pub mod timeseries;

pub use growth_fit::{DoublingTimeSummary, GrowthFit, LinearFit, ModelKind};
pub use ingest::RunConfig;
pub use phase::{NationalSummary, PhaseReport};
pub use rt_renewal::{RtEstimate, SerialInterval};
pub use stats::CorrelationResult;
pub use timeseries::{CaseSeries, EpochDay, IncidenceSeries, InterventionOrder, MobilitySeries, Window};
