//! Input parsing: case, mobility and order CSV files plus the flat
//! `key = value` run configuration.
//!
//! CSV schemas (UTF-8, comma separated, header row required):
//!
//! | file     | columns                          |
//! |----------|----------------------------------|
//! | cases    | `region,date,cumulative_cases`   |
//! | mobility | `region,date,value`              |
//! | orders   | `region,effective_date`          |
//!
//! Dates are ISO-8601 `YYYY-MM-DD`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use thiserror::Error;

use crate::rt_renewal::{DEFAULT_SI_MEAN, DEFAULT_SI_SD, DEFAULT_WINDOW};
use crate::stats::QuantileMethod;
use crate::timeseries::{
    clean_cumulative, CaseSeries, EpochDay, InterventionOrder, MobilityMetric, MobilitySeries, Window,
};

pub const CASES_HEADER: [&str; 3] = ["region", "date", "cumulative_cases"];
pub const MOBILITY_HEADER: [&str; 3] = ["region", "date", "value"];
pub const ORDERS_HEADER: [&str; 2] = ["region", "effective_date"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("bad header: expected '{expected}', found '{found}'")]
    Header { expected: String, found: String },
    #[error("missing header row")]
    MissingHeader,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("unknown config key '{key}' on line {line}")]
    UnknownKey { line: usize, key: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Analysis settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub analysis_start: NaiveDate,
    pub analysis_end: NaiveDate,
    pub serial_interval_mean: f64,
    pub serial_interval_sd: f64,
    pub rt_window: usize,
    pub quantile_method: QuantileMethod,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            analysis_start: NaiveDate::from_ymd_opt(2020, 3, 11).expect("valid date"),
            analysis_end: NaiveDate::from_ymd_opt(2020, 4, 10).expect("valid date"),
            serial_interval_mean: DEFAULT_SI_MEAN,
            serial_interval_sd: DEFAULT_SI_SD,
            rt_window: DEFAULT_WINDOW,
            quantile_method: QuantileMethod::Linear,
            output_dir: PathBuf::from("epigrowth-out"),
        }
    }
}

impl RunConfig {
    pub const KEYS: [&'static str; 7] = [
        "analysis_start",
        "analysis_end",
        "serial_interval_mean",
        "serial_interval_sd",
        "rt_window",
        "quantile_method",
        "output_dir",
    ];

    pub fn window(&self) -> Window {
        Window::new(
            EpochDay::from_date(self.analysis_start),
            EpochDay::from_date(self.analysis_end),
        )
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.analysis_start >= self.analysis_end {
            return Err(ConfigError::Invalid(format!(
                "analysis_start {} must be before analysis_end {}",
                self.analysis_start, self.analysis_end
            )));
        }
        if self.analysis_start < EpochDay::origin() {
            return Err(ConfigError::Invalid(format!(
                "analysis_start {} precedes day 1 ({})",
                self.analysis_start,
                EpochDay::origin()
            )));
        }
        if !(self.serial_interval_mean > 0.0 && self.serial_interval_sd > 0.0) {
            return Err(ConfigError::Invalid(
                "serial interval mean and sd must be positive".into(),
            ));
        }
        if self.rt_window < 1 {
            return Err(ConfigError::Invalid("rt_window must be at least 1".into()));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Line {
                line,
                message: format!("expected key = value, found '{content}'"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if !Self::KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            }
            if let Some(prev) = seen.insert(key.to_string(), line) {
                return Err(ConfigError::Line {
                    line,
                    message: format!("key '{key}' already set on line {prev}"),
                });
            }
            let bad = |message: String| ConfigError::Line { line, message };
            match key {
                "analysis_start" => cfg.analysis_start = parse_date(value).map_err(bad)?,
                "analysis_end" => cfg.analysis_end = parse_date(value).map_err(bad)?,
                "serial_interval_mean" => cfg.serial_interval_mean = parse_num(value).map_err(bad)?,
                "serial_interval_sd" => cfg.serial_interval_sd = parse_num(value).map_err(bad)?,
                "rt_window" => {
                    cfg.rt_window = value
                        .parse()
                        .map_err(|_| bad(format!("invalid rt_window '{value}'")))?
                }
                "quantile_method" => cfg.quantile_method = value.parse().map_err(bad)?,
                "output_dir" => cfg.output_dir = PathBuf::from(value),
                _ => unreachable!("key checked above"),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Serialises back to the `key = value` form.
    pub fn to_text(&self) -> String {
        format!(
            "analysis_start = {}\nanalysis_end = {}\nserial_interval_mean = {}\nserial_interval_sd = {}\nrt_window = {}\nquantile_method = {}\noutput_dir = {}\n",
            self.analysis_start,
            self.analysis_end,
            self.serial_interval_mean,
            self.serial_interval_sd,
            self.rt_window,
            self.quantile_method,
            self.output_dir.display()
        )
    }
}

fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| format!("invalid date '{s}' (expected YYYY-MM-DD)"))
}

fn parse_num(s: &str) -> Result<f64, String> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("invalid number '{s}'"))
}

/// Parsed case file: cleaned series plus regions that could not be used.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CaseData {
    pub series: Vec<CaseSeries>,
    /// (region, reason), e.g. a region whose windowed counts are all zero.
    pub rejected: Vec<(String, String)>,
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(input)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str], allow_empty: bool) -> Result<bool, IngestError> {
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return if allow_empty {
            Ok(false)
        } else {
            Err(IngestError::MissingHeader)
        };
    }
    let found: Vec<&str> = headers.iter().collect();
    if found != expected {
        return Err(IngestError::Header {
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    Ok(true)
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn row_err(line: u64, message: impl Into<String>) -> IngestError {
    IngestError::Row {
        line,
        message: message.into(),
    }
}

fn parse_row_date(line: u64, field: &str) -> Result<NaiveDate, IngestError> {
    parse_date(field).map_err(|m| row_err(line, m))
}

fn parse_region(line: u64, field: &str) -> Result<String, IngestError> {
    if field.is_empty() {
        return Err(row_err(line, "empty region"));
    }
    Ok(field.to_string())
}

pub fn parse_cases_csv(path: &Path, config: &RunConfig) -> Result<CaseData, IngestError> {
    parse_cases_reader(open(path)?, config)
}

/// Reads `region,date,cumulative_cases`, keeps rows inside the analysis
/// window and cleans each region's feed.
pub fn parse_cases_reader<R: Read>(input: R, config: &RunConfig) -> Result<CaseData, IngestError> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &CASES_HEADER, false)?;
    let mut by_region: BTreeMap<String, BTreeMap<NaiveDate, (u64, u64)>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        let region = parse_region(line, &record[0])?;
        let date = parse_row_date(line, &record[1])?;
        let count: u64 = record[2]
            .parse()
            .map_err(|_| row_err(line, format!("invalid case count '{}'", &record[2])))?;
        if date < config.analysis_start || date > config.analysis_end {
            continue;
        }
        let days = by_region.entry(region.clone()).or_default();
        if let Some(&(prev, prev_line)) = days.get(&date) {
            if prev != count {
                return Err(row_err(
                    line,
                    format!("conflicting duplicate for {region} on {date} ({prev} on line {prev_line}, {count} here)"),
                ));
            }
            continue;
        }
        days.insert(date, (count, line));
    }

    let mut data = CaseData::default();
    for (region, days) in by_region {
        let raw: Vec<(NaiveDate, u64)> = days.into_iter().map(|(d, (c, _))| (d, c)).collect();
        match clean_cumulative(region.clone(), &raw) {
            Ok(series) => data.series.push(series),
            Err(e) => data.rejected.push((region, e.to_string())),
        }
    }
    Ok(data)
}

pub fn parse_mobility_csv(
    path: &Path,
    metric: MobilityMetric,
    config: &RunConfig,
) -> Result<Vec<MobilitySeries>, IngestError> {
    parse_mobility_reader(open(path)?, metric, config)
}

/// Reads `region,date,value`. Missing days stay missing.
pub fn parse_mobility_reader<R: Read>(
    input: R,
    metric: MobilityMetric,
    config: &RunConfig,
) -> Result<Vec<MobilitySeries>, IngestError> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &MOBILITY_HEADER, false)?;
    let mut by_region: BTreeMap<String, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        let region = parse_region(line, &record[0])?;
        let date = parse_row_date(line, &record[1])?;
        let value: f64 = record[2]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| row_err(line, format!("invalid value '{}'", &record[2])))?;
        if value < 0.0 {
            return Err(row_err(line, format!("negative value {value}")));
        }
        if date < config.analysis_start || date > config.analysis_end {
            continue;
        }
        let days = by_region.entry(region.clone()).or_default();
        match days.get(&date) {
            Some(&prev) if prev != value => {
                return Err(row_err(
                    line,
                    format!("conflicting duplicate for {region} on {date} ({prev} vs {value})"),
                ))
            }
            Some(_) => {}
            None => {
                days.insert(date, value);
            }
        }
    }
    Ok(by_region
        .into_iter()
        .map(|(region, days)| MobilitySeries {
            region,
            metric,
            days: days
                .into_iter()
                .map(|(d, v)| (EpochDay::from_date(d), v))
                .collect(),
        })
        .collect())
}

pub fn parse_orders_csv(path: &Path) -> Result<Vec<InterventionOrder>, IngestError> {
    parse_orders_reader(open(path)?)
}

/// Reads `region,effective_date`; one order per region.
pub fn parse_orders_reader<R: Read>(input: R) -> Result<Vec<InterventionOrder>, IngestError> {
    let mut rdr = reader(input);
    if !check_header(&mut rdr, &ORDERS_HEADER, true)? {
        return Ok(Vec::new());
    }
    let mut orders: BTreeMap<String, (EpochDay, u64)> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        let region = parse_region(line, &record[0])?;
        let date = parse_row_date(line, &record[1])?;
        if let Some((_, prev_line)) = orders.get(&region) {
            return Err(row_err(
                line,
                format!("duplicate order for {region} (first on line {prev_line})"),
            ));
        }
        orders.insert(region, (EpochDay::from_date(date), line));
    }
    Ok(orders
        .into_iter()
        .map(|(region, (effective_day, _))| InterventionOrder {
            region,
            effective_day,
        })
        .collect())
}

/// Writes series in the cases schema.
pub fn write_cases_csv<W: Write>(series: &[CaseSeries], out: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CASES_HEADER)?;
    for s in series {
        for &(day, count) in s.days() {
            w.write_record([s.region(), &day.to_date().to_string(), &count.to_string()])?;
        }
    }
    flush(w)
}

/// Writes series in the mobility schema.
pub fn write_mobility_csv<W: Write>(series: &[MobilitySeries], out: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MOBILITY_HEADER)?;
    for s in series {
        for &(day, value) in &s.days {
            w.write_record([s.region.as_str(), &day.to_date().to_string(), &value.to_string()])?;
        }
    }
    flush(w)
}

/// Writes orders in the registry schema.
pub fn write_orders_csv<W: Write>(orders: &[InterventionOrder], out: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ORDERS_HEADER)?;
    for o in orders {
        w.write_record([o.region.as_str(), &o.effective_day.to_date().to_string()])?;
    }
    flush(w)
}

fn flush<W: Write>(mut w: csv::Writer<W>) -> Result<(), IngestError> {
    w.flush().map_err(|source| IngestError::Io {
        path: PathBuf::from("<writer>"),
        source,
    })
}
