//! Command-line front end and report writers.
//!
//! Exit codes: 0 on success (including partial success with warnings),
//! 1 on input errors, 2 on configuration or usage errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::growth_fit::{GrowthFit, ModelKind};
use crate::ingest::{
    parse_cases_csv, parse_mobility_csv, parse_orders_csv, CaseData, ConfigError, IngestError, RunConfig,
};
use crate::phase::{
    analyze_all, correlate_mobility_growth, fit_growth_coefficients, fit_mobility_trends, national_summary,
    MobilityCorrelation, NationalSummary, PhaseFits, PhaseOptions, PhaseOutcome, PhaseReport,
};
use crate::rt_renewal::{
    discretize_serial_interval, estimate_rt, RtPrior, RtSeries, DEFAULT_PRIOR_SHAPE, DEFAULT_PRIOR_SCALE,
    DEFAULT_SI_MAX_DAYS,
};
use crate::stats::QuantileMethod;
use crate::synthetic::{generate, write_corpus, CorpusSpec};
use crate::tenhundred::{decade_crossings, tenhundred_points, DecadeCrossings, TenHundredPoint};
use crate::timeseries::{to_incidence, MobilityMetric};

pub const CONFIG_ENV: &str = "EPIGROWTH_CONFIG";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Config(_) => 2,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "epigrowth", version, about = "Epidemic growth and doubling-time analysis around dated interventions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit exponential and/or power-law growth to each region's full window
    /// and rank regions by growth coefficient.
    Fit(FitArgs),
    /// Before/after-order doubling times per region plus a national summary.
    Phase(PhaseArgs),
    /// Sliding-window reproduction-number estimates per region.
    Rt(RtArgs),
    /// Correlate case growth coefficients with mobility trends across regions.
    Correlate(CorrelateArgs),
    /// Ten-Hundred plot coordinates and growth classification.
    Tenhundred(TenHundredArgs),
    /// Write a seeded synthetic corpus (cases, orders, distance, dwell).
    Synth(SynthArgs),
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// Cumulative cases CSV (region,date,cumulative_cases).
    #[arg(long)]
    pub cases: PathBuf,
    /// Run configuration (key = value). Defaults apply when absent.
    #[arg(long, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides output_dir from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Record wall-clock start/finish times in the manifest. Makes the
    /// manifest differ between otherwise identical runs.
    #[arg(long)]
    pub timestamp: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelChoice {
    Exp,
    Powerlaw,
    Both,
}

impl ModelChoice {
    fn kinds(self) -> Vec<ModelKind> {
        match self {
            ModelChoice::Exp => vec![ModelKind::Exponential],
            ModelChoice::Powerlaw => vec![ModelKind::PowerLaw],
            ModelChoice::Both => vec![ModelKind::Exponential, ModelKind::PowerLaw],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricChoice {
    Distance,
    Dwell,
}

impl From<MetricChoice> for MobilityMetric {
    fn from(m: MetricChoice) -> Self {
        match m {
            MetricChoice::Distance => MobilityMetric::MaxTravelDistanceKm,
            MetricChoice::Dwell => MobilityMetric::HomeDwellMinutes,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value = "both")]
    pub model: ModelChoice,
    /// Number of top-ranked regions to print.
    #[arg(long, default_value_t = 5)]
    pub top: usize,
}

#[derive(Debug, Args)]
pub struct PhaseArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Intervention registry CSV (region,effective_date).
    #[arg(long)]
    pub orders: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RtArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Serial-interval support in days (lags 1..N-1).
    #[arg(long, default_value_t = DEFAULT_SI_MAX_DAYS)]
    pub si_max_days: usize,
    #[arg(long, default_value_t = DEFAULT_PRIOR_SHAPE)]
    pub prior_shape: f64,
    #[arg(long, default_value_t = DEFAULT_PRIOR_SCALE)]
    pub prior_scale: f64,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Mobility CSV (region,date,value). Repeat together with --metric.
    #[arg(long, required = true)]
    pub mobility: Vec<PathBuf>,
    /// Metric of the matching --mobility file.
    #[arg(long, value_enum, required = true)]
    pub metric: Vec<MetricChoice>,
    /// Case growth coefficient used for the correlation.
    #[arg(long, value_enum, default_value = "powerlaw")]
    pub model: ModelChoice,
}

#[derive(Debug, Args)]
pub struct TenHundredArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Relative tolerance for the exponential diagonal.
    #[arg(long, default_value_t = crate::tenhundred::DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    #[arg(long, default_value_t = crate::tenhundred::DEFAULT_BASE_THRESHOLD)]
    pub base_threshold: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 50)]
    pub regions: usize,
    #[arg(long, default_value_t = 2020)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Phase(a) => cmd_phase(&a),
        Command::Rt(a) => cmd_rt(&a),
        Command::Correlate(a) => cmd_correlate(&a),
        Command::Tenhundred(a) => cmd_tenhundred(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

/// Per-run bookkeeping written to `manifest.txt`.
#[derive(Debug, Default)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<RunConfig>,
    pub inputs: Vec<(String, PathBuf, String)>,
    /// Region -> status line; each region appears once.
    pub regions: BTreeMap<String, String>,
    pub undefined: Vec<String>,
    pub warnings: Vec<String>,
    pub outputs: Vec<String>,
    pub timestamps: Option<(String, String)>,
}

impl RunManifest {
    fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            ..Default::default()
        }
    }

    fn input(&mut self, role: &str, path: &Path) -> Result<(), CliError> {
        let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
        let digest = hex::encode(Sha256::digest(&bytes));
        self.inputs.push((role.to_string(), path.to_path_buf(), digest));
        Ok(())
    }

    /// Records a status unless the region already has one.
    fn status(&mut self, region: &str, status: impl Into<String>) {
        self.regions
            .entry(region.to_string())
            .or_insert_with(|| status.into());
    }

    fn warn(&mut self, message: impl Into<String>) {
        let message = message.into();
        eprintln!("warning: {message}");
        self.warnings.push(message);
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "tool = epigrowth {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "command = {}", self.command);
        if let Some((start, end)) = &self.timestamps {
            let _ = writeln!(s, "started_at = {start}");
            let _ = writeln!(s, "finished_at = {end}");
        }
        if let Some(cfg) = &self.config {
            s.push_str("\n[config]\n");
            s.push_str(&cfg.to_text());
        }
        s.push_str("\n[inputs]\n");
        for (role, path, digest) in &self.inputs {
            let _ = writeln!(s, "{role} = {} sha256:{digest}", path.display());
        }
        s.push_str("\n[regions]\n");
        for (region, status) in &self.regions {
            let _ = writeln!(s, "{region} = {status}");
        }
        if !self.undefined.is_empty() {
            s.push_str("\n[undefined]\n");
            for line in &self.undefined {
                let _ = writeln!(s, "{line}");
            }
        }
        if !self.warnings.is_empty() {
            s.push_str("\n[warnings]\n");
            for w in &self.warnings {
                let _ = writeln!(s, "{w}");
            }
        }
        s.push_str("\n[outputs]\n");
        for o in &self.outputs {
            let _ = writeln!(s, "{o}");
        }
        s
    }
}

struct Session {
    config: RunConfig,
    out: PathBuf,
    manifest: RunManifest,
    started: Option<String>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

impl Session {
    fn open(command: &str, common: &CommonArgs) -> Result<Self, CliError> {
        let config = match &common.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let out = common.out.clone().unwrap_or_else(|| config.output_dir.clone());
        let mut manifest = RunManifest::new(command);
        if let Some(path) = &common.config {
            manifest.input("config", path)?;
        }
        manifest.config = Some(config.clone());
        Ok(Session {
            config,
            out,
            manifest,
            started: common.timestamp.then(now),
        })
    }

    fn load_cases(&mut self, path: &Path) -> Result<CaseData, CliError> {
        let data = parse_cases_csv(path, &self.config)?;
        self.manifest.input("cases", path)?;
        if data.series.is_empty() && data.rejected.is_empty() {
            return Err(CliError::Input(format!("{}: no case data in the analysis window", path.display())));
        }
        for (region, reason) in &data.rejected {
            self.manifest.status(region, format!("rejected: {reason}"));
        }
        Ok(data)
    }

    fn write(&mut self, name: &str, contents: &[u8]) -> Result<(), CliError> {
        fs::create_dir_all(&self.out).map_err(|e| io_err(&self.out, e))?;
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    /// Writes the manifest and maps "nothing succeeded" to an input error.
    fn finish(mut self, succeeded: usize) -> Result<(), CliError> {
        if let Some(start) = self.started.take() {
            self.manifest.timestamps = Some((start, now()));
        }
        self.manifest.outputs.push("manifest.txt".into());
        let text = self.manifest.render();
        let path = self.out.join("manifest.txt");
        fs::create_dir_all(&self.out).map_err(|e| io_err(&self.out, e))?;
        fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        if succeeded == 0 {
            return Err(CliError::Input("no region could be analysed; see manifest.txt".into()));
        }
        Ok(())
    }
}

/// Full-precision number for machine-readable outputs.
pub fn full(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt3(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_default()
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

fn into_bytes(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>, CliError> {
    w.into_inner()
        .map_err(|e| CliError::Input(format!("csv: {e}")))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Input(format!("csv: {e}"))
}

/// `fits.csv`: one row per region and model, regions in lexicographic order.
pub fn render_fits(fits: &BTreeMap<(String, ModelKind), GrowthFit>) -> Result<Vec<u8>, CliError> {
    let mut w = csv_writer();
    w.write_record([
        "region", "model", "a", "b", "k", "r_squared", "rmse", "window_start", "window_end", "boundary",
    ])
    .map_err(csv_err)?;
    for ((region, model), f) in fits {
        w.write_record([
            region.as_str(),
            model.name(),
            &full(f.a),
            &full(f.b),
            &full(f.k),
            &full(f.r_squared),
            &full(f.rmse),
            &f.window.0.to_string(),
            &f.window.1.to_string(),
            if f.at_bracket_boundary { "1" } else { "0" },
        ])
        .map_err(csv_err)?;
    }
    into_bytes(w)
}

/// Regions ordered by decreasing growth coefficient, ties by name.
pub fn rank_by_growth(fits: &BTreeMap<String, GrowthFit>) -> Vec<(String, f64)> {
    let mut ranked: Vec<(String, f64)> = fits.iter().map(|(r, f)| (r.clone(), f.b)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

pub fn cmd_fit(args: &FitArgs) -> Result<(), CliError> {
    let mut session = Session::open("fit", &args.common)?;
    let data = session.load_cases(&args.common.cases)?;
    let window = session.config.window();

    let mut all = BTreeMap::new();
    let mut ranking = csv_writer();
    ranking.write_record(["model", "rank", "region", "b"]).map_err(csv_err)?;
    let mut failures: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for kind in args.model.kinds() {
        let (fits, failed) = fit_growth_coefficients(&data.series, window, kind);
        for (region, reason) in failed {
            failures.entry(region).or_default().push(format!("{kind}: {reason}"));
        }
        let ranked = rank_by_growth(&fits);
        for (i, (region, b)) in ranked.iter().enumerate() {
            ranking
                .write_record([kind.name(), &(i + 1).to_string(), region, &full(*b)])
                .map_err(csv_err)?;
        }
        let top: Vec<&str> = ranked.iter().take(args.top).map(|(r, _)| r.as_str()).collect();
        println!("top {} by {kind} b: {}", top.len(), top.join(", "));
        for (region, fit) in fits {
            if fit.at_bracket_boundary {
                session
                    .manifest
                    .warn(format!("{region}: {kind} exponent at search boundary"));
            }
            all.insert((region, kind), fit);
        }
    }

    let mut succeeded = 0;
    for s in &data.series {
        let region = s.region();
        match failures.get(region) {
            Some(reasons) if reasons.len() == args.model.kinds().len() => {
                session.manifest.status(region, format!("failed: {}", reasons.join("; ")))
            }
            Some(reasons) => {
                succeeded += 1;
                session.manifest.status(region, format!("partial: {}", reasons.join("; ")))
            }
            None => {
                succeeded += 1;
                session.manifest.status(region, "ok")
            }
        }
    }
    let fits_csv = render_fits(&all)?;
    session.write("fits.csv", &fits_csv)?;
    let ranking_csv = into_bytes(ranking)?;
    session.write("ranking.csv", &ranking_csv)?;
    session.finish(succeeded)
}

/// `phase_report.csv`: region, before median, after median, change (3 dp).
pub fn render_phase_report(reports: &[PhaseReport]) -> Result<Vec<u8>, CliError> {
    let mut w = csv_writer();
    w.write_record(["region", "before_median", "after_median", "change"])
        .map_err(csv_err)?;
    for r in reports {
        if let Some(d) = r.detail() {
            w.write_record([
                r.region.as_str(),
                &format!("{:.3}", d.before.empirical.median),
                &format!("{:.3}", d.after.empirical.median),
                &format!("{:.3}", d.change),
            ])
            .map_err(csv_err)?;
        }
    }
    into_bytes(w)
}

/// `phase_models.csv`: every doubling-time pathway per region and phase.
pub fn render_phase_models(reports: &[PhaseReport]) -> Result<Vec<u8>, CliError> {
    let mut w = csv_writer();
    w.write_record([
        "region",
        "phase",
        "order_date",
        "start",
        "end",
        "empirical_median",
        "empirical_iqr",
        "empirical_min",
        "empirical_max",
        "empirical_undefined_days",
        "exp_b",
        "exp_doubling",
        "powerlaw_b",
        "powerlaw_k",
        "powerlaw_doubling_median",
    ])
    .map_err(csv_err)?;
    for r in reports {
        let Some(d) = r.detail() else { continue };
        let order = r.order_day.map(|d| d.to_string()).unwrap_or_default();
        for (label, p) in [("before", &d.before), ("after", &d.after)] {
            w.write_record(phase_row(&r.region, label, &order, p)).map_err(csv_err)?;
        }
    }
    into_bytes(w)
}

fn phase_row(region: &str, label: &str, order: &str, p: &PhaseFits) -> Vec<String> {
    vec![
        region.to_string(),
        label.to_string(),
        order.to_string(),
        p.window.start.to_string(),
        p.window.end.to_string(),
        format!("{:.3}", p.empirical.median),
        format!("{:.3}", p.empirical.iqr),
        format!("{:.3}", p.empirical.min),
        format!("{:.3}", p.empirical.max),
        p.empirical.excluded.to_string(),
        p.exp_fit.as_ref().map(|f| format!("{:.4}", f.b)).unwrap_or_default(),
        opt3(p.exp_dt),
        p.pl_fit.as_ref().map(|f| format!("{:.4}", f.b)).unwrap_or_default(),
        p.pl_fit.as_ref().map(|f| format!("{:.3}", f.k)).unwrap_or_default(),
        opt3(p.pl_dt.as_ref().map(|s| s.median)),
    ]
}

/// `national_summary.txt`.
pub fn render_national_summary(
    summary: Option<&NationalSummary>,
    reports: &[PhaseReport],
    method: QuantileMethod,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "quantile_method = {method}");
    match summary {
        Some(n) => {
            let _ = writeln!(s, "regions_analyzed = {}", n.analyzed);
            let _ = writeln!(s, "regions_skipped = {}", n.skipped);
            for (label, p) in [("before", &n.before), ("after", &n.after)] {
                let _ = writeln!(s, "{label}_median = {:.3}", p.median);
                let _ = writeln!(s, "{label}_q1 = {:.3}", p.q1);
                let _ = writeln!(s, "{label}_q3 = {:.3}", p.q3);
                let _ = writeln!(s, "{label}_iqr = {:.3}", p.iqr);
                let _ = writeln!(s, "{label}_min = {:.3}", p.min);
                let _ = writeln!(s, "{label}_max = {:.3}", p.max);
            }
        }
        None => {
            let _ = writeln!(s, "regions_analyzed = 0");
            let _ = writeln!(s, "regions_skipped = {}", reports.len());
        }
    }
    s.push_str("\n[skipped]\n");
    for r in reports {
        if let PhaseOutcome::Skipped { reason } = &r.outcome {
            let _ = writeln!(s, "{}: {reason}", r.region);
        }
    }
    s
}

pub fn cmd_phase(args: &PhaseArgs) -> Result<(), CliError> {
    let mut session = Session::open("phase", &args.common)?;
    let data = session.load_cases(&args.common.cases)?;
    let orders = match &args.orders {
        Some(path) => {
            let orders = parse_orders_csv(path)?;
            session.manifest.input("orders", path)?;
            orders
        }
        None => {
            session
                .manifest
                .warn("no orders file given; every region is skipped");
            Vec::new()
        }
    };
    let known: std::collections::BTreeSet<&str> = data.series.iter().map(|s| s.region()).collect();
    let mut unknown = Vec::new();
    for o in &orders {
        if !known.contains(o.region.as_str()) && !session.manifest.regions.contains_key(&o.region) {
            unknown.push(o.region.clone());
        }
    }
    for region in unknown {
        session
            .manifest
            .warn(format!("order for {region} has no case data"));
        session.manifest.status(&region, "ignored: order without case data");
    }

    let method = session.config.quantile_method;
    let reports = analyze_all(&data.series, &orders, PhaseOptions { quantile_method: method });
    let mut analyzed = 0;
    for r in &reports {
        match &r.outcome {
            PhaseOutcome::Analyzed(d) => {
                analyzed += 1;
                let status = if d.notes.is_empty() {
                    "ok".to_string()
                } else {
                    format!("ok ({})", d.notes.join("; "))
                };
                session.manifest.status(&r.region, status);
                for (label, p) in [("before", &d.before), ("after", &d.after)] {
                    for (day, td) in &p.empirical.per_day {
                        if td.is_none() {
                            session
                                .manifest
                                .undefined
                                .push(format!("{} {label} {day}: no growth (empirical doubling time undefined)", r.region));
                        }
                    }
                }
            }
            PhaseOutcome::Skipped { reason } => session.manifest.status(&r.region, format!("skipped: {reason}")),
        }
    }

    let summary = match national_summary(&reports, method) {
        Ok(s) => Some(s),
        Err(e) => {
            session.manifest.warn(format!("national summary: {e}"));
            None
        }
    };
    let report_csv = render_phase_report(&reports)?;
    session.write("phase_report.csv", &report_csv)?;
    let models_csv = render_phase_models(&reports)?;
    session.write("phase_models.csv", &models_csv)?;
    let text = render_national_summary(summary.as_ref(), &reports, method);
    session.write("national_summary.txt", text.as_bytes())?;
    // Skipping every region (e.g. no registry) is a warning, not a failure.
    let ok = if analyzed == 0 && !reports.is_empty() { 1 } else { analyzed };
    session.finish(ok)
}

/// `rt.csv`: region, day, posterior mean, 95% bounds, posterior parameters.
pub fn render_rt(series: &BTreeMap<String, RtSeries>) -> Result<Vec<u8>, CliError> {
    let mut w = csv_writer();
    w.write_record(["region", "day", "mean", "lo", "hi", "shape", "rate"])
        .map_err(csv_err)?;
    for (region, s) in series {
        for e in &s.estimates {
            w.write_record([
                region.as_str(),
                &e.day.to_string(),
                &format!("{:.6}", e.mean),
                &format!("{:.6}", e.ci95.0),
                &format!("{:.6}", e.ci95.1),
                &format!("{:.6}", e.posterior_shape),
                &format!("{:.6}", e.posterior_rate),
            ])
            .map_err(csv_err)?;
        }
    }
    into_bytes(w)
}

pub fn cmd_rt(args: &RtArgs) -> Result<(), CliError> {
    let mut session = Session::open("rt", &args.common)?;
    let si = discretize_serial_interval(
        session.config.serial_interval_mean,
        session.config.serial_interval_sd,
        args.si_max_days,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    let prior = RtPrior {
        shape: args.prior_shape,
        scale: args.prior_scale,
    };
    if !(prior.shape > 0.0 && prior.scale > 0.0) {
        return Err(CliError::Config("prior shape and scale must be positive".into()));
    }
    let data = session.load_cases(&args.common.cases)?;
    let window = session.config.rt_window;
    let mut out = BTreeMap::new();
    let mut succeeded = 0;
    for s in &data.series {
        let incidence = to_incidence(s);
        let estimates = estimate_rt(&incidence, &si, window, prior).map_err(|e| CliError::Config(e.to_string()))?;
        if estimates.estimates.is_empty() {
            session
                .manifest
                .status(s.region(), format!("skipped: {}", estimates.warnings.join("; ")));
        } else {
            succeeded += 1;
            session.manifest.status(s.region(), "ok");
        }
        out.insert(s.region().to_string(), estimates);
    }
    let csv = render_rt(&out)?;
    session.write("rt.csv", &csv)?;
    session.finish(succeeded)
}

/// `correlation.txt`, one section per metric and growth model.
pub fn render_correlations(results: &[(ModelKind, Result<MobilityCorrelation, String>, MobilityMetric)]) -> String {
    let mut s = String::new();
    for (model, result, metric) in results {
        let _ = writeln!(s, "[{metric}]");
        let _ = writeln!(s, "growth_model = {model}");
        match result {
            Ok(c) => {
                let _ = writeln!(s, "r = {:.6}", c.result.r);
                let _ = writeln!(s, "n = {}", c.result.n);
                let _ = writeln!(s, "ci95_lo = {:.6}", c.result.ci95.0);
                let _ = writeln!(s, "ci95_hi = {:.6}", c.result.ci95.1);
                let _ = writeln!(s, "p_value = {:.6e}", c.result.p_value);
                let _ = writeln!(s, "excluded = {}", c.excluded.len());
                let _ = writeln!(s, "excluded_regions = {}", c.excluded.join("; "));
            }
            Err(e) => {
                let _ = writeln!(s, "error = {e}");
            }
        }
        s.push('\n');
    }
    s
}

pub fn cmd_correlate(args: &CorrelateArgs) -> Result<(), CliError> {
    if args.mobility.len() != args.metric.len() {
        return Err(CliError::Config(format!(
            "{} --mobility file(s) but {} --metric value(s); give one metric per file",
            args.mobility.len(),
            args.metric.len()
        )));
    }
    let mut session = Session::open("correlate", &args.common)?;
    let data = session.load_cases(&args.common.cases)?;
    let window = session.config.window();
    let known: std::collections::BTreeSet<String> = data.series.iter().map(|s| s.region().to_string()).collect();

    let mut results = Vec::new();
    let mut used: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
    let mut growth_failures: BTreeMap<String, String> = BTreeMap::new();
    let mut mobility_failures: BTreeMap<String, String> = BTreeMap::new();
    let mut mobility_regions: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
    for (path, metric) in args.mobility.iter().zip(&args.metric) {
        let metric = MobilityMetric::from(*metric);
        let series = parse_mobility_csv(path, metric, &session.config)?;
        session.manifest.input(&format!("mobility_{metric}"), path)?;
        for s in &series {
            mobility_regions.insert(s.region.clone());
            if !known.contains(&s.region) {
                session
                    .manifest
                    .warn(format!("{metric} mobility for {} has no case data", s.region));
            }
        }
        let (trends, failed) = fit_mobility_trends(&series, window);
        for (region, reason) in failed {
            mobility_failures.insert(region, format!("{metric} trend: {reason}"));
        }
        for kind in args.model.kinds() {
            let (fits, failed) = fit_growth_coefficients(&data.series, window, kind);
            for (region, reason) in failed {
                growth_failures.insert(region, format!("{kind} fit: {reason}"));
            }
            let result = correlate_mobility_growth(&fits, &trends, metric).map_err(|e| e.to_string());
            match &result {
                Ok(c) => used.extend(c.matched.iter().cloned()),
                Err(e) => session.manifest.warn(format!("{metric}/{kind} correlation: {e}")),
            }
            results.push((kind, result, metric));
        }
    }

    for region in known.iter().chain(mobility_regions.iter()) {
        let status = if used.contains(region) {
            "ok".to_string()
        } else if let Some(reason) = growth_failures.get(region).or_else(|| mobility_failures.get(region)) {
            format!("excluded: {reason}")
        } else if !known.contains(region) {
            "excluded: mobility without case data".to_string()
        } else if !mobility_regions.contains(region) {
            "excluded: no mobility data".to_string()
        } else {
            "excluded: not in any computed correlation".to_string()
        };
        session.manifest.status(region, status);
    }
    let text = render_correlations(&results);
    session.write("correlation.txt", text.as_bytes())?;
    let ok = results.iter().filter(|r| r.1.is_ok()).count();
    session.finish(ok)
}

/// `tenhundred.csv`: region, point index, x, y, classification.
pub fn render_tenhundred(points: &[TenHundredPoint]) -> Result<Vec<u8>, CliError> {
    let mut w = csv_writer();
    w.write_record(["region", "point", "x", "y", "classification"])
        .map_err(csv_err)?;
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for p in points {
        let i = index.entry(p.region.as_str()).or_insert(0);
        *i += 1;
        w.write_record([
            p.region.as_str(),
            &i.to_string(),
            &format!("{:.6}", p.x),
            &format!("{:.6}", p.y),
            p.classification.name(),
        ])
        .map_err(csv_err)?;
    }
    into_bytes(w)
}

fn render_crossings(all: &[DecadeCrossings]) -> Result<Vec<u8>, CliError> {
    let mut w = csv_writer();
    w.write_record(["region", "threshold", "day"]).map_err(csv_err)?;
    for c in all {
        for &(threshold, day) in &c.crossings {
            w.write_record([c.region.as_str(), &format!("{threshold}"), &format!("{day:.6}")])
                .map_err(csv_err)?;
        }
    }
    into_bytes(w)
}

pub fn cmd_tenhundred(args: &TenHundredArgs) -> Result<(), CliError> {
    if !(args.tolerance >= 0.0 && args.base_threshold > 0.0) {
        return Err(CliError::Config("tolerance must be >= 0 and base threshold > 0".into()));
    }
    let mut session = Session::open("tenhundred", &args.common)?;
    let data = session.load_cases(&args.common.cases)?;
    let mut points = Vec::new();
    let mut crossings = Vec::new();
    let mut succeeded = 0;
    for s in &data.series {
        let c = decade_crossings(s.region(), s, args.base_threshold);
        for w in &c.warnings {
            session.manifest.undefined.push(format!("{} crossing: {w}", s.region()));
        }
        let pts = tenhundred_points(&c, args.tolerance);
        if pts.is_empty() {
            session.manifest.status(
                s.region(),
                format!("skipped: {} decade crossing(s), need 3", c.crossings.len()),
            );
        } else {
            succeeded += 1;
            session.manifest.status(s.region(), "ok");
        }
        points.extend(pts);
        crossings.push(c);
    }
    let csv = render_tenhundred(&points)?;
    session.write("tenhundred.csv", &csv)?;
    let csv = render_crossings(&crossings)?;
    session.write("tenhundred_crossings.csv", &csv)?;
    session.finish(succeeded)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    if args.regions == 0 {
        return Err(CliError::Config("--regions must be positive".into()));
    }
    let corpus = generate(&CorpusSpec {
        regions: args.regions,
        seed: args.seed,
        ..CorpusSpec::default()
    });
    write_corpus(&corpus, &args.out)?;
    println!("wrote {} regions to {}", corpus.cases.len(), args.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::EpochDay;

    #[test]
    fn ranking_orders_by_b_then_name() {
        let mk = |b: f64| GrowthFit {
            model: ModelKind::Exponential,
            a: 1.0,
            b,
            k: 0.0,
            window: (EpochDay(1), EpochDay(2)),
            n: 2,
            r_squared: 1.0,
            rmse: 0.0,
            at_bracket_boundary: false,
        };
        let fits: BTreeMap<String, GrowthFit> = [("c", 0.2), ("a", 0.5), ("b", 0.2)]
            .into_iter()
            .map(|(r, b)| (r.to_string(), mk(b)))
            .collect();
        let ranked: Vec<String> = rank_by_growth(&fits).into_iter().map(|r| r.0).collect();
        assert_eq!(ranked, vec!["a", "b", "c"]);
    }

    #[test]
    fn full_precision_format() {
        assert_eq!(full(0.1), "1.0000000000000001e-1");
        assert_eq!(full(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn manifest_keeps_first_status() {
        let mut m = RunManifest::new("x");
        m.status("A", "rejected: no cases");
        m.status("A", "ok");
        assert_eq!(m.regions["A"], "rejected: no cases");
        assert!(m.render().contains("A = rejected: no cases"));
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["epigrowth", "fit"]), 2);
        assert_eq!(run(["epigrowth", "bogus"]), 2);
        assert_eq!(run(["epigrowth", "--help"]), 0);
    }
}
