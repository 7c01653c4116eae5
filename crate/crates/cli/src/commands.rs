use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::{Timelike, Utc};
use latentmpc::envelope::{identify as fit_envelope, EnvelopeError, EnvelopeFit, IdentifyOptions, ParamSpec, ThermalCircuitParams};
use latentmpc::equipment::{EquipmentModel, Formulation};
use latentmpc::metrics::{
    annual_cost_projection, daily_summaries, fit_savings_slopes, reference, savings_ci, violation_stats, weather_normalized_energy, AnnualProjection, DailySummary, SavingsCi,
    SlopeFit, ViolationStats, SHARED_OFFSET,
};
use latentmpc::optimizer::PlanMode;
use latentmpc::psychro::comfort_series;
use latentmpc::simkit::{
    run_closed_loop, train_models, ControllerKind, ScenarioConfig, SetpointDither, SimError, SimulationOutput, TrainedModels, WeatherProfile,
    WeatherSource,
};
use latentmpc::telemetry::{TelemetryError, TelemetryLog};
use log::info;
use serde::{Deserialize, Serialize};

use crate::manifest::ExperimentManifest;
use crate::CliError;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numeric(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(CliError::io(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(CliError::io(path))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| CliError::Input(format!("{} row {}: {e}", path.display(), i + 1))))
        .collect()
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(CliError::io(path))
}

fn telemetry_error(e: TelemetryError) -> CliError {
    CliError::Input(format!("telemetry: {e}"))
}

fn envelope_error(e: EnvelopeError) -> CliError {
    match e {
        EnvelopeError::RankDeficient { .. } | EnvelopeError::RejectedFit(_) => CliError::Numeric(e.to_string()),
        EnvelopeError::Telemetry(t) => telemetry_error(t),
        other => CliError::Input(other.to_string()),
    }
}

fn sim_error(e: &SimError) -> CliError {
    match e {
        SimError::Config(_) | SimError::ShortWeather { .. } | SimError::MissingModels(_) => CliError::Input(e.to_string()),
        _ => CliError::Numeric(e.to_string()),
    }
}

// ---- identify ------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct IdentifyArgs {
    pub telemetry: PathBuf,
    pub out: PathBuf,
    /// `(α, R)` to keep instead of estimating.
    pub frozen: Option<(f64, f64)>,
    pub t_m: f64,
    pub validation_fraction: f64,
}

/// The identification artifact written to `envelope_fit.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArtifact {
    pub frozen: bool,
    pub alpha: f64,
    pub r_eff: f64,
    pub r_out: f64,
    /// `None` when the circuit has no mass branch.
    pub r_m: Option<f64>,
    pub t_m: f64,
    pub qe_mean_kw: f64,
    pub rmse_temp_c: f64,
    pub rmse_cool_kw: f64,
    pub alpha_std_err: Option<f64>,
    pub r_std_err: Option<f64>,
    pub n_train: usize,
    pub n_validation: usize,
}

impl FitArtifact {
    fn new(fit: &EnvelopeFit, frozen: bool) -> Self {
        let p = &fit.params;
        Self {
            frozen,
            alpha: p.alpha,
            r_eff: p.r_eff,
            r_out: p.r_out,
            r_m: p.r_m.is_finite().then_some(p.r_m),
            t_m: p.t_m,
            qe_mean_kw: fit.qe_mean,
            rmse_temp_c: fit.rmse_temp,
            rmse_cool_kw: fit.rmse_cool,
            alpha_std_err: fit.alpha_std_err,
            r_std_err: fit.r_std_err,
            n_train: fit.n_train,
            n_validation: fit.n_validation,
        }
    }
}

#[derive(Serialize)]
struct ResidualRow {
    step: usize,
    q_e_kw: f64,
}

/// Fits the envelope to a telemetry CSV and writes `envelope_fit.json` and
/// `residuals.csv` (the exogenous power closing each training transition).
pub fn identify(args: &IdentifyArgs) -> Result<FitArtifact, CliError> {
    let log = TelemetryLog::read_csv_path(&args.telemetry).map_err(telemetry_error)?;
    let spec = match args.frozen {
        Some((alpha, r)) => ParamSpec::Frozen(ThermalCircuitParams::lumped(alpha, r).map_err(envelope_error)?),
        None => ParamSpec::Free { t_m: args.t_m },
    };
    let fit = fit_envelope(&log, &IdentifyOptions { spec, validation_fraction: args.validation_fraction }).map_err(envelope_error)?;
    let artifact = FitArtifact::new(&fit, args.frozen.is_some());
    create_dir(&args.out)?;
    write_json(&args.out.join("envelope_fit.json"), &artifact)?;
    let rows: Vec<ResidualRow> = fit.qe_series.iter().enumerate().map(|(step, &q_e_kw)| ResidualRow { step, q_e_kw }).collect();
    write_csv(&args.out.join("residuals.csv"), &rows)?;
    info!("alpha = {:.4}, R = {:.4} °C/kW, validation RMSE {:.3} °C", artifact.alpha, artifact.r_eff, artifact.rmse_temp_c);
    Ok(artifact)
}

// ---- synth ---------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SynthArgs {
    pub days: usize,
    pub seed: u64,
    pub profile: String,
    pub out: PathBuf,
}

/// Writes benchmark-thermostat telemetry with set-point dither from the
/// simulated house: identification input when no field data is at hand.
pub fn synth(args: &SynthArgs) -> Result<usize, CliError> {
    let profile = WeatherProfile::by_name(&args.profile).ok_or_else(|| CliError::Input(format!("unknown weather profile `{}`", args.profile)))?;
    let scenario = ScenarioConfig {
        label: "synthetic".into(),
        days: args.days,
        seed: args.seed,
        weather: WeatherSource::Synthetic { profile, seed: args.seed },
        dither: Some(SetpointDither::default()),
        ..ScenarioConfig::default()
    };
    let out = run_closed_loop(&scenario, None).map_err(|e| sim_error(&e))?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    out.log.write_csv_path(&args.out).map_err(telemetry_error)?;
    Ok(out.log.len())
}

// ---- simulate ------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub manifest: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    /// Keep only MPC scenarios of this formulation (benchmarks are kept).
    pub formulation: Option<Formulation>,
    /// Keep only MPC scenarios in this mode (benchmarks are kept).
    pub mode: Option<PlanMode>,
}

/// Per-scenario results; one column of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub label: String,
    pub controller: ControllerKind,
    pub mode: PlanMode,
    pub days: usize,
    pub energy_kwh: f64,
    /// kWh per °C of outdoor–indoor difference; `None` when undefined.
    pub normalized_energy_kwh_per_c: Option<f64>,
    pub violation_minutes_per_day: f64,
    pub violation_magnitude_kw: f64,
    pub mean_ppd: f64,
    pub controller_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metrics: Vec<String>,
    pub columns: Vec<ScenarioSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStatus {
    pub label: String,
    pub status: String,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelsArtifact {
    pub envelope: FitArtifact,
    pub training_days: usize,
    pub commissioning_days: usize,
}

pub const TABLE_METRICS: [&str; 3] = ["normalized_energy_kwh_per_c", "violation_minutes_per_day", "violation_magnitude_kw"];

fn summarize(out: &SimulationOutput, manifest: &ExperimentManifest, days: usize) -> Result<(ScenarioSummary, Vec<DailySummary>), CliError> {
    let numeric = |e: latentmpc::metrics::MetricsError| CliError::Numeric(e.to_string());
    let daily = daily_summaries(&out.log, &out.label, &manifest.schedule, &manifest.comfort).map_err(numeric)?;
    let violations: ViolationStats = violation_stats(&out.log, &manifest.schedule).map_err(numeric)?;
    let n = daily.len() as f64;
    Ok((
        ScenarioSummary {
            label: out.label.clone(),
            controller: out.controller,
            mode: out.mode,
            days,
            energy_kwh: daily.iter().map(|d| d.energy_kwh).sum(),
            normalized_energy_kwh_per_c: weather_normalized_energy(&daily).ok(),
            violation_minutes_per_day: violations.minutes_per_day,
            violation_magnitude_kw: violations.mean_magnitude_kw,
            mean_ppd: daily.iter().map(|d| d.mean_ppd).sum::<f64>() / n,
            controller_failures: out.controller_failures,
        },
        daily,
    ))
}

fn run_one(config: &ScenarioConfig, models: Option<&TrainedModels>, manifest: &ExperimentManifest, dir: &Path) -> Result<ScenarioSummary, CliError> {
    let out = run_closed_loop(config, models).map_err(|e| sim_error(&e))?;
    let (summary, daily) = summarize(&out, manifest, config.days)?;
    create_dir(dir)?;
    out.log.write_csv_path(&dir.join("telemetry.csv")).map_err(telemetry_error)?;
    write_csv(&dir.join("daily_summary.csv"), &daily)?;
    write_json(&dir.join("summary.json"), &summary)?;
    if !out.tuned_prices.is_empty() {
        write_csv(&dir.join("tuned_prices.csv"), &out.tuned_prices)?;
    }
    Ok(summary)
}

#[derive(Serialize)]
struct Metadata {
    tool_version: &'static str,
    manifest: String,
    seed: u64,
    scenarios: usize,
    started_at: String,
    finished_at: String,
}

/// Runs the manifest's scenario matrix, writing one subdirectory per
/// scenario plus `comparison.json`, `status.json`, `manifest.json`,
/// `models.json` (when MPC runs) and the wall-clock `metadata.json`.
pub fn simulate(args: &SimulateArgs) -> Result<Comparison, CliError> {
    let started_at = Utc::now().to_rfc3339();
    let mut manifest = ExperimentManifest::load(&args.manifest)?;
    if let Some(seed) = args.seed {
        manifest.seed = seed;
    }
    manifest.scenarios.retain(|s| {
        s.controller == ControllerKind::Benchmark
            || (args.formulation.is_none_or(|f| s.controller.formulation() == Some(f)) && args.mode.is_none_or(|m| s.mode == m))
    });
    if manifest.scenarios.is_empty() {
        return Err(CliError::Input("no scenarios left after applying --formulation/--mode".into()));
    }
    let configs = manifest.scenarios.iter().map(|s| manifest.scenario(s)).collect::<Result<Vec<_>, _>>()?;
    create_dir(&args.out)?;
    write_json(&args.out.join("manifest.json"), &manifest)?;

    let models = if manifest.needs_models() {
        let training = manifest.training()?;
        info!("training models on {} benchmark days", training.days);
        match train_models(&training, EquipmentModel::fixture()) {
            Ok((m, _)) => {
                let artifact = ModelsArtifact {
                    envelope: FitArtifact::new(&m.envelope, false),
                    training_days: training.days,
                    commissioning_days: training.mpc_days(),
                };
                write_json(&args.out.join("models.json"), &artifact)?;
                Some(m)
            }
            Err(e) => {
                let status = vec![ScenarioStatus { label: "training".into(), status: "failed".into(), error: Some(e.to_string()) }];
                write_json(&args.out.join("status.json"), &status)?;
                return Err(sim_error(&e));
            }
        }
    } else {
        None
    };

    let results: Vec<Mutex<Option<Result<ScenarioSummary, CliError>>>> = configs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(configs.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cfg) = configs.get(i) else { break };
                info!("running scenario {}", cfg.label);
                let r = run_one(cfg, models.as_ref(), &manifest, &args.out.join(&cfg.label));
                *results[i].lock().expect("result slot") = Some(r);
            });
        }
    });

    let mut status = Vec::new();
    let mut columns = Vec::new();
    let mut failed = 0;
    let mut numeric = false;
    for (cfg, slot) in configs.iter().zip(results) {
        match slot.into_inner().expect("result slot").expect("every scenario ran") {
            Ok(summary) => {
                status.push(ScenarioStatus { label: cfg.label.clone(), status: "ok".into(), error: None });
                columns.push(summary);
            }
            Err(e) => {
                failed += 1;
                numeric |= e.exit_code() == crate::EXIT_NUMERIC;
                status.push(ScenarioStatus { label: cfg.label.clone(), status: "failed".into(), error: Some(e.to_string()) });
            }
        }
    }
    let comparison = Comparison { metrics: TABLE_METRICS.iter().map(|s| s.to_string()).collect(), columns };
    write_json(&args.out.join("status.json"), &status)?;
    write_json(&args.out.join("comparison.json"), &comparison)?;
    write_json(
        &args.out.join("metadata.json"),
        &Metadata {
            tool_version: env!("CARGO_PKG_VERSION"),
            manifest: args.manifest.display().to_string(),
            seed: manifest.seed,
            scenarios: configs.len(),
            started_at,
            finished_at: Utc::now().to_rfc3339(),
        },
    )?;
    if failed > 0 {
        return Err(CliError::ScenarioFailures { failed, total: configs.len(), numeric });
    }
    Ok(comparison)
}

// ---- report --------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ReportArgs {
    pub results: PathBuf,
    /// Defaults to `<results>/report`.
    pub out: Option<PathBuf>,
    /// Use the reference slope distributions instead of fitted ones.
    pub paper_constants: bool,
    pub seed: u64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsEntry {
    pub label: String,
    pub baseline: String,
    /// `reference` (built-in slopes) or `fitted` (from the results).
    pub source: String,
    pub slope_mpc: SlopeFit,
    pub slope_baseline: SlopeFit,
    pub mean_pct: f64,
    pub lower_pct: f64,
    pub upper_pct: f64,
    pub samples: usize,
}

impl SavingsEntry {
    fn new(label: &str, baseline: &str, source: &str, m1: SlopeFit, m2: SlopeFit, ci: SavingsCi) -> Self {
        Self {
            label: label.into(),
            baseline: baseline.into(),
            source: source.into(),
            slope_mpc: m1,
            slope_baseline: m2,
            mean_pct: 100.0 * ci.mean,
            lower_pct: 100.0 * ci.lower,
            upper_pct: 100.0 * ci.upper,
            samples: ci.samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComfortHours {
    pub label: String,
    pub hours: f64,
    /// Hours with PPD above 10 %.
    pub hours_above_threshold: f64,
    pub mean_ppd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationEntry {
    pub label: String,
    pub mode: PlanMode,
    pub minutes_per_day: f64,
    pub mean_magnitude_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSavings {
    pub label: String,
    pub days: usize,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub normalized_energy_kwh_per_c: BTreeMap<String, Option<f64>>,
    pub savings: Vec<SavingsEntry>,
    pub violations: Vec<ViolationEntry>,
    pub comfort_hours: Vec<ComfortHours>,
    /// Whether latent power limiting beat sensible power limiting on both
    /// violation minutes and magnitude; `None` without both arms.
    pub latent_beats_sensible_on_violations: Option<bool>,
    /// Expected cost savings over the simulated days, with a 95 % interval.
    pub cost_savings: Vec<CostSavings>,
    pub footnotes: Vec<String>,
}

/// One point of a plot-ready series.
#[derive(Serialize)]
struct PlotRow<'a> {
    x: f64,
    y: f64,
    series: &'a str,
}

const HISTOGRAM_BIN_KW: f64 = 0.25;

fn check_artifacts(results: &Path) -> Result<(Comparison, ExperimentManifest), CliError> {
    let top = [results.join("comparison.json"), results.join("manifest.json")];
    let missing: Vec<PathBuf> = top.iter().filter(|p| !p.is_file()).cloned().collect();
    if !missing.is_empty() {
        return Err(CliError::MissingArtifacts(missing));
    }
    let comparison: Comparison = read_json(&top[0])?;
    let manifest: ExperimentManifest = read_json(&top[1])?;
    let missing: Vec<PathBuf> = comparison
        .columns
        .iter()
        .flat_map(|c| [results.join(&c.label).join("daily_summary.csv"), results.join(&c.label).join("telemetry.csv")])
        .filter(|p| !p.is_file())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::MissingArtifacts(missing));
    }
    Ok((comparison, manifest))
}

/// Builds the report bundle from a `simulate` results directory: `report.json`,
/// `daily.csv` and the plot-ready `energy_vs_delta_t.csv`,
/// `hourly_power_profile.csv` and `temperature_series.csv`.
pub fn report(args: &ReportArgs) -> Result<Report, CliError> {
    let (comparison, manifest) = check_artifacts(&args.results)?;
    let out = args.out.clone().unwrap_or_else(|| args.results.join("report"));
    create_dir(&out)?;

    let mut daily: BTreeMap<String, Vec<DailySummary>> = BTreeMap::new();
    let mut logs: BTreeMap<String, TelemetryLog> = BTreeMap::new();
    for c in &comparison.columns {
        let dir = args.results.join(&c.label);
        daily.insert(c.label.clone(), read_csv(&dir.join("daily_summary.csv"))?);
        logs.insert(c.label.clone(), TelemetryLog::read_csv_path(&dir.join("telemetry.csv")).map_err(telemetry_error)?);
    }

    let mut footnotes = Vec::new();
    let mut savings = Vec::new();
    let numeric = |e: latentmpc::metrics::MetricsError| CliError::Numeric(e.to_string());
    if args.paper_constants {
        let m1 = SlopeFit::new(reference::SLOPE_MPC.0, reference::SLOPE_MPC.1);
        let m2 = SlopeFit::new(reference::SLOPE_BASELINE.0, reference::SLOPE_BASELINE.1);
        let ci = savings_ci(&m1, &m2, args.samples, args.seed).map_err(numeric)?;
        savings.push(SavingsEntry::new("mpc", "baseline", "reference", m1, m2, ci));
        footnotes.push("savings computed from the reference daily energy slope distributions".into());
    } else {
        let baseline = comparison.columns.iter().find(|c| c.controller == ControllerKind::Benchmark);
        for c in comparison.columns.iter().filter(|c| c.controller != ControllerKind::Benchmark && c.mode == PlanMode::Cost) {
            let Some(b) = baseline else {
                footnotes.push(format!("{}: no benchmark scenario to compare against", c.label));
                continue;
            };
            match fit_savings_slopes(&daily[&c.label], &daily[&b.label], SHARED_OFFSET) {
                Ok((m1, m2)) => {
                    let ci = savings_ci(&m1, &m2, args.samples, args.seed).map_err(numeric)?;
                    savings.push(SavingsEntry::new(&c.label, &b.label, "fitted", m1, m2, ci));
                }
                Err(e) => footnotes.push(format!("{}: savings not estimated ({e})", c.label)),
            }
        }
    }

    // Savings over the simulated days' temperature differences, at the energy price.
    let horizon: Vec<f64> = comparison
        .columns
        .iter()
        .find(|c| c.controller == ControllerKind::Benchmark)
        .or(comparison.columns.first())
        .map(|c| daily[&c.label].iter().map(|d| d.delta_t).collect())
        .unwrap_or_default();
    let mut projections = Vec::new();
    if !horizon.is_empty() {
        for s in &savings {
            let p = annual_cost_projection(&s.slope_mpc, &s.slope_baseline, &horizon, manifest.mpc.pi_e, args.samples, args.seed).map_err(numeric)?;
            projections.push((s.label.clone(), p));
        }
    }

    let mut comfort_hours = Vec::new();
    for c in &comparison.columns {
        let log = &logs[&c.label];
        let series = comfort_series(log, &manifest.comfort).map_err(|e| CliError::Numeric(e.to_string()))?;
        let dt = log.uniform_step_hours().unwrap_or(1.0);
        comfort_hours.push(ComfortHours {
            label: c.label.clone(),
            hours: log.len() as f64 * dt,
            hours_above_threshold: series.hours_above_threshold,
            mean_ppd: series.mean_ppd,
        });
    }

    let violations: Vec<ViolationEntry> = comparison
        .columns
        .iter()
        .map(|c| ViolationEntry {
            label: c.label.clone(),
            mode: c.mode,
            minutes_per_day: c.violation_minutes_per_day,
            mean_magnitude_kw: c.violation_magnitude_kw,
        })
        .collect();
    let limit_arm = |k: ControllerKind| comparison.columns.iter().find(|c| c.controller == k && c.mode == PlanMode::PowerLimit);
    let ordering = match (limit_arm(ControllerKind::MpcLatent), limit_arm(ControllerKind::MpcSensible)) {
        (Some(l), Some(s)) => {
            let holds = l.violation_minutes_per_day < s.violation_minutes_per_day && l.violation_magnitude_kw < s.violation_magnitude_kw;
            footnotes.push(format!(
                "violation ordering latent < sensible {}: {:.1} vs {:.1} min/day, {:.3} vs {:.3} kW",
                if holds { "holds" } else { "does not hold" },
                l.violation_minutes_per_day,
                s.violation_minutes_per_day,
                l.violation_magnitude_kw,
                s.violation_magnitude_kw
            ));
            Some(holds)
        }
        _ => None,
    };

    let report = Report {
        normalized_energy_kwh_per_c: comparison.columns.iter().map(|c| (c.label.clone(), c.normalized_energy_kwh_per_c)).collect(),
        savings,
        violations,
        comfort_hours,
        latent_beats_sensible_on_violations: ordering,
        cost_savings: projections
            .iter()
            .map(|(label, p)| CostSavings { label: label.clone(), days: p.cumulative.len(), mean: p.mean, lower: p.lower, upper: p.upper })
            .collect(),
        footnotes,
    };
    write_json(&out.join("report.json"), &report)?;

    let all_days: Vec<DailySummary> = comparison.columns.iter().flat_map(|c| daily[&c.label].iter().cloned()).collect();
    write_csv(&out.join("daily.csv"), &all_days)?;
    write_plot_series(&out, &comparison, &manifest, &daily, &logs, &projections)?;
    Ok(report)
}

fn write_plot_series(
    out: &Path,
    comparison: &Comparison,
    manifest: &ExperimentManifest,
    daily: &BTreeMap<String, Vec<DailySummary>>,
    logs: &BTreeMap<String, TelemetryLog>,
    projections: &[(String, AnnualProjection)],
) -> Result<(), CliError> {
    let mut scatter = Vec::new();
    let mut profile = Vec::new();
    let mut temps = Vec::new();
    let mut histogram = Vec::new();
    for c in &comparison.columns {
        let label = c.label.as_str();
        scatter.extend(daily[label].iter().map(|d| PlotRow { x: d.delta_t, y: d.energy_kwh, series: label }));
        let log = &logs[label];
        let mut sums = [(0.0, 0usize); 24];
        let mut bins: BTreeMap<usize, usize> = BTreeMap::new();
        for r in &log.records {
            let h = r.timestamp.hour();
            sums[h as usize].0 += r.p_kw;
            sums[h as usize].1 += 1;
            if let Some(limit) = manifest.schedule.limit_at(h) {
                if r.p_kw > limit {
                    *bins.entry(((r.p_kw - limit) / HISTOGRAM_BIN_KW) as usize).or_default() += 1;
                }
            }
        }
        for (hour, (sum, n)) in sums.iter().enumerate() {
            profile.push(PlotRow { x: hour as f64, y: if *n > 0 { sum / *n as f64 } else { 0.0 }, series: label });
        }
        histogram.extend(bins.into_iter().map(|(b, n)| PlotRow { x: (b as f64 + 0.5) * HISTOGRAM_BIN_KW, y: n as f64, series: label }));
        let hourly = log.to_hourly().map_err(telemetry_error)?;
        let start = hourly.records.first().map(|r| r.timestamp);
        temps.extend(hourly.records.iter().map(|r| PlotRow {
            x: start.map_or(0.0, |s| (r.timestamp - s).num_minutes() as f64 / 60.0),
            y: r.t_in,
            series: label,
        }));
    }
    for hour in 0..24 {
        if let Some(limit) = manifest.schedule.limit_at(hour) {
            profile.push(PlotRow { x: hour as f64, y: limit, series: "power_limit" });
        }
    }
    let cumulative: Vec<PlotRow> = projections
        .iter()
        .flat_map(|(label, p)| p.cumulative.iter().enumerate().map(move |(d, &y)| PlotRow { x: (d + 1) as f64, y, series: label.as_str() }))
        .collect();
    write_csv(&out.join("energy_vs_delta_t.csv"), &scatter)?;
    write_csv(&out.join("hourly_power_profile.csv"), &profile)?;
    write_csv(&out.join("indoor_temperature.csv"), &temps)?;
    write_csv(&out.join("violation_histogram.csv"), &histogram)?;
    write_csv(&out.join("cumulative_savings.csv"), &cumulative)?;
    Ok(())
}

