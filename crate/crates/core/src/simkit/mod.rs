//! Closed-loop simulation: a truth plant driven by a device thermostat whose
//! set-point comes from either the constant benchmark or the MPC supervisor.

use chrono::{Duration, NaiveDateTime, Timelike};
use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envelope::{identify, EnvelopeError, EnvelopeFit, IdentifyOptions, ParamSpec};
use crate::equipment::{shr, EquipmentModel, Formulation};
use crate::forecast::{assemble_bundle, BundleInputs, ForecastError, GprQe, HourEncoding, KernelConfig, WeatherGpr, WeatherRecord};
use crate::optimizer::{default_price_grid, plan, tune_discomfort_price, MpcConfig, OptimizerError, PlanMode, PowerLimitSchedule};
use crate::psychro::{wet_bulb, ComfortAssumptions};
use crate::telemetry::{TelemetryLog, TelemetryRecord};

pub mod plant;
pub mod weather;

pub use plant::{device_tracker, plant_step, DailySchedule, MassNode, PlantEvents, PlantParams, PlantState, TrackerConfig, H_FG};
pub use weather::{daily_mean_dewpoints, weather_synth, WeatherProfile};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("weather series covers {got} h, scenario needs {needed} h")]
    ShortWeather { needed: usize, got: usize },
    #[error("controller {0:?} needs trained models")]
    MissingModels(ControllerKind),
    #[error("identification failed: {0}")]
    Envelope(#[from] EnvelopeError),
    #[error("forecast failed: {0}")]
    Forecast(#[from] ForecastError),
    #[error("optimizer failed: {0}")]
    Optimizer(#[from] OptimizerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Benchmark,
    MpcSensible,
    MpcLatent,
}

impl ControllerKind {
    pub fn formulation(self) -> Option<Formulation> {
        match self {
            ControllerKind::Benchmark => None,
            ControllerKind::MpcSensible => Some(Formulation::Sensible),
            ControllerKind::MpcLatent => Some(Formulation::Latent),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ControllerKind::Benchmark => "benchmark",
            ControllerKind::MpcSensible => "mpc_sensible",
            ControllerKind::MpcLatent => "mpc_latent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeatherSource {
    Synthetic { profile: WeatherProfile, seed: u64 },
    Series { records: Vec<WeatherRecord> },
}

impl WeatherSource {
    /// At least `hours` of hourly weather.
    pub fn hourly(&self, hours: usize) -> Result<Vec<WeatherRecord>, SimError> {
        match self {
            WeatherSource::Synthetic { profile, seed } => Ok(weather_synth(profile, hours.div_ceil(24), *seed)),
            WeatherSource::Series { records } => {
                if records.len() < hours {
                    return Err(SimError::ShortWeather { needed: hours, got: records.len() });
                }
                Ok(records.clone())
            }
        }
    }
}

/// Random set-point excursions used to excite the envelope while collecting
/// training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetpointDither {
    pub fraction_of_days: f64,
    /// Set-points are drawn uniformly within ± this of the base (°C).
    pub amplitude: f64,
    /// Hours each drawn set-point is held.
    pub block_hours: usize,
}

impl Default for SetpointDither {
    fn default() -> Self {
        Self { fraction_of_days: 1.0, amplitude: 2.0, block_hours: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub label: String,
    pub controller: ControllerKind,
    pub mode: PlanMode,
    pub days: usize,
    pub seed: u64,
    pub weather: WeatherSource,
    pub plant: PlantParams,
    pub tracker: TrackerConfig,
    pub mpc: MpcConfig,
    pub comfort: ComfortAssumptions,
    pub schedule: PowerLimitSchedule,
    pub benchmark_setpoint: f64,
    pub dither: Option<SetpointDither>,
    /// Discomfort price retuning cadence (h); 0 disables retuning.
    pub retune_hours: usize,
    pub price_grid: Vec<f64>,
    pub steps_per_hour: usize,
    pub initial_t_in: f64,
    pub initial_rh: f64,
    /// The supervisor sends `planned − deadband` so that the thermostat,
    /// which only calls for cooling above set-point + deadband, holds the
    /// room near the planned temperature.
    pub compensate_deadband: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            label: "scenario".into(),
            controller: ControllerKind::Benchmark,
            mode: PlanMode::Cost,
            days: 7,
            seed: 0,
            weather: WeatherSource::Synthetic { profile: WeatherProfile::hot_humid(), seed: 0 },
            plant: PlantParams::default(),
            tracker: TrackerConfig::default(),
            mpc: MpcConfig::default(),
            comfort: ComfortAssumptions::default(),
            schedule: PowerLimitSchedule::default(),
            benchmark_setpoint: 23.0,
            dither: None,
            retune_hours: 12,
            price_grid: default_price_grid(),
            steps_per_hour: 12,
            initial_t_in: 23.0,
            initial_rh: 0.55,
            compensate_deadband: true,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.days < 1 {
            return bad("duration must be at least one day".into());
        }
        if self.steps_per_hour == 0 {
            return bad("steps_per_hour must be positive".into());
        }
        if let Err(m) = self.plant.validate() {
            return bad(m);
        }
        if self.tracker.k_p < 0.0 || self.tracker.deadband < 0.0 {
            return bad("tracker gains must be non-negative".into());
        }
        if !(0.05..=1.0).contains(&self.initial_rh) {
            return bad("initial_rh must lie in [0.05, 1]".into());
        }
        if let Some(d) = self.dither {
            if !(0.0..=1.0).contains(&d.fraction_of_days) || d.amplitude < 0.0 || d.block_hours == 0 {
                return bad("invalid set-point dither".into());
            }
        }
        self.mpc.validate()?;
        if (self.mpc.dt - 1.0).abs() > 1e-12 {
            return bad("the supervisor runs on a one-hour cadence".into());
        }
        Ok(())
    }
}

/// Models the MPC supervisor relies on.
#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub envelope: EnvelopeFit,
    pub wet_bulb: WeatherGpr,
    pub qe: GprQe,
    pub equipment: EquipmentModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunedPrice {
    pub timestamp: NaiveDateTime,
    pub price: f64,
    pub threshold_met: bool,
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub label: String,
    pub controller: ControllerKind,
    pub mode: PlanMode,
    pub log: TelemetryLog,
    /// Hours at which the supervisor fell back to the previous set-point.
    pub controller_failures: usize,
    pub tuned_prices: Vec<TunedPrice>,
    /// Electrical power the supervisor planned for each hour it acted on.
    pub planned_p_kw: Vec<Option<f64>>,
    pub events: PlantEvents,
}

/// Realised return-air conditions and equipment performance at a state.
struct Realized {
    rh: f64,
    t_wb: f64,
    shr: f64,
    cop: f64,
}

fn realized(equipment: &EquipmentModel, state: &PlantState, t_out: f64) -> Realized {
    let rh = state.rh_in().clamp(0.05, 1.0);
    let t_wb = wet_bulb(state.t_in.clamp(-20.0, 50.0), rh).unwrap_or(state.t_in);
    let map = &equipment.cop_latent;
    let cop = map.cop(t_wb.clamp(map.t_wb_range.0, map.t_wb_range.1), t_out.clamp(map.t_out_range.0, map.t_out_range.1));
    Realized { rh, t_wb, shr: shr(&equipment.shr_linear, t_wb), cop }
}

fn benchmark_setpoints(scenario: &ScenarioConfig, hours: usize) -> Vec<f64> {
    let base = scenario.benchmark_setpoint;
    let Some(d) = scenario.dither else { return vec![base; hours] };
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ 0x5e7_d17e);
    let mut out = Vec::with_capacity(hours);
    for _ in 0..hours.div_ceil(24) {
        let dithered = rng.random_bool(d.fraction_of_days);
        let mut sp = base;
        for h in 0..24 {
            if dithered && h % d.block_hours == 0 {
                sp = base + rng.random_range(-d.amplitude..=d.amplitude);
            }
            out.push(if dithered { sp } else { base });
        }
    }
    out.truncate(hours);
    out
}

/// Runs one scenario end to end. MPC controllers need `models`; the truth
/// equipment is `models.equipment` when given, the bundled fixture otherwise.
pub fn run_closed_loop(scenario: &ScenarioConfig, models: Option<&TrainedModels>) -> Result<SimulationOutput, SimError> {
    match models {
        Some(m) => simulate(scenario, Some(m), &m.equipment),
        None => simulate(scenario, None, &EquipmentModel::fixture()),
    }
}

fn simulate(scenario: &ScenarioConfig, models: Option<&TrainedModels>, equipment: &EquipmentModel) -> Result<SimulationOutput, SimError> {
    scenario.validate()?;
    let hours = scenario.days * 24;
    let formulation = scenario.controller.formulation();
    let models = match (formulation, models) {
        (Some(_), None) => return Err(SimError::MissingModels(scenario.controller)),
        (_, m) => m,
    };
    let lookahead = if formulation.is_some() { scenario.mpc.horizon_l } else { 0 };
    let weather = scenario.weather.hourly(hours + lookahead)?;
    if weather.len() < hours + lookahead {
        return Err(SimError::ShortWeather { needed: hours + lookahead, got: weather.len() });
    }
    let bench = benchmark_setpoints(scenario, hours);
    let dt = 1.0 / scenario.steps_per_hour as f64;
    let step_minutes = 60 / scenario.steps_per_hour as i64;
    let mut state = PlantState::new(scenario.initial_t_in, scenario.initial_rh);
    let mut records = Vec::with_capacity(hours * scenario.steps_per_hour);
    let mut events = PlantEvents::default();
    let mut failures = 0;
    let mut tuned_prices = Vec::new();
    let mut mpc = scenario.mpc.clone();
    let mut setpoint = scenario.benchmark_setpoint;
    let mut planned_p_kw = Vec::with_capacity(hours);

    for hour in 0..hours {
        let w = &weather[hour];
        setpoint = match (formulation, models) {
            (Some(form), Some(m)) => {
                let inputs = BundleInputs {
                    envelope: &m.envelope.params,
                    equipment: &m.equipment,
                    wet_bulb: Some(&m.wet_bulb),
                    qe: &m.qe,
                    schedule: &scenario.schedule,
                    dt_h: mpc.dt,
                };
                let bundle = assemble_bundle(&weather[hour..hour + mpc.horizon_l], &inputs, form)?;
                if scenario.retune_hours > 0 && hour % scenario.retune_hours == 0 {
                    match tune_discomfort_price(&mpc, &bundle, state.t_in, scenario.mode, &scenario.price_grid, &scenario.comfort) {
                        Ok(t) => {
                            mpc.pi_t = t.price;
                            tuned_prices.push(TunedPrice { timestamp: w.timestamp, price: t.price, threshold_met: t.threshold_met });
                        }
                        Err(OptimizerError::TuningInfeasible) => {
                            warn!("{}: price tuning infeasible at hour {hour}; keeping {}", scenario.label, mpc.pi_t);
                            failures += 1;
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
                let p = plan(&mpc, &bundle, state.t_in, scenario.mode, setpoint)?;
                if p.is_optimal() {
                    planned_p_kw.push(p.p_elec.first().copied());
                } else {
                    failures += 1;
                    planned_p_kw.push(None);
                }
                p.setpoint
            }
            _ => {
                planned_p_kw.push(None);
                bench[hour]
            }
        };

        let command = match formulation {
            Some(_) if scenario.compensate_deadband => setpoint - scenario.tracker.deadband,
            _ => setpoint,
        };
        for sub in 0..scenario.steps_per_hour {
            let ts = w.timestamp + Duration::minutes(step_minutes * sub as i64);
            let hour_of_day = ts.hour() as f64 + ts.minute() as f64 / 60.0;
            let r = realized(equipment, &state, w.t_out);
            let capacity = mpc.p_hp_max * r.cop * r.shr;
            let q = device_tracker(state.t_in, command, &scenario.tracker, capacity);
            records.push(TelemetryRecord {
                timestamp: ts,
                t_in: state.t_in,
                t_out: w.t_out,
                q_cool_kw: q,
                p_kw: q / (r.shr * r.cop),
                rh_in: Some(r.rh),
                rh_out: Some(w.rh_out),
                t_wb_return: Some(r.t_wb),
                setpoint: Some(command),
                q_latent_kw: Some(q * (1.0 / r.shr - 1.0)),
                shr_realized: Some(r.shr),
            });
            let (next, ev) = plant_step(&scenario.plant, &state, w, hour_of_day, q, r.shr, dt);
            events.add(ev);
            state = next;
        }
    }
    Ok(SimulationOutput {
        label: scenario.label.clone(),
        controller: scenario.controller,
        mode: scenario.mode,
        log: TelemetryLog::new(records),
        controller_failures: failures,
        tuned_prices,
        planned_p_kw,
        events,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    /// Days of benchmark operation used for identification.
    pub days: usize,
    /// Share of the wet-bulb training set collected under MPC operation;
    /// the indoor humidity state depends on the set-point pattern.
    pub mpc_fraction: f64,
    pub weather: WeatherSource,
    pub plant: PlantParams,
    pub tracker: TrackerConfig,
    pub dither: SetpointDither,
    /// Slab temperature assumed by the identified circuit (°C).
    pub t_m: f64,
    pub kernel: KernelConfig,
    pub encoding: HourEncoding,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            days: 14,
            mpc_fraction: 0.25,
            weather: WeatherSource::Synthetic { profile: WeatherProfile::hot_humid(), seed: 1_000 },
            plant: PlantParams::default(),
            tracker: TrackerConfig::default(),
            dither: SetpointDither::default(),
            t_m: 18.0,
            kernel: KernelConfig::default(),
            encoding: HourEncoding::Periodic,
            seed: 1_000,
        }
    }
}

impl TrainingConfig {
    /// Whole days of MPC operation appended after the benchmark period.
    pub fn mpc_days(&self) -> usize {
        (self.days as f64 * self.mpc_fraction / (1.0 - self.mpc_fraction)).round() as usize
    }
}

fn hourly_wet_bulb(log: &TelemetryLog) -> Result<Vec<f64>, SimError> {
    let hourly = log.to_hourly().map_err(EnvelopeError::from)?;
    Ok(hourly.records.iter().map(|r| r.t_wb_return.unwrap_or(r.t_in)).collect())
}

/// Collects benchmark operation with set-point dither, identifies the
/// envelope and trains the exogenous-power predictor. A commissioning period
/// of latent MPC operation then supplies part of the wet-bulb training set.
/// Returns the models and the benchmark run.
pub fn train_models(config: &TrainingConfig, equipment: EquipmentModel) -> Result<(TrainedModels, SimulationOutput), SimError> {
    if !(0.0..0.9).contains(&config.mpc_fraction) {
        return Err(SimError::Config("mpc_fraction must lie in [0, 0.9)".into()));
    }
    let scenario = ScenarioConfig {
        label: "training".into(),
        controller: ControllerKind::Benchmark,
        days: config.days,
        seed: config.seed,
        weather: config.weather.clone(),
        plant: config.plant.clone(),
        tracker: config.tracker,
        dither: Some(config.dither),
        ..ScenarioConfig::default()
    };
    let run = simulate(&scenario, None, &equipment)?;
    let envelope = identify(&run.log, &IdentifyOptions { spec: ParamSpec::Free { t_m: config.t_m }, validation_fraction: 0.25 })?;
    let bench_hours = config.days * 24;
    let mpc_days = config.mpc_days();
    let weather = config.weather.hourly(bench_hours + mpc_days * 24 + scenario.mpc.horizon_l)?;
    let mut wb = hourly_wet_bulb(&run.log)?;
    wb.truncate(bench_hours.min(weather.len()));
    let qe = GprQe::train(&weather[..envelope.qe_series.len()], &envelope.qe_series, config.encoding, &config.kernel)?;
    let wet_bulb = WeatherGpr::fit(&weather[..wb.len()], &wb, config.encoding, &config.kernel)?;
    let mut models = TrainedModels { envelope, wet_bulb, qe, equipment };
    if mpc_days > 0 {
        let commissioning = ScenarioConfig {
            label: "commissioning".into(),
            controller: ControllerKind::MpcLatent,
            days: mpc_days,
            weather: WeatherSource::Series { records: weather[bench_hours..].to_vec() },
            dither: None,
            ..scenario
        };
        let mpc_run = simulate(&commissioning, Some(&models), &models.equipment)?;
        let mpc_wb = hourly_wet_bulb(&mpc_run.log)?;
        let n = wb.len();
        wb.extend(mpc_wb);
        let mut inputs = weather[..n].to_vec();
        inputs.extend_from_slice(&weather[bench_hours..bench_hours + wb.len() - n]);
        models.wet_bulb = WeatherGpr::fit(&inputs, &wb, config.encoding, &config.kernel)?;
    }
    Ok((models, run))
}
