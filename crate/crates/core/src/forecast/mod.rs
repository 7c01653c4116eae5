//! Weather-driven forecasts for the optimizer: return-air wet-bulb, exogenous
//! thermal power, and the per-step bundle of model inputs.

use std::f64::consts::TAU;
use std::path::Path;

use chrono::{NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envelope::{equivalent_boundary, ThermalCircuitParams};
use crate::equipment::{EquipmentError, EquipmentModel, Formulation};
use crate::optimizer::PowerLimitSchedule;
use crate::telemetry::{parse_timestamp, TIMESTAMP_FORMAT};

pub mod gpr;

pub use gpr::{gpr_fit, gpr_predict, GprError, GprModel, KernelConfig};

/// Exogenous power used when no trained predictor is available (kW).
pub const DEFAULT_CONSTANT_QE: f64 = 3.4;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("predictor has not been trained")]
    Untrained,
    #[error("latent formulation requires a wet-bulb model")]
    MissingWetBulbModel,
    #[error("empty forecast horizon")]
    EmptyHorizon,
    #[error("step {step}: {source}")]
    Gpr { step: usize, source: GprError },
    #[error("step {step}: {source}")]
    Equipment { step: usize, source: EquipmentError },
    #[error(transparent)]
    Fit(#[from] GprError),
    #[error("weather row {row}: {message}")]
    Schema { row: usize, message: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub timestamp: NaiveDateTime,
    pub t_out: f64,
    pub rh_out: f64,
    /// Global horizontal irradiance (kW/m²).
    pub i_solar: f64,
    pub wind: f64,
}

impl WeatherRecord {
    pub fn hour_of_day(&self) -> f64 {
        self.timestamp.hour() as f64 + self.timestamp.minute() as f64 / 60.0
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct WeatherCsvRow {
    timestamp: String,
    t_out_c: f64,
    rh_out: f64,
    ghi_kw_m2: f64,
    wind_m_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lead_time_h: Option<f64>,
}

pub fn read_weather_csv(path: &Path) -> Result<Vec<WeatherRecord>, ForecastError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<WeatherCsvRow>().enumerate() {
        let row = row?;
        let timestamp = parse_timestamp(&row.timestamp).ok_or_else(|| ForecastError::Schema {
            row: i + 2,
            message: format!("bad timestamp `{}`", row.timestamp),
        })?;
        if !(0.0..=1.0).contains(&row.rh_out) || row.ghi_kw_m2 < 0.0 || row.wind_m_s < 0.0 {
            return Err(ForecastError::Schema { row: i + 2, message: "value out of range".into() });
        }
        out.push(WeatherRecord {
            timestamp,
            t_out: row.t_out_c,
            rh_out: row.rh_out,
            i_solar: row.ghi_kw_m2,
            wind: row.wind_m_s,
        });
    }
    Ok(out)
}

pub fn write_weather_csv(path: &Path, weather: &[WeatherRecord]) -> Result<(), ForecastError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in weather {
        w.serialize(WeatherCsvRow {
            timestamp: r.timestamp.format(TIMESTAMP_FORMAT).to_string(),
            t_out_c: r.t_out,
            rh_out: r.rh_out,
            ghi_kw_m2: r.i_solar,
            wind_m_s: r.wind,
            lead_time_h: None,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// How hour-of-day enters the feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HourEncoding {
    /// `(sin, cos)` of the daily phase, continuous across midnight.
    #[default]
    Periodic,
    Raw,
}

/// `(rh_out, t_out, hour…, i_solar, wind)`.
pub fn weather_features(w: &WeatherRecord, encoding: HourEncoding) -> Vec<f64> {
    let h = w.hour_of_day();
    match encoding {
        HourEncoding::Periodic => {
            let phase = TAU * h / 24.0;
            vec![w.rh_out, w.t_out, phase.sin(), phase.cos(), w.i_solar, w.wind]
        }
        HourEncoding::Raw => vec![w.rh_out, w.t_out, h, w.i_solar, w.wind],
    }
}

/// GP regression from weather features to a scalar target.
#[derive(Debug, Clone)]
pub struct WeatherGpr {
    pub model: GprModel,
    pub encoding: HourEncoding,
}

impl WeatherGpr {
    pub fn fit(weather: &[WeatherRecord], targets: &[f64], encoding: HourEncoding, config: &KernelConfig) -> Result<Self, ForecastError> {
        let x: Vec<Vec<f64>> = weather.iter().map(|w| weather_features(w, encoding)).collect();
        Ok(Self { model: gpr_fit(&x, targets, config)?, encoding })
    }

    pub fn predict(&self, w: &WeatherRecord) -> Result<(f64, f64), GprError> {
        self.model.predict(&weather_features(w, self.encoding))
    }

    pub fn predict_series(&self, horizon: &[WeatherRecord]) -> Result<Vec<f64>, ForecastError> {
        horizon
            .iter()
            .enumerate()
            .map(|(step, w)| self.predict(w).map(|(m, _)| m).map_err(|source| ForecastError::Gpr { step, source }))
            .collect()
    }
}

/// Predicts the exogenous thermal power over a horizon.
pub trait ExogenousPredictor: Send + Sync {
    fn predict_qe(&self, horizon: &[WeatherRecord]) -> Result<Vec<f64>, ForecastError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantQe(pub f64);

impl Default for ConstantQe {
    fn default() -> Self {
        Self(DEFAULT_CONSTANT_QE)
    }
}

impl ExogenousPredictor for ConstantQe {
    fn predict_qe(&self, horizon: &[WeatherRecord]) -> Result<Vec<f64>, ForecastError> {
        Ok(vec![self.0; horizon.len()])
    }
}

/// GP on weather features trained on identified residuals.
#[derive(Debug, Clone, Default)]
pub struct GprQe {
    model: Option<WeatherGpr>,
}

impl GprQe {
    pub fn untrained() -> Self {
        Self { model: None }
    }

    pub fn train(weather: &[WeatherRecord], qe_series: &[f64], encoding: HourEncoding, config: &KernelConfig) -> Result<Self, ForecastError> {
        Ok(Self { model: Some(WeatherGpr::fit(weather, qe_series, encoding, config)?) })
    }
}

impl ExogenousPredictor for GprQe {
    fn predict_qe(&self, horizon: &[WeatherRecord]) -> Result<Vec<f64>, ForecastError> {
        self.model.as_ref().ok_or(ForecastError::Untrained)?.predict_series(horizon)
    }
}

/// Per-step optimizer inputs over the prediction horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastBundle {
    pub dt_h: f64,
    pub start: NaiveDateTime,
    /// Identified envelope dynamics (`α`, `R`) the forecast was built against.
    pub alpha: f64,
    pub r_eff: f64,
    pub formulation: Formulation,
    pub t_out: Vec<f64>,
    pub t_eq: Vec<f64>,
    pub q_e: Vec<f64>,
    pub cop: Vec<f64>,
    pub shr: Vec<f64>,
    /// `None` marks an unbounded step.
    pub p_lim: Vec<Option<f64>>,
    /// Forecast return-air wet-bulb, when a wet-bulb model was supplied.
    pub t_wb: Option<Vec<f64>>,
}

impl ForecastBundle {
    pub fn len(&self) -> usize {
        self.t_eq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_eq.is_empty()
    }

    pub fn start_hour(&self) -> u32 {
        self.start.hour()
    }

    pub fn is_consistent(&self) -> bool {
        let n = self.len();
        [self.t_out.len(), self.q_e.len(), self.cop.len(), self.shr.len(), self.p_lim.len()]
            .iter()
            .all(|&l| l == n)
            && self.t_wb.as_ref().is_none_or(|v| v.len() == n)
            && self.shr.iter().all(|&s| s > 0.0 && s <= 1.0)
            && self.cop.iter().all(|&c| c > 0.0)
            && self.p_lim.iter().all(|p| p.is_none_or(|v| v > 0.0))
            && (0.0..1.0).contains(&self.alpha)
            && self.r_eff > 0.0
    }
}

pub struct BundleInputs<'a> {
    pub envelope: &'a ThermalCircuitParams,
    pub equipment: &'a EquipmentModel,
    pub wet_bulb: Option<&'a WeatherGpr>,
    pub qe: &'a dyn ExogenousPredictor,
    pub schedule: &'a PowerLimitSchedule,
    pub dt_h: f64,
}

/// Builds the optimizer inputs for `horizon` under a formulation.
pub fn assemble_bundle(horizon: &[WeatherRecord], inputs: &BundleInputs, form: Formulation) -> Result<ForecastBundle, ForecastError> {
    if horizon.is_empty() {
        return Err(ForecastError::EmptyHorizon);
    }
    if form == Formulation::Latent && inputs.wet_bulb.is_none() {
        return Err(ForecastError::MissingWetBulbModel);
    }
    let t_wb = inputs.wet_bulb.map(|m| m.predict_series(horizon)).transpose()?;
    let q_e = inputs.qe.predict_qe(horizon)?;
    let mut cop = Vec::with_capacity(horizon.len());
    let mut shr = Vec::with_capacity(horizon.len());
    for (step, w) in horizon.iter().enumerate() {
        let wb = t_wb.as_ref().map(|v| v[step]);
        let (c, s) = inputs
            .equipment
            .predict(form, w.t_out, wb)
            .map_err(|source| ForecastError::Equipment { step, source })?;
        cop.push(c);
        shr.push(s);
    }
    Ok(ForecastBundle {
        dt_h: inputs.dt_h,
        start: horizon[0].timestamp,
        alpha: inputs.envelope.alpha,
        r_eff: inputs.envelope.r_eff,
        formulation: form,
        t_out: horizon.iter().map(|w| w.t_out).collect(),
        t_eq: horizon.iter().map(|w| equivalent_boundary(w.t_out, inputs.envelope)).collect(),
        q_e,
        cop,
        shr,
        p_lim: horizon.iter().map(|w| inputs.schedule.limit_at(w.timestamp.hour())).collect(),
        t_wb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equipment::CONSTANT_SHR;
    use chrono::{Duration, NaiveDate};

    pub(crate) fn horizon(t_mean: f64, rh: f64) -> Vec<WeatherRecord> {
        let start = NaiveDate::from_ymd_opt(2023, 7, 20).unwrap().and_hms_opt(0, 0, 0).unwrap();
        (0..24)
            .map(|k| {
                let h = k as f64;
                WeatherRecord {
                    timestamp: start + Duration::hours(k),
                    t_out: t_mean + 5.0 * (TAU * (h - 15.0) / 24.0).cos(),
                    rh_out: rh,
                    i_solar: (0.8 * (std::f64::consts::PI * (h - 6.0) / 14.0).sin()).max(0.0),
                    wind: 2.0,
                }
            })
            .collect()
    }

    #[test]
    fn constant_qe_fallback() {
        let h = horizon(28.0, 0.6);
        assert_eq!(ConstantQe::default().predict_qe(&h).unwrap(), vec![3.4; 24]);
        assert!(matches!(GprQe::untrained().predict_qe(&h), Err(ForecastError::Untrained)));
    }

    #[test]
    fn gpr_qe_with_constant_targets_predicts_constant() {
        let h = horizon(28.0, 0.6);
        let qe = GprQe::train(&h, &[2.5; 24], HourEncoding::Periodic, &KernelConfig::default()).unwrap();
        for v in qe.predict_qe(&horizon(25.0, 0.5)).unwrap() {
            assert!((v - 2.5).abs() < 1e-9);
        }
    }

    #[test]
    fn gpr_qe_reproduces_training_residuals() {
        let h = horizon(28.0, 0.6);
        let targets: Vec<f64> = (0..24).map(|k| 1.0 + (k as f64 / 3.0).sin()).collect();
        let config = KernelConfig { noise_var: Some(1e-10), search: false, length_scales: Some(vec![0.3; 6]), ..KernelConfig::default() };
        let qe = GprQe::train(&h, &targets, HourEncoding::Periodic, &config).unwrap();
        let pred = qe.predict_qe(&h).unwrap();
        for (p, t) in pred.iter().zip(&targets) {
            assert!((p - t).abs() < 1e-4, "{p} vs {t}");
        }
    }

    #[test]
    fn periodic_encoding_is_continuous_at_midnight() {
        let mut a = horizon(25.0, 0.5)[0];
        a.timestamp -= Duration::minutes(1);
        let b = horizon(25.0, 0.5)[0];
        let fa = weather_features(&a, HourEncoding::Periodic);
        let fb = weather_features(&b, HourEncoding::Periodic);
        assert!((fa[2] - fb[2]).abs() < 1e-2 && (fa[3] - fb[3]).abs() < 1e-2);
        assert_eq!(weather_features(&b, HourEncoding::Raw).len(), 5);
    }

    #[test]
    fn sensible_bundle_has_constant_shr_and_limit_window() {
        let params = ThermalCircuitParams::new(0.86, 1.3, 5.2, 20.0).unwrap();
        let equipment = EquipmentModel::fixture();
        let schedule = PowerLimitSchedule::default();
        let inputs = BundleInputs { envelope: &params, equipment: &equipment, wet_bulb: None, qe: &ConstantQe::default(), schedule: &schedule, dt_h: 1.0 };
        let b = assemble_bundle(&horizon(28.0, 0.6), &inputs, Formulation::Sensible).unwrap();
        assert!(b.is_consistent());
        assert!(b.shr.iter().all(|&s| s == CONSTANT_SHR));
        for (k, p) in b.p_lim.iter().enumerate() {
            if (16..20).contains(&k) {
                assert_eq!(*p, Some(2.5));
            } else {
                assert_eq!(*p, None);
            }
        }
        assert!(matches!(
            assemble_bundle(&horizon(28.0, 0.6), &inputs, Formulation::Latent),
            Err(ForecastError::MissingWetBulbModel)
        ));
    }
}
