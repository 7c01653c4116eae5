//! Psychrometric conversions and Fanger PMV/PPD comfort evaluation.
//!
//! All temperatures are in °C and relative humidity is a fraction in `[0, 1]`.
//! Moist-air properties assume standard atmospheric pressure.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::telemetry::TelemetryLog;

/// Standard atmospheric pressure (Pa).
pub const STANDARD_PRESSURE_PA: f64 = 101_325.0;

/// Ratio of molar masses of water vapour and dry air.
const EPSILON_WATER: f64 = 0.621_945;

/// Upper PPD threshold considered acceptable for comfort reporting (%).
pub const PPD_ACCEPTABLE: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PsychroError {
    #[error("{field} = {value} is outside the valid range [{min}, {max}]")]
    Domain {
        field: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("clothing surface temperature did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("telemetry log is empty")]
    EmptyLog,
    #[error("telemetry log has a non-uniform time step at record {index}")]
    NonUniformStep { index: usize },
}

fn check_range(field: &'static str, value: f64, min: f64, max: f64) -> Result<(), PsychroError> {
    if value.is_finite() && value >= min && value <= max {
        Ok(())
    } else {
        Err(PsychroError::Domain {
            field,
            value,
            min,
            max,
        })
    }
}

/// Dry-bulb temperature and relative humidity, with the derived wet-bulb.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoistAirState {
    pub t_db: f64,
    pub rh: f64,
    pub t_wb: f64,
}

impl MoistAirState {
    pub fn new(t_db: f64, rh: f64) -> Result<Self, PsychroError> {
        let t_wb = wet_bulb(t_db, rh)?;
        Ok(Self { t_db, rh, t_wb })
    }

    pub fn humidity_ratio(&self) -> f64 {
        humidity_ratio(self.t_db, self.rh)
    }
}

/// Wet-bulb temperature from Stull's (2011) regression at standard pressure.
///
/// Accurate to roughly ±0.35 °C over the valid domain. At saturation the
/// regression can exceed the dry-bulb by a few tenths of a degree.
pub fn wet_bulb(t_db: f64, rh: f64) -> Result<f64, PsychroError> {
    check_range("t_db", t_db, -20.0, 50.0)?;
    check_range("rh", rh, 0.05, 1.0)?;
    Ok(stull(t_db, rh * 100.0))
}

fn stull(t: f64, rh_pct: f64) -> f64 {
    t * (0.151_977 * (rh_pct + 8.313_659).sqrt()).atan() + (t + rh_pct).atan()
        - (rh_pct - 1.676_331).atan()
        + 0.003_918_38 * rh_pct.powf(1.5) * (0.023_101 * rh_pct).atan()
        - 4.686_035
}

/// Inverts [`wet_bulb`] for relative humidity at a given dry-bulb.
///
/// The result is clamped to `[0.05, 1]`, the domain of the regression.
pub fn rh_from_wet_bulb(t_db: f64, t_wb: f64) -> Result<f64, PsychroError> {
    check_range("t_db", t_db, -20.0, 50.0)?;
    let lo_wb = stull(t_db, 5.0);
    let hi_wb = stull(t_db, 100.0);
    if t_wb <= lo_wb {
        return Ok(0.05);
    }
    if t_wb >= hi_wb {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (5.0, 100.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if stull(t_db, mid) < t_wb {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi) / 100.0)
}

/// Saturation vapour pressure over water (Pa), Magnus form.
pub fn saturation_pressure(t: f64) -> f64 {
    610.94 * (17.625 * t / (t + 243.04)).exp()
}

/// Humidity ratio (kg water / kg dry air) at standard pressure.
pub fn humidity_ratio(t_db: f64, rh: f64) -> f64 {
    let pv = rh * saturation_pressure(t_db);
    EPSILON_WATER * pv / (STANDARD_PRESSURE_PA - pv)
}

/// Relative humidity from a humidity ratio, not clamped.
pub fn rh_from_humidity_ratio(t_db: f64, w: f64) -> f64 {
    let pv = w * STANDARD_PRESSURE_PA / (EPSILON_WATER + w);
    pv / saturation_pressure(t_db)
}

/// Dewpoint (°C) of air at the given state, inverting the Magnus form.
pub fn dewpoint(t_db: f64, rh: f64) -> f64 {
    let gamma = (rh.max(1e-6)).ln() + 17.625 * t_db / (t_db + 243.04);
    243.04 * gamma / (17.625 - gamma)
}

/// Inputs to the Fanger heat-balance model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComfortInputs {
    pub t_db: f64,
    /// Mean radiant temperature (°C).
    pub t_r: f64,
    pub rh: f64,
    /// Relative air speed (m/s).
    pub v_air: f64,
    /// Metabolic rate (met).
    pub met: f64,
    /// Clothing insulation (clo).
    pub clo: f64,
}

/// Assumptions held fixed when only dry-bulb and humidity are measured.
///
/// Mean radiant temperature is taken equal to the air temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComfortAssumptions {
    pub v_air: f64,
    pub met: f64,
    pub clo: f64,
    /// Humidity used when a log carries no humidity channel.
    pub fallback_rh: f64,
}

impl Default for ComfortAssumptions {
    fn default() -> Self {
        Self {
            v_air: 0.1,
            met: 1.2,
            clo: 0.6,
            fallback_rh: 0.5,
        }
    }
}

impl ComfortAssumptions {
    pub fn inputs(&self, t_db: f64, rh: f64) -> ComfortInputs {
        ComfortInputs {
            t_db,
            t_r: t_db,
            rh,
            v_air: self.v_air,
            met: self.met,
            clo: self.clo,
        }
    }

    /// PPD of air at `t_db`/`rh` under these assumptions.
    pub fn ppd_at(&self, t_db: f64, rh: f64) -> Result<f64, PsychroError> {
        Ok(ppd(pmv(&self.inputs(t_db, rh))?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComfortResult {
    pub pmv: f64,
    pub ppd: f64,
}

const PMV_MAX_ITERATIONS: usize = 150;
const PMV_TOLERANCE_C: f64 = 1e-5;

/// Predicted mean vote from the ISO 7730 Fanger model.
pub fn pmv(inputs: &ComfortInputs) -> Result<f64, PsychroError> {
    let ComfortInputs {
        t_db: ta,
        t_r: tr,
        rh,
        v_air,
        met,
        clo,
    } = *inputs;
    check_range("t_db", ta, -20.0, 60.0)?;
    check_range("t_r", tr, -20.0, 80.0)?;
    check_range("rh", rh, 0.0, 1.0)?;
    check_range("v_air", v_air, 0.0, 10.0)?;
    check_range("met", met, 1e-6, 10.0)?;
    check_range("clo", clo, 0.0, 5.0)?;

    // water vapour partial pressure (Pa)
    let pa = rh * 1000.0 * (16.6536 - 4030.183 / (ta + 235.0)).exp();
    let icl = 0.155 * clo;
    let m = met * 58.15;
    let mw = m; // no external work
    let fcl = if icl <= 0.078 {
        1.0 + 1.29 * icl
    } else {
        1.05 + 0.645 * icl
    };
    let hcf = 12.1 * v_air.sqrt();
    let taa = ta + 273.0;
    let tra = tr + 273.0;

    let p1 = icl * fcl;
    let p2 = p1 * 3.96;
    let p3 = p1 * 100.0;
    let p4 = p1 * taa;
    let p5 = 308.7 - 0.028 * mw + p2 * (tra / 100.0).powi(4);

    // Damped fixed point on the clothing surface temperature (scaled by 1/100 K).
    let tcla = taa + (35.5 - ta) / (3.5 * icl + 0.1);
    let mut xn = tcla / 100.0;
    let mut xf = tcla / 50.0;
    let mut hc = hcf;
    let mut iterations = 0;
    while (xn - xf).abs() * 100.0 > PMV_TOLERANCE_C {
        if iterations == PMV_MAX_ITERATIONS {
            return Err(PsychroError::NoConvergence { iterations });
        }
        xf = 0.5 * (xf + xn);
        let hcn = 2.38 * (100.0 * xf - taa).abs().powf(0.25);
        hc = hcf.max(hcn);
        xn = (p5 + p4 * hc - p2 * xf.powi(4)) / (100.0 + p3 * hc);
        iterations += 1;
    }
    let tcl = 100.0 * xn - 273.0;

    let hl1 = 3.05e-3 * (5733.0 - 6.99 * mw - pa);
    let hl2 = if mw > 58.15 { 0.42 * (mw - 58.15) } else { 0.0 };
    let hl3 = 1.7e-5 * m * (5867.0 - pa);
    let hl4 = 0.0014 * m * (34.0 - ta);
    let hl5 = 3.96 * fcl * (xn.powi(4) - (tra / 100.0).powi(4));
    let hl6 = fcl * hc * (tcl - ta);

    let ts = 0.303 * (-0.036 * m).exp() + 0.028;
    Ok(ts * (mw - hl1 - hl2 - hl3 - hl4 - hl5 - hl6))
}

/// Predicted percentage dissatisfied (%), closed form in PMV.
pub fn ppd(pmv: f64) -> f64 {
    let p2 = pmv * pmv;
    100.0 - 95.0 * (-(0.03353 * p2 * p2 + 0.2179 * p2)).exp()
}

pub fn comfort(inputs: &ComfortInputs) -> Result<ComfortResult, PsychroError> {
    let pmv = pmv(inputs)?;
    Ok(ComfortResult { pmv, ppd: ppd(pmv) })
}

/// Per-step comfort over a telemetry log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComfortSeries {
    pub results: Vec<ComfortResult>,
    pub mean_ppd: f64,
    /// Total hours with PPD above [`PPD_ACCEPTABLE`].
    pub hours_above_threshold: f64,
    /// True when the log had no humidity channel and `fallback_rh` was used.
    pub used_fallback_rh: bool,
}

pub fn comfort_series(
    log: &TelemetryLog,
    assumptions: &ComfortAssumptions,
) -> Result<ComfortSeries, PsychroError> {
    if log.records.is_empty() {
        return Err(PsychroError::EmptyLog);
    }
    let dt_h = log.uniform_step_hours().map_err(|index| PsychroError::NonUniformStep { index })?;
    let used_fallback_rh = log.records.iter().any(|r| r.rh_in.is_none());
    let mut results = Vec::with_capacity(log.records.len());
    for rec in &log.records {
        let rh = rec.rh_in.unwrap_or(assumptions.fallback_rh);
        results.push(comfort(&assumptions.inputs(rec.t_in, rh))?);
    }
    let mean_ppd = results.iter().map(|r| r.ppd).sum::<f64>() / results.len() as f64;
    let hours_above_threshold =
        results.iter().filter(|r| r.ppd > PPD_ACCEPTABLE).count() as f64 * dt_h;
    Ok(ComfortSeries {
        results,
        mean_ppd,
        hours_above_threshold,
        used_fallback_rh,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn wet_bulb_saturated_matches_dry_bulb() {
        assert_abs_diff_eq!(wet_bulb(20.0, 1.0).unwrap(), 20.0, epsilon = 0.4);
    }

    #[test]
    fn wet_bulb_matches_hand_evaluation() {
        // one-off evaluation of the comfort regression
        assert_abs_diff_eq!(wet_bulb(20.0, 0.5).unwrap(), 13.699_341_968_988_136, epsilon = 1e-9);
        let humid = wet_bulb(24.0, 1.0).unwrap();
        let half = wet_bulb(24.0, 0.5).unwrap();
        assert_abs_diff_eq!(half, 17.138_396_660_611_84, epsilon = 1e-9);
        assert!(half < humid);
    }

    #[test]
    fn wet_bulb_domain_errors_name_the_field() {
        match wet_bulb(55.0, 0.5) {
            Err(PsychroError::Domain { field, .. }) => assert_eq!(field, "t_db"),
            other => panic!("unexpected {other:?}"),
        }
        match wet_bulb(20.0, 0.01) {
            Err(PsychroError::Domain { field, .. }) => assert_eq!(field, "rh"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wet_bulb_inverse_round_trips() {
        for &(t, rh) in &[(24.0, 0.55), (30.0, 0.3), (18.0, 0.9)] {
            let wb = wet_bulb(t, rh).unwrap();
            assert_abs_diff_eq!(rh_from_wet_bulb(t, wb).unwrap(), rh, epsilon = 1e-9);
        }
    }

    #[test]
    fn humidity_ratio_round_trip() {
        let w = humidity_ratio(24.0, 0.6);
        assert!((0.010..0.012).contains(&w));
        assert_abs_diff_eq!(rh_from_humidity_ratio(24.0, w), 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(dewpoint(20.0, 1.0), 20.0, epsilon = 1e-9);
    }

    #[test]
    fn pmv_iso_7730_validation_rows() {
        // ISO 7730 Annex D: (ta, tr, va, rh %, met, clo) -> PMV
        let rows = [
            (22.0, 22.0, 0.1, 60.0, 1.2, 0.5, -0.75),
            (27.0, 27.0, 0.1, 60.0, 1.2, 0.5, 0.77),
            (23.5, 25.5, 0.1, 60.0, 1.2, 0.5, -0.01),
            (19.0, 19.0, 0.1, 40.0, 1.2, 1.0, -0.60),
        ];
        for (ta, tr, va, rh, met, clo, expected) in rows {
            let got = pmv(&ComfortInputs {
                t_db: ta,
                t_r: tr,
                rh: rh / 100.0,
                v_air: va,
                met,
                clo,
            })
            .unwrap();
            assert_abs_diff_eq!(got, expected, epsilon = 0.1);
        }
    }

    #[test]
    fn pmv_is_zero_at_the_neutral_temperature() {
        let a = ComfortAssumptions::default();
        let f = |t: f64| pmv(&a.inputs(t, 0.5)).unwrap();
        let (mut lo, mut hi) = (15.0, 35.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let neutral = 0.5 * (lo + hi);
        assert_abs_diff_eq!(f(neutral), 0.0, epsilon = 1e-9);
        assert!(f(neutral - 5.0) < 0.0 && f(neutral + 5.0) > 0.0);
        assert_abs_diff_eq!(ppd(f(neutral)), 5.0, epsilon = 1e-9);
    }

    #[test]
    fn pmv_increases_with_air_temperature() {
        let a = ComfortAssumptions::default();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=60 {
            let t = 16.0 + 0.25 * i as f64;
            let v = pmv(&a.inputs(t, 0.5)).unwrap();
            assert!(v > prev, "pmv not increasing at {t}");
            prev = v;
        }
    }

    #[test]
    fn ppd_closed_form() {
        assert_eq!(ppd(0.0), 5.0);
        assert_abs_diff_eq!(ppd(1.0), 26.119_650_083_580_567, epsilon = 1e-9);
        for &x in &[0.1, 0.7, 1.9, 3.3] {
            assert_abs_diff_eq!(ppd(x), ppd(-x), epsilon = 1e-12);
            assert!(ppd(x) > 5.0 && ppd(x) <= 100.0);
        }
    }

    #[test]
    fn pmv_rejects_invalid_inputs() {
        let mut inputs = ComfortAssumptions::default().inputs(24.0, 0.5);
        inputs.met = 0.0;
        assert!(matches!(pmv(&inputs), Err(PsychroError::Domain { field: "met", .. })));
    }
}
