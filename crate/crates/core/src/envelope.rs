//! Discrete-time 2R1C indoor-air model and its least-squares identification.
//!
//! The indoor air node couples to the outdoor air through `r_out` and to a
//! fixed deep-mass temperature `t_m` through `r_m`. Over one control step
//!
//! ```text
//! T[k+1] = α·T[k] + (1 − α)·(T_eq[k] + R·(Q_e[k] − Q_cool[k]))
//! ```
//!
//! where `R` is the parallel combination of the two resistances and `T_eq`
//! their resistance-weighted boundary temperature. `Q_cool ≥ 0` is heat
//! extracted by the air conditioner. The capacitance only enters through `α`
//! and is not identifiable separately.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::regression::{ols, OlsFit};
use crate::telemetry::{TelemetryError, TelemetryLog};

pub const MIN_TRAINING_HOURS: usize = 48;

#[derive(Debug, Error)]
pub enum EnvelopeError {
    #[error("invalid thermal circuit parameters: {0}")]
    InvalidParams(String),
    #[error("need at least {needed} consecutive hourly records, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("regressor matrix is rank deficient; collinear columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<&'static str> },
    #[error("rejected fit: {0}")]
    RejectedFit(String),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalCircuitParams {
    pub alpha: f64,
    /// Parallel combination of `r_out` and `r_m` (°C/kW).
    pub r_eff: f64,
    pub r_out: f64,
    /// Air-to-mass resistance; `f64::INFINITY` disables the mass branch.
    pub r_m: f64,
    pub t_m: f64,
}

impl ThermalCircuitParams {
    pub fn new(alpha: f64, r_out: f64, r_m: f64, t_m: f64) -> Result<Self, EnvelopeError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(EnvelopeError::InvalidParams(format!("alpha = {alpha} outside (0, 1)")));
        }
        if !(r_out > 0.0 && r_out.is_finite()) {
            return Err(EnvelopeError::InvalidParams(format!("r_out = {r_out} must be positive")));
        }
        if !(r_m > 0.0) {
            return Err(EnvelopeError::InvalidParams(format!("r_m = {r_m} must be positive")));
        }
        if !t_m.is_finite() {
            return Err(EnvelopeError::InvalidParams("t_m must be finite".into()));
        }
        let r_eff = 1.0 / (1.0 / r_out + 1.0 / r_m);
        Ok(Self {
            alpha,
            r_eff,
            r_out,
            r_m,
            t_m,
        })
    }

    /// Single-resistance circuit with the mass branch disabled.
    pub fn lumped(alpha: f64, r: f64) -> Result<Self, EnvelopeError> {
        Self::new(alpha, r, f64::INFINITY, 0.0)
    }

    /// Weight of the outdoor temperature in [`equivalent_boundary`].
    pub fn outdoor_weight(&self) -> f64 {
        self.r_eff / self.r_out
    }

    pub fn validate(&self) -> Result<(), EnvelopeError> {
        let fresh = Self::new(self.alpha, self.r_out, self.r_m, self.t_m)?;
        if (fresh.r_eff - self.r_eff).abs() > 1e-9 * fresh.r_eff.max(1.0) {
            return Err(EnvelopeError::InvalidParams(format!(
                "r_eff = {} is not the parallel combination {}",
                self.r_eff, fresh.r_eff
            )));
        }
        Ok(())
    }
}

/// Resistance-weighted boundary temperature seen by the air node.
pub fn equivalent_boundary(t_out: f64, params: &ThermalCircuitParams) -> f64 {
    let g_out = 1.0 / params.r_out;
    let g_m = if params.r_m.is_finite() { 1.0 / params.r_m } else { 0.0 };
    if g_m == 0.0 {
        return t_out;
    }
    (t_out * g_out + params.t_m * g_m) / (g_out + g_m)
}

/// One control step of the indoor temperature.
pub fn step(params: &ThermalCircuitParams, t_k: f64, t_eq: f64, q_cool: f64, q_e: f64) -> f64 {
    params.alpha * t_k + (1.0 - params.alpha) * (t_eq + params.r_eff * (q_e - q_cool))
}

/// Which parameters [`identify`] estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ParamSpec {
    /// Estimate α, R and the outdoor/mass split with the mass temperature fixed.
    Free { t_m: f64 },
    /// Keep the given parameters and only derive residuals and errors.
    Frozen(ThermalCircuitParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentifyOptions {
    pub spec: ParamSpec,
    /// Trailing fraction of the window held out for validation.
    pub validation_fraction: f64,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        Self {
            spec: ParamSpec::Free { t_m: 20.0 },
            validation_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub params: ThermalCircuitParams,
    /// Exogenous thermal power that closes each training transition (kW).
    pub qe_series: Vec<f64>,
    pub qe_mean: f64,
    /// One-step temperature RMSE on the validation split (°C).
    pub rmse_temp: f64,
    /// Cooling-rate RMSE on the validation split (kW).
    pub rmse_cool: f64,
    pub alpha_std_err: Option<f64>,
    pub r_std_err: Option<f64>,
    pub n_train: usize,
    pub n_validation: usize,
}

const COLUMN_NAMES: [&str; 4] = ["t_in", "t_out", "q_cool", "intercept"];

struct Transition {
    t_k: f64,
    t_next: f64,
    t_out: f64,
    q_cool: f64,
}

/// Fits the 2R1C model to hourly (or finer, aggregated to hourly) telemetry.
///
/// Regresses `T[k+1]` on `(T[k], T_out[k], Q_cool[k], 1)`. The slope on
/// `T[k]` is α, the cooling slope gives R, the outdoor slope splits R into
/// `r_out` and `r_m`, and the intercept (given `t_m`) gives the mean of `Q_e`.
pub fn identify(log: &TelemetryLog, options: &IdentifyOptions) -> Result<EnvelopeFit, EnvelopeError> {
    let hourly = log.to_hourly()?;
    if hourly.len() < MIN_TRAINING_HOURS {
        return Err(EnvelopeError::InsufficientData {
            needed: MIN_TRAINING_HOURS,
            got: hourly.len(),
        });
    }
    let transitions: Vec<Transition> = hourly
        .records
        .windows(2)
        .map(|w| Transition {
            t_k: w[0].t_in,
            t_next: w[1].t_in,
            t_out: w[0].t_out,
            q_cool: w[0].q_cool_kw,
        })
        .collect();
    let n_valid = ((transitions.len() as f64) * options.validation_fraction.clamp(0.0, 0.9)).floor() as usize;
    let n_train = transitions.len() - n_valid;
    let (train, valid) = transitions.split_at(n_train);

    let (params, alpha_se, r_se) = match options.spec {
        ParamSpec::Frozen(p) => {
            p.validate()?;
            (p, None, None)
        }
        ParamSpec::Free { t_m } => {
            let (p, fit) = regress(train, t_m)?;
            let beta = 1.0 - p.alpha;
            let theta3 = -beta * p.r_eff;
            // delta method for R = −θ₃ / (1 − θ₁)
            let grad = [theta3 / (beta * beta) * -1.0, -1.0 / beta];
            let c = &fit.covariance;
            let var_r = grad[0] * grad[0] * c[(0, 0)] + 2.0 * grad[0] * grad[1] * c[(0, 2)] + grad[1] * grad[1] * c[(2, 2)];
            (p, Some(fit.std_error(0)), Some(var_r.max(0.0).sqrt()))
        }
    };

    let qe_series: Vec<f64> = train.iter().map(|tr| residual_qe(&params, tr)).collect();
    let qe_mean = qe_series.iter().sum::<f64>() / qe_series.len() as f64;
    let eval = if valid.is_empty() { train } else { valid };
    let (mut se_t, mut se_q) = (0.0, 0.0);
    for tr in eval {
        let t_eq = equivalent_boundary(tr.t_out, &params);
        let predicted = step(&params, tr.t_k, t_eq, tr.q_cool, qe_mean);
        se_t += (predicted - tr.t_next).powi(2);
        let q_pred = qe_mean - (tr.t_next - params.alpha * tr.t_k - (1.0 - params.alpha) * t_eq) / ((1.0 - params.alpha) * params.r_eff);
        se_q += (q_pred - tr.q_cool).powi(2);
    }
    let n_eval = eval.len() as f64;
    Ok(EnvelopeFit {
        params,
        qe_series,
        qe_mean,
        rmse_temp: (se_t / n_eval).sqrt(),
        rmse_cool: (se_q / n_eval).sqrt(),
        alpha_std_err: alpha_se,
        r_std_err: r_se,
        n_train,
        n_validation: n_valid,
    })
}

fn residual_qe(p: &ThermalCircuitParams, tr: &Transition) -> f64 {
    let beta = 1.0 - p.alpha;
    let t_eq = equivalent_boundary(tr.t_out, p);
    (tr.t_next - p.alpha * tr.t_k - beta * t_eq) / (beta * p.r_eff) + tr.q_cool
}

fn regress(train: &[Transition], t_m: f64) -> Result<(ThermalCircuitParams, OlsFit), EnvelopeError> {
    let n = train.len();
    let mut x = DMatrix::zeros(n, 4);
    let mut y = DVector::zeros(n);
    for (i, tr) in train.iter().enumerate() {
        x[(i, 0)] = tr.t_k;
        x[(i, 1)] = tr.t_out;
        x[(i, 2)] = tr.q_cool;
        x[(i, 3)] = 1.0;
        y[i] = tr.t_next;
    }
    let fit = ols(&x, &y).map_err(|e| EnvelopeError::RankDeficient {
        columns: e.columns.iter().map(|&j| COLUMN_NAMES[j]).collect(),
    })?;
    let alpha = fit.coef[0];
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EnvelopeError::RejectedFit(format!(
            "alpha = {alpha:.6} outside (0, 1); the window may lack temperature dynamics"
        )));
    }
    let beta = 1.0 - alpha;
    let r = -fit.coef[2] / beta;
    if !(r > 0.0) {
        return Err(EnvelopeError::RejectedFit(format!(
            "cooling coefficient {:.6} implies non-positive resistance",
            fit.coef[2]
        )));
    }
    let w = fit.coef[1] / beta;
    if !(w > 0.0) {
        return Err(EnvelopeError::RejectedFit(format!("outdoor weight {w:.6} must be positive")));
    }
    let (r_out, r_m) = if w >= 1.0 - 1e-12 {
        (r, f64::INFINITY)
    } else {
        (r / w, r / (1.0 - w))
    };
    let params = ThermalCircuitParams::new(alpha, r_out, r_m, t_m)?;
    Ok((params, fit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::TelemetryRecord;
    use approx::assert_abs_diff_eq;
    use chrono::{Duration, NaiveDate};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn params() -> ThermalCircuitParams {
        ThermalCircuitParams::new(0.86, 1.3, 5.2, 20.0).unwrap()
    }

    #[test]
    fn equivalent_boundary_examples() {
        let equal = ThermalCircuitParams::new(0.5, 2.0, 2.0, 20.0).unwrap();
        assert_abs_diff_eq!(equivalent_boundary(30.0, &equal), 25.0, epsilon = 1e-12);
        let lumped = ThermalCircuitParams::lumped(0.5, 2.0).unwrap();
        assert_eq!(equivalent_boundary(30.0, &lumped), 30.0);
        let p = ThermalCircuitParams::new(0.5, 1.3, 5.2, 21.0).unwrap();
        assert_abs_diff_eq!(equivalent_boundary(32.0, &p), 29.8, epsilon = 1e-12);
        assert_abs_diff_eq!(p.r_eff, 1.04, epsilon = 1e-12);
    }

    #[test]
    fn step_examples() {
        let p = params();
        assert_abs_diff_eq!(step(&p, 27.0, 27.0, 0.0, 0.0), 27.0, epsilon = 1e-12);
        // α = 0.86, R = 1.04
        assert_abs_diff_eq!(step(&p, 23.0, 30.0, 3.0, 0.0), 23.5432, epsilon = 1e-12);
        let recal = ThermalCircuitParams::lumped(0.77, 0.42).unwrap();
        let (t_k, t_eq, q_e) = (24.0, 31.0, 3.4);
        let q_hold = q_e + (t_eq - t_k) / recal.r_eff;
        assert_abs_diff_eq!(step(&recal, t_k, t_eq, q_hold, q_e), t_k, epsilon = 1e-12);
    }

    #[test]
    fn free_response_decays_geometrically() {
        let p = params();
        let mut t = 30.0;
        for k in 1..=40 {
            t = step(&p, t, 22.0, 0.0, 0.0);
            assert_abs_diff_eq!((t - 22.0).abs(), p.alpha.powi(k) * 8.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(ThermalCircuitParams::new(1.0, 1.0, 1.0, 20.0).is_err());
        assert!(ThermalCircuitParams::new(0.5, -1.0, 1.0, 20.0).is_err());
        let mut p = params();
        p.r_eff = 2.0;
        assert!(p.validate().is_err());
    }

    pub(crate) fn synthetic_log(p: &ThermalCircuitParams, hours: usize, q_e: f64, noise: f64, seed: u64) -> TelemetryLog {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = NaiveDate::from_ymd_opt(2023, 6, 20).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let mut t = 24.0;
        let mut recs = Vec::with_capacity(hours);
        for k in 0..hours {
            let hour = (k % 24) as f64;
            let t_out = 27.0 + 6.0 * ((hour - 15.0) / 24.0 * std::f64::consts::TAU).cos() + rng.random_range(-1.0..1.0);
            let q_cool = (rng.random_range(0.0..8.0_f64)).max(0.0);
            recs.push(TelemetryRecord::new(start + Duration::hours(k as i64), t, t_out, q_cool, q_cool / 4.0));
            let eps: f64 = rng.sample(StandardNormal);
            t = step(p, t, equivalent_boundary(t_out, p), q_cool, q_e) + noise * eps;
        }
        TelemetryLog::new(recs)
    }

    #[test]
    fn identify_recovers_noiseless_parameters() {
        let truth = params();
        let log = synthetic_log(&truth, 240, 1.5, 0.0, 7);
        let fit = identify(&log, &IdentifyOptions { spec: ParamSpec::Free { t_m: 20.0 }, validation_fraction: 0.25 }).unwrap();
        assert!(((fit.params.alpha - truth.alpha) / truth.alpha).abs() < 1e-6);
        assert!(((fit.params.r_eff - truth.r_eff) / truth.r_eff).abs() < 1e-6);
        assert!(((fit.params.r_out - truth.r_out) / truth.r_out).abs() < 1e-6);
        assert_abs_diff_eq!(fit.qe_mean, 1.5, epsilon = 1e-6);
        assert!(fit.rmse_temp < 1e-8);
        assert_eq!(fit.qe_series.len(), fit.n_train);
    }

    #[test]
    fn identify_rejects_constant_telemetry() {
        let start = NaiveDate::from_ymd_opt(2023, 6, 20).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let recs = (0..72)
            .map(|k| TelemetryRecord::new(start + Duration::hours(k), 23.0, 23.0 + (k % 5) as f64, 0.0, 0.0))
            .collect();
        let err = identify(&TelemetryLog::new(recs), &IdentifyOptions::default()).unwrap_err();
        match err {
            EnvelopeError::RankDeficient { columns } => assert!(columns.contains(&"q_cool"), "{columns:?}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn identify_requires_two_days() {
        let log = synthetic_log(&params(), 30, 0.0, 0.0, 1);
        assert!(matches!(
            identify(&log, &IdentifyOptions::default()),
            Err(EnvelopeError::InsufficientData { got: 30, .. })
        ));
    }

    #[test]
    fn frozen_params_are_echoed() {
        let frozen = ThermalCircuitParams::lumped(0.77, 0.42).unwrap();
        let log = synthetic_log(&params(), 96, 1.0, 0.05, 3);
        let fit = identify(&log, &IdentifyOptions { spec: ParamSpec::Frozen(frozen), validation_fraction: 0.25 }).unwrap();
        assert_eq!(fit.params, frozen);
        assert!(fit.alpha_std_err.is_none());
        assert!(fit.rmse_temp.is_finite());
    }
}
