use chrono::{Duration, NaiveDate};
use latentmpc::envelope::{identify, EnvelopeError, IdentifyOptions, ParamSpec, ThermalCircuitParams};
use latentmpc::telemetry::{TelemetryLog, TelemetryRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const ALPHA: f64 = 0.84;
const R_OUT: f64 = 0.9;
const R_M: f64 = 6.0;
const T_M: f64 = 19.0;

/// Hourly telemetry from the discrete circuit written out by hand:
/// `T+ = αT + (1−α)(w·T_out + (1−w)·T_m + R(q_e − q))` with `w = R/R_out`.
fn telemetry(hours: usize, q_e: f64, noise: f64, seed: u64) -> TelemetryLog {
    let r = 1.0 / (1.0 / R_OUT + 1.0 / R_M);
    let w = r / R_OUT;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = NaiveDate::from_ymd_opt(2023, 8, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let mut t = 23.5;
    let mut recs = Vec::with_capacity(hours);
    for k in 0..hours {
        let t_out = 28.0 + 5.0 * ((k % 24) as f64 / 24.0 * std::f64::consts::TAU).sin() + rng.random_range(-1.5..1.5);
        let q = rng.random_range(0.0..7.0);
        recs.push(TelemetryRecord::new(start + Duration::hours(k as i64), t, t_out, q, q / 3.5));
        let eps: f64 = rng.sample(StandardNormal);
        t = ALPHA * t + (1.0 - ALPHA) * (w * t_out + (1.0 - w) * T_M + r * (q_e - q)) + noise * eps;
    }
    TelemetryLog::new(recs)
}

fn free() -> IdentifyOptions {
    IdentifyOptions { spec: ParamSpec::Free { t_m: T_M }, validation_fraction: 0.25 }
}

fn r_true() -> f64 {
    1.0 / (1.0 / R_OUT + 1.0 / R_M)
}

#[test]
fn noiseless_round_trip_is_exact() {
    let fit = identify(&telemetry(24 * 10, 2.0, 0.0, 11), &free()).unwrap();
    assert!(((fit.params.alpha - ALPHA) / ALPHA).abs() < 1e-6);
    assert!(((fit.params.r_eff - r_true()) / r_true()).abs() < 1e-6);
    assert!(((fit.params.r_out - R_OUT) / R_OUT).abs() < 1e-6);
    assert!((fit.qe_mean - 2.0).abs() < 1e-6);
}

/// Each of 50 seeds gives an estimate and its standard error. The seed-mean
/// must sit within three standard errors of the mean of the truth, and at
/// least 48 of 50 individual estimates within three of their own errors; no
/// estimate may stray beyond four.
#[test]
fn noisy_round_trip_within_three_standard_errors() {
    let mut alpha = Vec::new();
    let mut r = Vec::new();
    for seed in 0..50 {
        let fit = identify(&telemetry(24 * 28, 2.0, 0.1, seed), &free()).unwrap();
        let (sa, sr) = (fit.alpha_std_err.unwrap(), fit.r_std_err.unwrap());
        assert!(sa > 0.0 && sr > 0.0);
        alpha.push((fit.params.alpha, sa));
        r.push((fit.params.r_eff, sr));
    }
    for (name, est, truth) in [("alpha", &alpha, ALPHA), ("R", &r, r_true())] {
        let n = est.len() as f64;
        let mean = est.iter().map(|e| e.0).sum::<f64>() / n;
        let sd = (est.iter().map(|e| (e.0 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((mean - truth).abs() <= 3.0 * sd / n.sqrt(), "{name}: mean {mean} vs {truth}");
        let z: Vec<f64> = est.iter().map(|(v, se)| ((v - truth) / se).abs()).collect();
        assert!(z.iter().filter(|&&z| z <= 3.0).count() >= 48, "{name}: {z:?}");
        assert!(z.iter().all(|&z| z <= 4.0), "{name}: {z:?}");
    }
}

#[test]
fn residual_series_recovers_constant_gain() {
    let fit = identify(&telemetry(24 * 4, -0.7, 0.0, 5), &free()).unwrap();
    assert!(fit.qe_series.iter().all(|q| (q + 0.7).abs() < 1e-6));
}

#[test]
fn frozen_reference_values_are_echoed() {
    let frozen = ThermalCircuitParams::lumped(0.77, 0.42).unwrap();
    let fit = identify(&telemetry(72, 1.0, 0.05, 2), &IdentifyOptions { spec: ParamSpec::Frozen(frozen), validation_fraction: 0.25 }).unwrap();
    assert_eq!(fit.params.alpha, 0.77);
    assert_eq!(fit.params.r_eff, 0.42);
}

#[test]
fn short_and_empty_windows_are_rejected() {
    assert!(matches!(identify(&telemetry(47, 1.0, 0.0, 1), &free()), Err(EnvelopeError::InsufficientData { .. })));
    assert!(identify(&TelemetryLog::default(), &free()).is_err());
}

#[test]
fn sub_hourly_logs_are_aggregated() {
    let hourly = telemetry(24 * 5, 1.0, 0.0, 9);
    let mut fine = Vec::new();
    for r in &hourly.records {
        for m in 0..12 {
            let mut x = r.clone();
            x.timestamp += Duration::minutes(5 * m);
            fine.push(x);
        }
    }
    let a = identify(&hourly, &free()).unwrap();
    let b = identify(&TelemetryLog::new(fine), &free()).unwrap();
    assert!((a.params.alpha - b.params.alpha).abs() < 1e-9);
}

