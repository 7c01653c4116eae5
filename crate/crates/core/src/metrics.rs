//! Field-study style analytics over telemetry: daily summaries, weather
//! normalised energy, slope-based savings with Monte Carlo intervals, and
//! power-limit violation statistics.

use std::collections::BTreeMap;

use chrono::{NaiveDate, Timelike};
use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optimizer::PowerLimitSchedule;
use crate::psychro::{comfort_series, ComfortAssumptions, PsychroError};
use crate::telemetry::TelemetryLog;

/// Shared x-intercept offset of the daily energy lines (°C).
pub const SHARED_OFFSET: f64 = 6.2;

/// Reference values reported for the field deployment.
pub mod reference {
    /// Weather-normalised energy (kWh/°C).
    pub const NORMALIZED_SENSIBLE: f64 = 2.32;
    pub const NORMALIZED_LATENT: f64 = 2.34;
    #[allow(clippy::approx_constant)]
    pub const NORMALIZED_BENCHMARK: f64 = 3.14;
    /// Power-limit violations: (minutes/day, conditional mean kW).
    pub const VIOLATIONS_SENSIBLE: (f64, f64) = (54.0, 0.8);
    pub const VIOLATIONS_LATENT: (f64, f64) = (11.0, 0.3);
    /// Daily energy slopes, (mean, std) in kWh/°C, for MPC and baseline.
    pub const SLOPE_MPC: (f64, f64) = (2.62, 0.096);
    pub const SLOPE_BASELINE: (f64, f64) = (3.04, 0.049);
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no days to aggregate")]
    Empty,
    #[error("cumulative temperature difference is zero")]
    ZeroDenominator,
    #[error("need at least {needed} days per arm, got {got}")]
    TooFewDays { needed: usize, got: usize },
    #[error("temperature differences have no spread")]
    DegenerateSpread,
    #[error("at least {min} Monte Carlo samples are required, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("log step is not uniform near row {0}")]
    NonUniformStep(usize),
    #[error("comfort evaluation failed: {0}")]
    Comfort(#[from] PsychroError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySummary {
    pub date: NaiveDate,
    pub controller: String,
    pub energy_kwh: f64,
    /// Mean outdoor minus indoor temperature (°C).
    pub delta_t: f64,
    pub violation_minutes: f64,
    pub violation_magnitude_mean_kw: f64,
    pub mean_ppd: f64,
}

/// Splits a log into calendar days.
pub fn daily_summaries(
    log: &TelemetryLog,
    controller: &str,
    schedule: &PowerLimitSchedule,
    comfort: &ComfortAssumptions,
) -> Result<Vec<DailySummary>, MetricsError> {
    if log.is_empty() {
        return Err(MetricsError::Empty);
    }
    let dt = log.uniform_step_hours().map_err(MetricsError::NonUniformStep)?;
    let ppd = comfort_series(log, comfort)?;
    let mut days: BTreeMap<NaiveDate, Vec<usize>> = BTreeMap::new();
    for (i, r) in log.records.iter().enumerate() {
        days.entry(r.timestamp.date()).or_default().push(i);
    }
    Ok(days
        .into_iter()
        .map(|(date, idx)| {
            let n = idx.len() as f64;
            let recs = idx.iter().map(|&i| &log.records[i]);
            let energy_kwh = recs.clone().map(|r| r.p_kw * dt).sum();
            let delta_t = recs.clone().map(|r| r.t_out - r.t_in).sum::<f64>() / n;
            let (minutes, excess) = violations(recs.clone().map(|r| (r.timestamp.hour(), r.p_kw)), schedule, dt);
            let mean_ppd = idx.iter().map(|&i| ppd.results[i].ppd).sum::<f64>() / n;
            DailySummary {
                date,
                controller: controller.to_string(),
                energy_kwh,
                delta_t,
                violation_minutes: minutes,
                violation_magnitude_mean_kw: if excess.is_empty() { 0.0 } else { excess.iter().sum::<f64>() / excess.len() as f64 },
                mean_ppd,
            }
        })
        .collect())
}

/// Minutes above the limit and the per-step excesses.
fn violations(samples: impl Iterator<Item = (u32, f64)>, schedule: &PowerLimitSchedule, dt: f64) -> (f64, Vec<f64>) {
    let mut minutes = 0.0;
    let mut excess = Vec::new();
    for (hour, p) in samples {
        if let Some(limit) = schedule.limit_at(hour) {
            if p > limit {
                minutes += dt * 60.0;
                excess.push(p - limit);
            }
        }
    }
    (minutes, excess)
}

/// Cumulative electrical energy per cumulative degree of outdoor–indoor
/// temperature difference (kWh/°C).
pub fn weather_normalized_energy(summaries: &[DailySummary]) -> Result<f64, MetricsError> {
    if summaries.is_empty() {
        return Err(MetricsError::Empty);
    }
    let energy: f64 = summaries.iter().map(|s| s.energy_kwh).sum();
    let dt: f64 = summaries.iter().map(|s| s.delta_t).sum();
    if energy == 0.0 {
        return Ok(0.0);
    }
    if dt.abs() < 1e-12 {
        return Err(MetricsError::ZeroDenominator);
    }
    Ok(energy / dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub mean: f64,
    pub std: f64,
    pub offset: f64,
}

impl SlopeFit {
    pub fn new(mean: f64, std: f64) -> Self {
        Self { mean, std, offset: SHARED_OFFSET }
    }
}

pub const MIN_DAYS_PER_ARM: usize = 5;

/// Least-squares slope of `energy = m·(ΔT + offset)`.
pub fn fit_slope(days: &[DailySummary], offset: f64) -> Result<SlopeFit, MetricsError> {
    if days.len() < MIN_DAYS_PER_ARM {
        return Err(MetricsError::TooFewDays { needed: MIN_DAYS_PER_ARM, got: days.len() });
    }
    let n = days.len() as f64;
    let mean_x = days.iter().map(|d| d.delta_t).sum::<f64>() / n;
    let spread = days.iter().map(|d| (d.delta_t - mean_x).powi(2)).sum::<f64>() / n;
    if spread.sqrt() < 1e-6 {
        return Err(MetricsError::DegenerateSpread);
    }
    let sxx: f64 = days.iter().map(|d| (d.delta_t + offset).powi(2)).sum();
    let sxy: f64 = days.iter().map(|d| (d.delta_t + offset) * d.energy_kwh).sum();
    let m = sxy / sxx;
    let rss: f64 = days.iter().map(|d| (d.energy_kwh - m * (d.delta_t + offset)).powi(2)).sum();
    let std = (rss / (n - 1.0) / sxx).sqrt();
    Ok(SlopeFit { mean: m, std, offset })
}

/// Slopes for the MPC arm and the baseline arm, sharing the x-intercept.
pub fn fit_savings_slopes(mpc: &[DailySummary], baseline: &[DailySummary], offset: f64) -> Result<(SlopeFit, SlopeFit), MetricsError> {
    Ok((fit_slope(mpc, offset)?, fit_slope(baseline, offset)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SavingsCi {
    /// Fractions, not percent.
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub samples: usize,
    /// Draws discarded because the baseline slope was near zero.
    pub rejected: usize,
}

pub const MIN_MC_SAMPLES: usize = 100_000;
const SHARDS: u64 = 8;

/// Percentile by nearest rank on a sorted slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Draws `(m1, m2)` pairs across fixed shards; each shard has its own stream.
fn sample_slopes<F>(m1: &SlopeFit, m2: &SlopeFit, samples: usize, seed: u64, f: F) -> (Vec<f64>, usize)
where
    F: Fn(f64, f64) -> Option<f64> + Sync,
{
    let n1 = Normal::new(m1.mean, m1.std.max(0.0)).expect("finite slope");
    let n2 = Normal::new(m2.mean, m2.std.max(0.0)).expect("finite slope");
    let per = samples.div_ceil(SHARDS as usize);
    let shards: Vec<(Vec<f64>, usize)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..SHARDS)
            .map(|shard| {
                let f = &f;
                s.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(shard);
                    let count = per.min(samples.saturating_sub(per * shard as usize));
                    let mut out = Vec::with_capacity(count);
                    let mut rejected = 0;
                    while out.len() < count {
                        let a = n1.sample(&mut rng);
                        let b = n2.sample(&mut rng);
                        match f(a, b) {
                            Some(v) => out.push(v),
                            None => {
                                rejected += 1;
                                if rejected > 10 * count.max(1) {
                                    break;
                                }
                            }
                        }
                    }
                    (out, rejected)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sampler panicked")).collect()
    });
    let rejected = shards.iter().map(|s| s.1).sum();
    (shards.into_iter().flat_map(|s| s.0).collect(), rejected)
}

/// Monte Carlo distribution of `1 − m1/m2`.
pub fn savings_ci(m1: &SlopeFit, m2: &SlopeFit, samples: usize, seed: u64) -> Result<SavingsCi, MetricsError> {
    if samples < MIN_MC_SAMPLES {
        return Err(MetricsError::TooFewSamples { min: MIN_MC_SAMPLES, got: samples });
    }
    let guard = 1e-6 * m2.mean.abs().max(1e-9);
    let (mut values, rejected) = sample_slopes(m1, m2, samples, seed, |a, b| (b.abs() > guard).then(|| 1.0 - a / b));
    if rejected > 0 {
        warn!("{rejected} draws rejected with a near-zero baseline slope");
    }
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.sort_by(f64::total_cmp);
    Ok(SavingsCi {
        mean,
        lower: percentile(&values, 0.025),
        upper: percentile(&values, 0.975),
        samples: values.len(),
        rejected,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViolationStats {
    pub minutes_per_day: f64,
    /// Mean excess over the limit while violating; 0 when there are none.
    pub mean_magnitude_kw: f64,
    pub any_violation: bool,
    pub days: f64,
}

pub fn violation_stats(log: &TelemetryLog, schedule: &PowerLimitSchedule) -> Result<ViolationStats, MetricsError> {
    if log.is_empty() {
        return Err(MetricsError::Empty);
    }
    let dt = log.uniform_step_hours().map_err(MetricsError::NonUniformStep)?;
    let days = log.len() as f64 * dt / 24.0;
    let (minutes, excess) = violations(log.records.iter().map(|r| (r.timestamp.hour(), r.p_kw)), schedule, dt);
    let mean = if excess.is_empty() { 0.0 } else { excess.iter().sum::<f64>() / excess.len() as f64 };
    Ok(ViolationStats { minutes_per_day: minutes / days, mean_magnitude_kw: mean, any_violation: !excess.is_empty(), days })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnualProjection {
    /// Savings in currency units.
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    /// Expected cumulative savings after each day, at mean slopes.
    pub cumulative: Vec<f64>,
}

/// Projects yearly savings of `mpc` over `baseline` daily energy models for
/// a year of daily temperature differences. Days below the shared intercept
/// use no energy under either model.
pub fn annual_cost_projection(
    mpc: &SlopeFit,
    baseline: &SlopeFit,
    year_delta_t: &[f64],
    price: f64,
    samples: usize,
    seed: u64,
) -> Result<AnnualProjection, MetricsError> {
    if year_delta_t.is_empty() {
        return Err(MetricsError::Empty);
    }
    if samples < MIN_MC_SAMPLES {
        return Err(MetricsError::TooFewSamples { min: MIN_MC_SAMPLES, got: samples });
    }
    let driver = |offset: f64| year_delta_t.iter().map(|d| (d + offset).max(0.0)).sum::<f64>();
    let (s1, s2) = (driver(mpc.offset), driver(baseline.offset));
    let mut cumulative = Vec::with_capacity(year_delta_t.len());
    let mut acc = 0.0;
    for d in year_delta_t {
        acc += price * (baseline.mean * (d + baseline.offset).max(0.0) - mpc.mean * (d + mpc.offset).max(0.0));
        cumulative.push(acc);
    }
    let (mut values, _) = sample_slopes(mpc, baseline, samples, seed, |a, b| Some(price * (b * s2 - a * s1)));
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.sort_by(f64::total_cmp);
    Ok(AnnualProjection { mean, lower: percentile(&values, 0.025), upper: percentile(&values, 0.975), cumulative })
}
