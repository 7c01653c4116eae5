//! Seeded synthetic weather: a diurnal temperature sinusoid with day-to-day
//! drift, humidity carried by a slowly varying dewpoint, clear-sky solar with
//! daily cloudiness, and hourly noise.

use std::f64::consts::{PI, TAU};

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::forecast::WeatherRecord;
use crate::psychro::{dewpoint, saturation_pressure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeatherProfile {
    pub t_mean: f64,
    pub t_amplitude: f64,
    /// Hour of the daily temperature maximum.
    pub peak_hour: f64,
    /// Standard deviation of the day-to-day mean temperature drift (°C).
    pub daily_drift_std: f64,
    /// Hourly temperature noise (°C).
    pub noise_std: f64,
    pub dewpoint_mean: f64,
    pub dewpoint_daily_std: f64,
    /// Dewpoint swing over the day (°C), highest in the evening.
    pub dewpoint_amplitude: f64,
    /// Clear-sky irradiance at solar noon (kW/m²).
    pub solar_peak: f64,
    /// Daily clear-sky fraction drawn uniformly from this range.
    pub clearness: (f64, f64),
    pub wind_mean: f64,
    pub start: NaiveDateTime,
}

impl Default for WeatherProfile {
    fn default() -> Self {
        Self::hot_humid()
    }
}

impl WeatherProfile {
    /// Midsummer week with muggy nights; roughly half the days have a mean
    /// dewpoint above 20 °C.
    pub fn hot_humid() -> Self {
        Self {
            t_mean: 28.0,
            t_amplitude: 5.5,
            peak_hour: 15.0,
            daily_drift_std: 1.2,
            noise_std: 0.3,
            dewpoint_mean: 21.0,
            dewpoint_daily_std: 1.0,
            dewpoint_amplitude: 0.8,
            solar_peak: 0.85,
            clearness: (0.6, 1.0),
            wind_mean: 2.5,
            start: default_start(),
        }
    }

    /// Early-summer week with comfortable temperatures and dry air.
    pub fn mild_dry() -> Self {
        Self {
            t_mean: 22.6,
            t_amplitude: 5.5,
            peak_hour: 15.0,
            daily_drift_std: 1.0,
            noise_std: 0.3,
            dewpoint_mean: 11.5,
            dewpoint_daily_std: 1.5,
            dewpoint_amplitude: 0.8,
            solar_peak: 0.85,
            clearness: (0.6, 1.0),
            wind_mean: 3.0,
            start: default_start(),
        }
    }

    /// Deterministic profile: no drift, noise or clouds.
    pub fn noiseless(mut self) -> Self {
        self.daily_drift_std = 0.0;
        self.noise_std = 0.0;
        self.dewpoint_daily_std = 0.0;
        self.clearness = (1.0, 1.0);
        self
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "hot_humid" => Some(Self::hot_humid()),
            "mild_dry" => Some(Self::mild_dry()),
            _ => None,
        }
    }
}

fn default_start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2023, 7, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
}

/// Hourly weather for `days` days from `profile`, deterministic per seed.
pub fn weather_synth(profile: &WeatherProfile, days: usize, seed: u64) -> Vec<WeatherRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = Vec::with_capacity(days * 24);
    let mut drift = 0.0;
    let mut dp_drift = 0.0;
    for day in 0..days {
        // AR(1) persistence across days
        drift = 0.6 * drift + 0.8 * profile.daily_drift_std * unit.sample(&mut rng);
        dp_drift = 0.6 * dp_drift + 0.8 * profile.dewpoint_daily_std * unit.sample(&mut rng);
        let (lo, hi) = profile.clearness;
        let clear = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        for h in 0..24 {
            let hour = h as f64;
            let noise = profile.noise_std * unit.sample(&mut rng);
            let t_out = profile.t_mean + drift + profile.t_amplitude * (TAU * (hour - profile.peak_hour) / 24.0).cos() + noise;
            let dp = profile.dewpoint_mean + dp_drift + profile.dewpoint_amplitude * (TAU * (hour - 19.0) / 24.0).cos();
            let dp = dp.min(t_out - 0.3);
            let rh_out = (saturation_pressure(dp) / saturation_pressure(t_out)).clamp(0.05, 1.0);
            let solar = profile.solar_peak * clear * (PI * (hour - 6.0) / 14.0).sin().max(0.0);
            let wind = (profile.wind_mean * (1.0 + 0.3 * unit.sample(&mut rng))).max(0.0);
            out.push(WeatherRecord {
                timestamp: profile.start + Duration::hours((day * 24 + h) as i64),
                t_out,
                rh_out,
                i_solar: solar,
                wind,
            });
        }
    }
    out
}

/// Mean dewpoint of each whole day in `weather`.
pub fn daily_mean_dewpoints(weather: &[WeatherRecord]) -> Vec<f64> {
    weather
        .chunks_exact(24)
        .map(|day| day.iter().map(|w| dewpoint(w.t_out, w.rh_out)).sum::<f64>() / 24.0)
        .collect()
}
