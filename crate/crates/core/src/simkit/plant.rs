//! Truth model of the house: a continuous-time RC air node with an optional
//! slow mass node, internal and solar gains, and a well-mixed moisture
//! balance with occupant sources, infiltration and coil dehumidification.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::forecast::WeatherRecord;
use crate::psychro::{humidity_ratio, rh_from_humidity_ratio};

/// Latent heat of vaporisation (kJ/kg).
pub const H_FG: f64 = 2257.0;

/// Two-peak daily profile: morning and evening bumps over a base level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailySchedule {
    pub base: f64,
    pub morning_peak: f64,
    pub evening_peak: f64,
    /// Half-open hour windows of the peaks.
    pub morning: (f64, f64),
    pub evening: (f64, f64),
}

impl DailySchedule {
    pub fn at(&self, hour: f64) -> f64 {
        let h = hour.rem_euclid(24.0);
        if (self.morning.0..self.morning.1).contains(&h) {
            self.morning_peak
        } else if (self.evening.0..self.evening.1).contains(&h) {
            self.evening_peak
        } else {
            self.base
        }
    }

    pub fn constant(value: f64) -> Self {
        Self { base: value, morning_peak: value, evening_peak: value, morning: (0.0, 0.0), evening: (0.0, 0.0) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassNode {
    /// kWh/°C
    pub capacity: f64,
    /// Resistance from the mass to the ground (°C/kW).
    pub r_ground: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantParams {
    /// Air and furnishings capacitance (kWh/°C).
    pub c_air: f64,
    /// Envelope resistance to outdoor air (°C/kW).
    pub r_out: f64,
    /// Resistance to the slab/ground node (°C/kW).
    pub r_m: f64,
    /// Ground temperature, or the mass node's far boundary (°C).
    pub t_ground: f64,
    /// Dynamic mass node; `None` holds the mass at `t_ground`.
    pub mass: Option<MassNode>,
    /// Effective solar aperture (kW per kW/m² of horizontal irradiance).
    pub solar_aperture: f64,
    /// Internal sensible gains (kW).
    pub internal_gains: DailySchedule,
    /// Occupant moisture generation (kg/h).
    pub moisture_generation: DailySchedule,
    /// Infiltration (air changes per hour).
    pub infiltration_ach: f64,
    /// Mass of indoor air (kg).
    pub air_mass_kg: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            c_air: 15.0,
            r_out: 0.6,
            r_m: 8.0,
            t_ground: 18.0,
            mass: None,
            solar_aperture: 3.0,
            internal_gains: DailySchedule { base: 0.4, morning_peak: 0.7, evening_peak: 0.9, morning: (6.0, 9.0), evening: (17.0, 22.0) },
            moisture_generation: DailySchedule { base: 0.5, morning_peak: 1.4, evening_peak: 1.6, morning: (6.0, 9.0), evening: (17.0, 22.0) },
            // leaky envelope plus frequent door openings
            infiltration_ach: 3.0,
            air_mass_kg: 500.0,
        }
    }
}

impl PlantParams {
    /// No gains, no moisture sources and no infiltration.
    pub fn passive(mut self) -> Self {
        self.solar_aperture = 0.0;
        self.internal_gains = DailySchedule::constant(0.0);
        self.moisture_generation = DailySchedule::constant(0.0);
        self.infiltration_ach = 0.0;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [("c_air", self.c_air), ("r_out", self.r_out), ("r_m", self.r_m), ("air_mass_kg", self.air_mass_kg)];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(format!("{name} must be positive"));
            }
        }
        if self.solar_aperture < 0.0 || self.infiltration_ach < 0.0 {
            return Err("rates must be non-negative".into());
        }
        if let Some(m) = self.mass {
            if !(m.capacity > 0.0 && m.r_ground > 0.0) {
                return Err("mass node needs positive capacity and resistance".into());
            }
        }
        Ok(())
    }

    /// Sensible exogenous gains at a weather sample (kW).
    pub fn gains(&self, weather: &WeatherRecord, hour: f64) -> f64 {
        self.solar_aperture * weather.i_solar + self.internal_gains.at(hour)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub t_in: f64,
    /// Humidity ratio (kg/kg dry air).
    pub w_in: f64,
    pub t_mass: Option<f64>,
}

impl PlantState {
    pub fn new(t_in: f64, rh_in: f64) -> Self {
        Self { t_in, w_in: humidity_ratio(t_in, rh_in), t_mass: None }
    }

    pub fn rh_in(&self) -> f64 {
        rh_from_humidity_ratio(self.t_in, self.w_in)
    }
}

/// Clamping events raised while stepping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PlantEvents {
    pub moisture_floor: u32,
    pub condensation: u32,
}

impl PlantEvents {
    pub fn add(&mut self, other: PlantEvents) {
        self.moisture_floor += other.moisture_floor;
        self.condensation += other.condensation;
    }
}

const MIN_HUMIDITY_RATIO: f64 = 1e-4;

/// Advances the house by `dt` hours under constant weather and sensible
/// cooling `q_cool` (kW) delivered at sensible heat ratio `shr_realized`.
pub fn plant_step(
    params: &PlantParams,
    state: &PlantState,
    weather: &WeatherRecord,
    hour: f64,
    q_cool: f64,
    shr_realized: f64,
    dt: f64,
) -> (PlantState, PlantEvents) {
    let mut events = PlantEvents::default();
    let q_cool = q_cool.max(0.0);
    let t_m = match (params.mass, state.t_mass) {
        (Some(_), Some(t)) => t,
        _ => params.t_ground,
    };

    // Exact response of the air node with the mass temperature frozen over the step.
    let g = 1.0 / params.r_out + 1.0 / params.r_m;
    let t_inf = (weather.t_out / params.r_out + t_m / params.r_m + params.gains(weather, hour) - q_cool) / g;
    let decay = (-dt * g / params.c_air).exp();
    let t_next = t_inf + (state.t_in - t_inf) * decay;

    let t_mass = params.mass.map(|m| {
        let flow = (state.t_in - t_m) / params.r_m + (params.t_ground - t_m) / m.r_ground;
        t_m + dt * flow / m.capacity
    });

    let shr = shr_realized.clamp(0.05, 1.0);
    let removal = q_cool * (1.0 / shr - 1.0) * 3600.0 / H_FG;
    let w_out = humidity_ratio(weather.t_out, weather.rh_out);
    let m_inf = params.infiltration_ach * params.air_mass_kg;
    let generation = params.moisture_generation.at(hour);
    let mut w_next = state.w_in + dt * (generation + m_inf * (w_out - state.w_in) - removal) / params.air_mass_kg;
    if w_next < MIN_HUMIDITY_RATIO {
        debug!("latent removal exceeded available moisture; clamped");
        w_next = MIN_HUMIDITY_RATIO;
        events.moisture_floor += 1;
    }
    let w_sat = humidity_ratio(t_next, 1.0);
    if w_next > w_sat {
        debug!("indoor air supersaturated; excess condensed");
        w_next = w_sat;
        events.condensation += 1;
    }
    (PlantState { t_in: t_next, w_in: w_next, t_mass }, events)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Proportional gain (kW/°C).
    pub k_p: f64,
    /// No cooling is called until the error exceeds this (°C).
    pub deadband: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self { k_p: 30.0, deadband: 0.2 }
    }
}

/// Sensible cooling command of the equipment's own thermostat loop.
pub fn device_tracker(t_in: f64, setpoint: f64, config: &TrackerConfig, capacity: f64) -> f64 {
    let error = t_in - setpoint;
    if error <= config.deadband {
        return 0.0;
    }
    (config.k_p * error).clamp(0.0, capacity.max(0.0))
}
