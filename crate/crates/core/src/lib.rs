//! Humidity-aware model predictive control for residential air conditioning.

pub mod envelope;
pub mod equipment;
pub mod forecast;
pub mod metrics;
pub mod optimizer;
pub mod psychro;
pub mod regression;
pub mod simkit;
pub mod telemetry;
