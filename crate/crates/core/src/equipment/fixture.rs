//! Manufacturer-like cooling performance table for a 14 kW variable-speed
//! heat pump, generated from documented closed forms so every fit in the
//! crate is reproducible without external data.
//!
//! At indoor dry-bulb 24 °C:
//!
//! ```text
//! cop(wb, out)   = 5.3 − 0.11·Δo − 0.0012·Δo² + 0.06·Δw − 0.002·Δw² − 0.001·Δw·Δo
//! total(wb, out) = 14·(1 + 0.035·(wb − 19) − 0.006·(out − 35))
//! shr(wb, out)   = 0.86 − 0.035·Δw − 0.0015·(out − 30)
//! ```
//!
//! with `Δw = wb − 17` and `Δo = out − 26`, plus a small deterministic
//! ripple on COP and SHR so fits are not exact.

use super::PerformanceRow;

pub const RATED_CAPACITY_KW: f64 = 14.0;
pub const RATED_COP: f64 = 5.3;
/// Return-air wet-bulb of 24 °C / 50 % air, where SHR equals the constant 0.86.
pub const NOMINAL_WB: f64 = 17.0;
pub const RATING_T_OUT: f64 = 26.0;
pub const REFERENCE_INDOOR_DB: f64 = 24.0;

pub const WET_BULBS: [f64; 9] = [15.0, 16.0, 17.0, 18.0, 19.0, 20.0, 21.0, 22.0, 23.0];
pub const OUTDOOR_TEMPS: [f64; 10] = [18.0, 21.0, 24.0, 26.0, 29.0, 32.0, 35.0, 38.0, 41.0, 44.0];

pub fn true_cop(wb: f64, out: f64) -> f64 {
    let dw = wb - NOMINAL_WB;
    let d_o = out - RATING_T_OUT;
    RATED_COP - 0.11 * d_o - 0.0012 * d_o * d_o + 0.06 * dw - 0.002 * dw * dw - 0.001 * dw * d_o
}

pub fn true_total_capacity(wb: f64, out: f64) -> f64 {
    RATED_CAPACITY_KW * (1.0 + 0.035 * (wb - 19.0) - 0.006 * (out - 35.0))
}

pub fn true_shr(wb: f64, out: f64) -> f64 {
    0.86 - 0.035 * (wb - NOMINAL_WB) - 0.0015 * (out - 30.0)
}

fn ripple(i: usize) -> f64 {
    ((i as f64) * 12.9898 + 0.5).sin()
}

pub fn performance_table() -> Vec<PerformanceRow> {
    let mut rows = Vec::with_capacity(WET_BULBS.len() * OUTDOOR_TEMPS.len());
    for &wb in &WET_BULBS {
        for &out in &OUTDOOR_TEMPS {
            let i = rows.len();
            let at_rating = wb == NOMINAL_WB && out == RATING_T_OUT;
            let cop = true_cop(wb, out) + if at_rating { 0.0 } else { 0.03 * ripple(i) };
            let shr = (true_shr(wb, out) + 0.004 * ripple(i + 101)).min(1.0);
            let total = true_total_capacity(wb, out);
            rows.push(PerformanceRow {
                t_wb_c: wb,
                t_out_c: out,
                sensible_kw: shr * total,
                total_kw: total,
                power_kw: total / cop,
            });
        }
    }
    rows
}
