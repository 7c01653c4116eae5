//! Receding-horizon planning of indoor temperature, cooling and electrical
//! power as a linear program.
//!
//! Decision variables, for a horizon of `L` steps:
//!
//! | block        | indices            | meaning                                  |
//! |--------------|--------------------|------------------------------------------|
//! | `T_k`        | `0 ..= L`          | indoor temperature (°C)                  |
//! | `Q_k`        | `L+1 .. 2L+1`      | sensible cooling delivered (kW)          |
//! | `P_k`        | `2L+1 .. 3L+1`     | electrical power (kW)                    |
//! | `z`          | `3L+1`             | peak power epigraph (kW)                 |
//! | `e⁺_k, e⁻_k` | `3L+2 .. 5L+2`     | split of `T_k − T_pref`, `k = 1..=L`     |
//! | `h_k`        | `5L+2 .. 6L+2`     | limit-violation hinge (power-limit mode) |
//!
//! Cost mode therefore has `5L + 2` variables, `3L + 1` equality rows
//! (initial state, `L` dynamics rows, `L` power rows, `L` deviation rows) and
//! `L` inequality rows (`P_k ≤ z`). Power-limit mode adds `L` variables and
//! `2L` rows (`P_k − h_k ≤ P_lim,k` and `−h_k ≤ 0`); unbounded steps use the
//! heat-pump capacity as their limit so the hinge stays at zero. For `L = 1`
//! in cost mode that is 7 variables, 4 equalities and 1 inequality.

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::ForecastBundle;
use crate::psychro::{rh_from_wet_bulb, ComfortAssumptions, PsychroError, PPD_ACCEPTABLE};

pub mod lp;

pub use lp::{solve_lp, Constraint, ConstraintRef, LinearProgram, LpError, LpSolution, SolverOptions};

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("forecast bundle does not match the configuration: {0}")]
    Usage(String),
    #[error("price tuning failed: every candidate plan was infeasible")]
    TuningInfeasible,
    #[error("price grid must be non-empty and ascending")]
    PriceGrid,
    #[error("comfort evaluation failed: {0}")]
    Comfort(#[from] PsychroError),
}

/// Utility power limit active during a daily window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLimitSchedule {
    pub limit_kw: f64,
    /// Half-open window `[start, end)` in hours of the day.
    pub window: (u32, u32),
}

impl Default for PowerLimitSchedule {
    fn default() -> Self {
        Self { limit_kw: 2.5, window: (16, 20) }
    }
}

impl PowerLimitSchedule {
    /// Limit at `hour` (0–23); `None` outside the window.
    pub fn limit_at(&self, hour: u32) -> Option<f64> {
        let (start, end) = self.window;
        let inside = if start <= end {
            (start..end).contains(&hour)
        } else {
            hour >= start || hour < end
        };
        inside.then_some(self.limit_kw)
    }
}

/// Free-function form of [`PowerLimitSchedule::limit_at`].
pub fn power_limit_schedule(hour: u32, limit_kw: f64, window: (u32, u32)) -> Option<f64> {
    PowerLimitSchedule { limit_kw, window }.limit_at(hour)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    pub dt: f64,
    pub horizon_l: usize,
    /// Flat energy price ($/kWh).
    pub pi_e: f64,
    /// Optional per-step energy prices overriding `pi_e` (time-of-use hook).
    pub energy_prices: Option<Vec<f64>>,
    pub pi_d: f64,
    pub pi_t: f64,
    pub pi_peak: f64,
    pub t_pref: f64,
    pub delta: f64,
    pub p_hp_max: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            dt: 1.0,
            horizon_l: 24,
            pi_e: 0.14,
            energy_prices: None,
            pi_d: 0.8,
            pi_t: 0.1,
            pi_peak: 1.4,
            t_pref: 23.0,
            delta: 3.0,
            p_hp_max: 4.5,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |m: &str| Err(OptimizerError::Config(m.to_string()));
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if self.horizon_l == 0 {
            return bad("horizon must have at least one step");
        }
        let mut prices = vec![self.pi_e, self.pi_d, self.pi_t, self.pi_peak];
        if let Some(p) = &self.energy_prices {
            if p.len() != self.horizon_l {
                return bad("energy price schedule length differs from the horizon");
            }
            prices.extend(p);
        }
        if prices.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return bad("prices must be finite and non-negative");
        }
        if !(self.delta > 0.0) {
            return bad("delta must be positive");
        }
        if !(self.p_hp_max > 0.0) {
            return bad("heat pump capacity must be positive");
        }
        if !self.t_pref.is_finite() {
            return bad("preference temperature must be finite");
        }
        Ok(())
    }

    pub fn energy_price(&self, k: usize) -> f64 {
        self.energy_prices.as_ref().map_or(self.pi_e, |p| p[k])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    #[default]
    Cost,
    PowerLimit,
}

/// Column positions of each variable block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariableLayout {
    pub horizon: usize,
    pub mode: PlanMode,
}

impl VariableLayout {
    pub fn new(horizon: usize, mode: PlanMode) -> Self {
        Self { horizon, mode }
    }
    pub fn temp(&self, k: usize) -> usize {
        k
    }
    pub fn cool(&self, k: usize) -> usize {
        self.horizon + 1 + k
    }
    pub fn power(&self, k: usize) -> usize {
        2 * self.horizon + 1 + k
    }
    pub fn peak(&self) -> usize {
        3 * self.horizon + 1
    }
    /// Deviation split for `T_k`, `k` in `1..=L`.
    pub fn dev_pos(&self, k: usize) -> usize {
        3 * self.horizon + 2 + 2 * (k - 1)
    }
    pub fn dev_neg(&self, k: usize) -> usize {
        self.dev_pos(k) + 1
    }
    pub fn hinge(&self, k: usize) -> usize {
        5 * self.horizon + 2 + k
    }
    pub fn n_vars(&self) -> usize {
        match self.mode {
            PlanMode::Cost => 5 * self.horizon + 2,
            PlanMode::PowerLimit => 6 * self.horizon + 2,
        }
    }
}

fn check_bundle(config: &MpcConfig, bundle: &ForecastBundle) -> Result<(), OptimizerError> {
    config.validate()?;
    let l = config.horizon_l;
    if bundle.len() != l {
        return Err(OptimizerError::Usage(format!("bundle has {} steps, horizon is {l}", bundle.len())));
    }
    if !bundle.is_consistent() {
        return Err(OptimizerError::Usage("bundle arrays are inconsistent or out of range".into()));
    }
    if (bundle.dt_h - config.dt).abs() > 1e-9 {
        return Err(OptimizerError::Usage(format!("bundle step {} h differs from configured {} h", bundle.dt_h, config.dt)));
    }
    Ok(())
}

/// Assembles the planning LP for one solve.
pub fn build_lp(config: &MpcConfig, bundle: &ForecastBundle, t_initial: f64, mode: PlanMode) -> Result<LinearProgram, OptimizerError> {
    check_bundle(config, bundle)?;
    if !t_initial.is_finite() {
        return Err(OptimizerError::Usage("initial temperature is not finite".into()));
    }
    let l = config.horizon_l;
    let v = VariableLayout::new(l, mode);
    let n = v.n_vars();
    let mut lp = LinearProgram::new(n);
    let dt = config.dt;
    let (alpha, r) = (bundle.alpha, bundle.r_eff);

    lp.objective[v.peak()] = config.pi_d;
    for k in 0..l {
        lp.objective[v.power(k)] = dt * config.energy_price(k);
        lp.objective[v.dev_pos(k + 1)] = dt * config.pi_t;
        lp.objective[v.dev_neg(k + 1)] = dt * config.pi_t;
        if mode == PlanMode::PowerLimit {
            lp.objective[v.hinge(k)] = dt * config.pi_peak;
        }
    }

    lp.bounds[v.temp(0)] = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 1..=l {
        lp.bounds[v.temp(k)] = (config.t_pref - config.delta, config.t_pref + config.delta);
    }
    for k in 0..l {
        lp.bounds[v.cool(k)] = (0.0, config.p_hp_max * bundle.cop[k]);
        lp.bounds[v.power(k)] = (0.0, config.p_hp_max);
    }

    lp.equalities.push(Constraint::new(n, t_initial).with(v.temp(0), 1.0));
    for k in 0..l {
        // T_{k+1} − αT_k + (1−α)R·Q_k = (1−α)(T_eq,k + R·q_e,k)
        lp.equalities.push(
            Constraint::new(n, (1.0 - alpha) * (bundle.t_eq[k] + r * bundle.q_e[k]))
                .with(v.temp(k + 1), 1.0)
                .with(v.temp(k), -alpha)
                .with(v.cool(k), (1.0 - alpha) * r),
        );
    }
    for k in 0..l {
        lp.equalities.push(
            Constraint::new(n, 0.0)
                .with(v.power(k), 1.0)
                .with(v.cool(k), -1.0 / (bundle.shr[k] * bundle.cop[k])),
        );
    }
    for k in 1..=l {
        lp.equalities.push(
            Constraint::new(n, config.t_pref)
                .with(v.temp(k), 1.0)
                .with(v.dev_pos(k), -1.0)
                .with(v.dev_neg(k), 1.0),
        );
    }

    for k in 0..l {
        lp.inequalities.push(Constraint::new(n, 0.0).with(v.power(k), 1.0).with(v.peak(), -1.0));
    }
    if mode == PlanMode::PowerLimit {
        for k in 0..l {
            let limit = bundle.p_lim[k].map_or(config.p_hp_max, |p| p.min(config.p_hp_max));
            lp.inequalities.push(Constraint::new(n, limit).with(v.power(k), 1.0).with(v.hinge(k), -1.0));
            lp.inequalities.push(Constraint::new(n, 0.0).with(v.hinge(k), -1.0));
        }
    }
    Ok(lp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    Optimal,
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub energy: f64,
    pub peak: f64,
    pub discomfort: f64,
    pub violation: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MpcPlan {
    pub status: PlanStatus,
    pub mode: PlanMode,
    /// Set-point to transmit: the planned `T_1`, or the previous set-point on fallback.
    pub setpoint: f64,
    pub t_traj: Vec<f64>,
    pub q_cool: Vec<f64>,
    pub p_elec: Vec<f64>,
    /// `max(P_k − P_lim,k, 0)`; all zero in cost mode.
    pub hinge: Vec<f64>,
    pub objective: CostBreakdown,
    #[serde(skip)]
    pub failure: Option<LpError>,
}

impl MpcPlan {
    fn fallback(mode: PlanMode, previous_setpoint: f64, failure: LpError) -> Self {
        Self {
            status: PlanStatus::Fallback,
            mode,
            setpoint: previous_setpoint,
            t_traj: Vec::new(),
            q_cool: Vec::new(),
            p_elec: Vec::new(),
            hinge: Vec::new(),
            objective: CostBreakdown::default(),
            failure: Some(failure),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == PlanStatus::Optimal
    }

    /// Deterministic pretty JSON of the per-step arrays and cost breakdown.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serialises")
    }

    /// Σ |T_k − T_pref| over the planned steps `k = 1..=L`.
    pub fn total_deviation(&self, t_pref: f64) -> f64 {
        self.t_traj.iter().skip(1).map(|t| (t - t_pref).abs()).sum()
    }
}

/// Evaluates the objective terms of a trajectory under `config`.
pub fn cost_breakdown(config: &MpcConfig, bundle: &ForecastBundle, t_traj: &[f64], p_elec: &[f64], mode: PlanMode) -> CostBreakdown {
    let dt = config.dt;
    let energy = p_elec.iter().enumerate().map(|(k, p)| dt * config.energy_price(k) * p).sum();
    let peak = config.pi_d * p_elec.iter().fold(0.0_f64, |a, &p| a.max(p));
    let discomfort = dt * config.pi_t * t_traj.iter().skip(1).map(|t| (t - config.t_pref).abs()).sum::<f64>();
    let violation = match mode {
        PlanMode::Cost => 0.0,
        PlanMode::PowerLimit => {
            dt * config.pi_peak
                * p_elec
                    .iter()
                    .zip(&bundle.p_lim)
                    .map(|(p, lim)| lim.map_or(0.0, |l| (p - l.min(config.p_hp_max)).max(0.0)))
                    .sum::<f64>()
        }
    };
    CostBreakdown { energy, peak, discomfort, violation, total: energy + peak + discomfort + violation }
}

/// Solves the planning problem; solver failures degrade to a fallback plan
/// that repeats `previous_setpoint`.
pub fn plan(config: &MpcConfig, bundle: &ForecastBundle, t_initial: f64, mode: PlanMode, previous_setpoint: f64) -> Result<MpcPlan, OptimizerError> {
    let lp = build_lp(config, bundle, t_initial, mode)?;
    let solution = match solve_lp(&lp, &SolverOptions::default()) {
        Ok(s) => s,
        Err(e) => {
            warn!("planning LP failed ({e}); holding set-point {previous_setpoint:.2} °C");
            return Ok(MpcPlan::fallback(mode, previous_setpoint, e));
        }
    };
    let l = config.horizon_l;
    let v = VariableLayout::new(l, mode);
    let x = &solution.x;
    let t_traj: Vec<f64> = (0..=l).map(|k| x[v.temp(k)]).collect();
    let q_cool: Vec<f64> = (0..l).map(|k| x[v.cool(k)].max(0.0)).collect();
    let p_elec: Vec<f64> = (0..l).map(|k| x[v.power(k)].max(0.0)).collect();
    let hinge = match mode {
        PlanMode::Cost => vec![0.0; l],
        PlanMode::PowerLimit => (0..l).map(|k| x[v.hinge(k)].max(0.0)).collect(),
    };
    let objective = cost_breakdown(config, bundle, &t_traj, &p_elec, mode);
    Ok(MpcPlan { status: PlanStatus::Optimal, mode, setpoint: t_traj[1], t_traj, q_cool, p_elec, hinge, objective, failure: None })
}

/// Log-spaced candidate discomfort prices, 0.001–10 $/°C·h.
pub fn default_price_grid() -> Vec<f64> {
    let n = 15;
    (0..n).map(|i| 10f64.powf(-3.0 + 4.0 * i as f64 / (n - 1) as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceCandidate {
    pub price: f64,
    /// Time-average PPD (%) of the planned trajectory; `None` if infeasible.
    pub mean_ppd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningResult {
    /// Selected price including the 10 % safety margin.
    pub price: f64,
    pub threshold_met: bool,
    pub sweep: Vec<PriceCandidate>,
}

/// Time-average PPD over the planned temperatures `T_1..=T_L`, using the
/// forecast wet-bulb for humidity when available.
pub fn plan_mean_ppd(plan: &MpcPlan, bundle: &ForecastBundle, comfort: &ComfortAssumptions) -> Result<f64, PsychroError> {
    let temps = &plan.t_traj[1..];
    let mut total = 0.0;
    for (k, &t) in temps.iter().enumerate() {
        let rh = match &bundle.t_wb {
            Some(wb) => rh_from_wet_bulb(t, wb[k])?,
            None => comfort.fallback_rh,
        };
        total += comfort.ppd_at(t, rh)?;
    }
    Ok(total / temps.len() as f64)
}

/// Picks the smallest grid price whose plan keeps mean PPD at or below 10 %,
/// raised by 10 %.
pub fn tune_discomfort_price(
    config: &MpcConfig,
    bundle: &ForecastBundle,
    t_initial: f64,
    mode: PlanMode,
    grid: &[f64],
    comfort: &ComfortAssumptions,
) -> Result<TuningResult, OptimizerError> {
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) || grid.iter().any(|p| !(*p >= 0.0)) {
        return Err(OptimizerError::PriceGrid);
    }
    let candidates: Vec<Result<PriceCandidate, OptimizerError>> = std::thread::scope(|s| {
        let handles: Vec<_> = grid
            .iter()
            .map(|&price| {
                s.spawn(move || {
                    let cfg = MpcConfig { pi_t: price, ..config.clone() };
                    let p = plan(&cfg, bundle, t_initial, mode, config.t_pref)?;
                    let mean_ppd = if p.is_optimal() { Some(plan_mean_ppd(&p, bundle, comfort)?) } else { None };
                    Ok(PriceCandidate { price, mean_ppd })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("tuning worker panicked")).collect()
    });
    let sweep = candidates.into_iter().collect::<Result<Vec<_>, _>>()?;
    if sweep.iter().all(|c| c.mean_ppd.is_none()) {
        return Err(OptimizerError::TuningInfeasible);
    }
    let chosen = sweep.iter().find(|c| c.mean_ppd.is_some_and(|p| p <= PPD_ACCEPTABLE));
    let (price, threshold_met) = match chosen {
        Some(c) => (1.1 * c.price, true),
        None => {
            let max = *grid.last().expect("non-empty grid");
            warn!("no candidate discomfort price keeps mean PPD at or below {PPD_ACCEPTABLE} %; using the grid maximum");
            (1.1 * max, false)
        }
    };
    Ok(TuningResult { price, threshold_met, sweep })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_window_is_half_open() {
        let s = PowerLimitSchedule::default();
        assert_eq!(s.limit_at(17), Some(2.5));
        assert_eq!(s.limit_at(16), Some(2.5));
        assert_eq!(s.limit_at(20), None);
        assert_eq!(s.limit_at(15), None);
        assert_eq!(power_limit_schedule(23, 3.0, (22, 2)), Some(3.0));
        assert_eq!(power_limit_schedule(1, 3.0, (22, 2)), Some(3.0));
        assert_eq!(power_limit_schedule(2, 3.0, (22, 2)), None);
    }

    #[test]
    fn layout_counts() {
        let c = VariableLayout::new(1, PlanMode::Cost);
        assert_eq!(c.n_vars(), 7);
        let p = VariableLayout::new(24, PlanMode::PowerLimit);
        assert_eq!(p.hinge(23), p.n_vars() - 1);
        assert_eq!(p.dev_neg(24), p.hinge(0) - 1);
    }

    #[test]
    fn default_grid_spans_decades() {
        let g = default_price_grid();
        assert_eq!(g.len(), 15);
        assert!((g[0] - 1e-3).abs() < 1e-15 && (g[14] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(MpcConfig::default().validate().is_ok());
        assert!(MpcConfig { delta: 0.0, ..Default::default() }.validate().is_err());
        assert!(MpcConfig { pi_t: -1.0, ..Default::default() }.validate().is_err());
        assert!(MpcConfig { energy_prices: Some(vec![0.1; 3]), ..Default::default() }.validate().is_err());
    }
}
