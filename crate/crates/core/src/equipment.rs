//! Heat pump COP maps and sensible-heat-ratio models.
//!
//! Two formulations are supported. The sensible one treats SHR as a constant
//! and COP as a quadratic in outdoor dry-bulb. The latent one predicts SHR
//! linearly from the return-air wet-bulb and COP as a bivariate quadratic in
//! wet-bulb and outdoor dry-bulb.

use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::regression::ols;

pub mod fixture;

/// SHR assumed by the sensible formulation (manufacturer specification).
pub const CONSTANT_SHR: f64 = 0.86;
/// Lower clamp for predicted SHR; the model output is kept in `(0, 1]`.
pub const SHR_FLOOR: f64 = 0.05;

#[derive(Debug, Error)]
pub enum EquipmentError {
    #[error("need at least {needed} rows, got {got}")]
    InsufficientRows { needed: usize, got: usize },
    #[error("fit is rank deficient (inputs do not span the model terms)")]
    RankDeficient,
    #[error("fitted map violates {invariant} at t_wb = {t_wb:?}, t_out = {t_out}")]
    InvariantViolated {
        invariant: &'static str,
        t_wb: Option<f64>,
        t_out: f64,
    },
    #[error("row {row}: {message}")]
    Data { row: usize, message: String },
    #[error("latent COP map requires a wet-bulb temperature")]
    MissingWetBulb,
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One manufacturer performance point at the reference indoor dry-bulb.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceRow {
    pub t_wb_c: f64,
    pub t_out_c: f64,
    pub sensible_kw: f64,
    pub total_kw: f64,
    pub power_kw: f64,
}

impl PerformanceRow {
    pub fn cop(&self) -> f64 {
        self.total_kw / self.power_kw
    }

    pub fn shr(&self) -> f64 {
        self.sensible_kw / self.total_kw
    }
}

pub fn read_performance_csv(path: &Path) -> Result<Vec<PerformanceRow>, EquipmentError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let rows = rdr.deserialize().collect::<Result<Vec<PerformanceRow>, _>>()?;
    Ok(rows)
}

pub fn write_performance_csv(path: &Path, rows: &[PerformanceRow]) -> Result<(), EquipmentError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopSample {
    pub t_wb: f64,
    pub t_out: f64,
    pub cop: f64,
}

impl From<&PerformanceRow> for CopSample {
    fn from(r: &PerformanceRow) -> Self {
        Self {
            t_wb: r.t_wb_c,
            t_out: r.t_out_c,
            cop: r.cop(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    Sensible,
    Latent,
}

/// `cop = c0 + c1·t_out + c2·t_out²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopMapSensible {
    pub coef: [f64; 3],
    pub t_out_range: (f64, f64),
    pub r_squared: f64,
}

/// `cop = c0 + c1·wb + c2·out + c3·wb² + c4·wb·out + c5·out²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopMapLatent {
    pub coef: [f64; 6],
    pub t_wb_range: (f64, f64),
    pub t_out_range: (f64, f64),
    pub reference_indoor_db: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CopMap {
    Sensible(CopMapSensible),
    Latent(CopMapLatent),
}

fn clamp_warn(value: f64, range: (f64, f64), name: &str) -> f64 {
    let clamped = value.clamp(range.0, range.1);
    if clamped != value {
        warn!("{name} = {value:.2} outside fitted range [{:.1}, {:.1}]; clamped", range.0, range.1);
    }
    clamped
}

impl CopMapSensible {
    fn eval_raw(&self, t_out: f64) -> f64 {
        let c = &self.coef;
        c[0] + c[1] * t_out + c[2] * t_out * t_out
    }

    fn slope(&self, t_out: f64) -> f64 {
        self.coef[1] + 2.0 * self.coef[2] * t_out
    }

    pub fn cop(&self, t_out: f64) -> f64 {
        self.eval_raw(clamp_warn(t_out, self.t_out_range, "t_out"))
    }
}

impl CopMapLatent {
    fn eval_raw(&self, t_wb: f64, t_out: f64) -> f64 {
        let c = &self.coef;
        c[0] + c[1] * t_wb + c[2] * t_out + c[3] * t_wb * t_wb + c[4] * t_wb * t_out + c[5] * t_out * t_out
    }

    fn slope_out(&self, t_wb: f64, t_out: f64) -> f64 {
        self.coef[2] + self.coef[4] * t_wb + 2.0 * self.coef[5] * t_out
    }

    pub fn cop(&self, t_wb: f64, t_out: f64) -> f64 {
        self.eval_raw(
            clamp_warn(t_wb, self.t_wb_range, "t_wb"),
            clamp_warn(t_out, self.t_out_range, "t_out"),
        )
    }
}

impl CopMap {
    pub fn cop(&self, t_out: f64, t_wb: Option<f64>) -> Result<f64, EquipmentError> {
        match self {
            CopMap::Sensible(m) => Ok(m.cop(t_out)),
            CopMap::Latent(m) => Ok(m.cop(t_wb.ok_or(EquipmentError::MissingWetBulb)?, t_out)),
        }
    }

    pub fn r_squared(&self) -> f64 {
        match self {
            CopMap::Sensible(m) => m.r_squared,
            CopMap::Latent(m) => m.r_squared,
        }
    }
}

const CHECK_GRID: usize = 25;

fn grid(range: (f64, f64)) -> impl Iterator<Item = f64> {
    (0..=CHECK_GRID).map(move |i| range.0 + (range.1 - range.0) * i as f64 / CHECK_GRID as f64)
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Least-squares polynomial COP fit, rejected if COP is non-positive or
/// does not fall with outdoor temperature anywhere in the sampled range.
pub fn fit_cop(samples: &[CopSample], form: Formulation, reference_indoor_db: f64) -> Result<CopMap, EquipmentError> {
    let n_coef = match form {
        Formulation::Sensible => 3,
        Formulation::Latent => 6,
    };
    let needed = 10.max(n_coef);
    if samples.len() < needed {
        return Err(EquipmentError::InsufficientRows {
            needed,
            got: samples.len(),
        });
    }
    let y = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.cop));
    let t_out_range = span(samples.iter().map(|s| s.t_out));
    match form {
        Formulation::Sensible => {
            let x = DMatrix::from_fn(samples.len(), 3, |i, j| samples[i].t_out.powi(j as i32));
            let fit = ols(&x, &y).map_err(|_| EquipmentError::RankDeficient)?;
            let map = CopMapSensible {
                coef: [fit.coef[0], fit.coef[1], fit.coef[2]],
                t_out_range,
                r_squared: fit.r_squared,
            };
            for t in grid(t_out_range) {
                if map.eval_raw(t) <= 0.0 {
                    return Err(EquipmentError::InvariantViolated { invariant: "COP > 0", t_wb: None, t_out: t });
                }
                if map.slope(t) >= 0.0 {
                    return Err(EquipmentError::InvariantViolated { invariant: "dCOP/dT_out < 0", t_wb: None, t_out: t });
                }
            }
            Ok(CopMap::Sensible(map))
        }
        Formulation::Latent => {
            let x = DMatrix::from_fn(samples.len(), 6, |i, j| {
                let (wb, out) = (samples[i].t_wb, samples[i].t_out);
                [1.0, wb, out, wb * wb, wb * out, out * out][j]
            });
            let fit = ols(&x, &y).map_err(|_| EquipmentError::RankDeficient)?;
            let mut coef = [0.0; 6];
            coef.iter_mut().enumerate().for_each(|(i, c)| *c = fit.coef[i]);
            let map = CopMapLatent {
                coef,
                t_wb_range: span(samples.iter().map(|s| s.t_wb)),
                t_out_range,
                reference_indoor_db,
                r_squared: fit.r_squared,
            };
            for wb in grid(map.t_wb_range) {
                for out in grid(t_out_range) {
                    if map.eval_raw(wb, out) <= 0.0 {
                        return Err(EquipmentError::InvariantViolated { invariant: "COP > 0", t_wb: Some(wb), t_out: out });
                    }
                    if map.slope_out(wb, out) >= 0.0 {
                        return Err(EquipmentError::InvariantViolated {
                            invariant: "dCOP/dT_out < 0",
                            t_wb: Some(wb),
                            t_out: out,
                        });
                    }
                }
            }
            Ok(CopMap::Latent(map))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ShrModel {
    Constant(f64),
    /// `shr = a·t_wb + b` before clamping.
    Linear { a: f64, b: f64 },
}

impl ShrModel {
    pub fn validate(&self) -> bool {
        match *self {
            ShrModel::Constant(v) => v > 0.0 && v <= 1.0,
            ShrModel::Linear { a, b } => a.is_finite() && b.is_finite(),
        }
    }
}

/// Sensible heat ratio at the given return-air wet-bulb, always in `(0, 1]`.
pub fn shr(model: &ShrModel, t_wb: f64) -> f64 {
    match *model {
        ShrModel::Constant(v) => v.clamp(SHR_FLOOR, 1.0),
        ShrModel::Linear { a, b } => (a * t_wb + b).clamp(SHR_FLOOR, 1.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrFit {
    pub model: ShrModel,
    pub r_squared: f64,
    pub rmse: f64,
}

/// Linear regression of SHR on wet-bulb from `(t_wb, sensible, total)` rows.
pub fn fit_shr(rows: &[(f64, f64, f64)]) -> Result<ShrFit, EquipmentError> {
    if rows.len() < 5 {
        return Err(EquipmentError::InsufficientRows { needed: 5, got: rows.len() });
    }
    for (i, &(_, sensible, total)) in rows.iter().enumerate() {
        if !(total > 0.0) {
            return Err(EquipmentError::Data { row: i, message: format!("total rate {total} must be positive") });
        }
        if sensible > total {
            return Err(EquipmentError::Data {
                row: i,
                message: format!("sensible rate {sensible} exceeds total rate {total}"),
            });
        }
    }
    let x = DMatrix::from_fn(rows.len(), 2, |i, j| if j == 0 { rows[i].0 } else { 1.0 });
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1 / r.2));
    let fit = ols(&x, &y).map_err(|_| EquipmentError::RankDeficient)?;
    Ok(ShrFit {
        model: ShrModel::Linear { a: fit.coef[0], b: fit.coef[1] },
        r_squared: fit.r_squared,
        rmse: fit.rmse(),
    })
}

/// Fitted maps for both formulations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquipmentModel {
    pub cop_sensible: CopMapSensible,
    pub cop_latent: CopMapLatent,
    pub shr_linear: ShrModel,
    pub shr_constant: ShrModel,
    pub shr_r_squared: f64,
}

impl EquipmentModel {
    /// Fits every map from a performance table. The sensible COP map uses the
    /// rows at `nominal_wb`, the rating wet-bulb for the constant SHR.
    pub fn fit(rows: &[PerformanceRow], nominal_wb: f64, reference_indoor_db: f64) -> Result<Self, EquipmentError> {
        let all: Vec<CopSample> = rows.iter().map(CopSample::from).collect();
        let nominal: Vec<CopSample> = all.iter().copied().filter(|s| (s.t_wb - nominal_wb).abs() < 1e-9).collect();
        let cop_sensible = match fit_cop(&nominal, Formulation::Sensible, reference_indoor_db)? {
            CopMap::Sensible(m) => m,
            CopMap::Latent(_) => unreachable!(),
        };
        let cop_latent = match fit_cop(&all, Formulation::Latent, reference_indoor_db)? {
            CopMap::Latent(m) => m,
            CopMap::Sensible(_) => unreachable!(),
        };
        let shr_rows: Vec<_> = rows.iter().map(|r| (r.t_wb_c, r.sensible_kw, r.total_kw)).collect();
        let shr_fit = fit_shr(&shr_rows)?;
        Ok(Self {
            cop_sensible,
            cop_latent,
            shr_linear: shr_fit.model,
            shr_constant: ShrModel::Constant(CONSTANT_SHR),
            shr_r_squared: shr_fit.r_squared,
        })
    }

    /// The bundled manufacturer-like table.
    pub fn fixture() -> Self {
        Self::fit(&fixture::performance_table(), fixture::NOMINAL_WB, fixture::REFERENCE_INDOOR_DB)
            .expect("fixture table fits")
    }

    /// (COP, SHR) under a formulation. The latent one needs a wet-bulb.
    pub fn predict(&self, form: Formulation, t_out: f64, t_wb: Option<f64>) -> Result<(f64, f64), EquipmentError> {
        match form {
            Formulation::Sensible => Ok((self.cop_sensible.cop(t_out), shr(&self.shr_constant, 0.0))),
            Formulation::Latent => {
                let wb = t_wb.ok_or(EquipmentError::MissingWetBulb)?;
                Ok((self.cop_latent.cop(wb, t_out), shr(&self.shr_linear, wb)))
            }
        }
    }
}

/// Electrical power drawn to deliver sensible cooling `q_cool`.
pub fn electrical_power(q_cool: f64, shr: f64, cop: f64) -> f64 {
    q_cool / (shr * cop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fixture_fits_meet_quality_targets() {
        let rows = fixture::performance_table();
        let latent = fit_cop(&rows.iter().map(CopSample::from).collect::<Vec<_>>(), Formulation::Latent, 24.0).unwrap();
        assert!(latent.r_squared() >= 0.99, "latent R² = {}", latent.r_squared());
        let shr_fit = fit_shr(&rows.iter().map(|r| (r.t_wb_c, r.sensible_kw, r.total_kw)).collect::<Vec<_>>()).unwrap();
        assert!(shr_fit.r_squared >= 0.97, "SHR R² = {}", shr_fit.r_squared);
        match shr_fit.model {
            ShrModel::Linear { a, .. } => assert!(a < 0.0),
            _ => unreachable!(),
        }
    }

    #[test]
    fn exact_quadratic_recovered() {
        let truth = [6.0, 0.05, -0.04, -0.001, -0.0008, -0.0015];
        let mut samples = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                let (wb, out) = (14.0 + 2.0 * i as f64, 20.0 + 5.0 * j as f64);
                let cop = truth[0] + truth[1] * wb + truth[2] * out + truth[3] * wb * wb + truth[4] * wb * out + truth[5] * out * out;
                samples.push(CopSample { t_wb: wb, t_out: out, cop });
            }
        }
        let CopMap::Latent(map) = fit_cop(&samples, Formulation::Latent, 24.0).unwrap() else { unreachable!() };
        for (got, want) in map.coef.iter().zip(truth) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-9);
        }
    }

    #[test]
    fn underdetermined_latent_fit_rejected() {
        let s = [CopSample { t_wb: 17.0, t_out: 30.0, cop: 5.0 }; 3];
        assert!(matches!(
            fit_cop(&s, Formulation::Latent, 24.0),
            Err(EquipmentError::InsufficientRows { got: 3, .. })
        ));
    }

    #[test]
    fn increasing_cop_is_rejected() {
        let s: Vec<_> = (0..12).map(|i| CopSample { t_wb: 17.0, t_out: 20.0 + i as f64, cop: 3.0 + 0.1 * i as f64 }).collect();
        assert!(matches!(
            fit_cop(&s, Formulation::Sensible, 24.0),
            Err(EquipmentError::InvariantViolated { .. })
        ));
    }

    #[test]
    fn sensible_map_reads_back_rating_point() {
        let model = EquipmentModel::fixture();
        let rated = fixture::performance_table()
            .into_iter()
            .find(|r| r.t_wb_c == fixture::NOMINAL_WB && r.t_out_c == fixture::RATING_T_OUT)
            .unwrap();
        assert_abs_diff_eq!(model.cop_sensible.cop(fixture::RATING_T_OUT), rated.cop(), epsilon = 0.05);
        assert_abs_diff_eq!(rated.cop(), fixture::RATED_COP, epsilon = 0.05);
    }

    #[test]
    fn cop_clamps_at_range_edges() {
        let model = EquipmentModel::fixture();
        let (lo, hi) = model.cop_sensible.t_out_range;
        assert_eq!(model.cop_sensible.cop(hi + 10.0), model.cop_sensible.cop(hi));
        assert_eq!(model.cop_sensible.cop(lo - 10.0), model.cop_sensible.cop(lo));
        let latent = CopMap::Latent(model.cop_latent.clone());
        assert!(matches!(latent.cop(30.0, None), Err(EquipmentError::MissingWetBulb)));
    }

    #[test]
    fn latent_map_decreases_with_outdoor_temperature() {
        let m = EquipmentModel::fixture().cop_latent;
        for wb in grid(m.t_wb_range) {
            let mut prev = f64::INFINITY;
            for out in grid(m.t_out_range) {
                let c = m.cop(wb, out);
                assert!(c < prev && c > 0.0);
                prev = c;
            }
        }
    }

    #[test]
    fn shr_models() {
        assert_eq!(shr(&ShrModel::Constant(0.86), 12.0), 0.86);
        assert_eq!(shr(&ShrModel::Constant(0.86), 25.0), 0.86);
        let lin = ShrModel::Linear { a: -0.035, b: 1.455 };
        assert_eq!(shr(&lin, 0.0), 1.0);
        assert!(shr(&lin, 100.0) > 0.0);
    }

    #[test]
    fn shr_fit_errors() {
        let bad = vec![(17.0, 5.0, 4.0); 6];
        assert!(matches!(fit_shr(&bad), Err(EquipmentError::Data { row: 0, .. })));
        let flat: Vec<_> = (0..6).map(|i| (17.0, 3.0 + 0.1 * i as f64, 4.0)).collect();
        assert!(matches!(fit_shr(&flat), Err(EquipmentError::RankDeficient)));
        let exact: Vec<_> = (0..6).map(|i| {
            let wb = 14.0 + i as f64;
            (wb, (1.4 - 0.03 * wb) * 10.0, 10.0)
        }).collect();
        let ShrModel::Linear { a, b } = fit_shr(&exact).unwrap().model else { unreachable!() };
        assert_abs_diff_eq!(a, -0.03, epsilon = 1e-9);
        assert_abs_diff_eq!(b, 1.4, epsilon = 1e-9);
    }

    #[test]
    fn lower_shr_raises_power() {
        for i in 1..20 {
            let q = 0.5 * i as f64;
            assert!(electrical_power(q, 0.7, 4.5) > electrical_power(q, 0.86, 4.5));
        }
    }
}
