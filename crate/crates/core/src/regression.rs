//! Ordinary least squares shared by the identification and fitting routines.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coef: DVector<f64>,
    pub residuals: DVector<f64>,
    /// Unbiased residual variance; zero when the fit has no spare degrees of freedom.
    pub sigma2: f64,
    /// Coefficient covariance `sigma2 * (XᵀX)⁻¹`.
    pub covariance: DMatrix<f64>,
    pub r_squared: f64,
}

impl OlsFit {
    pub fn std_error(&self, i: usize) -> f64 {
        self.covariance[(i, i)].max(0.0).sqrt()
    }

    pub fn rmse(&self) -> f64 {
        (self.residuals.norm_squared() / self.residuals.len() as f64).sqrt()
    }
}

/// Columns of the design matrix that take part in a (near-)linear dependence.
#[derive(Debug, Clone, PartialEq)]
pub struct RankDeficiency {
    pub columns: Vec<usize>,
}

const RANK_TOLERANCE: f64 = 1e-9;

/// Solves `min ‖Xβ − y‖²` after checking that `X` has full column rank.
///
/// Columns are normalised before the rank test so that the tolerance is
/// scale-free. On failure, the columns with significant weight in the null
/// direction are reported.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit, RankDeficiency> {
    let (n, p) = x.shape();
    assert_eq!(n, y.len(), "design matrix and target length differ");
    if n < p {
        return Err(RankDeficiency {
            columns: (0..p).collect(),
        });
    }
    let norms: Vec<f64> = (0..p).map(|j| x.column(j).norm()).collect();
    let zero_cols: Vec<usize> = (0..p).filter(|&j| norms[j] == 0.0).collect();
    if !zero_cols.is_empty() {
        return Err(RankDeficiency { columns: zero_cols });
    }
    let mut scaled = x.clone();
    for (j, norm) in norms.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / norm);
    }
    let svd = scaled.clone().svd(true, true);
    let s = &svd.singular_values;
    let s_max = s.max();
    let (i_min, s_min) = s.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    if s_min <= RANK_TOLERANCE * s_max {
        let v_t = svd.v_t.as_ref().expect("requested V");
        let null = v_t.row(i_min);
        let columns = (0..p).filter(|&j| null[j].abs() > 0.1).collect();
        return Err(RankDeficiency { columns });
    }
    let coef_scaled = svd.solve(y, 0.0).expect("svd computed with U and V");
    let coef = DVector::from_iterator(p, (0..p).map(|j| coef_scaled[j] / norms[j]));
    let residuals = y - x * &coef;
    let dof = n.saturating_sub(p);
    let sigma2 = if dof > 0 {
        residuals.norm_squared() / dof as f64
    } else {
        0.0
    };
    // (XᵀX)⁻¹ through the scaled SVD: V S⁻² Vᵀ, then undo the column scaling.
    let v = svd.v_t.as_ref().expect("requested V").transpose();
    let s_inv2 = DMatrix::from_diagonal(&s.map(|v| 1.0 / (v * v)));
    let mut xtx_inv = &v * s_inv2 * v.transpose();
    for i in 0..p {
        for j in 0..p {
            xtx_inv[(i, j)] /= norms[i] * norms[j];
        }
    }
    let mean = y.mean();
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - residuals.norm_squared() / ss_tot
    } else {
        1.0
    };
    Ok(OlsFit {
        coef,
        residuals,
        sigma2,
        covariance: xtx_inv * sigma2,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_line() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0]);
        let fit = ols(&x, &y).unwrap();
        assert!((fit.coef[0] - 1.0).abs() < 1e-12);
        assert!((fit.coef[1] - 2.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reports_collinear_columns() {
        let x = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.5, 1.0, 2.0, 1.5, 1.0, 2.0, 2.5]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let err = ols(&x, &y).unwrap_err();
        assert_eq!(err.columns, vec![0, 1]);
    }
}
