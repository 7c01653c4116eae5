//! Gaussian process regression with an anisotropic squared-exponential kernel.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GprError {
    #[error("need at least {needed} training rows, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("row {row} has {got} features, expected {expected}")]
    Dimension { row: usize, expected: usize, got: usize },
    #[error("non-finite feature or target at row {0}")]
    NonFinite(usize),
    #[error("kernel matrix not positive definite after jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    /// Starting (or fixed) signal variance; defaults to the target variance.
    pub signal_var: Option<f64>,
    /// Starting (or fixed) length scales in standardized units; default 1.
    pub length_scales: Option<Vec<f64>>,
    /// Starting (or fixed) noise variance; defaults to 5 % of the target variance.
    pub noise_var: Option<f64>,
    /// Maximise the log marginal likelihood over a coarse log grid.
    pub search: bool,
    /// Training rows beyond this are thinned by a fixed stride.
    pub max_train: usize,
    pub min_train: usize,
    /// Standardise features before applying the kernel.
    pub standardize: bool,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            signal_var: None,
            length_scales: None,
            noise_var: None,
            search: true,
            max_train: 360,
            min_train: 24,
            standardize: true,
        }
    }
}

impl KernelConfig {
    /// Fixed hyperparameters, no standardisation, no search.
    pub fn fixed(signal_var: f64, length_scales: Vec<f64>, noise_var: f64) -> Self {
        Self {
            signal_var: Some(signal_var),
            length_scales: Some(length_scales),
            noise_var: Some(noise_var),
            search: false,
            max_train: usize::MAX,
            min_train: 1,
            standardize: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GprModel {
    x_mean: Vec<f64>,
    x_scale: Vec<f64>,
    x_train: Vec<Vec<f64>>,
    y_mean: f64,
    weights: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    pub signal_var: f64,
    pub length_scales: Vec<f64>,
    pub noise_var: f64,
    /// Diagonal jitter that was needed on top of the noise variance.
    pub jitter: f64,
    pub log_marginal_likelihood: f64,
}

#[derive(Debug, Clone, Copy)]
struct Hyper<'a> {
    signal_var: f64,
    length_scales: &'a [f64],
    noise_var: f64,
}

fn kernel(a: &[f64], b: &[f64], h: &Hyper) -> f64 {
    let d2: f64 = a
        .iter()
        .zip(b)
        .zip(h.length_scales)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum();
    h.signal_var * (-0.5 * d2).exp()
}

struct Factorized {
    chol: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
    jitter: f64,
    lml: f64,
}

const MAX_JITTER_RATIO: f64 = 1e-4;

fn factorize(x: &[Vec<f64>], y: &DVector<f64>, h: &Hyper) -> Result<Factorized, GprError> {
    let n = x.len();
    let base = DMatrix::from_fn(n, n, |i, j| kernel(&x[i], &x[j], h)) + DMatrix::identity(n, n) * h.noise_var;
    let mut jitter = 0.0;
    loop {
        let k = if jitter > 0.0 {
            &base + DMatrix::identity(n, n) * jitter
        } else {
            base.clone()
        };
        if let Some(chol) = Cholesky::new(k) {
            let weights = chol.solve(y);
            let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
            let lml = -0.5 * y.dot(&weights) - 0.5 * log_det - 0.5 * n as f64 * std::f64::consts::TAU.ln();
            return Ok(Factorized { chol, weights, jitter, lml });
        }
        jitter = if jitter == 0.0 { 1e-10 * h.signal_var.max(1e-12) } else { jitter * 10.0 };
        if jitter > MAX_JITTER_RATIO * h.signal_var.max(1e-12) {
            return Err(GprError::NotPositiveDefinite { jitter });
        }
    }
}

/// Fits a GP to `(features, target)` rows.
pub fn gpr_fit(features: &[Vec<f64>], targets: &[f64], config: &KernelConfig) -> Result<GprModel, GprError> {
    let n_all = features.len().min(targets.len());
    if n_all < config.min_train {
        return Err(GprError::InsufficientData { needed: config.min_train, got: n_all });
    }
    let d = features[0].len();
    for (i, row) in features.iter().enumerate().take(n_all) {
        if row.len() != d {
            return Err(GprError::Dimension { row: i, expected: d, got: row.len() });
        }
        if !row.iter().all(|v| v.is_finite()) || !targets[i].is_finite() {
            return Err(GprError::NonFinite(i));
        }
    }
    let stride = n_all.div_ceil(config.max_train.max(1));
    let idx: Vec<usize> = (0..n_all).step_by(stride.max(1)).collect();
    let n = idx.len();

    let (x_mean, x_scale) = if config.standardize {
        let mean: Vec<f64> = (0..d).map(|j| idx.iter().map(|&i| features[i][j]).sum::<f64>() / n as f64).collect();
        let scale: Vec<f64> = (0..d)
            .map(|j| {
                let var = idx.iter().map(|&i| (features[i][j] - mean[j]).powi(2)).sum::<f64>() / n as f64;
                if var > 1e-12 { var.sqrt() } else { 1.0 }
            })
            .collect();
        (mean, scale)
    } else {
        (vec![0.0; d], vec![1.0; d])
    };
    let x: Vec<Vec<f64>> = idx
        .iter()
        .map(|&i| (0..d).map(|j| (features[i][j] - x_mean[j]) / x_scale[j]).collect())
        .collect();
    let y_mean = idx.iter().map(|&i| targets[i]).sum::<f64>() / n as f64;
    let y = DVector::from_iterator(n, idx.iter().map(|&i| targets[i] - y_mean));
    let y_var = y.norm_squared() / n as f64;
    let y_var = if y_var > 1e-12 { y_var } else { 1.0 };

    let mut signal_var = config.signal_var.unwrap_or(y_var);
    let mut length_scales = config.length_scales.clone().unwrap_or_else(|| vec![1.0; d]);
    if length_scales.len() != d {
        return Err(GprError::Dimension { row: 0, expected: d, got: length_scales.len() });
    }
    let mut noise_var = config.noise_var.unwrap_or(0.05 * y_var);

    if config.search {
        // Coordinate sweeps over a 3-point log grid per hyperparameter.
        let eval = |s: f64, l: &[f64], nv: f64| {
            factorize(&x, &y, &Hyper { signal_var: s, length_scales: l, noise_var: nv })
                .map(|f| f.lml)
                .unwrap_or(f64::NEG_INFINITY)
        };
        let mut best = eval(signal_var, &length_scales, noise_var);
        for _sweep in 0..2 {
            for p in 0..d + 2 {
                for factor in [1.0 / 3.0, 3.0] {
                    let (mut s, mut l, mut nv) = (signal_var, length_scales.clone(), noise_var);
                    match p {
                        0 => s *= factor,
                        p if p == d + 1 => nv = (nv * factor).max(1e-6 * y_var),
                        p => l[p - 1] *= factor,
                    }
                    let v = eval(s, &l, nv);
                    if v > best {
                        best = v;
                        signal_var = s;
                        length_scales = l;
                        noise_var = nv;
                    }
                }
            }
        }
    }

    let h = Hyper { signal_var, length_scales: &length_scales, noise_var };
    let f = factorize(&x, &y, &h)?;
    Ok(GprModel {
        x_mean,
        x_scale,
        x_train: x,
        y_mean,
        weights: f.weights,
        chol: f.chol,
        signal_var,
        length_scales,
        noise_var,
        jitter: f.jitter,
        log_marginal_likelihood: f.lml,
    })
}

impl GprModel {
    pub fn n_features(&self) -> usize {
        self.x_mean.len()
    }

    pub fn n_train(&self) -> usize {
        self.x_train.len()
    }

    pub fn target_mean(&self) -> f64 {
        self.y_mean
    }

    /// Posterior mean and latent-function variance at `features`.
    pub fn predict(&self, features: &[f64]) -> Result<(f64, f64), GprError> {
        if features.len() != self.n_features() {
            return Err(GprError::Dimension { row: 0, expected: self.n_features(), got: features.len() });
        }
        let z: Vec<f64> = features
            .iter()
            .zip(&self.x_mean)
            .zip(&self.x_scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect();
        let h = Hyper { signal_var: self.signal_var, length_scales: &self.length_scales, noise_var: self.noise_var };
        let k_star = DVector::from_iterator(self.n_train(), self.x_train.iter().map(|xi| kernel(xi, &z, &h)));
        let mean = self.y_mean + k_star.dot(&self.weights);
        let v = self.chol.solve(&k_star);
        let var = (self.signal_var - k_star.dot(&v)).max(0.0);
        Ok((mean, var))
    }

    pub fn predict_mean(&self, features: &[f64]) -> Result<f64, GprError> {
        self.predict(features).map(|(m, _)| m)
    }
}

/// Free-function form of [`GprModel::predict`].
pub fn gpr_predict(model: &GprModel, features: &[f64]) -> Result<(f64, f64), GprError> {
    model.predict(features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_point_closed_form() {
        // k(a,b) = s·exp(−(a−b)²/(2l²)), K = [[s+n, c], [c, s+n]]
        let (s, l, nv) = (2.0, 1.5, 0.1);
        let x = vec![vec![0.0], vec![1.0]];
        let y = [1.0, 3.0];
        let model = gpr_fit(&x, &y, &KernelConfig::fixed(s, vec![l], nv)).unwrap();
        let xs = 0.4;
        let kf = |a: f64, b: f64| s * (-(a - b) * (a - b) / (2.0 * l * l)).exp();
        let (a, c) = (s + nv, kf(0.0, 1.0));
        let det = a * a - c * c;
        let ym = 2.0;
        let (r0, r1) = (y[0] - ym, y[1] - ym);
        let w0 = (a * r0 - c * r1) / det;
        let w1 = (-c * r0 + a * r1) / det;
        let (k0, k1) = (kf(xs, 0.0), kf(xs, 1.0));
        let mean = ym + k0 * w0 + k1 * w1;
        let quad = (a * k0 * k0 - 2.0 * c * k0 * k1 + a * k1 * k1) / det;
        let (m, v) = model.predict(&[xs]).unwrap();
        assert_abs_diff_eq!(m, mean, epsilon = 1e-12);
        assert_abs_diff_eq!(v, s - quad, epsilon = 1e-12);
    }

    #[test]
    fn interpolates_noiseless_training_points() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 * 0.7, (i as f64).sin()]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0].cos() + r[1]).collect();
        let model = gpr_fit(&x, &y, &KernelConfig::fixed(1.0, vec![1.0, 1.0], 0.0)).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            let (m, v) = model.predict(xi).unwrap();
            assert_abs_diff_eq!(m, *yi, epsilon = 1e-6);
            assert!(v < 1e-6);
        }
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let y = [1.0, 2.0, 0.5, 1.5, 3.0];
        let model = gpr_fit(&x, &y, &KernelConfig::fixed(0.7, vec![1.0], 0.01)).unwrap();
        let (m, v) = model.predict(&[1e3]).unwrap();
        assert_abs_diff_eq!(m, 1.6, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 0.7, epsilon = 1e-12);
    }

    #[test]
    fn duplicate_rows_escalate_jitter() {
        let x = vec![vec![1.0]; 4];
        let y = [2.0; 4];
        let model = gpr_fit(&x, &y, &KernelConfig::fixed(1.0, vec![1.0], 0.0)).unwrap();
        assert!(model.jitter > 0.0);
        assert_abs_diff_eq!(model.predict(&[1.0]).unwrap().0, 2.0, epsilon = 1e-6);
    }

    #[test]
    fn dimension_mismatch_is_usage_error() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, 1.0]).collect();
        let y: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let model = gpr_fit(&x, &y, &KernelConfig::default()).unwrap();
        assert!(matches!(model.predict(&[1.0]), Err(GprError::Dimension { .. })));
        assert!(matches!(
            gpr_fit(&x[..10], &y[..10], &KernelConfig::default()),
            Err(GprError::InsufficientData { .. })
        ));
    }

    #[test]
    fn search_improves_likelihood() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 * 0.25]).collect();
        let y: Vec<f64> = x.iter().map(|r| (r[0]).sin() * 2.0).collect();
        let mut fixed = KernelConfig::default();
        fixed.search = false;
        let a = gpr_fit(&x, &y, &fixed).unwrap();
        let b = gpr_fit(&x, &y, &KernelConfig::default()).unwrap();
        assert!(b.log_marginal_likelihood >= a.log_marginal_likelihood);
    }
}
