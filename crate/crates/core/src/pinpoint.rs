//! Probabilistic PCA and the pinpointability check.
//!
//! A K-factor PPCA model `x = μ + θc + ε`, `c ~ N(0, I_K)`, `ε ~ N(0, σ²I)`
//! is fitted to the observations. The posterior of each row's latent factor
//! then has mean `M⁻¹θᵀ(x − μ)` and covariance `σ²M⁻¹` with `M = θᵀθ + σ²I`.
//! When every posterior variance is small the factors are treated as
//! recoverable from the observations and their posterior means stand in
//! for the unobserved common causes.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::serial::{MatrixEncoding, MatrixJson};

/// Default threshold on the largest posterior variance.
pub const DEFAULT_PINPOINT_THRESHOLD: f64 = 0.01;

const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    /// Maximum likelihood from the eigendecomposition of the sample covariance.
    #[default]
    Closed,
    /// Expectation maximisation started from a fixed deterministic point.
    Em,
}

/// A fitted PPCA model.
#[derive(Debug, Clone, PartialEq)]
pub struct PpcaFit {
    /// m×K loading matrix with orthogonal columns, largest-magnitude entry
    /// of each column positive.
    pub loadings: DMatrix<f64>,
    pub noise_variance: f64,
    pub mean: DVector<f64>,
    /// `M = θᵀθ + σ²I`.
    pub precision_factor: DMatrix<f64>,
}

impl PpcaFit {
    pub fn latent_dim(&self) -> usize {
        self.loadings.ncols()
    }

    pub fn dim(&self) -> usize {
        self.loadings.nrows()
    }

    fn from_parts(mut loadings: DMatrix<f64>, noise_variance: f64, mean: DVector<f64>) -> Self {
        for mut col in loadings.column_iter_mut() {
            let pivot = col
                .iter()
                .copied()
                .fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            if pivot < 0.0 {
                col.neg_mut();
            }
        }
        let k = loadings.ncols();
        let precision_factor = loadings.transpose() * &loadings + DMatrix::identity(k, k) * noise_variance;
        Self {
            loadings,
            noise_variance,
            mean,
            precision_factor,
        }
    }

    fn m_inverse(&self) -> DMatrix<f64> {
        self.precision_factor
            .clone()
            .cholesky()
            .expect("M = θᵀθ + σ²I is positive definite")
            .inverse()
    }

    /// Full m×m model covariance `θθᵀ + σ²I`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.dim();
        &self.loadings * self.loadings.transpose() + DMatrix::identity(m, m) * self.noise_variance
    }

    pub fn to_json(&self, encoding: MatrixEncoding) -> Result<String> {
        let f = PpcaFile {
            schema_version: SCHEMA_VERSION,
            latent_dim: self.latent_dim(),
            noise_variance: self.noise_variance,
            mean: MatrixJson::encode_vector(&self.mean, encoding),
            loadings: MatrixJson::encode(&self.loadings, encoding),
        };
        Ok(serde_json::to_string_pretty(&f)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: PpcaFile = serde_json::from_str(text)?;
        if f.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported PPCA schema version {}",
                f.schema_version
            )));
        }
        let loadings = f.loadings.decode()?;
        let mean = f.mean.decode_vector()?;
        if loadings.ncols() != f.latent_dim || loadings.nrows() != mean.len() {
            return Err(Error::Format("PPCA loadings and mean have inconsistent shapes".into()));
        }
        if !(f.noise_variance > 0.0) {
            return Err(Error::Format("PPCA noise variance must be positive".into()));
        }
        let k = loadings.ncols();
        let precision_factor = loadings.transpose() * &loadings + DMatrix::identity(k, k) * f.noise_variance;
        Ok(Self {
            loadings,
            noise_variance: f.noise_variance,
            mean,
            precision_factor,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct PpcaFile {
    schema_version: u32,
    latent_dim: usize,
    noise_variance: f64,
    mean: MatrixJson,
    loadings: MatrixJson,
}

fn sample_covariance(x: &DataMatrix) -> DMatrix<f64> {
    let xc = x.centered();
    xc.transpose() * &xc / x.nrows() as f64
}

/// Eigenpairs sorted by decreasing eigenvalue.
fn sorted_eigen(s: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let SymmetricEigen {
        eigenvalues,
        eigenvectors,
    } = s.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]));
    let values = order.iter().map(|&i| eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(s.nrows(), order.len(), |r, c| eigenvectors[(r, order[c])]);
    (values, vectors)
}

fn check_dims(x: &DataMatrix, k: usize) -> Result<()> {
    if k == 0 || k >= x.ncols() {
        return Err(Error::input(format!(
            "latent dimension must satisfy 1 ≤ K < m = {}, got {k}",
            x.ncols()
        )));
    }
    Ok(())
}

/// Fits by the closed-form maximum-likelihood solution.
pub fn fit_ppca(x: &DataMatrix, k: usize) -> Result<PpcaFit> {
    fit_ppca_with(x, k, FitMethod::Closed)
}

pub fn fit_ppca_with(x: &DataMatrix, k: usize, method: FitMethod) -> Result<PpcaFit> {
    check_dims(x, k)?;
    let s = sample_covariance(x);
    match method {
        FitMethod::Closed => fit_closed(x, &s, k),
        FitMethod::Em => fit_em(x, &s, k),
    }
}

fn noise_floor(top: f64) -> f64 {
    (top.abs() * 1e-12).max(f64::MIN_POSITIVE)
}

fn fit_closed(x: &DataMatrix, s: &DMatrix<f64>, k: usize) -> Result<PpcaFit> {
    let m = s.nrows();
    let (values, vectors) = sorted_eigen(s);
    if !(values[0] > 0.0) {
        return Err(Error::DegenerateData("observations have zero variance".into()));
    }
    let sigma2 = (values[k..].iter().sum::<f64>() / (m - k) as f64).max(noise_floor(values[0]));
    let loadings = DMatrix::from_fn(m, k, |r, c| vectors[(r, c)] * (values[c] - sigma2).max(0.0).sqrt());
    Ok(PpcaFit::from_parts(loadings, sigma2, x.column_means().clone()))
}

fn fit_em(x: &DataMatrix, s: &DMatrix<f64>, k: usize) -> Result<PpcaFit> {
    let m = s.nrows();
    let scale = s.trace() / m as f64;
    if !(scale > 0.0) {
        return Err(Error::DegenerateData("observations have zero variance".into()));
    }
    // Deterministic start: a spread of unit-ish directions.
    let mut w = DMatrix::from_fn(m, k, |r, c| ((1 + r * (c + 2)) as f64).sin() * scale.sqrt());
    let mut sigma2 = scale;
    let eye = DMatrix::<f64>::identity(k, k);
    for _ in 0..20_000 {
        let mm = w.transpose() * &w + &eye * sigma2;
        let m_inv = mm
            .cholesky()
            .ok_or_else(|| Error::numerical("EM: M not positive definite"))?
            .inverse();
        let sw = s * &w;
        let inner = &eye * sigma2 + &m_inv * w.transpose() * &sw;
        let inner_inv = inner
            .try_inverse()
            .ok_or_else(|| Error::numerical("EM: singular update"))?;
        let w_new = &sw * inner_inv;
        let sigma2_new = ((s - &sw * &m_inv * w_new.transpose()).trace() / m as f64).max(noise_floor(scale));
        let delta = (&w_new - &w).amax() + (sigma2_new - sigma2).abs();
        w = w_new;
        sigma2 = sigma2_new;
        if delta < 1e-13 * (1.0 + scale) {
            break;
        }
    }
    if !w.iter().all(|v| v.is_finite()) || !sigma2.is_finite() {
        return Err(Error::numerical("EM diverged"));
    }
    // Rotate to orthogonal columns so the result is comparable to the closed form.
    let svd = w.svd(true, false);
    let u = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let loadings = DMatrix::from_fn(m, k, |r, c| u[(r, order[c])] * svd.singular_values[order[c]]);
    Ok(PpcaFit::from_parts(loadings, sigma2, x.column_means().clone()))
}

/// Posterior mean of the latent factor for one observation.
pub fn posterior_mean(fit: &PpcaFit, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != fit.dim() {
        return Err(Error::input(format!(
            "observation has {} entries, model expects {}",
            x.len(),
            fit.dim()
        )));
    }
    Ok(fit.m_inverse() * fit.loadings.transpose() * (x - &fit.mean))
}

/// Posterior means for every row, an n×K matrix.
pub fn posterior_means(fit: &PpcaFit, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != fit.dim() {
        return Err(Error::input(format!(
            "data has {} columns, model expects {}",
            x.ncols(),
            fit.dim()
        )));
    }
    let mut xc = x.clone();
    for mut row in xc.row_iter_mut() {
        row -= fit.mean.transpose();
    }
    Ok(xc * &fit.loadings * fit.m_inverse())
}

/// Diagonal of the posterior covariance `σ²M⁻¹`; the same for every row.
pub fn posterior_variance(fit: &PpcaFit) -> DVector<f64> {
    fit.m_inverse().diagonal() * fit.noise_variance
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinpointReport {
    pub max_posterior_variance: f64,
    pub threshold: f64,
    pub passed: bool,
}

pub fn pinpointability_check(fit: &PpcaFit, threshold: f64) -> PinpointReport {
    let max = posterior_variance(fit).max();
    PinpointReport {
        max_posterior_variance: max,
        threshold,
        passed: max < threshold,
    }
}

impl PinpointReport {
    /// Converts a failed check into [`Error::Pinpointability`].
    pub fn require(self) -> Result<Self> {
        if self.passed {
            Ok(self)
        } else {
            Err(Error::Pinpointability {
                max_variance: self.max_posterior_variance,
                threshold: self.threshold,
            })
        }
    }
}

/// Gaussian log-likelihood of the data under the fitted model.
pub fn log_likelihood(fit: &PpcaFit, x: &DataMatrix) -> Result<f64> {
    if x.ncols() != fit.dim() {
        return Err(Error::input("data and model dimensions differ"));
    }
    let n = x.nrows() as f64;
    let m = fit.dim() as f64;
    let mut xc = x.values().clone();
    for mut row in xc.row_iter_mut() {
        row -= fit.mean.transpose();
    }
    let s = xc.transpose() * &xc / n;
    let chol = fit
        .covariance()
        .cholesky()
        .ok_or_else(|| Error::numerical("model covariance not positive definite"))?;
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let trace = (chol.inverse() * s).trace();
    Ok(-0.5 * n * (m * (2.0 * std::f64::consts::PI).ln() + logdet + trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn one_factor(n: usize, loadings: &[f64], noise_sd: f64, seed: u64) -> DataMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = loadings.len();
        let mut v = DMatrix::zeros(n, m);
        for i in 0..n {
            let c: f64 = StandardNormal.sample(&mut rng);
            for j in 0..m {
                let e: f64 = StandardNormal.sample(&mut rng);
                v[(i, j)] = loadings[j] * c + noise_sd * e + j as f64;
            }
        }
        DataMatrix::new(v).unwrap()
    }

    #[test]
    fn shared_factor_is_pinpointed() {
        let x = one_factor(1000, &[1.0, 1.0, 1.0, 1.0, 1.0], 0.1, 3);
        let fit = fit_ppca(&x, 1).unwrap();
        let report = pinpointability_check(&fit, 0.01);
        assert!(report.passed, "{report:?}");
        // σ² ≈ noise variance; posterior variance ≈ σ²/(‖θ‖² + σ²)
        assert_relative_eq!(fit.noise_variance, 0.01, max_relative = 0.15);
    }

    #[test]
    fn single_proxy_fails_pinpointability() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let v = DMatrix::from_fn(500, 3, |_, _| StandardNormal.sample(&mut rng));
        let fit = fit_ppca(&DataMatrix::new(v).unwrap(), 1).unwrap();
        let report = pinpointability_check(&fit, 0.01);
        assert!(!report.passed);
        assert!(matches!(report.require(), Err(Error::Pinpointability { .. })));
    }

    #[test]
    fn closed_form_matches_em_and_beats_perturbations() {
        let x = one_factor(400, &[1.0, 0.5, -0.8, 0.3], 0.5, 11);
        let closed = fit_ppca(&x, 1).unwrap();
        let em = fit_ppca_with(&x, 1, FitMethod::Em).unwrap();
        assert_relative_eq!(closed.noise_variance, em.noise_variance, max_relative = 1e-6);
        assert_relative_eq!(closed.loadings, em.loadings, epsilon = 1e-5);
        let ll = log_likelihood(&closed, &x).unwrap();
        let mut worse = closed.clone();
        worse.loadings *= 1.05;
        assert!(log_likelihood(&worse, &x).unwrap() < ll);
        let mut worse = closed.clone();
        worse.noise_variance *= 1.05;
        assert!(log_likelihood(&worse, &x).unwrap() < ll);
    }

    #[test]
    fn batch_and_single_posterior_means_agree() {
        let x = one_factor(50, &[1.0, 2.0, 0.5], 0.3, 2);
        let fit = fit_ppca(&x, 1).unwrap();
        let all = posterior_means(&fit, x.values()).unwrap();
        for i in [0, 17, 49] {
            let row = x.values().row(i).transpose();
            assert_relative_eq!(posterior_mean(&fit, &row).unwrap()[0], all[(i, 0)], epsilon = 1e-12);
        }
    }

    #[test]
    fn json_round_trip_both_encodings() {
        let x = one_factor(50, &[1.0, 2.0, 0.5, 0.1], 0.3, 2);
        let fit = fit_ppca(&x, 2).unwrap();
        for enc in [MatrixEncoding::Plain, MatrixEncoding::Base64] {
            let back = PpcaFit::from_json(&fit.to_json(enc).unwrap()).unwrap();
            assert_eq!(back, fit);
        }
        assert!(PpcaFit::from_json(r#"{"schema_version":9}"#).is_err());
    }

    #[test]
    fn rejects_bad_latent_dimension() {
        let x = one_factor(20, &[1.0, 2.0], 0.3, 2);
        assert!(fit_ppca(&x, 0).is_err());
        assert!(fit_ppca(&x, 2).is_err());
    }
}
