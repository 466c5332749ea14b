//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Ridge jitter added to every normal-equation solve.
pub const RIDGE: f64 = 1e-10;

/// Designs whose column-normalized Gram matrix exceeds this condition number
/// are rejected as collinear.
pub const MAX_CONDITION: f64 = 1e12;

/// Prepends a column of ones.
pub fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let mut out = DMatrix::from_element(n, p + 1, 1.0);
    out.view_mut((0, 1), (n, p)).copy_from(x);
    out
}

/// Horizontally concatenates two matrices with the same row count.
pub fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows());
    let n = a.nrows();
    let mut out = DMatrix::zeros(n, a.ncols() + b.ncols());
    out.view_mut((0, 0), (n, a.ncols())).copy_from(a);
    out.view_mut((0, a.ncols()), (n, b.ncols())).copy_from(b);
    out
}

pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Subtracts the column means.
pub fn center_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let means = column_means(x);
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    out
}

/// Condition number of the Gram matrix after scaling every column to unit norm.
pub fn scaled_condition(design: &DMatrix<f64>) -> f64 {
    let p = design.ncols();
    if p == 0 {
        return 1.0;
    }
    let norms: Vec<f64> = design.column_iter().map(|c| c.norm()).collect();
    if norms.iter().any(|&v| v == 0.0 || !v.is_finite()) {
        return f64::INFINITY;
    }
    let mut scaled = design.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col /= norms[j];
    }
    let gram = scaled.transpose() * &scaled;
    let eig = gram.symmetric_eigenvalues();
    let max = eig.max();
    let min = eig.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Ordinary least squares by the ridge-jittered normal equations.
#[derive(Debug, Clone)]
pub struct Ols {
    pub coef: DVector<f64>,
    pub residuals: DVector<f64>,
    /// Inverse of `DᵀD + ridge·I`.
    pub gram_inverse: DMatrix<f64>,
    pub condition: f64,
}

impl Ols {
    pub fn rss(&self) -> f64 {
        self.residuals.norm_squared()
    }
}

pub fn ols(design: &DMatrix<f64>, y: &DVector<f64>) -> Result<Ols> {
    let (n, p) = design.shape();
    if n != y.len() {
        return Err(Error::input(format!(
            "design has {n} rows but response has {} entries",
            y.len()
        )));
    }
    if n < p {
        return Err(Error::DegenerateData(format!(
            "{n} observations cannot identify {p} coefficients"
        )));
    }
    let condition = scaled_condition(design);
    if !(condition < MAX_CONDITION) {
        return Err(Error::Collinearity { condition });
    }
    let mut gram = design.transpose() * design;
    for i in 0..p {
        gram[(i, i)] += RIDGE;
    }
    let chol = gram.cholesky().ok_or(Error::Collinearity { condition })?;
    let gram_inverse = chol.inverse();
    let coef = chol.solve(&(design.transpose() * y));
    let residuals = y - design * &coef;
    Ok(Ols {
        coef,
        residuals,
        gram_inverse,
        condition,
    })
}

/// Orthogonal projector onto the complement of span([1, regressors]).
///
/// Used to compute residuals and R² of many targets against a fixed set of
/// regressors.
#[derive(Debug, Clone)]
pub struct ResidualMaker {
    q: DMatrix<f64>,
}

impl ResidualMaker {
    pub fn new(regressors: &DMatrix<f64>) -> Result<Self> {
        let design = with_intercept(regressors);
        let condition = scaled_condition(&design);
        if !(condition < MAX_CONDITION) {
            return Err(Error::Collinearity { condition });
        }
        let q = design.qr().q();
        Ok(Self { q })
    }

    pub fn residual(&self, v: &DVector<f64>) -> DVector<f64> {
        v - &self.q * (self.q.transpose() * v)
    }

    /// Coefficient of determination of `v` regressed on `[1, regressors]`.
    ///
    /// A constant target has no variance to explain and is reported as 1.
    pub fn r_squared(&self, v: &DVector<f64>) -> f64 {
        let mean = v.mean();
        let tss: f64 = v.iter().map(|a| (a - mean).powi(2)).sum();
        if tss <= f64::EPSILON * f64::EPSILON * v.len() as f64 {
            return 1.0;
        }
        let rss = self.residual(v).norm_squared();
        1.0 - rss / tss
    }
}

/// 1 - SSE/SST of a prediction.
pub fn r2_score(y: &DVector<f64>, pred: &DVector<f64>) -> f64 {
    let mean = y.mean();
    let sst: f64 = y.iter().map(|a| (a - mean).powi(2)).sum();
    let sse = (y - pred).norm_squared();
    1.0 - sse / sst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ols_recovers_exact_coefficients() {
        let x = DMatrix::from_row_slice(5, 2, &[1.0, 2.0, 2.0, -1.0, 3.0, 0.5, 4.0, 4.0, 5.0, -2.0]);
        let d = with_intercept(&x);
        let beta = DVector::from_vec(vec![0.5, 2.0, -3.0]);
        let y = &d * &beta;
        let fit = ols(&d, &y).unwrap();
        for i in 0..3 {
            assert_relative_eq!(fit.coef[i], beta[i], epsilon = 1e-8);
        }
        assert!(fit.rss() < 1e-14);
    }

    #[test]
    fn collinear_design_reports_condition() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0, 4.0, 8.0]);
        match ols(&x, &DVector::from_element(4, 1.0)) {
            Err(Error::Collinearity { condition }) => assert!(condition > MAX_CONDITION),
            other => panic!("expected collinearity, got {other:?}"),
        }
    }

    #[test]
    fn residual_maker_matches_ols() {
        let c = DMatrix::from_row_slice(6, 1, &[0.1, 0.4, -0.3, 0.9, 1.2, -0.8]);
        let v = DVector::from_vec(vec![1.0, 0.0, 2.0, -1.0, 0.5, 0.3]);
        let rm = ResidualMaker::new(&c).unwrap();
        let fit = ols(&with_intercept(&c), &v).unwrap();
        assert_relative_eq!(rm.residual(&v), fit.residuals, epsilon = 1e-9);
        let r2 = rm.r_squared(&v);
        assert!((0.0..=1.0).contains(&r2));
    }
}
