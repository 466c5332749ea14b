use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::function::{apply, RepFunction};
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::linalg;

/// Linear prediction head on `[1, f(X)]`. The common cause is not used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    pub intercept: f64,
    pub coeffs: Vec<f64>,
    pub noise_variance: f64,
}

pub fn fit_predictor(f: &RepFunction, x: &DataMatrix, y: &DVector<f64>) -> Result<Predictor> {
    if y.len() != x.nrows() {
        return Err(Error::input("label count differs from observation count"));
    }
    let fv = apply(f, x.values())?;
    let fit = linalg::ols(&linalg::with_intercept(&fv), y)?;
    Ok(Predictor {
        intercept: fit.coef[0],
        coeffs: fit.coef.rows(1, fv.ncols()).iter().copied().collect(),
        noise_variance: fit.rss() / y.len() as f64,
    })
}

pub fn predict(p: &Predictor, f: &RepFunction, x: &DataMatrix) -> Result<DVector<f64>> {
    if p.coeffs.len() != f.output_dim() {
        return Err(Error::input("predictor and representation dimensions differ"));
    }
    let fv = apply(f, x.values())?;
    Ok(fv * DVector::from_column_slice(&p.coeffs) + DVector::from_element(x.nrows(), p.intercept))
}
