//! The CAUSAL-REP objective and its analytic gradient.
//!
//! For weights `W` the representation is `F = XW`. Each outcome is regressed
//! on `D = [1, F, Ĉ]` in closed form, and the objective is
//!
//! `Σ_outcomes Σ_j φ_j + λ (P_R² − α‖W‖²)`, with `φ_j` the conditional PNS
//! bound of dimension j and `P_R² = (1/d) Σ_j log(1 − R²_j)`.
//!
//! The gradient differentiates through the least-squares solution: with
//! `G = DᵀD + εI`, `b = G⁻¹Dᵀy`, `r = y − Db`, `s = ‖r‖²/n` and `u = G⁻¹v`,
//! `v = ∂φ/∂b − (2ε/n)(∂φ/∂s) b`, the gradient with respect to `D` is
//! `r uᵀ − D u bᵀ − (2/n)(∂φ/∂s) r bᵀ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::function::{RepClass, RepFunction};
use crate::error::{Error, Result};
use crate::linalg::{self, ResidualMaker, RIDGE};

/// R² values above this are clamped so the penalty stays finite.
pub const R2_CLAMP: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyWeights {
    pub lambda: f64,
    pub alpha: f64,
}

impl Default for PenaltyWeights {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            alpha: 1e-3,
        }
    }
}

/// Precomputed data for repeated objective evaluations.
#[derive(Debug, Clone)]
pub struct Objective {
    x: DMatrix<f64>,
    c_hats: DMatrix<f64>,
    c_centered: DMatrix<f64>,
    outcomes: Vec<DVector<f64>>,
    residual_maker: ResidualMaker,
    pub weights: PenaltyWeights,
}

/// Objective value split into its parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveParts {
    pub total: f64,
    /// Conditional bounds per dimension, summed over outcomes.
    pub cond_pns: Vec<f64>,
    pub rsq_penalty: f64,
    pub weight_norm: f64,
}

impl Objective {
    /// One or more outcomes sharing the same representation and factors.
    pub fn new(
        x: &DMatrix<f64>,
        outcomes: Vec<DVector<f64>>,
        c_hats: &DMatrix<f64>,
        weights: PenaltyWeights,
    ) -> Result<Self> {
        let n = x.nrows();
        if c_hats.nrows() != n || outcomes.iter().any(|y| y.len() != n) {
            return Err(Error::input(
                "observations, outcomes and factors must have the same row count",
            ));
        }
        if outcomes.is_empty() {
            return Err(Error::input("at least one outcome is required"));
        }
        if !(weights.lambda >= 0.0 && weights.alpha >= 0.0) {
            return Err(Error::input("penalty weights must be non-negative"));
        }
        if n <= c_hats.ncols() + 1 {
            return Err(Error::DegenerateData(
                "too few observations for the R² regression".into(),
            ));
        }
        Ok(Self {
            x: x.clone(),
            c_hats: c_hats.clone(),
            c_centered: linalg::center_columns(c_hats),
            outcomes,
            residual_maker: ResidualMaker::new(c_hats)?,
            weights,
        })
    }

    pub fn value(&self, f: &RepFunction) -> Result<f64> {
        Ok(self.evaluate(f, false)?.0.total)
    }

    pub fn parts(&self, f: &RepFunction) -> Result<ObjectiveParts> {
        Ok(self.evaluate(f, false)?.0)
    }

    /// Objective value and its gradient with respect to `f.params`.
    pub fn value_and_gradient(&self, f: &RepFunction) -> Result<(f64, DMatrix<f64>)> {
        let (parts, grad) = self.evaluate(f, true)?;
        Ok((parts.total, grad.expect("gradient requested")))
    }

    fn evaluate(&self, f: &RepFunction, want_grad: bool) -> Result<(ObjectiveParts, Option<DMatrix<f64>>)> {
        if f.input_dim() != self.x.ncols() {
            return Err(Error::input("representation width differs from data width"));
        }
        let w = f.weights();
        let fv = &self.x * &w;
        let n = fv.nrows();
        let nf = n as f64;
        let d = fv.ncols();
        let k = self.c_hats.ncols();
        let design = linalg::with_intercept(&linalg::hstack(&fv, &self.c_hats));
        let condition = linalg::scaled_condition(&design);
        if !(condition < linalg::MAX_CONDITION) {
            return Err(Error::Collinearity { condition });
        }
        let p = design.ncols();
        let mut gram = design.transpose() * &design;
        for i in 0..p {
            gram[(i, i)] += RIDGE;
        }
        let chol = gram.cholesky().ok_or(Error::Collinearity { condition })?;
        let f_centered = linalg::center_columns(&fv);

        let mut cond_pns = vec![0.0; d];
        let mut grad_f = DMatrix::zeros(n, d);
        for y in &self.outcomes {
            let b = chol.solve(&(design.transpose() * y));
            let r = y - &design * &b;
            let s = r.norm_squared() / nf;
            let y_mean = y.mean();
            if y.iter().all(|&v| v == y_mean) {
                // A constant outcome has nothing to explain and contributes nothing.
                continue;
            }
            if !(s > 0.0) {
                return Err(Error::DegenerateModel(
                    "outcome is fitted exactly; residual variance is zero".into(),
                ));
            }
            let beta = b.rows(1, d).into_owned();
            let gamma = b.rows(1 + d, k).into_owned();
            let offset = &self.c_centered * &gamma;
            let mut q = 0.0;
            let mut dq_db = DVector::zeros(p);
            for j in 0..d {
                let fj = f_centered.column(j);
                let ff = fj.norm_squared();
                let fo = fj.dot(&offset);
                let term = beta[j] * beta[j] * ff + 2.0 * beta[j] * fo;
                cond_pns[j] += term / (2.0 * s);
                q += term;
                dq_db[1 + j] = 2.0 * beta[j] * ff + 2.0 * fo;
            }
            if !want_grad {
                continue;
            }
            let dq_dgamma = self.c_centered.transpose() * (&f_centered * &beta) * 2.0;
            dq_db.rows_mut(1 + d, k).copy_from(&dq_dgamma);
            let dphi_db = dq_db / (2.0 * s);
            let dphi_ds = -q / (2.0 * s * s);
            let v = &dphi_db - &b * (2.0 * RIDGE / nf * dphi_ds);
            let u = chol.solve(&v);
            let du = &design * &u;
            // ∂φ/∂D restricted to the representation columns.
            for j in 0..d {
                let col = 1 + j;
                let explicit =
                    (f_centered.column(j) * (2.0 * beta[j] * beta[j]) + &offset * (2.0 * beta[j])) / (2.0 * s);
                let g = &r * u[col] - &du * b[col] - &r * (2.0 / nf * dphi_ds * b[col]) + explicit;
                let mut gc = grad_f.column_mut(j);
                gc += g;
            }
        }

        // Positivity penalty.
        let mut rsq_penalty = 0.0;
        let lambda = self.weights.lambda;
        for j in 0..d {
            let fj = fv.column(j).into_owned();
            let fc = f_centered.column(j);
            let tss = fc.norm_squared();
            let e = self.residual_maker.residual(&fj);
            let rss = e.norm_squared();
            let ratio = if tss > 0.0 { rss / tss } else { 0.0 };
            let clamped = ratio < 1.0 - R2_CLAMP;
            rsq_penalty += if clamped { (1.0 - R2_CLAMP).ln() } else { ratio.ln() } / d as f64;
            if want_grad && !clamped && lambda != 0.0 {
                let g = (&e * (2.0 / rss) - fc * (2.0 / tss)) * (lambda / d as f64);
                let mut gc = grad_f.column_mut(j);
                gc += g;
            }
        }
        let weight_norm = w.norm_squared();
        let total = cond_pns.iter().sum::<f64>() + lambda * (rsq_penalty - self.weights.alpha * weight_norm);
        let parts = ObjectiveParts {
            total,
            cond_pns,
            rsq_penalty,
            weight_norm,
        };
        if !want_grad {
            return Ok((parts, None));
        }
        let grad_w = self.x.transpose() * grad_f - &w * (2.0 * lambda * self.weights.alpha);
        let grad = match f.class {
            RepClass::Linear => grad_w,
            RepClass::Selection if f.hardened => DMatrix::zeros(w.nrows(), w.ncols()),
            RepClass::ConvexCombination | RepClass::Selection => softmax_backward(&w, &grad_w, f.temperature),
        };
        Ok((parts, Some(grad)))
    }
}

/// Chain rule through column-wise `softmax(a / τ)`.
fn softmax_backward(w: &DMatrix<f64>, g: &DMatrix<f64>, temperature: f64) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(w.nrows(), w.ncols());
    for j in 0..w.ncols() {
        let wj = w.column(j);
        let gj = g.column(j);
        let avg = wj.dot(&gj);
        for l in 0..w.nrows() {
            out[(l, j)] = wj[l] * (gj[l] - avg) / temperature;
        }
    }
    out
}

/// `(1/d) Σ_j log(1 − R²_j)` of each representation dimension on `[1, Ĉ]`,
/// with R² clamped at `1 − 1e-6`.
pub fn rsq_penalty(f_vals: &DMatrix<f64>, c_hats: &DMatrix<f64>) -> Result<f64> {
    if f_vals.nrows() != c_hats.nrows() {
        return Err(Error::input("row counts differ"));
    }
    let rm = ResidualMaker::new(c_hats)?;
    let d = f_vals.ncols() as f64;
    Ok(f_vals
        .column_iter()
        .map(|c| (1.0 - rm.r_squared(&c.into_owned()).min(R2_CLAMP)).ln() / d)
        .sum())
}

/// Supervised objective value for a single outcome.
pub fn objective(
    f: &RepFunction,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    c_hats: &DMatrix<f64>,
    weights: PenaltyWeights,
) -> Result<f64> {
    Objective::new(x, vec![y.clone()], c_hats, weights)?.value(f)
}

pub fn objective_gradient(
    f: &RepFunction,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    c_hats: &DMatrix<f64>,
    weights: PenaltyWeights,
) -> Result<DMatrix<f64>> {
    Ok(Objective::new(x, vec![y.clone()], c_hats, weights)?
        .value_and_gradient(f)?
        .1)
}
