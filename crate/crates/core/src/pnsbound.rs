//! Observable lower bounds on the probability of necessity and sufficiency
//! of a representation under a linear-Gaussian outcome model.
//!
//! With `y = β₀ + βᵀf(x) + γᵀc + ε`, `ε ~ N(0, σ²)`, the log of the dataset
//! PNS is bounded below, up to an additive constant, by
//! `(1/2σ²) Σᵢ [(Σ_j β_j f̃_ij)² + 2 Σ_j β_j f̃_ij γᵀc̃ᵢ]` where tildes denote
//! deviations from sample means. The per-dimension conditional version keeps
//! only dimension j. The constants (depending on n and σ² alone) are dropped,
//! so values are comparable only for a fixed dataset.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::linalg::{self, ResidualMaker};
use crate::pinpoint::{self, FitMethod, PinpointReport, DEFAULT_PINPOINT_THRESHOLD};
use crate::rep::{apply, RepFunction};

/// Least-squares fit of `y` on `[1, f(X), Ĉ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModelFit {
    pub intercept: f64,
    pub rep_coeffs: Vec<f64>,
    pub cause_coeffs: Vec<f64>,
    /// Mean squared residual.
    pub noise_variance: f64,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl OutcomeModelFit {
    pub fn beta(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.rep_coeffs)
    }

    pub fn gamma(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.cause_coeffs)
    }
}

fn check_rows(f_vals: &DMatrix<f64>, c_hats: &DMatrix<f64>, n: usize) -> Result<()> {
    if f_vals.nrows() != n || c_hats.nrows() != n {
        return Err(Error::input(format!(
            "row mismatch: {} labels, {} representation rows, {} factor rows",
            n,
            f_vals.nrows(),
            c_hats.nrows()
        )));
    }
    Ok(())
}

/// Fits the outcome model on precomputed representation values.
pub fn fit_outcome_on_features(
    f_vals: &DMatrix<f64>,
    c_hats: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<OutcomeModelFit> {
    let n = y.len();
    check_rows(f_vals, c_hats, n)?;
    let d = f_vals.ncols();
    let k = c_hats.ncols();
    if n <= d + k + 1 {
        return Err(Error::DegenerateData(format!(
            "need more than d + K + 1 = {} observations, got {n}",
            d + k + 1
        )));
    }
    let design = linalg::with_intercept(&linalg::hstack(f_vals, c_hats));
    let fit = linalg::ols(&design, y)?;
    Ok(OutcomeModelFit {
        intercept: fit.coef[0],
        rep_coeffs: fit.coef.rows(1, d).iter().copied().collect(),
        cause_coeffs: fit.coef.rows(1 + d, k).iter().copied().collect(),
        noise_variance: fit.rss() / n as f64,
        residuals: fit.residuals.iter().copied().collect(),
    })
}

pub fn fit_outcome_linear(
    x: &DataMatrix,
    y: &DVector<f64>,
    f: &RepFunction,
    c_hats: &DMatrix<f64>,
) -> Result<OutcomeModelFit> {
    fit_outcome_on_features(&apply(f, x.values())?, c_hats, y)
}

fn check_fit(fit: &OutcomeModelFit, f_vals: &DMatrix<f64>, c_hats: &DMatrix<f64>) -> Result<()> {
    if fit.rep_coeffs.len() != f_vals.ncols() || fit.cause_coeffs.len() != c_hats.ncols() {
        return Err(Error::input("fit dimensions do not match representation or factors"));
    }
    if f_vals.nrows() != c_hats.nrows() {
        return Err(Error::input("representation and factor row counts differ"));
    }
    if !(fit.noise_variance > 0.0) {
        return Err(Error::DegenerateModel(format!(
            "noise variance is {}, the bound is undefined",
            fit.noise_variance
        )));
    }
    Ok(())
}

/// Centered representation values and the fitted confounding offsets `γᵀc̃ᵢ`.
fn centered_terms(fit: &OutcomeModelFit, f_vals: &DMatrix<f64>, c_hats: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let ft = linalg::center_columns(f_vals);
    let ct = linalg::center_columns(c_hats);
    (ft, ct * fit.gamma())
}

/// Conditional bound for dimension `j` (0-based), constant dropped.
pub fn log_cond_pns_lower(
    fit: &OutcomeModelFit,
    f_vals: &DMatrix<f64>,
    c_hats: &DMatrix<f64>,
    j: usize,
) -> Result<f64> {
    check_fit(fit, f_vals, c_hats)?;
    if j >= f_vals.ncols() {
        return Err(Error::input(format!("dimension {j} out of range")));
    }
    let (ft, offset) = centered_terms(fit, f_vals, c_hats);
    Ok(cond_term(fit.rep_coeffs[j], &ft.column(j).into_owned(), &offset) / (2.0 * fit.noise_variance))
}

fn cond_term(beta: f64, f: &DVector<f64>, offset: &DVector<f64>) -> f64 {
    let bf = f * beta;
    bf.norm_squared() + 2.0 * bf.dot(offset)
}

/// All conditional bounds at once.
pub fn log_cond_pns_lower_all(fit: &OutcomeModelFit, f_vals: &DMatrix<f64>, c_hats: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_fit(fit, f_vals, c_hats)?;
    let (ft, offset) = centered_terms(fit, f_vals, c_hats);
    let s2 = 2.0 * fit.noise_variance;
    Ok((0..ft.ncols())
        .map(|j| cond_term(fit.rep_coeffs[j], &ft.column(j).into_owned(), &offset) / s2)
        .collect())
}

/// Unconditional bound, constant dropped.
pub fn log_pns_lower(fit: &OutcomeModelFit, f_vals: &DMatrix<f64>, c_hats: &DMatrix<f64>) -> Result<f64> {
    check_fit(fit, f_vals, c_hats)?;
    let (ft, offset) = centered_terms(fit, f_vals, c_hats);
    let lumped = &ft * fit.beta();
    Ok((lumped.norm_squared() + 2.0 * lumped.dot(&offset)) / (2.0 * fit.noise_variance))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub r_squared: Vec<f64>,
    pub threshold: f64,
    /// Dimensions whose R² exceeds the threshold.
    pub flagged: Vec<usize>,
    pub passed: bool,
}

/// R² of each representation dimension regressed on `[1, Ĉ]`.
pub fn positivity_diagnostic(f_vals: &DMatrix<f64>, c_hats: &DMatrix<f64>, threshold: f64) -> Result<PositivityReport> {
    if f_vals.nrows() != c_hats.nrows() {
        return Err(Error::input("representation and factor row counts differ"));
    }
    let rm = ResidualMaker::new(c_hats)?;
    let r_squared: Vec<f64> = f_vals.column_iter().map(|c| rm.r_squared(&c.into_owned())).collect();
    let flagged: Vec<usize> = (0..r_squared.len()).filter(|&j| r_squared[j] > threshold).collect();
    Ok(PositivityReport {
        passed: flagged.is_empty(),
        r_squared,
        threshold,
        flagged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservabilityReport {
    /// Input columns carrying weight above the cutoff.
    pub support: Vec<usize>,
    pub rank: usize,
    pub weight_cutoff: f64,
    pub relative_singular_cutoff: f64,
    pub passed: bool,
}

/// Numerical rank of the observed columns the representation depends on.
pub fn observability_diagnostic(
    x: &DataMatrix,
    f: &RepFunction,
    weight_cutoff: f64,
    relative_singular_cutoff: f64,
) -> Result<ObservabilityReport> {
    if x.ncols() != f.input_dim() {
        return Err(Error::input("representation and data widths differ"));
    }
    let w = f.weights();
    let support: Vec<usize> = (0..w.nrows()).filter(|&l| w.row(l).amax() > weight_cutoff).collect();
    let rank = if support.is_empty() {
        0
    } else {
        let sub = x.values().select_columns(&support);
        let sv = sub.singular_values();
        let top = sv.max();
        sv.iter().filter(|&&s| s > relative_singular_cutoff * top).count()
    };
    Ok(ObservabilityReport {
        passed: !support.is_empty() && rank == support.len(),
        support,
        rank,
        weight_cutoff,
        relative_singular_cutoff,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PnsConfig {
    pub pinpoint_threshold: f64,
    pub positivity_threshold: f64,
    pub weight_cutoff: f64,
    pub relative_singular_cutoff: f64,
    pub fit_method: FitMethod,
}

impl Default for PnsConfig {
    fn default() -> Self {
        Self {
            pinpoint_threshold: DEFAULT_PINPOINT_THRESHOLD,
            positivity_threshold: 1.0 - 1e-3,
            weight_cutoff: 1e-6,
            relative_singular_cutoff: 1e-8,
            fit_method: FitMethod::Closed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gates {
    pub pinpointability: PinpointReport,
    pub positivity: Option<PositivityReport>,
    pub observability: Option<ObservabilityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub outcome_model: Option<OutcomeModelFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnsReport {
    pub gates: Gates,
    pub log_pns_lower: Option<f64>,
    pub cond_log_pns_lower: Option<Vec<f64>>,
    pub diagnostics: Diagnostics,
}

/// Fits PPCA, checks the gates and evaluates both bounds.
///
/// Gate failures are recorded in the report. A failed pinpointability check
/// leaves the bounds absent.
pub fn measure_pns(
    x: &DataMatrix,
    y: &DVector<f64>,
    f: &RepFunction,
    k: usize,
    config: &PnsConfig,
) -> Result<PnsReport> {
    if y.len() != x.nrows() {
        return Err(Error::input("label count differs from observation count"));
    }
    let ppca = pinpoint::fit_ppca_with(x, k, config.fit_method)?;
    let pinpointability = pinpoint::pinpointability_check(&ppca, config.pinpoint_threshold);
    let mut report = PnsReport {
        gates: Gates {
            pinpointability,
            positivity: None,
            observability: None,
        },
        log_pns_lower: None,
        cond_log_pns_lower: None,
        diagnostics: Diagnostics {
            n: x.nrows(),
            d: f.output_dim(),
            k,
            outcome_model: None,
        },
    };
    if !pinpointability.passed {
        return Ok(report);
    }
    let c_hats = pinpoint::posterior_means(&ppca, x.values())?;
    let f_vals = apply(f, x.values())?;
    report.gates.positivity = Some(positivity_diagnostic(&f_vals, &c_hats, config.positivity_threshold)?);
    report.gates.observability = Some(observability_diagnostic(
        x,
        f,
        config.weight_cutoff,
        config.relative_singular_cutoff,
    )?);
    let fit = fit_outcome_on_features(&f_vals, &c_hats, y)?;
    report.log_pns_lower = Some(log_pns_lower(&fit, &f_vals, &c_hats)?);
    report.cond_log_pns_lower = Some(log_cond_pns_lower_all(&fit, &f_vals, &c_hats)?);
    report.diagnostics.outcome_model = Some(fit);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Literal term-by-term transcription of the two bounds.
    mod literal {
        use super::super::OutcomeModelFit;
        use nalgebra::DMatrix;

        fn means(m: &DMatrix<f64>) -> Vec<f64> {
            let n = m.nrows();
            (0..m.ncols())
                .map(|j| {
                    let mut s = 0.0;
                    for i in 0..n {
                        s += m[(i, j)];
                    }
                    s / n as f64
                })
                .collect()
        }

        fn confounding(fit: &OutcomeModelFit, c: &DMatrix<f64>, cbar: &[f64], i: usize) -> f64 {
            let mut g = 0.0;
            for k in 0..c.ncols() {
                g += fit.cause_coeffs[k] * (c[(i, k)] - cbar[k]);
            }
            g
        }

        pub fn cond(fit: &OutcomeModelFit, f: &DMatrix<f64>, c: &DMatrix<f64>, j: usize) -> f64 {
            let fbar = means(f);
            let cbar = means(c);
            let mut first = 0.0;
            let mut second = 0.0;
            for i in 0..f.nrows() {
                let t = fit.rep_coeffs[j] * (f[(i, j)] - fbar[j]);
                first += t * t;
                second += t * confounding(fit, c, &cbar, i);
            }
            (first + 2.0 * second) / (2.0 * fit.noise_variance)
        }

        pub fn uncond(fit: &OutcomeModelFit, f: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
            let fbar = means(f);
            let cbar = means(c);
            let mut total = 0.0;
            for i in 0..f.nrows() {
                let mut t = 0.0;
                for j in 0..f.ncols() {
                    t += fit.rep_coeffs[j] * (f[(i, j)] - fbar[j]);
                }
                total += t * t + 2.0 * t * confounding(fit, c, &cbar, i);
            }
            total / (2.0 * fit.noise_variance)
        }
    }

    fn fixture() -> (OutcomeModelFit, DMatrix<f64>, DMatrix<f64>) {
        let f = DMatrix::from_row_slice(5, 2, &[0.3, 1.2, -0.7, 0.4, 1.1, -0.9, 0.0, 2.2, 0.5, -1.4]);
        let c = DMatrix::from_row_slice(5, 1, &[0.9, -0.2, 0.4, -1.3, 0.6]);
        let fit = OutcomeModelFit {
            intercept: 0.2,
            rep_coeffs: vec![1.5, -0.8],
            cause_coeffs: vec![0.6],
            noise_variance: 0.25,
            residuals: vec![],
        };
        (fit, f, c)
    }

    #[test]
    fn five_point_fixture_pinned() {
        let (fit, f, c) = fixture();
        // Pinned values computed independently with numpy.
        let expected_cond = [literal::cond(&fit, &f, &c, 0), literal::cond(&fit, &f, &c, 1)];
        let expected = literal::uncond(&fit, &f, &c);
        assert_relative_eq!(expected_cond[0], 11.678_4, epsilon = 1e-10);
        assert_relative_eq!(expected_cond[1], 17.318_4, epsilon = 1e-10);
        assert_relative_eq!(expected, 38.452_8, epsilon = 1e-10);
        for j in 0..2 {
            assert_relative_eq!(
                log_cond_pns_lower(&fit, &f, &c, j).unwrap(),
                expected_cond[j],
                epsilon = 1e-10
            );
        }
        assert_relative_eq!(log_pns_lower(&fit, &f, &c).unwrap(), expected, epsilon = 1e-10);
    }

    #[test]
    fn trivial_cases() {
        let (mut fit, f, c) = fixture();
        fit.rep_coeffs = vec![0.0, 0.0];
        assert_eq!(log_cond_pns_lower(&fit, &f, &c, 0).unwrap(), 0.0);
        assert_eq!(log_pns_lower(&fit, &f, &c).unwrap(), 0.0);
        let (mut fit, f, c) = fixture();
        fit.cause_coeffs = vec![0.0];
        let fc = linalg::center_columns(&f);
        let expect = fit.rep_coeffs[1].powi(2) * fc.column(1).norm_squared() / (2.0 * fit.noise_variance);
        assert_relative_eq!(log_cond_pns_lower(&fit, &fc, &c, 1).unwrap(), expect, epsilon = 1e-12);
        fit.noise_variance = 0.0;
        assert!(matches!(log_pns_lower(&fit, &f, &c), Err(Error::DegenerateModel(_))));
    }

    #[test]
    fn outcome_fit_recovers_coefficients_and_is_orthogonal() {
        let n = 40;
        let f = DMatrix::from_fn(n, 2, |i, j| ((i * 7 + j * 3) as f64).sin());
        let c = DMatrix::from_fn(n, 1, |i, _| ((i * 5) as f64).cos());
        let y = DVector::from_fn(n, |i, _| 0.5 + 2.0 * f[(i, 0)] - 1.0 * f[(i, 1)] + 0.7 * c[(i, 0)]);
        let fit = fit_outcome_on_features(&f, &c, &y).unwrap();
        assert_relative_eq!(fit.intercept, 0.5, max_relative = 1e-8);
        assert_relative_eq!(fit.rep_coeffs[0], 2.0, max_relative = 1e-8);
        assert_relative_eq!(fit.rep_coeffs[1], -1.0, max_relative = 1e-8);
        assert_relative_eq!(fit.cause_coeffs[0], 0.7, max_relative = 1e-8);

        let noisy = DVector::from_fn(n, |i, _| y[i] + ((i * 13) as f64).sin());
        let fit = fit_outcome_on_features(&f, &c, &noisy).unwrap();
        let design = linalg::with_intercept(&linalg::hstack(&f, &c));
        let ortho = design.transpose() * DVector::from_column_slice(&fit.residuals);
        assert!(ortho.amax() < 1e-8);
        let mse = fit.residuals.iter().map(|r| r * r).sum::<f64>() / n as f64;
        assert_relative_eq!(fit.noise_variance, mse, max_relative = 1e-14);
    }

    #[test]
    fn collinear_representation_is_reported() {
        let n = 20;
        let c = DMatrix::from_fn(n, 1, |i, _| i as f64);
        let f = DMatrix::from_fn(n, 1, |i, _| 2.0 * i as f64 + 1.0);
        let y = DVector::from_fn(n, |i, _| (i as f64).sin());
        assert!(matches!(
            fit_outcome_on_features(&f, &c, &y),
            Err(Error::Collinearity { .. })
        ));
        let p = positivity_diagnostic(&f, &c, 1.0 - 1e-3).unwrap();
        assert_eq!(p.flagged, vec![0]);
    }

    #[test]
    fn observability_flags_duplicates() {
        let base: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
        let other: Vec<f64> = (0..30).map(|i| (i as f64 * 1.91).cos()).collect();
        let x = DMatrix::from_fn(30, 3, |i, j| match j {
            0 | 1 => base[i],
            _ => other[i],
        });
        let x = DataMatrix::new(x).unwrap();
        let dup = RepFunction::select_columns(3, &[0, 1]).unwrap();
        let r = observability_diagnostic(&x, &dup, 1e-6, 1e-8).unwrap();
        assert_eq!((r.rank, r.passed), (1, false));
        let ok = RepFunction::select_columns(3, &[0, 2]).unwrap();
        let r = observability_diagnostic(&x, &ok, 1e-6, 1e-8).unwrap();
        assert_eq!((r.rank, r.passed, r.support), (2, true, vec![0, 2]));
    }

    fn random_instance(vals: &[f64], n: usize, d: usize, k: usize) -> (OutcomeModelFit, DMatrix<f64>, DMatrix<f64>) {
        let mut it = vals.iter().copied().cycle();
        let f = DMatrix::from_fn(n, d, |_, _| it.next().unwrap() * 3.0);
        let c = DMatrix::from_fn(n, k, |_, _| it.next().unwrap());
        let fit = OutcomeModelFit {
            intercept: it.next().unwrap(),
            rep_coeffs: (0..d).map(|_| it.next().unwrap() * 2.0).collect(),
            cause_coeffs: (0..k).map(|_| it.next().unwrap()).collect(),
            noise_variance: 0.1 + it.next().unwrap().abs(),
            residuals: vec![],
        };
        (fit, f, c)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn agrees_with_literal_transcription(
            vals in proptest::collection::vec(-1.0f64..1.0, 97),
            n in 3usize..30, d in 1usize..4, k in 1usize..3,
        ) {
            let (fit, f, c) = random_instance(&vals, n, d, k);
            for j in 0..d {
                let a = log_cond_pns_lower(&fit, &f, &c, j).unwrap();
                let b = literal::cond(&fit, &f, &c, j);
                prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
            }
            let a = log_pns_lower(&fit, &f, &c).unwrap();
            let b = literal::uncond(&fit, &f, &c);
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }

        #[test]
        fn centering_invariance_and_d1_reduction(
            vals in proptest::collection::vec(-1.0f64..1.0, 61),
            n in 3usize..20, shift in -50.0f64..50.0,
        ) {
            let (fit, f, c) = random_instance(&vals, n, 2, 1);
            let shifted = f.add_scalar(shift);
            for j in 0..2 {
                let a = log_cond_pns_lower(&fit, &f, &c, j).unwrap();
                let b = log_cond_pns_lower(&fit, &shifted, &c, j).unwrap();
                prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
            }
            let a = log_pns_lower(&fit, &f, &c).unwrap();
            let b = log_pns_lower(&fit, &shifted, &c).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));

            let (fit1, f1, c1) = random_instance(&vals, n, 1, 1);
            prop_assert_eq!(
                log_pns_lower(&fit1, &f1, &c1).unwrap(),
                log_cond_pns_lower(&fit1, &f1, &c1, 0).unwrap()
            );
        }

        #[test]
        fn rescaling_a_dimension_leaves_its_bound_unchanged(
            vals in proptest::collection::vec(-1.0f64..1.0, 40), s in 0.1f64..10.0,
        ) {
            let n = 25;
            let f = DMatrix::from_fn(n, 2, |i, j| vals[(i * 2 + j) % 40] + 0.01 * (i as f64).sin());
            let c = DMatrix::from_fn(n, 1, |i, _| vals[(i * 3 + 1) % 40] + (i as f64 * 0.3).cos());
            let y = DVector::from_fn(n, |i, _| f[(i, 0)] - 0.5 * f[(i, 1)] + c[(i, 0)] + vals[(i * 5 + 2) % 40]);
            let fit = fit_outcome_on_features(&f, &c, &y).unwrap();
            let mut g = f.clone();
            g.column_mut(0).scale_mut(s);
            let fit2 = fit_outcome_on_features(&g, &c, &y).unwrap();
            prop_assert!((fit2.rep_coeffs[0] * s - fit.rep_coeffs[0]).abs() < 1e-6 * (1.0 + fit.rep_coeffs[0].abs()));
            let a = log_cond_pns_lower(&fit, &f, &c, 0).unwrap();
            let b = log_cond_pns_lower(&fit2, &g, &c, 0).unwrap();
            prop_assert!((a - b).abs() <= 1e-8 * (1.0 + a.abs()));
        }
    }
}
