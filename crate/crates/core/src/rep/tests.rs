use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::error::Error;
use crate::linalg;

struct Instance {
    x: DMatrix<f64>,
    y: DVector<f64>,
    c: DMatrix<f64>,
    logits: DMatrix<f64>,
}

fn instance(seed: u64, n: usize, m: usize, d: usize, k: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = DMatrix::from_fn(n, m, |i, _| 0.7 * c[(i, 0)] + rng.sample::<f64, _>(StandardNormal));
    let coef: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y = DVector::from_fn(n, |i, _| {
        (0..m).map(|l| coef[l] * x[(i, l)]).sum::<f64>() + 0.5 * c[(i, 0)] + rng.sample::<f64, _>(StandardNormal)
    });
    let logits = DMatrix::from_fn(m, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    Instance { x, y, c, logits }
}

/// Central differences of the objective with respect to every logit.
fn finite_difference(obj: &Objective, f: &RepFunction, h: f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(f.params.nrows(), f.params.ncols());
    for idx in 0..f.params.len() {
        let mut plus = f.clone();
        plus.params[idx] += h;
        let mut minus = f.clone();
        minus.params[idx] -= h;
        g[idx] = (obj.value(&plus).unwrap() - obj.value(&minus).unwrap()) / (2.0 * h);
    }
    g
}

/// Largest entrywise relative error, with a floor tied to the gradient scale.
pub(crate) fn max_relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(b.amax());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / (x.abs().max(y.abs()) + 1e-8 * scale).max(1e-300))
        .fold(0.0, f64::max)
}

#[test]
fn gradient_matches_finite_differences() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let m = rng.random_range(2..=10);
        let d = rng.random_range(1..=3.min(m));
        let inst = instance(seed, 80, m, d, 1);
        let w = PenaltyWeights {
            lambda: 1.0,
            alpha: 1e-3,
        };
        let obj = Objective::new(&inst.x, vec![inst.y.clone()], &inst.c, w).unwrap();
        let f = RepFunction::convex(inst.logits.clone());
        let (_, g) = obj.value_and_gradient(&f).unwrap();
        let fd = finite_difference(&obj, &f, 1e-5);
        let err = max_relative_error(&g, &fd);
        assert!(err < 1e-4, "seed {seed}: relative error {err}\n{g}\n{fd}");
    }
}

#[test]
fn gradient_matches_for_selection_linear_and_many_outcomes() {
    let inst = instance(3, 70, 5, 2, 2);
    let w = PenaltyWeights {
        lambda: 2.0,
        alpha: 0.1,
    };
    let ys = vec![
        inst.y.clone(),
        inst.y.map(|v| (v > 0.0) as u8 as f64),
        inst.x.column(1).into_owned(),
    ];
    let obj = Objective::new(&inst.x, ys, &inst.c, w).unwrap();
    for f in [
        RepFunction::selection(inst.logits.clone(), 0.4),
        RepFunction::linear(inst.logits.clone()),
    ] {
        let (_, g) = obj.value_and_gradient(&f).unwrap();
        let fd = finite_difference(&obj, &f, 1e-5);
        assert!(max_relative_error(&g, &fd) < 1e-4);
    }
}

#[test]
fn softmax_shift_invariance() {
    let inst = instance(5, 50, 4, 2, 1);
    let obj = Objective::new(&inst.x, vec![inst.y.clone()], &inst.c, PenaltyWeights::default()).unwrap();
    let f = RepFunction::convex(inst.logits.clone());
    let mut g = f.clone();
    g.params.column_mut(1).add_scalar_mut(3.7);
    let a = obj.value(&f).unwrap();
    let b = obj.value(&g).unwrap();
    assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
}

#[test]
fn symmetric_columns_get_equal_gradient() {
    let inst = instance(8, 60, 3, 1, 1);
    let mut x = inst.x.clone();
    let dup = x.column(0).into_owned();
    x.set_column(1, &dup);
    let obj = Objective::new(&x, vec![inst.y.clone()], &inst.c, PenaltyWeights::default()).unwrap();
    let f = RepFunction::convex(DMatrix::from_column_slice(3, 1, &[0.2, 0.2, -0.5]));
    let (_, g) = obj.value_and_gradient(&f).unwrap();
    assert!((g[0] - g[1]).abs() < 1e-9 * (1.0 + g.amax()));
}

#[test]
fn constant_outcome_contributes_nothing() {
    let inst = instance(9, 40, 3, 1, 1);
    let y = DVector::from_element(40, 2.5);
    let w = PenaltyWeights {
        lambda: 0.0,
        alpha: 0.0,
    };
    let obj = Objective::new(&inst.x, vec![y], &inst.c, w).unwrap();
    let (v, g) = obj
        .value_and_gradient(&RepFunction::convex(inst.logits.clone()))
        .unwrap();
    assert_eq!(v, 0.0);
    assert_eq!(g.amax(), 0.0);
}

#[test]
fn penalty_off_reduces_to_the_bound() {
    let inst = instance(11, 60, 4, 1, 1);
    let w = PenaltyWeights {
        lambda: 0.0,
        alpha: 0.0,
    };
    let obj = Objective::new(&inst.x, vec![inst.y.clone()], &inst.c, w).unwrap();
    let mut best_obj = (f64::NEG_INFINITY, 0);
    let mut best_bound = (f64::NEG_INFINITY, 0);
    for col in 0..4 {
        let f = RepFunction::select_columns(4, &[col]).unwrap();
        let v = obj.value(&f).unwrap();
        let fv = apply(&f, &inst.x).unwrap();
        let fit = crate::pnsbound::fit_outcome_on_features(&fv, &inst.c, &inst.y).unwrap();
        let b = crate::pnsbound::log_cond_pns_lower(&fit, &fv, &inst.c, 0).unwrap();
        assert!((v - b).abs() < 1e-8 * (1.0 + b.abs()));
        if v > best_obj.0 {
            best_obj = (v, col);
        }
        if b > best_bound.0 {
            best_bound = (b, col);
        }
    }
    assert_eq!(best_obj.1, best_bound.1);
}

#[test]
fn heavy_weight_penalty_prefers_uniform_weights() {
    let inst = instance(12, 60, 4, 1, 1);
    let w = PenaltyWeights {
        lambda: 1.0,
        alpha: 1e6,
    };
    let obj = Objective::new(&inst.x, vec![inst.y.clone()], &inst.c, w).unwrap();
    let uniform = obj.value(&RepFunction::convex(DMatrix::zeros(4, 1))).unwrap();
    let peaked = obj.value(&RepFunction::convex(inst.logits.clone())).unwrap();
    assert!(uniform > peaked);
}

/// R² from a separate regression through the OLS helper.
fn r2_oracle(f: &DVector<f64>, c: &DMatrix<f64>) -> f64 {
    let fit = linalg::ols(&linalg::with_intercept(c), f).unwrap();
    let mean = f.mean();
    let tss: f64 = f.iter().map(|v| (v - mean).powi(2)).sum();
    1.0 - fit.rss() / tss
}

#[test]
fn rsq_penalty_matches_oracle_and_clamps() {
    let inst = instance(13, 50, 3, 2, 1);
    let fv = &inst.x * DMatrix::from_row_slice(3, 2, &[0.5, 0.1, 0.3, 0.1, 0.2, 0.8]);
    let expected: f64 = fv
        .column_iter()
        .map(|c| (1.0 - r2_oracle(&c.into_owned(), &inst.c)).ln())
        .sum::<f64>()
        / 2.0;
    assert_relative_eq!(rsq_penalty(&fv, &inst.c).unwrap(), expected, epsilon = 1e-10);

    let exact = &inst.c * 3.0;
    assert_relative_eq!(
        rsq_penalty(&exact, &inst.c).unwrap(),
        (1e-6f64).ln(),
        max_relative = 1e-6
    );
}

#[test]
fn predictor_recovers_linear_map_and_is_reproducible() {
    let inst = instance(14, 40, 3, 2, 1);
    let f = RepFunction::select_columns(3, &[0, 2]).unwrap();
    let x = crate::data::DataMatrix::new(inst.x.clone()).unwrap();
    let y = DVector::from_fn(40, |i, _| 1.5 + 2.0 * inst.x[(i, 0)] - 0.5 * inst.x[(i, 2)]);
    let p = fit_predictor(&f, &x, &y).unwrap();
    assert_relative_eq!(p.intercept, 1.5, epsilon = 1e-8);
    assert_relative_eq!(p.coeffs[0], 2.0, epsilon = 1e-8);
    assert_relative_eq!(p.coeffs[1], -0.5, epsilon = 1e-8);
    let a = predict(&p, &f, &x).unwrap();
    let b = predict(&fit_predictor(&f, &x, &y).unwrap(), &f, &x).unwrap();
    assert_eq!(a, b);
    let zero = Predictor {
        intercept: 0.3,
        coeffs: vec![0.0, 0.0],
        noise_variance: 1.0,
    };
    assert!(predict(&zero, &f, &x).unwrap().iter().all(|&v| v == 0.3));
}

#[test]
fn augmentation_labels_and_provenance() {
    let subjects = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let aug = augment_and_label(&subjects, &Identity, 2, 0).unwrap();
    assert_eq!(aug.x.nrows(), 6);
    assert_eq!(aug.x.row(0), aug.x.row(1));
    assert_eq!(aug.x.row(2), subjects.row(1));
    for s in 0..3 {
        assert_eq!(aug.labels.column(s).sum(), 2.0);
        assert_eq!(aug.labels[(2 * s, s)], 1.0);
    }
    assert!(augment_and_label(&subjects, &Identity, 1, 0).is_err());

    let jit = augment_and_label(&subjects, &Jitter { sd: 0.01 }, 4, 7).unwrap();
    for (r, &(s, u)) in jit.provenance.iter().enumerate() {
        assert_eq!((r / 4, r % 4), (s, u));
        assert!((jit.x[(r, 0)] - subjects[(s, 0)]).abs() < 0.1);
    }
    assert_eq!(jit, augment_and_label(&subjects, &Jitter { sd: 0.01 }, 4, 7).unwrap());
}

#[test]
fn single_subject_is_rejected() {
    let one = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
    let r = train_unsupervised(&one, &Identity, 4, &TrainConfig::default());
    assert!(matches!(r, Err(Error::Input(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn objective_is_deterministic_and_shift_invariant(seed in any::<u64>(), shift in -5.0f64..5.0) {
        let inst = instance(seed, 40, 4, 2, 1);
        let obj = Objective::new(&inst.x, vec![inst.y.clone()], &inst.c, PenaltyWeights::default()).unwrap();
        let f = RepFunction::convex(inst.logits.clone());
        let mut g = f.clone();
        g.params.column_mut(0).add_scalar_mut(shift);
        let a = obj.value(&f).unwrap();
        prop_assert_eq!(a, obj.value(&f).unwrap());
        prop_assert!((a - obj.value(&g).unwrap()).abs() < 1e-10 * (1.0 + a.abs()));
    }
}
