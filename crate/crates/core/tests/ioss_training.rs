//! Behaviour of the IOSS-regularized autoencoder and of the entangler
//! discrimination on small problems.

use causalrep::ioss::{
    distinguish_experiment, entangle_preset, ioss_train, DistinguishConfig, FactorSample, IossTrainConfig, KDraws,
};
use causalrep::synth::{gen_correlated_factors, gen_factor_mixture, FactorGrid};
use nalgebra::{DMatrix, SymmetricEigen};

fn mixture(seed: u64, n: usize) -> causalrep::data::DataMatrix {
    let f = gen_correlated_factors(FactorGrid { d: 3, levels: 4, n }, 0.8, seed).unwrap();
    gen_factor_mixture(&f.sample, 10, 0.3, seed + 1).unwrap().0
}

/// Mean squared error of the best rank-d linear reconstruction: the trailing
/// eigenvalues of the covariance.
fn pca_error(x: &DMatrix<f64>, d: usize) -> f64 {
    let n = x.nrows() as f64;
    let means: Vec<f64> = (0..x.ncols()).map(|j| x.column(j).sum() / n).collect();
    let xc = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - means[j]);
    let mut ev: Vec<f64> = SymmetricEigen::new(xc.transpose() * &xc / n)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev[d..].iter().sum()
}

#[test]
fn unregularized_training_matches_pca_and_never_raises_the_batch_loss() {
    let x = mixture(3, 800);
    let cfg = IossTrainConfig {
        iterations: 60,
        eval_draws: KDraws::Fixed(20_000),
        ..IossTrainConfig::default()
    };
    let out = ioss_train(&x, 3, &cfg).unwrap();
    let oracle = pca_error(x.values(), 3);
    assert!(
        out.reconstruction_loss <= oracle * 1.05,
        "{} vs PCA {oracle}",
        out.reconstruction_loss
    );
    for step in out.trace.iter().filter(|s| s.accepted) {
        assert!(step.loss_after <= step.loss_before + cfg.tolerance);
    }
    let again = ioss_train(&x, 3, &cfg).unwrap();
    assert_eq!(out.model, again.model);
}

#[test]
fn strong_penalty_lowers_ioss_in_most_seeds() {
    let seeds = 20;
    let mut lower = 0;
    for seed in 0..seeds {
        let x = mixture(100 + 2 * seed, 600);
        let run = |lambda| {
            let cfg = IossTrainConfig {
                lambda,
                iterations: 80,
                eval_draws: KDraws::Fixed(30_000),
                seed,
                ..IossTrainConfig::default()
            };
            ioss_train(&x, 3, &cfg).unwrap().ioss.value
        };
        if run(100.0) < run(0.0) {
            lower += 1;
        }
    }
    assert!(lower * 10 >= seeds * 9, "{lower} of {seeds}");
}

#[test]
fn one_dimensional_codes_have_negligible_ioss() {
    let x = mixture(7, 400);
    let cfg = IossTrainConfig {
        lambda: 10.0,
        iterations: 20,
        eval_draws: KDraws::Fixed(20_000),
        ..IossTrainConfig::default()
    };
    let out = ioss_train(&x, 1, &cfg).unwrap();
    assert!(out.ioss.value < 1e-3, "{}", out.ioss.value);
}

#[test]
fn preset_entangler_always_raises_ioss() {
    let grid = FactorGrid {
        d: 3,
        levels: 3,
        n: 200,
    };
    let gen = move |s: u64| Ok(gen_correlated_factors(grid, 0.8, s)?.sample);
    let cfg = DistinguishConfig {
        trials: 50,
        k_draws: KDraws::Fixed(20_000),
        alpha_quantile: 0.0,
        seed: 11,
    };
    let r = distinguish_experiment(&gen, &|z: &FactorSample, s| entangle_preset(z, 0.2, s), &cfg).unwrap();
    let wrong: Vec<_> = r.trials.iter().filter(|t| !t.correct).collect();
    assert!(wrong.is_empty(), "{wrong:?}");
    // Same seed, same proportion.
    let again = distinguish_experiment(&gen, &|z: &FactorSample, s| entangle_preset(z, 0.2, s), &cfg).unwrap();
    assert_eq!(r.proportion, again.proportion);
}
