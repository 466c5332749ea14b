//! Distributional checks of the synthetic generators against values derived
//! from their covariance specifications.

use causalrep::ioss::discrete_ioss;
use causalrep::linalg::{ols, with_intercept};
use causalrep::scm::{correlation, observational_dist};
use causalrep::synth::{
    gen_binary_poc, gen_correlated_factors, gen_pixel_linear, gen_toy_linear, FactorGrid, GenOutput, GenSpec,
};
use nalgebra::DMatrix;

fn pearson(x: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    let n = x.nrows() as f64;
    let (ma, mb) = (x.column(a).sum() / n, x.column(b).sum() / n);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for i in 0..x.nrows() {
        let (u, v) = (x[(i, a)] - ma, x[(i, b)] - mb);
        sab += u * v;
        saa += u * u;
        sbb += v * v;
    }
    sab / (saa * sbb).sqrt()
}

#[test]
fn toy_observed_correlations_follow_the_covariance() {
    let toy = gen_toy_linear(21, 5000, 5000).unwrap();
    // Shared latent covariance over latent variance plus observation noise.
    let train = toy.train.x.values();
    let test = toy.test.x.values();
    assert!((pearson(train, 0, 1) - 0.95 / 1.16).abs() < 0.02);
    assert!((pearson(train, 2, 3) - 0.95 / 1.09).abs() < 0.02);
    assert!((pearson(test, 0, 1) - 0.05 / 0.26).abs() < 0.03);
    assert!((pearson(test, 3, 4) - 0.05 / 0.19).abs() < 0.03);
    for b in &toy.beta {
        assert!((0.0..=10.0).contains(b));
    }
}

#[test]
fn toy_outcome_ignores_spurious_columns() {
    let toy = gen_toy_linear(8, 5000, 100).unwrap();
    let fit = ols(&with_intercept(toy.train.x.values()), &toy.train.y).unwrap();
    assert!((fit.coef[1] - toy.beta[0]).abs() < 0.1);
    assert!((fit.coef[2] - toy.beta[1]).abs() < 0.1);
    for j in 3..6 {
        assert!(fit.coef[j].abs() < 0.1, "column {j}: {}", fit.coef[j]);
    }
}

#[test]
fn pixel_outcome_coefficients_are_recovered() {
    let data = gen_pixel_linear(3, 1000).unwrap();
    assert_eq!(data.x.nrows(), 1000);
    let x = data.x.values();
    for a in 0..5 {
        for b in a + 1..5 {
            assert!(pearson(x, a, b).abs() > 0.8);
        }
    }
    let first_two = with_intercept(&x.columns(0, 2).into_owned());
    let fit = ols(&first_two, &data.y).unwrap();
    assert!(
        (fit.coef[1] - 0.5).abs() < 0.1 && (fit.coef[2] - 1.0).abs() < 0.1,
        "{}",
        fit.coef
    );
}

#[test]
fn binary_model_marginals_and_extremes() {
    for p in [0.0, 0.3, 0.5, 1.0] {
        let obs = observational_dist(&gen_binary_poc(p).unwrap()).unwrap();
        assert!((obs.marginal("Z1").unwrap() - 0.4).abs() < 1e-12);
    }
    let corr = |p| correlation(&observational_dist(&gen_binary_poc(p).unwrap()).unwrap(), "Z1", "Z2").unwrap();
    assert!((corr(0.0) - 1.0).abs() < 1e-12);
    assert!(corr(0.5).abs() < 1e-12);
}

#[test]
fn correlated_factors_keep_the_product_support() {
    for seed in 0..5 {
        let c = gen_correlated_factors(
            FactorGrid {
                d: 3,
                levels: 3,
                n: 200,
            },
            0.8,
            seed,
        )
        .unwrap();
        assert!((c.achieved_corr - 0.8).abs() <= 0.05);
        assert_eq!(discrete_ioss(&c.sample).unwrap(), 0.0);
    }
}

#[test]
fn generator_specs_are_reproducible() {
    let spec: GenSpec = serde_json::from_str(r#"{"generator": "pixel-linear", "n": 50, "seed": 9}"#).unwrap();
    let values = |out: GenOutput| match out {
        GenOutput::Labeled { train, .. } => (train.x.values().clone(), train.y),
        _ => panic!("pixel generator yields labeled data"),
    };
    assert_eq!(values(spec.run().unwrap()), values(spec.run().unwrap()));
}
