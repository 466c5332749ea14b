//! Learns a two-column selection on the toy data, where spurious columns are
//! strongly correlated with the causal ones in training but not at test time,
//! and compares out-of-distribution R² against plain OLS.
//!
//! Run with `cargo run --release --example train_causal_rep`.

use causalrep::data::DataMatrix;
use causalrep::linalg::{ols, r2_score, with_intercept};
use causalrep::rep::{fit_predictor, predict, train, RepClass, TrainConfig};
use causalrep::synth::gen_toy_linear;

fn ols_r2(
    train_x: &DataMatrix,
    train_y: &nalgebra::DVector<f64>,
    test_x: &DataMatrix,
    test_y: &nalgebra::DVector<f64>,
) -> causalrep::Result<f64> {
    let fit = ols(&with_intercept(train_x.values()), train_y)?;
    Ok(r2_score(test_y, &(with_intercept(test_x.values()) * fit.coef)))
}

fn main() -> causalrep::Result<()> {
    let toy = gen_toy_linear(11, 1000, 1000)?;
    let cfg = TrainConfig {
        class: RepClass::Selection,
        rep_dim: 2,
        latent_dim: 1,
        pinpoint_threshold: 0.05,
        seed: 1,
        ..TrainConfig::default()
    };
    let out = train(&toy.train.x, &toy.train.y, &cfg)?;
    println!("selected columns {:?}", out.rep.selected_columns().unwrap_or_default());
    println!("objective {:.3} (best of {} restarts)", out.objective, out.traces.len());

    let head = fit_predictor(&out.rep, &toy.train.x, &toy.train.y)?;
    let pred = predict(&head, &out.rep, &toy.test.x)?;
    println!("CAUSAL-REP test R² {:.4}", r2_score(&toy.test.y, &pred));
    println!(
        "OLS test R²        {:.4}",
        ols_r2(&toy.train.x, &toy.train.y, &toy.test.x, &toy.test.y)?
    );
    Ok(())
}
