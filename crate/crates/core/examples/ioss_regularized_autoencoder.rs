//! Trains a linear autoencoder on a noisy linear mixture of correlated
//! factors with and without the IOSS penalty, then reports reconstruction
//! loss and the exact IOSS of the learned codes.
//!
//! Run with `cargo run --release --example ioss_regularized_autoencoder`.

use causalrep::ioss::{ioss_train, IossTrainConfig, KDraws};
use causalrep::synth::{gen_correlated_factors, gen_factor_mixture, FactorGrid};

fn main() -> causalrep::Result<()> {
    let factors = gen_correlated_factors(
        FactorGrid {
            d: 3,
            levels: 4,
            n: 2000,
        },
        0.8,
        4,
    )?;
    let (x, mixing) = gen_factor_mixture(&factors.sample, 10, 0.3, 5)?;
    println!(
        "{} observations of width {}, mixing matrix {}x{}",
        x.nrows(),
        x.ncols(),
        mixing.nrows(),
        mixing.ncols()
    );

    println!("\nlambda  reconstruction  IOSS     accepted steps");
    for lambda in [0.0, 10.0, 100.0] {
        let cfg = IossTrainConfig {
            lambda,
            iterations: 100,
            eval_draws: KDraws::Fixed(50_000),
            seed: 9,
            ..IossTrainConfig::default()
        };
        let out = ioss_train(&x, 3, &cfg)?;
        let accepted = out.trace.iter().filter(|s| s.accepted).count();
        println!(
            "{lambda:6}  {:14.4}  {:.4}  {accepted}/{}",
            out.reconstruction_loss,
            out.ioss.value,
            out.trace.len()
        );
    }
    Ok(())
}
