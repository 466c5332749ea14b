//! Unsupervised variant: every subject is its own outcome, and augmentation
//! replaces the nuisance columns with fresh noise so only the stable columns
//! tell subjects apart.
//!
//! Run with `cargo run --release --example unsupervised_causal_rep`.

use causalrep::rep::{train_unsupervised, Compose, Jitter, RandomizeColumns, RepClass, TrainConfig};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> causalrep::Result<()> {
    let mut rng = causalrep::seed::rng(5);
    let subjects = 40;
    let shared: Vec<f64> = (0..subjects).map(|_| rng.sample(StandardNormal)).collect();
    // Columns 0-2: subject signature. 3-5: nuisance. 6-7: a common factor.
    let x = DMatrix::from_fn(subjects, 8, |i, j| {
        let e: f64 = rng.sample(StandardNormal);
        if j < 6 {
            e
        } else {
            2.0 * shared[i] + 0.1 * e
        }
    });
    let augment = Compose(
        RandomizeColumns {
            columns: vec![3, 4, 5],
            sd: 1.0,
        },
        Jitter { sd: 0.05 },
    );
    let cfg = TrainConfig {
        class: RepClass::Selection,
        rep_dim: 2,
        latent_dim: 1,
        pinpoint_threshold: 0.2,
        iterations: 200,
        restarts: 3,
        seed: 2,
        ..TrainConfig::default()
    };
    let out = train_unsupervised(&x, &augment, 4, &cfg)?;
    println!("selected columns {:?}", out.rep.selected_columns().unwrap_or_default());
    println!("max posterior variance {:.4}", out.pinpoint.max_posterior_variance);
    println!("objective {:.3}", out.objective);
    Ok(())
}
