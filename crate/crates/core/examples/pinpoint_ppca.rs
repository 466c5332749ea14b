//! Fits a one-factor probabilistic PCA to correlated "pixel" columns and
//! checks that the posterior of the common cause is tight.
//!
//! Run with `cargo run --example pinpoint_ppca`.

use causalrep::pinpoint::{fit_ppca, log_likelihood, pinpointability_check, posterior_means, posterior_variance};
use causalrep::synth::gen_pixel_linear;

fn main() -> causalrep::Result<()> {
    let data = gen_pixel_linear(7, 2000)?;
    let fit = fit_ppca(&data.x, 1)?;
    println!("loadings {:.3?}", fit.loadings.as_slice());
    println!("noise variance {:.4}", fit.noise_variance);
    println!("log-likelihood {:.2}", log_likelihood(&fit, &data.x)?);

    let var = posterior_variance(&fit);
    println!("posterior variance {:.5}", var[0]);
    let report = pinpointability_check(&fit, 0.01);
    println!("pinpointable at 0.01: {}", report.passed);

    let c = posterior_means(&fit, data.x.values())?;
    println!("first five posterior means: {:?}", &c.as_slice()[..5]);
    Ok(())
}
