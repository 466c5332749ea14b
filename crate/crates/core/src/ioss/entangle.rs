//! Entangling maps and the entangled-versus-disentangled discrimination test.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metric::{sample_ioss, FactorSample, KDraws};
use crate::error::{Error, Result};

/// Exponent vectors of every monomial of total degree 1 to 3 in `d` variables.
pub fn cubic_monomials(d: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for a in 0..d {
        out.push(vec![a]);
    }
    for a in 0..d {
        for b in a..d {
            out.push(vec![a, b]);
        }
    }
    for a in 0..d {
        for b in a..d {
            for c in b..d {
                out.push(vec![a, b, c]);
            }
        }
    }
    out
}

fn sd_scaled(z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = z.nrows() as f64;
    let mut out = z.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let mean = col.sum() / n;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        if !(sd > 0.0) {
            return Err(Error::DegenerateData(format!("factor column {j} is constant")));
        }
        col.apply(|v| *v = (*v - mean) / sd);
    }
    Ok(out)
}

/// Coefficients of a random entangler: one row per output, one column per
/// monomial, uniform on [−2.5, 2.5].
pub fn entangler_coefficients(d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = crate::seed::rng(seed);
    let t = cubic_monomials(d).len();
    DMatrix::from_fn(d, t, |_, _| rng.random_range(-2.5..=2.5))
}

/// `Z'_i = Σ_t θ_it · m_t(Z̃) + Z_i` where `Z̃` is the centered, sd-scaled
/// input and `m_t` runs over all monomials of degree 1 to 3.
pub fn entangle_with(z: &FactorSample, theta: &DMatrix<f64>) -> Result<FactorSample> {
    let d = z.d();
    if d < 2 {
        return Err(Error::input("entangling needs at least two factors"));
    }
    let monos = cubic_monomials(d);
    if theta.shape() != (d, monos.len()) {
        return Err(Error::input("coefficient matrix has the wrong shape"));
    }
    let s = sd_scaled(z.values())?;
    let mut out = z.values().clone();
    for r in 0..z.n() {
        for (t, mono) in monos.iter().enumerate() {
            let m: f64 = mono.iter().map(|&a| s[(r, a)]).product();
            for i in 0..d {
                out[(r, i)] += theta[(i, t)] * m;
            }
        }
    }
    FactorSample::continuous(out)
}

/// Random cubic-polynomial entangler with seeded coefficients.
pub fn entangle_factors(z: &FactorSample, seed: u64) -> Result<FactorSample> {
    entangle_with(z, &entangler_coefficients(z.d(), seed))
}

/// The fixed three-factor entangler on (shape, scale, orientation):
///
/// ```text
/// e1 = 6·shape   + 8·(scale/sd)³ + 1·(orient/sd)³ + s·N(0,1)
/// e2 = 12·shape² + 1·(scale/sd)² + 8·(orient/sd)  + s·N(0,1)
/// e3 = 0·shape³  + 4·(scale/sd)  + 4·(orient/sd)² + s·N(0,1)
/// ```
///
/// with `sd` the sample standard deviation of the column and `s` the noise scale.
pub fn entangle_preset(z: &FactorSample, noise_scale: f64, seed: u64) -> Result<FactorSample> {
    if z.d() != 3 {
        return Err(Error::input("the preset entangler takes exactly three factors"));
    }
    let v = z.values();
    let n = z.n();
    let sd = |j: usize| {
        let mean = v.column(j).sum() / n as f64;
        (v.column(j).iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt()
    };
    let (sd_scale, sd_orient) = (sd(1), sd(2));
    if !(sd_scale > 0.0 && sd_orient > 0.0) {
        return Err(Error::DegenerateData("scale or orientation is constant".into()));
    }
    let mut rng = crate::seed::rng(seed);
    let mut out = DMatrix::zeros(n, 3);
    for r in 0..n {
        let shape = v[(r, 0)];
        let sc = v[(r, 1)] / sd_scale;
        let or = v[(r, 2)] / sd_orient;
        let mut noise = || -> f64 {
            let g: f64 = StandardNormal.sample(&mut rng);
            noise_scale * g
        };
        out[(r, 0)] = 6.0 * shape + 8.0 * sc.powi(3) + 1.0 * or.powi(3) + noise();
        out[(r, 1)] = 12.0 * shape.powi(2) + 1.0 * sc.powi(2) + 8.0 * or + noise();
        out[(r, 2)] = 0.0 * shape.powi(3) + 4.0 * sc + 4.0 * or.powi(2) + noise();
    }
    FactorSample::continuous(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistinguishConfig {
    pub trials: usize,
    pub k_draws: KDraws,
    pub alpha_quantile: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub disentangled: f64,
    pub entangled: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistinguishResult {
    pub proportion: f64,
    pub k_draws: usize,
    pub trials: Vec<TrialOutcome>,
}

/// Fraction of trials where the entangled copy scores strictly higher IOSS
/// than the factors it was built from. Ties count as incorrect. The two arms
/// use independent draw streams.
pub fn distinguish_experiment(
    factor_gen: &(dyn Fn(u64) -> Result<FactorSample> + Sync),
    entangler: &(dyn Fn(&FactorSample, u64) -> Result<FactorSample> + Sync),
    cfg: &DistinguishConfig,
) -> Result<DistinguishResult> {
    if cfg.trials == 0 {
        return Err(Error::input("need at least one trial"));
    }
    let outcomes: Vec<Result<(TrialOutcome, usize)>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let s = crate::seed::derive(cfg.seed, t as u64);
            let z = factor_gen(crate::seed::derive(s, 0))?;
            let e = entangler(&z, crate::seed::derive(s, 1))?;
            let (k, _) = cfg.k_draws.resolve(z.n(), z.d());
            let a = sample_ioss(&z, k, cfg.alpha_quantile, crate::seed::derive(s, 2))?.value;
            let b = sample_ioss(&e, k, cfg.alpha_quantile, crate::seed::derive(s, 3))?.value;
            Ok((
                TrialOutcome {
                    disentangled: a,
                    entangled: b,
                    correct: a < b,
                },
                k,
            ))
        })
        .collect();
    let mut trials = Vec::with_capacity(cfg.trials);
    let mut k_draws = 0;
    for o in outcomes {
        let (t, k) = o?;
        k_draws = k;
        trials.push(t);
    }
    let proportion = trials.iter().filter(|t| t.correct).count() as f64 / trials.len() as f64;
    Ok(DistinguishResult {
        proportion,
        k_draws,
        trials,
    })
}
