//! Seeded generators for the synthetic constructions used in the experiments.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::{index::sample, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, LabeledDataset};
use crate::error::{Error, Result};
use crate::ioss::FactorSample;
use crate::scm::{BinaryScm, Mechanism, Variable};

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Rows drawn from `N(0, cov)`.
fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let l = Cholesky::new(cov.clone())
        .ok_or_else(|| Error::input("covariance is not positive definite"))?
        .unpack();
    let m = cov.nrows();
    let z = DMatrix::from_fn(n, m, |_, _| normal(rng));
    Ok(z * l.transpose())
}

/// The five-variable binary model: `Z1 ~ Bern(0.4)`, `Z2 = Z1 ⊕ Bern(p)`,
/// `A = Z1 ∧ Z2`, `Y1 = Z1 ⊕ Bern(0.2)`, `Y2 = A ⊕ Bern(0.2)`.
pub fn gen_binary_poc(p: f64) -> Result<BinaryScm> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::input(format!("p = {p} is outside [0, 1]")));
    }
    BinaryScm::new(vec![
        Variable::root("Z1", 0.4),
        Variable::child("Z2", &[0], Mechanism::Id, p),
        Variable::child("A", &[0, 1], Mechanism::And, 0.0),
        Variable::child("Y1", &[0], Mechanism::Id, 0.2),
        Variable::child("Y2", &[2], Mechanism::Id, 0.2),
    ])
}

#[derive(Debug, Clone)]
pub struct ToyLinear {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    /// Coefficients of `x1` and `x2` in the outcome.
    pub beta: [f64; 2],
}

/// Five noisy features with strongly correlated latents at training time and
/// weakly correlated latents at test time. The outcome uses `x1` and `x2` only.
pub fn gen_toy_linear(seed: u64, n_train: usize, n_test: usize) -> Result<ToyLinear> {
    if n_train < 2 || n_test < 2 {
        return Err(Error::input("need at least two rows per split"));
    }
    let mut rng = crate::seed::rng(seed);
    let beta = [rng.random_range(0.0..=10.0), rng.random_range(0.0..=10.0)];
    let noise_sd = [0.4, 0.4, 0.3, 0.3, 0.3];
    let mut split = |n: usize, shared: f64| -> Result<LabeledDataset> {
        let cov = DMatrix::from_fn(5, 5, |i, j| shared + if i == j { 0.05 } else { 0.0 });
        let latent = gaussian_rows(&mut rng, n, &cov)?;
        let x = DMatrix::from_fn(n, 5, |i, j| latent[(i, j)] + noise_sd[j] * normal(&mut rng));
        let y = DVector::from_fn(n, |i, _| beta[0] * x[(i, 0)] + beta[1] * x[(i, 1)] + normal(&mut rng));
        LabeledDataset::new(DataMatrix::new(x)?, y)
    };
    let train = split(n_train, 0.95)?;
    let test = split(n_test, 0.05)?;
    Ok(ToyLinear { train, test, beta })
}

/// Loadings of the one-factor pixel covariance `λλᵀ + ψI`.
pub const PIXEL_LOADINGS: [f64; 5] = [1.0, -0.9, 1.1, 0.95, -1.05];
pub const PIXEL_UNIQUE_VARIANCE: f64 = 0.03;
pub const PIXEL_BETA: [f64; 2] = [0.5, 1.0];
pub const PIXEL_NOISE_SD: f64 = 0.2;

/// Five strongly correlated Gaussian "pixels" with `y = 0.5·x1 + 1.0·x2 + ε`.
pub fn gen_pixel_linear(seed: u64, n: usize) -> Result<LabeledDataset> {
    let mut rng = crate::seed::rng(seed);
    let lam = DVector::from_row_slice(&PIXEL_LOADINGS);
    let cov = &lam * lam.transpose() + DMatrix::identity(5, 5) * PIXEL_UNIQUE_VARIANCE;
    let x = gaussian_rows(&mut rng, n, &cov)?;
    let y = DVector::from_fn(n, |i, _| {
        PIXEL_BETA[0] * x[(i, 0)] + PIXEL_BETA[1] * x[(i, 1)] + PIXEL_NOISE_SD * normal(&mut rng)
    });
    LabeledDataset::new(DataMatrix::new(x)?, y)
}

/// Average ranks, ties sharing the mean of their positions.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Mean over column pairs of the Spearman rank correlation.
pub fn mean_pairwise_spearman(z: &DMatrix<f64>) -> f64 {
    let ranks: Vec<Vec<f64>> = z.column_iter().map(|c| average_ranks(c.as_slice())).collect();
    let d = ranks.len();
    let mut total = 0.0;
    let mut pairs = 0;
    for a in 0..d {
        for b in a + 1..d {
            total += pearson(&ranks[a], &ranks[b]);
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total / pairs as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorGrid {
    pub d: usize,
    pub levels: usize,
    pub n: usize,
}

impl FactorGrid {
    fn validate(&self) -> Result<usize> {
        if self.d < 2 || self.levels < 2 {
            return Err(Error::input("need at least two factors with two levels each"));
        }
        let size = (self.levels as f64).powi(self.d as i32);
        if size > self.n as f64 {
            return Err(Error::input(format!(
                "n = {} cannot hold the {size}-point product grid",
                self.n
            )));
        }
        Ok(size as usize)
    }

    fn points(&self) -> Vec<Vec<f64>> {
        let size = self.levels.pow(self.d as u32);
        (0..size)
            .map(|mut k| {
                (0..self.d)
                    .map(|_| {
                        let v = k % self.levels;
                        k /= self.levels;
                        v as f64
                    })
                    .collect()
            })
            .collect()
    }
}

/// Spread of a grid point around its own mean level; zero on the diagonal.
fn dispersion(p: &[f64]) -> f64 {
    let m = p.iter().sum::<f64>() / p.len() as f64;
    p.iter().map(|v| (v - m).powi(2)).sum()
}

/// One full copy of the grid, the `top_block` least dispersed points of a
/// shuffled, replicated pool, and a uniform draw from the remainder of the pool.
pub fn correlated_factors_block(grid: FactorGrid, top_block: usize, seed: u64) -> Result<FactorSample> {
    let size = grid.validate()?;
    let free = grid.n - size;
    if top_block > free {
        return Err(Error::input(format!(
            "top block {top_block} exceeds the {free} free rows"
        )));
    }
    let points = grid.points();
    // Enough copies that diagonal points alone can fill the top block.
    let copies = grid.n.div_ceil(grid.levels) + 1;
    let mut pool: Vec<usize> = (0..copies).flat_map(|_| 0..size).collect();
    pool.shuffle(&mut crate::seed::rng(crate::seed::derive(seed, 0)));
    pool.sort_by(|&a, &b| dispersion(&points[a]).total_cmp(&dispersion(&points[b])));
    let (top, rest) = pool.split_at(top_block);
    let picks = sample(
        &mut crate::seed::rng(crate::seed::derive(seed, 1)),
        rest.len(),
        free - top_block,
    );
    let mut rows: Vec<usize> = (0..size).collect();
    rows.extend_from_slice(top);
    rows.extend(picks.iter().map(|i| rest[i]));
    rows.shuffle(&mut crate::seed::rng(crate::seed::derive(seed, 2)));
    let values = DMatrix::from_fn(grid.n, grid.d, |i, j| points[rows[i]][j]);
    FactorSample::discrete(values)
}

#[derive(Debug, Clone)]
pub struct CorrelatedFactors {
    pub sample: FactorSample,
    pub top_block: usize,
    pub achieved_corr: f64,
}

/// Achieved correlation must lie this close to the target.
pub const CORRELATION_TOLERANCE: f64 = 0.05;

/// Discrete factors on a full product grid whose mean pairwise Spearman
/// correlation is tuned to `target_corr` by bisection on the top-block size.
pub fn gen_correlated_factors(grid: FactorGrid, target_corr: f64, seed: u64) -> Result<CorrelatedFactors> {
    let size = grid.validate()?;
    if !(0.0..1.0).contains(&target_corr) {
        return Err(Error::input("target correlation must lie in [0, 1)"));
    }
    let corr_at = |t: usize| -> Result<(FactorSample, f64)> {
        let s = correlated_factors_block(grid, t, seed)?;
        let c = mean_pairwise_spearman(s.values());
        Ok((s, c))
    };
    let free = grid.n - size;
    let (mut lo, mut hi) = (0usize, free);
    if corr_at(hi)?.1 >= target_corr {
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if corr_at(mid)?.1 >= target_corr {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    } else {
        lo = free;
    }
    let mut best: Option<(usize, FactorSample, f64)> = None;
    for t in [lo, hi] {
        let (s, c) = corr_at(t)?;
        if best
            .as_ref()
            .is_none_or(|b| (c - target_corr).abs() < (b.2 - target_corr).abs())
        {
            best = Some((t, s, c));
        }
    }
    let (top_block, sample, achieved_corr) = best.expect("two candidates evaluated");
    if (achieved_corr - target_corr).abs() > CORRELATION_TOLERANCE {
        return Err(Error::input(format!(
            "correlation {target_corr} is not reachable on this grid (closest {achieved_corr:.3})"
        )));
    }
    Ok(CorrelatedFactors {
        sample,
        top_block,
        achieved_corr,
    })
}

/// `X = Z̃·A + noise` with `Z̃` the column-standardized factors and `A` a
/// Gaussian `d×m` mixing matrix.
pub fn gen_factor_mixture(
    factors: &FactorSample,
    m: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<(DataMatrix, DMatrix<f64>)> {
    let (n, d) = (factors.n(), factors.d());
    if m < d {
        return Err(Error::input("mixture needs at least as many columns as factors"));
    }
    let mut z = factors.values().clone();
    for (j, mut col) in z.column_iter_mut().enumerate() {
        let mean = col.sum() / n as f64;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        if !(sd > 0.0) {
            return Err(Error::DegenerateData(format!("factor column {j} is constant")));
        }
        col.apply(|v| *v = (*v - mean) / sd);
    }
    let mut rng = crate::seed::rng(seed);
    let a = DMatrix::from_fn(d, m, |_, _| normal(&mut rng));
    let mut x = z * &a;
    x.apply(|v| *v += noise_sd * normal(&mut rng));
    Ok((DataMatrix::new(x)?, a))
}

/// A named generator with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case")]
pub enum Generator {
    BinaryPoc {
        p: f64,
    },
    ToyLinear {
        n_train: usize,
        n_test: usize,
    },
    PixelLinear {
        n: usize,
    },
    CorrelatedFactors {
        d: usize,
        levels: usize,
        target_corr: f64,
        n: usize,
    },
    FactorMixture {
        d: usize,
        levels: usize,
        target_corr: f64,
        n: usize,
        m: usize,
        noise_sd: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    #[serde(flatten)]
    pub generator: Generator,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub enum GenOutput {
    Scm(BinaryScm),
    Labeled {
        train: LabeledDataset,
        test: Option<LabeledDataset>,
        meta: serde_json::Value,
    },
    Factors {
        sample: FactorSample,
        meta: serde_json::Value,
    },
    Observations {
        x: DataMatrix,
        factors: FactorSample,
        meta: serde_json::Value,
    },
}

impl GenSpec {
    pub fn run(&self) -> Result<GenOutput> {
        let seed = self.seed;
        Ok(match self.generator {
            Generator::BinaryPoc { p } => GenOutput::Scm(gen_binary_poc(p)?),
            Generator::ToyLinear { n_train, n_test } => {
                let t = gen_toy_linear(seed, n_train, n_test)?;
                GenOutput::Labeled {
                    train: t.train,
                    test: Some(t.test),
                    meta: serde_json::json!({ "beta": t.beta, "causal_columns": [0, 1] }),
                }
            }
            Generator::PixelLinear { n } => GenOutput::Labeled {
                train: gen_pixel_linear(seed, n)?,
                test: None,
                meta: serde_json::json!({
                    "beta": PIXEL_BETA,
                    "loadings": PIXEL_LOADINGS,
                    "unique_variance": PIXEL_UNIQUE_VARIANCE,
                }),
            },
            Generator::CorrelatedFactors {
                d,
                levels,
                target_corr,
                n,
            } => {
                let c = gen_correlated_factors(FactorGrid { d, levels, n }, target_corr, seed)?;
                GenOutput::Factors {
                    sample: c.sample,
                    meta: serde_json::json!({ "top_block": c.top_block, "achieved_corr": c.achieved_corr }),
                }
            }
            Generator::FactorMixture {
                d,
                levels,
                target_corr,
                n,
                m,
                noise_sd,
            } => {
                let c = gen_correlated_factors(FactorGrid { d, levels, n }, target_corr, crate::seed::derive(seed, 0))?;
                let (x, a) = gen_factor_mixture(&c.sample, m, noise_sd, crate::seed::derive(seed, 1))?;
                GenOutput::Observations {
                    x,
                    factors: c.sample,
                    meta: serde_json::json!({
                        "top_block": c.top_block,
                        "achieved_corr": c.achieved_corr,
                        "mixing": a.transpose().row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
                    }),
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ioss::discrete_ioss;
    use crate::scm::observational_dist;

    #[test]
    fn binary_poc_marginals() {
        for k in 0..=10 {
            let p = k as f64 / 10.0;
            let d = observational_dist(&gen_binary_poc(p).unwrap()).unwrap();
            assert!((d.marginal("Z1").unwrap() - 0.4).abs() < 1e-12);
            // Z2 = Z1 xor Bern(p): P(Z2 = 1) = 0.4(1 − p) + 0.6p.
            assert!((d.marginal("Z2").unwrap() - (0.4 * (1.0 - p) + 0.6 * p)).abs() < 1e-12);
            assert!((d.marginal("Y1").unwrap() - (0.4 * 0.8 + 0.6 * 0.2)).abs() < 1e-12);
        }
        assert!(gen_binary_poc(1.5).is_err());
    }

    #[test]
    fn spearman_of_known_vectors() {
        let z = DMatrix::from_row_slice(4, 2, &[1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0, 40.0]);
        assert!((mean_pairwise_spearman(&z) - 1.0).abs() < 1e-15);
        let z = DMatrix::from_row_slice(4, 2, &[1.0, 40.0, 2.0, 30.0, 3.0, 20.0, 4.0, 10.0]);
        assert!((mean_pairwise_spearman(&z) + 1.0).abs() < 1e-15);
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![2.5, 0.0, 2.5, 1.0]);
    }

    #[test]
    fn toy_linear_correlations() {
        let t = gen_toy_linear(3, 5000, 5000).unwrap();
        assert!(t.beta.iter().all(|b| (0.0..=10.0).contains(b)));
        // Observed correlation of x3, x4: 0.95 / (1 + 0.09) in training.
        let c = |x: &DMatrix<f64>, a: usize, b: usize| pearson(x.column(a).as_slice(), x.column(b).as_slice());
        let tr = t.train.x.values();
        assert!((c(tr, 2, 3) - 0.95 / 1.09).abs() < 0.02);
        let te = t.test.x.values();
        assert!((c(te, 2, 3) - 0.05 / 0.19).abs() < 0.05);
    }

    #[test]
    fn pixel_linear_properties() {
        let d = gen_pixel_linear(1, 1000).unwrap();
        let x = d.x.values();
        assert_eq!(x.nrows(), 1000);
        for a in 0..5 {
            for b in a + 1..5 {
                assert!(pearson(x.column(a).as_slice(), x.column(b).as_slice()).abs() > 0.8);
            }
        }
    }

    #[test]
    fn correlated_factors_hit_target_and_keep_product_support() {
        let grid = FactorGrid {
            d: 3,
            levels: 4,
            n: 500,
        };
        let c = gen_correlated_factors(grid, 0.8, 11).unwrap();
        assert!((c.achieved_corr - 0.8).abs() <= CORRELATION_TOLERANCE);
        assert_eq!(discrete_ioss(&c.sample).unwrap(), 0.0);
        let again = gen_correlated_factors(grid, 0.8, 11).unwrap();
        assert_eq!(again.sample, c.sample);
    }

    #[test]
    fn all_random_block_is_nearly_uncorrelated() {
        let s = correlated_factors_block(
            FactorGrid {
                d: 3,
                levels: 4,
                n: 2000,
            },
            0,
            5,
        )
        .unwrap();
        assert!(mean_pairwise_spearman(s.values()).abs() < 0.05);
    }

    #[test]
    fn unreachable_correlation_is_rejected() {
        let grid = FactorGrid { d: 3, levels: 4, n: 70 };
        assert!(matches!(gen_correlated_factors(grid, 0.9, 0), Err(Error::Input(_))));
    }
}
