use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kdtree::KdTree;
use crate::error::{Error, Result};

/// Samples of d factors, with a flag per column marking discrete factors.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSample {
    values: DMatrix<f64>,
    discrete: Vec<bool>,
}

impl FactorSample {
    pub fn new(values: DMatrix<f64>, discrete: Vec<bool>) -> Result<Self> {
        if discrete.len() != values.ncols() {
            return Err(Error::input("one discreteness flag per column is required"));
        }
        if values.nrows() < 2 || values.ncols() < 1 {
            return Err(Error::input("need at least two samples of at least one factor"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("factor values must be finite"));
        }
        Ok(Self { values, discrete })
    }

    pub fn continuous(values: DMatrix<f64>) -> Result<Self> {
        let d = values.ncols();
        Self::new(values, vec![false; d])
    }

    pub fn discrete(values: DMatrix<f64>) -> Result<Self> {
        let d = values.ncols();
        Self::new(values, vec![true; d])
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn discrete_flags(&self) -> &[bool] {
        &self.discrete
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    /// Per-column (min, max).
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.values.column_iter().map(|c| (c.min(), c.max())).collect()
    }
}

/// Rescales every column to [0, 1] by its sample minimum and maximum.
pub fn standardize(z: &FactorSample) -> Result<FactorSample> {
    let mut out = z.values.clone();
    for (j, (lo, hi)) in z.bounds().into_iter().enumerate() {
        if !(hi > lo) {
            return Err(Error::DegenerateData(format!("factor column {j} is constant")));
        }
        let range = hi - lo;
        out.column_mut(j).apply(|v| *v = (*v - lo) / range);
    }
    Ok(FactorSample {
        values: out,
        discrete: z.discrete.clone(),
    })
}

/// Draw-count policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KDraws {
    /// `10^d · n`, capped.
    Auto,
    Fixed(usize),
}

/// Upper limit applied to the automatic draw count.
pub const MAX_AUTO_DRAWS: usize = 1_000_000;

impl KDraws {
    /// Resolves to a count and whether the cap was applied.
    pub fn resolve(self, n: usize, d: usize) -> (usize, bool) {
        match self {
            KDraws::Fixed(k) => (k, false),
            KDraws::Auto => {
                let k = 10f64.powi(d as i32) * n as f64;
                if k > MAX_AUTO_DRAWS as f64 {
                    (MAX_AUTO_DRAWS, true)
                } else {
                    (k as usize, false)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IossEstimate {
    pub value: f64,
    pub n: usize,
    pub d: usize,
    pub k_draws: usize,
    pub alpha_quantile: f64,
    pub seed: u64,
}

/// Draws per independently seeded chunk.
const CHUNK: usize = 4096;

/// Inner statistic per draw: squared distance to the nearest sample, or to
/// the `ceil(α/100·n)`-th nearest when `α > 0`.
fn inner_rank(alpha: f64, n: usize) -> usize {
    if alpha == 0.0 {
        1
    } else {
        ((alpha / 100.0 * n as f64).ceil() as usize).clamp(1, n)
    }
}

/// Nearest-rank percentile of sorted values.
pub(crate) fn percentile_sorted(sorted: &[f64], pct: f64) -> f64 {
    let k = sorted.len();
    let rank = ((pct / 100.0 * k as f64).ceil() as usize).clamp(1, k);
    sorted[rank - 1]
}

/// Monte-Carlo IOSS: the largest (or `(100−α)`-th percentile) over uniform
/// draws in the unit cube of the squared distance to the standardized
/// samples.
pub fn sample_ioss(z: &FactorSample, k_draws: usize, alpha_quantile: f64, seed: u64) -> Result<IossEstimate> {
    if k_draws < 1 {
        return Err(Error::input("need at least one uniform draw"));
    }
    if !(0.0..50.0).contains(&alpha_quantile) {
        return Err(Error::input("alpha quantile must lie in [0, 50)"));
    }
    let zs = standardize(z)?;
    let (n, d) = (zs.n(), zs.d());
    let flat: Vec<f64> = (0..n)
        .flat_map(|i| zs.values.row(i).iter().copied().collect::<Vec<_>>())
        .collect();
    let tree = KdTree::new(&flat, d);
    let k_inner = inner_rank(alpha_quantile, n);
    let chunks = k_draws.div_ceil(CHUNK);
    let per_chunk: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = crate::seed::rng(crate::seed::derive(seed, c as u64));
            let count = CHUNK.min(k_draws - c * CHUNK);
            let mut q = vec![0.0; d];
            let mut vals = Vec::with_capacity(count);
            for _ in 0..count {
                for v in q.iter_mut() {
                    *v = rng.random::<f64>();
                }
                vals.push(if k_inner == 1 {
                    tree.nearest_sq(&q)
                } else {
                    tree.kth_nearest_sq(&q, k_inner)
                });
            }
            if alpha_quantile == 0.0 {
                vec![vals.into_iter().fold(0.0, f64::max)]
            } else {
                vals
            }
        })
        .collect();
    let value = if alpha_quantile == 0.0 {
        per_chunk.iter().flatten().copied().fold(0.0, f64::max)
    } else {
        let mut all: Vec<f64> = per_chunk.into_iter().flatten().collect();
        all.sort_by(f64::total_cmp);
        percentile_sorted(&all, 100.0 - alpha_quantile)
    };
    Ok(IossEstimate {
        value,
        n,
        d,
        k_draws,
        alpha_quantile,
        seed,
    })
}

/// Largest number of product-support points enumerated by [`discrete_ioss`].
pub const MAX_PRODUCT_POINTS: usize = 10_000_000;

/// Exact IOSS of discrete factors: the largest squared distance from a point
/// of the product of the observed marginal supports to the observed joint
/// support, on standardized value grids.
pub fn discrete_ioss(z: &FactorSample) -> Result<f64> {
    let zs = standardize(z)?;
    let d = zs.d();
    let key = |v: f64| v.to_bits();
    let mut marginals: Vec<Vec<f64>> = Vec::with_capacity(d);
    for col in zs.values.column_iter() {
        let set: BTreeSet<u64> = col.iter().map(|&v| key(v)).collect();
        let mut vals: Vec<f64> = set.into_iter().map(f64::from_bits).collect();
        vals.sort_by(f64::total_cmp);
        marginals.push(vals);
    }
    let total = marginals
        .iter()
        .try_fold(1usize, |acc, m| acc.checked_mul(m.len()))
        .filter(|&t| t <= MAX_PRODUCT_POINTS)
        .ok_or_else(|| Error::input("product of marginal supports is too large to enumerate"))?;
    let joint: BTreeSet<Vec<u64>> = zs
        .values
        .row_iter()
        .map(|r| r.iter().map(|&v| key(v)).collect())
        .collect();
    let flat: Vec<f64> = joint.iter().flatten().map(|&b| f64::from_bits(b)).collect();
    let tree = KdTree::new(&flat, d);
    let worst = (0..total)
        .into_par_iter()
        .map(|mut code| {
            let mut p = Vec::with_capacity(d);
            for m in &marginals {
                p.push(m[code % m.len()]);
                code /= m.len();
            }
            tree.nearest_sq(&p)
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}
