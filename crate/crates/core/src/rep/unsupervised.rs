//! Unsupervised training: every subject becomes a one-vs-all outcome over
//! augmented copies of the data.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::train::{train_outcomes, TrainConfig, TrainOutcome};
use crate::data::DataMatrix;
use crate::error::{Error, Result};

/// A seeded row transform producing one augmented copy.
pub trait Augmenter: Sync {
    fn augment(&self, row: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64>;
}

/// Returns the row unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Augmenter for Identity {
    fn augment(&self, row: &[f64], _: &mut ChaCha8Rng) -> Vec<f64> {
        row.to_vec()
    }
}

/// Adds independent Gaussian noise to every entry.
#[derive(Debug, Clone, Copy)]
pub struct Jitter {
    pub sd: f64,
}

impl Augmenter for Jitter {
    fn augment(&self, row: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = Normal::new(0.0, self.sd).expect("finite sd");
        row.iter().map(|v| v + n.sample(rng)).collect()
    }
}

/// Replaces the listed columns with fresh Gaussian draws, destroying any
/// association they carry with the subject.
#[derive(Debug, Clone)]
pub struct RandomizeColumns {
    pub columns: Vec<usize>,
    pub sd: f64,
}

impl Augmenter for RandomizeColumns {
    fn augment(&self, row: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = Normal::new(0.0, self.sd).expect("finite sd");
        let mut out = row.to_vec();
        for &c in &self.columns {
            out[c] = n.sample(rng);
        }
        out
    }
}

/// Chains two augmenters.
pub struct Compose<A, B>(pub A, pub B);

impl<A: Augmenter, B: Augmenter> Augmenter for Compose<A, B> {
    fn augment(&self, row: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mid = self.0.augment(row, rng);
        self.1.augment(&mid, rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedDataset {
    /// n·U rows; rows `s·U .. (s+1)·U` belong to subject `s`.
    pub x: DMatrix<f64>,
    /// n·U × n indicator matrix.
    pub labels: DMatrix<f64>,
    /// (subject, copy) of every row.
    pub provenance: Vec<(usize, usize)>,
    pub copies: usize,
}

/// Produces `U` augmented copies of each subject and their one-vs-all labels.
pub fn augment_and_label(
    subjects: &DMatrix<f64>,
    augmenter: &dyn Augmenter,
    copies: usize,
    seed: u64,
) -> Result<AugmentedDataset> {
    if copies < 2 {
        return Err(Error::input(format!(
            "need at least 2 copies per subject, got {copies}"
        )));
    }
    let (n, m) = subjects.shape();
    let mut x = DMatrix::zeros(n * copies, m);
    let mut labels = DMatrix::zeros(n * copies, n);
    let mut provenance = Vec::with_capacity(n * copies);
    for s in 0..n {
        let row: Vec<f64> = subjects.row(s).iter().copied().collect();
        let mut rng = crate::seed::rng(crate::seed::derive(seed, s as u64));
        for u in 0..copies {
            let r = s * copies + u;
            let aug = augmenter.augment(&row, &mut rng);
            if aug.len() != m {
                return Err(Error::input("augmenter changed the row width"));
            }
            for (j, v) in aug.into_iter().enumerate() {
                x[(r, j)] = v;
            }
            labels[(r, s)] = 1.0;
            provenance.push((s, u));
        }
    }
    Ok(AugmentedDataset {
        x,
        labels,
        provenance,
        copies,
    })
}

/// Trains on all one-vs-all subject outcomes with a shared penalty.
pub fn train_unsupervised(
    subjects: &DMatrix<f64>,
    augmenter: &dyn Augmenter,
    copies: usize,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if subjects.nrows() < 2 {
        return Err(Error::input(
            "unsupervised training needs at least two subjects to contrast",
        ));
    }
    let aug = augment_and_label(
        subjects,
        augmenter,
        copies,
        crate::seed::derive_named(cfg.seed, "augment"),
    )?;
    let outcomes: Vec<DVector<f64>> = aug.labels.column_iter().map(|c| c.into_owned()).collect();
    train_outcomes(&DataMatrix::new(aug.x)?, outcomes, cfg, None)
}
