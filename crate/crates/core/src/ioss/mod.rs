//! Independence-of-support score: the exact and sampled metric, entangling
//! maps for evaluation, and an IOSS-regularized autoencoder.

pub mod entangle;
pub mod kdtree;
pub mod metric;
pub mod train;

pub use entangle::{
    cubic_monomials, distinguish_experiment, entangle_factors, entangle_preset, entangle_with, entangler_coefficients,
    DistinguishConfig, DistinguishResult, TrialOutcome,
};
pub use kdtree::KdTree;
pub use metric::{discrete_ioss, sample_ioss, standardize, FactorSample, IossEstimate, KDraws, MAX_AUTO_DRAWS};
pub use train::{
    ioss_surrogate, ioss_train, AutoencoderInit, IossOptimizer, IossTrainConfig, IossTrainOutcome, LinearAutoencoder,
    StepRecord,
};
