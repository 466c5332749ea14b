//! CAUSAL-REP: representations chosen to maximize a lower bound on their
//! conditional probability of necessity and sufficiency.
//!
//! Training fits PPCA to recover the common cause, then runs gradient ascent
//! on the representation logits. The outcome regression inside the objective
//! is re-solved in closed form at every evaluation.

mod function;
mod objective;
mod predict;
mod train;
mod unsupervised;

pub use function::{apply, RepClass, RepFunction};
pub use objective::{objective, objective_gradient, rsq_penalty, Objective, ObjectiveParts, PenaltyWeights, R2_CLAMP};
pub use predict::{fit_predictor, predict, Predictor};
pub use train::{train, train_from, TrainConfig, TrainOutcome, TrainingTrace};
pub use unsupervised::{
    augment_and_label, train_unsupervised, AugmentedDataset, Augmenter, Compose, Identity, Jitter, RandomizeColumns,
};

#[cfg(test)]
mod tests;
