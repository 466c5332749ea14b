//! Exact inference in binary structural causal models.
//!
//! Every variable is a Boolean mechanism of its parents XOR an independent
//! Bernoulli noise bit. Distributions are computed by enumerating all
//! configurations of the stochastic noise bits, so results are exact up to
//! floating-point summation.

mod engine;
mod functional;
mod model;
mod poc;

pub use engine::{
    correlation, do_not_equal_dist, interventional_dist, observational_dist, Engine, Evaluation, EventSpec, Pmf,
};
pub use functional::{functional_do, functional_do_backdoor, identity_feature, FunctionalQuery};
pub use model::{BinaryScm, Mechanism, Variable, MAX_NOISE_BITS};
pub use poc::{
    conditional_pns_oracle, dataset_pns, pns_lower_bound, pns_lower_bound_with, true_poc, twin_table, Poc, TwinTable,
};
