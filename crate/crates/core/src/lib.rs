pub mod cli;
pub mod data;
pub mod error;
pub mod experiment;
pub mod ioss;
pub mod linalg;
pub mod manifest;
pub mod pinpoint;
pub mod pnsbound;
pub mod rep;
pub mod scm;
pub mod seed;
pub mod serial;
pub mod synth;

pub use error::{Error, Result};
